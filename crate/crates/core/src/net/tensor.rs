//! Dense 4D tensors (channels x spatial volume) and the 3D convolution
//! kernels used by the network, with hand-derived backward passes.
//!
//! Layout matches the voxel grid: `data[((c*nz + z)*ny + y)*nx + x]`,
//! x-fastest. All convolutions are 3x3x3 with padding 1; stride is 1 or 2.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub ch: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(ch: usize, nx: usize, ny: usize, nz: usize) -> Self {
        Self { ch, nx, ny, nz, data: vec![0.0; ch * nx * ny * nz] }
    }

    pub fn from_data(ch: usize, nx: usize, ny: usize, nz: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), ch * nx * ny * nz);
        Self { ch, nx, ny, nz, data }
    }

    #[inline]
    pub fn spatial(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn idx(&self, c: usize, x: usize, y: usize, z: usize) -> usize {
        ((c * self.nz + z) * self.ny + y) * self.nx + x
    }

    /// One channel as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.voxels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.voxels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        self.ch == other.ch && self.spatial() == other.spatial()
    }
}

/// `out[oc] = b[oc] + sum_ic w[oc][ic] * in[ic]` with 3^3 taps, padding 1.
/// Weights are laid out `[oc][ic][kz][ky][kx]`.
pub fn conv3(input: &Tensor4, weight: &[f64], bias: &[f64], out_ch: usize, stride: usize) -> Tensor4 {
    let in_ch = input.ch;
    assert_eq!(weight.len(), out_ch * in_ch * 27);
    assert_eq!(bias.len(), out_ch);
    let (nx, ny, nz) = (input.nx, input.ny, input.nz);
    let (ox, oy, oz) = out_dims(nx, ny, nz, stride);
    let mut out = Tensor4::zeros(out_ch, ox, oy, oz);

    for oc in 0..out_ch {
        for zo in 0..oz {
            for yo in 0..oy {
                for xo in 0..ox {
                    let mut acc = bias[oc];
                    for ic in 0..in_ch {
                        let wbase = (oc * in_ch + ic) * 27;
                        for kz in 0..3usize {
                            let zi = (zo * stride + kz) as isize - 1;
                            if zi < 0 || zi >= nz as isize {
                                continue;
                            }
                            for ky in 0..3usize {
                                let yi = (yo * stride + ky) as isize - 1;
                                if yi < 0 || yi >= ny as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let xi = (xo * stride + kx) as isize - 1;
                                    if xi < 0 || xi >= nx as isize {
                                        continue;
                                    }
                                    acc += weight[wbase + (kz * 3 + ky) * 3 + kx]
                                        * input.data
                                            [input.idx(ic, xi as usize, yi as usize, zi as usize)];
                                }
                            }
                        }
                    }
                    let oi = out.idx(oc, xo, yo, zo);
                    out.data[oi] = acc;
                }
            }
        }
    }
    out
}

pub fn out_dims(nx: usize, ny: usize, nz: usize, stride: usize) -> (usize, usize, usize) {
    if stride == 1 {
        (nx, ny, nz)
    } else {
        // padding 1, kernel 3: floor((n - 1)/stride) + 1
        ((nx - 1) / stride + 1, (ny - 1) / stride + 1, (nz - 1) / stride + 1)
    }
}

/// Backward of [`conv3`]: gradients w.r.t. input, weights, and bias.
pub fn conv3_backward(
    input: &Tensor4,
    weight: &[f64],
    out_ch: usize,
    stride: usize,
    grad_out: &Tensor4,
) -> (Tensor4, Vec<f64>, Vec<f64>) {
    let in_ch = input.ch;
    let (nx, ny, nz) = (input.nx, input.ny, input.nz);
    let mut grad_in = Tensor4::zeros(in_ch, nx, ny, nz);
    let mut grad_w = vec![0.0; weight.len()];
    let mut grad_b = vec![0.0; out_ch];

    for oc in 0..out_ch {
        for zo in 0..grad_out.nz {
            for yo in 0..grad_out.ny {
                for xo in 0..grad_out.nx {
                    let go = grad_out.data[grad_out.idx(oc, xo, yo, zo)];
                    if go == 0.0 {
                        continue;
                    }
                    grad_b[oc] += go;
                    for ic in 0..in_ch {
                        let wbase = (oc * in_ch + ic) * 27;
                        for kz in 0..3usize {
                            let zi = (zo * stride + kz) as isize - 1;
                            if zi < 0 || zi >= nz as isize {
                                continue;
                            }
                            for ky in 0..3usize {
                                let yi = (yo * stride + ky) as isize - 1;
                                if yi < 0 || yi >= ny as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let xi = (xo * stride + kx) as isize - 1;
                                    if xi < 0 || xi >= nx as isize {
                                        continue;
                                    }
                                    let ii = input.idx(ic, xi as usize, yi as usize, zi as usize);
                                    let wi = wbase + (kz * 3 + ky) * 3 + kx;
                                    grad_in.data[ii] += weight[wi] * go;
                                    grad_w[wi] += input.data[ii] * go;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (grad_in, grad_w, grad_b)
}

/// Nearest-neighbor 2x upsampling of every spatial axis.
pub fn upsample2(input: &Tensor4) -> Tensor4 {
    let mut out = Tensor4::zeros(input.ch, input.nx * 2, input.ny * 2, input.nz * 2);
    for c in 0..input.ch {
        for z in 0..out.nz {
            for y in 0..out.ny {
                for x in 0..out.nx {
                    let oi = out.idx(c, x, y, z);
                    out.data[oi] = input.data[input.idx(c, x / 2, y / 2, z / 2)];
                }
            }
        }
    }
    out
}

pub fn upsample2_backward(input_shape: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let mut grad_in = Tensor4::zeros(input_shape.ch, input_shape.nx, input_shape.ny, input_shape.nz);
    for c in 0..grad_out.ch {
        for z in 0..grad_out.nz {
            for y in 0..grad_out.ny {
                for x in 0..grad_out.nx {
                    let gi = grad_in.idx(c, x / 2, y / 2, z / 2);
                    grad_in.data[gi] += grad_out.data[grad_out.idx(c, x, y, z)];
                }
            }
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, ch: usize, nx: usize, ny: usize, nz: usize) -> Tensor4 {
        let data = (0..ch * nx * ny * nz).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor4::from_data(ch, nx, ny, nz, data)
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = rand_tensor(&mut rng, 1, 5, 4, 3);
        // Kernel that picks the center tap.
        let mut w = vec![0.0; 27];
        w[(1 * 3 + 1) * 3 + 1] = 1.0;
        let out = conv3(&input, &w, &[0.0], 1, 1);
        assert_eq!(out.data, input.data);
    }

    #[test]
    fn strided_conv_halves_dims() {
        let input = Tensor4::zeros(2, 8, 6, 4);
        let w = vec![0.0; 1 * 2 * 27];
        let out = conv3(&input, &w, &[0.5], 1, 2);
        assert_eq!((out.nx, out.ny, out.nz), (4, 3, 2));
        assert!(out.data.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for stride in [1usize, 2] {
            let input = rand_tensor(&mut rng, 2, 4, 4, 4);
            let out_ch = 3;
            let w: Vec<f64> = (0..out_ch * 2 * 27).map(|_| rng.random_range(-0.5..0.5)).collect();
            let b: Vec<f64> = (0..out_ch).map(|_| rng.random_range(-0.5..0.5)).collect();
            let out = conv3(&input, &w, &b, out_ch, stride);
            // Random fixed adjoint; objective = <adjoint, out>.
            let adj = rand_tensor(&mut rng, out.ch, out.nx, out.ny, out.nz);
            let (gin, gw, gb) = conv3_backward(&input, &w, out_ch, stride, &adj);
            let objective = |input: &Tensor4, w: &[f64], b: &[f64]| -> f64 {
                conv3(input, w, b, out_ch, stride)
                    .data
                    .iter()
                    .zip(&adj.data)
                    .map(|(o, a)| o * a)
                    .sum()
            };
            let h = 1e-6;
            for _ in 0..10 {
                let i = rng.random_range(0..input.data.len());
                let mut ip = input.clone();
                ip.data[i] += h;
                let mut im = input.clone();
                im.data[i] -= h;
                let num = (objective(&ip, &w, &b) - objective(&im, &w, &b)) / (2.0 * h);
                assert!((num - gin.data[i]).abs() < 1e-7, "d_in[{i}] {num} vs {}", gin.data[i]);
            }
            for _ in 0..10 {
                let i = rng.random_range(0..w.len());
                let mut wp = w.clone();
                wp[i] += h;
                let mut wm = w.clone();
                wm[i] -= h;
                let num = (objective(&input, &wp, &b) - objective(&input, &wm, &b)) / (2.0 * h);
                assert!((num - gw[i]).abs() < 1e-7, "d_w[{i}] {num} vs {}", gw[i]);
            }
            for i in 0..out_ch {
                let mut bp = b.clone();
                bp[i] += h;
                let mut bm = b.clone();
                bm[i] -= h;
                let num = (objective(&input, &w, &bp) - objective(&input, &w, &bm)) / (2.0 * h);
                assert!((num - gb[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn upsample_round_trip_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = rand_tensor(&mut rng, 3, 2, 3, 2);
        let up = upsample2(&input);
        assert_eq!((up.nx, up.ny, up.nz), (4, 6, 4));
        // Backward of a ones adjoint counts the 8 children.
        let ones = Tensor4::from_data(3, 4, 6, 4, vec![1.0; 3 * 4 * 6 * 4]);
        let back = upsample2_backward(&input, &ones);
        assert!(back.data.iter().all(|&v| v == 8.0));
    }
}
