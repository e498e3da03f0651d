//! Training objectives: per-view 2D L1 losses on depth and color, pixelwise
//! cross-entropy on rendered semantic logits, and the 3D TSDF L1 term.
//! Each operation returns the raw (unnormalized) sum together with the
//! adjoint it routes back to the renderer or field; the per-view
//! normalization by valid-pixel count happens once in [`total_loss`].

use crate::error::SemvoxError;
use crate::grid::VoxelGrid;
use crate::image::{ChannelImage, ColorImage, LabelImage, ScalarImage, IGNORE_LABEL};
use crate::Result;

/// L1 subgradient with the convention sign(0) = 0, so converged pixels stay
/// silent.
#[inline]
fn l1_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sum of |target - rendered| over pixels valid in both images. The adjoint
/// (w.r.t. the rendered image) is sign(rendered - target) on the mask.
pub fn geo_loss_2d(rendered: &ScalarImage, target: &ScalarImage) -> Result<(f64, ScalarImage)> {
    if rendered.width != target.width || rendered.height != target.height {
        return Err(SemvoxError::ShapeMismatch("depth images differ in size".into()));
    }
    let mut loss = 0.0;
    let mut adjoint = ScalarImage::new(rendered.width, rendered.height, 0.0);
    for idx in 0..rendered.data.len() {
        let r = rendered.data[idx];
        let t = target.data[idx];
        if !r.is_finite() || !t.is_finite() || t <= 0.0 {
            continue;
        }
        loss += (t - r).abs();
        adjoint.data[idx] = l1_sign(r - t);
    }
    Ok((loss, adjoint))
}

/// Sum over 3 channels of per-pixel color L1, masked to pixels rendered
/// valid (tracked by `rendered_valid`).
pub fn app_loss(
    rendered: &ColorImage,
    target: &ColorImage,
    rendered_valid: &[bool],
) -> Result<(f64, ColorImage)> {
    if rendered.width != target.width || rendered.height != target.height {
        return Err(SemvoxError::ShapeMismatch("color images differ in size".into()));
    }
    if rendered_valid.len() != rendered.data.len() {
        return Err(SemvoxError::ShapeMismatch("validity mask size mismatch".into()));
    }
    let mut loss = 0.0;
    let mut adjoint = ColorImage::new(rendered.width, rendered.height, [0.0; 3]);
    for idx in 0..rendered.data.len() {
        if !rendered_valid[idx] {
            continue;
        }
        let r = rendered.data[idx];
        let t = target.data[idx];
        for c in 0..3 {
            loss += (t[c] - r[c]).abs();
            adjoint.data[idx][c] = l1_sign(r[c] - t[c]);
        }
    }
    Ok((loss, adjoint))
}

/// Pixelwise cross-entropy between softmaxed rendered logits and reference
/// labels; IGNORE labels and invalid pixels are excluded. The adjoint is
/// `softmax(logits) - one_hot(label)` per masked pixel.
pub fn sem_loss(
    rendered_logits: &ChannelImage,
    reference: &LabelImage,
    rendered_valid: &[bool],
) -> Result<(f64, ChannelImage)> {
    if rendered_logits.width != reference.width || rendered_logits.height != reference.height {
        return Err(SemvoxError::ShapeMismatch("semantic images differ in size".into()));
    }
    if rendered_valid.len() != reference.data.len() {
        return Err(SemvoxError::ShapeMismatch("validity mask size mismatch".into()));
    }
    let n = rendered_logits.channels;
    let mut loss = 0.0;
    let mut adjoint =
        ChannelImage::new(rendered_logits.width, rendered_logits.height, n, 0.0);
    for idx in 0..reference.data.len() {
        let label = reference.data[idx];
        if !rendered_valid[idx] || label == IGNORE_LABEL || label as usize >= n {
            continue;
        }
        let logits = &rendered_logits.data[idx * n..(idx + 1) * n];
        // Stable log-softmax.
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss += log_z - logits[label as usize];
        for c in 0..n {
            let softmax = (logits[c] - max).exp() / sum_exp;
            adjoint.data[idx * n + c] = softmax - if c == label as usize { 1.0 } else { 0.0 };
        }
    }
    Ok((loss, adjoint))
}

/// Mean absolute TSDF difference over voxels known in the target:
/// `(1/n) * sum |g - g_hat|`, with adjoint `sign/n` on the valid set.
/// The prediction must be dense (all voxels carry a value).
pub fn geo_loss_3d(pred_tsdf: &[f64], target: &VoxelGrid) -> Result<(f64, Vec<f64>)> {
    let n_vox = target.spec.num_voxels();
    if pred_tsdf.len() != n_vox {
        return Err(SemvoxError::ShapeMismatch(format!(
            "prediction has {} voxels, target {}",
            pred_tsdf.len(),
            n_vox
        )));
    }
    let mut n_valid = 0usize;
    let mut sum = 0.0;
    let mut signs = vec![0.0f64; n_vox];
    for i in 0..n_vox {
        if !target.is_known_idx(i) {
            continue;
        }
        n_valid += 1;
        let diff = pred_tsdf[i] - target.tsdf_raw()[i];
        sum += diff.abs();
        signs[i] = l1_sign(diff);
    }
    if n_valid == 0 {
        return Err(SemvoxError::NoValidVoxels);
    }
    let inv = 1.0 / n_valid as f64;
    for s in signs.iter_mut() {
        *s *= inv;
    }
    Ok((sum * inv, signs))
}

/// Boolean volume marking voxels with known |tsdf| < eps. The loss-masking
/// band uses eps = 3 cm by default.
pub const SURFACE_MASK_EPS: f64 = 0.03;

pub fn surface_mask_3d(grid: &VoxelGrid, eps: f64) -> Vec<bool> {
    let dims = grid.spec.dims;
    let mut mask = vec![false; grid.spec.num_voxels()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                mask[grid.spec.index(x, y, z)] = grid.surface_voxel(x, y, z, eps);
            }
        }
    }
    mask
}

/// Raw per-view sums plus the view's valid-pixel normalizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewTerms {
    pub geo_2d: f64,
    pub app: f64,
    pub sem: f64,
    /// Pixels where surface geometry was rendered for this view.
    pub n_valid: usize,
}

/// Aggregated objective: per-view 2D terms normalized by that view's valid
/// pixel count, plus unnormalized 3D terms summed over chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub geo_2d: f64,
    pub app: f64,
    pub sem: f64,
    pub geo_3d: f64,
    pub n_valid_pixels: Vec<usize>,
    pub n_valid_voxels: Vec<usize>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zero() -> Self {
        Self {
            geo_2d: 0.0,
            app: 0.0,
            sem: 0.0,
            geo_3d: 0.0,
            n_valid_pixels: Vec::new(),
            n_valid_voxels: Vec::new(),
            total: 0.0,
        }
    }
}

/// Combines per-view 2D sums and per-chunk 3D means. Views with no valid
/// pixels contribute nothing. `chunk_terms` carries `(geo_3d, n_valid)`.
pub fn total_loss(view_terms: &[ViewTerms], chunk_terms: &[(f64, usize)]) -> LossBreakdown {
    let mut out = LossBreakdown::zero();
    for v in view_terms {
        out.n_valid_pixels.push(v.n_valid);
        if v.n_valid == 0 {
            continue;
        }
        let inv = 1.0 / v.n_valid as f64;
        out.geo_2d += v.geo_2d * inv;
        out.app += v.app * inv;
        out.sem += v.sem * inv;
    }
    for &(g3, n) in chunk_terms {
        out.geo_3d += g3;
        out.n_valid_voxels.push(n);
    }
    out.total = out.geo_2d + out.app + out.sem + out.geo_3d;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn geo_2d_identical_is_zero() {
        let img = ScalarImage::new(8, 8, 1.5);
        let (loss, adj) = geo_loss_2d(&img, &img).unwrap();
        assert_eq!(loss, 0.0);
        assert!(adj.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn geo_2d_constant_offset() {
        let mut target = ScalarImage::invalid(5, 2);
        let mut rendered = ScalarImage::invalid(5, 2);
        for i in 0..10 {
            target.data[i] = 1.0;
            rendered.data[i] = 1.1;
        }
        let (loss, adj) = geo_loss_2d(&rendered, &target).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
        assert!(adj.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn geo_2d_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut rendered = ScalarImage::invalid(16, 16);
        let mut target = ScalarImage::invalid(16, 16);
        let mut expect = 0.0;
        for i in 0..256 {
            let r_valid = rng.random_bool(0.8);
            let t_valid = rng.random_bool(0.8);
            if r_valid {
                rendered.data[i] = rng.random_range(0.1..3.0);
            }
            if t_valid {
                target.data[i] = rng.random_range(0.1..3.0);
            }
            if r_valid && t_valid {
                expect += (target.data[i] - rendered.data[i]).abs();
            }
        }
        let (loss, _) = geo_loss_2d(&rendered, &target).unwrap();
        assert!((loss - expect).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_gives_zero() {
        let rendered = ScalarImage::invalid(4, 4);
        let target = ScalarImage::new(4, 4, 1.0);
        let (loss, _) = geo_loss_2d(&rendered, &target).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn app_loss_channel_sum() {
        let target = ColorImage::new(2, 1, [0.5, 0.5, 0.5]);
        let mut rendered = target.clone();
        rendered.data[0] = [0.6, 0.7, 0.8];
        let valid = vec![true, false];
        let (loss, adj) = app_loss(&rendered, &target, &valid).unwrap();
        assert!((loss - 0.6).abs() < 1e-12);
        assert_eq!(adj.data[0], [1.0, 1.0, 1.0]);
        assert_eq!(adj.data[1], [0.0; 3]);
    }

    #[test]
    fn app_loss_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut rendered = ColorImage::new(8, 8, [0.0; 3]);
        let mut target = ColorImage::new(8, 8, [0.0; 3]);
        let mut valid = vec![false; 64];
        let mut expect = 0.0;
        for i in 0..64 {
            rendered.data[i] = [rng.random(), rng.random(), rng.random()];
            target.data[i] = [rng.random(), rng.random(), rng.random()];
            valid[i] = rng.random_bool(0.7);
            if valid[i] {
                for c in 0..3 {
                    expect += (target.data[i][c] - rendered.data[i][c]).abs();
                }
            }
        }
        let (loss, _) = app_loss(&rendered, &target, &valid).unwrap();
        assert!((loss - expect).abs() < 1e-9);
    }

    #[test]
    fn confident_correct_ce_is_tiny() {
        // CE(margin m, n classes) = ln(1 + (n-1) e^-m): 2.06e-8 at m=20,
        // n=11, so the margin-20 bound is 1e-6 and a higher margin is
        // needed for 1e-8.
        let n = 11;
        let mut logits = ChannelImage::new(1, 1, n, 0.0);
        logits.pixel_mut(0, 0)[4] = 20.0;
        let mut labels = LabelImage::ignored(1, 1);
        labels.set(0, 0, 4);
        let (loss, _) = sem_loss(&logits, &labels, &[true]).unwrap();
        assert!(loss < 1e-6, "CE {loss}");
        logits.pixel_mut(0, 0)[4] = 25.0;
        let (loss, _) = sem_loss(&logits, &labels, &[true]).unwrap();
        assert!(loss < 1e-8, "CE {loss}");
    }

    #[test]
    fn uniform_logits_ce_is_ln_n() {
        let n = 11;
        let logits = ChannelImage::new(1, 1, n, 0.3);
        let mut labels = LabelImage::ignored(1, 1);
        labels.set(0, 0, 7);
        let (loss, _) = sem_loss(&logits, &labels, &[true]).unwrap();
        assert!((loss - (n as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_adjoint_matches_finite_differences() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut logits = ChannelImage::new(8, 8, n, 0.0);
        let mut labels = LabelImage::ignored(8, 8);
        let mut valid = vec![false; 64];
        for i in 0..64 {
            for c in 0..n {
                logits.data[i * n + c] = rng.random_range(-2.0..2.0);
            }
            valid[i] = rng.random_bool(0.8);
            labels.data[i] = rng.random_range(0..n as u16);
        }
        let (_, adj) = sem_loss(&logits, &labels, &valid).unwrap();
        let h = 1e-6;
        for &(px, c) in &[(3usize, 0usize), (10, 2), (40, 4), (63, 1)] {
            let mut lp = logits.clone();
            lp.data[px * n + c] += h;
            let (fp, _) = sem_loss(&lp, &labels, &valid).unwrap();
            let mut lm = logits.clone();
            lm.data[px * n + c] -= h;
            let (fm, _) = sem_loss(&lm, &labels, &valid).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = adj.data[px * n + c];
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(
                (numeric - analytic).abs() / denom < 1e-6,
                "pixel {px} ch {c}: {analytic} vs {numeric}"
            );
        }
    }

    fn known_grid(dims: [usize; 3], f: impl Fn(usize) -> Option<f64>) -> VoxelGrid {
        let spec = GridSpec::with_default_truncation([0.0; 3], 0.02, dims).unwrap();
        let mut g = VoxelGrid::new(spec, 0);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let i = g.spec.index(x, y, z);
                    if let Some(v) = f(i) {
                        g.set_voxel(x, y, z, v, 1.0, [0.0; 3]);
                    }
                }
            }
        }
        g
    }

    #[test]
    fn geo_3d_identity_is_zero() {
        let target = known_grid([4, 4, 4], |i| Some(0.01 * i as f64 - 0.3));
        let (loss, _) = geo_loss_3d(target.tsdf_raw(), &target).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn geo_3d_single_voxel() {
        let target = known_grid([2, 2, 2], |i| if i == 3 { Some(0.02) } else { None });
        let mut pred = vec![0.0; 8];
        pred[3] = 0.06;
        let (loss, adj) = geo_loss_3d(&pred, &target).unwrap();
        assert!((loss - 0.04).abs() < 1e-15);
        assert_eq!(adj[3], 1.0);
    }

    #[test]
    fn geo_3d_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut vals = vec![None; 4 * 4 * 4];
        for v in vals.iter_mut() {
            if rng.random_bool(0.7) {
                *v = Some(rng.random_range(-0.06..0.06));
            }
        }
        let target = known_grid([4, 4, 4], |i| vals[i]);
        let pred: Vec<f64> = (0..64).map(|_| rng.random_range(-0.06..0.06)).collect();
        let mut expect = 0.0;
        let mut n = 0;
        for i in 0..64 {
            if let Some(t) = vals[i] {
                expect += (pred[i] - t).abs();
                n += 1;
            }
        }
        let (loss, _) = geo_loss_3d(&pred, &target).unwrap();
        assert!((loss - expect / n as f64).abs() < 1e-9);
    }

    #[test]
    fn geo_3d_no_valid_voxels_is_error() {
        let target = known_grid([2, 2, 2], |_| None);
        match geo_loss_3d(&[0.0; 8], &target) {
            Err(SemvoxError::NoValidVoxels) => {}
            other => panic!("expected NoValidVoxels, got {other:?}"),
        }
    }

    #[test]
    fn surface_mask_band() {
        let g = known_grid([3, 1, 1], |i| match i {
            0 => Some(0.02),
            1 => Some(0.05),
            _ => None,
        });
        let mask = surface_mask_3d(&g, SURFACE_MASK_EPS);
        assert_eq!(mask, vec![true, false, false]);
    }

    #[test]
    fn total_loss_hand_example() {
        let views = [ViewTerms { geo_2d: 1.0, app: 2.0, sem: 3.0, n_valid: 10 }];
        let out = total_loss(&views, &[(0.5, 100)]);
        assert!((out.total - 1.1).abs() < 1e-12);
    }

    #[test]
    fn total_loss_all_zero() {
        let out = total_loss(&[], &[]);
        assert_eq!(out.total, 0.0);
    }

    #[test]
    fn normalization_invariant_to_pixel_count() {
        // Doubling the number of identical per-pixel losses leaves the
        // per-view normalized term unchanged.
        let a = total_loss(&[ViewTerms { geo_2d: 5.0, app: 0.0, sem: 0.0, n_valid: 10 }], &[]);
        let b = total_loss(&[ViewTerms { geo_2d: 10.0, app: 0.0, sem: 0.0, n_valid: 20 }], &[]);
        assert!((a.total - b.total).abs() < 1e-12);
    }

    #[test]
    fn loss_ignores_values_outside_mask() {
        let mut rendered = ScalarImage::invalid(4, 1);
        let mut target = ScalarImage::invalid(4, 1);
        rendered.data[0] = 1.0;
        target.data[0] = 1.25;
        let (base, _) = geo_loss_2d(&rendered, &target).unwrap();
        // Perturb a pixel outside the mask (target invalid there).
        rendered.data[2] = 99.0;
        let (same, _) = geo_loss_2d(&rendered, &target).unwrap();
        assert_eq!(base.to_bits(), same.to_bits());
    }
}
