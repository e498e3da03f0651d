//! Minimal reverse-mode tape over [`Tensor4`] ops. The forward pass records
//! every intermediate activation; `backprop` walks the node list in reverse
//! and accumulates adjoints for inputs and parameters.

use super::tensor::{conv3, conv3_backward, upsample2, upsample2_backward, Tensor4};
use super::Params;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone)]
pub enum Op {
    /// External input (network input tensor).
    Value,
    Conv { w: usize, b: usize, stride: usize, out_ch: usize },
    LeakyRelu,
    Upsample2,
    /// Channel concatenation of the input nodes.
    Concat,
    Add,
    ScaledTanh { scale: f64 },
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub op: Op,
    pub inputs: Vec<usize>,
    pub value: Tensor4,
}

#[derive(Debug, Clone)]
pub struct Tape {
    pub nodes: Vec<Node>,
    pub n_param_entries: usize,
}

impl Tape {
    pub fn new(n_param_entries: usize) -> Self {
        Self { nodes: Vec::new(), n_param_entries }
    }

    pub fn value(&self, id: usize) -> &Tensor4 {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor4) -> usize {
        self.nodes.push(Node { op, inputs, value });
        self.nodes.len() - 1
    }

    pub fn input(&mut self, t: Tensor4) -> usize {
        self.push(Op::Value, vec![], t)
    }

    pub fn conv(&mut self, params: &Params, w: usize, b: usize, stride: usize, x: usize) -> usize {
        let weight = &params.entries()[w];
        let bias = &params.entries()[b];
        let out_ch = weight.shape[0];
        let value = conv3(&self.nodes[x].value, &weight.data, &bias.data, out_ch, stride);
        self.push(Op::Conv { w, b, stride, out_ch }, vec![x], value)
    }

    pub fn leaky_relu(&mut self, x: usize) -> usize {
        let mut value = self.nodes[x].value.clone();
        for v in value.data.iter_mut() {
            if *v < 0.0 {
                *v *= LEAKY_SLOPE;
            }
        }
        self.push(Op::LeakyRelu, vec![x], value)
    }

    pub fn upsample2(&mut self, x: usize) -> usize {
        let value = upsample2(&self.nodes[x].value);
        self.push(Op::Upsample2, vec![x], value)
    }

    pub fn concat(&mut self, xs: &[usize]) -> usize {
        let first = &self.nodes[xs[0]].value;
        let (nx, ny, nz) = (first.nx, first.ny, first.nz);
        let ch: usize = xs.iter().map(|&i| self.nodes[i].value.ch).sum();
        let mut value = Tensor4::zeros(ch, nx, ny, nz);
        let mut c0 = 0;
        for &i in xs {
            let t = &self.nodes[i].value;
            assert_eq!(t.spatial(), [nx, ny, nz]);
            for c in 0..t.ch {
                value.channel_mut(c0 + c).copy_from_slice(t.channel(c));
            }
            c0 += t.ch;
        }
        self.push(Op::Concat, xs.to_vec(), value)
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        let ta = &self.nodes[a].value;
        let tb = &self.nodes[b].value;
        assert!(ta.same_shape(tb));
        let mut value = ta.clone();
        for (v, w) in value.data.iter_mut().zip(&tb.data) {
            *v += w;
        }
        self.push(Op::Add, vec![a, b], value)
    }

    pub fn scaled_tanh(&mut self, x: usize, scale: f64) -> usize {
        let mut value = self.nodes[x].value.clone();
        for v in value.data.iter_mut() {
            *v = scale * v.tanh();
        }
        self.push(Op::ScaledTanh { scale }, vec![x], value)
    }

    pub fn sigmoid(&mut self, x: usize) -> usize {
        let mut value = self.nodes[x].value.clone();
        for v in value.data.iter_mut() {
            *v = 1.0 / (1.0 + (-*v).exp());
        }
        self.push(Op::Sigmoid, vec![x], value)
    }

    /// Reverse pass. `seeds` maps node id -> adjoint. Returns per-node
    /// adjoints (None where nothing flowed) and per-parameter gradients.
    pub fn backprop(
        &self,
        params: &Params,
        seeds: Vec<(usize, Tensor4)>,
    ) -> (Vec<Option<Tensor4>>, Vec<Vec<f64>>) {
        let mut adj: Vec<Option<Tensor4>> = vec![None; self.nodes.len()];
        let mut grads: Vec<Vec<f64>> = params
            .entries()
            .iter()
            .map(|e| vec![0.0; e.data.len()])
            .collect();
        for (id, seed) in seeds {
            assert!(seed.same_shape(&self.nodes[id].value), "seed shape mismatch at node {id}");
            match &mut adj[id] {
                Some(a) => {
                    for (v, s) in a.data.iter_mut().zip(&seed.data) {
                        *v += s;
                    }
                }
                slot => *slot = Some(seed),
            }
        }

        for id in (0..self.nodes.len()).rev() {
            let Some(grad_out) = adj[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            match &node.op {
                Op::Value => {
                    // Keep input adjoints retrievable by the caller.
                    adj[id] = Some(grad_out);
                    continue;
                }
                Op::Conv { w, b, stride, out_ch } => {
                    let x = node.inputs[0];
                    let (gin, gw, gb) = conv3_backward(
                        &self.nodes[x].value,
                        &params.entries()[*w].data,
                        *out_ch,
                        *stride,
                        &grad_out,
                    );
                    accumulate(&mut adj[x], gin);
                    for (g, v) in grads[*w].iter_mut().zip(&gw) {
                        *g += v;
                    }
                    for (g, v) in grads[*b].iter_mut().zip(&gb) {
                        *g += v;
                    }
                }
                Op::LeakyRelu => {
                    let x = node.inputs[0];
                    let mut gin = grad_out;
                    for (g, &v) in gin.data.iter_mut().zip(&self.nodes[x].value.data) {
                        if v < 0.0 {
                            *g *= LEAKY_SLOPE;
                        }
                    }
                    accumulate(&mut adj[x], gin);
                }
                Op::Upsample2 => {
                    let x = node.inputs[0];
                    let gin = upsample2_backward(&self.nodes[x].value, &grad_out);
                    accumulate(&mut adj[x], gin);
                }
                Op::Concat => {
                    let mut c0 = 0;
                    for &x in &node.inputs {
                        let t = &self.nodes[x].value;
                        let mut gin = Tensor4::zeros(t.ch, t.nx, t.ny, t.nz);
                        for c in 0..t.ch {
                            gin.channel_mut(c).copy_from_slice(grad_out.channel(c0 + c));
                        }
                        c0 += t.ch;
                        accumulate(&mut adj[x], gin);
                    }
                }
                Op::Add => {
                    accumulate(&mut adj[node.inputs[0]], grad_out.clone());
                    accumulate(&mut adj[node.inputs[1]], grad_out);
                }
                Op::ScaledTanh { scale } => {
                    let x = node.inputs[0];
                    let mut gin = grad_out;
                    for (g, &y) in gin.data.iter_mut().zip(&node.value.data) {
                        let th = y / scale;
                        *g *= scale * (1.0 - th * th);
                    }
                    accumulate(&mut adj[x], gin);
                }
                Op::Sigmoid => {
                    let x = node.inputs[0];
                    let mut gin = grad_out;
                    for (g, &y) in gin.data.iter_mut().zip(&node.value.data) {
                        *g *= y * (1.0 - y);
                    }
                    accumulate(&mut adj[x], gin);
                }
            }
        }
        (adj, grads)
    }
}

fn accumulate(slot: &mut Option<Tensor4>, delta: Tensor4) {
    match slot {
        Some(a) => {
            for (v, d) in a.data.iter_mut().zip(&delta.data) {
                *v += d;
            }
        }
        none => *none = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{NetConfig, ParamTensor};

    fn tiny_params(entries: Vec<ParamTensor>) -> Params {
        Params::from_entries(NetConfig::default_for_test(), entries)
    }

    #[test]
    fn residual_block_with_zero_final_conv_is_identity() {
        // y = x + conv2(lrelu(conv1(x))) collapses to x when conv2 is zero.
        let c = 3;
        let mut e = Vec::new();
        let mut w1 = vec![0.0; c * c * 27];
        for (i, v) in w1.iter_mut().enumerate() {
            *v = ((i % 11) as f64 - 5.0) * 0.07;
        }
        e.push(ParamTensor::new("conv1.w", vec![c, c, 3, 3, 3], w1));
        e.push(ParamTensor::new("conv1.b", vec![c], vec![0.1; c]));
        e.push(ParamTensor::new("conv2.w", vec![c, c, 3, 3, 3], vec![0.0; c * c * 27]));
        e.push(ParamTensor::new("conv2.b", vec![c], vec![0.0; c]));
        let params = tiny_params(e);

        let x = Tensor4::from_data(c, 3, 2, 2, (0..36).map(|i| i as f64 * 0.05 - 0.9).collect());
        let mut tape = Tape::new(4);
        let x_id = tape.input(x.clone());
        let t1 = tape.conv(&params, 0, 1, 1, x_id);
        let t2 = tape.leaky_relu(t1);
        let t3 = tape.conv(&params, 2, 3, 1, t2);
        let y = tape.add(x_id, t3);
        assert_eq!(tape.value(y).data, x.data);
    }

    #[test]
    fn zero_seeds_zero_grads() {
        let c = 2;
        let e = vec![
            ParamTensor::new("w", vec![c, c, 3, 3, 3], vec![0.3; c * c * 27]),
            ParamTensor::new("b", vec![c], vec![0.0; c]),
        ];
        let params = tiny_params(e);
        let mut tape = Tape::new(2);
        let x = tape.input(Tensor4::from_data(c, 2, 2, 2, vec![0.5; 16]));
        let y = tape.conv(&params, 0, 1, 1, x);
        let (adj, grads) = tape.backprop(&params, vec![(y, Tensor4::zeros(c, 2, 2, 2))]);
        assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        assert!(adj[x].as_ref().unwrap().data.iter().all(|&v| v == 0.0));
    }
}
