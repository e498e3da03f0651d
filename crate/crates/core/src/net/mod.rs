//! Toy-scale dense 3D U-network: two encoder branches (geometry, color), a
//! convolutional fusion bank at the bottleneck, and three decoder branches
//! (TSDF, color, semantics) with residual blocks and per-level skip
//! connections from both encoders. Forward and backward passes are written
//! by hand on top of a small activation tape.
//!
//! The depth-only variant drops the color encoder and decoder entirely;
//! geometry and semantics are then predicted from TSDF input alone.

mod tape;
mod tensor;

pub use tape::{Tape, LEAKY_SLOPE};
pub use tensor::Tensor4;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SemvoxError;
use crate::grid::Chunk;
use crate::Result;

/// Bias offset added to the TSDF head so an untrained network predicts
/// mostly-empty space instead of a zero-crossing soup.
const TSDF_HEAD_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetConfig {
    pub chunk_dims: [usize; 3],
    pub base_channels: usize,
    /// Resolution-halving levels in each encoder/decoder.
    pub levels: usize,
    /// Bottleneck code channels.
    pub code_channels: usize,
    pub n_sem: usize,
    pub depth_only: bool,
    pub seed: u64,
}

impl NetConfig {
    pub fn new(chunk_dims: [usize; 3], n_sem: usize) -> Self {
        Self {
            chunk_dims,
            base_channels: 8,
            levels: 3,
            code_channels: 32,
            n_sem,
            depth_only: false,
            seed: 0,
        }
    }

    #[cfg(test)]
    pub(crate) fn default_for_test() -> Self {
        Self::new([8, 8, 8], 2)
    }

    pub fn validate(&self) -> Result<()> {
        let div = 1usize << self.levels;
        for &d in &self.chunk_dims {
            if d == 0 || d % div != 0 {
                return Err(SemvoxError::InvalidConfig(format!(
                    "chunk dims {:?} must be divisible by 2^levels = {div}",
                    self.chunk_dims
                )));
            }
        }
        if self.base_channels < 1 || self.code_channels < 1 || self.n_sem < 1 {
            return Err(SemvoxError::InvalidConfig("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Channels at encoder/decoder level l; the value at `levels` is the
    /// bottleneck code width.
    fn ch(&self, l: usize) -> usize {
        if l == self.levels {
            self.code_channels
        } else {
            self.base_channels << l
        }
    }

    fn encoders(&self) -> Vec<&'static str> {
        if self.depth_only {
            vec!["geo"]
        } else {
            vec!["geo", "col"]
        }
    }

    fn decoders(&self) -> Vec<(&'static str, usize)> {
        if self.depth_only {
            vec![("tsdf", 1), ("sem", self.n_sem)]
        } else {
            vec![("tsdf", 1), ("col", 3), ("sem", self.n_sem)]
        }
    }

    fn encoder_in_ch(&self, enc: &str) -> usize {
        match enc {
            "geo" => 2,  // normalized tsdf + known mask
            "col" => 4,  // rgb + known mask
            other => unreachable!("unknown encoder {other}"),
        }
    }

    /// Ordered (name, shape) declaration of every parameter tensor; the
    /// closed-form shape formula behind `init_params`.
    pub fn layer_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
        let mut conv = |name: String, in_ch: usize, out_ch: usize| {
            specs.push((format!("{name}.w"), vec![out_ch, in_ch, 3, 3, 3]));
            specs.push((format!("{name}.b"), vec![out_ch]));
        };
        let n_enc = self.encoders().len();
        for enc in self.encoders() {
            conv(format!("{enc}.stem"), self.encoder_in_ch(enc), self.ch(0));
            for l in 0..self.levels {
                conv(format!("{enc}.res{l}.conv1"), self.ch(l), self.ch(l));
                conv(format!("{enc}.res{l}.conv2"), self.ch(l), self.ch(l));
                conv(format!("{enc}.down{l}"), self.ch(l), self.ch(l + 1));
            }
        }
        let cv = self.code_channels;
        conv("fuse.conv".into(), n_enc * cv, cv);
        conv("fuse.res.conv1".into(), cv, cv);
        conv("fuse.res.conv2".into(), cv, cv);
        for (dec, out_ch) in self.decoders() {
            for l in (0..self.levels).rev() {
                conv(format!("{dec}.up{l}"), self.ch(l + 1), self.ch(l));
                conv(format!("{dec}.mix{l}"), (1 + n_enc) * self.ch(l), self.ch(l));
                conv(format!("{dec}.res{l}.conv1"), self.ch(l), self.ch(l));
                conv(format!("{dec}.res{l}.conv2"), self.ch(l), self.ch(l));
            }
            conv(format!("{dec}.head"), self.ch(0), out_ch);
        }
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamTensor {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { name: name.to_string(), shape, data }
    }
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    cfg: NetConfig,
    entries: Vec<ParamTensor>,
}

impl Params {
    pub fn from_entries(cfg: NetConfig, entries: Vec<ParamTensor>) -> Self {
        Self { cfg, entries }
    }

    pub fn cfg(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn entries(&self) -> &[ParamTensor] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.entries
    }

    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }
}

/// Fan-in-scaled uniform initialization, deterministic per seed. Weight and
/// bias of a conv share the bound 1/sqrt(in_ch * 27); the TSDF head bias is
/// shifted by [`TSDF_HEAD_BIAS`].
pub fn init_params(cfg: &NetConfig, seed: u64) -> Result<Params> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = cfg.layer_specs();
    let mut entries = Vec::with_capacity(specs.len());
    let mut bound = 1.0;
    for (name, shape) in specs {
        if shape.len() > 1 {
            let fan_in: usize = shape[1..].iter().product();
            bound = 1.0 / (fan_in as f64).sqrt();
        }
        let n: usize = shape.iter().product();
        let mut data: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        if name == "tsdf.head.b" {
            for v in data.iter_mut() {
                *v += TSDF_HEAD_BIAS;
            }
        }
        entries.push(ParamTensor { name, shape, data });
    }
    Ok(Params { cfg: cfg.clone(), entries })
}

/// Forward activations plus handles to the network inputs and heads.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub tape: Tape,
    pub geo_in: usize,
    pub col_in: Option<usize>,
    pub out_tsdf: usize,
    pub out_color: Option<usize>,
    pub out_sem: usize,
    pub truncation: f64,
}

impl ForwardPass {
    pub fn tsdf(&self) -> &Tensor4 {
        self.tape.value(self.out_tsdf)
    }
    pub fn color(&self) -> Option<&Tensor4> {
        self.out_color.map(|id| self.tape.value(id))
    }
    pub fn sem(&self) -> &Tensor4 {
        self.tape.value(self.out_sem)
    }
}

/// Network input channels built from a chunk: normalized TSDF with unknown
/// voxels fed as +1 (observed-empty guess) plus a known mask, and RGB.
pub fn chunk_to_tensors(chunk: &Chunk) -> (Tensor4, Tensor4) {
    let g = &chunk.grid;
    let [nx, ny, nz] = g.spec.dims;
    let trunc = g.spec.truncation;
    let mut geo = Tensor4::zeros(2, nx, ny, nz);
    let mut col = Tensor4::zeros(4, nx, ny, nz);
    let n = nx * ny * nz;
    for i in 0..n {
        let known = g.is_known_idx(i);
        geo.data[i] = if known { g.tsdf_raw()[i] / trunc } else { 1.0 };
        geo.data[n + i] = known as usize as f64;
        let c = g.color_raw()[i];
        col.data[i] = c[0];
        col.data[n + i] = c[1];
        col.data[2 * n + i] = c[2];
        col.data[3 * n + i] = known as usize as f64;
    }
    (geo, col)
}

fn res_block(tape: &mut Tape, params: &Params, name: &str, x: usize) -> usize {
    let w1 = params.index_of(&format!("{name}.conv1.w")).unwrap();
    let b1 = params.index_of(&format!("{name}.conv1.b")).unwrap();
    let w2 = params.index_of(&format!("{name}.conv2.w")).unwrap();
    let b2 = params.index_of(&format!("{name}.conv2.b")).unwrap();
    let t1 = tape.conv(params, w1, b1, 1, x);
    let t2 = tape.leaky_relu(t1);
    let t3 = tape.conv(params, w2, b2, 1, t2);
    tape.add(x, t3)
}

fn conv_act(tape: &mut Tape, params: &Params, name: &str, stride: usize, x: usize) -> usize {
    let w = params.index_of(&format!("{name}.w")).unwrap();
    let b = params.index_of(&format!("{name}.b")).unwrap();
    let y = tape.conv(params, w, b, stride, x);
    tape.leaky_relu(y)
}

/// Runs the network on one chunk. In depth-only mode color input is ignored
/// and no color volume is produced.
pub fn forward(params: &Params, chunk: &Chunk) -> Result<ForwardPass> {
    let cfg = &params.cfg;
    cfg.validate()?;
    if chunk.grid.spec.dims != cfg.chunk_dims {
        return Err(SemvoxError::ShapeMismatch(format!(
            "chunk dims {:?} but network expects {:?}",
            chunk.grid.spec.dims, cfg.chunk_dims
        )));
    }
    let (geo_t, col_t) = chunk_to_tensors(chunk);
    let mut tape = Tape::new(params.entries.len());

    let geo_in = tape.input(geo_t);
    let col_in = if cfg.depth_only { None } else { Some(tape.input(col_t)) };

    // Encoders: residual block per level (skip source), then downsample.
    let mut skips: Vec<Vec<usize>> = Vec::new(); // [encoder][level]
    let mut codes: Vec<usize> = Vec::new();
    for enc in cfg.encoders() {
        let input = if enc == "geo" { geo_in } else { col_in.unwrap() };
        let mut h = conv_act(&mut tape, params, &format!("{enc}.stem"), 1, input);
        let mut enc_skips = Vec::with_capacity(cfg.levels);
        for l in 0..cfg.levels {
            h = res_block(&mut tape, params, &format!("{enc}.res{l}"), h);
            enc_skips.push(h);
            h = conv_act(&mut tape, params, &format!("{enc}.down{l}"), 2, h);
        }
        skips.push(enc_skips);
        codes.push(h);
    }

    // Bottleneck fusion of the independently computed feature volumes.
    let fused_in = if codes.len() > 1 { tape.concat(&codes) } else { codes[0] };
    let mut fused = conv_act(&mut tape, params, "fuse.conv", 1, fused_in);
    fused = res_block(&mut tape, params, "fuse.res", fused);

    // Decoders: upsample, concat the per-level encoder skips, mix, refine.
    let mut heads: Vec<(String, usize)> = Vec::new();
    for (dec, _out_ch) in cfg.decoders() {
        let mut h = fused;
        for l in (0..cfg.levels).rev() {
            h = tape.upsample2(h);
            h = conv_act(&mut tape, params, &format!("{dec}.up{l}"), 1, h);
            let mut cat = vec![h];
            for enc_skips in &skips {
                cat.push(enc_skips[l]);
            }
            h = tape.concat(&cat);
            h = conv_act(&mut tape, params, &format!("{dec}.mix{l}"), 1, h);
            h = res_block(&mut tape, params, &format!("{dec}.res{l}"), h);
        }
        let w = params.index_of(&format!("{dec}.head.w")).unwrap();
        let b = params.index_of(&format!("{dec}.head.b")).unwrap();
        let raw = tape.conv(params, w, b, 1, h);
        heads.push((dec.to_string(), raw));
    }

    let truncation = chunk.grid.spec.truncation;
    let mut out_tsdf = None;
    let mut out_color = None;
    let mut out_sem = None;
    for (dec, raw) in heads {
        match dec.as_str() {
            "tsdf" => out_tsdf = Some(tape.scaled_tanh(raw, truncation)),
            "col" => out_color = Some(tape.sigmoid(raw)),
            "sem" => out_sem = Some(raw),
            _ => unreachable!(),
        }
    }

    Ok(ForwardPass {
        tape,
        geo_in,
        col_in,
        out_tsdf: out_tsdf.unwrap(),
        out_color,
        out_sem: out_sem.unwrap(),
        truncation,
    })
}

/// Adjoints on the network outputs.
pub struct OutputAdjoints {
    pub tsdf: Tensor4,
    pub color: Option<Tensor4>,
    pub sem: Tensor4,
}

/// Parameter gradients (aligned with `Params::entries`) and adjoints on the
/// network input channels.
pub struct NetGrads {
    pub params: Vec<Vec<f64>>,
    pub input_geo: Tensor4,
    pub input_color: Option<Tensor4>,
}

/// Exact reverse-mode gradients of the forward composition.
pub fn backward(params: &Params, pass: &ForwardPass, adj: &OutputAdjoints) -> Result<NetGrads> {
    if pass.tape.n_param_entries != params.entries.len() {
        return Err(SemvoxError::TapeMismatch(format!(
            "tape built with {} parameter entries, got {}",
            pass.tape.n_param_entries,
            params.entries.len()
        )));
    }
    if !adj.tsdf.same_shape(pass.tsdf()) || !adj.sem.same_shape(pass.sem()) {
        return Err(SemvoxError::TapeMismatch("output adjoint shape mismatch".into()));
    }
    let mut seeds = vec![(pass.out_tsdf, adj.tsdf.clone()), (pass.out_sem, adj.sem.clone())];
    match (pass.out_color, &adj.color) {
        (Some(id), Some(a)) => {
            if !a.same_shape(pass.tape.value(id)) {
                return Err(SemvoxError::TapeMismatch("color adjoint shape mismatch".into()));
            }
            seeds.push((id, a.clone()));
        }
        (None, None) => {}
        (Some(id), None) => {
            let v = pass.tape.value(id);
            seeds.push((id, Tensor4::zeros(v.ch, v.nx, v.ny, v.nz)));
        }
        (None, Some(_)) => {
            return Err(SemvoxError::TapeMismatch(
                "color adjoint given but the network is depth-only".into(),
            ));
        }
    }
    let (mut adjoints, grads) = pass.tape.backprop(params, seeds);
    let zero_like = |t: &Tensor4| Tensor4::zeros(t.ch, t.nx, t.ny, t.nz);
    let input_geo = adjoints[pass.geo_in]
        .take()
        .unwrap_or_else(|| zero_like(pass.tape.value(pass.geo_in)));
    let input_color = pass.col_in.map(|id| {
        adjoints[id]
            .take()
            .unwrap_or_else(|| zero_like(pass.tape.value(id)))
    });
    Ok(NetGrads { params: grads, input_geo, input_color })
}

/// SGD with an exponential learning-rate schedule:
/// `p -= lr0 * decay_rate^(step / decay_steps) * g`.
pub fn sgd_step(
    params: &mut Params,
    grads: &[Vec<f64>],
    lr0: f64,
    decay_rate: f64,
    decay_steps: usize,
    step_index: usize,
) -> Result<()> {
    if grads.len() != params.entries.len() {
        return Err(SemvoxError::ShapeMismatch(format!(
            "{} gradient tensors for {} parameter tensors",
            grads.len(),
            params.entries.len()
        )));
    }
    let lr = effective_lr(lr0, decay_rate, decay_steps, step_index);
    for (e, g) in params.entries.iter_mut().zip(grads) {
        if e.data.len() != g.len() {
            return Err(SemvoxError::ShapeMismatch(format!("gradient size mismatch for {}", e.name)));
        }
        for (p, &gv) in e.data.iter_mut().zip(g) {
            *p -= lr * gv;
        }
    }
    Ok(())
}

pub fn effective_lr(lr0: f64, decay_rate: f64, decay_steps: usize, step_index: usize) -> f64 {
    lr0 * decay_rate.powf(step_index as f64 / decay_steps.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{copy_chunk, GridSpec, VoxelGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_cfg() -> NetConfig {
        NetConfig {
            chunk_dims: [8, 8, 16],
            base_channels: 4,
            levels: 2,
            code_channels: 8,
            n_sem: 3,
            depth_only: false,
            seed: 0,
        }
    }

    fn test_chunk(seed: u64) -> Chunk {
        let spec = GridSpec::with_default_truncation([0.0; 3], 0.02, [8, 8, 16]).unwrap();
        let mut g = VoxelGrid::new(spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in 0..16 {
            for y in 0..8 {
                for x in 0..8 {
                    if rng.random_bool(0.85) {
                        g.set_voxel(
                            x,
                            y,
                            z,
                            rng.random_range(-0.06..0.06),
                            1.0,
                            [rng.random(), rng.random(), rng.random()],
                        );
                    }
                }
            }
        }
        copy_chunk(&g, [0, 0, 0], [8, 8, 16])
    }

    #[test]
    fn init_deterministic_per_seed() {
        let cfg = test_cfg();
        let a = init_params(&cfg, 42).unwrap();
        let b = init_params(&cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = test_cfg();
        let a = init_params(&cfg, 1).unwrap();
        let b = init_params(&cfg, 2).unwrap();
        assert!(a.entries().iter().zip(b.entries()).any(|(x, y)| x.data != y.data));
    }

    #[test]
    fn shapes_match_the_spec_formula() {
        // Independent shape calculator: recompute expected conv shapes from
        // the channel plan and compare entry by entry.
        let cfg = test_cfg();
        let params = init_params(&cfg, 0).unwrap();
        let ch = |l: usize| if l == cfg.levels { cfg.code_channels } else { cfg.base_channels << l };
        let mut expected: Vec<(String, Vec<usize>)> = Vec::new();
        let mut conv = |name: String, i: usize, o: usize, ex: &mut Vec<(String, Vec<usize>)>| {
            ex.push((format!("{name}.w"), vec![o, i, 3, 3, 3]));
            ex.push((format!("{name}.b"), vec![o]));
        };
        for (enc, in_ch) in [("geo", 2usize), ("col", 4)] {
            conv(format!("{enc}.stem"), in_ch, ch(0), &mut expected);
            for l in 0..cfg.levels {
                conv(format!("{enc}.res{l}.conv1"), ch(l), ch(l), &mut expected);
                conv(format!("{enc}.res{l}.conv2"), ch(l), ch(l), &mut expected);
                conv(format!("{enc}.down{l}"), ch(l), ch(l + 1), &mut expected);
            }
        }
        conv("fuse.conv".into(), 2 * cfg.code_channels, cfg.code_channels, &mut expected);
        conv("fuse.res.conv1".into(), cfg.code_channels, cfg.code_channels, &mut expected);
        conv("fuse.res.conv2".into(), cfg.code_channels, cfg.code_channels, &mut expected);
        for (dec, out) in [("tsdf", 1usize), ("col", 3), ("sem", cfg.n_sem)] {
            for l in (0..cfg.levels).rev() {
                conv(format!("{dec}.up{l}"), ch(l + 1), ch(l), &mut expected);
                conv(format!("{dec}.mix{l}"), 3 * ch(l), ch(l), &mut expected);
                conv(format!("{dec}.res{l}.conv1"), ch(l), ch(l), &mut expected);
                conv(format!("{dec}.res{l}.conv2"), ch(l), ch(l), &mut expected);
            }
            conv(format!("{dec}.head"), ch(0), out, &mut expected);
        }
        assert_eq!(params.entries().len(), expected.len());
        for (e, (name, shape)) in params.entries().iter().zip(&expected) {
            assert_eq!(&e.name, name);
            assert_eq!(&e.shape, shape);
        }
    }

    #[test]
    fn forward_output_shapes_and_ranges() {
        let cfg = test_cfg();
        let params = init_params(&cfg, 3).unwrap();
        let chunk = test_chunk(1);
        let pass = forward(&params, &chunk).unwrap();
        let trunc = chunk.grid.spec.truncation;
        assert_eq!(pass.tsdf().ch, 1);
        assert_eq!(pass.tsdf().spatial(), [8, 8, 16]);
        assert_eq!(pass.color().unwrap().ch, 3);
        assert_eq!(pass.sem().ch, 3);
        assert_eq!(pass.sem().spatial(), [8, 8, 16]);
        for &v in &pass.tsdf().data {
            assert!(v.abs() <= trunc);
        }
        for &v in &pass.color().unwrap().data {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn forward_deterministic() {
        let cfg = test_cfg();
        let params = init_params(&cfg, 9).unwrap();
        let chunk = test_chunk(2);
        let a = forward(&params, &chunk).unwrap();
        let b = forward(&params, &chunk).unwrap();
        assert_eq!(a.tsdf().data, b.tsdf().data);
        assert_eq!(a.sem().data, b.sem().data);
    }

    #[test]
    fn depth_only_emits_no_color_and_no_color_params() {
        let cfg = NetConfig { depth_only: true, ..test_cfg() };
        let params = init_params(&cfg, 5).unwrap();
        assert!(params.entries().iter().all(|e| !e.name.starts_with("col.")));
        let chunk = test_chunk(3);
        let pass = forward(&params, &chunk).unwrap();
        assert!(pass.color().is_none());

        let adj = OutputAdjoints {
            tsdf: Tensor4::from_data(1, 8, 8, 16, vec![0.1; 8 * 8 * 16]),
            color: None,
            sem: Tensor4::zeros(3, 8, 8, 16),
        };
        let grads = backward(&params, &pass, &adj).unwrap();
        // Structural check: gradient vector aligns with the (color-free)
        // parameter list.
        assert_eq!(grads.params.len(), params.entries().len());
        assert!(grads.input_color.is_none());
    }

    #[test]
    fn wrong_chunk_shape_rejected() {
        let cfg = test_cfg();
        let params = init_params(&cfg, 3).unwrap();
        let spec = GridSpec::with_default_truncation([0.0; 3], 0.02, [8, 8, 8]).unwrap();
        let g = VoxelGrid::new(spec, 3);
        let chunk = copy_chunk(&g, [0, 0, 0], [8, 8, 8]);
        match forward(&params, &chunk) {
            Err(SemvoxError::ShapeMismatch(_)) => {}
            other => panic!("expected ShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_adjoints_zero_gradients() {
        let cfg = test_cfg();
        let params = init_params(&cfg, 7).unwrap();
        let chunk = test_chunk(4);
        let pass = forward(&params, &chunk).unwrap();
        let adj = OutputAdjoints {
            tsdf: Tensor4::zeros(1, 8, 8, 16),
            color: Some(Tensor4::zeros(3, 8, 8, 16)),
            sem: Tensor4::zeros(3, 8, 8, 16),
        };
        let grads = backward(&params, &pass, &adj).unwrap();
        assert!(grads.params.iter().all(|g| g.iter().all(|&v| v == 0.0)));
        assert!(grads.input_geo.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let cfg = test_cfg();
        let params = init_params(&cfg, 11).unwrap();
        let chunk = test_chunk(5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);

        // Objective: <A, outputs> with fixed random adjoints.
        let n = 8 * 8 * 16;
        let a_tsdf = Tensor4::from_data(1, 8, 8, 16, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let a_col = Tensor4::from_data(3, 8, 8, 16, (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let a_sem = Tensor4::from_data(3, 8, 8, 16, (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let objective = |p: &Params| -> f64 {
            let pass = forward(p, &chunk).unwrap();
            let mut obj = 0.0;
            obj += pass.tsdf().data.iter().zip(&a_tsdf.data).map(|(o, a)| o * a).sum::<f64>();
            obj += pass.color().unwrap().data.iter().zip(&a_col.data).map(|(o, a)| o * a).sum::<f64>();
            obj += pass.sem().data.iter().zip(&a_sem.data).map(|(o, a)| o * a).sum::<f64>();
            obj
        };

        let pass = forward(&params, &chunk).unwrap();
        let adj = OutputAdjoints { tsdf: a_tsdf.clone(), color: Some(a_col.clone()), sem: a_sem.clone() };
        let grads = backward(&params, &pass, &adj).unwrap();

        // Relative error with a scale-aware floor: coordinates whose
        // gradient is many orders below the typical magnitude are dominated
        // by finite-difference cancellation noise.
        let rms = {
            let (sum, n) = grads
                .params
                .iter()
                .flatten()
                .fold((0.0f64, 0usize), |(s, n), &g| (s + g * g, n + 1));
            (sum / n as f64).sqrt()
        };
        let floor = 1e-3 * rms.max(1e-12);

        let h = 1e-6;
        let mut checked = 0;
        while checked < 50 {
            let e = rng.random_range(0..params.entries().len());
            let i = rng.random_range(0..params.entries()[e].data.len());
            let mut pp = params.clone();
            pp.entries_mut()[e].data[i] += h;
            let fp = objective(&pp);
            let mut pm = params.clone();
            pm.entries_mut()[e].data[i] -= h;
            let fm = objective(&pm);
            let numeric = (fp - fm) / (2.0 * h);
            let analytic = grads.params[e][i];
            let denom = numeric.abs().max(analytic.abs()).max(floor);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "{}[{i}]: analytic {analytic} vs numeric {numeric}",
                params.entries()[e].name
            );
            checked += 1;
        }
    }

    #[test]
    fn sgd_zero_lr_keeps_params() {
        let cfg = test_cfg();
        let mut params = init_params(&cfg, 1).unwrap();
        let before = params.clone();
        let grads: Vec<Vec<f64>> =
            params.entries().iter().map(|e| vec![1.0; e.data.len()]).collect();
        sgd_step(&mut params, &grads, 0.0, 0.5, 100, 7).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn sgd_initial_step_exact() {
        let cfg = test_cfg();
        let mut params = init_params(&cfg, 1).unwrap();
        let before = params.clone();
        let grads: Vec<Vec<f64>> =
            params.entries().iter().map(|e| vec![2.0; e.data.len()]).collect();
        sgd_step(&mut params, &grads, 0.01, 0.5, 100, 0).unwrap();
        for (a, b) in params.entries().iter().zip(before.entries()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - (y - 0.01 * 2.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sgd_decay_schedule() {
        assert!((effective_lr(0.01, 0.5, 1, 1) - 0.005).abs() < 1e-15);
        assert!((effective_lr(0.01, 0.5, 2, 1) - 0.01 * 0.5f64.powf(0.5)).abs() < 1e-15);
    }
}
