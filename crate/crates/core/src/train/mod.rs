//! Training loops: 2D-ground-truth supervision, pseudo-label supervision
//! from a generic predictor, the virtual-view self-supervision loop, and a
//! network-free direct-field mode that optimizes the voxel fields
//! themselves through the renderer (isolating renderer/loss correctness
//! from network capacity). Also chunked inference with overlap-average
//! stitching.

mod predictor;

pub use predictor::{FileBackedPredictor, MockPredictor, Predictor};

use nalgebra::Vector3;

use crate::camera::{generate_virtual_views, select_supervising_views, Camera, PerturbSpec};
use crate::error::SemvoxError;
use crate::fusion::{cube_mask, fuse, subset_view_indices, MaskSchedule};
use crate::grid::{copy_chunk, extract_chunks, Chunk, GridSpec, VoxelGrid};
use crate::image::{ColorImage, LabelImage, ScalarImage};
use crate::io::Dataset;
use crate::losses::{app_loss, geo_loss_2d, geo_loss_3d, sem_loss, total_loss, LossBreakdown, ViewTerms};
use crate::net::{self, NetConfig, OutputAdjoints, Params, Tensor4};
use crate::render::{backward as render_backward, render, GridGrad, PixelAdjoints, RenderConfig};
use crate::synth::render_oracle_frames;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Ground-truth 2D labels (and depth/color) from the captures.
    Gt2d,
    /// Predictor labels on the captured views.
    Pseudo,
    /// Predictor labels on captured views plus rendered virtual views.
    PseudoVirtual,
    /// No network: optimize the chunk's voxel fields directly (gt2d
    /// supervision).
    DirectField,
}

impl std::str::FromStr for TrainMode {
    type Err = SemvoxError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt2d" => Ok(TrainMode::Gt2d),
            "pseudo" => Ok(TrainMode::Pseudo),
            "pseudo+virtual" => Ok(TrainMode::PseudoVirtual),
            "direct_field" => Ok(TrainMode::DirectField),
            other => Err(SemvoxError::InvalidConfig(format!("unknown mode {other}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Corruption {
    /// Refuse from a random subset of the captured views.
    SubsetViews { fraction: f64 },
    /// Cube-mask the complete fusion.
    Cubes(MaskSchedule),
    /// Use the complete fusion as-is.
    None,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub n_virtual_views: usize,
    pub steps: usize,
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_steps: usize,
    pub rng_seed: u64,
    pub depth_only: bool,
    pub corruption: Corruption,
    pub chunk_dims: [usize; 3],
    pub chunk_stride: [usize; 3],
    /// Supervising real views per chunk.
    pub k_views: usize,
    pub render_size: (usize, usize),
    pub perturb: PerturbSpec,
    /// Network shape (ignored in direct-field mode).
    pub base_channels: usize,
    pub levels: usize,
    pub code_channels: usize,
    /// Include the 3D TSDF term (on by default).
    pub geo3d: bool,
}

impl TrainConfig {
    pub fn new(mode: TrainMode, chunk_dims: [usize; 3]) -> Self {
        Self {
            mode,
            n_virtual_views: 5,
            steps: 100,
            lr0: 0.01,
            decay_rate: 1.0,
            decay_steps: 1000,
            rng_seed: 0,
            depth_only: false,
            corruption: Corruption::None,
            chunk_dims,
            chunk_stride: chunk_dims,
            k_views: 5,
            render_size: (80, 64),
            perturb: PerturbSpec::default(),
            base_channels: 8,
            levels: 3,
            code_channels: 32,
            geo3d: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.mode, TrainMode::PseudoVirtual) && self.depth_only {
            return Err(SemvoxError::InvalidConfig(
                "virtual-view pseudo labels need rendered color; depth-only disables it".into(),
            ));
        }
        Ok(())
    }

    pub fn net_config(&self, n_sem: usize) -> NetConfig {
        NetConfig {
            chunk_dims: self.chunk_dims,
            base_channels: self.base_channels,
            levels: self.levels,
            code_channels: self.code_channels,
            n_sem,
            depth_only: self.depth_only,
            seed: self.rng_seed,
        }
    }
}

/// One training unit: corrupted input chunk, aligned complete target chunk,
/// and the capture indices that supervise it.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub input: Chunk,
    pub target: Chunk,
    pub view_ids: Vec<usize>,
}

#[derive(Debug)]
pub struct BuildOutput {
    pub samples: Vec<TrainingSample>,
    pub complete: VoxelGrid,
    pub corrupted: VoxelGrid,
}

/// Fuses the dataset, applies the configured corruption, cuts aligned
/// chunk pairs, and ranks supervising views per chunk.
pub fn build_samples(dataset: &Dataset, cfg: &TrainConfig) -> Result<BuildOutput> {
    if dataset.frames.is_empty() {
        return Err(SemvoxError::EmptyScene("dataset has no frames".into()));
    }
    let spec = &dataset.manifest.grid;
    let n_sem = dataset.manifest.n_sem;
    let complete = fuse(&dataset.frames, spec, n_sem)?;
    let corrupted = match &cfg.corruption {
        Corruption::None => complete.clone(),
        Corruption::SubsetViews { fraction } => {
            let idx = subset_view_indices(dataset.frames.len(), *fraction, cfg.rng_seed)?;
            let subset: Vec<_> = idx.iter().map(|&i| dataset.frames[i].clone()).collect();
            fuse(&subset, spec, n_sem)?
        }
        Corruption::Cubes(schedule) => cube_mask(&complete, schedule)?.0,
    };

    let input_chunks = extract_chunks(&corrupted, cfg.chunk_dims, cfg.chunk_stride)?;
    let target_chunks = extract_chunks(&complete, cfg.chunk_dims, cfg.chunk_stride)?;
    let mut samples = Vec::with_capacity(input_chunks.len());
    for (input, target) in input_chunks.into_iter().zip(target_chunks) {
        debug_assert_eq!(input.parent_offset, target.parent_offset);
        let view_ids = select_supervising_views(&dataset.frames, &input, cfg.k_views);
        samples.push(TrainingSample { input, target, view_ids });
    }
    if samples.is_empty() {
        return Err(SemvoxError::EmptyScene("no chunks extracted".into()));
    }
    Ok(BuildOutput { samples, complete, corrupted })
}

/// Voxel fields optimized directly in direct-field mode. All voxels carry
/// values (weight 1): unknowns initialize to +truncation (empty guess),
/// mid-gray, and the input's fused label logits.
#[derive(Debug, Clone)]
pub struct FieldChunk {
    pub spec: GridSpec,
    pub n_sem: usize,
    pub tsdf: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub logits: Vec<f64>,
}

impl FieldChunk {
    pub fn init_from(chunk: &Chunk) -> Self {
        let g = &chunk.grid;
        let n = g.spec.num_voxels();
        let n_sem = g.n_sem();
        let mut tsdf = vec![g.spec.truncation; n];
        let mut color = vec![[0.5; 3]; n];
        let mut logits = vec![0.0; n * n_sem];
        for i in 0..n {
            if g.is_known_idx(i) {
                tsdf[i] = g.tsdf_raw()[i];
                color[i] = g.color_raw()[i];
                logits[i * n_sem..(i + 1) * n_sem]
                    .copy_from_slice(&g.logits_raw()[i * n_sem..(i + 1) * n_sem]);
            }
        }
        Self { spec: g.spec.clone(), n_sem, tsdf, color, logits }
    }

    pub fn to_grid(&self) -> VoxelGrid {
        let mut g = VoxelGrid::new(self.spec.clone(), self.n_sem);
        let n = self.spec.num_voxels();
        for i in 0..n {
            g.tsdf_raw_mut()[i] = self.tsdf[i].clamp(-self.spec.truncation, self.spec.truncation);
            g.weight_raw_mut()[i] = 1.0;
            g.color_raw_mut()[i] = self.color[i].map(|c| c.clamp(0.0, 1.0));
        }
        g.logits_raw_mut().copy_from_slice(&self.logits);
        g
    }

    fn apply(&mut self, grad: &GridGrad, lr: f64) {
        for (p, g) in self.tsdf.iter_mut().zip(&grad.tsdf) {
            *p -= lr * g;
        }
        for (p, g) in self.color.iter_mut().zip(&grad.color) {
            for c in 0..3 {
                p[c] -= lr * g[c];
            }
        }
        for (p, g) in self.logits.iter_mut().zip(&grad.sem) {
            *p -= lr * g;
        }
    }
}

pub enum Model {
    Network(Params),
    DirectField(Vec<FieldChunk>),
}

impl Model {
    pub fn params(&self) -> Option<&Params> {
        match self {
            Model::Network(p) => Some(p),
            Model::DirectField(_) => None,
        }
    }

    /// Direct-field result pasted back into a full grid.
    pub fn direct_field_grid(&self, samples: &[TrainingSample], full_spec: &GridSpec, n_sem: usize) -> Option<VoxelGrid> {
        let Model::DirectField(fields) = self else {
            return None;
        };
        let mut out = VoxelGrid::new(full_spec.clone(), n_sem);
        for (f, s) in fields.iter().zip(samples) {
            let chunk = Chunk { parent_offset: s.input.parent_offset, grid: f.to_grid() };
            crate::grid::paste_chunk(&mut out, &chunk);
        }
        Some(out)
    }
}

/// One view's supervision targets, already at render resolution.
struct ViewTarget {
    camera: Camera,
    view_id: Option<usize>,
    depth: Option<ScalarImage>,
    color: Option<ColorImage>,
    labels: Option<LabelImage>,
    /// Labels must be predicted from the rendered color after rendering.
    labels_from_render: bool,
}

fn downsample_scalar(src: &ScalarImage, w: usize, h: usize) -> ScalarImage {
    let mut out = ScalarImage::invalid(w, h);
    for j in 0..h {
        for i in 0..w {
            let sx = (((i as f64 + 0.5) * src.width as f64 / w as f64) as usize).min(src.width - 1);
            let sy = (((j as f64 + 0.5) * src.height as f64 / h as f64) as usize).min(src.height - 1);
            out.set(i, j, src.get(sx, sy));
        }
    }
    out
}

fn downsample_color(src: &ColorImage, w: usize, h: usize) -> ColorImage {
    let mut out = ColorImage::new(w, h, [0.0; 3]);
    for j in 0..h {
        for i in 0..w {
            let sx = (((i as f64 + 0.5) * src.width as f64 / w as f64) as usize).min(src.width - 1);
            let sy = (((j as f64 + 0.5) * src.height as f64 / h as f64) as usize).min(src.height - 1);
            out.set(i, j, src.get(sx, sy));
        }
    }
    out
}

fn downsample_labels(src: &LabelImage, w: usize, h: usize) -> LabelImage {
    let mut out = LabelImage::ignored(w, h);
    for j in 0..h {
        for i in 0..w {
            let sx = (((i as f64 + 0.5) * src.width as f64 / w as f64) as usize).min(src.width - 1);
            let sy = (((j as f64 + 0.5) * src.height as f64 / h as f64) as usize).min(src.height - 1);
            out.set(i, j, src.get(sx, sy));
        }
    }
    out
}

/// Depth image with the frame's 0-invalid convention mapped to NaN.
fn depth_to_nan(src: &ScalarImage) -> ScalarImage {
    let mut out = src.clone();
    for v in out.data.iter_mut() {
        if !(*v > 0.0) || !v.is_finite() {
            *v = f64::NAN;
        }
    }
    out
}

fn mix_seed(seed: u64, epoch: u64, sample: u64) -> u64 {
    seed ^ epoch.wrapping_mul(0x9E3779B97F4A7C15) ^ sample.wrapping_mul(0xBF58476D1CE4E5B9)
}

/// Assembles the supervising view set for one sample at one epoch: the
/// sample's captured views plus freshly perturbed virtual views.
fn assemble_views(
    sample: &TrainingSample,
    dataset: &Dataset,
    cfg: &TrainConfig,
    predictor: Option<&dyn Predictor>,
    epoch: usize,
    sample_idx: usize,
) -> Result<Vec<ViewTarget>> {
    let (rw, rh) = cfg.render_size;
    let mut out = Vec::new();
    let gt_labels = matches!(cfg.mode, TrainMode::Gt2d | TrainMode::DirectField);

    for &v in &sample.view_ids {
        let frame = &dataset.frames[v];
        let labels = if gt_labels {
            frame.labels.as_ref().map(|l| downsample_labels(l, rw, rh))
        } else {
            let p = predictor.ok_or_else(|| {
                SemvoxError::InvalidConfig("pseudo mode requires a predictor".into())
            })?;
            Some(downsample_labels(&p.predict(Some(v), &frame.camera, &frame.color)?, rw, rh))
        };
        out.push(ViewTarget {
            camera: frame.camera.clone(),
            view_id: Some(v),
            depth: Some(downsample_scalar(&depth_to_nan(&frame.depth), rw, rh)),
            color: if cfg.depth_only { None } else { Some(downsample_color(&frame.color, rw, rh)) },
            labels,
            labels_from_render: false,
        });
    }

    // Virtual views, regenerated each epoch from the sample's own captures.
    if cfg.n_virtual_views > 0 && !sample.view_ids.is_empty() {
        let virtual_supervision_possible = match cfg.mode {
            TrainMode::Gt2d | TrainMode::DirectField => dataset.scene.is_some(),
            TrainMode::Pseudo => false,
            TrainMode::PseudoVirtual => true,
        };
        if virtual_supervision_possible {
            let seed = mix_seed(cfg.rng_seed, epoch as u64, sample_idx as u64);
            let base = &dataset.frames[sample.view_ids[0]].camera;
            let cams = generate_virtual_views(base, &sample.input.grid, &cfg.perturb, cfg.n_virtual_views, seed)?;
            for cam in cams {
                match cfg.mode {
                    TrainMode::Gt2d | TrainMode::DirectField => {
                        let scene = dataset.scene.as_ref().unwrap();
                        let oracle_cam = crate::render::scaled_camera(&cam, rw, rh);
                        let frame = render_oracle_frames(scene, &[oracle_cam]).remove(0);
                        out.push(ViewTarget {
                            camera: cam,
                            view_id: None,
                            depth: Some(depth_to_nan(&frame.depth)),
                            color: if cfg.depth_only { None } else { Some(frame.color) },
                            labels: frame.labels,
                            labels_from_render: false,
                        });
                    }
                    TrainMode::PseudoVirtual => {
                        out.push(ViewTarget {
                            camera: cam,
                            view_id: None,
                            depth: None,
                            color: None,
                            labels: None,
                            labels_from_render: true,
                        });
                    }
                    TrainMode::Pseudo => unreachable!(),
                }
            }
        }
    }
    Ok(out)
}

/// Renders the prediction for every supervising view, accumulates the 2D
/// losses and their adjoints into a grid gradient, and adds the 3D term.
fn sample_losses(
    pred: &VoxelGrid,
    sample: &TrainingSample,
    views: &[ViewTarget],
    cfg: &TrainConfig,
    predictor: Option<&dyn Predictor>,
) -> Result<(LossBreakdown, GridGrad)> {
    let (rw, rh) = cfg.render_size;
    let rcfg = RenderConfig::with_size(rw, rh);
    let n_sem = pred.n_sem();
    let mut grad = GridGrad::zeros(pred.spec.dims, n_sem);
    let mut view_terms = Vec::with_capacity(views.len());

    for view in views {
        let rendered = render(pred, &view.camera, &rcfg)?;
        let n_valid = rendered.valid_count();
        if n_valid == 0 {
            view_terms.push(ViewTerms { geo_2d: 0.0, app: 0.0, sem: 0.0, n_valid: 0 });
            continue;
        }
        let inv_n = 1.0 / n_valid as f64;
        let rendered_valid: Vec<bool> = rendered.hits.iter().map(|h| h.is_some()).collect();
        let mut adj = PixelAdjoints::zeros(rw, rh, n_sem);
        let mut terms = ViewTerms { geo_2d: 0.0, app: 0.0, sem: 0.0, n_valid };

        if let Some(target_depth) = &view.depth {
            let (loss, a) = geo_loss_2d(&rendered.depth, target_depth)?;
            terms.geo_2d = loss;
            for (dst, src) in adj.depth.data.iter_mut().zip(&a.data) {
                *dst = src * inv_n;
            }
        }
        if let Some(target_color) = &view.color {
            // Color supervision only where the target actually observed
            // geometry (background pixels carry no appearance).
            let mask: Vec<bool> = match &view.depth {
                Some(d) => rendered_valid
                    .iter()
                    .zip(&d.data)
                    .map(|(&rv, &td)| rv && td.is_finite())
                    .collect(),
                None => rendered_valid.clone(),
            };
            let (loss, a) = app_loss(&rendered.color, target_color, &mask)?;
            terms.app = loss;
            for (dst, src) in adj.color.data.iter_mut().zip(&a.data) {
                for c in 0..3 {
                    dst[c] = src[c] * inv_n;
                }
            }
        }
        let labels_owned;
        let labels = if view.labels_from_render {
            let p = predictor.ok_or_else(|| {
                SemvoxError::InvalidConfig("virtual pseudo labels require a predictor".into())
            })?;
            labels_owned = Some(p.predict(view.view_id, &view.camera, &rendered.color)?);
            labels_owned.as_ref()
        } else {
            view.labels.as_ref()
        };
        if let Some(target_labels) = labels {
            let (loss, a) = sem_loss(&rendered.sem, target_labels, &rendered_valid)?;
            terms.sem = loss;
            for (dst, src) in adj.sem.data.iter_mut().zip(&a.data) {
                *dst = src * inv_n;
            }
        }
        let g = render_backward(&rendered, &adj)?;
        grad.axpy(1.0, &g);
        view_terms.push(terms);
    }

    let mut chunk_terms = Vec::new();
    if cfg.geo3d {
        let (loss, signs) = geo_loss_3d(pred.tsdf_raw(), &sample.target.grid)?;
        for (dst, s) in grad.tsdf.iter_mut().zip(&signs) {
            *dst += s;
        }
        let n_valid = sample.target.grid.known_count();
        chunk_terms.push((loss, n_valid));
    }
    Ok((total_loss(&view_terms, &chunk_terms), grad))
}

fn network_prediction(params: &Params, chunk: &Chunk) -> Result<(VoxelGrid, net::ForwardPass)> {
    let pass = net::forward(params, chunk)?;
    let spec = chunk.grid.spec.clone();
    let n_sem = params.cfg().n_sem;
    let n = spec.num_voxels();
    let mut grid = VoxelGrid::new(spec, n_sem);
    for i in 0..n {
        grid.tsdf_raw_mut()[i] = pass.tsdf().data[i];
        grid.weight_raw_mut()[i] = 1.0;
        grid.color_raw_mut()[i] = match pass.color() {
            Some(c) => [c.data[i], c.data[n + i], c.data[2 * n + i]],
            None => [0.5; 3],
        };
    }
    for c in 0..n_sem {
        for i in 0..n {
            grid.logits_raw_mut()[i * n_sem + c] = pass.sem().data[c * n + i];
        }
    }
    Ok((grid, pass))
}

fn grid_grad_to_adjoints(grad: &GridGrad, depth_only: bool) -> OutputAdjoints {
    let [nx, ny, nz] = grad.dims;
    let n = nx * ny * nz;
    let tsdf = Tensor4::from_data(1, nx, ny, nz, grad.tsdf.clone());
    let color = if depth_only {
        None
    } else {
        let mut data = vec![0.0; 3 * n];
        for i in 0..n {
            for c in 0..3 {
                data[c * n + i] = grad.color[i][c];
            }
        }
        Some(Tensor4::from_data(3, nx, ny, nz, data))
    };
    let mut sem_data = vec![0.0; grad.n_sem * n];
    for i in 0..n {
        for c in 0..grad.n_sem {
            sem_data[c * n + i] = grad.sem[i * grad.n_sem + c];
        }
    }
    let sem = Tensor4::from_data(grad.n_sem, nx, ny, nz, sem_data);
    OutputAdjoints { tsdf, color, sem }
}

pub struct TrainOutcome {
    pub model: Model,
    pub losses: Vec<LossBreakdown>,
    pub samples: Vec<TrainingSample>,
}

/// Runs `cfg.steps` optimization steps, cycling over the samples in order
/// (one sample per step, batch size 1). Deterministic given the seed.
pub fn train_run(dataset: &Dataset, cfg: &TrainConfig, predictor: Option<&dyn Predictor>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let build = build_samples(dataset, cfg)?;
    let samples = build.samples;
    let n_sem = dataset.manifest.n_sem;

    let mut model = match cfg.mode {
        TrainMode::DirectField => {
            Model::DirectField(samples.iter().map(|s| FieldChunk::init_from(&s.input)).collect())
        }
        _ => Model::Network(net::init_params(&cfg.net_config(n_sem), cfg.rng_seed)?),
    };

    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let sample_idx = step % samples.len();
        let epoch = step / samples.len();
        let sample = &samples[sample_idx];
        let views = assemble_views(sample, dataset, cfg, predictor, epoch, sample_idx)?;

        match &mut model {
            Model::DirectField(fields) => {
                let pred = fields[sample_idx].to_grid();
                let (breakdown, grad) = sample_losses(&pred, sample, &views, cfg, predictor)?;
                let lr = net::effective_lr(cfg.lr0, cfg.decay_rate, cfg.decay_steps, step);
                fields[sample_idx].apply(&grad, lr);
                losses.push(breakdown);
            }
            Model::Network(params) => {
                let (pred, pass) = network_prediction(params, &sample.input)?;
                let (breakdown, grad) = sample_losses(&pred, sample, &views, cfg, predictor)?;
                let adj = grid_grad_to_adjoints(&grad, cfg.depth_only);
                let grads = net::backward(params, &pass, &adj)?;
                net::sgd_step(params, &grads.params, cfg.lr0, cfg.decay_rate, cfg.decay_steps, step)?;
                losses.push(breakdown);
            }
        }
    }
    Ok(TrainOutcome { model, losses, samples })
}

/// Chunk-wise network inference over a full grid with overlap-average
/// stitching: TSDF and color average arithmetically, logits sum.
pub fn infer(params: &Params, input: &VoxelGrid, stride: [usize; 3]) -> Result<VoxelGrid> {
    let cfg = params.cfg();
    let chunk_dims = cfg.chunk_dims;
    let n_sem = cfg.n_sem;
    let chunks = extract_chunks(input, chunk_dims, stride)?;

    let spec = input.spec.clone();
    let n = spec.num_voxels();
    let mut tsdf_sum = vec![0.0f64; n];
    let mut color_sum = vec![[0.0f64; 3]; n];
    let mut logit_sum = vec![0.0f64; n * n_sem];
    let mut count = vec![0.0f64; n];

    for chunk in &chunks {
        let pass = net::forward(params, chunk)?;
        let nvox = chunk.grid.spec.num_voxels();
        let off = chunk.parent_offset;
        let dims = chunk.grid.spec.dims;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let ci = chunk.grid.spec.index(x, y, z);
                    let gi = spec.index(off[0] + x, off[1] + y, off[2] + z);
                    tsdf_sum[gi] += pass.tsdf().data[ci];
                    if let Some(c) = pass.color() {
                        for ch in 0..3 {
                            color_sum[gi][ch] += c.data[ch * nvox + ci];
                        }
                    } else {
                        for ch in 0..3 {
                            color_sum[gi][ch] += 0.5;
                        }
                    }
                    for ch in 0..n_sem {
                        logit_sum[gi * n_sem + ch] += pass.sem().data[ch * nvox + ci];
                    }
                    count[gi] += 1.0;
                }
            }
        }
    }

    let mut out = VoxelGrid::new(spec, n_sem);
    for i in 0..n {
        debug_assert!(count[i] > 0.0);
        out.tsdf_raw_mut()[i] = tsdf_sum[i] / count[i];
        out.weight_raw_mut()[i] = 1.0;
        out.color_raw_mut()[i] = color_sum[i].map(|c| c / count[i]);
    }
    out.logits_raw_mut().copy_from_slice(&logit_sum);
    Ok(out)
}

/// Convenience: a dataset built in memory from a synthetic scene.
pub fn synth_dataset(scene: &crate::synth::SceneSpec, voxel_size: f64) -> Result<Dataset> {
    let cams = scene.cameras()?;
    let frames = render_oracle_frames(scene, &cams);
    Ok(Dataset {
        manifest: crate::io::SceneManifest {
            grid: scene.grid_spec(voxel_size)?,
            n_sem: scene.n_sem,
            class_names: crate::synth::BENCH_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        },
        frames,
        scene: Some(scene.clone()),
    })
}

/// World-space center of a chunk, for diagnostics.
pub fn chunk_center(chunk: &Chunk) -> Vector3<f64> {
    let (lo, hi) = chunk.grid.spec.lattice_bounds();
    (lo + hi) / 2.0
}

/// Re-cuts a grid into the sample layout of an existing sample list (used
/// to compare inputs/outputs against targets chunk by chunk).
pub fn matching_chunk(grid: &VoxelGrid, sample: &TrainingSample) -> Chunk {
    copy_chunk(grid, sample.input.parent_offset, sample.input.grid.spec.dims)
}
