//! Differentiable raycasting of TSDF volumes into depth, color, and
//! semantic images.
//!
//! Forward: each pixel marches a ray through the grid, trilinearly
//! interpolating the TSDF at fixed steps. The first positive-to-negative
//! sign change between two known samples is refined by linear
//! interpolation, `t* = t_k + dt * d_k / (d_k - d_{k+1})`; color and
//! semantic logits are trilinear interpolations at the refined point.
//! Rays that cross unknown space before hitting, exceed the depth limit,
//! or leave the grid produce invalid pixels.
//!
//! Backward: depth gradients flow through the closed form of `t*` into the
//! two bracketing samples' 16 voxels; color and semantic gradients flow
//! through the trilinear weights of the hit point, whose position is held
//! fixed (only the depth channel moves geometry).

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::SemvoxError;
use crate::grid::{world_to_grid, TrilinearStencil, VoxelGrid};
use crate::image::{ChannelImage, ColorImage, ScalarImage};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// Output image size (width, height). Camera intrinsics are rescaled
    /// to this resolution.
    pub image_size: (usize, usize),
    /// Depth limit in meters; deeper hits are invalid.
    pub max_depth: f64,
    /// Ray-march step in meters along the ray; defaults to the voxel size.
    pub step: Option<f64>,
    /// Near-surface band in meters used by consumers of rendered views
    /// (e.g. masking exports); defaults to the voxel size.
    pub surface_eps: Option<f64>,
    /// Maximum pixels per render.
    pub ray_cap: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            image_size: (320, 256),
            max_depth: 6.0,
            step: None,
            surface_eps: None,
            ray_cap: 640_000,
        }
    }
}

impl RenderConfig {
    pub fn with_size(width: usize, height: usize) -> Self {
        Self { image_size: (width, height), ..Self::default() }
    }
}

/// Per-pixel intersection record kept for the backward pass: the bracketing
/// sample parameters and stencils, the refined hit stencil, and the
/// depth-per-ray-length factor of the pixel ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRecord {
    pub t_k: f64,
    pub dt: f64,
    pub d_k: f64,
    pub d_kp1: f64,
    pub t_star: f64,
    pub dz: f64,
    pub stencil_k: TrilinearStencil,
    pub stencil_kp1: TrilinearStencil,
    pub stencil_star: TrilinearStencil,
}

/// Rendered depth/color/semantic views plus intersection records.
/// Invalid pixels have NaN depth, no hit record, and undefined color/sem.
#[derive(Debug, Clone)]
pub struct RenderedViews {
    pub depth: ScalarImage,
    pub color: ColorImage,
    pub sem: ChannelImage,
    pub hits: Vec<Option<HitRecord>>,
    pub grid_dims: [usize; 3],
    pub n_sem: usize,
}

impl RenderedViews {
    pub fn width(&self) -> usize {
        self.depth.width
    }
    pub fn height(&self) -> usize {
        self.depth.height
    }
    pub fn valid_count(&self) -> usize {
        self.hits.iter().filter(|h| h.is_some()).count()
    }
}

/// Gradients of some scalar objective with respect to every voxel field.
#[derive(Debug, Clone)]
pub struct GridGrad {
    pub dims: [usize; 3],
    pub n_sem: usize,
    pub tsdf: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub sem: Vec<f64>,
}

impl GridGrad {
    pub fn zeros(dims: [usize; 3], n_sem: usize) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Self {
            dims,
            n_sem,
            tsdf: vec![0.0; n],
            color: vec![[0.0; 3]; n],
            sem: vec![0.0; n * n_sem],
        }
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    /// Accumulate `other` scaled by `s` (used by linearity tests and
    /// multi-view training).
    pub fn axpy(&mut self, s: f64, other: &GridGrad) {
        for (a, b) in self.tsdf.iter_mut().zip(&other.tsdf) {
            *a += s * b;
        }
        for (a, b) in self.color.iter_mut().zip(&other.color) {
            for c in 0..3 {
                a[c] += s * b[c];
            }
        }
        for (a, b) in self.sem.iter_mut().zip(&other.sem) {
            *a += s * b;
        }
    }
}

/// Per-pixel adjoints fed into [`backward`]. Entries default to zero.
#[derive(Debug, Clone)]
pub struct PixelAdjoints {
    pub depth: ScalarImage,
    pub color: ColorImage,
    pub sem: ChannelImage,
}

impl PixelAdjoints {
    pub fn zeros(width: usize, height: usize, n_sem: usize) -> Self {
        Self {
            depth: ScalarImage::new(width, height, 0.0),
            color: ColorImage::new(width, height, [0.0; 3]),
            sem: ChannelImage::new(width, height, n_sem, 0.0),
        }
    }
}

/// Rescales camera intrinsics to a new image resolution.
pub fn scaled_camera(cam: &Camera, width: usize, height: usize) -> Camera {
    let mut out = cam.clone();
    let sx = width as f64 / cam.intrinsics.width as f64;
    let sy = height as f64 / cam.intrinsics.height as f64;
    out.intrinsics.fx *= sx;
    out.intrinsics.fy *= sy;
    out.intrinsics.cx *= sx;
    out.intrinsics.cy *= sy;
    out.intrinsics.width = width;
    out.intrinsics.height = height;
    out
}

/// Entry/exit ray lengths of the segment of `origin + t*dir` inside the
/// axis-aligned box, or None if it misses.
fn ray_box(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    lo: &Vector3<f64>,
    hi: &Vector3<f64>,
) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[a];
        let (mut ta, mut tb) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

struct PixelResult {
    depth: f64,
    color: [f64; 3],
    sem: Vec<f64>,
    hit: Option<HitRecord>,
}

fn trace_pixel(
    grid: &VoxelGrid,
    cam: &Camera,
    cfg: &RenderConfig,
    step: f64,
    i: usize,
    j: usize,
) -> PixelResult {
    let invalid = || PixelResult {
        depth: f64::NAN,
        color: [0.0; 3],
        sem: vec![0.0; grid.n_sem()],
        hit: None,
    };
    let (dir, dz) = cam.pixel_ray(i, j);
    let origin = cam.pose.translation;
    let (lo, hi) = grid.spec.lattice_bounds();
    let Some((t_in, t_out)) = ray_box(&origin, &dir, &lo, &hi) else {
        return invalid();
    };
    // Limit marching to the depth cap (depth = t * dz).
    let t_cap = if dz > 1e-12 { cfg.max_depth / dz } else { f64::INFINITY };
    let t_end = t_out.min(t_cap);

    let sample = |t: f64| -> Option<(f64, TrilinearStencil)> {
        let p = origin + dir * t;
        let g = world_to_grid(&p, &grid.spec);
        let st = TrilinearStencil::at(&g, grid.spec.dims)?;
        let mut acc = 0.0;
        for c in 0..8 {
            let [x, y, z] = st.corner(c);
            let idx = grid.spec.index(x, y, z);
            if grid.weight_raw()[idx] <= 0.0 {
                return None;
            }
            acc += st.weight(c) * grid.tsdf_raw()[idx];
        }
        Some((acc, st))
    };

    let mut t_prev = t_in;
    let Some((mut d_prev, mut st_prev)) = sample(t_prev) else {
        // Unknown space at the entry point: no supervision from this ray.
        return invalid();
    };

    let mut t = t_in + step;
    while t <= t_end {
        let Some((d, st)) = sample(t) else {
            return invalid(); // crossed into unknown space before hitting
        };
        if d_prev > 0.0 && d <= 0.0 {
            let t_star = t_prev + step * d_prev / (d_prev - d);
            let depth = t_star * dz;
            if depth > cfg.max_depth {
                return invalid();
            }
            let p_star = origin + dir * t_star;
            let g_star = world_to_grid(&p_star, &grid.spec);
            let Some(st_star) = TrilinearStencil::at(&g_star, grid.spec.dims) else {
                return invalid();
            };
            let mut color = [0.0; 3];
            let mut sem = vec![0.0; grid.n_sem()];
            for c in 0..8 {
                let [x, y, z] = st_star.corner(c);
                let idx = grid.spec.index(x, y, z);
                if grid.weight_raw()[idx] <= 0.0 {
                    return invalid();
                }
                let w = st_star.weight(c);
                let col = grid.color_raw()[idx];
                color[0] += w * col[0];
                color[1] += w * col[1];
                color[2] += w * col[2];
                let logits = &grid.logits_raw()[idx * grid.n_sem()..(idx + 1) * grid.n_sem()];
                for (s, &l) in sem.iter_mut().zip(logits) {
                    *s += w * l;
                }
            }
            return PixelResult {
                depth,
                color,
                sem,
                hit: Some(HitRecord {
                    t_k: t_prev,
                    dt: step,
                    d_k: d_prev,
                    d_kp1: d,
                    t_star,
                    dz,
                    stencil_k: st_prev,
                    stencil_kp1: st,
                    stencil_star: st_star,
                }),
            };
        }
        t_prev = t;
        d_prev = d;
        st_prev = st;
        t += step;
    }
    let _ = (t_prev, d_prev, st_prev);
    invalid()
}

/// Raycasts the grid from `cam` into depth, color, and semantic images of
/// `cfg.image_size`, recording per-pixel hits for [`backward`].
pub fn render(grid: &VoxelGrid, cam: &Camera, cfg: &RenderConfig) -> Result<RenderedViews> {
    let (w, h) = cfg.image_size;
    if w * h > cfg.ray_cap {
        return Err(SemvoxError::RayCapExceeded { pixels: w * h, cap: cfg.ray_cap });
    }
    let cam = scaled_camera(cam, w, h);
    let step = cfg.step.unwrap_or(grid.spec.voxel_size);
    let n_sem = grid.n_sem();

    let rows: Vec<Vec<PixelResult>> = (0..h)
        .into_par_iter()
        .map(|j| (0..w).map(|i| trace_pixel(grid, &cam, cfg, step, i, j)).collect())
        .collect();

    let mut depth = ScalarImage::invalid(w, h);
    let mut color = ColorImage::new(w, h, [0.0; 3]);
    let mut sem = ChannelImage::new(w, h, n_sem, 0.0);
    let mut hits = vec![None; w * h];
    for (j, row) in rows.into_iter().enumerate() {
        for (i, px) in row.into_iter().enumerate() {
            depth.set(i, j, px.depth);
            color.set(i, j, px.color);
            sem.pixel_mut(i, j).copy_from_slice(&px.sem);
            hits[j * w + i] = px.hit;
        }
    }
    Ok(RenderedViews { depth, color, sem, hits, grid_dims: grid.spec.dims, n_sem })
}

/// Accumulates per-pixel adjoints into per-voxel gradients. Invalid pixels
/// contribute nothing; accumulation order is fixed (row-major) so results
/// are reproducible.
pub fn backward(views: &RenderedViews, adjoints: &PixelAdjoints) -> Result<GridGrad> {
    let (w, h) = (views.width(), views.height());
    if adjoints.depth.width != w
        || adjoints.depth.height != h
        || adjoints.color.width != w
        || adjoints.color.height != h
        || adjoints.sem.width != w
        || adjoints.sem.height != h
        || adjoints.sem.channels != views.n_sem
    {
        return Err(SemvoxError::ShapeMismatch(format!(
            "adjoint images do not match the {w}x{h}x{} views",
            views.n_sem
        )));
    }

    let mut grad = GridGrad::zeros(views.grid_dims, views.n_sem);
    for j in 0..h {
        for i in 0..w {
            let Some(hit) = &views.hits[j * w + i] else {
                continue;
            };

            let a_depth = adjoints.depth.get(i, j);
            if a_depth != 0.0 && a_depth.is_finite() {
                // t* = t_k + dt * d_k / (d_k - d_{k+1});
                // d/d d_k   = dt * (-d_{k+1}) / (d_k - d_{k+1})^2
                // d/d d_kp1 = dt *   d_k      / (d_k - d_{k+1})^2
                let denom = hit.d_k - hit.d_kp1;
                let denom2 = denom * denom;
                let dt_ddk = hit.dt * (-hit.d_kp1) / denom2;
                let dt_ddkp1 = hit.dt * hit.d_k / denom2;
                for c in 0..8 {
                    let gk = grad.index(hit.stencil_k.corner(c));
                    grad.tsdf[gk] += a_depth * hit.dz * dt_ddk * hit.stencil_k.weight(c);
                    let gkp1 = grad.index(hit.stencil_kp1.corner(c));
                    grad.tsdf[gkp1] += a_depth * hit.dz * dt_ddkp1 * hit.stencil_kp1.weight(c);
                }
            }

            let a_color = adjoints.color.get(i, j);
            if a_color != [0.0; 3] {
                for c in 0..8 {
                    let gi = grad.index(hit.stencil_star.corner(c));
                    let wgt = hit.stencil_star.weight(c);
                    for ch in 0..3 {
                        grad.color[gi][ch] += wgt * a_color[ch];
                    }
                }
            }

            let a_sem = adjoints.sem.pixel(i, j);
            if a_sem.iter().any(|&v| v != 0.0) {
                for c in 0..8 {
                    let gi = grad.index(hit.stencil_star.corner(c));
                    let wgt = hit.stencil_star.weight(c);
                    for (ch, &a) in a_sem.iter().enumerate() {
                        grad.sem[gi * views.n_sem + ch] += wgt * a;
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// One-hot image of the argmax class per valid pixel (ties break toward the
/// lowest class index); invalid pixels are all-zero.
pub fn semantic_one_hot(views: &RenderedViews) -> ChannelImage {
    let (w, h) = (views.width(), views.height());
    let mut out = ChannelImage::new(w, h, views.n_sem, 0.0);
    for j in 0..h {
        for i in 0..w {
            if views.hits[j * w + i].is_some() && views.n_sem > 0 {
                let c = views.sem.argmax(i, j);
                out.pixel_mut(i, j)[c] = 1.0;
            }
        }
    }
    out
}
