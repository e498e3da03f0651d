//! Pinhole camera model, world/pixel transforms, and virtual-view
//! generation by randomized perturbation of captured poses.
//!
//! Conventions: camera frame is x-right, y-down, z-forward (depth = camera
//! z); poses are camera-to-world; world up is +z. Rays and projections use
//! pixel centers, i.e. pixel (i, j) maps to continuous coordinates
//! (i + 0.5, j + 0.5).

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SemvoxError;
use crate::fusion::Frame;
use crate::grid::{Chunk, world_to_grid};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(SemvoxError::InvalidSpec(format!("focal lengths must be > 0, got {fx}, {fy}")));
        }
        if width < 1 || height < 1 {
            return Err(SemvoxError::InvalidSpec("image dims must be >= 1".into()));
        }
        if !(0.0 <= cx && cx < width as f64 && 0.0 <= cy && cy < height as f64) {
            return Err(SemvoxError::InvalidSpec(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// Symmetric pinhole intrinsics from a horizontal field of view.
    pub fn from_fov(width: usize, height: usize, fov_x_rad: f64) -> Result<Self> {
        let fx = width as f64 / (2.0 * (fov_x_rad / 2.0).tan());
        Self::new(fx, fx, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let rtr = rotation.transpose() * rotation;
        if (rtr - Matrix3::identity()).norm() > 1e-9 {
            return Err(SemvoxError::InvalidSpec("rotation is not orthonormal".into()));
        }
        if (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(SemvoxError::InvalidSpec("rotation determinant is not +1".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// World point into the camera frame.
    #[inline]
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Camera-frame point into the world.
    #[inline]
    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Camera {
    /// Camera at `eye` looking toward `target`, world up +z. Falls back to
    /// the +x axis as the up reference for straight-down/up viewing.
    pub fn look_at(intrinsics: Intrinsics, eye: Vector3<f64>, target: Vector3<f64>) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| SemvoxError::InvalidSpec("look_at eye == target".into()))?;
        let up = Vector3::new(0.0, 0.0, 1.0);
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vector3::new(1.0, 0.0, 0.0));
        }
        let right = right.normalize();
        let down = forward.cross(&right).normalize();
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Ok(Self { intrinsics, pose: Pose::new(rotation, eye)? })
    }

    /// Projects a world point to continuous pixel coordinates and depth
    /// (camera-frame z). Pixels may fall outside the image bounds.
    pub fn project(&self, p: &Vector3<f64>) -> Result<(f64, f64, f64)> {
        let pc = self.pose.world_to_camera(p);
        if pc.z <= 0.0 {
            return Err(SemvoxError::BehindCamera { z: pc.z });
        }
        let u = self.intrinsics.fx * pc.x / pc.z + self.intrinsics.cx;
        let v = self.intrinsics.fy * pc.y / pc.z + self.intrinsics.cy;
        Ok((u, v, pc.z))
    }

    /// World point for continuous pixel coordinates at a given depth
    /// (camera z, meters).
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        let x = (u - self.intrinsics.cx) / self.intrinsics.fx * depth;
        let y = (v - self.intrinsics.cy) / self.intrinsics.fy * depth;
        self.pose.camera_to_world(&Vector3::new(x, y, depth))
    }

    /// Unit world-space direction of the ray through the center of pixel
    /// (i, j), plus its camera-z component per unit ray length (used to
    /// convert between ray length and depth).
    pub fn pixel_ray(&self, i: usize, j: usize) -> (Vector3<f64>, f64) {
        let u = i as f64 + 0.5;
        let v = j as f64 + 0.5;
        let d_cam = Vector3::new(
            (u - self.intrinsics.cx) / self.intrinsics.fx,
            (v - self.intrinsics.cy) / self.intrinsics.fy,
            1.0,
        );
        let norm = d_cam.norm();
        let dir_world = self.pose.rotation * (d_cam / norm);
        (dir_world, 1.0 / norm)
    }
}

/// Ranges for randomized virtual-view generation. Defaults follow the
/// capture-perturbation scheme: FOV widened by a uniform factor in [1, 3],
/// yaw in +/-45 deg, pitch in +/-30 deg, per-axis offsets in +/-1 m, and a
/// translation of up to 2 m away from the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbSpec {
    pub fov_factor_range: (f64, f64),
    pub yaw_range_deg: (f64, f64),
    pub pitch_range_deg: (f64, f64),
    pub offset_range_m: (f64, f64),
    pub back_off_max_m: f64,
    pub include_original: bool,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            fov_factor_range: (1.0, 3.0),
            yaw_range_deg: (-45.0, 45.0),
            pitch_range_deg: (-30.0, 30.0),
            offset_range_m: (-1.0, 1.0),
            back_off_max_m: 2.0,
            include_original: true,
        }
    }
}

impl PerturbSpec {
    /// All ranges collapsed to zero: perturbation becomes the identity.
    pub fn identity() -> Self {
        Self {
            fov_factor_range: (1.0, 1.0),
            yaw_range_deg: (0.0, 0.0),
            pitch_range_deg: (0.0, 0.0),
            offset_range_m: (0.0, 0.0),
            back_off_max_m: 0.0,
            include_original: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("fov_factor_range", self.fov_factor_range),
            ("yaw_range_deg", self.yaw_range_deg),
            ("pitch_range_deg", self.pitch_range_deg),
            ("offset_range_m", self.offset_range_m),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi {
                return Err(SemvoxError::InvalidSpec(format!("{name} is not well-ordered: [{lo}, {hi}]")));
            }
        }
        if self.back_off_max_m < 0.0 {
            return Err(SemvoxError::InvalidSpec("back_off_max_m must be >= 0".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn rotation_about(axis: &Vector3<f64>, angle_rad: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle_rad)
        .into_inner()
}

/// Surface information a perturbation needs from the scene: nearest
/// near-surface voxel to a point, plus the outward TSDF gradient there.
pub trait SurfaceProbe {
    /// Returns (surface point, outward unit normal) or None when the grid
    /// has no known near-surface voxel.
    fn nearest_surface(&self, from: &Vector3<f64>) -> Option<(Vector3<f64>, Vector3<f64>)>;
    /// Clamp segment `from + t*dir, t in [0, dist]` so the endpoint stays
    /// inside the scene bounds; returns the admissible distance.
    fn clamp_travel(&self, from: &Vector3<f64>, dir: &Vector3<f64>, dist: f64) -> f64;
}

impl SurfaceProbe for crate::grid::VoxelGrid {
    fn nearest_surface(&self, from: &Vector3<f64>) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let dims = self.spec.dims;
        let eps = self.spec.voxel_size;
        let mut best: Option<(f64, [usize; 3])> = None;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if self.surface_voxel(x, y, z, eps) {
                        let d2 = (self.spec.voxel_center(x, y, z) - from).norm_squared();
                        if best.map_or(true, |(b, _)| d2 < b) {
                            best = Some((d2, [x, y, z]));
                        }
                    }
                }
            }
        }
        let (_, [x, y, z]) = best?;
        let point = self.spec.voxel_center(x, y, z);

        // Central finite-difference TSDF gradient, one-sided at borders or
        // next to unknown voxels. The gradient of a signed distance field
        // points outward (toward positive TSDF).
        let mut grad = Vector3::zeros();
        let here = self.tsdf_at(x, y, z)?;
        let idx = [x as i64, y as i64, z as i64];
        for axis in 0..3 {
            let mut lo = idx;
            let mut hi = idx;
            lo[axis] -= 1;
            hi[axis] += 1;
            let sample = |c: [i64; 3]| -> Option<f64> {
                if self.spec.contains(c[0], c[1], c[2]) {
                    self.tsdf_at(c[0] as usize, c[1] as usize, c[2] as usize)
                } else {
                    None
                }
            };
            let (a, b, span) = match (sample(lo), sample(hi)) {
                (Some(a), Some(b)) => (a, b, 2.0),
                (Some(a), None) => (a, here, 1.0),
                (None, Some(b)) => (here, b, 1.0),
                (None, None) => (here, here, 1.0),
            };
            grad[axis] = (b - a) / (span * self.spec.voxel_size);
        }
        let normal = grad.try_normalize(1e-12)?;
        Some((point, normal))
    }

    fn clamp_travel(&self, from: &Vector3<f64>, dir: &Vector3<f64>, dist: f64) -> f64 {
        let (lo, hi) = self.spec.lattice_bounds();
        let mut t_max = dist;
        for axis in 0..3 {
            let d = dir[axis];
            if d.abs() < 1e-15 {
                continue;
            }
            let bound = if d > 0.0 { hi[axis] } else { lo[axis] };
            let t = (bound - from[axis]) / d;
            if t >= 0.0 {
                t_max = t_max.min(t);
            }
        }
        t_max.max(0.0)
    }
}

/// Randomly perturbs a captured camera into a virtual view. Draw order from
/// the seeded stream is fixed: FOV factor, yaw, pitch, offset x/y/z,
/// back-off distance. The back-off translates the camera away from the
/// nearest zero isosurface along the outward TSDF gradient, clipped so the
/// camera stays inside the grid bounds; it is skipped when the grid exposes
/// no surface voxel.
pub fn perturb_view(
    cam: &Camera,
    grid: &impl SurfaceProbe,
    spec: &PerturbSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Camera> {
    spec.validate()?;

    let fov_factor = uniform(rng, spec.fov_factor_range.0, spec.fov_factor_range.1);
    let yaw_deg = uniform(rng, spec.yaw_range_deg.0, spec.yaw_range_deg.1);
    let pitch_deg = uniform(rng, spec.pitch_range_deg.0, spec.pitch_range_deg.1);
    let off = Vector3::new(
        uniform(rng, spec.offset_range_m.0, spec.offset_range_m.1),
        uniform(rng, spec.offset_range_m.0, spec.offset_range_m.1),
        uniform(rng, spec.offset_range_m.0, spec.offset_range_m.1),
    );
    let back_off = uniform(rng, 0.0, spec.back_off_max_m);

    let mut intr = cam.intrinsics;
    intr.fx /= fov_factor;
    intr.fy /= fov_factor;

    let mut rotation = cam.pose.rotation;
    if yaw_deg != 0.0 {
        // Yaw about the world up axis.
        rotation = rotation_about(&Vector3::new(0.0, 0.0, 1.0), yaw_deg.to_radians()) * rotation;
    }
    if pitch_deg != 0.0 {
        // Pitch about the camera's right axis.
        let right = rotation.column(0).into_owned();
        rotation = rotation_about(&right, pitch_deg.to_radians()) * rotation;
    }
    let mut translation = cam.pose.translation + off;

    if back_off > 0.0 {
        if let Some((_, normal)) = grid.nearest_surface(&translation) {
            let t = grid.clamp_travel(&translation, &normal, back_off);
            translation += normal * t;
        }
    }

    Ok(Camera { intrinsics: intr, pose: Pose::new(rotation, translation)? })
}

/// Generates `n` virtual views from a base camera. When
/// `spec.include_original` is set the unmodified base camera is the first
/// entry (keeping its original FOV) and counts toward `n`.
pub fn generate_virtual_views(
    cam: &Camera,
    grid: &impl SurfaceProbe,
    spec: &PerturbSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<Camera>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if spec.include_original && n > 0 {
        out.push(cam.clone());
    }
    while out.len() < n {
        out.push(perturb_view(cam, grid, spec, &mut rng)?);
    }
    Ok(out)
}

/// Fraction of a frame's valid depth samples whose backprojected world
/// points land within `dist_eps` of a near-surface chunk voxel
/// (|tsdf| < voxel_size).
pub fn view_overlap_score(frame: &Frame, chunk: &Chunk, dist_eps: f64) -> f64 {
    let grid = &chunk.grid;
    let eps_band = grid.spec.voxel_size;
    let mut valid = 0usize;
    let mut near = 0usize;
    for j in 0..frame.depth.height {
        for i in 0..frame.depth.width {
            let d = frame.depth.get(i, j);
            if !(d > 0.0) || !d.is_finite() {
                continue;
            }
            valid += 1;
            let p = frame.camera.unproject(i as f64 + 0.5, j as f64 + 0.5, d);
            let g = world_to_grid(&p, &grid.spec);
            let vx = g.x.round() as i64;
            let vy = g.y.round() as i64;
            let vz = g.z.round() as i64;
            if !grid.spec.contains(vx, vy, vz) {
                continue;
            }
            let (x, y, z) = (vx as usize, vy as usize, vz as usize);
            if !grid.surface_voxel(x, y, z, eps_band) {
                continue;
            }
            if (grid.spec.voxel_center(x, y, z) - p).norm() <= dist_eps {
                near += 1;
            }
        }
    }
    if valid == 0 {
        0.0
    } else {
        near as f64 / valid as f64
    }
}

/// Distance band for "depth sample close to a surface voxel" (2 cm).
pub const VIEW_OVERLAP_DIST_EPS: f64 = 0.02;

/// Minimum overlap score for a frame to qualify as a supervising view.
pub const VIEW_OVERLAP_MIN_SCORE: f64 = 0.05;

/// Ranks frames by overlap with the chunk surface and returns the indices
/// of the top `k` frames scoring at least [`VIEW_OVERLAP_MIN_SCORE`], best
/// first. Fewer than `k` indices are returned when fewer qualify.
pub fn select_supervising_views(frames: &[Frame], chunk: &Chunk, k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (i, view_overlap_score(f, chunk, VIEW_OVERLAP_DIST_EPS)))
        .filter(|&(_, s)| s >= VIEW_OVERLAP_MIN_SCORE)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(i, _)| i).collect()
}
