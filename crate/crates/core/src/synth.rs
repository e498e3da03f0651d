//! Synthetic room scenes with analytic SDFs and an exact (non-
//! differentiable) sphere-tracing raytracer. These provide ground-truth
//! frames, grids, and depth for every oracle-style test in the crate.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Camera, Intrinsics};
use crate::error::SemvoxError;
use crate::fusion::Frame;
use crate::grid::{GridSpec, VoxelGrid};
use crate::image::{ColorImage, LabelImage, ScalarImage, IGNORE_LABEL};
use crate::Result;

/// Default semantic taxonomy of the bench scenes. Several classes share
/// geometry (axis-aligned boxes) and differ only in albedo, so color input
/// genuinely matters for labeling.
pub const BENCH_CLASS_NAMES: [&str; 6] = ["floor", "wall", "ball", "crate", "slab", "beam"];

/// Fixed per-class albedo.
pub const BENCH_CLASS_COLORS: [[f64; 3]; 6] = [
    [0.55, 0.55, 0.55],
    [0.85, 0.82, 0.72],
    [0.85, 0.15, 0.15],
    [0.15, 0.30, 0.85],
    [0.15, 0.75, 0.30],
    [0.90, 0.80, 0.10],
];

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere { center: Vector3<f64>, radius: f64 },
    Box { center: Vector3<f64>, half_extents: Vector3<f64> },
    /// Solid half-space: points with `normal . p < offset` are inside.
    HalfSpace { normal: Vector3<f64>, offset: f64 },
}

impl Shape {
    pub fn sdf(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Box { center, half_extents } => {
                let q = (p - center).abs() - half_extents;
                let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
            Shape::HalfSpace { normal, offset } => normal.dot(p) - offset,
        }
    }

    /// True near gradient discontinuities (union kinks handled by caller).
    fn near_gradient_kink(&self, p: &Vector3<f64>, margin: f64) -> bool {
        match self {
            Shape::Sphere { center, .. } => (p - center).norm() < margin,
            Shape::HalfSpace { .. } => false,
            Shape::Box { center, half_extents } => {
                let q = (p - center).abs() - half_extents;
                let comps = [q.x, q.y, q.z];
                let positive = comps.iter().filter(|&&c| c > 0.0).count();
                if positive >= 1 {
                    // Near a face boundary any component close to zero puts
                    // us next to the edge/corner kink.
                    comps.iter().any(|&c| c.abs() < margin)
                } else {
                    // Inside: kink where the two largest components tie.
                    let mut s = comps;
                    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    s[0] - s[1] < margin
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub class_id: u16,
    pub color: [f64; 3],
}

/// One ring of cameras at a fixed height, looking at a common target.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSpec {
    pub count: usize,
    pub radius: f64,
    pub height: f64,
    pub look_at: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub n_sem: usize,
    pub room_min: Vector3<f64>,
    pub room_max: Vector3<f64>,
    pub primitives: Vec<Primitive>,
    pub orbits: Vec<OrbitSpec>,
    pub image_width: usize,
    pub image_height: usize,
    pub fov_x_deg: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for prim in &self.primitives {
            if prim.class_id as usize >= self.n_sem {
                return Err(SemvoxError::InvalidConfig(format!(
                    "class id {} out of range (n_sem = {})",
                    prim.class_id, self.n_sem
                )));
            }
            let intersects = match &prim.shape {
                Shape::Sphere { center, .. } | Shape::Box { center, .. } => {
                    (0..3).all(|i| center[i] >= self.room_min[i] && center[i] <= self.room_max[i])
                }
                Shape::HalfSpace { normal, offset } => {
                    // The plane must cut the room's bounding box.
                    let mut lo = 0.0;
                    let mut hi = 0.0;
                    for i in 0..3 {
                        let (a, b) = (normal[i] * self.room_min[i], normal[i] * self.room_max[i]);
                        lo += a.min(b);
                        hi += a.max(b);
                    }
                    lo <= *offset && *offset <= hi
                }
            };
            if !intersects {
                return Err(SemvoxError::InvalidConfig(
                    "primitive does not intersect the room".into(),
                ));
            }
        }
        Ok(())
    }

    /// Signed distance of the scene (union of primitives) together with the
    /// class id and albedo of the minimizing primitive. Empty scenes return
    /// +infinity with the ignore label.
    pub fn analytic_sdf(&self, p: &Vector3<f64>) -> (f64, u16, [f64; 3]) {
        let mut best = (f64::INFINITY, IGNORE_LABEL, [0.0; 3]);
        for prim in &self.primitives {
            let d = prim.shape.sdf(p);
            if d < best.0 {
                best = (d, prim.class_id, prim.color);
            }
        }
        best
    }

    /// True when `p` sits near an SDF gradient discontinuity: close to the
    /// equidistance locus of two primitives or to a per-primitive kink.
    pub fn near_sdf_edge(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let mut dists: Vec<f64> = self.primitives.iter().map(|pr| pr.shape.sdf(p)).collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if dists.len() >= 2 && dists[1] - dists[0] < margin {
            return true;
        }
        let (best, _, _) = self.analytic_sdf(p);
        self.primitives
            .iter()
            .find(|pr| pr.shape.sdf(p) == best)
            .map(|pr| pr.shape.near_gradient_kink(p, margin))
            .unwrap_or(false)
    }

    /// Grid spec covering the room at the given resolution.
    pub fn grid_spec(&self, voxel_size: f64) -> Result<GridSpec> {
        let ext = self.room_max - self.room_min;
        let dims = [
            (ext.x / voxel_size).round() as usize + 1,
            (ext.y / voxel_size).round() as usize + 1,
            (ext.z / voxel_size).round() as usize + 1,
        ];
        GridSpec::with_default_truncation(
            [self.room_min.x, self.room_min.y, self.room_min.z],
            voxel_size,
            dims,
        )
    }

    /// The scene's capture rig: all orbit cameras, in orbit order.
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let intr =
            Intrinsics::from_fov(self.image_width, self.image_height, self.fov_x_deg.to_radians())?;
        let mut cams = Vec::new();
        for orbit in &self.orbits {
            for k in 0..orbit.count {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / orbit.count as f64;
                let eye = Vector3::new(
                    orbit.look_at.x + orbit.radius * theta.cos(),
                    orbit.look_at.y + orbit.radius * theta.sin(),
                    orbit.height,
                );
                cams.push(Camera::look_at(intr, eye, orbit.look_at)?);
            }
        }
        Ok(cams)
    }
}

/// Sphere-traces one ray; returns ray length of the hit, or None.
fn sphere_trace(scene: &SceneSpec, origin: &Vector3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
    const TOL: f64 = 1e-6;
    let mut t = 0.0;
    for _ in 0..4096 {
        let p = origin + dir * t;
        let (d, _, _) = scene.analytic_sdf(&p);
        if d < TOL {
            return if d < -TOL { None } else { Some(t) };
        }
        t += d;
        if t > t_max {
            return None;
        }
    }
    None
}

/// Renders exact posed RGB-D + label frames for the given cameras.
/// Background pixels get depth 0 (invalid), black color, and IGNORE labels.
pub fn render_oracle_frames(scene: &SceneSpec, cams: &[Camera]) -> Vec<Frame> {
    let t_max = 4.0 * (scene.room_max - scene.room_min).norm().max(1.0);
    cams.iter()
        .map(|cam| {
            let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
            let mut depth = ScalarImage::new(w, h, 0.0);
            let mut color = ColorImage::new(w, h, [0.0; 3]);
            let mut labels = LabelImage::ignored(w, h);
            for j in 0..h {
                for i in 0..w {
                    let (dir, dz) = cam.pixel_ray(i, j);
                    if let Some(t) = sphere_trace(scene, &cam.pose.translation, &dir, t_max) {
                        let p = cam.pose.translation + dir * t;
                        let (_, class, albedo) = scene.analytic_sdf(&p);
                        depth.set(i, j, t * dz);
                        color.set(i, j, albedo);
                        labels.set(i, j, class);
                    }
                }
            }
            Frame { camera: cam.clone(), depth, color, labels: Some(labels) }
        })
        .collect()
}

/// Bakes the exact ground-truth grid: clamped analytic TSDF, the minimizing
/// primitive's color and one-hot class logits, weight 1 everywhere.
pub fn bake_gt_grid(scene: &SceneSpec, spec: &GridSpec) -> VoxelGrid {
    let mut grid = VoxelGrid::new(spec.clone(), scene.n_sem);
    let dims = spec.dims;
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = spec.voxel_center(x, y, z);
                let (d, class, color) = scene.analytic_sdf(&p);
                let clamped = d.clamp(-spec.truncation, spec.truncation);
                grid.set_voxel(x, y, z, clamped, 1.0, color);
                if class != IGNORE_LABEL && (class as usize) < scene.n_sem {
                    let mut logits = vec![0.0; scene.n_sem];
                    logits[class as usize] = 1.0;
                    grid.set_logits(x, y, z, &logits);
                }
            }
        }
    }
    grid
}

/// Generates one seeded bench room: floor and two walls plus a few floating
/// objects (kept off the floor so the orbit rig sees almost every surface),
/// observed by 24 cameras on a high down-looking ring, a low ring, and a
/// small steep ring.
pub fn generate_scene(seed: u64, name: &str) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room_min = Vector3::new(0.0, 0.0, 0.0);
    let room_max = Vector3::new(1.26, 1.26, 0.94);
    let center = Vector3::new(0.63, 0.63, 0.0);

    let mut primitives = vec![
        Primitive {
            shape: Shape::HalfSpace { normal: Vector3::new(0.0, 0.0, 1.0), offset: 0.04 },
            class_id: 0,
            color: BENCH_CLASS_COLORS[0],
        },
        Primitive {
            shape: Shape::HalfSpace { normal: Vector3::new(1.0, 0.0, 0.0), offset: 0.04 },
            class_id: 1,
            color: BENCH_CLASS_COLORS[1],
        },
        Primitive {
            shape: Shape::HalfSpace { normal: Vector3::new(0.0, 1.0, 0.0), offset: 0.04 },
            class_id: 1,
            color: BENCH_CLASS_COLORS[1],
        },
    ];

    let orbits = vec![
        OrbitSpec { count: 10, radius: 0.46, height: 0.82, look_at: center + Vector3::new(0.0, 0.0, 0.26) },
        OrbitSpec { count: 10, radius: 0.50, height: 0.30, look_at: center + Vector3::new(0.0, 0.0, 0.44) },
        OrbitSpec { count: 4, radius: 0.22, height: 0.88, look_at: center + Vector3::new(0.0, 0.0, 0.08) },
    ];

    let n_objects = rng.random_range(3..=4);
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
    let mut attempts = 0;
    while placed.len() < n_objects && attempts < 200 {
        attempts += 1;
        let pos = Vector3::new(
            rng.random_range(0.34..0.92),
            rng.random_range(0.34..0.92),
            rng.random_range(0.38..0.58),
        );
        let size = rng.random_range(0.07..0.12);
        // Keep objects apart and away from the camera rings.
        if placed.iter().any(|(q, s)| (pos - q).norm() < s + size + 0.08) {
            continue;
        }
        let xy = Vector3::new(pos.x - 0.63, pos.y - 0.63, 0.0).norm();
        if xy + size > 0.40 {
            continue;
        }
        let class = rng.random_range(2..6u16);
        let shape = if class == 2 {
            Shape::Sphere { center: pos, radius: size }
        } else {
            let he = Vector3::new(
                size * rng.random_range(0.7..1.3),
                size * rng.random_range(0.7..1.3),
                size * rng.random_range(0.6..1.0),
            );
            Shape::Box { center: pos, half_extents: he }
        };
        primitives.push(Primitive { shape, class_id: class, color: BENCH_CLASS_COLORS[class as usize] });
        placed.push((pos, size));
    }

    SceneSpec {
        name: name.to_string(),
        n_sem: 6,
        room_min,
        room_max,
        primitives,
        orbits,
        image_width: 320,
        image_height: 256,
        fov_x_deg: 75.0,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_scene() -> SceneSpec {
        SceneSpec {
            name: "sphere".into(),
            n_sem: 6,
            room_min: Vector3::new(-1.0, -1.0, -1.0),
            room_max: Vector3::new(1.0, 1.0, 1.0),
            primitives: vec![Primitive {
                shape: Shape::Sphere { center: Vector3::zeros(), radius: 0.3 },
                class_id: 2,
                color: BENCH_CLASS_COLORS[2],
            }],
            orbits: vec![],
            image_width: 64,
            image_height: 64,
            fov_x_deg: 60.0,
            seed: 0,
        }
    }

    #[test]
    fn sphere_distance_exact() {
        let scene = sphere_scene();
        let (d, class, _) = scene.analytic_sdf(&Vector3::new(0.5, 0.0, 0.0));
        assert!((d - 0.2).abs() < 1e-15);
        assert_eq!(class, 2);
    }

    #[test]
    fn inside_box_is_negative() {
        let shape = Shape::Box {
            center: Vector3::new(0.5, 0.5, 0.5),
            half_extents: Vector3::new(0.2, 0.2, 0.2),
        };
        assert!(shape.sdf(&Vector3::new(0.5, 0.55, 0.45)) < 0.0);
        assert!(shape.sdf(&Vector3::new(0.9, 0.5, 0.5)) > 0.0);
    }

    #[test]
    fn eikonal_gradient_magnitude() {
        let scene = generate_scene(77, "eikonal");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 100 {
            let p = Vector3::new(
                rng.random_range(0.05..1.2),
                rng.random_range(0.05..1.2),
                rng.random_range(0.05..0.9),
            );
            if scene.near_sdf_edge(&p, 0.01) {
                continue;
            }
            let h = 1e-6;
            let mut grad = Vector3::zeros();
            for axis in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi[axis] += h;
                lo[axis] -= h;
                grad[axis] = (scene.analytic_sdf(&hi).0 - scene.analytic_sdf(&lo).0) / (2.0 * h);
            }
            assert!(
                (grad.norm() - 1.0).abs() < 1e-3,
                "gradient magnitude {} at {p:?}",
                grad.norm()
            );
            checked += 1;
        }
    }

    #[test]
    fn oracle_depth_of_frontal_plane() {
        let scene = SceneSpec {
            name: "plane".into(),
            n_sem: 6,
            room_min: Vector3::new(-3.0, -3.0, -3.0),
            room_max: Vector3::new(3.0, 3.0, 3.0),
            primitives: vec![Primitive {
                // Points with z > 2 are inside the solid.
                shape: Shape::HalfSpace { normal: Vector3::new(0.0, 0.0, -1.0), offset: -2.0 },
                class_id: 1,
                color: BENCH_CLASS_COLORS[1],
            }],
            orbits: vec![],
            image_width: 32,
            image_height: 32,
            fov_x_deg: 50.0,
            seed: 0,
        };
        // Straight-up camera: forward = +z, 2 m below the plane.
        let intr = Intrinsics::from_fov(32, 32, 50f64.to_radians()).unwrap();
        let cam = Camera::look_at(intr, Vector3::zeros(), Vector3::new(0.0, 0.0, 3.0)).unwrap();
        let frames = render_oracle_frames(&scene, &[cam]);
        let depth = &frames[0].depth;
        for j in 0..32 {
            for i in 0..32 {
                assert!(
                    (depth.get(i, j) - 2.0).abs() < 1e-6,
                    "depth {} at ({i},{j})",
                    depth.get(i, j)
                );
            }
        }
    }

    #[test]
    fn empty_scene_renders_invalid() {
        let mut scene = sphere_scene();
        scene.primitives.clear();
        let intr = Intrinsics::from_fov(16, 16, 60f64.to_radians()).unwrap();
        let cam = Camera::look_at(intr, Vector3::new(0.0, -0.9, 0.0), Vector3::zeros()).unwrap();
        let frames = render_oracle_frames(&scene, &[cam]);
        assert!(frames[0].depth.data.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn oracle_labels_within_taxonomy() {
        let mut scene = generate_scene(3, "labels");
        scene.image_width = 40;
        scene.image_height = 32;
        let cams = scene.cameras().unwrap();
        let frames = render_oracle_frames(&scene, &cams[..2]);
        for f in &frames {
            let labels = f.labels.as_ref().unwrap();
            for (idx, &l) in labels.data.iter().enumerate() {
                if f.depth.data[idx] > 0.0 {
                    assert!((l as usize) < scene.n_sem);
                } else {
                    assert_eq!(l, IGNORE_LABEL);
                }
            }
        }
    }

    #[test]
    fn baked_grid_matches_clamped_sdf() {
        let scene = generate_scene(5, "bake");
        let spec = scene.grid_spec(0.04).unwrap();
        let grid = bake_gt_grid(&scene, &spec);
        for z in 0..spec.dims[2] {
            for y in 0..spec.dims[1] {
                for x in 0..spec.dims[0] {
                    let p = spec.voxel_center(x, y, z);
                    let expect = scene.analytic_sdf(&p).0.clamp(-spec.truncation, spec.truncation);
                    let got = grid.tsdf_at(x, y, z).unwrap();
                    assert!((got - expect).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn empty_scene_bakes_to_truncation() {
        let mut scene = sphere_scene();
        scene.primitives.clear();
        let spec = scene.grid_spec(0.1).unwrap();
        let grid = bake_gt_grid(&scene, &spec);
        for i in 0..spec.num_voxels() {
            assert_eq!(grid.tsdf_raw()[i], spec.truncation);
        }
    }

    #[test]
    fn baked_mesh_lies_on_surfaces() {
        let scene = generate_scene(9, "mesh");
        let spec = scene.grid_spec(0.02).unwrap();
        let grid = bake_gt_grid(&scene, &spec);
        let mesh = crate::grid::marching_cubes(&grid);
        assert!(!mesh.is_empty());
        let mut ok = 0usize;
        for v in &mesh.vertices {
            if scene.analytic_sdf(&v.position).0.abs() < spec.voxel_size / 2.0 {
                ok += 1;
            }
        }
        assert!(
            ok as f64 >= 0.99 * mesh.vertices.len() as f64,
            "{ok}/{}",
            mesh.vertices.len()
        );
    }

    #[test]
    fn generated_scene_cameras_in_free_space() {
        for seed in [1u64, 2, 3, 4, 5, 100, 101, 102, 103] {
            let scene = generate_scene(seed, "rig");
            scene.validate().unwrap();
            for cam in scene.cameras().unwrap() {
                let (d, _, _) = scene.analytic_sdf(&cam.pose.translation);
                assert!(d > 0.05, "camera at {:?} too close (d={d})", cam.pose.translation);
            }
        }
    }
}
