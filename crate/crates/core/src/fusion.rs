//! Volumetric fusion of posed RGB-D frames into a TSDF grid, plus the two
//! incomplete-scan corruptions: view subsetting and cube masking.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::error::SemvoxError;
use crate::grid::{GridSpec, VoxelGrid};
use crate::image::{ColorImage, LabelImage, ScalarImage, IGNORE_LABEL};
use crate::Result;

/// One posed RGB-D capture. Depth is in meters with 0 (or NaN) marking
/// invalid pixels; labels are optional reference segmentations.
#[derive(Debug, Clone)]
pub struct Frame {
    pub camera: Camera,
    pub depth: ScalarImage,
    pub color: ColorImage,
    pub labels: Option<LabelImage>,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        let expected = (self.camera.intrinsics.width, self.camera.intrinsics.height);
        for (w, h) in [
            (self.depth.width, self.depth.height),
            (self.color.width, self.color.height),
        ]
        .into_iter()
        .chain(self.labels.iter().map(|l| (l.width, l.height)))
        {
            if (w, h) != expected {
                return Err(SemvoxError::IntrinsicsMismatch { expected, actual: (w, h) });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn depth_valid(&self, x: usize, y: usize) -> bool {
        let d = self.depth.get(x, y);
        d.is_finite() && d > 0.0
    }
}

/// Fuses frames into a TSDF grid by projective signed-distance averaging.
///
/// Every voxel in a frame's frustum whose projective distance
/// `pixel_depth - voxel_camera_z` is at least `-truncation` receives one
/// observation of the clamped distance with weight 1 (distances beyond
/// `+truncation` integrate as observed free space). Color and label votes
/// accumulate only inside the `+/-truncation` band; label votes become
/// logits via `log(count + 1)`. Voxels never observed stay unknown.
pub fn fuse(frames: &[Frame], spec: &GridSpec, n_sem: usize) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::new(spec.clone(), n_sem);
    let n_vox = spec.num_voxels();
    let mut color_weight = vec![0.0f64; n_vox];
    let mut votes = vec![0.0f64; n_vox * n_sem];

    for frame in frames {
        frame.validate()?;
        integrate_frame(&mut grid, frame, &mut color_weight, &mut votes);
    }

    if n_sem > 0 {
        let logits = grid.logits_raw_mut();
        for (l, &v) in logits.iter_mut().zip(votes.iter()) {
            *l = (v + 1.0).ln();
        }
    }
    Ok(grid)
}

fn integrate_frame(grid: &mut VoxelGrid, frame: &Frame, color_weight: &mut [f64], votes: &mut [f64]) {
    let spec = grid.spec.clone();
    let truncation = spec.truncation;
    let n_sem = grid.n_sem();
    let intr = frame.camera.intrinsics;

    for z in 0..spec.dims[2] {
        for y in 0..spec.dims[1] {
            for x in 0..spec.dims[0] {
                let p = spec.voxel_center(x, y, z);
                let pc = frame.camera.pose.world_to_camera(&p);
                if pc.z <= 0.0 {
                    continue;
                }
                let u = intr.fx * pc.x / pc.z + intr.cx;
                let v = intr.fy * pc.y / pc.z + intr.cy;
                if u < 0.0 || v < 0.0 {
                    continue;
                }
                let (px, py) = (u as usize, v as usize);
                if px >= intr.width || py >= intr.height {
                    continue;
                }
                if !frame.depth_valid(px, py) {
                    continue;
                }
                let sdf = frame.depth.get(px, py) - pc.z;
                if sdf < -truncation {
                    continue; // occluded
                }
                let clamped = sdf.min(truncation);

                let idx = spec.index(x, y, z);
                let w_old = grid.weight_raw()[idx];
                let tsdf_new = if w_old > 0.0 {
                    (grid.tsdf_raw()[idx] * w_old + clamped) / (w_old + 1.0)
                } else {
                    clamped
                };
                grid.tsdf_raw_mut()[idx] = tsdf_new;
                grid.weight_raw_mut()[idx] = w_old + 1.0;

                if sdf.abs() <= truncation {
                    let cw = color_weight[idx];
                    let c = frame.color.get(px, py);
                    let old = grid.color_raw()[idx];
                    grid.color_raw_mut()[idx] = [
                        (old[0] * cw + c[0]) / (cw + 1.0),
                        (old[1] * cw + c[1]) / (cw + 1.0),
                        (old[2] * cw + c[2]) / (cw + 1.0),
                    ];
                    color_weight[idx] = cw + 1.0;

                    if let Some(labels) = &frame.labels {
                        let l = labels.get(px, py);
                        if l != IGNORE_LABEL && (l as usize) < n_sem {
                            votes[idx * n_sem + l as usize] += 1.0;
                        }
                    }
                }
            }
        }
    }
}

/// Indices of a uniform random subset of `round(fraction * n)` frames,
/// order preserved. Deterministic per seed.
pub fn subset_view_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SemvoxError::InvalidConfig(format!("subset fraction {fraction} not in (0, 1]")));
    }
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Uniform random subset of the frames (see [`subset_view_indices`]).
pub fn subset_views(frames: &[Frame], fraction: f64, seed: u64) -> Result<Vec<Frame>> {
    let idx = subset_view_indices(frames.len(), fraction, seed)?;
    Ok(idx.into_iter().map(|i| frames[i].clone()).collect())
}

/// Multi-scale cube masking schedule. Each scale tiles the grid with
/// `cube_sizes[i]`-sided windows and masks whole windows at random; the
/// marginal probability that a voxel is removed at scale i is `probs[i]`,
/// so the expected total masked fraction of known voxels is `sum(probs)`
/// (the remaining `keep_prob` stays intact).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSchedule {
    pub cube_sizes: Vec<usize>,
    pub probs: Vec<f64>,
    pub keep_prob: f64,
    pub rng_seed: u64,
}

impl Default for MaskSchedule {
    fn default() -> Self {
        Self {
            cube_sizes: vec![50, 25, 10],
            probs: vec![0.2, 0.2, 0.2],
            keep_prob: 0.4,
            rng_seed: 0,
        }
    }
}

impl MaskSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.cube_sizes.len() != self.probs.len() {
            return Err(SemvoxError::InvalidConfig("cube_sizes and probs length mismatch".into()));
        }
        if self.cube_sizes.iter().any(|&s| s == 0) {
            return Err(SemvoxError::InvalidConfig("cube sizes must be positive".into()));
        }
        let total: f64 = self.probs.iter().sum::<f64>() + self.keep_prob;
        if (total - 1.0).abs() > 1e-9 {
            return Err(SemvoxError::InvalidConfig(format!(
                "probs + keep_prob must sum to 1, got {total}"
            )));
        }
        if self.probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(SemvoxError::InvalidConfig("probs must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Masks cube-shaped regions of the grid to unknown. Returns the corrupted
/// grid and the removed-voxel mask (true where a previously known voxel was
/// cleared). Survivors keep their values bitwise.
///
/// Window draws at scale i use the conditional probability
/// `probs[i] / (1 - probs[0..i].sum())`, which makes the per-voxel survival
/// probability exactly `keep_prob` regardless of overlap between scales.
pub fn cube_mask(grid: &VoxelGrid, schedule: &MaskSchedule) -> Result<(VoxelGrid, Vec<bool>)> {
    schedule.validate()?;
    let dims = grid.spec.dims;
    let n_vox = grid.spec.num_voxels();
    let mut region = vec![false; n_vox];
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.rng_seed);

    let mut prior = 0.0;
    for (&size, &p) in schedule.cube_sizes.iter().zip(&schedule.probs) {
        let remaining = 1.0 - prior;
        let q = if remaining > 1e-12 { (p / remaining).min(1.0) } else { 0.0 };
        prior += p;

        let tiles = |n: usize| n.div_ceil(size);
        for tz in 0..tiles(dims[2]) {
            for ty in 0..tiles(dims[1]) {
                for tx in 0..tiles(dims[0]) {
                    if !rng.random_bool(q) {
                        continue;
                    }
                    let x1 = ((tx + 1) * size).min(dims[0]);
                    let y1 = ((ty + 1) * size).min(dims[1]);
                    let z1 = ((tz + 1) * size).min(dims[2]);
                    for z in tz * size..z1 {
                        for y in ty * size..y1 {
                            for x in tx * size..x1 {
                                region[grid.spec.index(x, y, z)] = true;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut out = grid.clone();
    let mut removed = vec![false; n_vox];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = grid.spec.index(x, y, z);
                if region[i] && grid.is_known_idx(i) {
                    removed[i] = true;
                    out.clear_voxel(x, y, z);
                }
            }
        }
    }
    Ok((out, removed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Camera, Intrinsics};
    use nalgebra::Vector3;

    fn wall_frame(depth_m: f64) -> Frame {
        let intr = Intrinsics::new(200.0, 200.0, 160.0, 128.0, 320, 256).unwrap();
        let cam = Camera::look_at(
            intr,
            Vector3::new(0.32, -1.0, 0.32),
            Vector3::new(0.32, 1.0, 0.32),
        )
        .unwrap();
        Frame {
            camera: cam,
            depth: ScalarImage::new(320, 256, depth_m),
            color: ColorImage::new(320, 256, [0.25, 0.5, 0.75]),
            labels: None,
        }
    }

    fn wall_spec() -> GridSpec {
        GridSpec::with_default_truncation([0.0, -0.1, 0.0], 0.02, [32, 16, 32]).unwrap()
    }

    #[test]
    fn zero_frames_all_unknown() {
        let grid = fuse(&[], &wall_spec(), 4).unwrap();
        assert_eq!(grid.known_count(), 0);
    }

    #[test]
    fn fused_wall_matches_plane_sdf() {
        // Camera 1 m in front of a fronto-parallel wall at world y = 0; the
        // analytic signed distance of a voxel is simply -y.
        let spec = wall_spec();
        let grid = fuse(&[wall_frame(1.0)], &spec, 0).unwrap();
        let mut total = 0usize;
        let mut ok = 0usize;
        for z in 0..spec.dims[2] {
            for y in 0..spec.dims[1] {
                for x in 0..spec.dims[0] {
                    let p = spec.voxel_center(x, y, z);
                    let analytic = -p.y;
                    if analytic.abs() > spec.truncation {
                        continue;
                    }
                    if let Some(d) = grid.tsdf_at(x, y, z) {
                        total += 1;
                        if (d - analytic.clamp(-spec.truncation, spec.truncation)).abs()
                            < spec.voxel_size / 2.0
                        {
                            ok += 1;
                        }
                    }
                }
            }
        }
        assert!(total > 500, "wall band should be observed, got {total}");
        assert!(ok as f64 >= 0.99 * total as f64, "{ok}/{total} voxels accurate");
    }

    #[test]
    fn duplicate_frames_average_to_same_tsdf() {
        let spec = wall_spec();
        let one = fuse(&[wall_frame(1.0)], &spec, 0).unwrap();
        let two = fuse(&[wall_frame(1.0), wall_frame(1.0)], &spec, 0).unwrap();
        for z in 0..spec.dims[2] {
            for y in 0..spec.dims[1] {
                for x in 0..spec.dims[0] {
                    match (one.tsdf_at(x, y, z), two.tsdf_at(x, y, z)) {
                        (Some(a), Some(b)) => {
                            assert!((a - b).abs() < 1e-12);
                            assert_eq!(two.weight_at(x, y, z), 2.0 * one.weight_at(x, y, z));
                        }
                        (None, None) => {}
                        other => panic!("known-set mismatch at ({x},{y},{z}): {other:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn fusion_order_independent() {
        let spec = wall_spec();
        let a = wall_frame(1.0);
        let b = wall_frame(0.95);
        let ab = fuse(&[a.clone(), b.clone()], &spec, 0).unwrap();
        let ba = fuse(&[b, a], &spec, 0).unwrap();
        for i in 0..spec.num_voxels() {
            let (x, y) = (ab.tsdf_raw()[i], ba.tsdf_raw()[i]);
            if x.is_nan() && y.is_nan() {
                continue;
            }
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn known_voxels_within_truncation_and_weighted() {
        let spec = wall_spec();
        let grid = fuse(&[wall_frame(1.0)], &spec, 0).unwrap();
        for i in 0..spec.num_voxels() {
            if grid.is_known_idx(i) {
                assert!(grid.tsdf_raw()[i].abs() <= spec.truncation + 1e-12);
                assert!(grid.weight_raw()[i] >= 1.0);
            }
        }
    }

    #[test]
    fn intrinsics_mismatch_rejected() {
        let mut f = wall_frame(1.0);
        f.depth = ScalarImage::new(100, 100, 1.0);
        match fuse(&[f], &wall_spec(), 0) {
            Err(SemvoxError::IntrinsicsMismatch { .. }) => {}
            other => panic!("expected IntrinsicsMismatch, got {other:?}"),
        }
    }

    #[test]
    fn subset_full_fraction_is_identity() {
        let idx = subset_view_indices(10, 1.0, 3).unwrap();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn subset_fraction_size() {
        let idx = subset_view_indices(100, 0.4, 7).unwrap();
        assert_eq!(idx.len(), 40);
        assert!(idx.windows(2).all(|w| w[0] < w[1]), "order preserved");
    }

    #[test]
    fn subset_seeds_differ() {
        let mut distinct = 0;
        for seed in 0..100u64 {
            let a = subset_view_indices(100, 0.4, seed).unwrap();
            let b = subset_view_indices(100, 0.4, seed + 1000).unwrap();
            if a != b {
                distinct += 1;
            }
        }
        assert!(distinct >= 95, "only {distinct}/100 seed pairs differ");
    }

    fn full_grid(dims: [usize; 3]) -> VoxelGrid {
        let spec = GridSpec::with_default_truncation([0.0; 3], 0.02, dims).unwrap();
        let mut g = VoxelGrid::new(spec, 0);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    g.set_voxel(x, y, z, 0.01, 1.0, [0.3, 0.3, 0.3]);
                }
            }
        }
        g
    }

    #[test]
    fn zero_probs_mask_nothing() {
        let g = full_grid([20, 20, 20]);
        let schedule = MaskSchedule {
            probs: vec![0.0, 0.0, 0.0],
            keep_prob: 1.0,
            ..MaskSchedule::default()
        };
        let (masked, removed) = cube_mask(&g, &schedule).unwrap();
        assert!(removed.iter().all(|&r| !r));
        assert_eq!(masked.known_count(), g.known_count());
    }

    #[test]
    fn default_schedule_masks_half_to_seventy_percent() {
        let g = full_grid([128, 128, 128]);
        let schedule = MaskSchedule { rng_seed: 11, ..MaskSchedule::default() };
        let (masked, removed) = cube_mask(&g, &schedule).unwrap();
        let frac = removed.iter().filter(|&&r| r).count() as f64 / g.known_count() as f64;
        assert!((0.5..=0.7).contains(&frac), "masked fraction {frac}");
        assert_eq!(
            masked.known_count(),
            g.known_count() - removed.iter().filter(|&&r| r).count()
        );
    }

    #[test]
    fn mask_partitions_the_known_set() {
        let mut g = full_grid([40, 30, 20]);
        // Punch some unknowns in so the known set is nontrivial.
        for i in 0..40 {
            g.clear_voxel(i, i % 30, i % 20);
        }
        let schedule = MaskSchedule {
            cube_sizes: vec![16, 8, 4],
            rng_seed: 5,
            ..MaskSchedule::default()
        };
        let (masked, removed) = cube_mask(&g, &schedule).unwrap();
        for z in 0..20 {
            for y in 0..30 {
                for x in 0..40 {
                    let i = g.spec.index(x, y, z);
                    let was_known = g.is_known_idx(i);
                    let now_known = masked.is_known_idx(i);
                    if removed[i] {
                        assert!(was_known && !now_known);
                    } else {
                        assert_eq!(was_known, now_known, "no voxel invented at ({x},{y},{z})");
                        if was_known {
                            // Survivors bitwise unchanged.
                            assert_eq!(
                                g.tsdf_raw()[i].to_bits(),
                                masked.tsdf_raw()[i].to_bits()
                            );
                        }
                    }
                }
            }
        }
    }
}
