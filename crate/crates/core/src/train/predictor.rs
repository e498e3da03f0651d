//! Generic 2D semantic predictors that stand in for a pretrained
//! segmentation network: a file-backed lookup of precomputed label maps,
//! and a mock that renders labels from the hidden ground-truth scene with
//! a configurable corruption rate.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::error::SemvoxError;
use crate::image::{ColorImage, LabelImage, IGNORE_LABEL};
use crate::render::scaled_camera;
use crate::synth::{render_oracle_frames, SceneSpec};
use crate::Result;

/// Maps an observed color image (from a real capture or a rendered virtual
/// view) to a per-pixel label map of the same size.
pub trait Predictor {
    fn predict(&self, view_id: Option<usize>, camera: &Camera, color: &ColorImage) -> Result<LabelImage>;
}

/// Serves precomputed label maps from `label/XXXX.pgm`, keyed by view id.
pub struct FileBackedPredictor {
    pub dir: PathBuf,
}

impl Predictor for FileBackedPredictor {
    fn predict(&self, view_id: Option<usize>, _camera: &Camera, color: &ColorImage) -> Result<LabelImage> {
        let id = view_id.ok_or_else(|| {
            SemvoxError::InvalidConfig("file-backed predictor needs a view id".into())
        })?;
        let path = self.dir.join(format!("{id:04}.pgm"));
        let labels = crate::io::read_pgm16(&path)?;
        if (labels.width, labels.height) == (color.width, color.height) {
            return Ok(labels);
        }
        // Nearest-neighbor resize to the query resolution.
        let mut out = LabelImage::ignored(color.width, color.height);
        for j in 0..color.height {
            for i in 0..color.width {
                let sx = ((i as f64 + 0.5) * labels.width as f64 / color.width as f64) as usize;
                let sy = ((j as f64 + 0.5) * labels.height as f64 / color.height as f64) as usize;
                out.set(i, j, labels.get(sx.min(labels.width - 1), sy.min(labels.height - 1)));
            }
        }
        Ok(out)
    }
}

/// Renders exact labels from the hidden ground-truth scene at the query
/// camera, then flips a fraction of valid pixels to random wrong classes.
/// At corruption 0 on a captured view this reproduces the dataset's own
/// ground-truth label map exactly.
pub struct MockPredictor {
    pub scene: SceneSpec,
    pub corruption: f64,
    pub seed: u64,
}

impl Predictor for MockPredictor {
    fn predict(&self, view_id: Option<usize>, camera: &Camera, color: &ColorImage) -> Result<LabelImage> {
        let cam = scaled_camera(camera, color.width, color.height);
        let frames = render_oracle_frames(&self.scene, &[cam]);
        let mut labels = frames.into_iter().next().unwrap().labels.unwrap();
        if self.corruption > 0.0 {
            let n_sem = self.scene.n_sem as u16;
            // Stream seeded per view so repeated queries corrupt identically.
            let view_key = view_id.map(|v| v as u64 + 1).unwrap_or_else(|| {
                let t = camera.pose.translation;
                t.x.to_bits() ^ t.y.to_bits().rotate_left(21) ^ t.z.to_bits().rotate_left(42)
            });
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ view_key.wrapping_mul(0x9E3779B97F4A7C15));
            for v in labels.data.iter_mut() {
                if *v == IGNORE_LABEL {
                    continue;
                }
                if rng.random_bool(self.corruption) {
                    let offset = rng.random_range(1..n_sem);
                    *v = (*v + offset) % n_sem;
                }
            }
        }
        Ok(labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_scene;

    #[test]
    fn mock_zero_corruption_reproduces_gt_labels() {
        let mut scene = generate_scene(6, "mock");
        scene.image_width = 40;
        scene.image_height = 32;
        let cam = &scene.cameras().unwrap()[0];
        let frames = render_oracle_frames(&scene, std::slice::from_ref(cam));
        let predictor = MockPredictor { scene: scene.clone(), corruption: 0.0, seed: 1 };
        let predicted = predictor.predict(Some(0), cam, &frames[0].color).unwrap();
        assert_eq!(&predicted, frames[0].labels.as_ref().unwrap());
    }

    #[test]
    fn mock_corruption_flips_about_the_requested_fraction() {
        let mut scene = generate_scene(6, "mock");
        scene.image_width = 64;
        scene.image_height = 48;
        let cam = &scene.cameras().unwrap()[0];
        let frames = render_oracle_frames(&scene, std::slice::from_ref(cam));
        let gt = frames[0].labels.as_ref().unwrap();
        let predictor = MockPredictor { scene: scene.clone(), corruption: 0.3, seed: 9 };
        let predicted = predictor.predict(Some(0), cam, &frames[0].color).unwrap();
        let mut valid = 0;
        let mut flipped = 0;
        for (a, b) in predicted.data.iter().zip(&gt.data) {
            if *b == IGNORE_LABEL {
                assert_eq!(a, b);
                continue;
            }
            valid += 1;
            if a != b {
                flipped += 1;
            }
        }
        let frac = flipped as f64 / valid as f64;
        assert!((0.25..0.35).contains(&frac), "flip fraction {frac}");
        // Deterministic per (seed, view).
        let again = predictor.predict(Some(0), cam, &frames[0].color).unwrap();
        assert_eq!(again, predicted);
    }
}
