//! Posed-RGB-D dataset directories:
//!
//! ```text
//! ds/
//!   scene.json       grid spec, n_sem, class names
//!   cam/0000.txt     one trajectory line per frame
//!   depth/0000.pfm   f32 depth, invalid < 0
//!   color/0000.ppm
//!   label/0000.pgm   16-bit labels (optional; 65535 = ignore)
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SemvoxError;
use crate::fusion::Frame;
use crate::grid::GridSpec;
use crate::synth::SceneSpec;
use crate::Result;

use super::images::{read_pfm, read_pgm16, read_ppm, write_pfm, write_pgm16, write_ppm};
use super::trajectory::{cameras_from_text, cameras_to_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub grid: GridSpec,
    pub n_sem: usize,
    pub class_names: Vec<String>,
}

/// An ingested dataset: the grid layout, taxonomy, frames, and (for
/// synthetic data) the generating scene for oracle supervision.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: SceneManifest,
    pub frames: Vec<Frame>,
    pub scene: Option<SceneSpec>,
}

pub fn write_dataset(dir: &Path, manifest: &SceneManifest, frames: &[Frame]) -> Result<()> {
    std::fs::create_dir_all(dir.join("cam"))?;
    std::fs::create_dir_all(dir.join("depth"))?;
    std::fs::create_dir_all(dir.join("color"))?;
    let any_labels = frames.iter().any(|f| f.labels.is_some());
    if any_labels {
        std::fs::create_dir_all(dir.join("label"))?;
    }
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| SemvoxError::Format { format: "scene.json", detail: e.to_string() })?;
    std::fs::write(dir.join("scene.json"), json + "\n")?;
    for (i, frame) in frames.iter().enumerate() {
        frame.validate()?;
        let stem = format!("{i:04}");
        std::fs::write(
            dir.join("cam").join(format!("{stem}.txt")),
            cameras_to_text(&[(i, &frame.camera)]),
        )?;
        write_pfm(&dir.join("depth").join(format!("{stem}.pfm")), &frame.depth)?;
        write_ppm(&dir.join("color").join(format!("{stem}.ppm")), &frame.color)?;
        if let Some(labels) = &frame.labels {
            write_pgm16(&dir.join("label").join(format!("{stem}.pgm")), labels)?;
        }
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let json = std::fs::read_to_string(dir.join("scene.json"))?;
    let manifest: SceneManifest = serde_json::from_str(&json)
        .map_err(|e| SemvoxError::Format { format: "scene.json", detail: e.to_string() })?;

    let mut frames = Vec::new();
    let mut i = 0usize;
    loop {
        let stem = format!("{i:04}");
        let cam_path = dir.join("cam").join(format!("{stem}.txt"));
        if !cam_path.exists() {
            break;
        }
        let cams = cameras_from_text(&std::fs::read_to_string(&cam_path)?)?;
        let camera = cams
            .into_iter()
            .next()
            .ok_or_else(|| SemvoxError::Format {
                format: "trajectory",
                detail: format!("{} has no camera line", cam_path.display()),
            })?
            .1;
        let mut depth = read_pfm(&dir.join("depth").join(format!("{stem}.pfm")))?;
        // PFM invalid pixels come back as NaN; frames use the 0 = invalid
        // convention, either works through Frame::depth_valid.
        for v in depth.data.iter_mut() {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        let color = read_ppm(&dir.join("color").join(format!("{stem}.ppm")))?;
        let label_path = dir.join("label").join(format!("{stem}.pgm"));
        let labels = if label_path.exists() { Some(read_pgm16(&label_path)?) } else { None };
        let frame = Frame { camera, depth, color, labels };
        frame.validate()?;
        frames.push(frame);
        i += 1;
    }

    // Optional scene manifest for oracle-backed supervision.
    let scene_path = dir.join("scene.txt");
    let scene = if scene_path.exists() {
        Some(super::scene_text::read_scene_text(&std::fs::read_to_string(scene_path)?)?)
    } else {
        None
    };
    Ok(Dataset { manifest, frames, scene })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{bake_gt_grid, generate_scene, render_oracle_frames, BENCH_CLASS_NAMES};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = generate_scene(4, "ds");
        scene.image_width = 32;
        scene.image_height = 24;
        let cams = scene.cameras().unwrap();
        let frames = render_oracle_frames(&scene, &cams[..3]);
        let manifest = SceneManifest {
            grid: scene.grid_spec(0.02).unwrap(),
            n_sem: scene.n_sem,
            class_names: BENCH_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        };
        write_dataset(dir.path(), &manifest, &frames).unwrap();
        std::fs::write(dir.path().join("scene.txt"), super::super::scene_to_text(&scene)).unwrap();

        let ds = read_dataset(dir.path()).unwrap();
        assert_eq!(ds.manifest, manifest);
        assert_eq!(ds.frames.len(), 3);
        assert_eq!(ds.scene.as_ref().unwrap(), &scene);
        // Depth survives the f32 file format to within f32 precision.
        for (a, b) in ds.frames[0].depth.data.iter().zip(&frames[0].depth.data) {
            assert!((a - b).abs() < 1e-6);
        }
        let _ = bake_gt_grid(&scene, &manifest.grid);
    }
}
