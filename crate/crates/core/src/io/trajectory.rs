//! Text trajectories: one camera per line,
//! `id fx fy cx cy w h r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz`.

use nalgebra::{Matrix3, Vector3};

use crate::camera::{Camera, Intrinsics, Pose};
use crate::error::SemvoxError;
use crate::Result;

pub fn cameras_to_text(cams: &[(usize, &Camera)]) -> String {
    let mut out = String::new();
    for (id, cam) in cams {
        let i = &cam.intrinsics;
        let r = &cam.pose.rotation;
        let t = &cam.pose.translation;
        out.push_str(&format!(
            "{id} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {}\n",
            i.fx,
            i.fy,
            i.cx,
            i.cy,
            i.width,
            i.height,
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z
        ));
    }
    out
}

fn err(detail: impl Into<String>) -> SemvoxError {
    SemvoxError::Format { format: "trajectory", detail: detail.into() }
}

pub fn cameras_from_text(text: &str) -> Result<Vec<(usize, Camera)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 19 {
            return Err(err(format!("line {}: expected 19 fields, got {}", ln + 1, f.len())));
        }
        let pf = |s: &str| s.parse::<f64>().map_err(|_| err(format!("line {}: bad float {s}", ln + 1)));
        let id: usize = f[0].parse().map_err(|_| err(format!("line {}: bad id", ln + 1)))?;
        let intrinsics = Intrinsics::new(
            pf(f[1])?,
            pf(f[2])?,
            pf(f[3])?,
            pf(f[4])?,
            f[5].parse().map_err(|_| err("bad width"))?,
            f[6].parse().map_err(|_| err("bad height"))?,
        )?;
        let rotation = Matrix3::new(
            pf(f[7])?,
            pf(f[8])?,
            pf(f[9])?,
            pf(f[10])?,
            pf(f[11])?,
            pf(f[12])?,
            pf(f[13])?,
            pf(f[14])?,
            pf(f[15])?,
        );
        let translation = Vector3::new(pf(f[16])?, pf(f[17])?, pf(f[18])?);
        out.push((id, Camera { intrinsics, pose: Pose::new(rotation, translation)? }));
    }
    Ok(out)
}
