//! ASCII PLY meshes with per-vertex color and an integer `label` property.

use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::SemvoxError;
use crate::grid::{Mesh, MeshVertex};
use crate::Result;

pub fn write_ply(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    writeln!(w, "property uchar red")?;
    writeln!(w, "property uchar green")?;
    writeln!(w, "property uchar blue")?;
    writeln!(w, "property int label")?;
    writeln!(w, "element face {}", mesh.triangles.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for v in &mesh.vertices {
        let [r, g, b] = v.color.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8);
        writeln!(
            w,
            "{} {} {} {} {} {} {}",
            v.position.x, v.position.y, v.position.z, r, g, b, v.label
        )?;
    }
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    w.flush()?;
    Ok(())
}

fn err(detail: impl Into<String>) -> SemvoxError {
    SemvoxError::Format { format: "PLY", detail: detail.into() }
}

/// Reads meshes produced by [`write_ply`] (fixed property schema).
pub fn read_ply(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("element vertex ") {
            n_vertices = rest.trim().parse().map_err(|_| err("bad vertex count"))?;
        } else if let Some(rest) = line.strip_prefix("element face ") {
            n_faces = rest.trim().parse().map_err(|_| err("bad face count"))?;
        } else if line == "end_header" {
            break;
        }
    }
    let mut mesh = Mesh::default();
    for _ in 0..n_vertices {
        let line = lines.next().ok_or_else(|| err("truncated vertex list"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(err(format!("vertex line has {} fields", f.len())));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| err("bad float"));
        mesh.vertices.push(MeshVertex {
            position: Vector3::new(parse(f[0])?, parse(f[1])?, parse(f[2])?),
            color: [
                f[3].parse::<u8>().map_err(|_| err("bad color"))? as f64 / 255.0,
                f[4].parse::<u8>().map_err(|_| err("bad color"))? as f64 / 255.0,
                f[5].parse::<u8>().map_err(|_| err("bad color"))? as f64 / 255.0,
            ],
            label: f[6].parse::<i32>().map_err(|_| err("bad label"))? as u16,
        });
    }
    for _ in 0..n_faces {
        let line = lines.next().ok_or_else(|| err("truncated face list"))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 || f[0] != "3" {
            return Err(err("only triangles are supported"));
        }
        let parse = |s: &str| s.parse::<u32>().map_err(|_| err("bad index"));
        mesh.triangles.push([parse(f[1])?, parse(f[2])?, parse(f[3])?]);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_write_read_write_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = Mesh {
            vertices: vec![
                MeshVertex {
                    position: Vector3::new(0.015, 0.5, 1.0 / 3.0),
                    color: [0.2, 0.4, 0.9],
                    label: 3,
                },
                MeshVertex {
                    position: Vector3::new(-1.25, 0.0, 2.0),
                    color: [1.0, 0.0, 0.5],
                    label: 0,
                },
                MeshVertex {
                    position: Vector3::new(0.1, 0.2, 0.3),
                    color: [0.0, 0.0, 0.0],
                    label: 5,
                },
            ],
            triangles: vec![[0, 1, 2]],
        };
        let p1 = dir.path().join("a.ply");
        let p2 = dir.path().join("b.ply");
        write_ply(&p1, &mesh).unwrap();
        let back = read_ply(&p1).unwrap();
        assert_eq!(back.vertices.len(), 3);
        assert_eq!(back.triangles, mesh.triangles);
        write_ply(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
