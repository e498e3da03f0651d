//! VXG1 volume format.
//!
//! Little-endian layout: magic "VXG1", u32 dims x3, f64 origin x3,
//! f64 voxel_size, f64 truncation, u32 n_sem, then per-field blocks in
//! x-fastest voxel order: tsdf (f32, NaN = unknown), weight (f32), color
//! (3 x f32 per voxel), sem_logits (n_sem x f32 per voxel).

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::SemvoxError;
use crate::grid::{GridSpec, VoxelGrid};
use crate::Result;

const MAGIC: &[u8; 4] = b"VXG1";

pub fn write_vxg(path: &Path, grid: &VoxelGrid) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    for &d in &grid.spec.dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &o in &grid.spec.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&grid.spec.voxel_size.to_le_bytes())?;
    w.write_all(&grid.spec.truncation.to_le_bytes())?;
    w.write_all(&(grid.n_sem() as u32).to_le_bytes())?;

    for (i, &t) in grid.tsdf_raw().iter().enumerate() {
        let v = if grid.weight_raw()[i] > 0.0 { t as f32 } else { f32::NAN };
        w.write_all(&v.to_le_bytes())?;
    }
    for &wt in grid.weight_raw() {
        w.write_all(&(wt as f32).to_le_bytes())?;
    }
    for c in grid.color_raw() {
        for ch in 0..3 {
            w.write_all(&(c[ch] as f32).to_le_bytes())?;
        }
    }
    for &l in grid.logits_raw() {
        w.write_all(&(l as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(detail: &str) -> SemvoxError {
    SemvoxError::Format { format: "VXG1", detail: detail.to_string() }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub fn read_vxg(path: &Path) -> Result<VoxelGrid> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(io_err("bad magic"));
    }
    let dims = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
    let origin = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
    let voxel_size = read_f64(&mut r)?;
    let truncation = read_f64(&mut r)?;
    let n_sem = read_u32(&mut r)? as usize;
    let spec = GridSpec::new(origin, voxel_size, dims, truncation)?;
    let n = spec.num_voxels();
    if n == 0 || n > (1 << 31) {
        return Err(io_err("implausible voxel count"));
    }

    let mut grid = VoxelGrid::new(spec, n_sem);
    for i in 0..n {
        grid.tsdf_raw_mut()[i] = read_f32(&mut r)? as f64;
    }
    for i in 0..n {
        grid.weight_raw_mut()[i] = read_f32(&mut r)? as f64;
    }
    for i in 0..n {
        for ch in 0..3 {
            grid.color_raw_mut()[i][ch] = read_f32(&mut r)? as f64;
        }
    }
    for i in 0..n * n_sem {
        grid.logits_raw_mut()[i] = read_f32(&mut r)? as f64;
    }

    // Enforce the storage invariant: weight 0 <=> unknown (NaN tsdf).
    for i in 0..n {
        if grid.weight_raw()[i] <= 0.0 {
            grid.tsdf_raw_mut()[i] = f64::NAN;
            grid.weight_raw_mut()[i] = 0.0;
        } else if !grid.tsdf_raw()[i].is_finite() {
            return Err(io_err(&format!("voxel {i} has weight > 0 but non-finite tsdf")));
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vxg_write_read_write_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::with_default_truncation([0.1, -0.2, 0.3], 0.02, [7, 5, 3]).unwrap();
        let mut g = VoxelGrid::new(spec, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for z in 0..3 {
            for y in 0..5 {
                for x in 0..7 {
                    if rng.random_bool(0.8) {
                        g.set_voxel(
                            x,
                            y,
                            z,
                            rng.random_range(-0.06..0.06),
                            rng.random_range(1.0..5.0f64).floor(),
                            [rng.random(), rng.random(), rng.random()],
                        );
                        g.set_logits(x, y, z, &[rng.random(), rng.random(), rng.random(), rng.random()]);
                    }
                }
            }
        }
        let p1 = dir.path().join("a.vxg");
        let p2 = dir.path().join("b.vxg");
        write_vxg(&p1, &g).unwrap();
        let g2 = read_vxg(&p1).unwrap();
        write_vxg(&p2, &g2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(g.known_count(), g2.known_count());
    }
}
