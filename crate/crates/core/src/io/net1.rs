//! NET1 parameter checkpoints: magic "NET1", a JSON-encoded NetConfig
//! header, then the named f32 tensors in declaration order.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::SemvoxError;
use crate::net::{NetConfig, ParamTensor, Params};
use crate::Result;

const MAGIC: &[u8; 4] = b"NET1";

fn err(detail: impl Into<String>) -> SemvoxError {
    SemvoxError::Format { format: "NET1", detail: detail.into() }
}

pub fn write_net1(path: &Path, params: &Params) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    let header = serde_json::to_vec(params.cfg()).map_err(|e| err(e.to_string()))?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    w.write_all(&(params.entries().len() as u32).to_le_bytes())?;
    for e in params.entries() {
        let name = e.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&(e.shape.len() as u32).to_le_bytes())?;
        for &d in &e.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &e.data {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_net1(path: &Path) -> Result<Params> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(err("bad magic"));
    }
    let hlen = read_u32(&mut r)? as usize;
    let mut header = vec![0u8; hlen];
    r.read_exact(&mut header)?;
    let cfg: NetConfig = serde_json::from_slice(&header).map_err(|e| err(e.to_string()))?;
    let n_tensors = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let nlen = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; nlen];
        r.read_exact(&mut name)?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r)? as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            data.push(f32::from_le_bytes(b) as f64);
        }
        entries.push(ParamTensor {
            name: String::from_utf8(name).map_err(|_| err("tensor name is not UTF-8"))?,
            shape,
            data,
        });
    }
    // The entry list must match the config's declaration order.
    let expect = cfg.layer_specs();
    if expect.len() != entries.len()
        || expect
            .iter()
            .zip(&entries)
            .any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(err("tensor list does not match the config's layer plan"));
    }
    Ok(Params::from_entries(cfg, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_params;

    #[test]
    fn net1_write_read_write_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = NetConfig {
            chunk_dims: [8, 8, 8],
            base_channels: 2,
            levels: 1,
            code_channels: 4,
            n_sem: 3,
            depth_only: false,
            seed: 5,
        };
        let params = init_params(&cfg, 5).unwrap();
        let p1 = dir.path().join("a.net1");
        let p2 = dir.path().join("b.net1");
        write_net1(&p1, &params).unwrap();
        let back = read_net1(&p1).unwrap();
        assert_eq!(back.cfg(), &cfg);
        write_net1(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
