//! Dense voxel-grid storage, world/grid transforms, and chunk extraction.
//!
//! A [`VoxelGrid`] holds four per-voxel fields: TSDF distance, fusion
//! weight, RGB color, and semantic logits. Voxel `(x, y, z)` samples the
//! scene at world position `origin + (x, y, z) * voxel_size`, stored
//! x-fastest. A voxel is *unknown* until some observation touches it;
//! unknown is encoded as `weight == 0` with a NaN distance, which keeps
//! "never seen" distinct from "observed empty" (`+truncation`).

mod marching_cubes;
mod mc_tables;

pub use marching_cubes::{marching_cubes, Mesh, MeshVertex};

use nalgebra::Vector3;

use crate::error::SemvoxError;
use crate::Result;

/// Geometry of a voxel lattice: placement, resolution, extents, TSDF band.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// World-space position of voxel (0,0,0), meters.
    pub origin: [f64; 3],
    /// Voxel edge length, meters.
    pub voxel_size: f64,
    /// Lattice extents (nx, ny, nz).
    pub dims: [usize; 3],
    /// TSDF clamp distance, meters.
    pub truncation: f64,
}

/// Default voxel resolution (2 cm).
pub const DEFAULT_VOXEL_SIZE: f64 = 0.02;

/// Default truncation band as a multiple of the voxel size. Three voxels is
/// the smallest band that still brackets a zero crossing for the renderer.
pub const TRUNCATION_FACTOR: f64 = 3.0;

impl GridSpec {
    pub fn new(origin: [f64; 3], voxel_size: f64, dims: [usize; 3], truncation: f64) -> Result<Self> {
        if !(voxel_size > 0.0) {
            return Err(SemvoxError::InvalidSpec(format!("voxel_size {voxel_size} must be > 0")));
        }
        if dims.iter().any(|&d| d < 1) {
            return Err(SemvoxError::InvalidSpec(format!("dims {dims:?} must all be >= 1")));
        }
        if truncation < voxel_size {
            return Err(SemvoxError::InvalidSpec(format!(
                "truncation {truncation} must be >= voxel_size {voxel_size}"
            )));
        }
        Ok(Self { origin, voxel_size, dims, truncation })
    }

    /// Spec with the default 3-voxel truncation band.
    pub fn with_default_truncation(origin: [f64; 3], voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        Self::new(origin, voxel_size, dims, TRUNCATION_FACTOR * voxel_size)
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Flat index, x-fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.dims[0]
            && (y as usize) < self.dims[1]
            && (z as usize) < self.dims[2]
    }

    /// World position of the voxel sample point.
    #[inline]
    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + x as f64 * self.voxel_size,
            self.origin[1] + y as f64 * self.voxel_size,
            self.origin[2] + z as f64 * self.voxel_size,
        )
    }

    /// Axis-aligned bounds of the sample lattice (min corner, max corner).
    pub fn lattice_bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let min = Vector3::new(self.origin[0], self.origin[1], self.origin[2]);
        let max = min
            + Vector3::new(
                (self.dims[0] - 1) as f64,
                (self.dims[1] - 1) as f64,
                (self.dims[2] - 1) as f64,
            ) * self.voxel_size;
        (min, max)
    }
}

/// Continuous grid coordinates of a world point: `(p - origin) / voxel_size`.
/// Out-of-bounds coordinates are returned as-is; callers bound-check.
#[inline]
pub fn world_to_grid(p: &Vector3<f64>, spec: &GridSpec) -> Vector3<f64> {
    Vector3::new(
        (p.x - spec.origin[0]) / spec.voxel_size,
        (p.y - spec.origin[1]) / spec.voxel_size,
        (p.z - spec.origin[2]) / spec.voxel_size,
    )
}

/// Inverse of [`world_to_grid`].
#[inline]
pub fn grid_to_world(g: &Vector3<f64>, spec: &GridSpec) -> Vector3<f64> {
    Vector3::new(
        spec.origin[0] + g.x * spec.voxel_size,
        spec.origin[1] + g.y * spec.voxel_size,
        spec.origin[2] + g.z * spec.voxel_size,
    )
}

/// Result of trilinear interpolation: the base cell, fractional offsets, and
/// the eight corner weights in `(dx, dy, dz)` bit order (`corner = base +
/// (i&1, (i>>1)&1, (i>>2)&1)`). Weights always sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrilinearStencil {
    pub base: [usize; 3],
    pub frac: [f64; 3],
}

impl TrilinearStencil {
    /// Stencil for continuous grid coordinates, or None when interpolation
    /// would read outside the lattice.
    pub fn at(g: &Vector3<f64>, dims: [usize; 3]) -> Option<Self> {
        let nd = [dims[0] as f64 - 1.0, dims[1] as f64 - 1.0, dims[2] as f64 - 1.0];
        if g.x < 0.0 || g.y < 0.0 || g.z < 0.0 || g.x > nd[0] || g.y > nd[1] || g.z > nd[2] {
            return None;
        }
        let clamp_base = |v: f64, n: usize| -> usize {
            // Cells run 0..n-2; coordinates exactly at the far face land in
            // the last cell with frac 1.
            (v.floor() as usize).min(n.saturating_sub(2))
        };
        let base = [clamp_base(g.x, dims[0]), clamp_base(g.y, dims[1]), clamp_base(g.z, dims[2])];
        let frac = [g.x - base[0] as f64, g.y - base[1] as f64, g.z - base[2] as f64];
        Some(Self { base, frac })
    }

    #[inline]
    pub fn corner(&self, i: usize) -> [usize; 3] {
        [
            self.base[0] + (i & 1),
            self.base[1] + ((i >> 1) & 1),
            self.base[2] + ((i >> 2) & 1),
        ]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        let wx = if i & 1 == 1 { self.frac[0] } else { 1.0 - self.frac[0] };
        let wy = if (i >> 1) & 1 == 1 { self.frac[1] } else { 1.0 - self.frac[1] };
        let wz = if (i >> 2) & 1 == 1 { self.frac[2] } else { 1.0 - self.frac[2] };
        wx * wy * wz
    }
}

/// Dense voxel volume with TSDF, weight, color, and semantic-logit fields.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    n_sem: usize,
    tsdf: Vec<f64>,
    weight: Vec<f64>,
    color: Vec<[f64; 3]>,
    sem_logits: Vec<f64>,
}

impl VoxelGrid {
    /// All-unknown grid.
    pub fn new(spec: GridSpec, n_sem: usize) -> Self {
        let n = spec.num_voxels();
        Self {
            spec,
            n_sem,
            tsdf: vec![f64::NAN; n],
            weight: vec![0.0; n],
            color: vec![[0.0; 3]; n],
            sem_logits: vec![0.0; n * n_sem],
        }
    }

    pub fn n_sem(&self) -> usize {
        self.n_sem
    }

    #[inline]
    pub fn is_known_idx(&self, idx: usize) -> bool {
        self.weight[idx] > 0.0
    }

    #[inline]
    pub fn is_known(&self, x: usize, y: usize, z: usize) -> bool {
        self.is_known_idx(self.spec.index(x, y, z))
    }

    /// TSDF value; None when unknown.
    #[inline]
    pub fn tsdf_at(&self, x: usize, y: usize, z: usize) -> Option<f64> {
        let i = self.spec.index(x, y, z);
        if self.weight[i] > 0.0 {
            Some(self.tsdf[i])
        } else {
            None
        }
    }

    #[inline]
    pub fn color_at(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        self.color[self.spec.index(x, y, z)]
    }

    #[inline]
    pub fn weight_at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.weight[self.spec.index(x, y, z)]
    }

    #[inline]
    pub fn logits_at(&self, x: usize, y: usize, z: usize) -> &[f64] {
        let i = self.spec.index(x, y, z);
        &self.sem_logits[i * self.n_sem..(i + 1) * self.n_sem]
    }

    /// Argmax class of a voxel's logits, ties toward the lowest index.
    pub fn label_at(&self, x: usize, y: usize, z: usize) -> u16 {
        let l = self.logits_at(x, y, z);
        let mut best = 0;
        for (c, &v) in l.iter().enumerate() {
            if v > l[best] {
                best = c;
            }
        }
        best as u16
    }

    /// Overwrite one voxel, marking it known.
    pub fn set_voxel(&mut self, x: usize, y: usize, z: usize, tsdf: f64, weight: f64, color: [f64; 3]) {
        let i = self.spec.index(x, y, z);
        self.tsdf[i] = tsdf;
        self.weight[i] = weight;
        self.color[i] = color;
    }

    /// Reset one voxel to unknown, zeroing every field.
    pub fn clear_voxel(&mut self, x: usize, y: usize, z: usize) {
        let i = self.spec.index(x, y, z);
        self.tsdf[i] = f64::NAN;
        self.weight[i] = 0.0;
        self.color[i] = [0.0; 3];
        for c in 0..self.n_sem {
            self.sem_logits[i * self.n_sem + c] = 0.0;
        }
    }

    pub fn set_logits(&mut self, x: usize, y: usize, z: usize, logits: &[f64]) {
        assert_eq!(logits.len(), self.n_sem);
        let i = self.spec.index(x, y, z);
        self.sem_logits[i * self.n_sem..(i + 1) * self.n_sem].copy_from_slice(logits);
    }

    /// Raw field access for I/O and bulk math.
    pub fn tsdf_raw(&self) -> &[f64] {
        &self.tsdf
    }
    pub fn weight_raw(&self) -> &[f64] {
        &self.weight
    }
    pub fn color_raw(&self) -> &[[f64; 3]] {
        &self.color
    }
    pub fn logits_raw(&self) -> &[f64] {
        &self.sem_logits
    }
    pub fn tsdf_raw_mut(&mut self) -> &mut [f64] {
        &mut self.tsdf
    }
    pub fn weight_raw_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }
    pub fn color_raw_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.color
    }
    pub fn logits_raw_mut(&mut self) -> &mut [f64] {
        &mut self.sem_logits
    }

    pub fn known_count(&self) -> usize {
        self.weight.iter().filter(|&&w| w > 0.0).count()
    }

    /// Voxels with a known distance inside the near-surface band
    /// `|tsdf| < eps`.
    pub fn surface_voxel(&self, x: usize, y: usize, z: usize, eps: f64) -> bool {
        match self.tsdf_at(x, y, z) {
            Some(d) => d.abs() < eps,
            None => false,
        }
    }

    /// Trilinear TSDF at continuous grid coordinates; None if out of bounds
    /// or any stencil corner is unknown.
    pub fn sample_tsdf(&self, g: &Vector3<f64>) -> Option<f64> {
        let st = TrilinearStencil::at(g, self.spec.dims)?;
        let mut acc = 0.0;
        for i in 0..8 {
            let [x, y, z] = st.corner(i);
            let idx = self.spec.index(x, y, z);
            if self.weight[idx] <= 0.0 {
                return None;
            }
            acc += st.weight(i) * self.tsdf[idx];
        }
        Some(acc)
    }

    /// Trilinear color; requires all corners known (same rule as TSDF).
    pub fn sample_color(&self, g: &Vector3<f64>) -> Option<[f64; 3]> {
        let st = TrilinearStencil::at(g, self.spec.dims)?;
        let mut acc = [0.0; 3];
        for i in 0..8 {
            let [x, y, z] = st.corner(i);
            let idx = self.spec.index(x, y, z);
            if self.weight[idx] <= 0.0 {
                return None;
            }
            let w = st.weight(i);
            let c = self.color[idx];
            acc[0] += w * c[0];
            acc[1] += w * c[1];
            acc[2] += w * c[2];
        }
        Some(acc)
    }
}

/// A subvolume copied out of a parent grid.
#[derive(Debug, Clone)]
pub struct Chunk {
    /// Voxel coordinates of this chunk's (0,0,0) in the parent grid.
    pub parent_offset: [usize; 3],
    pub grid: VoxelGrid,
}

/// Copies `chunk_dims`-sized subvolumes covering every voxel of `grid`.
/// Placements step by `stride`; chunks that would run past the boundary are
/// shifted back to end flush with the grid.
pub fn extract_chunks(grid: &VoxelGrid, chunk_dims: [usize; 3], stride: [usize; 3]) -> Result<Vec<Chunk>> {
    let dims = grid.spec.dims;
    if chunk_dims.iter().zip(&dims).any(|(&c, &d)| c > d) {
        return Err(SemvoxError::ChunkTooLarge { requested: chunk_dims, available: dims });
    }
    if stride.iter().any(|&s| s < 1) {
        return Err(SemvoxError::InvalidSpec(format!("stride {stride:?} must be >= 1")));
    }

    // Clamped start offsets along one axis.
    let offsets = |n: usize, c: usize, s: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut o = 0;
        loop {
            let clamped = o.min(n - c);
            if out.last() != Some(&clamped) {
                out.push(clamped);
            }
            if o >= n - c {
                break;
            }
            o += s;
        }
        out
    };

    let ox = offsets(dims[0], chunk_dims[0], stride[0]);
    let oy = offsets(dims[1], chunk_dims[1], stride[1]);
    let oz = offsets(dims[2], chunk_dims[2], stride[2]);

    let mut chunks = Vec::with_capacity(ox.len() * oy.len() * oz.len());
    for &z0 in &oz {
        for &y0 in &oy {
            for &x0 in &ox {
                chunks.push(copy_chunk(grid, [x0, y0, z0], chunk_dims));
            }
        }
    }
    Ok(chunks)
}

/// Copies one subvolume. The chunk spec inherits voxel size and truncation;
/// its origin is shifted so world positions still line up.
pub fn copy_chunk(grid: &VoxelGrid, offset: [usize; 3], chunk_dims: [usize; 3]) -> Chunk {
    let parent = &grid.spec;
    let origin = [
        parent.origin[0] + offset[0] as f64 * parent.voxel_size,
        parent.origin[1] + offset[1] as f64 * parent.voxel_size,
        parent.origin[2] + offset[2] as f64 * parent.voxel_size,
    ];
    let spec = GridSpec {
        origin,
        voxel_size: parent.voxel_size,
        dims: chunk_dims,
        truncation: parent.truncation,
    };
    let mut out = VoxelGrid::new(spec, grid.n_sem);
    for z in 0..chunk_dims[2] {
        for y in 0..chunk_dims[1] {
            for x in 0..chunk_dims[0] {
                let src = parent.index(offset[0] + x, offset[1] + y, offset[2] + z);
                let dst = out.spec.index(x, y, z);
                out.tsdf[dst] = grid.tsdf[src];
                out.weight[dst] = grid.weight[src];
                out.color[dst] = grid.color[src];
                let ns = grid.n_sem;
                out.sem_logits[dst * ns..(dst + 1) * ns]
                    .copy_from_slice(&grid.sem_logits[src * ns..(src + 1) * ns]);
            }
        }
    }
    Chunk { parent_offset: offset, grid: out }
}

/// Writes a chunk's fields back into the parent at its recorded offset.
pub fn paste_chunk(grid: &mut VoxelGrid, chunk: &Chunk) {
    let off = chunk.parent_offset;
    let dims = chunk.grid.spec.dims;
    let ns = grid.n_sem;
    assert_eq!(ns, chunk.grid.n_sem);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let src = chunk.grid.spec.index(x, y, z);
                let dst = grid.spec.index(off[0] + x, off[1] + y, off[2] + z);
                grid.tsdf[dst] = chunk.grid.tsdf[src];
                grid.weight[dst] = chunk.grid.weight[src];
                grid.color[dst] = chunk.grid.color[src];
                grid.sem_logits[dst * ns..(dst + 1) * ns]
                    .copy_from_slice(&chunk.grid.sem_logits[src * ns..(src + 1) * ns]);
            }
        }
    }
}
