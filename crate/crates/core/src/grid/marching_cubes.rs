//! Isosurface extraction with per-vertex color and label, for inspection
//! exports of reconstructed scenes.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::mc_tables::{EDGE_CORNERS, TRIANGLE_TABLE};
use super::VoxelGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct MeshVertex {
    pub position: Vector3<f64>,
    pub color: [f64; 3],
    pub label: u16,
}

#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub vertices: Vec<MeshVertex>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

/// Extracts the zero isosurface of the TSDF. Vertices lie on linear zero
/// crossings along cell edges; color is interpolated between the edge's two
/// voxels and the label comes from the nearer voxel's argmax. Cells touching
/// any unknown voxel emit no triangles.
pub fn marching_cubes(grid: &VoxelGrid) -> Mesh {
    let dims = grid.spec.dims;
    let mut mesh = Mesh::default();
    if dims.iter().any(|&d| d < 2) {
        return mesh;
    }

    // Shared-vertex cache keyed by the lattice edge (lower corner, axis) so
    // neighboring cells reuse crossings and the mesh stays watertight.
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();

    let corner_offsets: [[usize; 3]; 8] = [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ];

    for z in 0..dims[2] - 1 {
        for y in 0..dims[1] - 1 {
            for x in 0..dims[0] - 1 {
                let mut values = [0.0f64; 8];
                let mut all_known = true;
                for (i, off) in corner_offsets.iter().enumerate() {
                    match grid.tsdf_at(x + off[0], y + off[1], z + off[2]) {
                        Some(d) => values[i] = d,
                        None => {
                            all_known = false;
                            break;
                        }
                    }
                }
                if !all_known {
                    continue;
                }

                let mut cube_index = 0usize;
                for (i, &v) in values.iter().enumerate() {
                    if v < 0.0 {
                        cube_index |= 1 << i;
                    }
                }
                if cube_index == 0 || cube_index == 255 {
                    continue;
                }

                let mut cell_edge_vertex = [u32::MAX; 12];
                let tri = &TRIANGLE_TABLE[cube_index];
                let mut needed = [false; 12];
                for &e in tri.iter().take_while(|&&e| e != -1) {
                    needed[e as usize] = true;
                }

                for (edge, need) in needed.iter().enumerate() {
                    if !need {
                        continue;
                    }
                    let [a, b] = EDGE_CORNERS[edge];
                    let ca = corner_offsets[a];
                    let cb = corner_offsets[b];
                    let pa = [x + ca[0], y + ca[1], z + ca[2]];
                    let pb = [x + cb[0], y + cb[1], z + cb[2]];
                    let key = edge_key(&grid.spec.dims, pa, pb);
                    if let Some(&idx) = edge_vertex.get(&key) {
                        cell_edge_vertex[edge] = idx;
                        continue;
                    }
                    let va = values[a];
                    let vb = values[b];
                    let t = if (vb - va).abs() < f64::MIN_POSITIVE {
                        0.5
                    } else {
                        (0.0 - va) / (vb - va)
                    };
                    let wa = grid.spec.voxel_center(pa[0], pa[1], pa[2]);
                    let wb = grid.spec.voxel_center(pb[0], pb[1], pb[2]);
                    let position = wa + (wb - wa) * t;
                    let col_a = grid.color_at(pa[0], pa[1], pa[2]);
                    let col_b = grid.color_at(pb[0], pb[1], pb[2]);
                    let color = [
                        col_a[0] + (col_b[0] - col_a[0]) * t,
                        col_a[1] + (col_b[1] - col_a[1]) * t,
                        col_a[2] + (col_b[2] - col_a[2]) * t,
                    ];
                    let label = if t < 0.5 {
                        grid.label_at(pa[0], pa[1], pa[2])
                    } else {
                        grid.label_at(pb[0], pb[1], pb[2])
                    };
                    let idx = mesh.vertices.len() as u32;
                    mesh.vertices.push(MeshVertex { position, color, label });
                    edge_vertex.insert(key, idx);
                    cell_edge_vertex[edge] = idx;
                }

                let mut i = 0;
                while i < tri.len() && tri[i] != -1 {
                    mesh.triangles.push([
                        cell_edge_vertex[tri[i] as usize],
                        cell_edge_vertex[tri[i + 1] as usize],
                        cell_edge_vertex[tri[i + 2] as usize],
                    ]);
                    i += 3;
                }
            }
        }
    }
    mesh
}

fn edge_key(dims: &[usize; 3], a: [usize; 3], b: [usize; 3]) -> (usize, u8) {
    let (lo, axis) = if a[0] != b[0] {
        (if a[0] < b[0] { a } else { b }, 0u8)
    } else if a[1] != b[1] {
        (if a[1] < b[1] { a } else { b }, 1u8)
    } else {
        (if a[2] < b[2] { a } else { b }, 2u8)
    };
    ((lo[2] * dims[1] + lo[1]) * dims[0] + lo[0], axis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn fill_sdf(grid: &mut VoxelGrid, sdf: impl Fn(Vector3<f64>) -> f64) {
        let dims = grid.spec.dims;
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let p = grid.spec.voxel_center(x, y, z);
                    grid.set_voxel(x, y, z, sdf(p), 1.0, [0.5; 3]);
                }
            }
        }
    }

    fn sphere_grid(negate: bool) -> VoxelGrid {
        let spec = GridSpec::new([-0.4, -0.4, -0.4], 0.02, [41, 41, 41], 1.0).unwrap();
        let mut g = VoxelGrid::new(spec, 0);
        let sign = if negate { -1.0 } else { 1.0 };
        // Center off the lattice so no sample is exactly zero (an exact
        // zero makes inside/outside classification asymmetric under
        // negation).
        let c = Vector3::new(1.3e-3, 0.7e-3, -0.4e-3);
        fill_sdf(&mut g, |p| sign * ((p - c).norm() - 0.3));
        g
    }

    #[test]
    fn sphere_vertices_near_radius() {
        let g = sphere_grid(false);
        let mesh = marching_cubes(&g);
        assert!(!mesh.is_empty());
        let c = Vector3::new(1.3e-3, 0.7e-3, -0.4e-3);
        let tol = g.spec.voxel_size / 2.0;
        let ok = mesh
            .vertices
            .iter()
            .filter(|v| ((v.position - c).norm() - 0.3).abs() < tol)
            .count();
        assert!(
            ok as f64 >= 0.99 * mesh.vertices.len() as f64,
            "{ok}/{} vertices within tolerance",
            mesh.vertices.len()
        );
    }

    #[test]
    fn all_positive_gives_empty_mesh() {
        let spec = GridSpec::new([0.0; 3], 0.02, [8, 8, 8], 1.0).unwrap();
        let mut g = VoxelGrid::new(spec, 0);
        fill_sdf(&mut g, |_| 0.05);
        assert!(marching_cubes(&g).is_empty());
    }

    #[test]
    fn plane_mesh_is_planar() {
        let spec = GridSpec::new([0.0, 0.0, 0.41], 0.02, [12, 12, 10], 1.0).unwrap();
        let mut g = VoxelGrid::new(spec, 0);
        fill_sdf(&mut g, |p| p.z - 0.5);
        let mesh = marching_cubes(&g);
        assert!(!mesh.is_empty());
        for v in &mesh.vertices {
            assert!((v.position.z - 0.5).abs() < 0.01, "vertex at z={}", v.position.z);
        }
    }

    #[test]
    fn negated_sdf_same_vertex_set() {
        let pos = marching_cubes(&sphere_grid(false));
        let neg = marching_cubes(&sphere_grid(true));
        assert_eq!(pos.vertices.len(), neg.vertices.len());
        let key = |v: &MeshVertex| {
            (
                v.position.x.to_bits(),
                v.position.y.to_bits(),
                v.position.z.to_bits(),
            )
        };
        let mut a: Vec<_> = pos.vertices.iter().map(key).collect();
        let mut b: Vec<_> = neg.vertices.iter().map(key).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_adjacent_cells_skipped() {
        let spec = GridSpec::new([0.0; 3], 0.02, [6, 6, 6], 1.0).unwrap();
        let mut g = VoxelGrid::new(spec, 0);
        fill_sdf(&mut g, |p| p.z - 0.05);
        // Knock out one voxel: the cells sharing it emit nothing, so the
        // crossing on the vertical edge through (3,3) disappears and the
        // mesh loses vertices relative to the intact grid.
        let full = marching_cubes(&g);
        g.clear_voxel(3, 3, 2);
        let mesh = marching_cubes(&g);
        assert!(mesh.vertices.len() < full.vertices.len());
        for v in &mesh.vertices {
            let gx = (v.position.x / 0.02).round() as i64;
            let gy = (v.position.y / 0.02).round() as i64;
            assert!(
                !(gx == 3 && gy == 3),
                "vertex {:?} uses the cleared voxel's edge",
                v.position
            );
        }
    }
}
