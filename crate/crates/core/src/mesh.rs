//! Indexed triangle meshes with shared topology.
//!
//! The garment and body geometry carrier. Vertex positions are metres.
//! Meshes that are meant to be combined per-vertex (frames of a sequence,
//! subspace modes, displacement fields) must share the same face list,
//! which is checked cheaply through a topology hash computed at
//! construction.

use nalgebra::Vector3;

use crate::error::{CoreError, Result};

pub(crate) fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[u32; 3]>,
    topology_id: u64,
}

fn hash_faces(faces: &[[u32; 3]]) -> u64 {
    // FNV-1a over the face index stream; order-sensitive on purpose.
    let mut h: u64 = 0xcbf29ce484222325;
    for f in faces {
        for &i in f {
            for b in i.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

impl TriMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            let [a, b, c] = [f[0] as usize, f[1] as usize, f[2] as usize];
            for &i in &[a, b, c] {
                if i >= n {
                    return Err(CoreError::FaceIndexOutOfRange {
                        face: fi,
                        index: i,
                        vertex_count: n,
                    });
                }
            }
            if a == b || b == c || a == c {
                return Err(CoreError::DegenerateFace { face: fi, a, b, c });
            }
        }
        let topology_id = hash_faces(&faces);
        Ok(TriMesh { vertices, faces, topology_id })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn topology_id(&self) -> u64 {
        self.topology_id
    }

    /// Same topology, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<[f64; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(CoreError::DimensionMismatch {
                expected: self.vertices.len(),
                actual: vertices.len(),
                context: "with_vertices".into(),
            });
        }
        Ok(TriMesh {
            vertices,
            faces: self.faces.clone(),
            topology_id: self.topology_id,
        })
    }

    pub fn same_topology(&self, other: &TriMesh) -> bool {
        self.topology_id == other.topology_id && self.vertices.len() == other.vertices.len()
    }

    /// Unnormalized face normals: cross(b - a, c - a). The magnitude is
    /// twice the face area, which is exactly the weight used when
    /// accumulating vertex normals.
    pub fn face_cross_products(&self) -> Vec<Vector3<f64>> {
        self.faces
            .iter()
            .map(|f| {
                let a = v3(self.vertices[f[0] as usize]);
                let b = v3(self.vertices[f[1] as usize]);
                let c = v3(self.vertices[f[2] as usize]);
                (b - a).cross(&(c - a))
            })
            .collect()
    }

    /// Per-vertex sum of incident unnormalized face normals (the
    /// quantity that gets normalized in [`TriMesh::vertex_normals`]).
    pub fn vertex_normal_sums(&self) -> Vec<Vector3<f64>> {
        let cross = self.face_cross_products();
        let mut sums = vec![Vector3::zeros(); self.vertices.len()];
        for (f, c) in self.faces.iter().zip(&cross) {
            sums[f[0] as usize] += c;
            sums[f[1] as usize] += c;
            sums[f[2] as usize] += c;
        }
        sums
    }

    /// Area-weighted vertex normals, unit length.
    pub fn vertex_normals(&self) -> Result<Vec<Vector3<f64>>> {
        let mut incident = vec![false; self.vertices.len()];
        for f in &self.faces {
            for &i in f {
                incident[i as usize] = true;
            }
        }
        let sums = self.vertex_normal_sums();
        sums.into_iter()
            .enumerate()
            .map(|(i, s)| {
                if !incident[i] {
                    return Err(CoreError::IsolatedVertex { vertex: i });
                }
                let len = s.norm();
                if len <= 1e-30 {
                    return Err(CoreError::TopologyMismatch {
                        context: format!("vertex {i}: incident face normals cancel"),
                    });
                }
                Ok(s / len)
            })
            .collect()
    }

    /// Unique undirected edges as sorted (lo, hi) index pairs, sorted
    /// lexicographically. Deterministic for a fixed face list.
    pub fn unique_edges(&self) -> Vec<(u32, u32)> {
        let mut edges = Vec::with_capacity(self.faces.len() * 3);
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Lengths of [`TriMesh::unique_edges`], in the same order.
    pub fn edge_lengths(&self) -> Vec<f64> {
        edge_lengths_of(&self.vertices, &self.unique_edges())
    }
}

/// Edge lengths of an arbitrary vertex buffer over a fixed edge list.
pub fn edge_lengths_of(vertices: &[[f64; 3]], edges: &[(u32, u32)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(a, b)| (v3(vertices[a as usize]) - v3(vertices[b as usize])).norm())
        .collect()
}
