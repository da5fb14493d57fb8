//! Linear garment deformation subspace: a mean shape plus an
//! orthonormal basis over flattened vertex offsets, fit by PCA over a
//! corpus of unposed meshes with shared topology.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::mesh::TriMesh;

#[derive(Debug, Clone)]
pub struct GarmentSubspace {
    /// Mean shape with the shared topology.
    template: TriMesh,
    /// Mode-major flattened basis, `modes x (3 * vertex_count)`;
    /// rows are orthonormal.
    basis: Vec<f64>,
    /// Per-mode standard deviation over the training corpus.
    mode_std: Vec<f64>,
}

impl GarmentSubspace {
    pub fn vertex_count(&self) -> usize {
        self.template.vertex_count()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_std.len()
    }

    pub fn dim(&self) -> usize {
        3 * self.vertex_count()
    }

    /// Mean shape (p = 0) with the shared face list.
    pub fn template(&self) -> &TriMesh {
        &self.template
    }

    pub fn mode(&self, m: usize) -> &[f64] {
        &self.basis[m * self.dim()..(m + 1) * self.dim()]
    }

    pub fn mode_std(&self) -> &[f64] {
        &self.mode_std
    }

    /// Mode std-dev floored away from zero so whitening stays finite on
    /// degenerate corpora.
    pub fn mode_std_floored(&self, m: usize) -> f64 {
        self.mode_std[m].max(1e-9)
    }

    /// mean + sum_m p_m * basis_m.
    pub fn decode(&self, latent: &[f64]) -> Vec<[f64; 3]> {
        assert_eq!(latent.len(), self.mode_count(), "latent length");
        let mut flat: Vec<f64> = Vec::with_capacity(self.dim());
        for v in self.template.vertices() {
            flat.extend_from_slice(v);
        }
        for (m, &p) in latent.iter().enumerate() {
            if p != 0.0 {
                for (f, b) in flat.iter_mut().zip(self.mode(m)) {
                    *f += p * b;
                }
            }
        }
        flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }

    pub fn decode_mesh(&self, latent: &[f64]) -> TriMesh {
        self.template
            .with_vertices(self.decode(latent))
            .expect("decode preserves vertex count")
    }

    /// Least-squares projection: basis^T (vertices - mean).
    pub fn encode(&self, vertices: &[[f64; 3]]) -> Result<Vec<f64>> {
        if vertices.len() != self.vertex_count() {
            return Err(CoreError::DimensionMismatch {
                expected: self.vertex_count(),
                actual: vertices.len(),
                context: "encode vertex buffer".into(),
            });
        }
        let mean = self.template.vertices();
        Ok((0..self.mode_count())
            .map(|m| {
                let basis = self.mode(m);
                let mut acc = 0.0;
                for (i, (v, mu)) in vertices.iter().zip(mean).enumerate() {
                    for k in 0..3 {
                        acc += basis[3 * i + k] * (v[k] - mu[k]);
                    }
                }
                acc
            })
            .collect())
    }

    /// Project a flattened adjoint d(loss)/d(vertices) onto the modes:
    /// the gradient of the decode map is the basis itself.
    pub fn project_gradient(&self, vertex_adjoint: &[[f64; 3]]) -> Vec<f64> {
        (0..self.mode_count())
            .map(|m| {
                let basis = self.mode(m);
                let mut acc = 0.0;
                for (i, g) in vertex_adjoint.iter().enumerate() {
                    for k in 0..3 {
                        acc += basis[3 * i + k] * g[k];
                    }
                }
                acc
            })
            .collect()
    }

    /// Max absolute row-orthonormality defect, for diagnostics/tests.
    pub fn orthonormality_defect(&self) -> f64 {
        let mc = self.mode_count();
        let mut worst: f64 = 0.0;
        for a in 0..mc {
            for b in a..mc {
                let dot: f64 = self.mode(a).iter().zip(self.mode(b)).map(|(x, y)| x * y).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// PCA-fit a subspace from a corpus of meshes with identical topology.
/// The stored per-mode std-dev is the singular value divided by
/// sqrt(n - 1). Mode signs are fixed so the first component of each
/// mode with magnitude above 1e-12 is positive.
pub fn fit_subspace(corpus: &[TriMesh], modes: usize) -> Result<GarmentSubspace> {
    if corpus.len() < modes + 1 {
        return Err(CoreError::CorpusTooSmall { needed: modes + 1, got: corpus.len() });
    }
    let first = &corpus[0];
    for (i, mesh) in corpus.iter().enumerate().skip(1) {
        if !mesh.same_topology(first) {
            return Err(CoreError::TopologyMismatch {
                context: format!("corpus mesh {i} does not match mesh 0"),
            });
        }
    }

    let n = corpus.len();
    let nv = first.vertex_count();
    let dim = 3 * nv;

    let mut mean = vec![[0.0f64; 3]; nv];
    for mesh in corpus {
        for (m, v) in mean.iter_mut().zip(mesh.vertices()) {
            for k in 0..3 {
                m[k] += v[k] / n as f64;
            }
        }
    }

    let mut centered = DMatrix::<f64>::zeros(n, dim);
    for (r, mesh) in corpus.iter().enumerate() {
        for (i, v) in mesh.vertices().iter().enumerate() {
            for k in 0..3 {
                centered[(r, 3 * i + k)] = v[k] - mean[i][k];
            }
        }
    }

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut basis = Vec::with_capacity(modes * dim);
    let mut mode_std = Vec::with_capacity(modes);
    for m in 0..modes {
        let mut row: Vec<f64> = (0..dim).map(|c| v_t[(m, c)]).collect();
        if let Some(first_nz) = row.iter().find(|x| x.abs() > 1e-12) {
            if *first_nz < 0.0 {
                for x in &mut row {
                    *x = -*x;
                }
            }
        }
        basis.extend(row);
        mode_std.push(svd.singular_values[m] / ((n - 1) as f64).sqrt());
    }

    let template = first.with_vertices(mean)?;
    Ok(GarmentSubspace { template, basis, mode_std })
}

const SUBSPACE_MAGIC: &[u8; 4] = b"GSUB";
const SUBSPACE_VERSION: u32 = 1;

/// Binary container: magic, version, counts (vertices, faces, modes),
/// face index triples (u32 LE), then f32 LE mean, basis and std-devs.
pub fn save_subspace(path: impl AsRef<Path>, sub: &GarmentSubspace) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        w.write_all(SUBSPACE_MAGIC)?;
        w.write_all(&SUBSPACE_VERSION.to_le_bytes())?;
        w.write_all(&(sub.vertex_count() as u32).to_le_bytes())?;
        w.write_all(&(sub.template.face_count() as u32).to_le_bytes())?;
        w.write_all(&(sub.mode_count() as u32).to_le_bytes())?;
        for f in sub.template.faces() {
            for &i in f {
                w.write_all(&i.to_le_bytes())?;
            }
        }
        for v in sub.template.vertices() {
            for &c in v {
                w.write_all(&(c as f32).to_le_bytes())?;
            }
        }
        for &b in &sub.basis {
            w.write_all(&(b as f32).to_le_bytes())?;
        }
        for &s in &sub.mode_std {
            w.write_all(&(s as f32).to_le_bytes())?;
        }
        w.flush()
    };
    emit().map_err(|e| CoreError::io(path, e))
}

pub fn load_subspace(path: impl AsRef<Path>) -> Result<GarmentSubspace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| CoreError::io(path, e))?;
    if &magic != SUBSPACE_MAGIC {
        return Err(CoreError::InvalidData { path: path.into(), message: "bad magic".into() });
    }
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32_buf).map_err(|e| CoreError::io(path, e))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = read_u32(&mut r)?;
    if version != SUBSPACE_VERSION {
        return Err(CoreError::InvalidData {
            path: path.into(),
            message: format!("unsupported version {version}"),
        });
    }
    let nv = read_u32(&mut r)? as usize;
    let nf = read_u32(&mut r)? as usize;
    let modes = read_u32(&mut r)? as usize;

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let mut f = [0u32; 3];
        for i in &mut f {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| CoreError::io(path, e))?;
            *i = u32::from_le_bytes(b);
        }
        faces.push(f);
    }

    let read_f32s = |r: &mut BufReader<File>, n: usize| -> Result<Vec<f64>> {
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw).map_err(|e| CoreError::io(path, e))?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    };
    let mean_flat = read_f32s(&mut r, nv * 3)?;
    let basis = read_f32s(&mut r, modes * nv * 3)?;
    let mode_std = read_f32s(&mut r, modes)?;

    let mean: Vec<[f64; 3]> = mean_flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let template = TriMesh::new(mean, faces)?;
    Ok(GarmentSubspace { template, basis, mode_std })
}
