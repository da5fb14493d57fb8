//! Wavefront OBJ reader/writer, positions and triangular faces only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::mesh::TriMesh;

/// Load an OBJ file. Only `v` and `f` records are interpreted; `f`
/// entries may carry `/vt/vn` suffixes, which are ignored. Indices are
/// 1-based per the format; negative (relative) indices are rejected.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = BufReader::new(file);

    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| CoreError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| CoreError::parse(path, lineno, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| CoreError::parse(path, lineno, format!("bad coordinate '{tok}'")))?;
                }
                vertices.push(coords);
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(4);
                for tok in tokens {
                    // "7", "7/1" and "7/1/3" all name vertex 7.
                    let first = tok.split('/').next().unwrap_or(tok);
                    let i: i64 = first
                        .parse()
                        .map_err(|_| CoreError::parse(path, lineno, format!("bad face index '{tok}'")))?;
                    if i <= 0 {
                        return Err(CoreError::parse(
                            path,
                            lineno,
                            format!("face index {i} is not positive; OBJ indices are 1-based"),
                        ));
                    }
                    idx.push((i - 1) as u32);
                }
                if idx.len() != 3 {
                    return Err(CoreError::parse(
                        path,
                        lineno,
                        format!("only triangular faces are supported, got {} vertices", idx.len()),
                    ));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            // Ignore everything else (o, g, s, usemtl, vn, vt, ...).
            _ => {}
        }
    }

    TriMesh::new(vertices, faces)
}

/// Write an OBJ file with `v` and `f` records. Coordinates are printed
/// with 9 fractional digits, comfortably below the 1e-6 round-trip
/// budget at metre scale.
pub fn save_mesh(path: impl AsRef<Path>, mesh: &TriMesh) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        for v in mesh.vertices() {
            writeln!(w, "v {:.9} {:.9} {:.9}", v[0], v[1], v[2])?;
        }
        for f in mesh.faces() {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()
    };
    emit().map_err(|e| CoreError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_single_triangle() {
        let f = write_tmp("# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
        let mesh = load_mesh(f.path()).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.face_count(), 1);
        assert_eq!(mesh.faces()[0], [0, 1, 2]);
    }

    #[test]
    fn rejects_zero_index() {
        let f = write_tmp("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
        let err = load_mesh(f.path()).unwrap_err();
        match err {
            CoreError::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn rejects_degenerate_face_by_index() {
        let f = write_tmp("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\n");
        let err = load_mesh(f.path()).unwrap_err();
        assert!(matches!(err, CoreError::DegenerateFace { face: 1, .. }));
    }

    #[test]
    fn accepts_slash_face_syntax() {
        let f = write_tmp("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n");
        let mesh = load_mesh(f.path()).unwrap();
        assert_eq!(mesh.faces()[0], [0, 1, 2]);
    }

    #[test]
    fn round_trip_preserves_geometry() {
        let mesh = TriMesh::new(
            vec![
                [0.123456789, -4.5, 3.000000123],
                [1.0e-7, 0.25, -0.75],
                [10.5, 2.0, -3.25],
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        save_mesh(&p, &mesh).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(back.faces(), mesh.faces());
        for (a, b) in mesh.vertices().iter().zip(back.vertices()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1e-6, "{a:?} vs {b:?}");
            }
        }
    }
}
