//! ASCII Wavefront OBJ: `v` and `f` records only.

use std::fmt::Write as _;

use super::{DeformState, MeshError, TriMesh, Vec3};

/// Parses `v`/`f` records. Polygons are fan-triangulated; normals, texture
/// coordinates and every other record type are skipped.
pub fn load_obj(bytes: &[u8]) -> Result<TriMesh, MeshError> {
    let (positions, faces) = parse_obj(bytes)?;
    TriMesh::new(positions, faces)
}

/// Reads a deformed copy of `mesh`. Only the vertex count and, when the file
/// has faces, the connectivity must match; collapsed or inverted triangles
/// are accepted.
pub fn load_obj_state(mesh: &TriMesh, bytes: &[u8]) -> Result<DeformState, MeshError> {
    let (positions, faces) = parse_obj(bytes)?;
    if positions.len() != mesh.vertex_count() {
        return Err(MeshError::LengthMismatch { expected: mesh.vertex_count(), found: positions.len() });
    }
    if !faces.is_empty() && faces != mesh.faces() {
        return Err(MeshError::InvalidArgument("deformed OBJ has different faces than the rest mesh".into()));
    }
    Ok(DeformState { positions })
}

fn parse_obj(bytes: &[u8]) -> Result<(Vec<Vec3>, Vec<[usize; 3]>), MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Parse {
        line: line_of_offset(bytes, e.valid_up_to()),
        message: "not valid UTF-8 text".into(),
    })?;

    let mut positions = Vec::new();
    // (line number, 1-based or negative raw indices)
    let mut polygons: Vec<(usize, Vec<i64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| MeshError::Parse {
                        line,
                        message: format!("bad vertex coordinate: {e}"),
                    })?;
                if coords.len() != 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "vertex record needs three coordinates".into(),
                    });
                }
                if !coords.iter().all(|c| c.is_finite()) {
                    return Err(MeshError::Parse {
                        line,
                        message: "non-finite vertex coordinate".into(),
                    });
                }
                positions.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let indices: Vec<i64> = tokens
                    .map(|t| {
                        t.split('/')
                            .next()
                            .unwrap_or("")
                            .parse::<i64>()
                            .map_err(|e| MeshError::Parse {
                                line,
                                message: format!("bad face index {t:?}: {e}"),
                            })
                    })
                    .collect::<Result<_, _>>()?;
                if indices.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "face record needs at least three vertices".into(),
                    });
                }
                polygons.push((line, indices));
            }
            _ => {}
        }
    }

    let count = positions.len();
    let mut faces = Vec::new();
    for (line, poly) in polygons {
        let resolved: Vec<usize> = poly
            .iter()
            .map(|&raw| {
                // Negative indices count back from the end of the vertex list.
                let idx = if raw > 0 { raw - 1 } else { count as i64 + raw };
                if raw == 0 || idx < 0 || idx >= count as i64 {
                    Err(MeshError::Parse {
                        line,
                        message: format!("vertex index {raw} out of range (1..={count})"),
                    })
                } else {
                    Ok(idx as usize)
                }
            })
            .collect::<Result<_, _>>()?;
        for k in 1..resolved.len() - 1 {
            faces.push([resolved[0], resolved[k], resolved[k + 1]]);
        }
    }
    Ok((positions, faces))
}

fn line_of_offset(bytes: &[u8], offset: usize) -> usize {
    1 + bytes[..offset].iter().filter(|&&b| b == b'\n').count()
}

/// Writes `state` over the connectivity of `mesh`. Coordinates use Rust's
/// shortest round-trip formatting, so reloading is lossless.
pub fn save_obj(mesh: &TriMesh, state: &DeformState) -> Result<Vec<u8>, MeshError> {
    if state.len() != mesh.vertex_count() {
        return Err(MeshError::LengthMismatch {
            expected: mesh.vertex_count(),
            found: state.len(),
        });
    }
    let mut out = String::with_capacity(32 * (state.len() + mesh.face_count()));
    for (v, p) in state.positions.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(MeshError::NonFinite { vertex: v });
        }
        let _ = writeln!(out, "v {:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for [a, b, c] in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    Ok(out.into_bytes())
}
