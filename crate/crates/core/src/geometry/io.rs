//! OBJ and PLY (ASCII or binary) mesh ingestion.
//!
//! Files are split into named parts so the caller can bind materials per OBJ
//! object/group or per MTL material. Polygons are fan-triangulated.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};

use super::{GeometryError, Triangle, TriangleMesh, Vec3};

/// One named piece of a loaded mesh file. Material ids are all 0 until the
/// caller assigns them.
#[derive(Debug, Clone)]
pub struct MeshPart {
    /// OBJ object/group name, or the file stem for PLY.
    pub name: String,
    /// MTL material name from `usemtl`, when the MTL library was resolved.
    pub material: Option<String>,
    pub mesh: TriangleMesh,
}

/// Loads `.obj` or `.ply` by extension.
pub fn load_mesh_parts(path: &Path) -> Result<Vec<MeshPart>, GeometryError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).unwrap_or_default();
    match ext.as_str() {
        "obj" => load_obj(path),
        "ply" => load_ply(path).map(|mesh| {
            vec![MeshPart {
                name: path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string(),
                material: None,
                mesh,
            }]
        }),
        _ => Err(GeometryError::UnsupportedFormat(path.display().to_string())),
    }
}

pub fn load_obj(path: &Path) -> Result<Vec<MeshPart>, GeometryError> {
    let opts = tobj::LoadOptions { triangulate: true, single_index: false, ..Default::default() };
    let (models, materials) = tobj::load_obj(path, &opts)
        .map_err(|e| GeometryError::Load { path: path.display().to_string(), reason: e.to_string() })?;
    // A missing MTL library is not fatal: bindings then go by group name.
    let materials = materials.unwrap_or_default();

    models
        .into_iter()
        .map(|m| {
            let vertices: Vec<Vec3> =
                m.mesh.positions.chunks_exact(3).map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)).collect();
            let triangles = m.mesh.indices.chunks_exact(3).map(|t| Triangle::new(t[0], t[1], t[2], 0)).collect();
            let mut mesh = TriangleMesh::new(vertices, triangles)?;
            mesh.remove_degenerate();
            Ok(MeshPart {
                name: m.name,
                material: m.mesh.material_id.and_then(|i| materials.get(i)).map(|mat| mat.name.clone()),
                mesh,
            })
        })
        .collect()
}

pub fn load_ply(path: &Path) -> Result<TriangleMesh, GeometryError> {
    let load_err = |reason: String| GeometryError::Load { path: path.display().to_string(), reason };
    let file = File::open(path).map_err(|e| load_err(e.to_string()))?;
    let mut reader = BufReader::new(file);
    let ply = Parser::<DefaultElement>::new().read_ply(&mut reader).map_err(|e| load_err(e.to_string()))?;

    let scalar = |p: &Property| -> Option<f64> {
        Some(match *p {
            Property::Char(v) => v as f64,
            Property::UChar(v) => v as f64,
            Property::Short(v) => v as f64,
            Property::UShort(v) => v as f64,
            Property::Int(v) => v as f64,
            Property::UInt(v) => v as f64,
            Property::Float(v) => v as f64,
            Property::Double(v) => v,
            _ => return None,
        })
    };

    let vertex_elems = ply.payload.get("vertex").ok_or_else(|| load_err("no vertex element".into()))?;
    let mut vertices = Vec::with_capacity(vertex_elems.len());
    for (i, v) in vertex_elems.iter().enumerate() {
        let coord = |k: &str| {
            v.get(k).and_then(scalar).ok_or_else(|| load_err(format!("vertex {i} lacks scalar property '{k}'")))
        };
        vertices.push(Vec3::new(coord("x")?, coord("y")?, coord("z")?));
    }

    let mut triangles = Vec::new();
    if let Some(faces) = ply.payload.get("face") {
        for (i, f) in faces.iter().enumerate() {
            let list = f
                .get("vertex_indices")
                .or_else(|| f.get("vertex_index"))
                .ok_or_else(|| load_err(format!("face {i} lacks vertex_indices")))?;
            let idx: Vec<i64> = match list {
                Property::ListChar(l) => l.iter().map(|&x| x as i64).collect(),
                Property::ListUChar(l) => l.iter().map(|&x| x as i64).collect(),
                Property::ListShort(l) => l.iter().map(|&x| x as i64).collect(),
                Property::ListUShort(l) => l.iter().map(|&x| x as i64).collect(),
                Property::ListInt(l) => l.iter().map(|&x| x as i64).collect(),
                Property::ListUInt(l) => l.iter().map(|&x| x as i64).collect(),
                _ => return Err(load_err(format!("face {i} has non-integer indices"))),
            };
            if idx.iter().any(|&k| k < 0 || k > u32::MAX as i64) {
                return Err(load_err(format!("face {i} has a negative or oversized index")));
            }
            triangles.extend(fan_triangulate(&idx).map(|[a, b, c]| Triangle::new(a, b, c, 0)));
        }
    }
    let mut mesh = TriangleMesh::new(vertices, triangles)?;
    mesh.remove_degenerate();
    Ok(mesh)
}

fn fan_triangulate(poly: &[i64]) -> impl Iterator<Item = [u32; 3]> + '_ {
    (1..poly.len().saturating_sub(1)).map(move |k| [poly[0] as u32, poly[k] as u32, poly[k + 1] as u32])
}
