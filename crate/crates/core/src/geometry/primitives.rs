//! Procedural meshes for scene configs, tests and benchmarks.

use std::f64::consts::TAU;

use super::{Triangle, TriangleMesh, Vec3};

/// Axis-aligned box, 12 triangles.
pub fn box_mesh(min: Vec3, max: Vec3, material_id: u32) -> TriangleMesh {
    let c = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    let vertices = (0..8).map(c).collect();
    const QUADS: [[u32; 4]; 6] = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let triangles = QUADS
        .iter()
        .flat_map(|q| [Triangle::new(q[0], q[1], q[2], material_id), Triangle::new(q[0], q[2], q[3], material_id)])
        .collect();
    TriangleMesh::new(vertices, triangles).expect("box indices are valid")
}

/// Rectangle centred at `center`, spanned by `u * half_u` and `v * half_v`.
pub fn quad(center: Vec3, u: Vec3, v: Vec3, half_u: f64, half_v: f64, material_id: u32) -> TriangleMesh {
    let (u, v) = (u.normalize() * half_u, v.normalize() * half_v);
    let vertices = vec![center - u - v, center + u - v, center + u + v, center - u + v];
    TriangleMesh::new(vertices, vec![Triangle::new(0, 1, 2, material_id), Triangle::new(0, 2, 3, material_id)])
        .expect("quad indices are valid")
}

/// Square wall perpendicular to +x at distance `x`, extending `half` meters
/// in y and z.
pub fn wall_x(x: f64, half: f64, material_id: u32) -> TriangleMesh {
    quad(Vec3::new(x, 0.0, 0.0), Vec3::Y, Vec3::Z, half, half, material_id)
}

/// Open vertical cylinder around the z axis (side wall only), spanning
/// `z0..z1`.
pub fn cylinder(radius: f64, z0: f64, z1: f64, segments: u32, material_id: u32) -> TriangleMesh {
    let segments = segments.max(3);
    let mut vertices = Vec::with_capacity(2 * segments as usize);
    for k in 0..segments {
        let a = TAU * k as f64 / segments as f64;
        let (s, c) = a.sin_cos();
        vertices.push(Vec3::new(radius * c, radius * s, z0));
        vertices.push(Vec3::new(radius * c, radius * s, z1));
    }
    let mut triangles = Vec::with_capacity(2 * segments as usize);
    for k in 0..segments {
        let (b0, t0) = (2 * k, 2 * k + 1);
        let (b1, t1) = (2 * ((k + 1) % segments), 2 * ((k + 1) % segments) + 1);
        triangles.push(Triangle::new(b0, b1, t1, material_id));
        triangles.push(Triangle::new(b0, t1, t0, material_id));
    }
    TriangleMesh::new(vertices, triangles).expect("cylinder indices are valid")
}

/// Latitude/longitude sphere with `2 * slices * (stacks - 1)` triangles.
pub fn uv_sphere(center: Vec3, radius: f64, stacks: u32, slices: u32, material_id: u32) -> TriangleMesh {
    let stacks = stacks.max(2);
    let slices = slices.max(3);
    let mut vertices = vec![center + Vec3::Z * radius];
    for i in 1..stacks {
        let theta = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = TAU * j as f64 / slices as f64;
            vertices.push(center + Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * radius);
        }
    }
    vertices.push(center - Vec3::Z * radius);
    let bottom = vertices.len() as u32 - 1;
    let ring = |i: u32, j: u32| 1 + (i - 1) * slices + j % slices;

    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push(Triangle::new(0, ring(1, j), ring(1, j + 1), material_id));
        triangles.push(Triangle::new(bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j), material_id));
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            triangles.push(Triangle::new(ring(i, j), ring(i + 1, j), ring(i + 1, j + 1), material_id));
            triangles.push(Triangle::new(ring(i, j), ring(i + 1, j + 1), ring(i, j + 1), material_id));
        }
    }
    TriangleMesh::new(vertices, triangles).expect("sphere indices are valid")
}
