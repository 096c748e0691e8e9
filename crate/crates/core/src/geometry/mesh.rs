use serde::{Deserialize, Serialize};

use super::{GeometryError, Pose, Vec3};

/// Barycentric slack that closes cracks along shared edges.
pub const BARYCENTRIC_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triangle {
    pub indices: [u32; 3],
    pub material_id: u32,
}

impl Triangle {
    pub fn new(a: u32, b: u32, c: u32, material_id: u32) -> Self {
        Self { indices: [a, b, c], material_id }
    }
}

/// Indexed triangle soup with a material id per triangle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<Triangle>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<Triangle>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        for (i, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.indices.iter().find(|&&k| k as usize >= n) {
                return Err(GeometryError::IndexOutOfRange { triangle: i, index: bad, vertices: n });
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFiniteVertex(i));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, triangle: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[triangle].indices;
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn area(&self, triangle: usize) -> f64 {
        let [a, b, c] = self.corners(triangle);
        0.5 * (b - a).cross(c - a).length()
    }

    pub fn is_degenerate(&self, triangle: usize) -> bool {
        let a = self.area(triangle);
        !(a > 0.0) || !a.is_finite()
    }

    /// Drops zero-area triangles, returning how many were removed.
    pub fn remove_degenerate(&mut self) -> usize {
        let before = self.triangles.len();
        let keep: Vec<bool> = (0..before).map(|i| !self.is_degenerate(i)).collect();
        let mut it = keep.iter();
        self.triangles.retain(|_| *it.next().unwrap());
        before - self.triangles.len()
    }

    /// Appends `other`, placed by `pose`, keeping its material ids.
    pub fn append(&mut self, other: &TriangleMesh, pose: &Pose) {
        let offset = self.vertices.len() as u32;
        self.vertices.extend(other.vertices.iter().map(|&v| pose.transform_point(v)));
        self.triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| Triangle { indices: t.indices.map(|k| k + offset), material_id: t.material_id }),
        );
    }

    pub fn set_material(&mut self, material_id: u32) {
        for t in &mut self.triangles {
            t.material_id = material_id;
        }
    }

    /// Applies `f` to every vertex.
    pub fn map_vertices(&mut self, f: impl Fn(Vec3) -> Vec3) {
        for v in &mut self.vertices {
            *v = f(*v);
        }
    }

    pub fn triangles_mut(&mut self) -> &mut [Triangle] {
        &mut self.triangles
    }
}

/// Möller–Trumbore ray/triangle test.
///
/// Returns `t` for a hit with `t_min < t <= t_max`. The barycentric test is
/// widened by [`BARYCENTRIC_EPSILON`] so rays through a shared edge hit at
/// least one of the two triangles.
#[inline]
pub fn intersect_triangle(
    origin: Vec3,
    dir: Vec3,
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
    t_min: f64,
    t_max: f64,
) -> Option<f64> {
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 * e1.length() * e2.length() || det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - v0;
    let u = s.dot(p) * inv;
    if !(-BARYCENTRIC_EPSILON..=1.0 + BARYCENTRIC_EPSILON).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < -BARYCENTRIC_EPSILON || u + v > 1.0 + BARYCENTRIC_EPSILON {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > t_min && t <= t_max).then_some(t)
}
