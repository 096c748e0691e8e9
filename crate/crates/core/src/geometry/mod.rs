//! Triangle meshes, the BVH acceleration structure and ray queries.

mod bvh;
pub mod io;
mod mesh;
mod pose;
pub mod primitives;
mod vec3;

pub use bvh::{Aabb, AccelIndex, RayHit, OCCLUSION_EPSILON};
pub use mesh::{intersect_triangle, Triangle, TriangleMesh, BARYCENTRIC_EPSILON};
pub use pose::{Pose, Quat};
pub use vec3::Vec3;

/// Offset applied to `t_min` when spawning secondary rays from a surface.
pub const SELF_INTERSECTION_EPSILON: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("mesh has no non-degenerate triangles")]
    EmptyMesh,
    #[error("triangle {triangle} references vertex {index}, but the mesh has {vertices} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, vertices: usize },
    #[error("vertex {0} is not finite")]
    NonFiniteVertex(usize),
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("failed to load {path}: {reason}")]
    Load { path: String, reason: String },
}
