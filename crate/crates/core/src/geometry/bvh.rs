//! Bounding volume hierarchy over a [`TriangleMesh`].
//!
//! Built top-down with a binned surface-area heuristic. When the heuristic
//! cannot separate a node (all centroids coincide, or no split beats the leaf
//! cost while the node is still too large) the node is split at the centroid
//! median instead.

use super::mesh::intersect_triangle;
use super::{GeometryError, TriangleMesh, Vec3};

const MAX_LEAF_SIZE: usize = 4;
const SAH_BINS: usize = 16;
const TRAVERSAL_COST: f64 = 1.0;
const INTERSECT_COST: f64 = 1.0;
/// Below this depth nodes always use the median split, bounding tree height.
const MAX_SAH_DEPTH: usize = 40;
const STACK_SIZE: usize = 96;

/// Endpoint slack for [`AccelIndex::occluded`], in meters.
pub const OCCLUSION_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.min(o.min), max: self.max.max(o.max) }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn surface_area(&self) -> f64 {
        let e = self.extent();
        if e.x < 0.0 {
            return 0.0;
        }
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    fn largest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    /// Slab test; returns the entry distance if the ray overlaps `[t_min, t_max]`.
    #[inline]
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for axis in 0..3 {
            let a = (self.min[axis] - origin[axis]) * inv_dir[axis];
            let b = (self.max[axis] - origin[axis]) * inv_dir[axis];
            // NaN (0 * inf) is discarded by f64::min / f64::max.
            let (near, far) = if a <= b { (a, b) } else { (b, a) };
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// Closest intersection returned by [`AccelIndex::intersect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance along the ray in meters.
    pub t: f64,
    pub point: Vec3,
    /// Unit geometric normal, flipped so that it faces the incoming ray.
    pub normal: Vec3,
    pub triangle_id: usize,
    pub material_id: u32,
}

#[derive(Debug, Clone, Copy)]
struct PackedTriangle {
    v0: Vec3,
    e1: Vec3,
    e2: Vec3,
    id: u32,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first packed triangle. Interior: index of the second child (the
    /// first child is always the next node).
    offset: u32,
    /// Triangle count for leaves, 0 for interior nodes.
    count: u32,
}

/// Immutable BVH answering closest-hit and any-hit queries. Safe to share
/// between threads.
#[derive(Debug, Clone)]
pub struct AccelIndex {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    tris: Vec<PackedTriangle>,
    normals: Vec<Vec3>,
}

struct BuildItem {
    bounds: Aabb,
    centroid: Vec3,
    id: u32,
}

impl AccelIndex {
    /// Builds the hierarchy. Zero-area triangles are left out of the index;
    /// a mesh with no usable triangle is an error.
    pub fn build(mesh: TriangleMesh) -> Result<Self, GeometryError> {
        let mut items: Vec<BuildItem> = (0..mesh.len())
            .filter(|&i| !mesh.is_degenerate(i))
            .map(|i| {
                let [a, b, c] = mesh.corners(i);
                let mut bounds = Aabb::EMPTY;
                bounds.grow(a);
                bounds.grow(b);
                bounds.grow(c);
                // Pad so hits accepted by the widened barycentric test still
                // land inside every enclosing box.
                let pad = 1e-6 * bounds.extent().length() + 1e-9;
                bounds.min = bounds.min - Vec3::splat(pad);
                bounds.max += Vec3::splat(pad);
                BuildItem { bounds, centroid: (a + b + c) / 3.0, id: i as u32 }
            })
            .collect();
        if items.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }

        let normals = (0..mesh.len())
            .map(|i| {
                let [a, b, c] = mesh.corners(i);
                (b - a).cross(c - a).normalize()
            })
            .collect();

        let mut nodes = Vec::with_capacity(2 * items.len());
        let n = items.len();
        build_recursive(&mut items, 0, n, 0, &mut nodes);

        let tris = items
            .iter()
            .map(|it| {
                let [a, b, c] = mesh.corners(it.id as usize);
                PackedTriangle { v0: a, e1: b - a, e2: c - a, id: it.id }
            })
            .collect();

        Ok(Self { mesh, nodes, tris, normals })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Closest hit with `t_min < t <= t_max`. Ties in `t` resolve to the
    /// lowest triangle id.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<RayHit> {
        let inv_dir = dir.recip();
        let mut best_t = t_max;
        let mut best_id = u32::MAX;
        let mut stack = [0u32; STACK_SIZE];
        let mut sp = 0usize;
        let mut node_idx = 0u32;

        self.nodes[0].bounds.hit(origin, inv_dir, t_min, best_t)?;
        loop {
            let node = &self.nodes[node_idx as usize];
            if node.count > 0 {
                let start = node.offset as usize;
                for tri in &self.tris[start..start + node.count as usize] {
                    if let Some(t) = intersect_triangle(origin, dir, tri.v0, tri.e1, tri.e2, t_min, best_t) {
                        if t < best_t || tri.id < best_id {
                            best_t = t;
                            best_id = tri.id;
                        }
                    }
                }
            } else {
                let left = node_idx + 1;
                let right = node.offset;
                let hl = self.nodes[left as usize].bounds.hit(origin, inv_dir, t_min, best_t);
                let hr = self.nodes[right as usize].bounds.hit(origin, inv_dir, t_min, best_t);
                match (hl, hr) {
                    (Some(a), Some(b)) => {
                        let (near, far) = if a <= b { (left, right) } else { (right, left) };
                        stack[sp] = far;
                        sp += 1;
                        node_idx = near;
                        continue;
                    }
                    (Some(_), None) => {
                        node_idx = left;
                        continue;
                    }
                    (None, Some(_)) => {
                        node_idx = right;
                        continue;
                    }
                    (None, None) => {}
                }
            }
            // Pop, re-checking against the (possibly shrunk) best distance.
            loop {
                if sp == 0 {
                    return self.make_hit(origin, dir, best_t, best_id);
                }
                sp -= 1;
                let candidate = stack[sp];
                if self.nodes[candidate as usize].bounds.hit(origin, inv_dir, t_min, best_t).is_some() {
                    node_idx = candidate;
                    break;
                }
            }
        }
    }

    fn make_hit(&self, origin: Vec3, dir: Vec3, t: f64, id: u32) -> Option<RayHit> {
        if id == u32::MAX {
            return None;
        }
        let mut normal = self.normals[id as usize];
        if normal.dot(dir) > 0.0 {
            normal = -normal;
        }
        Some(RayHit {
            t,
            point: origin + dir * t,
            normal,
            triangle_id: id as usize,
            material_id: self.mesh.triangles()[id as usize].material_id,
        })
    }

    /// Whether any triangle crosses the open segment `(a, b)`, ignoring
    /// [`OCCLUSION_EPSILON`] meters at either end.
    pub fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let len = d.length();
        if len <= 2.0 * OCCLUSION_EPSILON {
            return false;
        }
        let dir = d / len;
        self.any_hit(a, dir, OCCLUSION_EPSILON, len - OCCLUSION_EPSILON)
    }

    fn any_hit(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> bool {
        let inv_dir = dir.recip();
        let mut stack = [0u32; STACK_SIZE];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let idx = stack[sp];
            let node = &self.nodes[idx as usize];
            if node.bounds.hit(origin, inv_dir, t_min, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                if self.tris[start..start + node.count as usize]
                    .iter()
                    .any(|tri| intersect_triangle(origin, dir, tri.v0, tri.e1, tri.e2, t_min, t_max).is_some())
                {
                    return true;
                }
            } else {
                stack[sp] = idx + 1;
                stack[sp + 1] = node.offset;
                sp += 2;
            }
        }
        false
    }
}

fn build_recursive(items: &mut [BuildItem], start: usize, end: usize, depth: usize, nodes: &mut Vec<Node>) -> u32 {
    let slice = &mut items[start..end];
    let bounds = slice.iter().fold(Aabb::EMPTY, |acc, it| acc.union(&it.bounds));
    let node_idx = nodes.len() as u32;
    nodes.push(Node { bounds, offset: start as u32, count: (end - start) as u32 });

    let count = end - start;
    if count <= 1 {
        return node_idx;
    }

    let sah = if depth < MAX_SAH_DEPTH { sah_split(slice, &bounds) } else { None };
    let mid = match sah {
        Some(m) => start + m,
        None if count <= MAX_LEAF_SIZE => return node_idx,
        None => {
            let mut cb = Aabb::EMPTY;
            for it in slice.iter() {
                cb.grow(it.centroid);
            }
            let axis = cb.largest_axis();
            let half = count / 2;
            slice.select_nth_unstable_by(half, |a, b| {
                a.centroid[axis].total_cmp(&b.centroid[axis]).then(a.id.cmp(&b.id))
            });
            start + half
        }
    };

    build_recursive(items, start, mid, depth + 1, nodes);
    let right = build_recursive(items, mid, end, depth + 1, nodes);
    nodes[node_idx as usize].offset = right;
    nodes[node_idx as usize].count = 0;
    node_idx
}

/// Partitions `items` along the best binned-SAH plane; returns the split
/// position, or `None` when a leaf is cheaper or no plane separates them.
fn sah_split(items: &mut [BuildItem], bounds: &Aabb) -> Option<usize> {
    let mut cb = Aabb::EMPTY;
    for it in items.iter() {
        cb.grow(it.centroid);
    }
    let parent_area = bounds.surface_area();
    let leaf_cost = INTERSECT_COST * items.len() as f64;

    let mut best: Option<(f64, usize, usize)> = None; // (cost, axis, bin boundary)
    for axis in 0..3 {
        let lo = cb.min[axis];
        let extent = cb.max[axis] - lo;
        if !(extent > 0.0) {
            continue;
        }
        let scale = SAH_BINS as f64 / extent;
        let mut bin_bounds = [Aabb::EMPTY; SAH_BINS];
        let mut bin_counts = [0usize; SAH_BINS];
        for it in items.iter() {
            let b = (((it.centroid[axis] - lo) * scale) as usize).min(SAH_BINS - 1);
            bin_counts[b] += 1;
            bin_bounds[b] = bin_bounds[b].union(&it.bounds);
        }
        // Sweep from the right to get suffix areas.
        let mut right_area = [0.0; SAH_BINS];
        let mut right_count = [0usize; SAH_BINS];
        let mut acc = Aabb::EMPTY;
        let mut n = 0;
        for b in (1..SAH_BINS).rev() {
            acc = acc.union(&bin_bounds[b]);
            n += bin_counts[b];
            right_area[b] = acc.surface_area();
            right_count[b] = n;
        }
        let mut acc = Aabb::EMPTY;
        let mut n = 0;
        for b in 0..SAH_BINS - 1 {
            acc = acc.union(&bin_bounds[b]);
            n += bin_counts[b];
            let (nl, nr) = (n, right_count[b + 1]);
            if nl == 0 || nr == 0 {
                continue;
            }
            let cost = TRAVERSAL_COST
                + INTERSECT_COST * (acc.surface_area() * nl as f64 + right_area[b + 1] * nr as f64) / parent_area;
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, axis, b + 1));
            }
        }
    }

    let (cost, axis, boundary) = best?;
    if cost >= leaf_cost && items.len() <= MAX_LEAF_SIZE {
        return None;
    }
    let lo = cb.min[axis];
    let scale = SAH_BINS as f64 / (cb.max[axis] - lo);
    let mut i = 0;
    let mut j = items.len();
    while i < j {
        let b = (((items[i].centroid[axis] - lo) * scale) as usize).min(SAH_BINS - 1);
        if b < boundary {
            i += 1;
        } else {
            j -= 1;
            items.swap(i, j);
        }
    }
    (i > 0 && i < items.len()).then_some(i)
}
