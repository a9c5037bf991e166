//! Point-to-surface queries.
//!
//! [`closest_point_brute_force`] scans every face and is the reference answer.
//! [`SurfaceLocator`] answers the same query through an AABB tree and must agree
//! with it exactly (same face ordering tie-break aside, same distance).

use super::mesh::{TriMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub distance: f64,
    pub point: Vec3,
    pub face_index: usize,
    pub barycentric: [f64; 3],
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5). Returns the point and its barycentric weights.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

fn face_query(mesh: &TriMesh, f: usize, p: &Vec3) -> ClosestPoint {
    let [a, b, c] = mesh.face_vertices(f);
    let (q, bary) = closest_point_on_triangle(p, &a, &b, &c);
    ClosestPoint {
        distance: (p - q).norm(),
        point: q,
        face_index: f,
        barycentric: bary,
    }
}

/// Exhaustive minimum over all faces.
pub fn closest_point_brute_force(mesh: &TriMesh, p: &Vec3) -> Result<ClosestPoint> {
    if mesh.is_empty() {
        return Err(Error::DegenerateGeometry("mesh has no faces".into()));
    }
    let mut best = face_query(mesh, 0, p);
    for f in 1..mesh.faces.len() {
        let q = face_query(mesh, f, p);
        if q.distance < best.distance {
            best = q;
        }
    }
    Ok(best)
}

/// Distance and closest point from `point` to `mesh`.
pub fn point_to_surface_distance(point: &Vec3, mesh: &TriMesh) -> Result<ClosestPoint> {
    SurfaceLocator::new(mesh)?.closest(point)
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.lo = self.lo.inf(&o.lo);
        self.hi = self.hi.sup(&o.hi);
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let e = if p[k] < self.lo[k] {
                self.lo[k] - p[k]
            } else if p[k] > self.hi[k] {
                p[k] - self.hi[k]
            } else {
                0.0
            };
            d += e * e;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 8;

/// AABB tree over a mesh's faces for closest-point queries.
#[derive(Debug, Clone)]
pub struct SurfaceLocator<'a> {
    mesh: &'a TriMesh,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> SurfaceLocator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no faces".into()));
        }
        let boxes: Vec<Aabb> = (0..mesh.faces.len())
            .map(|f| {
                let mut b = Aabb::empty();
                for v in mesh.face_vertices(f) {
                    b.grow(&v);
                }
                b
            })
            .collect();
        let centroids: Vec<Vec3> = boxes.iter().map(|b| (b.lo + b.hi) * 0.5).collect();
        let mut order: Vec<usize> = (0..mesh.faces.len()).collect();
        let mut nodes = Vec::new();
        build(&mut nodes, &mut order, 0, mesh.faces.len(), &boxes, &centroids);
        Ok(SurfaceLocator { mesh, order, nodes })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.mesh
    }

    pub fn closest(&self, p: &Vec3) -> Result<ClosestPoint> {
        let mut best: Option<ClosestPoint> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.bounds().dist2(p) > best_d2 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[start..end] {
                        let q = face_query(self.mesh, f, p);
                        let d2 = q.distance * q.distance;
                        let better = match &best {
                            None => true,
                            // Ties resolve to the lower face index, as in the brute-force scan.
                            Some(b) => q.distance < b.distance || (q.distance == b.distance && f < b.face_index),
                        };
                        if better {
                            best = Some(q);
                            best_d2 = d2;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().dist2(p);
                    let dr = self.nodes[right].bounds().dist2(p);
                    if dl < dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best.ok_or_else(|| Error::DegenerateGeometry("empty locator".into()))
    }
}

fn build(
    nodes: &mut Vec<Node>,
    order: &mut [usize],
    start: usize,
    end: usize,
    boxes: &[Aabb],
    centroids: &[Vec3],
) -> usize {
    let mut bounds = Aabb::empty();
    for &f in &order[start..end] {
        bounds.merge(&boxes[f]);
    }
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    nodes.push(Node::Leaf { bounds, start, end });
    let ext = bounds.hi - bounds.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis])
    });
    let left = build(nodes, order, start, mid, boxes, centroids);
    let right = build(nodes, order, mid, end, boxes, centroids);
    nodes[id] = Node::Inner { bounds, left, right };
    id
}

/// Nearest-neighbour queries over a point set (balanced k-d tree stored in place).
#[derive(Debug, Clone)]
pub struct PointLocator {
    points: Vec<(Vec3, usize)>,
}

const POINT_LEAF: usize = 8;

fn build_points(pts: &mut [(Vec3, usize)], depth: usize) {
    if pts.len() <= POINT_LEAF {
        return;
    }
    let axis = depth % 3;
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    let (lo, rest) = pts.split_at_mut(mid);
    build_points(lo, depth + 1);
    build_points(&mut rest[1..], depth + 1);
}

impl PointLocator {
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::DegenerateGeometry("point set is empty".into()));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::DegenerateGeometry("point set has non-finite coordinates".into()));
        }
        let mut pts: Vec<(Vec3, usize)> = points.iter().copied().zip(0..).collect();
        build_points(&mut pts, 0);
        Ok(PointLocator { points: pts })
    }

    /// Index of and squared distance to the nearest point; ties go to the lower index.
    pub fn nearest(&self, p: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(&self.points, 0, p, &mut best);
        best
    }

    fn search(&self, pts: &[(Vec3, usize)], depth: usize, p: &Vec3, best: &mut (usize, f64)) {
        let mut consider = |q: &(Vec3, usize)| {
            let d = (q.0 - p).norm_squared();
            if d < best.1 || (d == best.1 && q.1 < best.0) {
                *best = (q.1, d);
            }
        };
        if pts.len() <= POINT_LEAF {
            pts.iter().for_each(consider);
            return;
        }
        let axis = depth % 3;
        let mid = pts.len() / 2;
        consider(&pts[mid]);
        let diff = p[axis] - pts[mid].0[axis];
        let (near, far) = if diff < 0.0 {
            (&pts[..mid], &pts[mid + 1..])
        } else {
            (&pts[mid + 1..], &pts[..mid])
        };
        self.search(near, depth + 1, p, best);
        if diff * diff <= best.1 {
            self.search(far, depth + 1, p, best);
        }
    }
}
