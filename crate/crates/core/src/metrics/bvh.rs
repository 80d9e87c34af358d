//! Exact nearest-point queries against a triangle surface.
//!
//! The distance kernel is the closest-point-on-triangle region
//! decomposition: classify the query against the triangle's Voronoi
//! regions (three vertices, three edges, interior) and project onto the
//! owning feature. Zero-area triangles have no interior, so they fall
//! back to the minimum over their three edges.
//!
//! For large surfaces the per-query scan is replaced by a bounding-volume
//! hierarchy over face boxes. The tree only prunes the search; every
//! candidate still goes through the same exact kernel, so both routes
//! return identical distances.

use nalgebra::Point3;

/// Closest point to `p` on the (non-degenerate) triangle `abc`.
pub(crate) fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + v * ab;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + w * ac;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Closest point to `p` on the segment `ab`.
fn closest_point_on_segment(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> Point3<f64> {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + t * ab
}

/// One reference face prepared for distance queries.
pub(crate) struct RefFace {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub c: Point3<f64>,
    /// Zero-area faces take the edge-minimum path instead of the region
    /// decomposition, whose barycentric denominators vanish.
    pub degenerate: bool,
}

impl RefFace {
    /// Squared distance from `p` to this face.
    pub(crate) fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        if self.degenerate {
            [
                closest_point_on_segment(p, &self.a, &self.b),
                closest_point_on_segment(p, &self.b, &self.c),
                closest_point_on_segment(p, &self.a, &self.c),
            ]
            .iter()
            .map(|q| (p - q).norm_squared())
            .fold(f64::INFINITY, f64::min)
        } else {
            let q = closest_point_on_triangle(p, &self.a, &self.b, &self.c);
            (p - q).norm_squared()
        }
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn of_face(f: &RefFace) -> Self {
        let mut min = f.a;
        let mut max = f.a;
        for q in [&f.b, &f.c] {
            for k in 0..3 {
                min[k] = min[k].min(q[k]);
                max[k] = max[k].max(q[k]);
            }
        }
        Self { min, max }
    }

    fn merge(&self, other: &Self) -> Self {
        let mut min = self.min;
        let mut max = self.max;
        for k in 0..3 {
            min[k] = min[k].min(other.min[k]);
            max[k] = max[k].max(other.max[k]);
        }
        Self { min, max }
    }

    /// Squared distance from `p` to the box; zero inside.
    fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let v = p[k].clamp(self.min[k], self.max[k]) - p[k];
            d2 += v * v;
        }
        d2
    }
}

enum NodeKind {
    /// Children as indices into the node arena.
    Internal { left: u32, right: u32 },
    /// Range into the reordered face-index buffer.
    Leaf { start: u32, end: u32 },
}

struct Node {
    aabb: Aabb,
    kind: NodeKind,
}

/// Faces per leaf; small enough to keep pruning effective, large enough
/// to amortize node overhead.
const LEAF_SIZE: usize = 8;

/// Binary AABB tree over face boxes, median-split on the widest axis of
/// the centroid bounds. Construction is deterministic: ties in centroid
/// order fall back to the face index.
pub(crate) struct Bvh {
    nodes: Vec<Node>,
    /// Face indices grouped so each leaf owns a contiguous range.
    order: Vec<u32>,
    root: u32,
}

impl Bvh {
    pub(crate) fn build(faces: &[RefFace]) -> Self {
        assert!(!faces.is_empty(), "BVH over an empty surface");
        let boxes: Vec<Aabb> = faces.iter().map(Aabb::of_face).collect();
        let centroids: Vec<Point3<f64>> = faces
            .iter()
            .map(|f| Point3::from((f.a.coords + f.b.coords + f.c.coords) / 3.0))
            .collect();
        let mut order: Vec<u32> = (0..faces.len() as u32).collect();
        let mut nodes = Vec::new();
        let n = order.len();
        let root = Self::build_range(&mut nodes, &mut order, 0, n, &boxes, &centroids);
        Self { nodes, order, root }
    }

    fn build_range(
        nodes: &mut Vec<Node>,
        order: &mut [u32],
        start: usize,
        end: usize,
        boxes: &[Aabb],
        centroids: &[Point3<f64>],
    ) -> u32 {
        let slice = &order[start..end];
        let aabb = slice
            .iter()
            .map(|&f| boxes[f as usize])
            .reduce(|a, b| a.merge(&b))
            .expect("non-empty range");

        if end - start <= LEAF_SIZE {
            nodes.push(Node {
                aabb,
                kind: NodeKind::Leaf {
                    start: start as u32,
                    end: end as u32,
                },
            });
            return (nodes.len() - 1) as u32;
        }

        // Widest axis of the centroid bounds separates best.
        let (cmin, cmax) = slice.iter().fold(
            (centroids[slice[0] as usize], centroids[slice[0] as usize]),
            |(mut lo, mut hi), &f| {
                for k in 0..3 {
                    lo[k] = lo[k].min(centroids[f as usize][k]);
                    hi[k] = hi[k].max(centroids[f as usize][k]);
                }
                (lo, hi)
            },
        );
        let extent = cmax - cmin;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };

        let mid = (end - start) / 2;
        order[start..end].select_nth_unstable_by(mid, |&x, &y| {
            centroids[x as usize][axis]
                .total_cmp(&centroids[y as usize][axis])
                .then(x.cmp(&y))
        });

        let left = Self::build_range(nodes, order, start, start + mid, boxes, centroids);
        let right = Self::build_range(nodes, order, start + mid, end, boxes, centroids);
        nodes.push(Node {
            aabb,
            kind: NodeKind::Internal { left, right },
        });
        (nodes.len() - 1) as u32
    }

    /// Squared distance from `p` to the nearest point of the surface.
    ///
    /// Branch-and-bound: descend the nearer child first and skip any
    /// subtree whose box is already farther than the best hit.
    pub(crate) fn distance_squared(&self, p: &Point3<f64>, faces: &[RefFace]) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![self.root];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if node.aabb.distance_squared(p) >= best {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &face in &self.order[start as usize..end as usize] {
                        best = best.min(faces[face as usize].distance_squared(p));
                    }
                }
                NodeKind::Internal { left, right } => {
                    let dl = self.nodes[left as usize].aabb.distance_squared(p);
                    let dr = self.nodes[right as usize].aabb.distance_squared(p);
                    // Push the farther child first so the nearer one is
                    // explored first and tightens `best` sooner.
                    if dl <= dr {
                        if dr < best {
                            stack.push(right);
                        }
                        if dl < best {
                            stack.push(left);
                        }
                    } else {
                        if dl < best {
                            stack.push(left);
                        }
                        if dr < best {
                            stack.push(right);
                        }
                    }
                }
            }
        }
        best
    }
}
