//! Exact k-d tree over fixed-dimension f64 points, dimension chosen at
//! runtime.
//!
//! Results are exact (no approximation) and deterministic: candidates are
//! ranked by (distance², point index), and subtree pruning only happens on
//! strictly greater plane distance, so equal-distance points are never
//! dropped arbitrarily.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// One search hit, ordered worst-first so a max-heap keeps the best
/// `capacity` candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Hit {
    dist2: f64,
    index: usize,
}

impl Eq for Hit {}

impl Ord for Hit {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.dist2, self.index)
            .partial_cmp(&(other.dist2, other.index))
            .expect("finite distances")
    }
}

impl PartialOrd for Hit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    point: u32,
    axis: u32,
    left: i32,
    right: i32,
}

#[derive(Debug, Clone)]
pub(crate) struct KdTree {
    dim: usize,
    data: Vec<f64>,
    nodes: Vec<Node>,
    root: i32,
}

impl KdTree {
    /// Builds a tree over `points`, each of length `dim`.
    pub(crate) fn build(dim: usize, points: &[Vec<f64>]) -> KdTree {
        assert!(dim > 0, "dimension must be positive");
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            assert_eq!(p.len(), dim, "point dimension mismatch");
            data.extend_from_slice(p);
        }
        let mut tree = KdTree {
            dim,
            data,
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        let mut indices: Vec<u32> = (0..points.len() as u32).collect();
        tree.root = tree.build_recursive(&mut indices, 0);
        tree
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }

    fn coord(&self, point: usize, axis: usize) -> f64 {
        self.data[point * self.dim + axis]
    }

    fn point(&self, point: usize) -> &[f64] {
        &self.data[point * self.dim..(point + 1) * self.dim]
    }

    fn build_recursive(&mut self, indices: &mut [u32], depth: usize) -> i32 {
        if indices.is_empty() {
            return -1;
        }
        let axis = depth % self.dim;
        // Sort by (coordinate, index) so the split is reproducible even
        // with duplicate coordinates.
        indices.sort_unstable_by(|&a, &b| {
            (self.coord(a as usize, axis), a)
                .partial_cmp(&(self.coord(b as usize, axis), b))
                .expect("finite coordinates")
        });
        let median = indices.len() / 2;
        let point = indices[median];
        let (left_slice, rest) = indices.split_at_mut(median);
        let right_slice = &mut rest[1..];
        let left = self.build_recursive(left_slice, depth + 1);
        let right = self.build_recursive(right_slice, depth + 1);
        self.nodes.push(Node {
            point,
            axis: axis as u32,
            left,
            right,
        });
        (self.nodes.len() - 1) as i32
    }

    /// The `count` nearest points to `query`, ascending by (distance,
    /// index). `exclude` removes one point (typically the query itself).
    pub(crate) fn nearest(
        &self,
        query: &[f64],
        count: usize,
        exclude: Option<usize>,
    ) -> Vec<(usize, f64)> {
        self.search(query, count, f64::INFINITY, exclude)
    }

    /// Up to `limit` nearest points within `radius` (inclusive) of `query`,
    /// ascending by (distance, index). Inclusion compares the reported
    /// distance (sqrt of the squared sum) against `radius`, so feeding a
    /// previously returned distance back as the radius keeps that point in.
    pub(crate) fn within_radius(
        &self,
        query: &[f64],
        radius: f64,
        limit: usize,
    ) -> Vec<(usize, f64)> {
        self.search(query, limit, radius, None)
    }

    fn search(
        &self,
        query: &[f64],
        capacity: usize,
        radius: f64,
        exclude: Option<usize>,
    ) -> Vec<(usize, f64)> {
        assert_eq!(query.len(), self.dim, "query dimension mismatch");
        if capacity == 0 || self.root < 0 {
            return Vec::new();
        }
        let reserve = capacity.saturating_add(1).min(self.nodes.len() + 1);
        let mut heap: BinaryHeap<Hit> = BinaryHeap::with_capacity(reserve);
        self.visit(self.root, query, capacity, radius, exclude, &mut heap);
        let mut hits: Vec<Hit> = heap.into_vec();
        hits.sort_unstable();
        hits.into_iter()
            .map(|h| (h.index, h.dist2.sqrt()))
            .collect()
    }

    fn visit(
        &self,
        node_id: i32,
        query: &[f64],
        capacity: usize,
        radius: f64,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Hit>,
    ) {
        let node = self.nodes[node_id as usize];
        let point = node.point as usize;
        let axis = node.axis as usize;

        if exclude != Some(point) {
            let dist2: f64 = self
                .point(point)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist2.sqrt() <= radius {
                let hit = Hit { dist2, index: point };
                if heap.len() < capacity {
                    heap.push(hit);
                } else if hit < *heap.peek().expect("non-empty at capacity") {
                    heap.push(hit);
                    heap.pop();
                }
            }
        }

        let diff = query[axis] - self.coord(point, axis);
        let (near, far) = if diff <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if near >= 0 {
            self.visit(near, query, capacity, radius, exclude, heap);
        }
        if far >= 0 {
            let worst = if heap.len() == capacity {
                heap.peek().expect("full heap").dist2
            } else {
                f64::INFINITY
            };
            // The axis gap lower-bounds any far-side distance. Prune only
            // on clear excess (tiny slack absorbs summation rounding) so
            // boundary ties are never dropped.
            let heap_allows = diff * diff <= worst * (1.0 + 1e-12);
            let radius_allows = diff.abs() <= radius;
            if heap_allows && radius_allows {
                self.visit(far, query, capacity, radius, exclude, heap);
            }
        }
    }
}
