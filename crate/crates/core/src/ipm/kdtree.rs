//! Static k-d tree over a point set with a refreshable per-point value and
//! per-node value maxima, for bounded searches of the form `dist(x, p) - value_p`.

use crate::sampling::PointSet;

const LEAF: usize = 8;
const NO_CHILD: usize = usize::MAX;

struct Node {
    start: usize,
    end: usize,
    left: usize,
    right: usize,
}

pub struct KdTree {
    dim: usize,
    /// coordinates in tree order
    coords: Vec<f64>,
    /// tree order -> original index
    perm: Vec<usize>,
    nodes: Vec<Node>,
    /// per node: lower corner then upper corner
    bounds: Vec<f64>,
    /// values in tree order
    values: Vec<f64>,
    node_max: Vec<f64>,
}

impl KdTree {
    pub fn new(points: &PointSet) -> Self {
        let dim = points.dim();
        let n = points.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        let mut bounds = Vec::new();
        if n > 0 {
            build(points, &mut perm, 0, n, &mut nodes, &mut bounds);
        }
        let mut coords = Vec::with_capacity(n * dim);
        for &i in &perm {
            coords.extend_from_slice(points.row(i));
        }
        let count = nodes.len();
        Self { dim, coords, perm, nodes, bounds, values: vec![0.0; n], node_max: vec![0.0; count] }
    }

    /// Installs per-point values, indexed by original point index.
    pub fn set_values(&mut self, values: &[f64]) {
        for (slot, &i) in self.perm.iter().enumerate() {
            self.values[slot] = values[i];
        }
        // children follow their parent in preorder
        for k in (0..self.nodes.len()).rev() {
            let node = &self.nodes[k];
            self.node_max[k] = if node.left == NO_CHILD {
                self.values[node.start..node.end].iter().copied().fold(f64::NEG_INFINITY, f64::max)
            } else {
                self.node_max[node.left].max(self.node_max[node.right])
            };
        }
    }

    fn min_dist(&self, node: usize, x: &[f64]) -> f64 {
        let lo = &self.bounds[2 * self.dim * node..(2 * node + 1) * self.dim];
        let hi = &self.bounds[(2 * node + 1) * self.dim..(2 * node + 2) * self.dim];
        let mut sq = 0.0;
        for k in 0..self.dim {
            let gap = (lo[k] - x[k]).max(x[k] - hi[k]).max(0.0);
            sq += gap * gap;
        }
        sq.sqrt()
    }

    fn point(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Calls `f(index, dist)` for every point with `dist(x, p) < offset + value_p`.
    pub fn for_each_below<F: FnMut(usize, f64)>(&self, x: &[f64], offset: f64, mut f: F) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(k) = stack.pop() {
            let limit = offset + self.node_max[k];
            if limit <= 0.0 || self.min_dist(k, x) >= limit {
                continue;
            }
            let node = &self.nodes[k];
            if node.left == NO_CHILD {
                for slot in node.start..node.end {
                    let bound = offset + self.values[slot];
                    if bound <= 0.0 {
                        continue;
                    }
                    let sq = sq_dist(x, self.point(slot));
                    if sq < bound * bound {
                        f(self.perm[slot], sq.sqrt());
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
    }

    /// `min_p dist(x, p) - value_p` with its minimizer (lowest index on ties).
    pub fn argmin_shifted(&self, x: &[f64]) -> (f64, usize, f64) {
        let mut best = (f64::INFINITY, usize::MAX, 0.0);
        let mut stack = vec![(0usize, f64::NEG_INFINITY)];
        while let Some((k, lb)) = stack.pop() {
            if lb > best.0 {
                continue;
            }
            let node = &self.nodes[k];
            if node.left == NO_CHILD {
                for slot in node.start..node.end {
                    let d = sq_dist(x, self.point(slot)).sqrt();
                    let r = d - self.values[slot];
                    let i = self.perm[slot];
                    if r < best.0 || (r == best.0 && i < best.1) {
                        best = (r, i, d);
                    }
                }
            } else {
                let bl = self.min_dist(node.left, x) - self.node_max[node.left];
                let br = self.min_dist(node.right, x) - self.node_max[node.right];
                // visit the more promising child first
                if bl <= br {
                    stack.push((node.right, br));
                    stack.push((node.left, bl));
                } else {
                    stack.push((node.left, bl));
                    stack.push((node.right, br));
                }
            }
        }
        best
    }

    /// The `k` nearest points as `(dist, index)`, unordered.
    pub fn k_nearest(&self, x: &[f64], k: usize, out: &mut Vec<(f64, usize)>) {
        out.clear();
        if k == 0 || self.nodes.is_empty() {
            return;
        }
        // max-heap on squared distance
        let mut heap: std::collections::BinaryHeap<(OrdF64, usize)> = std::collections::BinaryHeap::new();
        let mut stack = vec![(0usize, 0.0f64)];
        while let Some((node_idx, lb)) = stack.pop() {
            if heap.len() == k && lb >= heap.peek().unwrap().0 .0 {
                continue;
            }
            let node = &self.nodes[node_idx];
            if node.left == NO_CHILD {
                for slot in node.start..node.end {
                    let sq = sq_dist(x, self.point(slot));
                    let item = (OrdF64(sq), self.perm[slot]);
                    if heap.len() < k {
                        heap.push(item);
                    } else if item < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(item);
                    }
                }
            } else {
                let dl = self.min_dist(node.left, x).powi(2);
                let dr = self.min_dist(node.right, x).powi(2);
                if dl <= dr {
                    stack.push((node.right, dr));
                    stack.push((node.left, dl));
                } else {
                    stack.push((node.left, dl));
                    stack.push((node.right, dr));
                }
            }
        }
        out.extend(heap.into_iter().map(|(d, i)| (d.0.sqrt(), i)));
    }
}

#[derive(Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn build(points: &PointSet, perm: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>, bounds: &mut Vec<f64>) -> usize {
    let dim = points.dim();
    let idx = nodes.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in &perm[start..end] {
        for (k, &c) in points.row(i).iter().enumerate() {
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }
    bounds.extend_from_slice(&lo);
    bounds.extend_from_slice(&hi);
    nodes.push(Node { start, end, left: NO_CHILD, right: NO_CHILD });
    if end - start > LEAF {
        let axis = (0..dim).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = (end - start) / 2;
        perm[start..end].select_nth_unstable_by(mid, |&p, &q| {
            points.row(p)[axis].total_cmp(&points.row(q)[axis]).then(p.cmp(&q))
        });
        let left = build(points, perm, start, start + mid, nodes, bounds);
        let right = build(points, perm, start + mid, end, nodes, bounds);
        nodes[idx].left = left;
        nodes[idx].right = right;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{euclidean, sample_latent, Purpose, SeedPolicy};

    fn cloud(n: usize, d: usize, seed: u64) -> PointSet {
        sample_latent(n, d, &mut SeedPolicy::new(seed).stream(0, Purpose::Probe)).unwrap()
    }

    #[test]
    fn nearest_neighbours_match_brute_force() {
        let pts = cloud(500, 3, 1);
        let queries = cloud(40, 3, 2);
        let tree = KdTree::new(&pts);
        let mut out = Vec::new();
        for x in queries.rows() {
            tree.k_nearest(x, 7, &mut out);
            let mut got: Vec<usize> = out.iter().map(|e| e.1).collect();
            got.sort_unstable();
            let mut all: Vec<(f64, usize)> = pts.rows().enumerate().map(|(j, y)| (euclidean(x, y), j)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut want: Vec<usize> = all[..7].iter().map(|e| e.1).collect();
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn shifted_queries_match_brute_force() {
        let pts = cloud(300, 2, 3);
        let values: Vec<f64> = (0..300).map(|i| 0.3 * ((i * 37 % 101) as f64 / 101.0) - 0.1).collect();
        let mut tree = KdTree::new(&pts);
        tree.set_values(&values);
        for x in cloud(30, 2, 4).rows() {
            let (best, arg, _) = tree.argmin_shifted(x);
            let brute = (0..300).map(|j| euclidean(x, pts.row(j)) - values[j]).fold(f64::INFINITY, f64::min);
            assert_eq!(best, brute);
            assert_eq!(euclidean(x, pts.row(arg)) - values[arg], brute);
            let mut hits = Vec::new();
            tree.for_each_below(x, 0.05, |j, _| hits.push(j));
            hits.sort_unstable();
            let want: Vec<usize> = (0..300).filter(|&j| euclidean(x, pts.row(j)) < 0.05 + values[j]).collect();
            assert_eq!(hits, want);
        }
    }
}
