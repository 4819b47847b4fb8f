//! Exact min-cost perfect matching between two equal-size point sets under the
//! Euclidean ground cost.
//!
//! Small instances use the dense Hungarian method. Large instances solve a
//! sparse nearest-neighbour subproblem by successive shortest paths and then
//! refit the duals over every pair until the matching is tight under globally
//! feasible duals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::sampling::{euclidean, PointSet};

/// Matched pairs whose reduced cost exceeds this after a dual refit are released.
const TIGHT_TOL: f64 = 1e-12;
/// Pairs with reduced cost below `-CERT_TOL` violate the certificate.
const CERT_TOL: f64 = 1e-12;
const LABEL_TOL: f64 = 1e-13;
const RELABEL_LIMIT: u32 = 64;
const DENSE_LIMIT: usize = 256;
const NEIGHBOURS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `col_of[i]` is the column matched to row `i`.
    pub col_of: Vec<usize>,
    pub total_cost: f64,
}

impl Matching {
    pub fn mean_cost(&self) -> f64 {
        self.total_cost / self.col_of.len() as f64
    }
}

fn check_pair(a: &PointSet, b: &PointSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.is_empty() {
        return Err(Error::InvalidSpec("assignment between empty point sets".into()));
    }
    Ok(())
}

fn total_cost(a: &PointSet, b: &PointSet, col_of: &[usize]) -> f64 {
    col_of.iter().enumerate().map(|(i, &j)| euclidean(a.row(i), b.row(j))).sum()
}

/// Chooses the dense or sparse solver by size.
pub fn solve(a: &PointSet, b: &PointSet) -> Result<Matching> {
    if a.len() <= DENSE_LIMIT {
        solve_dense(a, b)
    } else {
        solve_sparse(a, b, NEIGHBOURS)
    }
}

/// O(n^3) Hungarian method with row-by-row augmentation. Ties go to the lowest column index.
pub fn solve_dense(a: &PointSet, b: &PointSet) -> Result<Matching> {
    check_pair(a, b)?;
    let n = a.len();
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| euclidean(a.row(i), b.row(j)))
        .collect();
    let col_of = hungarian(n, &cost);
    Ok(Matching { total_cost: total_cost(a, b, &col_of), col_of })
}

/// Dense Hungarian on an `n x n` row-major cost matrix. Indices are 1-based
/// internally with slot 0 as the virtual source column.
pub fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    let c = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[p[j] - 1] = j - 1;
    }
    col_of
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    col: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.col.cmp(&self.col))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NONE: usize = usize::MAX;

struct Sparse<'a> {
    a: &'a PointSet,
    b: &'a PointSet,
    row_tree: KdTree,
    col_tree: KdTree,
    adj: Vec<Vec<(usize, f64)>>,
    u: Vec<f64>,
    v: Vec<f64>,
    col_of: Vec<usize>,
    row_of: Vec<usize>,
    dist: Vec<f64>,
    pred: Vec<usize>,
    done: Vec<bool>,
    touched: Vec<usize>,
    heap: BinaryHeap<HeapItem>,
}

impl<'a> Sparse<'a> {
    fn new(a: &'a PointSet, b: &'a PointSet, k: usize) -> Self {
        let n = a.len();
        let row_tree = KdTree::new(a);
        let col_tree = KdTree::new(b);
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(2 * k); n];
        let mut scratch = Vec::with_capacity(k);
        for (i, row) in adj.iter_mut().enumerate() {
            col_tree.k_nearest(a.row(i), k, &mut scratch);
            row.extend(scratch.iter().map(|&(c, j)| (j, c)));
        }
        for j in 0..n {
            row_tree.k_nearest(b.row(j), k, &mut scratch);
            for &(c, i) in scratch.iter() {
                adj[i].push((j, c));
            }
        }
        let mut s = Sparse {
            a,
            b,
            row_tree,
            col_tree,
            adj,
            u: vec![0.0; n],
            v: vec![0.0; n],
            col_of: vec![NONE; n],
            row_of: vec![NONE; n],
            dist: vec![f64::INFINITY; n],
            pred: vec![NONE; n],
            done: vec![false; n],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
        };
        for i in 0..n {
            s.adj[i].sort_by_key(|e| e.0);
            s.adj[i].dedup_by_key(|e| e.0);
            s.u[i] = s.adj[i].iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        }
        // greedy tight matching; v = 0 so tight means c = u
        for i in 0..n {
            let tight = s.adj[i].iter().find(|&&(j, c)| s.row_of[j] == NONE && c == s.u[i]).map(|e| e.0);
            if let Some(j) = tight {
                s.col_of[i] = j;
                s.row_of[j] = i;
            }
        }
        s
    }

    fn relax(&mut self, i: usize, base: f64) {
        for k in 0..self.adj[i].len() {
            let (j, c) = self.adj[i][k];
            if self.done[j] {
                continue;
            }
            let nd = base + (c - self.u[i] - self.v[j]).max(0.0);
            if nd < self.dist[j] {
                if self.dist[j] == f64::INFINITY {
                    self.touched.push(j);
                }
                self.dist[j] = nd;
                self.pred[j] = i;
                self.heap.push(HeapItem { dist: nd, col: j });
            }
        }
    }

    /// One Dijkstra search from free row `root`. Returns false if no free column is reachable.
    fn augment_from(&mut self, root: usize) -> bool {
        self.heap.clear();
        self.relax(root, 0.0);
        let mut found = NONE;
        let mut finalized = Vec::new();
        while let Some(HeapItem { dist, col }) = self.heap.pop() {
            if self.done[col] || dist > self.dist[col] {
                continue;
            }
            self.done[col] = true;
            finalized.push(col);
            let i = self.row_of[col];
            if i == NONE {
                found = col;
                break;
            }
            self.relax(i, dist);
        }
        let ok = found != NONE;
        if ok {
            let delta = self.dist[found];
            for &j in &finalized {
                let shift = delta - self.dist[j];
                self.v[j] -= shift;
                let i = self.row_of[j];
                if i != NONE {
                    self.u[i] += shift;
                }
            }
            self.u[root] += delta;
            let mut j = found;
            loop {
                let i = self.pred[j];
                let prev = self.col_of[i];
                self.col_of[i] = j;
                self.row_of[j] = i;
                if i == root {
                    break;
                }
                j = prev;
            }
        }
        for &j in &self.touched {
            self.dist[j] = f64::INFINITY;
            self.pred[j] = NONE;
            self.done[j] = false;
        }
        for &j in &finalized {
            self.done[j] = false;
        }
        self.touched.clear();
        ok
    }

    /// Adds every column to row `i` and lowers `u[i]` to keep the duals feasible.
    fn densify(&mut self, i: usize) {
        let n = self.b.len();
        self.adj[i] = (0..n).map(|j| (j, euclidean(self.a.row(i), self.b.row(j)))).collect();
        self.lower_row(i);
    }

    fn lower_row(&mut self, i: usize) {
        let floor = self.adj[i].iter().map(|&(j, c)| c - self.v[j]).fold(f64::INFINITY, f64::min);
        if floor < self.u[i] {
            self.u[i] = floor;
            let j = self.col_of[i];
            if j != NONE {
                let c = euclidean(self.a.row(i), self.b.row(j));
                if c - self.u[i] - self.v[j] > 0.0 {
                    self.col_of[i] = NONE;
                    self.row_of[j] = NONE;
                }
            }
        }
    }

    fn run(&mut self) {
        for r in 0..self.a.len() {
            if self.col_of[r] == NONE && !self.augment_from(r) {
                self.densify(r);
                let ok = self.augment_from(r);
                debug_assert!(ok, "a complete row always reaches a free column");
            }
        }
    }

    /// Keeps the current perfect matching and looks for duals that are feasible
    /// on every pair. With `u_i = c(i, M(i)) - v(M(i))`, feasibility reads
    /// `v_j <= v(M(i)) + c(i, j) - c(i, M(i))`, a shortest-path system over
    /// columns; violated pairs join the graph and labels are corrected from a
    /// warm start. Returns false when a label keeps dropping, which signals a
    /// negative cycle: the matching is not optimal on the enlarged graph.
    fn tighten(&mut self) -> bool {
        let n = self.a.len();
        let base: Vec<f64> = (0..n).map(|i| euclidean(self.a.row(i), self.b.row(self.col_of[i]))).collect();
        let mut updates = vec![0u32; n];
        let mut queued = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        loop {
            let mut added = 0;
            self.col_tree.set_values(&self.v);
            let mut hits = Vec::new();
            for i in 0..n {
                let ci = self.col_of[i];
                // violation: c(i, j) < u_i + v_j with u_i = base_i - v(ci)
                let offset = base[i] - self.v[ci] - CERT_TOL;
                hits.clear();
                self.col_tree.for_each_below(self.a.row(i), offset, |j, c| hits.push((j, c)));
                for &(j, c) in &hits {
                    if c >= offset + self.v[j] {
                        continue;
                    }
                    self.ensure_edge(i, j, c);
                    added += 1;
                    let cand = self.v[ci] + c - base[i];
                    if cand < self.v[j] {
                        self.v[j] = cand;
                        if !queued[j] {
                            queued[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
            if added == 0 {
                break;
            }
            while let Some(c) = queue.pop_front() {
                queued[c] = false;
                let r = self.row_of[c];
                for k in 0..self.adj[r].len() {
                    let (j, cost) = self.adj[r][k];
                    let cand = self.v[c] + cost - base[r];
                    if cand < self.v[j] - LABEL_TOL {
                        self.v[j] = cand;
                        updates[j] += 1;
                        if updates[j] > RELABEL_LIMIT {
                            return false;
                        }
                        if !queued[j] {
                            queued[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        for i in 0..n {
            self.u[i] = base[i] - self.v[self.col_of[i]];
        }
        true
    }

    fn ensure_edge(&mut self, i: usize, j: usize, c: f64) {
        if let Err(pos) = self.adj[i].binary_search_by_key(&j, |e| e.0) {
            self.adj[i].insert(pos, (j, c));
        }
    }

    /// Replaces the duals by their double c-transform over all pairs, which is
    /// feasible everywhere by construction, then unmatches pairs that are no
    /// longer tight. The minimizing edges join the sparse graph. Returns the
    /// number of unmatched rows; zero certifies optimality.
    fn refit(&mut self) -> usize {
        let n = self.a.len();
        self.row_tree.set_values(&self.u);
        for j in 0..n {
            let (val, i, c) = self.row_tree.argmin_shifted(self.b.row(j));
            self.v[j] = val;
            self.ensure_edge(i, j, c);
        }
        self.col_tree.set_values(&self.v);
        for i in 0..n {
            let (val, j, c) = self.col_tree.argmin_shifted(self.a.row(i));
            self.u[i] = val;
            self.ensure_edge(i, j, c);
        }
        let mut free = 0;
        for i in 0..n {
            let j = self.col_of[i];
            if j != NONE {
                let c = euclidean(self.a.row(i), self.b.row(j));
                if c - self.u[i] - self.v[j] > TIGHT_TOL {
                    self.col_of[i] = NONE;
                    self.row_of[j] = NONE;
                }
            }
            if self.col_of[i] == NONE {
                free += 1;
            }
        }
        free
    }
}

/// Sparse successive shortest paths on the `k`-nearest-neighbour graph (both
/// directions), made exact by certifying the duals on every pair: violated
/// pairs join the graph until the matching is tight under feasible duals.
pub fn solve_sparse(a: &PointSet, b: &PointSet, k: usize) -> Result<Matching> {
    check_pair(a, b)?;
    let n = a.len();
    let mut s = Sparse::new(a, b, k.clamp(1, n));
    for _ in 0..n + 1 {
        s.run();
        if s.tighten() {
            let col_of = std::mem::take(&mut s.col_of);
            return Ok(Matching { total_cost: total_cost(a, b, &col_of), col_of });
        }
        s.refit();
    }
    Err(Error::Solver("assignment certificate did not converge".into()))
}
