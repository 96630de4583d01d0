//! Small static kd-tree for nearest-neighbour distances and range counts in
//! a handful of dimensions.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    /// Max-norm.
    Chebyshev,
}

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
struct Node {
    lo: usize,
    hi: usize,
    split_dim: usize,
    split: f64,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [f64],
    dim: usize,
    metric: Metric,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    /// `points` is row-major with `dim` coordinates per point.
    pub fn new(points: &'a [f64], dim: usize, metric: Metric) -> Self {
        assert!(dim > 0 && points.len().is_multiple_of(dim));
        let n = points.len() / dim;
        let mut tree = KdTree { points, dim, metric, order: (0..n).collect(), nodes: Vec::new() };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node { lo, hi, split_dim: 0, split: 0.0, children: None });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        // split along the widest coordinate
        let (mut best, mut spread) = (0, -1.0);
        for d in 0..self.dim {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                let v = self.points[i * self.dim + d];
                mn = mn.min(v);
                mx = mx.max(v);
            }
            if mx - mn > spread {
                spread = mx - mn;
                best = d;
            }
        }
        let mid = (lo + hi) / 2;
        let (points, dim) = (self.points, self.dim);
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |a, b| {
            points[a * dim + best].total_cmp(&points[b * dim + best])
        });
        let split = points[self.order[mid] * dim + best];
        let left = self.build(lo, mid);
        let right = self.build(mid, hi);
        let node = &mut self.nodes[id];
        node.split_dim = best;
        node.split = split;
        node.children = Some((left, right));
        id
    }

    /// Distance in metric-native units (squared for Euclidean).
    fn raw_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.metric {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Chebyshev => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    fn raw_gap(&self, diff: f64) -> f64 {
        match self.metric {
            Metric::Euclidean => diff * diff,
            Metric::Chebyshev => diff.abs(),
        }
    }

    fn to_distance(&self, raw: f64) -> f64 {
        match self.metric {
            Metric::Euclidean => raw.sqrt(),
            Metric::Chebyshev => raw,
        }
    }

    /// Distance from point `index` to its `k`-th nearest other point.
    pub fn kth_neighbor_distance(&self, index: usize, k: usize) -> f64 {
        assert!(k >= 1 && k < self.len());
        let mut best = vec![f64::INFINITY; k];
        let query = self.point(index);
        self.knn_visit(0, query, index, &mut best);
        self.to_distance(best[k - 1])
    }

    /// `best` is kept sorted ascending.
    fn knn_visit(&self, node: usize, q: &[f64], skip: usize, best: &mut [f64]) {
        let n = &self.nodes[node];
        match n.children {
            None => {
                for &i in &self.order[n.lo..n.hi] {
                    if i == skip {
                        continue;
                    }
                    let d = self.raw_distance(q, self.point(i));
                    let last = best.len() - 1;
                    if d < best[last] {
                        let mut pos = last;
                        while pos > 0 && best[pos - 1] > d {
                            best[pos] = best[pos - 1];
                            pos -= 1;
                        }
                        best[pos] = d;
                    }
                }
            }
            Some((left, right)) => {
                let diff = q[n.split_dim] - n.split;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_visit(near, q, skip, best);
                if self.raw_gap(diff) <= best[best.len() - 1] {
                    self.knn_visit(far, q, skip, best);
                }
            }
        }
    }

    /// Number of points at distance strictly below `radius` from `query`.
    pub fn count_within(&self, query: &[f64], radius: f64) -> usize {
        if self.is_empty() {
            return 0;
        }
        let r = match self.metric {
            Metric::Euclidean => radius * radius,
            Metric::Chebyshev => radius,
        };
        self.count_visit(0, query, r)
    }

    fn count_visit(&self, node: usize, q: &[f64], r: f64) -> usize {
        let n = &self.nodes[node];
        match n.children {
            None => self.order[n.lo..n.hi].iter().filter(|&&i| self.raw_distance(q, self.point(i)) < r).count(),
            Some((left, right)) => {
                let diff = q[n.split_dim] - n.split;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                let mut c = self.count_visit(near, q, r);
                if self.raw_gap(diff) < r {
                    c += self.count_visit(far, q, r);
                }
                c
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn brute_kth(points: &[f64], dim: usize, i: usize, k: usize, metric: Metric) -> f64 {
        let q = &points[i * dim..(i + 1) * dim];
        let mut d: Vec<f64> = (0..points.len() / dim)
            .filter(|&j| j != i)
            .map(|j| {
                let p = &points[j * dim..(j + 1) * dim];
                match metric {
                    Metric::Euclidean => q.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
                    Metric::Chebyshev => q.iter().zip(p).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())),
                }
            })
            .collect();
        d.sort_by(f64::total_cmp);
        d[k - 1]
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = seeded(3);
        for dim in 1..=3 {
            let pts: Vec<f64> = (0..500 * dim).map(|_| rng.random::<f64>()).collect();
            for metric in [Metric::Euclidean, Metric::Chebyshev] {
                let tree = KdTree::new(&pts, dim, metric);
                for i in (0..500).step_by(37) {
                    for k in [1, 4] {
                        let got = tree.kth_neighbor_distance(i, k);
                        assert_eq!(got, brute_kth(&pts, dim, i, k, metric));
                    }
                    let r = 0.1;
                    let q = &pts[i * dim..(i + 1) * dim];
                    let brute = (0..500)
                        .filter(|&j| {
                            let p = &pts[j * dim..(j + 1) * dim];
                            match metric {
                                Metric::Euclidean => q.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < r * r,
                                Metric::Chebyshev => q.iter().zip(p).all(|(a, b)| (a - b).abs() < r),
                            }
                        })
                        .count();
                    assert_eq!(tree.count_within(q, r), brute);
                }
            }
        }
    }
}
