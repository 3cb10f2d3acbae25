//! Hierarchical density-based clustering (HDBSCAN) with excess-of-mass
//! cluster selection.
//!
//! Exact O(n²) construction: core distances by full scan, mutual
//! reachability minimum spanning tree by Prim's algorithm, single-linkage
//! hierarchy, condensed tree, stability, then selection.

const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbourhood size for core distances, counting the point itself.
    pub min_samples: usize,
    /// Allow the root to be selected as the only cluster.
    pub allow_single_cluster: bool,
}

impl HdbscanParams {
    pub fn new(min_cluster_size: usize) -> Self {
        HdbscanParams {
            min_cluster_size,
            min_samples: min_cluster_size,
            allow_single_cluster: false,
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn core_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = points.len();
    let k = k.clamp(1, n);
    let mut row = vec![0.0; n];
    points
        .iter()
        .map(|p| {
            for (j, q) in points.iter().enumerate() {
                row[j] = euclidean(p, q);
            }
            let (_, kth, _) = row.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            *kth
        })
        .collect()
}

/// Minimum spanning tree over mutual reachability distances, as
/// `(a, b, weight)` edges in insertion order.
fn mutual_reachability_mst(points: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = euclidean(&points[current], &points[j]).max(core[current]).max(core[j]);
            if d < best[j] {
                best[j] = d;
                parent[j] = current;
            }
        }
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < next_d) {
                next = j;
                next_d = best[j];
            }
        }
        in_tree[next] = true;
        edges.push((parent[next], next, next_d));
        current = next;
    }
    edges
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage merges: node `n + i` joins `left` and `right` at `dist`.
struct Linkage {
    n: usize,
    merges: Vec<(usize, usize, f64, usize)>,
}

impl Linkage {
    fn build(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Self {
        edges.sort_by(|a, b| a.2.total_cmp(&b.2));
        let mut uf = UnionFind::new(n);
        // node id currently representing each union-find root
        let mut node_of: Vec<usize> = (0..n).collect();
        let mut merges = Vec::with_capacity(n.saturating_sub(1));
        for (a, b, d) in edges {
            let (ra, rb) = (uf.find(a), uf.find(b));
            let (na, nb) = (node_of[ra], node_of[rb]);
            let size = uf.size[ra] + uf.size[rb];
            let (big, small) = if uf.size[ra] >= uf.size[rb] { (ra, rb) } else { (rb, ra) };
            uf.parent[small] = big;
            uf.size[big] = size;
            node_of[big] = n + merges.len();
            merges.push((na, nb, d, size));
        }
        Linkage { n, merges }
    }

    fn size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.merges[node - self.n].3
        }
    }

    fn leaves(&self, node: usize, out: &mut Vec<usize>) {
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < self.n {
                out.push(x);
            } else {
                let (l, r, _, _) = self.merges[x - self.n];
                stack.push(r);
                stack.push(l);
            }
        }
    }
}

/// A row of the condensed tree: `child` leaves `parent` at `lambda`.
#[derive(Debug, Clone, Copy)]
struct CondensedRow {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
    is_cluster: bool,
}

fn condense(link: &Linkage, min_cluster_size: usize) -> (Vec<CondensedRow>, usize) {
    let n = link.n;
    let root = n + link.merges.len() - 1;
    let mut label_of = vec![usize::MAX; root + 1];
    label_of[root] = 0;
    let mut next_label = 1;
    let mut rows = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    let mut leaves = Vec::new();
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let (left, right, dist, _) = link.merges[node - n];
        let lambda = if dist > 0.0 { (1.0 / dist).min(LAMBDA_MAX) } else { LAMBDA_MAX };
        let parent = label_of[node];
        let (ls, rs) = (link.size(left), link.size(right));
        let mut fall_out = |child: usize, rows: &mut Vec<CondensedRow>| {
            leaves.clear();
            link.leaves(child, &mut leaves);
            for &p in leaves.iter() {
                rows.push(CondensedRow {
                    parent,
                    child: p,
                    lambda,
                    size: 1,
                    is_cluster: false,
                });
            }
        };
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(left, ls), (right, rs)] {
                    label_of[child] = next_label;
                    rows.push(CondensedRow {
                        parent,
                        child: next_label,
                        lambda,
                        size,
                        is_cluster: true,
                    });
                    next_label += 1;
                    queue.push_back(child);
                }
            }
            (false, false) => {
                fall_out(left, &mut rows);
                fall_out(right, &mut rows);
            }
            (false, true) => {
                fall_out(left, &mut rows);
                label_of[right] = parent;
                queue.push_back(right);
            }
            (true, false) => {
                fall_out(right, &mut rows);
                label_of[left] = parent;
                queue.push_back(left);
            }
        }
    }
    (rows, next_label)
}

/// Cluster `points`; returns one label per point, `None` for noise.
/// Cluster ids are dense, starting at 0, in order of first appearance.
pub fn hdbscan(points: &[Vec<f64>], params: &HdbscanParams) -> Vec<Option<usize>> {
    let n = points.len();
    let mcs = params.min_cluster_size.max(2);
    if n < mcs || n < 2 {
        return vec![None; n];
    }
    let core = core_distances(points, params.min_samples.max(1));
    let edges = mutual_reachability_mst(points, &core);
    if edges.iter().all(|e| e.2 == 0.0) {
        // no density structure at all: every point coincides
        return vec![Some(0); n];
    }
    let link = Linkage::build(n, edges);
    let (rows, n_clusters) = condense(&link, mcs);

    let mut birth = vec![0.0; n_clusters];
    let mut cluster_parent = vec![usize::MAX; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for r in rows.iter().filter(|r| r.is_cluster) {
        birth[r.child] = r.lambda;
        cluster_parent[r.child] = r.parent;
        children[r.parent].push(r.child);
    }
    let mut stability = vec![0.0; n_clusters];
    for r in &rows {
        stability[r.parent] += (r.lambda - birth[r.parent]) * r.size as f64;
    }

    let mut selected = vec![false; n_clusters];
    let first = if params.allow_single_cluster { 0 } else { 1 };
    for c in (first..n_clusters).rev() {
        let subtree: f64 = children[c].iter().map(|k| stability[*k]).sum();
        if !children[c].is_empty() && subtree > stability[c] {
            stability[c] = subtree;
        } else {
            selected[c] = true;
            let mut stack = children[c].clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend(children[k].iter().copied());
            }
        }
    }

    let selected_ancestor = |mut c: usize| -> Option<usize> {
        loop {
            if selected[c] {
                return Some(c);
            }
            if cluster_parent[c] == usize::MAX {
                return None;
            }
            c = cluster_parent[c];
        }
    };
    let mut raw = vec![None; n];
    for r in rows.iter().filter(|r| !r.is_cluster) {
        raw[r.child] = selected_ancestor(r.parent);
    }
    let mut dense = std::collections::HashMap::new();
    raw.into_iter()
        .map(|l| {
            l.map(|c| {
                let next = dense.len();
                *dense.entry(c).or_insert(next)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn blob(center: &[f64], sigma: f64, count: usize, rng: &mut impl rand::Rng) -> Vec<Vec<f64>> {
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..count)
            .map(|_| center.iter().map(|c| c + normal.sample(rng)).collect())
            .collect()
    }

    #[test]
    fn two_blobs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pts = blob(&[0.0, 0.0], 0.3, 50, &mut rng);
        pts.extend(blob(&[10.0, 10.0], 0.3, 50, &mut rng));
        let labels = hdbscan(&pts, &HdbscanParams::new(10));
        let clusters: std::collections::HashSet<_> = labels.iter().flatten().collect();
        assert_eq!(clusters.len(), 2);
        let noise = labels.iter().filter(|l| l.is_none()).count();
        assert!(noise <= 5, "noise {noise}");
        // blobs are not mixed
        let a: std::collections::HashSet<_> = labels[..50].iter().flatten().collect();
        let b: std::collections::HashSet<_> = labels[50..].iter().flatten().collect();
        assert_eq!(a.len(), 1);
        assert_eq!(b.len(), 1);
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn identical_points_single_cluster() {
        let pts = vec![vec![0.5, 0.5]; 20];
        let labels = hdbscan(&pts, &HdbscanParams::new(5));
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn too_few_points_all_noise() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert_eq!(hdbscan(&pts, &HdbscanParams::new(5)), vec![None, None]);
    }

    #[test]
    fn uniform_noise_has_no_clusters_by_default() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let labels = hdbscan(&pts, &HdbscanParams::new(20));
        assert!(labels.iter().all(Option::is_none));
        let single = HdbscanParams {
            allow_single_cluster: true,
            ..HdbscanParams::new(20)
        };
        assert!(hdbscan(&pts, &single).iter().any(Option::is_some));
    }
}
