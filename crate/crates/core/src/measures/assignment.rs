//! Dense linear assignment: Jonker–Volgenant initialisation followed by
//! shortest augmenting paths.
//!
//! Used for transport between two uniform measures with the same number of
//! atoms, where the optimal plan is a permutation.

/// Returns `(total cost, row_to_col)` for the square row-major cost matrix.
#[cfg(test)]
pub(crate) fn solve(n: usize, cost: &[f64]) -> (f64, Vec<usize>) {
    debug_assert_eq!(cost.len(), n * n);
    solve_with(n, |i, j| cost[i * n + j])
}

/// Assignment between two equal-size point clouds under squared Euclidean cost.
///
/// Shortest augmenting paths run on a sparse candidate graph (mutual nearest
/// neighbours). Once every row is matched, reduced costs are checked against
/// the full dense cost; rows with a violated dual constraint receive the
/// offending edges and are re-opened. The loop ends with a primal-dual pair
/// satisfying complementary slackness on the dense problem, so the result is
/// the exact optimum up to rounding.
pub(crate) fn solve_points(dim: usize, a: &[f64], b: &[f64]) -> (f64, Vec<usize>) {
    let n = a.len() / dim;
    if n <= 64 {
        let cost: Vec<f64> = a
            .chunks_exact(dim)
            .flat_map(|x| b.chunks_exact(dim).map(move |y| sq(x, y)))
            .collect();
        return solve_with(n, |i, j| cost[i * n + j]);
    }
    let row = |i: usize| &a[i * dim..(i + 1) * dim];
    let col = |j: usize| &b[j * dim..(j + 1) * dim];
    let c = |i: usize, j: usize| sq(row(i), col(j));
    // Column coordinates stored coordinate-major so full-row scans vectorise.
    let bt: Vec<Vec<f64>> = (0..dim).map(|k| (0..n).map(|j| b[j * dim + k]).collect()).collect();
    let mut drow = vec![0.0f64; n];
    let row_dists = |i: usize, d: &mut [f64]| {
        d.iter_mut().for_each(|x| *x = 0.0);
        for (k, coords) in bt.iter().enumerate() {
            let xi = a[i * dim + k];
            for (dj, &y) in d.iter_mut().zip(coords) {
                let t = y - xi;
                *dj += t * t;
            }
        }
    };

    // Candidate graph: each row's k nearest columns plus each column's k
    // nearest rows, collected in a single pass over the rows.
    let k = NEIGHBOURS.min(n);
    let mut edges: Vec<Vec<usize>> = vec![Vec::with_capacity(2 * k); n];
    let mut col_best: Vec<Vec<(f64, usize)>> = vec![Vec::with_capacity(k + 1); n];
    let mut col_thr = vec![f64::INFINITY; n];
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        row_dists(i, &mut drow);
        buf.clear();
        buf.extend(drow.iter().copied().zip(0..n));
        buf.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0));
        edges[i].extend(buf[..k].iter().map(|&(_, j)| j));
        for j in 0..n {
            if drow[j] < col_thr[j] {
                let best = &mut col_best[j];
                let pos = best.partition_point(|e| e.0 <= drow[j]);
                best.insert(pos, (drow[j], i));
                best.truncate(k);
                if best.len() == k {
                    col_thr[j] = best[k - 1].0;
                }
            }
        }
    }
    for (j, best) in col_best.iter().enumerate() {
        for &(_, i) in best {
            edges[i].push(j);
        }
    }
    for e in edges.iter_mut() {
        e.sort_unstable();
        e.dedup();
    }

    let mut u = vec![0.0f64; n];
    let v = vec![0.0f64; n];
    for i in 0..n {
        u[i] = edges[i].iter().map(|&j| c(i, j)).fold(f64::INFINITY, f64::min);
    }
    let mut st = Sparse {
        n,
        u,
        v,
        row_match: vec![NONE; n],
        col_match: vec![NONE; n],
        dist: vec![f64::INFINITY; n],
        pred: vec![NONE; n],
        done: vec![false; n],
        touched: Vec::new(),
        finalised: Vec::new(),
    };
    let scale = (0..n).map(|i| c(i, i)).fold(1.0, f64::max);
    let tol = 1e-12 * scale;
    let mut slack = vec![0.0f64; n];
    loop {
        for r in 0..n {
            if st.row_match[r] == NONE {
                st.augment(r, &mut edges, &c);
            }
        }
        let mut clean = true;
        for i in 0..n {
            row_dists(i, &mut drow);
            let ui = st.u[i];
            for ((s, &d), &vj) in slack.iter_mut().zip(&drow).zip(&st.v) {
                *s = d - ui - vj;
            }
            if slack.iter().all(|&s| s >= -tol) {
                continue;
            }
            let mut added = false;
            for j in 0..n {
                if slack[j] < -tol && edges[i].binary_search(&j).is_err() {
                    edges[i].push(j);
                    added = true;
                }
            }
            if added {
                edges[i].sort_unstable();
                clean = false;
                let ui = edges[i]
                    .iter()
                    .map(|&j| c(i, j) - st.v[j])
                    .fold(f64::INFINITY, f64::min);
                st.u[i] = ui;
                let j = st.row_match[i];
                st.col_match[j] = NONE;
                st.row_match[i] = NONE;
            }
        }
        if clean {
            break;
        }
    }
    let total = (0..n).map(|i| c(i, st.row_match[i])).sum();
    (total, st.row_match)
}

const NONE: usize = usize::MAX;
const NEIGHBOURS: usize = 12;

fn sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    // Reversed so that `BinaryHeap` pops the smallest distance.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

struct Sparse {
    n: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    row_match: Vec<usize>,
    col_match: Vec<usize>,
    dist: Vec<f64>,
    pred: Vec<usize>,
    done: Vec<bool>,
    touched: Vec<usize>,
    finalised: Vec<usize>,
}

impl Sparse {
    /// Dijkstra from free row `root` on reduced costs; augments along the
    /// shortest path to a free column and updates the duals.
    fn augment(&mut self, root: usize, edges: &mut [Vec<usize>], c: &impl Fn(usize, usize) -> f64) {
        let mut heap = std::collections::BinaryHeap::new();
        let relax = |st: &mut Self, heap: &mut std::collections::BinaryHeap<Key>, i: usize, base: f64, edges: &[Vec<usize>]| {
            for &j in &edges[i] {
                if st.done[j] {
                    continue;
                }
                let nd = base + c(i, j) - st.u[i] - st.v[j];
                if nd < st.dist[j] {
                    if st.dist[j] == f64::INFINITY {
                        st.touched.push(j);
                    }
                    st.dist[j] = nd;
                    st.pred[j] = i;
                    heap.push(Key(nd, j));
                }
            }
        };
        relax(self, &mut heap, root, 0.0, edges);
        let (end, dmax) = loop {
            let Some(Key(dj, j)) = heap.pop() else {
                // The candidate graph has no augmenting path from here; give
                // the root every column and start over.
                self.reset();
                edges[root] = (0..self.n).collect();
                let ur = (0..self.n).map(|j| c(root, j) - self.v[j]).fold(f64::INFINITY, f64::min);
                self.u[root] = ur;
                return self.augment(root, edges, c);
            };
            if self.done[j] || dj > self.dist[j] {
                continue;
            }
            self.done[j] = true;
            self.finalised.push(j);
            let i = self.col_match[j];
            if i == NONE {
                break (j, dj);
            }
            relax(self, &mut heap, i, dj, edges);
        };
        self.u[root] += dmax;
        for &j in &self.finalised {
            let gap = dmax - self.dist[j];
            self.v[j] -= gap;
            let i = self.col_match[j];
            if i != NONE {
                self.u[i] += gap;
            }
        }
        let mut j = end;
        loop {
            let i = self.pred[j];
            let next = self.row_match[i];
            self.row_match[i] = j;
            self.col_match[j] = i;
            if i == root {
                break;
            }
            j = next;
        }
        self.reset();
    }

    fn reset(&mut self) {
        for &j in &self.touched {
            self.dist[j] = f64::INFINITY;
            self.pred[j] = NONE;
            self.done[j] = false;
        }
        self.touched.clear();
        self.finalised.clear();
    }
}

fn solve_with(n: usize, c: impl Fn(usize, usize) -> f64) -> (f64, Vec<usize>) {
    if n == 0 {
        return (0.0, Vec::new());
    }
    if n == 1 {
        return (c(0, 0), vec![0]);
    }

    let mut rowsol = vec![NONE; n];
    let mut colsol = vec![NONE; n];
    let mut v = vec![0.0f64; n];
    let mut matches = vec![0u32; n];
    let mut free = vec![0usize; n];

    // Column reduction.
    for j in (0..n).rev() {
        let mut min = c(0, j);
        let mut imin = 0;
        for i in 1..n {
            let h = c(i, j);
            if h < min {
                min = h;
                imin = i;
            }
        }
        v[j] = min;
        matches[imin] += 1;
        if matches[imin] == 1 {
            rowsol[imin] = j;
            colsol[j] = imin;
        } else if v[j] < v[rowsol[imin]] {
            let j1 = rowsol[imin];
            rowsol[imin] = j;
            colsol[j] = imin;
            colsol[j1] = NONE;
        } else {
            colsol[j] = NONE;
        }
    }

    // Reduction transfer.
    let mut numfree = 0;
    for i in 0..n {
        if matches[i] == 0 {
            free[numfree] = i;
            numfree += 1;
        } else if matches[i] == 1 {
            let j1 = rowsol[i];
            let mut min = f64::INFINITY;
            for j in 0..n {
                if j != j1 {
                    let h = c(i, j) - v[j];
                    if h < min {
                        min = h;
                    }
                }
            }
            v[j1] -= min;
        }
    }
    // Augmenting row reduction is skipped: on geometric costs it cycles
    // through many tiny price decrements and dominates the run time.
    // Augmentation by Dijkstra-like shortest paths.
    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    let mut collist = vec![0usize; n];
    for &freerow in free.iter().take(numfree) {
        for j in 0..n {
            d[j] = c(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        let mut low = 0usize;
        let mut up = 0usize;
        let mut last = 0usize;
        let mut min = 0.0f64;
        let mut endofpath = NONE;
        loop {
            if up == low {
                last = low;
                min = d[collist[up]];
                up += 1;
                for k in up..n {
                    let j = collist[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                }
                for &j in &collist[low..up] {
                    if colsol[j] == NONE {
                        endofpath = j;
                        break;
                    }
                }
            }
            if endofpath != NONE {
                break;
            }
            let j1 = collist[low];
            low += 1;
            let i = colsol[j1];
            let h = c(i, j1) - v[j1] - min;
            let mut k = up;
            while k < n {
                let j = collist[k];
                let v2 = c(i, j) - v[j] - h;
                if v2 < d[j] {
                    pred[j] = i;
                    if v2 == min {
                        if colsol[j] == NONE {
                            endofpath = j;
                            break;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                    d[j] = v2;
                }
                k += 1;
            }
            if endofpath != NONE {
                break;
            }
        }
        // Columns scanned before the last minimum search get their prices updated.
        for &j1 in &collist[..last] {
            v[j1] += d[j1] - min;
        }
        loop {
            let i = pred[endofpath];
            colsol[endofpath] = i;
            let j1 = endofpath;
            endofpath = rowsol[i];
            rowsol[i] = j1;
            if i == freerow {
                break;
            }
        }
    }

    let total = (0..n).map(|i| c(i, rowsol[i])).sum();
    (total, rowsol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(n: usize, cost: &[f64]) -> f64 {
        fn rec(n: usize, cost: &[f64], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row * n + j] + rec(n, cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(n, cost, 0, &mut vec![false; n])
    }

    #[test]
    fn matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..400 {
            let n = 1 + trial % 7;
            let cost: Vec<f64> = (0..n * n)
                .map(|_| {
                    if trial % 3 == 0 {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            let (total, perm) = solve(n, &cost);
            let mut seen = vec![false; n];
            for &j in &perm {
                assert!(!seen[j]);
                seen[j] = true;
            }
            assert!((total - brute(n, &cost)).abs() < 1e-12, "trial {trial}");
        }
    }
}
