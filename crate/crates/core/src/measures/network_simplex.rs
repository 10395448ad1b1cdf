//! Primal network simplex for the balanced transportation problem.
//!
//! Supplies are the row weights, demands the column weights, and every
//! (row, column) pair is an uncapacitated arc. The spanning-tree basis is kept
//! strongly feasible (leaving-arc ties resolved toward the root on the
//! entering side), which rules out cycling on degenerate pivots. Tree
//! potentials are rebuilt from scratch after every pivot, so rounding error
//! does not accumulate across iterations.

const UP: bool = true;
const DOWN: bool = false;

pub(crate) struct TransportSolution {
    pub cost: f64,
    /// Nonzero flows on real arcs as `(row, col, mass)`.
    pub flows: Vec<(usize, usize, f64)>,
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    root: usize,
    costs: &'a [f64],
    supply: Vec<f64>,
    art_cost: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    adj: Vec<Vec<u32>>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<bool>,
    depth: Vec<u32>,
    pi: Vec<f64>,
    queue: Vec<usize>,
    visited: Vec<bool>,
}

impl<'a> Simplex<'a> {
    fn real_arcs(&self) -> usize {
        self.m * self.n
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        let real = self.real_arcs();
        if e < real {
            e / self.n
        } else {
            let u = e - real;
            if self.supply[u] >= 0.0 {
                u
            } else {
                self.root
            }
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        let real = self.real_arcs();
        if e < real {
            self.m + e % self.n
        } else {
            let u = e - real;
            if self.supply[u] >= 0.0 {
                self.root
            } else {
                u
            }
        }
    }

    #[inline]
    fn cost(&self, e: usize) -> f64 {
        let real = self.real_arcs();
        if e < real {
            self.costs[e]
        } else if self.supply[e - real] >= 0.0 {
            0.0
        } else {
            self.art_cost
        }
    }

    fn rebuild(&mut self) {
        let root = self.root;
        self.visited.iter_mut().for_each(|v| *v = false);
        self.queue.clear();
        self.queue.push(root);
        self.visited[root] = true;
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut head = 0;
        while head < self.queue.len() {
            let u = self.queue[head];
            head += 1;
            for k in 0..self.adj[u].len() {
                let e = self.adj[u][k] as usize;
                let s = self.source(e);
                let t = self.target(e);
                let w = if s == u { t } else { s };
                if self.visited[w] {
                    continue;
                }
                self.visited[w] = true;
                self.parent[w] = u;
                self.pred[w] = e;
                self.depth[w] = self.depth[u] + 1;
                if s == u {
                    self.pred_dir[w] = DOWN;
                    self.pi[w] = self.pi[u] + self.cost(e);
                } else {
                    self.pred_dir[w] = UP;
                    self.pi[w] = self.pi[u] - self.cost(e);
                }
                self.queue.push(w);
            }
        }
        debug_assert_eq!(self.queue.len(), self.m + self.n + 1);
    }

    fn remove_adj(&mut self, node: usize, e: usize) {
        let list = &mut self.adj[node];
        if let Some(pos) = list.iter().position(|&a| a as usize == e) {
            list.swap_remove(pos);
        }
    }
}

/// Solves min Σ c_ij γ_ij subject to row sums `rows` and column sums `cols`.
/// `costs` is row-major of shape `rows.len() × cols.len()`.
pub(crate) fn solve(rows: &[f64], cols: &[f64], costs: &[f64]) -> TransportSolution {
    let m = rows.len();
    let n = cols.len();
    debug_assert_eq!(costs.len(), m * n);
    let node_num = m + n;
    let root = node_num;
    let max_cost = costs.iter().fold(0.0f64, |acc, &c| acc.max(c.abs()));
    let art_cost = (max_cost + 1.0) * (node_num as f64 + 1.0);
    let eps = 1e-13 * (max_cost + 1.0);

    let mut supply = Vec::with_capacity(node_num);
    supply.extend_from_slice(rows);
    supply.extend(cols.iter().map(|&c| -c));

    let real = m * n;
    let all_arcs = real + node_num;
    let mut s = Simplex {
        m,
        n,
        root,
        costs,
        supply,
        art_cost,
        flow: vec![0.0; all_arcs],
        in_tree: vec![false; real],
        adj: vec![Vec::new(); node_num + 1],
        parent: vec![root; node_num + 1],
        pred: vec![usize::MAX; node_num + 1],
        pred_dir: vec![UP; node_num + 1],
        depth: vec![0; node_num + 1],
        pi: vec![0.0; node_num + 1],
        queue: Vec::with_capacity(node_num + 1),
        visited: vec![false; node_num + 1],
    };
    for u in 0..node_num {
        let e = real + u;
        s.flow[e] = s.supply[u].abs();
        s.adj[u].push(e as u32);
        s.adj[root].push(e as u32);
    }
    s.rebuild();

    let block = ((real as f64).sqrt().ceil() as usize).max(10).min(real.max(1));
    let mut next_arc = 0usize;
    loop {
        // Block search pricing.
        let mut best = -eps;
        let mut entering = usize::MAX;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        while scanned < real {
            let e = next_arc;
            next_arc += 1;
            if next_arc == real {
                next_arc = 0;
            }
            scanned += 1;
            in_block += 1;
            if !s.in_tree[e] {
                let i = e / n;
                let j = m + e % n;
                let rc = costs[e] + s.pi[i] - s.pi[j];
                if rc < best {
                    best = rc;
                    entering = e;
                }
            }
            if in_block == block {
                if entering != usize::MAX {
                    break;
                }
                in_block = 0;
            }
        }
        if entering == usize::MAX {
            break;
        }

        let first = entering / n;
        let second = m + entering % n;
        let mut u = first;
        let mut v = second;
        while u != v {
            if s.depth[u] >= s.depth[v] {
                u = s.parent[u];
            } else {
                v = s.parent[v];
            }
        }
        let join = u;

        let mut delta = f64::INFINITY;
        let mut u_out = usize::MAX;
        let mut x = first;
        while x != join {
            if s.pred_dir[x] == UP {
                let d = s.flow[s.pred[x]];
                if d < delta {
                    delta = d;
                    u_out = x;
                }
            }
            x = s.parent[x];
        }
        x = second;
        while x != join {
            if s.pred_dir[x] == DOWN {
                let d = s.flow[s.pred[x]];
                if d <= delta {
                    delta = d;
                    u_out = x;
                }
            }
            x = s.parent[x];
        }
        debug_assert!(u_out != usize::MAX, "uncapacitated cycle must contain a backward arc");

        if delta > 0.0 {
            s.flow[entering] += delta;
            x = first;
            while x != join {
                let e = s.pred[x];
                if s.pred_dir[x] == UP {
                    s.flow[e] -= delta;
                } else {
                    s.flow[e] += delta;
                }
                x = s.parent[x];
            }
            x = second;
            while x != join {
                let e = s.pred[x];
                if s.pred_dir[x] == UP {
                    s.flow[e] += delta;
                } else {
                    s.flow[e] -= delta;
                }
                x = s.parent[x];
            }
        }

        let leaving = s.pred[u_out];
        s.flow[leaving] = 0.0;
        let (ls, lt) = (s.source(leaving), s.target(leaving));
        s.remove_adj(ls, leaving);
        s.remove_adj(lt, leaving);
        if leaving < real {
            s.in_tree[leaving] = false;
        }
        s.in_tree[entering] = true;
        s.adj[first].push(entering as u32);
        s.adj[second].push(entering as u32);
        s.rebuild();
    }

    let mut flows = Vec::new();
    let mut cost = 0.0;
    for e in 0..real {
        if s.in_tree[e] && s.flow[e] > 0.0 {
            cost += s.flow[e] * costs[e];
            flows.push((e / n, e % n, s.flow[e]));
        }
    }
    TransportSolution { cost, flows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        // Rows (0.5, 0.5), cols (0.5, 0.5), identity cheaper.
        let sol = solve(&[0.5, 0.5], &[0.5, 0.5], &[0.0, 1.0, 1.0, 0.0]);
        assert!(sol.cost.abs() < 1e-15);
        assert_eq!(sol.flows.len(), 2);
    }

    #[test]
    fn one_to_many() {
        let sol = solve(&[1.0], &[0.25, 0.75], &[4.0, 1.0]);
        assert!((sol.cost - (0.25 * 4.0 + 0.75)).abs() < 1e-14);
    }
}
