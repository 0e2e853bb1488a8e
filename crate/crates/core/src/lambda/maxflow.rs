//! Exact sup-norm minimization over `{w : Bᵀw = c}` by parametric max-flow.
//!
//! `Bᵀw = c` is flow conservation on the lattice graph with supply `c_i` at
//! site `i`; `‖w‖∞ ≤ λ` caps every edge at `λ` in both directions. Such a flow
//! exists iff `c(S) ≤ λ |∂S|` for every site set `S`, hence
//! `Λ = max_S c(S) / |∂S|`. The ratio is maximized by Dinkelbach iterations,
//! each of which is one min-cut computation.

use crate::grid::LatticeShape;

const SOURCE_EPS: f64 = 1e-13;

struct FlowNetwork {
    first: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

const NIL: usize = usize::MAX;

impl FlowNetwork {
    fn new(nodes: usize, arcs: usize) -> Self {
        Self {
            first: vec![NIL; nodes],
            next: Vec::with_capacity(arcs),
            to: Vec::with_capacity(arcs),
            cap: Vec::with_capacity(arcs),
        }
    }

    /// Adds the arc pair `a → b` (capacity `ab`) and `b → a` (capacity `ba`);
    /// returns the index of the forward arc. The reverse arc is `index ^ 1`.
    fn add_pair(&mut self, a: usize, b: usize, ab: f64, ba: f64) -> usize {
        let id = self.to.len();
        self.to.push(b);
        self.cap.push(ab);
        self.next.push(self.first[a]);
        self.first[a] = id;
        self.to.push(a);
        self.cap.push(ba);
        self.next.push(self.first[b]);
        self.first[b] = id + 1;
        id
    }

    /// Dinic's algorithm; residual capacities below `eps` count as saturated.
    fn max_flow(&mut self, s: usize, t: usize, eps: f64) -> f64 {
        let n = self.first.len();
        let mut level = vec![u32::MAX; n];
        let mut iter = vec![NIL; n];
        let mut queue = Vec::with_capacity(n);
        let mut total = 0.0;
        // Iterative DFS state.
        let mut path_arcs: Vec<usize> = Vec::new();
        loop {
            level.iter_mut().for_each(|l| *l = u32::MAX);
            queue.clear();
            level[s] = 0;
            queue.push(s);
            let mut head = 0;
            while head < queue.len() {
                let v = queue[head];
                head += 1;
                let mut a = self.first[v];
                while a != NIL {
                    let u = self.to[a];
                    if self.cap[a] > eps && level[u] == u32::MAX {
                        level[u] = level[v] + 1;
                        queue.push(u);
                    }
                    a = self.next[a];
                }
            }
            if level[t] == u32::MAX {
                return total;
            }
            iter.copy_from_slice(&self.first);
            loop {
                // Find one augmenting path in the level graph.
                path_arcs.clear();
                let mut v = s;
                let found = loop {
                    if v == t {
                        break true;
                    }
                    let mut advanced = false;
                    while iter[v] != NIL {
                        let a = iter[v];
                        let u = self.to[a];
                        if self.cap[a] > eps && level[u] == level[v] + 1 {
                            path_arcs.push(a);
                            v = u;
                            advanced = true;
                            break;
                        }
                        iter[v] = self.next[a];
                    }
                    if !advanced {
                        // Dead end: retreat.
                        if v == s {
                            break false;
                        }
                        level[v] = u32::MAX;
                        let a = path_arcs.pop().expect("non-empty path");
                        v = self.to[a ^ 1];
                        iter[v] = self.next[iter[v]];
                    }
                };
                if !found {
                    break;
                }
                let push = path_arcs
                    .iter()
                    .map(|&a| self.cap[a])
                    .fold(f64::INFINITY, f64::min);
                for &a in &path_arcs {
                    self.cap[a] -= push;
                    self.cap[a ^ 1] += push;
                }
                total += push;
            }
        }
    }

    /// Nodes reachable from `s` through arcs with residual above `eps`.
    fn reachable(&self, s: usize, eps: f64) -> Vec<bool> {
        let mut seen = vec![false; self.first.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            let mut a = self.first[v];
            while a != NIL {
                let u = self.to[a];
                if !seen[u] && self.cap[a] > eps {
                    seen[u] = true;
                    stack.push(u);
                }
                a = self.next[a];
            }
        }
        seen
    }
}

/// Result of the exact sup-norm minimization.
pub(crate) struct FlowSolution {
    pub lambda: f64,
    pub w: Vec<f64>,
    pub cut_rounds: usize,
}

struct CutRound {
    flow_deficit: f64,
    set: Vec<bool>,
    w: Vec<f64>,
}

fn cut_round(shape: &LatticeShape, edges: &[(usize, usize)], c: &[f64], lambda: f64, eps: f64) -> CutRound {
    let m = shape.len();
    let s = m;
    let t = m + 1;
    let mut net = FlowNetwork::new(m + 2, 2 * (edges.len() + m));
    let mut edge_arcs = Vec::with_capacity(edges.len());
    for &(near, far) in edges {
        edge_arcs.push(net.add_pair(near, far, lambda, lambda));
    }
    let mut supply = 0.0;
    for (i, &ci) in c.iter().enumerate() {
        if ci > 0.0 {
            net.add_pair(s, i, ci, 0.0);
            supply += ci;
        } else if ci < 0.0 {
            net.add_pair(i, t, -ci, 0.0);
        }
    }
    let flow = net.max_flow(s, t, eps);
    let seen = net.reachable(s, eps);
    let w = edge_arcs
        .iter()
        .map(|&a| {
            // Net flow near → far is half the residual imbalance of the pair.
            let forward = 0.5 * (net.cap[a ^ 1] - net.cap[a]);
            -forward
        })
        .collect();
    CutRound {
        flow_deficit: supply - flow,
        set: seen[..m].to_vec(),
        w,
    }
}

/// `Λ = min ‖w‖∞ s.t. Bᵀw = c` for a mean-zero `c`.
pub(crate) fn min_sup_norm(shape: &LatticeShape, c: &[f64]) -> FlowSolution {
    let m = shape.len();
    let edges = shape.edge_list();
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if edges.is_empty() || scale == 0.0 {
        return FlowSolution {
            lambda: 0.0,
            w: vec![0.0; edges.len()],
            cut_rounds: 0,
        };
    }
    let eps = SOURCE_EPS * scale;
    let degrees = shape.degrees();

    // Best singleton cut as the starting lower bound.
    let mut lambda = (0..m)
        .map(|i| c[i].abs() / degrees[i])
        .fold(0.0f64, f64::max);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let round = cut_round(shape, &edges, c, lambda, eps);
        let supply: f64 = c.iter().filter(|v| **v > 0.0).sum();
        let feasible = round.flow_deficit <= 1e-12 * supply.max(scale);
        let (gain, boundary) = cut_value(&edges, c, &round.set);
        let improves = boundary > 0 && gain / boundary as f64 > lambda * (1.0 + 1e-14);
        if feasible || !improves || rounds > 64 {
            return FlowSolution {
                lambda,
                w: round.w.iter().map(|v| v.clamp(-lambda, lambda)).collect(),
                cut_rounds: rounds,
            };
        }
        lambda = gain / boundary as f64;
    }
}

/// `(c(S), |∂S|)` for the site set flagged in `set`.
fn cut_value(edges: &[(usize, usize)], c: &[f64], set: &[bool]) -> (f64, usize) {
    let gain: f64 = c.iter().zip(set).filter(|(_, &s)| s).map(|(v, _)| v).sum();
    let boundary = edges.iter().filter(|&&(a, b)| set[a] != set[b]).count();
    (gain, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_matches_partial_sums() {
        let shape = LatticeShape::line(3).unwrap();
        let c = [-1.0, -1.0, 2.0];
        let sol = min_sup_norm(&shape, &c);
        assert!((sol.lambda - 2.0).abs() < 1e-12);
        assert!((sol.w[0] - 1.0).abs() < 1e-12 && (sol.w[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_supply() {
        let shape = LatticeShape::new(vec![3, 3]).unwrap();
        let sol = min_sup_norm(&shape, &[0.0; 9]);
        assert_eq!(sol.lambda, 0.0);
    }
}
