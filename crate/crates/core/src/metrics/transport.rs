//! Exact optimal transport between uniform empirical measures.

use super::assignment::{assignment_solve, CostMatrix};
use crate::error::{Error, Result};

/// Largest number of points per side the exact solvers accept.
pub const SOLVER_CAP: usize = 512;

/// A coupling between two uniform empirical measures and its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub n: usize,
    pub m: usize,
    /// Row-major `n x m` masses; row sums are `1/n`, column sums `1/m`.
    pub coupling: Vec<f64>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.m + j]
    }
}

/// Squared Euclidean distances between the rows of two `d`-column matrices.
pub fn squared_distances(a: &[f64], b: &[f64], d: usize) -> CostMatrix {
    let n = a.len().checked_div(d).unwrap_or(0);
    let m = b.len().checked_div(d).unwrap_or(0);
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        let x = &a[i * d..(i + 1) * d];
        for j in 0..m {
            let y = &b[j * d..(j + 1) * d];
            data.push(x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum());
        }
    }
    CostMatrix::new(n, m, data)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

/// Successive shortest paths with Dijkstra and Johnson potentials on the
/// bipartite network source -> rows (capacity m) -> columns (capacity n)
/// -> sink. Integer capacities keep the optimum exact; masses are
/// `flow / (n m)`.
fn min_cost_flow(cost: &CostMatrix) -> Vec<i64> {
    let (n, m) = (cost.rows, cost.cols);
    let nodes = n + m + 2;
    let (src, sink) = (n + m, n + m + 1);
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let add = |edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: i64, c: f64| {
        adj[u].push(edges.len());
        edges.push(Edge { to: v, cap, cost: c });
        adj[v].push(edges.len());
        edges.push(Edge { to: u, cap: 0, cost: -c });
    };
    for i in 0..n {
        add(&mut edges, &mut adj, src, i, m as i64, 0.0);
    }
    let first_pair = edges.len();
    for i in 0..n {
        for j in 0..m {
            add(&mut edges, &mut adj, i, n + j, i64::MAX / 4, cost.at(i, j));
        }
    }
    for j in 0..m {
        add(&mut edges, &mut adj, n + j, sink, n as i64, 0.0);
    }

    let total = (n * m) as i64;
    let mut pot = vec![0.0f64; nodes];
    // Initial potentials: all reduced costs start non-negative when rows sit
    // at 0 and each column at its cheapest incoming edge.
    for j in 0..m {
        pot[n + j] = (0..n).map(|i| cost.at(i, j)).fold(f64::INFINITY, f64::min);
    }
    pot[sink] = pot[n..n + m].iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut flow = 0i64;
    let mut dist = vec![f64::INFINITY; nodes];
    let mut prev_edge = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    while flow < total {
        dist.fill(f64::INFINITY);
        prev_edge.fill(usize::MAX);
        done.fill(false);
        dist[src] = 0.0;
        // Dense Dijkstra: O(V^2 + E), fine for complete bipartite graphs.
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (k, &dk) in dist.iter().enumerate() {
                if !done[k] && dk < best {
                    best = dk;
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &ei in &adj[u] {
                let e = &edges[ei];
                if e.cap <= 0 || done[e.to] {
                    continue;
                }
                let rc = (e.cost + pot[u] - pot[e.to]).max(0.0);
                let nd = dist[u] + rc;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev_edge[e.to] = ei;
                }
            }
        }
        assert!(dist[sink].is_finite(), "transport network stays feasible");
        for k in 0..nodes {
            if dist[k].is_finite() {
                pot[k] += dist[k];
            }
        }
        let mut push = total - flow;
        let mut v = sink;
        while v != src {
            let ei = prev_edge[v];
            push = push.min(edges[ei].cap);
            v = edges[ei ^ 1].to;
        }
        let mut v = sink;
        while v != src {
            let ei = prev_edge[v];
            edges[ei].cap -= push;
            edges[ei ^ 1].cap += push;
            v = edges[ei ^ 1].to;
        }
        flow += push;
    }
    (0..n * m).map(|k| edges[first_pair + 2 * k + 1].cap).collect()
}

/// Optimal coupling for the squared-distance cost between two point sets
/// given as row-major `d`-column matrices with uniform weights.
pub fn optimal_transport(a: &[f64], b: &[f64], d: usize) -> Result<TransportPlan> {
    let cost = squared_distances(a, b, d);
    let (n, m) = (cost.rows, cost.cols);
    if n == 0 || m == 0 {
        return Err(Error::EmptySample);
    }
    if n > SOLVER_CAP || m > SOLVER_CAP {
        return Err(Error::TooLarge { n, m, cap: SOLVER_CAP });
    }
    if let Some(k) = cost.data.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost(k / m, k % m));
    }
    let mut coupling = vec![0.0; n * m];
    let cost_value = if n == m {
        let (perm, total) = assignment_solve(&cost)?;
        for (i, j) in perm.into_iter().enumerate() {
            coupling[i * m + j] = 1.0 / n as f64;
        }
        total / n as f64
    } else {
        let flows = min_cost_flow(&cost);
        let scale = 1.0 / (n * m) as f64;
        let mut total = 0.0;
        for (k, f) in flows.into_iter().enumerate() {
            if f > 0 {
                coupling[k] = f as f64 * scale;
                total += f as f64 * cost.data[k];
            }
        }
        total * scale
    };
    Ok(TransportPlan {
        n,
        m,
        coupling,
        cost: cost_value,
    })
}

/// Wasserstein-2 distance `sqrt(min_pi sum pi_ij |x_i - y_j|^2)`.
pub fn wasserstein2(a: &[f64], b: &[f64], d: usize) -> Result<f64> {
    Ok(optimal_transport(a, b, d)?.cost.max(0.0).sqrt())
}

/// Z-score every column over the union of both sets. Constant columns are
/// only centred.
pub fn normalize_pair(a: &[f64], b: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    if d == 0 {
        return (a.to_vec(), b.to_vec());
    }
    let rows = (a.len() + b.len()) / d;
    let mut mean = vec![0.0; d];
    for row in a.chunks(d).chain(b.chunks(d)) {
        for k in 0..d {
            mean[k] += row[k];
        }
    }
    mean.iter_mut().for_each(|x| *x /= rows as f64);
    let mut var = vec![0.0; d];
    for row in a.chunks(d).chain(b.chunks(d)) {
        for k in 0..d {
            var[k] += (row[k] - mean[k]).powi(2);
        }
    }
    let sd: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / rows as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let z = |m: &[f64]| -> Vec<f64> {
        m.chunks(d)
            .flat_map(|row| (0..d).map(|k| (row[k] - mean[k]) / sd[k]).collect::<Vec<_>>())
            .collect()
    };
    (z(a), z(b))
}
