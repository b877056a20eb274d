//! Minimum-cost perfect matching.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// A cost matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> CostMatrix {
        assert_eq!(data.len(), rows * cols, "cost matrix shape");
        CostMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> CostMatrix {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        CostMatrix::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|c| !c.is_finite()) {
            Some(k) => Err(Error::NonFiniteCost(k / self.cols, k % self.cols)),
            None => Ok(()),
        }
    }
}

/// Hungarian method with row/column potentials. Returns `(assignment, u, v)`
/// where `assignment[i]` is the column of row `i`.
fn hungarian(c: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = c.rows;
    // 1-based arrays, index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c.at(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

/// Re-route so that row `row` takes column `col` while rows before `row`
/// keep theirs, moving only along tight edges. Returns false if impossible.
fn reroute(
    row: usize,
    col: usize,
    tight: &[Vec<usize>],
    assign: &mut [usize],
    owner: &mut [usize],
) -> bool {
    let n = assign.len();
    let target = assign[row];
    let start = owner[col];
    // BFS over rows: from row r we may move r to any tight column c != col;
    // the row owning c must move on, until we reach `target`.
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[start] = true;
    seen[row] = true;
    let mut queue = VecDeque::from([start]);
    let mut end: Option<(usize, usize)> = None;
    'bfs: while let Some(r) = queue.pop_front() {
        for &c in &tight[r] {
            if c == col {
                continue;
            }
            if c == target {
                end = Some((r, c));
                break 'bfs;
            }
            let next = owner[c];
            if next < row || seen[next] {
                continue;
            }
            seen[next] = true;
            prev[next] = Some((r, c));
            queue.push_back(next);
        }
    }
    let Some((mut r, mut c)) = end else { return false };
    loop {
        assign[r] = c;
        owner[c] = r;
        if r == start {
            break;
        }
        (r, c) = prev[r].expect("bfs tree");
    }
    assign[row] = col;
    owner[col] = row;
    true
}

/// Minimum-cost perfect matching of a square matrix. Among optimal
/// matchings the lexicographically smallest permutation is returned.
pub fn assignment_solve(cost: &CostMatrix) -> Result<(Vec<usize>, f64)> {
    if cost.rows != cost.cols {
        return Err(Error::NotSquare {
            rows: cost.rows,
            cols: cost.cols,
        });
    }
    cost.check_finite()?;
    let n = cost.rows;
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let (mut assign, u, v) = hungarian(cost);
    let scale = cost.data.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-9 * scale;
    // With optimal potentials, the optimal matchings are exactly the perfect
    // matchings that use only tight edges.
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| cost.at(i, j) - u[i] - v[j] <= eps).collect())
        .collect();
    let mut owner = vec![0usize; n];
    for (i, &j) in assign.iter().enumerate() {
        owner[j] = i;
    }
    for i in 0..n {
        for &j in &tight[i] {
            if j >= assign[i] {
                break;
            }
            if owner[j] > i && reroute(i, j, &tight, &mut assign, &mut owner) {
                break;
            }
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost.at(i, j)).sum();
    Ok((assign, total))
}
