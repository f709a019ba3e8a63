//! Dense linear assignment (Hungarian algorithm with potentials).
//!
//! [`solve_square`] returns the lexicographically smallest permutation among
//! all cost-optimal ones. It solves once in O(n^3), then walks rows in order
//! and moves each onto the smallest column that keeps a perfect matching in
//! the equality graph of the optimal dual. That graph contains exactly the
//! optimal assignments, so the walk never leaves the optimum.

use crate::error::{Error, Result};

/// Relative slack for deciding that a reduced cost is zero.
const TIGHT_REL: f64 = 1e-10;

fn validate(costs: &[Vec<f64>], cols: usize) -> Result<()> {
    for (i, row) in costs.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::shape(format!(
                "cost row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|c| !c.is_finite()) {
            return Err(Error::Numeric(format!("cost[{i}][{j}] = {}", row[j])));
        }
    }
    Ok(())
}

/// Solves `rows <= cols`. Returns the column of every row plus the row and
/// column potentials (`u[i] + v[j] <= cost[i][j]`, tight on the matching).
fn hungarian(costs: &[Vec<f64>], cols: usize) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = costs.len();
    let m = cols;
    // 1-based with index 0 as the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Optimal assignment of an `n x n` cost matrix, as `sigma[row] = column`.
///
/// Among equal-cost optima the lexicographically smallest `sigma` wins.
pub fn solve_square(costs: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = costs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    validate(costs, n)?;
    let (mut row_to_col, u, v) = hungarian(costs, n);

    let scale = costs.iter().flatten().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let tol = TIGHT_REL * scale * n as f64;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| costs[i][j] - u[i] - v[j] <= tol).collect())
        .collect();

    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut col_fixed = vec![false; n];

    for i in 0..n {
        for j in 0..n {
            if col_fixed[j] || !tight[i][j] {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            if let Some(path) = alternating_path(&tight, &row_to_col, &col_to_row, &col_fixed, i, j) {
                // path = [(row, new column), ...] ending on row i's old column
                for &(r, c) in &path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        col_fixed[row_to_col[i]] = true;
    }
    Ok(row_to_col)
}

/// Searches an alternating path of tight edges that frees column `target`
/// for row `i`: starts at the row holding `target` and ends at the column
/// currently held by `i`, using only unfixed columns.
fn alternating_path(
    tight: &[Vec<bool>],
    row_to_col: &[usize],
    col_to_row: &[usize],
    col_fixed: &[bool],
    i: usize,
    target: usize,
) -> Option<Vec<(usize, usize)>> {
    let n = tight.len();
    let goal = row_to_col[i];
    let start = col_to_row[target];
    // prev[row] = (previous row, column taken by that previous row)
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[start] = true;
    seen[i] = true;
    let mut queue = std::collections::VecDeque::from([start]);

    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if col_fixed[c] || c == target || !tight[r][c] || row_to_col[r] == c {
                continue;
            }
            if c == goal {
                let mut path = vec![(r, c)];
                let mut cur = r;
                while let Some((pr, pc)) = prev[cur] {
                    path.push((pr, pc));
                    cur = pr;
                }
                return Some(path);
            }
            let next = col_to_row[c];
            if !seen[next] {
                seen[next] = true;
                prev[next] = Some((r, c));
                queue.push_back(next);
            }
        }
    }
    None
}

/// Optimal assignment for a rectangular matrix with `rows <= cols`; every
/// row gets a distinct column. No tie-breaking guarantee.
pub fn solve_rectangular(costs: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = costs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = costs[0].len();
    if n > m {
        return Err(Error::shape(format!("{n} rows cannot be matched into {m} columns")));
    }
    validate(costs, m)?;
    Ok(hungarian(costs, m).0)
}

/// `Σ costs[i][sigma[i]]`, summed in row order.
pub fn assignment_cost(costs: &[Vec<f64>], sigma: &[usize]) -> f64 {
    sigma.iter().enumerate().map(|(i, &j)| costs[i][j]).sum()
}
