//! Exact Wasserstein-2 distance between equal-size, equal-weight empirical
//! measures, via a shortest-augmenting-path (Hungarian) assignment solver.

use crate::error::{domain, Result};

/// Uniform atomic measure on `m` points of `R^d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return domain(format!(
                "need a non-empty multiple of dim = {dim} coordinates, got {}",
                points.len()
            ));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return domain("empirical measure has non-finite coordinates");
        }
        Ok(EmpiricalMeasure { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return domain("rows must have equal length");
        }
        Self::new(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn translated(&self, u: &[f64]) -> Self {
        let points = self
            .points
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(u).map(|(a, b)| a + b))
            .collect();
        EmpiricalMeasure { dim: self.dim, points }
    }
}

pub const MAX_EXACT: usize = 2048;
pub const MAX_BRUTEFORCE: usize = 8;

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<()> {
    if mu.dim != nu.dim {
        return domain(format!("dimension mismatch: {} vs {}", mu.dim, nu.dim));
    }
    if mu.len() != nu.len() {
        return domain(format!(
            "measures must have equal size, got {} and {}",
            mu.len(),
            nu.len()
        ));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
    let m = mu.len();
    let mut c = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            c.push(sq_dist(mu.point(i), nu.point(j)));
        }
    }
    c
}

/// Minimum-cost perfect matching on a dense `n × n` cost matrix (row-major).
/// Returns `assignment[row] = column`. Potentials-based shortest augmenting
/// path, `O(n³)`.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    if n == 0 {
        return Vec::new();
    }
    // 1-based with a virtual column 0, as in the usual formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1]; // owner[col] = row
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            let crow = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = crow[j - 1] - u[i0] - v[j];
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

fn w2_of_assignment(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, perm: &[usize]) -> f64 {
    // summed in sorted order so that swapping the arguments is bitwise symmetric
    let mut costs: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| sq_dist(mu.point(i), nu.point(j))).collect();
    costs.sort_by(f64::total_cmp);
    (costs.iter().sum::<f64>() / perm.len() as f64).sqrt()
}

/// `W2(μ, ν)` for equal-size uniform measures with at most
/// [`MAX_EXACT`] atoms.
pub fn w2_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_pair(mu, nu)?;
    let m = mu.len();
    if m > MAX_EXACT {
        return domain(format!("exact W2 supports at most {MAX_EXACT} atoms, got {m}"));
    }
    let perm = solve_assignment(&cost_matrix(mu, nu), m);
    Ok(w2_of_assignment(mu, nu, &perm))
}

/// `W2` by enumerating all `m!` permutations (Heap's algorithm); `m ≤ 8`.
pub fn w2_bruteforce(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_pair(mu, nu)?;
    let m = mu.len();
    if m > MAX_BRUTEFORCE {
        return domain(format!("brute-force W2 refuses m = {m} > {MAX_BRUTEFORCE}"));
    }
    let cost = cost_matrix(mu, nu);
    let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum::<f64>();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = eval(&perm);
    let mut c = vec![0usize; m];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best / m as f64).sqrt())
}

/// `sqrt((1/m) Σ |x_i − y_i|²)`, the cost of the index-matched coupling.
pub fn identity_coupling_cost(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    check_pair(mu, nu)?;
    let perm: Vec<usize> = (0..mu.len()).collect();
    Ok(w2_of_assignment(mu, nu, &perm))
}
