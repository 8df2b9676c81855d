//! A small dense bounded-variable simplex solver.
//!
//! Maximizes `c·x` subject to linear rows and box bounds `l ≤ x ≤ u`
//! (lower bounds finite, upper bounds possibly infinite). Two-phase method
//! with Bland's rule, so it terminates on degenerate instances. Problem sizes
//! here are tiny (tens of variables), so the basis matrix is refactorized by
//! Gaussian elimination on every iteration.

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;
const MAX_ITERS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
pub struct LpBuilder {
    c: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<f64>, Rel, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpBuilder {
    /// `n` variables with bounds `[lower_j, upper_j]`; upper may be `+inf`.
    pub fn new(c: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(c.len(), lower.len());
        assert_eq!(c.len(), upper.len());
        LpBuilder { c, lower, upper, rows: Vec::new() }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rel: Rel, rhs: f64) {
        assert_eq!(coeffs.len(), self.c.len());
        self.rows.push((coeffs, rel, rhs));
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let n0 = self.c.len();
        let m = self.rows.len();
        // add one slack per inequality row
        let n_slack = self.rows.iter().filter(|(_, r, _)| *r != Rel::Eq).count();
        let n = n0 + n_slack;
        let mut c = self.c.clone();
        c.resize(n, 0.0);
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        lower.resize(n, 0.0);
        upper.resize(n, f64::INFINITY);
        for (j, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate().take(n0) {
            if !lo.is_finite() || hi < lo {
                return Err(Error::InvalidInput(format!(
                    "variable {j} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        let mut a = vec![vec![0.0; n]; m];
        let mut b = vec![0.0; m];
        let mut slack = n0;
        for (i, (coeffs, rel, rhs)) in self.rows.iter().enumerate() {
            a[i][..n0].copy_from_slice(coeffs);
            b[i] = *rhs;
            match rel {
                Rel::Eq => {}
                Rel::Le => {
                    a[i][slack] = 1.0;
                    slack += 1;
                }
                Rel::Ge => {
                    a[i][slack] = -1.0;
                    slack += 1;
                }
            }
        }
        solve_standard(&c, &a, &b, &lower, &upper).map(|out| match out {
            LpOutcome::Optimal { value, mut x } => {
                x.truncate(n0);
                LpOutcome::Optimal { value, x }
            }
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Maximize `c·x` s.t. `A x = b`, `l ≤ x ≤ u`.
fn solve_standard(
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<LpOutcome> {
    let n = c.len();
    let m = a.len();
    let total = n + m;

    // extended columns: original variables then one artificial per row
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    lo.resize(total, 0.0);
    hi.resize(total, f64::INFINITY);
    let mut x = vec![0.0; total];
    let mut status = vec![VarStatus::AtLower; total];
    for j in 0..n {
        x[j] = lo[j];
    }
    let mut art_sign = vec![1.0; m];
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        let r: f64 = b[i] - (0..n).map(|j| a[i][j] * x[j]).sum::<f64>();
        art_sign[i] = if r >= 0.0 { 1.0 } else { -1.0 };
        x[n + i] = r.abs();
        status[n + i] = VarStatus::Basic;
        basis.push(n + i);
    }

    let column = |j: usize, buf: &mut Vec<f64>| {
        buf.clear();
        if j < n {
            buf.extend((0..m).map(|i| a[i][j]));
        } else {
            buf.extend((0..m).map(|i| if i == j - n { art_sign[i] } else { 0.0 }));
        }
    };

    // phase 1: drive artificials to zero
    let mut c1 = vec![0.0; total];
    for item in c1.iter_mut().skip(n) {
        *item = -1.0;
    }
    run_simplex(&c1, &column, &lo, &hi, &mut basis, &mut status, &mut x, m)?;
    let infeas: f64 = (n..total).map(|j| x[j]).sum();
    if infeas > 1e-7 {
        return Ok(LpOutcome::Infeasible);
    }

    // phase 2: pin artificials at zero and optimize the real objective
    for j in n..total {
        hi[j] = 0.0;
        x[j] = 0.0;
    }
    let mut c2 = c.to_vec();
    c2.resize(total, 0.0);
    let unbounded =
        !run_simplex(&c2, &column, &lo, &hi, &mut basis, &mut status, &mut x, m)?;
    if unbounded {
        return Ok(LpOutcome::Unbounded);
    }
    let value: f64 = (0..n).map(|j| c[j] * x[j]).sum();
    Ok(LpOutcome::Optimal { value, x: x[..n].to_vec() })
}

/// One simplex run; returns `Ok(true)` at optimality, `Ok(false)` when the
/// objective is unbounded.
#[allow(clippy::too_many_arguments)]
fn run_simplex(
    c: &[f64],
    column: &impl Fn(usize, &mut Vec<f64>),
    lo: &[f64],
    hi: &[f64],
    basis: &mut [usize],
    status: &mut [VarStatus],
    x: &mut [f64],
    m: usize,
) -> Result<bool> {
    let total = c.len();
    let mut col = Vec::with_capacity(m);
    for _ in 0..MAX_ITERS {
        // basis matrix and its transpose solve for the duals
        let mut bm = vec![vec![0.0; m]; m];
        for (k, &jb) in basis.iter().enumerate() {
            column(jb, &mut col);
            for i in 0..m {
                bm[i][k] = col[i];
            }
        }
        let cb: Vec<f64> = basis.iter().map(|&jb| c[jb]).collect();
        let y = solve_transposed(&bm, &cb)?;

        // Bland: entering = smallest eligible index
        let mut entering = None;
        for j in 0..total {
            if status[j] == VarStatus::Basic || lo[j] == hi[j] {
                continue;
            }
            column(j, &mut col);
            let d = c[j] - dot(&y, &col);
            let eligible = match status[j] {
                VarStatus::AtLower => d > TOL,
                VarStatus::AtUpper => d < -TOL,
                VarStatus::Basic => false,
            };
            if eligible {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else { return Ok(true) };
        let t = if status[j] == VarStatus::AtLower { 1.0 } else { -1.0 };
        column(j, &mut col);
        let w = solve_linear(&bm, &col)?;

        // ratio test, including the entering variable's own bound flip
        let mut delta = hi[j] - lo[j]; // may be inf
        let mut leaving: Option<(usize, VarStatus)> = None;
        for (i, &jb) in basis.iter().enumerate() {
            let piv = t * w[i];
            let (limit, hit) = if piv > TOL {
                ((x[jb] - lo[jb]) / piv, VarStatus::AtLower)
            } else if piv < -TOL {
                if hi[jb].is_finite() {
                    ((hi[jb] - x[jb]) / -piv, VarStatus::AtUpper)
                } else {
                    continue;
                }
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            if limit < delta - 1e-12 {
                delta = limit;
                leaving = Some((i, hit));
            } else if limit <= delta + 1e-12 {
                // Bland tie-break: smallest leaving variable index
                let take = match leaving {
                    None => true,
                    Some((li, _)) => jb < basis[li],
                };
                if take {
                    delta = delta.min(limit);
                    leaving = Some((i, hit));
                }
            }
        }
        if delta.is_infinite() {
            return Ok(false);
        }
        x[j] += t * delta;
        for (i, &jb) in basis.iter().enumerate() {
            x[jb] -= t * delta * w[i];
        }
        match leaving {
            Some((i, hit)) => {
                let out = basis[i];
                status[out] = hit;
                x[out] = match hit {
                    VarStatus::AtLower => lo[out],
                    VarStatus::AtUpper => hi[out],
                    VarStatus::Basic => unreachable!(),
                };
                basis[i] = j;
                status[j] = VarStatus::Basic;
            }
            None => {
                // bound flip
                status[j] = match status[j] {
                    VarStatus::AtLower => VarStatus::AtUpper,
                    VarStatus::AtUpper => VarStatus::AtLower,
                    VarStatus::Basic => unreachable!(),
                };
                x[j] = match status[j] {
                    VarStatus::AtLower => lo[j],
                    VarStatus::AtUpper => hi[j],
                    VarStatus::Basic => unreachable!(),
                };
            }
        }
    }
    Err(Error::Degenerate("simplex iteration limit reached".into()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `M v = rhs` by Gaussian elimination with partial pivoting.
fn solve_linear(mat: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = mat.len();
    let mut a: Vec<Vec<f64>> = mat.iter().map(|row| {
        let mut r = row.clone();
        r.push(0.0);
        r
    }).collect();
    for (i, &v) in rhs.iter().enumerate() {
        a[i][m] = v;
    }
    for col in 0..m {
        let (piv, mag) = (col..m)
            .map(|i| (i, a[i][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if mag < 1e-12 {
            return Err(Error::Degenerate("singular basis matrix".into()));
        }
        a.swap(col, piv);
        for i in 0..m {
            if i == col {
                continue;
            }
            let f = a[i][col] / a[col][col];
            if f != 0.0 {
                for k in col..=m {
                    a[i][k] -= f * a[col][k];
                }
            }
        }
    }
    Ok((0..m).map(|i| a[i][m] / a[i][i]).collect())
}

/// Solve `Mᵀ v = rhs`.
fn solve_transposed(mat: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = mat.len();
    let t: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|k| mat[k][i]).collect()).collect();
    solve_linear(&t, rhs)
}
