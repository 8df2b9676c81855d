//! Linear-program solvers for classes whose members are linear in a finite
//! parameter vector: grid functions (one value per cell) and bounded-degree
//! polynomials (one coefficient per monomial). Value, mean, gradient, sign
//! and SHAP constraints are all linear rows in those parameters.

use super::simplex::{LpBuilder, LpOutcome, Rel};
use super::{Constraint, LabeledSample, SupResult, Witness};
use crate::error::{Error, Result};
use crate::geometry::{Distribution, Grid, Interval, Point};
use crate::models::{uniform_moment, FunctionModel, GridFunction, PolynomialModel};

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Shapley weight `|S|!·(d−|S|−1)!/d!`.
fn shapley_weight(s: usize, d: usize) -> f64 {
    factorial(s) * factorial(d - s - 1) / factorial(d)
}

fn is_zero_vector(v: &[f64]) -> bool {
    v.iter().all(|x| x.abs() <= 1e-12)
}

fn solve(
    lp: LpBuilder,
    witness_of: impl FnOnce(Vec<f64>) -> FunctionModel,
) -> Result<SupResult> {
    match lp.solve()? {
        LpOutcome::Optimal { value, x } => {
            Ok(SupResult::exact(value, Some(Witness::Model(witness_of(x)))))
        }
        LpOutcome::Infeasible => Err(Error::Infeasible(
            "no class member satisfies all constraints".into(),
        )),
        LpOutcome::Unbounded => Err(Error::Degenerate(
            "box-constrained program reported unbounded".into(),
        )),
    }
}

pub fn grid_sup(
    grid: &Grid,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    let cells = grid.cell_count();
    let n = sample.n() as f64;
    let mut c = vec![0.0; cells];
    for (p, &s) in sample.points.iter().zip(&sample.labels) {
        c[grid.flat_index(&grid.cell_index(p)?)] += s as f64 / n;
    }
    let mut lower: Vec<f64> = vec![-1.0; cells];
    let mut upper: Vec<f64> = vec![1.0; cells];
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = Vec::new();

    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                if value.abs() > 1.0 + 1e-12 {
                    return Err(Error::Infeasible(format!(
                        "value constraint {value} outside the class range [-1, 1]"
                    )));
                }
                let f = grid.flat_index(&grid.cell_index(point)?);
                lower[f] = lower[f].max(*value);
                upper[f] = upper[f].min(*value);
                if lower[f] > upper[f] + 1e-12 {
                    return Err(Error::Infeasible(
                        "conflicting constraints on one grid cell".into(),
                    ));
                }
            }
            Constraint::SignAt { point, sign } => {
                let f = grid.flat_index(&grid.cell_index(point)?);
                if *sign >= 0 {
                    lower[f] = lower[f].max(0.0);
                } else {
                    upper[f] = upper[f].min(0.0);
                }
                if lower[f] > upper[f] + 1e-12 {
                    return Err(Error::Infeasible(
                        "conflicting constraints on one grid cell".into(),
                    ));
                }
            }
            Constraint::GradientAt { vector, .. } => {
                if !is_zero_vector(vector) {
                    return Err(Error::Infeasible(
                        "grid functions have zero gradient; a nonzero gradient constraint is \
                         unsatisfiable"
                            .into(),
                    ));
                }
            }
            Constraint::MeanEquals { value, dist } => {
                let coeffs: Vec<f64> = grid
                    .cell_indices()
                    .iter()
                    .map(|idx| dist.box_mass(&grid.cell_box(idx)))
                    .collect::<Result<_>>()?;
                rows.push((coeffs, Rel::Eq, *value));
            }
            Constraint::ShapEquals { point, phi, dist } => {
                rows.extend(shap_rows_grid(grid, point, phi, dist)?);
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on the grid class"
                )))
            }
        }
    }

    let mut lp = LpBuilder::new(c, lower, upper);
    for (coeffs, rel, rhs) in rows {
        lp.add_row(coeffs, rel, rhs);
    }
    let g = grid.clone();
    solve(lp, move |x| {
        let values = x.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        FunctionModel::Grid(GridFunction::new(g, values).expect("cell count matches"))
    })
}

/// One equality row per feature: interventional SHAP at `x0` is linear in the
/// cell values, with per-cell coefficients built from match indicators (cell
/// owns `x0`'s coordinate) and marginal length ratios.
fn shap_rows_grid(
    grid: &Grid,
    x0: &Point,
    phi: &[f64],
    dist: &Distribution,
) -> Result<Vec<(Vec<f64>, Rel, f64)>> {
    if !matches!(dist, Distribution::UniformBox { .. }) {
        return Err(Error::UnsupportedDistribution(
            "SHAP constraints need product-structured marginals".into(),
        ));
    }
    let d = grid.dim();
    if phi.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: phi.len() });
    }
    let i0 = grid.cell_index(x0)?;
    let cell_list = grid.cell_indices();
    let mut rows = Vec::with_capacity(d);
    for j in 0..d {
        let mut coeffs = vec![0.0; cell_list.len()];
        for (flat, idx) in cell_list.iter().enumerate() {
            let matches: Vec<bool> = (0..d).map(|k| idx[k] == i0[k]).collect();
            let ratios: Vec<f64> = (0..d)
                .map(|k| {
                    let e = grid.edges(k);
                    let cell_iv = Interval::closed(e[idx[k]], e[idx[k] + 1]);
                    let marg = dist.marginal(k);
                    cell_iv.overlap_length(&marg) / marg.length()
                })
                .collect();
            let mut coef = 0.0;
            for mask in 0..(1usize << d) {
                if mask >> j & 1 == 1 {
                    continue;
                }
                let s = mask.count_ones() as usize;
                let w = shapley_weight(s, d);
                let mut with_j = 1.0;
                let mut without_j = 1.0;
                for k in 0..d {
                    let in_s = mask >> k & 1 == 1;
                    let m = if matches[k] { 1.0 } else { 0.0 };
                    if in_s {
                        with_j *= m;
                        without_j *= m;
                    } else if k == j {
                        with_j *= m;
                        without_j *= ratios[k];
                    } else {
                        with_j *= ratios[k];
                        without_j *= ratios[k];
                    }
                }
                coef += w * (with_j - without_j);
            }
            coeffs[flat] = coef;
        }
        rows.push((coeffs, Rel::Eq, phi[j]));
    }
    Ok(rows)
}

/// Multi-indices `α` with `|α| ≤ degree` over `dim` variables, in a fixed
/// deterministic order.
pub fn monomials(degree: usize, dim: usize) -> Vec<Vec<usize>> {
    fn rec(degree_left: usize, dim: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for k in 0..=degree_left {
            prefix.push(k);
            rec(degree_left - k, dim, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(degree, dim, &mut Vec::new(), &mut out);
    out
}

fn monomial_value(alpha: &[usize], p: &Point) -> f64 {
    alpha.iter().zip(p.coords()).map(|(&k, &x)| x.powi(k as i32)).product()
}

fn monomial_gradient(alpha: &[usize], p: &Point, j: usize) -> f64 {
    if alpha[j] == 0 {
        return 0.0;
    }
    let mut v = alpha[j] as f64;
    for (k, (&a, &x)) in alpha.iter().zip(p.coords()).enumerate() {
        let a = if k == j { a - 1 } else { a };
        v *= x.powi(a as i32);
    }
    v
}

fn monomial_moment(alpha: &[usize], dist: &Distribution) -> f64 {
    match dist {
        Distribution::UniformBox { support } => alpha
            .iter()
            .enumerate()
            .map(|(k, &a)| uniform_moment(support.dims[k].lo(), support.dims[k].hi(), a))
            .product(),
        Distribution::DiagonalSegment { .. } => {
            let m = dist.marginal(0);
            uniform_moment(m.lo(), m.hi(), alpha.iter().sum())
        }
    }
}

pub fn poly_sup(
    degree: usize,
    bound: f64,
    dim: usize,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    if sample.points[0].dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: sample.points[0].dim() });
    }
    let alphas = monomials(degree, dim);
    let n = sample.n() as f64;
    let mut c = vec![0.0; alphas.len()];
    for (p, &s) in sample.points.iter().zip(&sample.labels) {
        for (cj, alpha) in c.iter_mut().zip(&alphas) {
            *cj += s as f64 / n * monomial_value(alpha, p);
        }
    }
    let mut lp = LpBuilder::new(c, vec![-bound; alphas.len()], vec![bound; alphas.len()]);

    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                let row = alphas.iter().map(|a| monomial_value(a, point)).collect();
                lp.add_row(row, Rel::Eq, *value);
            }
            Constraint::GradientAt { point, vector } => {
                if vector.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: vector.len() });
                }
                for (j, &vj) in vector.iter().enumerate() {
                    let row = alphas.iter().map(|a| monomial_gradient(a, point, j)).collect();
                    lp.add_row(row, Rel::Eq, vj);
                }
            }
            Constraint::MeanEquals { value, dist } => {
                let row = alphas.iter().map(|a| monomial_moment(a, dist)).collect();
                lp.add_row(row, Rel::Eq, *value);
            }
            Constraint::ShapEquals { point, phi, dist } => {
                if !matches!(dist, Distribution::UniformBox { .. }) {
                    return Err(Error::UnsupportedDistribution(
                        "SHAP constraints need product-structured marginals".into(),
                    ));
                }
                if phi.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: phi.len() });
                }
                for (j, &phij) in phi.iter().enumerate() {
                    let row = alphas
                        .iter()
                        .map(|a| shap_coef_poly(a, point, dist, j, dim))
                        .collect();
                    lp.add_row(row, Rel::Eq, phij);
                }
            }
            Constraint::SignAt { point, sign } => {
                let row = alphas.iter().map(|a| monomial_value(a, point)).collect();
                let rel = if *sign >= 0 { Rel::Ge } else { Rel::Le };
                lp.add_row(row, rel, 0.0);
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on the bounded polynomial class"
                )))
            }
        }
    }

    solve(lp, move |x| {
        FunctionModel::Poly(PolynomialModel {
            degree,
            terms: alphas.into_iter().zip(x).collect(),
            bound,
        })
    })
}

/// Coefficient of monomial `α` in `φ_j(x0)`: mixed products of fixed powers
/// (features in `S`) and uniform moments (features integrated out).
fn shap_coef_poly(alpha: &[usize], x0: &Point, dist: &Distribution, j: usize, d: usize) -> f64 {
    let support = dist.support();
    let fixed: Vec<f64> =
        alpha.iter().zip(x0.coords()).map(|(&a, &x)| x.powi(a as i32)).collect();
    let moments: Vec<f64> = alpha
        .iter()
        .enumerate()
        .map(|(k, &a)| uniform_moment(support.dims[k].lo(), support.dims[k].hi(), a))
        .collect();
    let mut coef = 0.0;
    for mask in 0..(1usize << d) {
        if mask >> j & 1 == 1 {
            continue;
        }
        let s = mask.count_ones() as usize;
        let w = shapley_weight(s, d);
        let mut with_j = 1.0;
        let mut without_j = 1.0;
        for k in 0..d {
            let in_s = mask >> k & 1 == 1;
            if in_s {
                with_j *= fixed[k];
                without_j *= fixed[k];
            } else if k == j {
                with_j *= fixed[k];
                without_j *= moments[k];
            } else {
                with_j *= moments[k];
                without_j *= moments[k];
            }
        }
        coef += w * (with_j - without_j);
    }
    coef
}
