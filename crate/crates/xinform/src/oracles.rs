//! Brute-force oracles: slow, independent recomputations used to cross-check
//! the fast paths (closed-form counterfactual radii, the grid linear-program
//! solver, exact Shapley values).

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::explainers::{shap_explain, shap_permutation_oracle, strong_counterfactual, Explanation};
use crate::geometry::{Distribution, Grid, Point};
use crate::models::{ClassSpec, FunctionModel, GridFunction};
use crate::rademacher::{sup_correlation, Constraint, LabeledSample};

/// Smallest permitted dense-scan resolution.
pub const MIN_SCAN_RESOLUTION: f64 = 1e-3;
/// Smallest permitted value-discretization step for the grid search.
pub const MIN_GRID_STEP: f64 = 1e-2;

/// Side-by-side result of an oracle and the fast path it checks.
#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub oracle_value: f64,
    pub fast_value: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

impl OracleComparison {
    fn new(oracle_value: f64, fast_value: f64, tolerance: f64) -> Self {
        let discrepancy = (oracle_value - fast_value).abs();
        OracleComparison {
            oracle_value,
            fast_value,
            discrepancy,
            tolerance,
            within_tolerance: discrepancy <= tolerance,
        }
    }
}

/// Exhaustive scan of the model domain at the given resolution for the
/// nearest point whose label differs from the label at `x0`; returns the
/// point and its distance.
pub fn dense_scan_counterfactual(
    model: &FunctionModel,
    x0: &Point,
    resolution: f64,
) -> Result<(Point, f64)> {
    if model.dim() != 2 {
        return Err(Error::Budget("the dense counterfactual scan supports dimension 2 only".into()));
    }
    if resolution < MIN_SCAN_RESOLUTION {
        return Err(Error::Budget(format!(
            "scan resolution {resolution} below the minimum {MIN_SCAN_RESOLUTION}"
        )));
    }
    let domain = crate::explainers::model_domain(model);
    let target = -model.label(x0)?;
    let mut best: Option<(Point, f64)> = None;
    let steps: Vec<usize> = domain
        .dims
        .iter()
        .map(|iv| ((iv.hi() - iv.lo()) / resolution).ceil() as usize)
        .collect();
    for i in 0..=steps[0] {
        let x = domain.dims[0].lo() + i as f64 * resolution;
        for j in 0..=steps[1] {
            let y = domain.dims[1].lo() + j as f64 * resolution;
            let p = Point(vec![x.min(domain.dims[0].hi()), y.min(domain.dims[1].hi())]);
            if model.label(&p)? == target {
                let d = p.distance(x0);
                if best.as_ref().map_or(true, |(_, bd)| d < *bd) {
                    best = Some((p, d));
                }
            }
        }
    }
    best.ok_or_else(|| Error::NotFound("no opposite-label point found by the scan".into()))
}

/// Compare the closed-form minimal counterfactual radius against the dense
/// scan; agreement tolerance is one scan-cell diagonal.
pub fn compare_strong_counterfactual(
    model: &FunctionModel,
    x0: &Point,
    resolution: f64,
) -> Result<OracleComparison> {
    let explanation = strong_counterfactual(model, x0)?;
    let Explanation::Counterfactual { radius: Some(radius), .. } = explanation else {
        return Err(Error::NotFound("no certified radius returned".into()));
    };
    let (_, scan) = dense_scan_counterfactual(model, x0, resolution)?;
    Ok(OracleComparison::new(scan, radius, resolution * 2f64.sqrt()))
}

/// Compare exact Shapley attributions against the permutation-enumeration
/// oracle; reports the largest per-component discrepancy.
pub fn compare_shap(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
) -> Result<OracleComparison> {
    let Explanation::Shap { phi } = shap_explain(model, dist, x0)? else { unreachable!() };
    let Explanation::Shap { phi: oracle } = shap_permutation_oracle(model, dist, x0)? else {
        unreachable!()
    };
    let max_delta = phi
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    // report the components' sums so the comparison has scalar values, but
    // judge on the max component discrepancy
    let mut cmp =
        OracleComparison::new(oracle.iter().sum::<f64>(), phi.iter().sum::<f64>(), 1e-9);
    cmp.discrepancy = max_delta;
    cmp.within_tolerance = max_delta <= cmp.tolerance;
    Ok(cmp)
}

struct GridProblem {
    /// Per-cell objective weight `(1/n)·Σ_{i in cell} σ_i`.
    weights: Vec<f64>,
    /// Fixed cell values from value pins.
    pinned: Vec<Option<f64>>,
    /// Equality rows `(coefficients, target)` over cell values.
    rows: Vec<(Vec<f64>, f64)>,
}

fn build_grid_problem(
    grid: &Grid,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<GridProblem> {
    let cells = grid.cell_indices();
    let m = cells.len();
    let n = sample.n() as f64;
    let mut weights = vec![0.0; m];
    for (x, &s) in sample.points.iter().zip(&sample.labels) {
        weights[grid.flat_index(&grid.cell_index(x)?)] += s as f64 / n;
    }
    let mut pinned: Vec<Option<f64>> = vec![None; m];
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                pinned[grid.flat_index(&grid.cell_index(point)?)] = Some(*value);
            }
            Constraint::MeanEquals { value, dist } => {
                let coeffs: Result<Vec<f64>> =
                    cells.iter().map(|idx| dist.box_mass(&grid.cell_box(idx))).collect();
                rows.push((coeffs?, *value));
            }
            Constraint::ShapEquals { point, phi, dist } => {
                // attribution is linear in the cell values, so probe with
                // per-cell indicator functions to recover the coefficients
                let d = point.coords().len();
                let mut coeff_rows = vec![vec![0.0; m]; d];
                for c in 0..m {
                    let mut values = vec![0.0; m];
                    values[c] = 1.0;
                    let indicator =
                        FunctionModel::Grid(GridFunction::new(grid.clone(), values)?);
                    let Explanation::Shap { phi: probe } = shap_explain(&indicator, dist, point)?
                    else {
                        unreachable!()
                    };
                    for (j, p) in probe.iter().enumerate() {
                        coeff_rows[j][c] = *p;
                    }
                }
                for (j, coeffs) in coeff_rows.into_iter().enumerate() {
                    rows.push((coeffs, phi[j]));
                }
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported by the grid search oracle"
                )))
            }
        }
    }
    Ok(GridProblem { weights, pinned, rows })
}

/// Exhaustive search over cell values discretized to step `h`, maximizing the
/// sample correlation subject to the constraint rows within the rounding
/// slack `h·Σ|coefficients|` per row.
pub fn grid_discretized_sup(
    grid: &Grid,
    constraints: &[Constraint],
    sample: &LabeledSample,
    h: f64,
) -> Result<f64> {
    if h < MIN_GRID_STEP {
        return Err(Error::Budget(format!(
            "grid search step {h} below the minimum {MIN_GRID_STEP}"
        )));
    }
    let problem = build_grid_problem(grid, constraints, sample)?;
    let m = problem.weights.len();
    let steps = (2.0 / h).round() as usize;
    let h = 2.0 / steps as f64; // lattice {-1, -1+h, …, 1} exactly
    let free: Vec<usize> = (0..m).filter(|&c| problem.pinned[c].is_none()).collect();
    let base: f64 = (0..m)
        .filter_map(|c| problem.pinned[c].map(|v| problem.weights[c] * v))
        .sum();

    // adjust row targets for the pinned cells and restrict to free cells
    let rows: Vec<(Vec<f64>, f64, f64)> = problem
        .rows
        .iter()
        .map(|(coeffs, target)| {
            let fixed: f64 = (0..m)
                .filter_map(|c| problem.pinned[c].map(|v| coeffs[c] * v))
                .sum();
            let slack = h * coeffs.iter().map(|c| c.abs()).sum::<f64>() + 1e-9;
            (free.iter().map(|&c| coeffs[c]).collect(), target - fixed, slack)
        })
        .collect();

    match rows.len() {
        0 => {
            // separable: each free cell takes the label-favorable endpoint
            Ok(base + free.iter().map(|&c| problem.weights[c].abs()).sum::<f64>())
        }
        1 => {
            let (coeffs, target, slack) = &rows[0];
            // the dynamic program needs one shared coefficient so partial
            // sums stay on an exact integer lattice
            let c0 = coeffs[0];
            if c0.abs() < 1e-12 || coeffs.iter().any(|c| (c - c0).abs() > 1e-9 * c0.abs().max(1.0))
            {
                return Err(Error::Unsupported(
                    "the single-row grid search needs equal cell coefficients".into(),
                ));
            }
            // Σ c0·v_c = target  ⇔  Σ a_c = t_units with v = -1 + a·h
            let t = target / c0 + free.len() as f64; // Σ (v_c + 1)
            let t_units = (t / h).round() as i64;
            let band = (slack / (c0.abs() * h)).ceil() as i64 + 1;
            let max_units = (free.len() * steps) as i64;
            if t_units < -band || t_units > max_units + band {
                return Err(Error::Infeasible(
                    "constraint target unreachable on the value lattice".into(),
                ));
            }
            const NEG_INF: f64 = f64::NEG_INFINITY;
            let mut best = vec![NEG_INF; max_units as usize + 1];
            best[0] = 0.0;
            for &c in &free {
                let w = problem.weights[c];
                let mut next = vec![NEG_INF; max_units as usize + 1];
                for (s, &obj) in best.iter().enumerate() {
                    if obj == NEG_INF {
                        continue;
                    }
                    for a in 0..=steps {
                        let v = -1.0 + a as f64 * h;
                        let ns = s + a;
                        if ns <= max_units as usize {
                            let cand = obj + w * v;
                            if cand > next[ns] {
                                next[ns] = cand;
                            }
                        }
                    }
                }
                best = next;
            }
            let lo = (t_units - band).max(0) as usize;
            let hi = ((t_units + band) as usize).min(max_units as usize);
            let sup = best[lo..=hi].iter().cloned().fold(NEG_INF, f64::max);
            if sup == NEG_INF {
                return Err(Error::Infeasible("no lattice point satisfies the row".into()));
            }
            Ok(base + sup)
        }
        _ => {
            // meet-in-the-middle over the free cells
            if free.len() > 4 {
                return Err(Error::Budget(
                    "multi-row grid search supports at most 4 free cells".into(),
                ));
            }
            let half = free.len() / 2;
            let (left_cells, right_cells) = free.split_at(half);
            let enumerate = |cells: &[usize]| -> Vec<(Vec<f64>, f64)> {
                let mut acc: Vec<(Vec<f64>, f64)> = vec![(vec![0.0; rows.len()], 0.0)];
                for &c in cells {
                    // row coefficients are indexed by position in the free list
                    let k = free.iter().position(|&x| x == c).unwrap();
                    let w = problem.weights[c];
                    let mut next = Vec::with_capacity(acc.len() * (steps + 1));
                    for (partials, obj) in &acc {
                        for a in 0..=steps {
                            let v = -1.0 + a as f64 * h;
                            let mut np = partials.clone();
                            for (j, (coeffs, _, _)) in rows.iter().enumerate() {
                                np[j] += coeffs[k] * v;
                            }
                            next.push((np, obj + w * v));
                        }
                    }
                    acc = next;
                }
                acc
            };
            let left = enumerate(left_cells);
            let right = enumerate(right_cells);
            // bucket the right half by rounded row partials
            let deltas: Vec<f64> = rows.iter().map(|(_, _, slack)| *slack).collect();
            let key = |partials: &[f64]| -> Vec<i64> {
                partials
                    .iter()
                    .zip(&deltas)
                    .map(|(p, d)| (p / d).round() as i64)
                    .collect()
            };
            let mut buckets: HashMap<Vec<i64>, Vec<(Vec<f64>, f64)>> = HashMap::new();
            for (partials, obj) in right {
                buckets.entry(key(&partials)).or_default().push((partials, obj));
            }
            for list in buckets.values_mut() {
                list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            }
            let targets: Vec<f64> = rows.iter().map(|(_, t, _)| *t).collect();
            let mut sup = f64::NEG_INFINITY;
            for (partials, obj) in &left {
                let need: Vec<f64> =
                    targets.iter().zip(partials).map(|(t, p)| t - p).collect();
                let center = key(&need);
                // scan the neighborhood of buckets around the needed partials
                let mut offsets = vec![vec![]];
                for _ in 0..rows.len() {
                    let mut next = Vec::new();
                    for o in &offsets {
                        for d in -1i64..=1 {
                            let mut v: Vec<i64> = o.clone();
                            v.push(d);
                            next.push(v);
                        }
                    }
                    offsets = next;
                }
                for off in &offsets {
                    let k: Vec<i64> = center.iter().zip(off).map(|(c, o)| c + o).collect();
                    if let Some(list) = buckets.get(&k) {
                        for (rp, robj) in list {
                            if obj + robj <= sup {
                                break; // sorted descending
                            }
                            let ok = need
                                .iter()
                                .zip(rp)
                                .zip(&deltas)
                                .all(|((n, r), d)| (n - r).abs() <= *d);
                            if ok {
                                sup = obj + robj;
                                break;
                            }
                        }
                    }
                }
            }
            if sup == f64::NEG_INFINITY {
                return Err(Error::Infeasible(
                    "no lattice assignment satisfies all rows within slack".into(),
                ));
            }
            Ok(base + sup)
        }
    }
}

/// Compare the grid linear-program supremum against the discretized
/// exhaustive search; tolerance `h·(cell count)`.
pub fn compare_grid_sup(
    grid: &Grid,
    constraints: &[Constraint],
    sample: &LabeledSample,
    h: f64,
) -> Result<OracleComparison> {
    let fast = sup_correlation(&ClassSpec::Grid { grid: grid.clone() }, constraints, sample)?;
    let oracle = grid_discretized_sup(grid, constraints, sample, h)?;
    let cells = grid.cell_indices().len() as f64;
    Ok(OracleComparison::new(oracle, fast.value.upper(), h * cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisBox;

    fn unit_grid(k: usize) -> Grid {
        Grid::equidistant(AxisBox::cube(0.0, 1.0, 2), k).unwrap()
    }

    fn sample(points: Vec<Vec<f64>>, labels: Vec<i8>) -> LabeledSample {
        LabeledSample::new(points.into_iter().map(Point).collect(), labels).unwrap()
    }

    #[test]
    fn unconstrained_search_matches_lp_exactly() {
        let grid = unit_grid(3);
        let s = sample(vec![vec![0.1, 0.1], vec![0.5, 0.5], vec![0.9, 0.2]], vec![1, -1, 1]);
        let cmp = compare_grid_sup(&grid, &[], &s, 0.01).unwrap();
        assert!(cmp.within_tolerance, "{cmp:?}");
        assert!((cmp.oracle_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mean_row_search_tracks_lp() {
        let grid = unit_grid(3);
        let dist = Distribution::uniform(AxisBox::cube(0.0, 1.0, 2)).unwrap();
        let s = sample(vec![vec![0.1, 0.1], vec![0.5, 0.5], vec![0.9, 0.2]], vec![1, -1, 1]);
        let cons = vec![Constraint::MeanEquals { value: 0.4, dist }];
        let cmp = compare_grid_sup(&grid, &cons, &s, 0.01).unwrap();
        assert!(cmp.within_tolerance, "{cmp:?}");
    }

    #[test]
    fn shap_rows_search_tracks_lp() {
        let grid = unit_grid(2);
        let dist = Distribution::uniform(AxisBox::cube(0.0, 1.0, 2)).unwrap();
        let x0 = Point(vec![0.25, 0.75]);
        // attribution of a concrete grid function, so the rows are feasible
        let f = FunctionModel::Grid(
            GridFunction::new(grid.clone(), vec![1.0, -0.5, 0.25, -1.0]).unwrap(),
        );
        let Explanation::Shap { phi } = shap_explain(&f, &dist, &x0).unwrap() else {
            unreachable!()
        };
        let cons = vec![Constraint::ShapEquals { point: x0, phi, dist }];
        let s = sample(vec![vec![0.1, 0.1], vec![0.6, 0.6], vec![0.9, 0.2]], vec![1, -1, -1]);
        let cmp = compare_grid_sup(&grid, &cons, &s, 0.01).unwrap();
        assert!(cmp.within_tolerance, "{cmp:?}");
    }

    #[test]
    fn scan_agrees_with_certified_radius() {
        let grid = unit_grid(2);
        let f = FunctionModel::Grid(
            GridFunction::new(grid, vec![1.0, 1.0, -1.0, 1.0]).unwrap(),
        );
        // nearest negative cell is [0,0.5)×[0.5,1): straight up from x0
        let cmp =
            compare_strong_counterfactual(&f, &Point(vec![0.25, 0.2]), 1e-3).unwrap();
        assert!(cmp.within_tolerance, "{cmp:?}");
    }

    #[test]
    fn too_fine_budgets_are_rejected() {
        let grid = unit_grid(2);
        let s = sample(vec![vec![0.1, 0.1]], vec![1]);
        assert_eq!(
            grid_discretized_sup(&grid, &[], &s, 1e-3).unwrap_err().kind(),
            "budget"
        );
        let f = FunctionModel::Grid(
            GridFunction::new(unit_grid(2), vec![1.0, -1.0, 1.0, -1.0]).unwrap(),
        );
        assert_eq!(
            dense_scan_counterfactual(&f, &Point(vec![0.25, 0.25]), 1e-4)
                .unwrap_err()
                .kind(),
            "budget"
        );
    }
}
