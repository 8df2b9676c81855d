//! Closed-form sup-correlation solvers for the linear class and its
//! noisy-band relaxation.
//!
//! For `g(x) = w·x + b` the objective is `w·a' + b·σ̄` with
//! `a' = (1/n)Σσ_i x_i` and `σ̄ = (1/n)Σσ_i`. A value constraint at `x0`
//! eliminates `b`, leaving a linear form maximized over the norm ball
//! intersected with the offset slab — solved by projection onto the active
//! slab face when necessary.

use serde_json::json;

use super::{Constraint, LabeledSample, SupResult, Witness};
use crate::error::{Error, Result};
use crate::geometry::{Distribution, Point};
use crate::models::{FunctionModel, LinearModel};

const TOL: f64 = 1e-9;
/// Witnesses are scaled slightly into the open-bound interior; the induced
/// constraint/value error is ≤ 1e-12, far below the 1e-9 check tolerance.
const SHRINK: f64 = 1.0 - 1e-12;

struct Parsed {
    value_at: Option<(Point, f64)>,
    gradient: Option<Vec<f64>>,
    top: Option<(usize, f64)>,
}

/// Point whose function value equals the distribution mean for linear models.
fn mean_point(dist: &Distribution) -> Point {
    match dist {
        Distribution::UniformBox { support } => support.center(),
        Distribution::DiagonalSegment { support } => {
            let m = dist.marginal(0);
            Point(vec![0.5 * (m.lo() + m.hi()); support.dim()])
        }
    }
}

fn parse(constraints: &[Constraint], allow_top: bool) -> Result<Parsed> {
    let mut p = Parsed { value_at: None, gradient: None, top: None };
    for c in constraints {
        match c {
            Constraint::ValueAt { point, value } => set_value(&mut p, point.clone(), *value)?,
            Constraint::MeanEquals { value, dist } => {
                set_value(&mut p, mean_point(dist), *value)?
            }
            Constraint::GradientAt { vector, .. } => match &p.gradient {
                Some(g) if g.iter().zip(vector).any(|(a, b)| (a - b).abs() > TOL) => {
                    return Err(Error::Infeasible(
                        "conflicting gradient constraints on the linear class".into(),
                    ))
                }
                _ => p.gradient = Some(vector.clone()),
            },
            Constraint::TopComponentAt { index, magnitude, .. } if allow_top => {
                if p.top.is_some() {
                    return Err(Error::Unsupported(
                        "multiple top-component constraints on the linear class".into(),
                    ));
                }
                p.top = Some((*index, *magnitude));
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on the linear class"
                )))
            }
        }
    }
    if p.gradient.is_some() && p.top.is_some() {
        return Err(Error::Unsupported(
            "gradient and top-component constraints cannot be combined".into(),
        ));
    }
    Ok(p)
}

fn set_value(p: &mut Parsed, point: Point, value: f64) -> Result<()> {
    match &p.value_at {
        None => {
            p.value_at = Some((point, value));
            Ok(())
        }
        Some((q, v)) if *q == point => {
            if (v - value).abs() > TOL {
                Err(Error::Infeasible("conflicting value constraints at the same point".into()))
            } else {
                Ok(())
            }
        }
        Some(_) => Err(Error::Unsupported(
            "more than one value constraint on the linear class".into(),
        )),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sample_moments(sample: &LabeledSample) -> (Vec<f64>, f64) {
    let n = sample.n() as f64;
    let d = sample.points[0].dim();
    let mut a = vec![0.0; d];
    let mut sbar = 0.0;
    for (p, &s) in sample.points.iter().zip(&sample.labels) {
        for (aj, &xj) in a.iter_mut().zip(p.coords()) {
            *aj += s as f64 * xj / n;
        }
        sbar += s as f64 / n;
    }
    (a, sbar)
}

/// Maximize `w·a` over `‖w‖ ≤ m` intersected with `w·x0 = c`.
fn max_on_sphere_slice(a: &[f64], m: f64, x0: &[f64], c: f64) -> Result<(f64, Vec<f64>)> {
    let nx2 = dot(x0, x0);
    if nx2 < 1e-24 {
        if c.abs() > TOL {
            return Err(Error::Infeasible(
                "value constraint unreachable: x0 = 0 pins the offset".into(),
            ));
        }
        let na = norm(a);
        let w = if na > 1e-15 { a.iter().map(|v| m * v / na).collect() } else { vec![0.0; a.len()] };
        return Ok((m * na, w));
    }
    if c * c / nx2 > m * m + TOL {
        return Err(Error::Infeasible(
            "norm bound too small to reach the required hyperplane".into(),
        ));
    }
    let par = dot(a, x0) / nx2;
    let a_perp: Vec<f64> = a.iter().zip(x0).map(|(ai, xi)| ai - par * xi).collect();
    let napp = norm(&a_perp);
    let rad = (m * m - c * c / nx2).max(0.0).sqrt();
    let mut w: Vec<f64> = x0.iter().map(|xi| c * xi / nx2).collect();
    if napp > 1e-15 {
        for (wj, pj) in w.iter_mut().zip(&a_perp) {
            *wj += rad * pj / napp;
        }
    }
    Ok((c * par + napp * rad, w))
}

/// Maximize `w·a + σ̄·t` over `‖w‖ ≤ M`, `|t − w·x0| ≤ M` (offset slab).
fn solve_with_value(
    a: &[f64],
    sbar: f64,
    m: f64,
    x0: &Point,
    t: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    let na = norm(a);
    if na < 1e-12 {
        // objective constant in w; only feasibility matters
        if t.abs() <= m + TOL {
            return Ok((sbar * t, vec![0.0; a.len()], t));
        }
        let nx2 = dot(x0.coords(), x0.coords());
        if nx2 < 1e-24 {
            return Err(Error::Infeasible("offset bound violated with x0 = 0".into()));
        }
        let c = t - m * t.signum();
        let w: Vec<f64> = x0.coords().iter().map(|xi| c * xi / nx2).collect();
        if norm(&w) > m + TOL {
            return Err(Error::Infeasible("no linear model satisfies the value constraint".into()));
        }
        return Ok((sbar * t, w.clone(), t - dot(&w, x0.coords())));
    }
    let w0: Vec<f64> = a.iter().map(|v| m * v / na).collect();
    let b0 = t - dot(&w0, x0.coords());
    if b0.abs() <= m {
        return Ok((m * na + sbar * t, w0, b0));
    }
    // active slab face: w·x0 = t ∓ M
    let c = if b0 > m { t - m } else { t + m };
    let (val, w) = max_on_sphere_slice(a, m, x0.coords(), c)?;
    let b = t - dot(&w, x0.coords());
    Ok((val + sbar * t, w, b))
}

/// Unconstrained optimum over `‖w‖ ≤ M, |b| ≤ M`.
fn solve_free(a: &[f64], sbar: f64, m: f64) -> (f64, Vec<f64>, f64) {
    let na = norm(a);
    let w = if na > 1e-15 { a.iter().map(|v| m * v / na).collect() } else { vec![0.0; a.len()] };
    let b = if sbar > 0.0 {
        m
    } else if sbar < 0.0 {
        -m
    } else {
        0.0
    };
    (m * na + m * sbar.abs(), w, b)
}

fn witness(w: Vec<f64>, b: f64, bound: f64) -> Witness {
    let w = w.into_iter().map(|v| v * SHRINK).collect();
    Witness::Model(FunctionModel::Linear(LinearModel { w, b: b * SHRINK, bound }))
}

pub fn linear_sup(
    bound: f64,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    let p = parse(constraints, true)?;
    let (a_prime, sbar) = sample_moments(sample);
    let d = a_prime.len();

    if let Some(v) = &p.gradient {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        if norm(v) > bound + TOL {
            return Err(Error::Infeasible("gradient constraint exceeds the norm bound".into()));
        }
        let (b, value) = match &p.value_at {
            Some((x0, y0)) => {
                let b = y0 - dot(v, x0.coords());
                if b.abs() > bound + TOL {
                    return Err(Error::Infeasible("offset bound violated by the pinned model".into()));
                }
                (b, dot(v, &a_prime) + sbar * b)
            }
            None => {
                let b = if sbar >= 0.0 { bound } else { -bound };
                (b, dot(v, &a_prime) + sbar * b)
            }
        };
        return Ok(SupResult::exact(value, Some(witness(v.clone(), b, bound))));
    }

    if let Some((j_star, mag)) = p.top {
        if j_star >= d {
            return Err(Error::DimensionMismatch { expected: d, got: j_star + 1 });
        }
        if mag < 0.0 || mag > bound + TOL {
            return Err(Error::Infeasible(
                "top-component magnitude outside the class norm bound".into(),
            ));
        }
        // objective after eliminating b (if pinned)
        let (a, base): (Vec<f64>, f64) = match &p.value_at {
            Some((x0, y0)) => (
                a_prime.iter().zip(x0.coords()).map(|(ap, xj)| ap - sbar * xj).collect(),
                sbar * y0,
            ),
            None => (a_prime.clone(), bound * sbar.abs()),
        };
        // corner of the top-component box: |w_{j*}| = mag, |w_k| ≤ mag
        let mut w: Vec<f64> = a
            .iter()
            .map(|&ak| if ak > 0.0 { mag } else if ak < 0.0 { -mag } else { 0.0 })
            .collect();
        if w[j_star] == 0.0 {
            w[j_star] = mag;
        }
        let value = mag * a.iter().map(|v| v.abs()).sum::<f64>() + base;
        // the norm ball and offset slab must stay inactive at this corner;
        // otherwise the box corner is not the constrained optimum
        if norm(&w) > bound - TOL {
            return Err(Error::Unsupported(
                "norm bound active under the top-component constraint; increase M".into(),
            ));
        }
        let b = match &p.value_at {
            Some((x0, y0)) => {
                let b = y0 - dot(&w, x0.coords());
                if b.abs() > bound - TOL {
                    return Err(Error::Unsupported(
                        "offset bound active under the top-component constraint; increase M".into(),
                    ));
                }
                b
            }
            None => {
                if sbar >= 0.0 {
                    bound
                } else {
                    -bound
                }
            }
        };
        // keep j* the unique argmax under the smallest-index tie-break:
        // earlier coordinates tied at the magnitude are pulled strictly below
        for wk in w.iter_mut().take(j_star) {
            if wk.abs() >= mag {
                *wk *= SHRINK;
            }
        }
        return Ok(SupResult::exact(value, Some(witness(w, b, bound))));
    }

    match &p.value_at {
        Some((x0, y0)) => {
            if x0.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x0.dim() });
            }
            let a: Vec<f64> =
                a_prime.iter().zip(x0.coords()).map(|(ap, xj)| ap - sbar * xj).collect();
            let (value, w, b) = solve_with_value(&a, sbar, bound, x0, *y0)?;
            Ok(SupResult::exact(value, Some(witness(w, b, bound))))
        }
        None => {
            let (value, w, b) = solve_free(&a_prime, sbar, bound);
            Ok(SupResult::exact(value, Some(witness(w, b, bound))))
        }
    }
}

/// Sup over differentiable functions within an `ε`-band of some bounded
/// linear function. Independent local bumps contribute `±ε'` at each sample
/// point, so the sup is `ε' + sup over the band-feasible linear part`; a
/// gradient constraint costs nothing (bumps can realize any gradient at a
/// point without moving values elsewhere).
pub fn noisy_linear_sup(
    bound: f64,
    epsilon: f64,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    // the band is open; stay strictly inside it
    let eps = epsilon * (1.0 - 1e-9);
    let mut value_at: Option<(Point, f64)> = None;
    for c in constraints {
        match c {
            Constraint::ValueAt { point, value } => match &value_at {
                None => value_at = Some((point.clone(), *value)),
                Some((q, v)) if *q == *point && (v - value).abs() <= TOL => {}
                Some(_) => {
                    return Err(Error::Unsupported(
                        "more than one value constraint on the noisy-linear class".into(),
                    ))
                }
            },
            Constraint::GradientAt { .. } => {} // free: local bumps absorb it
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on the noisy-linear class"
                )))
            }
        }
    }
    let (a_prime, sbar) = sample_moments(sample);
    let (lin_value, w, b) = match &value_at {
        None => solve_free(&a_prime, sbar, bound),
        Some((x0, y0)) => {
            let (free_value, wf, bf) = solve_free(&a_prime, sbar, bound);
            let t_free = dot(&wf, x0.coords()) + bf;
            if (t_free - y0).abs() <= eps {
                (free_value, wf, bf)
            } else {
                // the band constraint is active at its nearest edge; the
                // band-restricted objective is concave in the edge value
                let t = if t_free > y0 + eps { y0 + eps } else { y0 - eps };
                let a: Vec<f64> =
                    a_prime.iter().zip(x0.coords()).map(|(ap, xj)| ap - sbar * xj).collect();
                solve_with_value(&a, sbar, bound, x0, t)?
            }
        }
    };
    let value = lin_value + eps;
    let data = json!({
        "linear": { "w": w, "b": b, "bound": bound },
        "bump_height": eps,
        "bump_signs": sample.labels,
        "pinned_point": value_at.as_ref().map(|(p, v)| json!({"point": p, "value": v})),
    });
    Ok(SupResult::exact(value, Some(Witness::Symbolic {
        family: "linear-plus-local-bumps".into(),
        data,
    })))
}
