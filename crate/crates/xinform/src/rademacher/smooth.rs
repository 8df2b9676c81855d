//! Bracketing solver for the smooth class: functions with range [-1, 1],
//! alpha-Lipschitz values and beta-Lipschitz gradients.
//!
//! The supremum has no finite exact reduction here, so we report a certified
//! bracket: Taylor/Lipschitz envelopes give the upper bound, and explicit
//! feasible constructions (radial ramps and saturating tilts) evaluated on
//! the sample give the lower bound.

use serde_json::json;

use super::{Constraint, LabeledSample, SupResult, Witness};
use crate::error::{Error, Result};
use crate::geometry::Point;

const TOL: f64 = 1e-9;

struct Parsed {
    pin: Option<(Point, f64)>,
    gradient: Option<(Point, Vec<f64>)>,
    /// Tighter gradient-Lipschitz constant inside a ball around the pin.
    stable: Option<(f64, f64)>, // (radius, delta)
}

fn parse(alpha: f64, constraints: &[Constraint]) -> Result<Parsed> {
    let mut p = Parsed { pin: None, gradient: None, stable: None };
    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                if p.pin.is_some() {
                    return Err(Error::Unsupported(
                        "at most one value constraint on the smooth class".into(),
                    ));
                }
                if value.abs() > 1.0 + TOL {
                    return Err(Error::Infeasible(format!(
                        "value constraint {value} outside the range bound [-1, 1]"
                    )));
                }
                p.pin = Some((point.clone(), *value));
            }
            Constraint::GradientAt { point, vector } => {
                if p.gradient.is_some() {
                    return Err(Error::Unsupported(
                        "at most one gradient constraint on the smooth class".into(),
                    ));
                }
                p.gradient = Some((point.clone(), vector.clone()));
            }
            Constraint::LocallyStableGradient { point, vector, r, delta } => {
                if p.gradient.is_some() {
                    return Err(Error::Unsupported(
                        "at most one gradient constraint on the smooth class".into(),
                    ));
                }
                p.gradient = Some((point.clone(), vector.clone()));
                p.stable = Some((*r, *delta));
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on the smooth class"
                )))
            }
        }
    }
    if let Some((gp, v)) = &p.gradient {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > alpha + TOL {
            return Err(Error::Infeasible(
                "required gradient norm exceeds the value-Lipschitz bound".into(),
            ));
        }
        if let Some((pp, _)) = &p.pin {
            if pp.distance(gp) > TOL {
                return Err(Error::Unsupported(
                    "value and gradient constraints must share a point".into(),
                ));
            }
        }
    }
    Ok(p)
}

/// Pointwise upper envelope implied by the constraints; the lower envelope
/// is the same construction with `y0` and `v` negated.
fn upper_env(alpha: f64, beta: f64, p: &Parsed, x: &Point, negate: bool) -> f64 {
    let s = if negate { -1.0 } else { 1.0 };
    let mut u: f64 = 1.0;
    if let Some((x0, y0)) = &p.pin {
        let d = x.distance(x0);
        u = u.min(s * y0 + alpha * d);
        if let Some((_, v)) = &p.gradient {
            let dot: f64 =
                v.iter().zip(x.coords()).zip(x0.coords()).map(|((vi, xi), ci)| vi * (xi - ci)).sum();
            u = u.min(s * (y0 + dot) + 0.5 * beta * d * d);
            if let Some((r, delta)) = p.stable {
                if d < r {
                    u = u.min(s * (y0 + dot) + 0.5 * delta * d * d);
                }
            }
        }
    }
    u
}

/// Ramp from 0 with zero initial slope: curvature at most `c`, slope at most
/// `s_max`, saturating at the plateau `cap`.
fn radial_ramp(c: f64, s_max: f64, cap: f64, t: f64) -> f64 {
    if cap <= 0.0 || s_max <= 0.0 || c <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    if cap <= s_max * s_max / c {
        // quadratic up, quadratic down; peak slope sqrt(cap * c) <= s_max
        let ta = (cap / c).sqrt();
        if t <= ta {
            0.5 * c * t * t
        } else if t <= 2.0 * ta {
            cap - 0.5 * c * (2.0 * ta - t) * (2.0 * ta - t)
        } else {
            cap
        }
    } else {
        let t1 = s_max / c;
        let h1 = 0.5 * s_max * s_max / c;
        let t2 = t1 + (cap - 2.0 * h1) / s_max;
        if t <= t1 {
            0.5 * c * t * t
        } else if t <= t2 {
            h1 + s_max * (t - t1)
        } else if t <= t2 + t1 {
            cap - 0.5 * c * (t2 + t1 - t) * (t2 + t1 - t)
        } else {
            cap
        }
    }
}

/// Odd saturating profile with unit initial slope and curvature at most `c`:
/// `t - c t^2 / 2` up to the plateau `1/(2c)`.
fn tilt_profile(c: f64, t: f64) -> f64 {
    let plateau = 0.5 / c;
    let a = t.abs();
    let val = if a >= 1.0 / c { plateau } else { a - 0.5 * c * a * a };
    val.copysign(t)
}

pub fn smooth_sup(
    alpha: f64,
    beta: f64,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    let p = parse(alpha, constraints)?;
    let n = sample.n() as f64;

    let env_sum = |flip: bool| -> f64 {
        sample
            .points
            .iter()
            .zip(&sample.labels)
            .map(|(x, &s)| {
                let s = if flip { -s } else { s };
                if s >= 0 {
                    upper_env(alpha, beta, &p, x, false)
                } else {
                    upper_env(alpha, beta, &p, x, true)
                }
            })
            .sum::<f64>()
            / n
    };
    let upper = env_sum(false);

    // certified lower bounds from explicit feasible members
    let mut candidates: Vec<(f64, serde_json::Value)> = Vec::new();
    // the infimum bound is always valid when the constrained class is
    // nonempty, which the candidates below establish when they exist
    let floor = -env_sum(true);

    match (&p.pin, &p.gradient) {
        (None, None) => {
            let sbar = sample.labels.iter().map(|&s| s as f64).sum::<f64>() / n;
            let c0 = if sbar >= 0.0 { 1.0 } else { -1.0 };
            candidates.push((c0 * sbar, json!({"kind": "constant", "value": c0})));
        }
        (Some((x0, y0)), None) => {
            let sbar = sample.labels.iter().map(|&s| s as f64).sum::<f64>() / n;
            candidates.push((y0 * sbar, json!({"kind": "constant", "value": y0})));
            // radial ramp centered at the pin, in the favorable direction
            for dir in [1.0, -1.0] {
                let cap = if dir > 0.0 { 1.0 - y0 } else { 1.0 + y0 };
                let score = sample
                    .points
                    .iter()
                    .zip(&sample.labels)
                    .map(|(x, &s)| {
                        s as f64 * (y0 + dir * radial_ramp(beta, alpha, cap, x.distance(x0)))
                    })
                    .sum::<f64>()
                    / n;
                candidates.push((
                    score,
                    json!({
                        "kind": "radial-ramp",
                        "center": x0.coords(),
                        "base": y0,
                        "direction": dir,
                        "curvature": beta,
                        "max_slope": alpha,
                        "cap": cap,
                    }),
                ));
            }
            // saturating tilt in the label-favorable direction: with profile
            // curvature c the plateau 1/(2c) keeps the range inside [-1, 1],
            // and the slope scale gamma keeps both Lipschitz budgets
            let dim = x0.coords().len();
            let mut g = vec![0.0; dim];
            for (x, &s) in sample.points.iter().zip(&sample.labels) {
                for (gj, (xj, cj)) in g.iter_mut().zip(x.coords().iter().zip(x0.coords())) {
                    *gj += s as f64 * (xj - cj);
                }
            }
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gnorm > TOL {
                let c = 0.5 / (1.0 - y0.abs()).max(1e-12);
                let gamma = (beta / c).sqrt().min(alpha);
                let score = sample
                    .points
                    .iter()
                    .zip(&sample.labels)
                    .map(|(x, &s)| {
                        let t: f64 = g
                            .iter()
                            .zip(x.coords())
                            .zip(x0.coords())
                            .map(|((gj, xj), cj)| gj / gnorm * (xj - cj))
                            .sum();
                        s as f64 * (y0 + tilt_profile(c, gamma * t))
                    })
                    .sum::<f64>()
                    / n;
                candidates.push((
                    score,
                    json!({
                        "kind": "directional-tilt",
                        "anchor": x0.coords(),
                        "base": y0,
                        "direction": g.iter().map(|x| x / gnorm).collect::<Vec<_>>(),
                        "slope_scale": gamma,
                        "profile_curvature": c,
                    }),
                ));
            }
        }
        (pin, Some((x0, v))) => {
            // saturating tilt: value y0 + profile(v . (x - x0)); gradient at
            // x0 is exactly v, curvature |v|^2 c stays within budget
            let y0 = pin.as_ref().map(|(_, y)| *y).unwrap_or(0.0);
            let nv2 = v.iter().map(|x| x * x).sum::<f64>();
            let budget = match p.stable {
                Some((_, delta)) => beta.min(delta),
                None => beta,
            };
            if nv2 <= TOL {
                // zero gradient pins nothing beyond the value; a constant works
                let sbar = sample.labels.iter().map(|&s| s as f64).sum::<f64>() / n;
                candidates.push((y0 * sbar, json!({"kind": "constant", "value": y0})));
            } else {
                // curvature needed so the plateau fits inside the range bound
                let c_min = 0.5 / (1.0 - y0.abs()).max(1e-12);
                let c_max = budget / nv2;
                if c_min <= c_max {
                    // the flattest admissible profile dominates pointwise
                    let c = c_min;
                    let score = sample
                        .points
                        .iter()
                        .zip(&sample.labels)
                        .map(|(x, &s)| {
                            let t: f64 = v
                                .iter()
                                .zip(x.coords())
                                .zip(x0.coords())
                                .map(|((vi, xi), ci)| vi * (xi - ci))
                                .sum();
                            s as f64 * (y0 + tilt_profile(c, t))
                        })
                        .sum::<f64>()
                        / n;
                    candidates.push((
                        score,
                        json!({
                            "kind": "saturating-tilt",
                            "anchor": x0.coords(),
                            "base": y0,
                            "gradient": v,
                            "profile_curvature": c,
                        }),
                    ));
                }
            }
        }
    }

    let (mut lower, mut data) = (floor, json!({"kind": "infimum-floor"}));
    for (score, d) in candidates {
        if score > lower {
            lower = score;
            data = d;
        }
    }
    let lower = lower.min(upper);
    let witness = Witness::Symbolic { family: "smooth-construction".into(), data };
    Ok(SupResult::bracket(lower, upper, Some(witness)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(points: Vec<Vec<f64>>, labels: Vec<i8>) -> LabeledSample {
        LabeledSample::new(points.into_iter().map(Point).collect(), labels).unwrap()
    }

    #[test]
    fn unconstrained_bracket_is_tight_for_constant_labels() {
        let s = sample(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![1, 1]);
        let r = smooth_sup(1.0, 0.5, &[], &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL);
        assert!((r.value.lower() - 1.0).abs() < TOL);
    }

    #[test]
    fn ramp_profile_is_monotone_and_capped() {
        let mut last = -1.0;
        for i in 0..200 {
            let t = i as f64 * 0.05;
            let h = radial_ramp(0.5, 1.0, 0.8, t);
            assert!(h >= last - 1e-12);
            assert!(h <= 0.8 + 1e-12);
            last = h;
        }
        assert!((radial_ramp(0.5, 1.0, 0.8, 100.0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ramp_respects_slope_and_curvature() {
        // finite differences: slope <= s_max, slope change <= c * dt
        let (c, s_max, cap) = (0.5, 1.0, 1.7);
        let dt = 1e-4;
        let mut prev_slope: Option<f64> = None;
        for i in 0..60_000 {
            let t = i as f64 * dt;
            let slope = (radial_ramp(c, s_max, cap, t + dt) - radial_ramp(c, s_max, cap, t)) / dt;
            assert!(slope <= s_max + 1e-6);
            if let Some(ps) = prev_slope {
                assert!((slope - ps).abs() <= c * dt + 1e-6);
            }
            prev_slope = Some(slope);
        }
    }

    #[test]
    fn gradient_constraint_tilts_the_upper_bound() {
        // points clustered opposite the required gradient direction: the
        // Taylor envelope must dip below the unconstrained alpha envelope
        let x0 = vec![0.0, 0.0];
        let pts: Vec<Vec<f64>> = vec![vec![-0.3, 0.0], vec![-0.25, 0.1]];
        let s = sample(pts.clone(), vec![1, 1]);
        let cons_explain = vec![
            Constraint::ValueAt { point: Point(x0.clone()), value: 0.0 },
            Constraint::GradientAt { point: Point(x0.clone()), vector: vec![0.1, 0.0] },
        ];
        let cons_predict = vec![Constraint::ValueAt { point: Point(x0), value: 0.0 }];
        let e = smooth_sup(1.0, 0.5, &cons_explain, &s).unwrap();
        let p = smooth_sup(1.0, 0.5, &cons_predict, &s).unwrap();
        assert!(e.value.upper() < p.value.lower() + TOL);
        assert!(e.value.lower() <= e.value.upper() + TOL);
        assert!(p.value.lower() > 0.0, "radial ramp should lift above the base value");
    }

    #[test]
    fn gradient_norm_above_alpha_is_infeasible() {
        let s = sample(vec![vec![0.0]], vec![1]);
        let cons = vec![Constraint::GradientAt { point: Point(vec![0.0]), vector: vec![2.0] }];
        assert_eq!(smooth_sup(1.0, 0.5, &cons, &s).unwrap_err().kind(), "infeasible");
    }

    #[test]
    fn locally_stable_gradient_tightens_in_ball() {
        let x0 = Point(vec![0.0, 0.0]);
        let s = sample(vec![vec![0.2, 0.0]], vec![1]);
        let loose = vec![
            Constraint::ValueAt { point: x0.clone(), value: 0.0 },
            Constraint::GradientAt { point: x0.clone(), vector: vec![0.0, 0.1] },
        ];
        let tight = vec![
            Constraint::ValueAt { point: x0.clone(), value: 0.0 },
            Constraint::LocallyStableGradient {
                point: x0,
                vector: vec![0.0, 0.1],
                r: 0.5,
                delta: 0.05,
            },
        ];
        let a = smooth_sup(1.0, 0.5, &loose, &s).unwrap();
        let b = smooth_sup(1.0, 0.5, &tight, &s).unwrap();
        assert!(b.value.upper() < a.value.upper() - 1e-6);
    }
}
