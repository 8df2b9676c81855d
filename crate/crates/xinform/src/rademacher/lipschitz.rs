//! Supremum over L-Lipschitz functions with range [-1, 1].
//!
//! Value pins and sign regions induce per-point upper and lower envelopes
//! `U(x) ≤ f(x) ≤ L(x)` that are themselves L-Lipschitz. Setting each sample
//! point to its favorable envelope is achievable by a McShane extension
//! whenever all opposite-label pairs are compatible; otherwise we report an
//! honest bracket (envelope sum above, best feasible envelope function below).

use serde_json::json;

use super::{Constraint, LabeledSample, SupResult, Witness};
use crate::error::{Error, Result};
use crate::geometry::Point;

const TOL: f64 = 1e-9;

struct Pin {
    point: Point,
    value: f64,
}

/// A region where the function is sign-constrained: `dist(x)` is the
/// effective distance from `x` to the region.
struct SignRegion {
    center: Point,
    radius: f64,
    sign: i8,
}

impl SignRegion {
    fn dist(&self, x: &Point) -> f64 {
        (x.distance(&self.center) - self.radius).max(0.0)
    }
}

struct Envelopes {
    l: f64,
    pins: Vec<Pin>,
    regions: Vec<SignRegion>,
}

impl Envelopes {
    fn upper(&self, x: &Point) -> f64 {
        let mut u: f64 = 1.0;
        for pin in &self.pins {
            u = u.min(pin.value + self.l * x.distance(&pin.point));
        }
        for r in self.regions.iter().filter(|r| r.sign < 0) {
            u = u.min(self.l * r.dist(x));
        }
        u
    }

    fn lower(&self, x: &Point) -> f64 {
        let mut lo: f64 = -1.0;
        for pin in &self.pins {
            lo = lo.max(pin.value - self.l * x.distance(&pin.point));
        }
        for r in self.regions.iter().filter(|r| r.sign >= 0) {
            lo = lo.max(-self.l * r.dist(x));
        }
        lo
    }
}

fn parse(l: f64, constraints: &[Constraint]) -> Result<Envelopes> {
    let mut env = Envelopes { l, pins: Vec::new(), regions: Vec::new() };
    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                if value.abs() > 1.0 + TOL {
                    return Err(Error::Infeasible(format!(
                        "value constraint {value} outside the range bound [-1, 1]"
                    )));
                }
                env.pins.push(Pin { point: point.clone(), value: *value });
            }
            Constraint::SignAt { point, sign } => {
                env.regions.push(SignRegion { center: point.clone(), radius: 0.0, sign: *sign });
            }
            Constraint::SignOnBall { center, radius, sign } => {
                env.regions.push(SignRegion {
                    center: center.clone(),
                    radius: *radius,
                    sign: *sign,
                });
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on the Lipschitz class"
                )))
            }
        }
    }
    // pairwise feasibility; with these checks passing, the envelopes
    // themselves are feasible members of the constrained class
    for (i, a) in env.pins.iter().enumerate() {
        for b in &env.pins[i + 1..] {
            if (a.value - b.value).abs() > l * a.point.distance(&b.point) + TOL {
                return Err(Error::Infeasible(
                    "two value constraints violate the Lipschitz bound".into(),
                ));
            }
        }
        for r in &env.regions {
            let d = r.dist(&a.point);
            let ok = if r.sign < 0 { a.value <= l * d + TOL } else { a.value >= -l * d - TOL };
            if !ok {
                return Err(Error::Infeasible(
                    "a value constraint conflicts with a sign constraint under the Lipschitz \
                     bound"
                        .into(),
                ));
            }
        }
    }
    Ok(env)
}

fn witness_json(env: &Envelopes, assignments: Option<&[f64]>, sample: &LabeledSample) -> Witness {
    Witness::Symbolic {
        family: "lipschitz-envelope".into(),
        data: json!({
            "lipschitz_constant": env.l,
            "pins": env.pins.iter().map(|p| json!({
                "point": p.point.coords(),
                "value": p.value,
            })).collect::<Vec<_>>(),
            "sign_regions": env.regions.iter().map(|r| json!({
                "center": r.center.coords(),
                "radius": r.radius,
                "sign": r.sign,
            })).collect::<Vec<_>>(),
            "sample_points": sample.points.iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>(),
            "sample_values": assignments,
        }),
    }
}

pub fn lipschitz_sup(
    l: f64,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    let env = parse(l, constraints)?;
    let n = sample.n() as f64;
    let targets: Vec<f64> = sample
        .points
        .iter()
        .zip(&sample.labels)
        .map(|(p, &s)| if s >= 0 { env.upper(p) } else { env.lower(p) })
        .collect();
    let envelope_sum: f64 = targets
        .iter()
        .zip(&sample.labels)
        .map(|(&v, &s)| s as f64 * v)
        .sum::<f64>()
        / n;

    // the per-point targets extend to an L-Lipschitz function iff every
    // opposite-label pair is compatible (same-label pairs always are, since
    // each envelope is itself L-Lipschitz)
    let mut exact = true;
    'outer: for (i, pi) in sample.points.iter().enumerate() {
        if sample.labels[i] < 0 {
            continue;
        }
        for (j, pj) in sample.points.iter().enumerate() {
            if sample.labels[j] >= 0 {
                continue;
            }
            if targets[i] - targets[j] > l * pi.distance(pj) + TOL {
                exact = false;
                break 'outer;
            }
        }
    }

    if exact {
        let w = witness_json(&env, Some(&targets), sample);
        return Ok(SupResult::exact(envelope_sum, Some(w)));
    }

    // honest bracket: the envelope functions U, L and their midpoint are all
    // feasible; the best of them gives a certified lower bound
    let mut best = f64::NEG_INFINITY;
    let mut best_vals: Vec<f64> = Vec::new();
    for mode in 0..3 {
        let vals: Vec<f64> = sample
            .points
            .iter()
            .map(|p| match mode {
                0 => env.upper(p),
                1 => env.lower(p),
                _ => 0.5 * (env.upper(p) + env.lower(p)),
            })
            .collect();
        let score: f64 = vals
            .iter()
            .zip(&sample.labels)
            .map(|(&v, &s)| s as f64 * v)
            .sum::<f64>()
            / n;
        if score > best {
            best = score;
            best_vals = vals;
        }
    }
    let w = witness_json(&env, Some(&best_vals), sample);
    Ok(SupResult::bracket(best, envelope_sum, Some(w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::trial_rng;
    use rand::Rng;

    fn sample(points: Vec<Vec<f64>>, labels: Vec<i8>) -> LabeledSample {
        LabeledSample::new(points.into_iter().map(Point).collect(), labels).unwrap()
    }

    #[test]
    fn unconstrained_sup_is_one() {
        let s = sample(vec![vec![0.0], vec![2.0], vec![4.0]], vec![1, -1, 1]);
        let r = lipschitz_sup(1.0, &[], &s).unwrap();
        assert!(r.value.is_exact());
        assert!((r.value.upper() - 1.0).abs() < TOL);
    }

    #[test]
    fn single_pin_caps_nearby_points() {
        // pin f(0) = 1 with L = 1: at x = 0.25 the most negative value is 0.75
        let s = sample(vec![vec![0.25]], vec![-1]);
        let cons = vec![Constraint::ValueAt { point: Point(vec![0.0]), value: 1.0 }];
        let r = lipschitz_sup(1.0, &cons, &s).unwrap();
        assert!((r.value.upper() + 0.75).abs() < TOL);
    }

    #[test]
    fn sign_ball_forces_wrong_label() {
        // f >= 0 on the open unit ball, a sample point inside with sigma = -1:
        // its best contribution is 0
        let s = sample(vec![vec![0.2, 0.0], vec![5.0, 0.0]], vec![-1, 1]);
        let cons = vec![Constraint::SignOnBall {
            center: Point(vec![0.0, 0.0]),
            radius: 1.0,
            sign: 1,
        }];
        let r = lipschitz_sup(1.0, &cons, &s).unwrap();
        assert!(r.value.is_exact());
        assert!((r.value.upper() - 0.5).abs() < TOL);
    }

    #[test]
    fn conflicting_pins_rejected() {
        let cons = vec![
            Constraint::ValueAt { point: Point(vec![0.0]), value: 1.0 },
            Constraint::ValueAt { point: Point(vec![0.1]), value: -1.0 },
        ];
        let s = sample(vec![vec![0.0]], vec![1]);
        let err = lipschitz_sup(1.0, &cons, &s).unwrap_err();
        assert_eq!(err.kind(), "infeasible");
    }

    #[test]
    fn opposite_labels_in_tight_quarters_bracket() {
        // two points 0.1 apart with opposite labels under L = 1: the envelope
        // values 1 and -1 are not jointly reachable, so the result brackets
        let s = sample(vec![vec![0.0], vec![0.1]], vec![1, -1]);
        let r = lipschitz_sup(1.0, &[], &s).unwrap();
        match r.value {
            super::super::SupValue::Bracket { lower, upper } => {
                assert!(lower <= upper + TOL);
                assert!((upper - 1.0).abs() < TOL);
                // actual optimum: f(0) = 0.05, f(0.1) = -0.05 gives 0.05
                assert!(lower <= 0.05 + TOL);
            }
            _ => panic!("expected a bracket"),
        }
    }

    #[test]
    fn bracket_lower_is_attained_by_a_feasible_assignment() {
        // random instances: the reported lower bound must match evaluating an
        // L-Lipschitz-consistent assignment (pairwise check on the witness)
        let mut rng = trial_rng(91, 0);
        for _ in 0..50 {
            let n = rng.gen_range(2..7);
            let pts: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let labels: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let s = sample(pts, labels);
            let cons = vec![Constraint::ValueAt {
                point: Point(vec![rng.gen(), rng.gen()]),
                value: rng.gen_range(-1.0..1.0),
            }];
            let l = rng.gen_range(0.5..4.0);
            let r = lipschitz_sup(l, &cons, &s).unwrap();
            assert!(r.value.lower() <= r.value.upper() + TOL);
            let Some(Witness::Symbolic { data, .. }) = &r.witness else { panic!() };
            let vals: Vec<f64> = serde_json::from_value(data["sample_values"].clone()).unwrap();
            // assignment must respect the Lipschitz bound pairwise
            for i in 0..s.n() {
                for j in i + 1..s.n() {
                    let d = s.points[i].distance(&s.points[j]);
                    assert!(
                        (vals[i] - vals[j]).abs() <= l * d + 1e-6,
                        "witness assignment violates the Lipschitz bound"
                    );
                }
            }
        }
    }
}
