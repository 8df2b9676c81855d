//! Interpolating classes: unbounded trees, GAMs of trees, unbounded-degree
//! polynomials and bounded differentiable functions.
//!
//! These classes can match any sign pattern on distinct sample points, so the
//! sup-correlation is a per-point envelope: every point contributes 1 unless
//! a constraint forces its value or sign, and the value is certified by an
//! explicitly constructed witness (deep tree with tiny patch boxes plus a
//! mean-correction box, 1-d component surgery for GAMs, or a symbolic
//! bump-sum for differentiable classes).

use serde_json::json;

use super::{Constraint, LabeledSample, SupResult, Witness};
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Distribution, Interval, Point};
use crate::models::{
    AxisTree, ClassSpec, FunctionModel, GamModel, PatchedModel, TreeNode, sign_of,
};

const TOL: f64 = 1e-9;
const COORD_EPS: f64 = 1e-12;
/// Total patch-box mass budget, split across sample points (small enough
/// that the mean-correction value always fits inside [-1, 1]).
const PATCH_MASS: f64 = 1e-4;
/// Nudge used when a sign constraint forces a boundary value of 0 but the
/// closed-sign convention sign(0) = +1 would land on the wrong side.
const NEG_NUDGE: f64 = -1e-15;

fn piecewise_constant(class: &ClassSpec) -> bool {
    matches!(class, ClassSpec::TreeUnbounded | ClassSpec::GamTreesUnbounded)
}

/// Per-sample-point value interval implied by the constraints, plus whether
/// a negative-sign constraint binds (for the boundary nudge).
struct PointEnvelope {
    lo: f64,
    hi: f64,
    neg_sign: bool,
}

fn same_point(a: &Point, b: &Point) -> bool {
    a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).abs() <= COORD_EPS)
}

fn envelopes(
    class: &ClassSpec,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<Vec<PointEnvelope>> {
    let mut envs: Vec<PointEnvelope> = sample
        .points
        .iter()
        .map(|_| PointEnvelope { lo: -1.0, hi: 1.0, neg_sign: false })
        .collect();
    let restrict_sign = |envs: &mut Vec<PointEnvelope>, i: usize, sign: i8| {
        if sign >= 0 {
            envs[i].lo = envs[i].lo.max(0.0);
        } else {
            envs[i].hi = envs[i].hi.min(0.0);
            envs[i].neg_sign = true;
        }
    };
    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                if value.abs() > 1.0 + TOL {
                    return Err(Error::Infeasible(format!(
                        "value constraint {value} outside the range bound [-1, 1]"
                    )));
                }
                for (i, p) in sample.points.iter().enumerate() {
                    if same_point(p, point) {
                        envs[i].lo = envs[i].lo.max(*value);
                        envs[i].hi = envs[i].hi.min(*value);
                    }
                }
            }
            Constraint::GradientAt { vector, .. } => {
                if piecewise_constant(class) && vector.iter().any(|v| v.abs() > TOL) {
                    return Err(Error::Infeasible(
                        "piecewise-constant classes only admit zero gradients".into(),
                    ));
                }
            }
            Constraint::SignAt { point, sign } => {
                for (i, p) in sample.points.iter().enumerate() {
                    if same_point(p, point) {
                        restrict_sign(&mut envs, i, *sign);
                    }
                }
            }
            Constraint::SignOnBall { center, radius, sign } => {
                for (i, p) in sample.points.iter().enumerate() {
                    if p.distance(center) < *radius {
                        restrict_sign(&mut envs, i, *sign);
                    }
                }
            }
            Constraint::AnchorHolds { rule, precision, sign, .. } => {
                if *precision >= 1.0 - COORD_EPS {
                    for (i, p) in sample.points.iter().enumerate() {
                        if rule.contains(p)? {
                            restrict_sign(&mut envs, i, *sign);
                        }
                    }
                } else if !(0.0..=1.0).contains(precision) {
                    return Err(Error::InvalidInput(format!(
                        "anchor precision {precision} outside [0, 1]"
                    )));
                }
            }
            Constraint::MeanEquals { value, .. } => {
                if value.abs() > 1.0 + TOL {
                    return Err(Error::Infeasible(format!(
                        "mean constraint {value} outside the range bound [-1, 1]"
                    )));
                }
            }
            Constraint::ShapEquals { .. } => {}
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on interpolating classes"
                )))
            }
        }
    }
    for e in &envs {
        if e.lo > e.hi + TOL {
            return Err(Error::Infeasible(
                "constraints pin a sample point to an empty value range".into(),
            ));
        }
    }
    Ok(envs)
}

/// Sup-attaining target per point and the (possibly nudged) witness value.
fn targets(envs: &[PointEnvelope], sample: &LabeledSample) -> Vec<(f64, f64)> {
    envs.iter()
        .zip(&sample.labels)
        .map(|(e, &s)| {
            let t = if s >= 0 { e.hi } else { e.lo };
            let mut w = t;
            if w == 0.0 && e.neg_sign {
                w = NEG_NUDGE;
            }
            (t, w)
        })
        .collect()
}

pub fn interpolating_sup(
    class: &ClassSpec,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    let envs = envelopes(class, constraints, sample)?;
    let tg = targets(&envs, sample);
    let value = tg
        .iter()
        .zip(&sample.labels)
        .map(|((t, _), &s)| s as f64 * t)
        .sum::<f64>()
        / sample.n() as f64;
    let witness = construct_witness(class, constraints, sample)?;
    Ok(SupResult::exact(value, Some(witness)))
}

// ---------------------------------------------------------------------------
// witness construction
// ---------------------------------------------------------------------------

struct Gathered<'a> {
    pin: Option<(&'a Point, f64)>,
    mean: Option<(f64, &'a Distribution)>,
    shap: Option<(&'a Point, &'a [f64], &'a Distribution)>,
    anchor: Option<(&'a AxisBox, f64, bool, i8, &'a Distribution)>,
    sign_points: Vec<(&'a Point, i8)>,
    sign_balls: Vec<(&'a Point, f64, i8)>,
}

fn gather<'a>(constraints: &'a [Constraint]) -> Result<Gathered<'a>> {
    let mut g = Gathered {
        pin: None,
        mean: None,
        shap: None,
        anchor: None,
        sign_points: Vec::new(),
        sign_balls: Vec::new(),
    };
    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                if g.pin.is_some() {
                    return Err(Error::Unsupported(
                        "witness construction supports at most one value constraint".into(),
                    ));
                }
                g.pin = Some((point, *value));
            }
            Constraint::MeanEquals { value, dist } => g.mean = Some((*value, dist)),
            Constraint::ShapEquals { point, phi, dist } => g.shap = Some((point, phi, dist)),
            Constraint::AnchorHolds { rule, precision, equality, sign, dist } => {
                g.anchor = Some((rule, *precision, *equality, *sign, dist))
            }
            Constraint::SignAt { point, sign } => g.sign_points.push((point, *sign)),
            Constraint::SignOnBall { center, radius, sign } => {
                g.sign_balls.push((center, *radius, *sign))
            }
            Constraint::GradientAt { .. } => {}
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported by witness construction"
                )))
            }
        }
    }
    if !g.sign_balls.is_empty() && (g.mean.is_some() || g.shap.is_some() || g.anchor.is_some()) {
        return Err(Error::Unsupported(
            "sign-on-ball constraints cannot be combined with mass constraints in witness \
             construction"
                .into(),
        ));
    }
    if g.anchor.is_some() && (g.mean.is_some() || g.shap.is_some()) {
        return Err(Error::Unsupported(
            "anchor constraints cannot be combined with mean or attribution constraints in \
             witness construction"
                .into(),
        ));
    }
    Ok(g)
}

/// Right-leaning 1-d step tree: `pieces` are disjoint ascending half-open
/// intervals `[lo, hi)` with their values; `default` elsewhere.
fn step_tree(pieces: &[(f64, f64, f64)], default: f64) -> AxisTree {
    fn build(pieces: &[(f64, f64, f64)], default: f64) -> TreeNode {
        match pieces.split_first() {
            None => TreeNode::Leaf(default),
            Some((&(lo, hi, v), rest)) => TreeNode::Split {
                feature: 0,
                threshold: lo,
                left: Box::new(TreeNode::Leaf(default)),
                right: Box::new(TreeNode::Split {
                    feature: 0,
                    threshold: hi,
                    left: Box::new(TreeNode::Leaf(v)),
                    right: Box::new(build(rest, default)),
                }),
            },
        }
    }
    AxisTree { root: build(pieces, default), depth_bound: None }
}

/// Per-axis coordinates that boxes and intervals must steer clear of.
fn special_coords(d: usize, sample: &LabeledSample, extra: &[&Point]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); d];
    for p in sample.points.iter().chain(extra.iter().copied()) {
        for (j, &x) in p.coords().iter().enumerate() {
            out[j].push(x);
        }
    }
    for v in &mut out {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    out
}

fn min_gap(coords: &[f64]) -> f64 {
    let mut g = f64::INFINITY;
    for w in coords.windows(2) {
        // sub-epsilon gaps count as coincident: boxes at those points must
        // separate on some other axis instead
        if w[1] - w[0] > COORD_EPS {
            g = g.min(w[1] - w[0]);
        }
    }
    g
}

fn has_duplicates(coords: &[f64]) -> bool {
    coords.windows(2).any(|w| (w[1] - w[0]).abs() <= COORD_EPS)
}

/// A free sub-interval of `line` of length `len`, avoiding every interval in
/// `forbidden`.
fn free_interval(line: &Interval, forbidden: &[(f64, f64)], len: f64) -> Option<(f64, f64)> {
    let mut blocks: Vec<(f64, f64)> = forbidden
        .iter()
        .filter(|&&(lo, hi)| hi > line.lo() && lo < line.hi())
        .map(|&(lo, hi)| (lo.max(line.lo()), hi.min(line.hi())))
        .collect();
    blocks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cursor = line.lo();
    let mut gaps: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in blocks {
        if lo > cursor {
            gaps.push((cursor, lo));
        }
        cursor = cursor.max(hi);
    }
    if line.hi() > cursor {
        gaps.push((cursor, line.hi()));
    }
    gaps.into_iter()
        .filter(|(lo, hi)| hi - lo > len + COORD_EPS)
        .max_by(|a, b| (a.1 - a.0).partial_cmp(&(b.1 - b.0)).unwrap())
        .map(|(lo, hi)| {
            let mid = 0.5 * (lo + hi);
            (mid - 0.5 * len, mid + 0.5 * len)
        })
}

pub fn construct_witness(
    class: &ClassSpec,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<Witness> {
    let envs = envelopes(class, constraints, sample)?;
    let tg = targets(&envs, sample);
    let witness_values: Vec<f64> = tg.iter().map(|&(_, w)| w).collect();
    let g = gather(constraints)?;
    match class {
        ClassSpec::TreeUnbounded => {
            tree_witness(&g, sample, &witness_values).map(Witness::Model)
        }
        ClassSpec::GamTreesUnbounded => {
            gam_witness(&g, sample, &witness_values).map(Witness::Model)
        }
        ClassSpec::PolyUnbounded | ClassSpec::BoundedDifferentiable => {
            bump_sum_witness(&g, sample, &witness_values)
        }
        _ => Err(Error::Unsupported(format!(
            "witness construction applies to interpolating classes, not {}",
            class.name()
        ))),
    }
}

fn tree_witness(
    g: &Gathered,
    sample: &LabeledSample,
    values: &[f64],
) -> Result<FunctionModel> {
    let d = sample.points[0].dim();
    let dist = g
        .shap
        .map(|(_, _, dist)| dist)
        .or(g.mean.map(|(_, dist)| dist))
        .or(g.anchor.map(|(_, _, _, _, dist)| dist));
    if let Some(dist) = dist {
        if !matches!(dist, Distribution::UniformBox { .. }) {
            return Err(Error::UnsupportedDistribution(
                "witness mass accounting needs a product distribution".into(),
            ));
        }
    }
    let support: AxisBox = match dist {
        Some(dist) => dist.support().clone(),
        None => {
            // no mass accounting needed: any box enclosing all relevant
            // points will do
            let mut dims = Vec::with_capacity(d);
            for j in 0..d {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for p in sample
                    .points
                    .iter()
                    .chain(g.pin.iter().map(|(p, _)| *p))
                    .chain(g.sign_points.iter().map(|(p, _)| *p))
                    .chain(g.sign_balls.iter().map(|(p, _, _)| *p))
                {
                    lo = lo.min(p.coords()[j]);
                    hi = hi.max(p.coords()[j]);
                }
                dims.push(Interval::closed(lo - 1.0, hi + 1.0));
            }
            AxisBox::new(dims)
        }
    };

    let extra: Vec<&Point> = g
        .pin
        .iter()
        .map(|(p, _)| *p)
        .chain(g.sign_points.iter().map(|(p, _)| *p))
        .collect();
    let special = special_coords(d, sample, &extra);
    // two fully coincident points cannot receive distinct patch boxes; a
    // shared single coordinate is fine (the boxes separate on another axis)
    let all_points: Vec<&Point> = sample.points.iter().chain(extra.iter().copied()).collect();
    for (i, a) in all_points.iter().enumerate() {
        for b in &all_points[i + 1..] {
            if a.coords().iter().zip(b.coords()).all(|(x, y)| (x - y).abs() <= COORD_EPS) {
                return Err(Error::Degenerate(
                    "two sample or constraint points coincide; witness construction needs \
                     distinct points"
                        .into(),
                ));
            }
        }
    }

    // slab intervals J_j around the pinned point (used by the additive-step
    // base when mean or attribution constraints are present)
    let need_steps = g.mean.is_some() || g.shap.is_some();
    let x0 = g.pin.map(|(p, _)| p);
    let mut slabs: Vec<Option<(f64, f64)>> = vec![None; d];
    if need_steps {
        if let Some(x0) = x0 {
            for j in 0..d {
                let c = x0.coords()[j];
                let mut gap = f64::INFINITY;
                for p in &all_points {
                    // the pinned point itself is exempt; everything else must
                    // stay clear of the step slab on every axis
                    if p.coords().iter().zip(x0.coords()).all(|(a, b)| (a - b).abs() <= COORD_EPS)
                    {
                        continue;
                    }
                    let s = p.coords()[j];
                    if (s - c).abs() <= COORD_EPS {
                        return Err(Error::Degenerate(
                            "a sample or constraint point shares a coordinate with the pinned \
                             point; the step construction needs clearance around it"
                                .into(),
                        ));
                    }
                    gap = gap.min((s - c).abs());
                }
                gap = gap.min(c - support.dims[j].lo()).min(support.dims[j].hi() - c);
                if gap <= 4.0 * COORD_EPS || !gap.is_finite() {
                    return Err(Error::Degenerate(
                        "pinned point sits on a sample coordinate or the support boundary".into(),
                    ));
                }
                let w = gap / 4.0;
                slabs[j] = Some((c - w, c + w));
            }
        }
    }

    // base model and its constant value outside all slabs
    let (base, base_c): (FunctionModel, f64) = match (g.shap, g.mean, g.pin) {
        (Some((x0s, phi, dist)), mean, Some((x0p, y0))) => {
            if !same_point(x0s, x0p) {
                return Err(Error::Unsupported(
                    "attribution and value constraints must share a point".into(),
                ));
            }
            if phi.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: phi.len() });
            }
            let implied_mean = y0 - phi.iter().sum::<f64>();
            if let Some((mu, _)) = mean {
                if (mu - implied_mean).abs() > TOL {
                    return Err(Error::Infeasible(
                        "mean constraint contradicts attribution efficiency".into(),
                    ));
                }
            }
            let q: Vec<f64> = (0..d)
                .map(|j| {
                    let (lo, hi) = slabs[j].expect("slabs built when steps needed");
                    (hi - lo) / dist.marginal(j).length()
                })
                .collect();
            let a: Vec<f64> = phi.iter().zip(&q).map(|(p, q)| p / (1.0 - q)).collect();
            let c = y0 - a.iter().sum::<f64>();
            // range check over all slab-membership combinations
            let max_v = c + a.iter().map(|v| v.max(0.0)).sum::<f64>();
            let min_v = c + a.iter().map(|v| v.min(0.0)).sum::<f64>();
            if max_v > 1.0 + TOL || min_v < -1.0 - TOL {
                return Err(Error::Unsupported(
                    "additive-step base exceeds the range bound for this attribution target"
                        .into(),
                ));
            }
            let mut comps = Vec::with_capacity(d);
            for j in 0..d {
                let (lo, hi) = slabs[j].unwrap();
                let (piece, default) =
                    if j == 0 { (c + a[0], c) } else { (a[j], 0.0) };
                comps.push(step_tree(&[(lo, hi, piece)], default));
            }
            (FunctionModel::Gam(GamModel { components: comps }), c)
        }
        (Some(_), _, None) => {
            return Err(Error::Unsupported(
                "attribution constraints need an accompanying value constraint".into(),
            ))
        }
        (None, Some((mu, _)), Some((x0, y0))) => {
            // single-axis step through the pin, constant elsewhere
            let (lo, hi) = slabs[0].expect("slabs built when steps needed");
            let q0 = (hi - lo) / support.dims[0].length();
            let c = (mu - q0 * y0) / (1.0 - q0);
            if c.abs() > 1.0 + TOL {
                return Err(Error::Infeasible(
                    "mean constraint unattainable with the pinned value".into(),
                ));
            }
            let mut comps = vec![step_tree(&[(lo, hi, y0)], c)];
            comps.extend((1..d).map(|_| AxisTree::leaf(0.0)));
            let _ = x0;
            (FunctionModel::Gam(GamModel { components: comps }), c)
        }
        (None, Some((mu, _)), None) => {
            (FunctionModel::Tree { tree: AxisTree::leaf(mu), dim: d }, mu)
        }
        (None, None, Some((_, y0))) => {
            (FunctionModel::Tree { tree: AxisTree::leaf(y0), dim: d }, y0)
        }
        (None, None, None) => {
            let c = match g.anchor {
                Some((_, _, _, sign, _)) => 0.5 * sign as f64,
                None => 0.0,
            };
            (FunctionModel::Tree { tree: AxisTree::leaf(c), dim: d }, c)
        }
    };

    // base must respect ball sign constraints (it is constant y0 there:
    // gather() rejects mass constraints together with balls)
    for (_, _, sign) in &g.sign_balls {
        if sign_of(base_c) != *sign && base_c != 0.0 {
            return Err(Error::Infeasible(
                "pinned value contradicts a sign constraint on its ball".into(),
            ));
        }
    }

    // patch half-width: clear of slabs, other patches and support edges
    let mut h = f64::INFINITY;
    for j in 0..d {
        h = h.min(min_gap(&special[j]) / 4.0);
        if let Some((lo, hi)) = slabs[j] {
            for &s in &special[j] {
                let dlo = (s - lo).abs().min((s - hi).abs());
                if dlo > COORD_EPS {
                    h = h.min(dlo / 2.0);
                }
            }
        }
    }
    if !h.is_finite() {
        h = 0.25 * support.dims.iter().map(|i| i.length()).fold(f64::INFINITY, f64::min);
    }
    let vol: f64 = support.dims.iter().map(|i| i.length()).product();
    let target_side = (PATCH_MASS / sample.n() as f64 * vol).powf(1.0 / d as f64);
    let h = h.min(0.5 * target_side).max(COORD_EPS * 4.0);

    let cube = |p: &Point| -> AxisBox {
        let mut dims: Vec<Interval> = p
            .coords()
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let lo = (x - h).max(support.dims[j].lo());
                let hi = (x + h).min(support.dims[j].hi());
                Interval::closed(lo, hi)
            })
            .collect();
        // a patch crossing the anchor boundary would corrupt the rule's exact
        // wrong-sign mass accounting; keep each patch on its center's side
        if let Some((rule, ..)) = g.anchor {
            let inside = p
                .coords()
                .iter()
                .zip(&rule.dims)
                .all(|(&x, iv)| iv.contains(x));
            if inside {
                for (j, iv) in dims.iter_mut().enumerate() {
                    let r = &rule.dims[j];
                    *iv = Interval::closed(iv.lo().max(r.lo()), iv.hi().min(r.hi()));
                }
            } else {
                // separating the cube on one outside axis suffices
                for (j, iv) in dims.iter_mut().enumerate() {
                    let r = &rule.dims[j];
                    let x = p.coords()[j];
                    if r.contains(x) {
                        continue;
                    }
                    *iv = if x < r.lo() {
                        Interval::closed(iv.lo(), iv.hi().min(r.lo()))
                    } else {
                        Interval::closed(iv.lo().max(r.hi()), iv.hi())
                    };
                    break;
                }
            }
        }
        AxisBox::new(dims)
    };

    let mut patches: Vec<(AxisBox, f64)> = Vec::new();
    for (p, &v) in sample.points.iter().zip(values) {
        patches.push((cube(p), v));
    }
    for (p, s) in &g.sign_points {
        patches.push((cube(p), *s as f64));
    }

    // anchor filler: wrong-sign mass inside the rule so precision lands on p
    if let Some((rule, precision, equality, sign, dist)) = g.anchor {
        let cov = dist.box_mass(rule)?;
        if cov <= 0.0 {
            return Err(Error::ZeroMass("anchor rule has zero coverage".into()));
        }
        let mut wrong = 0.0;
        for (b, v) in &patches {
            if let Some(inter) = b.intersect(rule) {
                if sign_of(*v) != sign {
                    wrong += dist.box_mass(&inter)?;
                }
            }
        }
        if sign_of(base_c) != sign {
            return Err(Error::Unsupported(
                "witness base sign disagrees with the anchor sign".into(),
            ));
        }
        if equality {
            let needed = (1.0 - precision) * cov - wrong;
            if needed < -TOL {
                return Err(Error::Infeasible(
                    "patch boxes already exceed the anchor's wrong-sign budget".into(),
                ));
            }
            if needed > TOL {
                let fill_value = -(sign as f64);
                let mut lens: Vec<f64> = Vec::with_capacity(d);
                let mut dims_rest: Vec<Interval> = Vec::with_capacity(d);
                for j in 1..d {
                    let iv = match rule.dims[j].intersect(&support.dims[j]) {
                        Some(iv) => iv,
                        None => {
                            return Err(Error::ZeroMass(
                                "anchor rule misses the support".into(),
                            ))
                        }
                    };
                    lens.push(iv.length());
                    dims_rest.push(iv);
                }
                let rest: f64 = lens.iter().product();
                let len0 = needed * vol / rest;
                let line = rule.dims[0]
                    .intersect(&support.dims[0])
                    .ok_or_else(|| Error::ZeroMass("anchor rule misses the support".into()))?;
                let mut forbidden: Vec<(f64, f64)> = patches
                    .iter()
                    .map(|(b, _)| (b.dims[0].lo(), b.dims[0].hi()))
                    .collect();
                if let Some((lo, hi)) = slabs[0] {
                    forbidden.push((lo, hi));
                }
                if let Some((p, _)) = g.pin {
                    forbidden.push((p.coords()[0] - h, p.coords()[0] + h));
                }
                let (lo, hi) = free_interval(&line, &forbidden, len0).ok_or_else(|| {
                    Error::Unsupported(
                        "no room inside the anchor rule for the filler box".into(),
                    )
                })?;
                let mut dims = vec![Interval::closed(lo, hi)];
                dims.extend(dims_rest);
                patches.push((AxisBox::new(dims), fill_value));
            }
        }
    }

    // mean correction: cancel the mass the patches displaced
    if need_steps {
        let dist = dist.expect("distribution present when steps needed");
        let mut shift = 0.0;
        for (b, v) in &patches {
            shift += dist.box_mass(b)? * (v - base_c);
        }
        if shift.abs() > TOL {
            let v_c = if shift > 0.0 { -1.0 } else { 1.0 };
            let denom = base_c - v_c;
            if denom.abs() <= TOL {
                return Err(Error::Unsupported(
                    "no headroom for the mean-correction value".into(),
                ));
            }
            let m_c = shift / denom;
            if m_c <= 0.0 {
                return Err(Error::Unsupported(
                    "mean-correction mass came out non-positive".into(),
                ));
            }
            let mut lens = 1.0;
            let mut dims_rest: Vec<Interval> = Vec::with_capacity(d);
            for j in 1..d {
                let s = &support.dims[j];
                let iv = match slabs[j] {
                    Some((lo, hi)) => {
                        // larger side of the support minus the slab
                        if lo - s.lo() >= s.hi() - hi {
                            Interval::closed(s.lo(), lo)
                        } else {
                            Interval::closed(hi, s.hi())
                        }
                    }
                    None => s.clone(),
                };
                lens *= iv.length();
                dims_rest.push(iv);
            }
            let len0 = m_c * vol / lens;
            let mut forbidden: Vec<(f64, f64)> = patches
                .iter()
                .map(|(b, _)| (b.dims[0].lo(), b.dims[0].hi()))
                .collect();
            if let Some((lo, hi)) = slabs[0] {
                forbidden.push((lo, hi));
            }
            let (lo, hi) =
                free_interval(&support.dims[0], &forbidden, len0).ok_or_else(|| {
                    Error::Unsupported("no room for the mean-correction box".into())
                })?;
            let mut dims = vec![Interval::closed(lo, hi)];
            dims.extend(dims_rest);
            patches.push((AxisBox::new(dims), v_c));
        }
    }

    Ok(FunctionModel::Patched(PatchedModel { base: Box::new(base), patches }))
}

fn gam_witness(
    g: &Gathered,
    sample: &LabeledSample,
    values: &[f64],
) -> Result<FunctionModel> {
    let d = sample.points[0].dim();
    let Some((x0, y0)) = g.pin else {
        return Err(Error::Unsupported(
            "GAM witness construction needs a pinned value".into(),
        ));
    };
    if g.anchor.is_some() || !g.sign_balls.is_empty() || !g.sign_points.is_empty() {
        return Err(Error::Unsupported(
            "GAM witness construction supports value, mean and attribution constraints only"
                .into(),
        ));
    }
    // target mean from the mean constraint or attribution efficiency
    let (mu, dist) = match (g.mean, g.shap) {
        (Some((mu, dist)), shap) => {
            if let Some((xs, phi, _)) = shap {
                if !same_point(xs, x0) {
                    return Err(Error::Unsupported(
                        "attribution and value constraints must share a point".into(),
                    ));
                }
                if (y0 - phi.iter().sum::<f64>() - mu).abs() > TOL {
                    return Err(Error::Infeasible(
                        "mean constraint contradicts attribution efficiency".into(),
                    ));
                }
            }
            (mu, dist)
        }
        (None, Some((xs, phi, dist))) => {
            if !same_point(xs, x0) {
                return Err(Error::Unsupported(
                    "attribution and value constraints must share a point".into(),
                ));
            }
            (y0 - phi.iter().sum::<f64>(), dist)
        }
        // unconstrained mean: all surgery on component 0, no correction
        (None, None) => return gam_unconstrained(d, x0, y0, sample, values),
    };
    if let Some((_, phi, _)) = g.shap {
        if phi.iter().skip(1).any(|p| p.abs() > TOL) {
            return Err(Error::Unsupported(
                "GAM surgery keeps components 2..d constant, so only the first attribution \
                 component may be nonzero"
                    .into(),
            ));
        }
    }
    if mu.abs() > 1.0 - TOL && (mu - y0).abs() > TOL {
        return Err(Error::Infeasible(
            "mean at the range boundary leaves no correction headroom".into(),
        ));
    }
    let marginal = dist.marginal(0);
    let comp0 = surgery_component(
        &marginal,
        x0.coords()[0],
        y0,
        Some(mu),
        &sample.points.iter().map(|p| p.coords()[0]).collect::<Vec<_>>(),
        values,
    )?;
    let mut comps = vec![comp0];
    comps.extend((1..d).map(|_| AxisTree::leaf(0.0)));
    Ok(FunctionModel::Gam(GamModel { components: comps }))
}

fn gam_unconstrained(
    d: usize,
    x0: &Point,
    y0: f64,
    sample: &LabeledSample,
    values: &[f64],
) -> Result<FunctionModel> {
    let coords: Vec<f64> = sample.points.iter().map(|p| p.coords()[0]).collect();
    let mut all = coords.clone();
    all.push(x0.coords()[0]);
    let lo = all.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let comp0 = surgery_component(
        &Interval::closed(lo, hi),
        x0.coords()[0],
        y0,
        None,
        &coords,
        values,
    )?;
    let mut comps = vec![comp0];
    comps.extend((1..d).map(|_| AxisTree::leaf(0.0)));
    Ok(FunctionModel::Gam(GamModel { components: comps }))
}

/// 1-d interval surgery: baseline with spikes at the pinned coordinate and
/// every sample coordinate, plus an exact mean-correction interval.
fn surgery_component(
    marginal: &Interval,
    t0: f64,
    y0: f64,
    mean: Option<f64>,
    coords: &[f64],
    values: &[f64],
) -> Result<AxisTree> {
    let mut all: Vec<f64> = coords.to_vec();
    all.push(t0);
    let mut sorted = all.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if has_duplicates(&sorted) {
        return Err(Error::Degenerate(
            "sample points share their first coordinate; GAM surgery needs distinct spikes"
                .into(),
        ));
    }
    let mut gap = min_gap(&sorted);
    for &t in &sorted {
        gap = gap.min((t - marginal.lo()).abs()).min((marginal.hi() - t).abs());
    }
    if gap <= 4.0 * COORD_EPS || !gap.is_finite() {
        return Err(Error::Degenerate(
            "a spike coordinate touches the marginal boundary".into(),
        ));
    }
    let len = marginal.length();
    let w = (gap / 4.0).min(PATCH_MASS / (all.len() as f64) * len / 2.0);
    let baseline = mean.unwrap_or(0.0);

    let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
    pieces.push((t0 - w, t0 + w, y0));
    for (&t, &v) in coords.iter().zip(values) {
        pieces.push((t - w, t + w, v));
    }

    if let Some(mu) = mean {
        let mut shift = 0.0;
        for &(lo, hi, v) in &pieces {
            shift += (hi - lo) / len * (v - mu);
        }
        if shift.abs() > TOL {
            let v_c = if shift > 0.0 { -1.0 } else { 1.0 };
            let denom = mu - v_c;
            if denom.abs() <= TOL {
                return Err(Error::Unsupported(
                    "no headroom for the mean-correction interval".into(),
                ));
            }
            let frac = shift / denom;
            if frac <= 0.0 {
                return Err(Error::Unsupported(
                    "mean-correction mass came out non-positive".into(),
                ));
            }
            let clen = frac * len;
            let forbidden: Vec<(f64, f64)> =
                pieces.iter().map(|&(lo, hi, _)| (lo, hi)).collect();
            let (lo, hi) = free_interval(marginal, &forbidden, clen).ok_or_else(|| {
                Error::Unsupported("no room for the mean-correction interval".into())
            })?;
            pieces.push((lo, hi, v_c));
        }
    }
    pieces.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(step_tree(&pieces, baseline))
}

/// Symbolic witness for differentiable classes: an anchored base (value and
/// gradient at the pinned point) plus vanishing-derivative bumps realizing
/// each sample value, with a bump radius certified smaller than half the
/// minimum pairwise distance.
fn bump_sum_witness(
    g: &Gathered,
    sample: &LabeledSample,
    values: &[f64],
) -> Result<Witness> {
    if g.mean.is_some() || g.shap.is_some() || g.anchor.is_some() {
        return Err(Error::Unsupported(
            "bump-sum witnesses support value, gradient and sign constraints only".into(),
        ));
    }
    let mut pts: Vec<&Point> = sample.points.iter().collect();
    if let Some((p, _)) = g.pin {
        pts.push(p);
    }
    let mut min_d = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            min_d = min_d.min(pts[i].distance(pts[j]));
        }
    }
    if min_d <= 4.0 * COORD_EPS {
        return Err(Error::Degenerate(
            "coincident points; bump-sum witness needs separated bumps".into(),
        ));
    }
    let radius = if min_d.is_finite() { min_d / 4.0 } else { 0.25 };
    Ok(Witness::Symbolic {
        family: "bump-sum".into(),
        data: json!({
            "base": g.pin.map(|(p, y)| json!({"point": p.coords(), "value": y})),
            "bumps": sample
                .points
                .iter()
                .zip(values)
                .map(|(p, v)| json!({"center": p.coords(), "value": v}))
                .collect::<Vec<_>>(),
            "bump_radius": radius,
            "sample_values": values,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explainers::{shap_explain, Explanation};
    use crate::geometry::trial_rng;
    use rand::Rng;

    fn sample(points: Vec<Vec<f64>>, labels: Vec<i8>) -> LabeledSample {
        LabeledSample::new(points.into_iter().map(Point).collect(), labels).unwrap()
    }

    fn unit_square_dist() -> Distribution {
        Distribution::uniform(AxisBox::cube(0.0, 1.0, 2)).unwrap()
    }

    #[test]
    fn unconstrained_tree_interpolates() {
        let s = sample(vec![vec![0.1, 0.2], vec![0.7, 0.8]], vec![1, -1]);
        let r = interpolating_sup(&ClassSpec::TreeUnbounded, &[], &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL);
        let Some(Witness::Model(m)) = r.witness else { panic!("expected model witness") };
        assert_eq!(m.evaluate(&s.points[0]).unwrap(), 1.0);
        assert_eq!(m.evaluate(&s.points[1]).unwrap(), -1.0);
    }

    #[test]
    fn mean_and_value_witness_verifies() {
        let dist = unit_square_dist();
        let s = sample(vec![vec![0.15, 0.25], vec![0.65, 0.85], vec![0.45, 0.05]], vec![1, -1, 1]);
        let cons = vec![
            Constraint::ValueAt { point: Point(vec![0.3, 0.6]), value: 0.4 },
            Constraint::MeanEquals { value: -0.2, dist: dist.clone() },
        ];
        let r = interpolating_sup(&ClassSpec::TreeUnbounded, &cons, &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL, "off-sample constraints leave sup at 1");
        let Some(Witness::Model(m)) = r.witness else { panic!() };
        assert!((m.evaluate(&Point(vec![0.3, 0.6])).unwrap() - 0.4).abs() < TOL);
        assert!((m.expectation(&dist).unwrap() + 0.2).abs() < TOL);
        for (p, &lbl) in s.points.iter().zip(&s.labels) {
            assert_eq!(m.evaluate(p).unwrap(), lbl as f64);
        }
    }

    #[test]
    fn shap_witness_reproduces_attributions() {
        let dist = unit_square_dist();
        let x0 = Point(vec![0.32, 0.57]);
        let s = sample(vec![vec![0.12, 0.22], vec![0.72, 0.81], vec![0.52, 0.05]], vec![1, 1, -1]);
        let phi = vec![0.15, -0.1];
        let y0 = 0.3;
        let cons = vec![
            Constraint::ValueAt { point: x0.clone(), value: y0 },
            Constraint::ShapEquals { point: x0.clone(), phi: phi.clone(), dist: dist.clone() },
        ];
        let r = interpolating_sup(&ClassSpec::TreeUnbounded, &cons, &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL);
        let Some(Witness::Model(m)) = r.witness else { panic!() };
        assert!((m.evaluate(&x0).unwrap() - y0).abs() < TOL);
        let Explanation::Shap { phi: got } = shap_explain(&m, &dist, &x0).unwrap() else {
            panic!()
        };
        for (a, b) in phi.iter().zip(&got) {
            assert!((a - b).abs() < TOL, "target {a} vs witness {b}");
        }
        for (p, &lbl) in s.points.iter().zip(&s.labels) {
            assert_eq!(m.evaluate(p).unwrap(), lbl as f64);
        }
    }

    #[test]
    fn gam_witness_reproduces_attributions() {
        let dist = unit_square_dist();
        let x0 = Point(vec![0.4, 0.6]);
        let s = sample(vec![vec![0.1, 0.3], vec![0.8, 0.2], vec![0.62, 0.91]], vec![-1, 1, 1]);
        let phi = vec![0.25, 0.0];
        let cons = vec![
            Constraint::ValueAt { point: x0.clone(), value: 0.35 },
            Constraint::ShapEquals { point: x0.clone(), phi: phi.clone(), dist: dist.clone() },
        ];
        let r = interpolating_sup(&ClassSpec::GamTreesUnbounded, &cons, &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL);
        let Some(Witness::Model(m)) = r.witness else { panic!() };
        assert!((m.evaluate(&x0).unwrap() - 0.35).abs() < TOL);
        let Explanation::Shap { phi: got } = shap_explain(&m, &dist, &x0).unwrap() else {
            panic!()
        };
        for (a, b) in phi.iter().zip(&got) {
            assert!((a - b).abs() < TOL);
        }
        for (p, &lbl) in s.points.iter().zip(&s.labels) {
            assert_eq!(m.evaluate(p).unwrap(), lbl as f64);
        }
    }

    #[test]
    fn sign_ball_caps_in_ball_points() {
        // ball of radius 0.5 around x0 with sign +1: a sigma = -1 point
        // inside contributes 0, an outside point stays free
        let s = sample(vec![vec![0.2, 0.0], vec![2.0, 0.0]], vec![-1, -1]);
        let cons = vec![
            Constraint::ValueAt { point: Point(vec![0.0, 0.0]), value: 0.5 },
            Constraint::SignOnBall { center: Point(vec![0.0, 0.0]), radius: 0.5, sign: 1 },
        ];
        let r = interpolating_sup(&ClassSpec::TreeUnbounded, &cons, &s).unwrap();
        assert!((r.value.upper() - 0.5).abs() < TOL);
        let Some(Witness::Model(m)) = r.witness else { panic!() };
        // witness keeps the ball non-negative at the capped point
        assert!(m.evaluate(&s.points[0]).unwrap() >= 0.0);
        assert_eq!(m.evaluate(&s.points[1]).unwrap(), -1.0);
    }

    #[test]
    fn anchor_filler_hits_exact_precision() {
        let dist = unit_square_dist();
        let rule = AxisBox::new(vec![
            Interval::closed(0.0, 0.6),
            Interval::closed(0.0, 1.0),
        ]);
        let s = sample(vec![vec![0.17, 0.33], vec![0.83, 0.71]], vec![1, -1]);
        let p_target = 0.9;
        let cons = vec![
            Constraint::ValueAt { point: Point(vec![0.25, 0.45]), value: 0.5 },
            Constraint::AnchorHolds {
                rule: rule.clone(),
                precision: p_target,
                equality: true,
                sign: 1,
                dist: dist.clone(),
            },
        ];
        let r = interpolating_sup(&ClassSpec::TreeUnbounded, &cons, &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL, "precision < 1 forces nothing");
        let Some(Witness::Model(m)) = r.witness else { panic!() };
        // recompute precision by exact region-mass accounting
        let regions = m.regions(dist.support()).unwrap();
        let mut cov = 0.0;
        let mut good = 0.0;
        for (region, v) in regions {
            if let Some(inter) = region.intersect(&rule) {
                let mass = dist.box_mass(&inter).unwrap();
                cov += mass;
                if sign_of(v) == 1 {
                    good += mass;
                }
            }
        }
        assert!((good / cov - p_target).abs() < 1e-7, "precision {}", good / cov);
        for (p, &lbl) in s.points.iter().zip(&s.labels) {
            assert_eq!(m.evaluate(p).unwrap(), lbl as f64);
        }
    }

    #[test]
    fn perfect_anchor_forces_in_rule_points() {
        let dist = unit_square_dist();
        let rule = AxisBox::new(vec![
            Interval::closed(0.0, 0.5),
            Interval::closed(0.0, 1.0),
        ]);
        let s = sample(vec![vec![0.2, 0.3], vec![0.8, 0.7]], vec![-1, 1]);
        let cons = vec![Constraint::AnchorHolds {
            rule,
            precision: 1.0,
            equality: true,
            sign: 1,
            dist,
        }];
        let r = interpolating_sup(&ClassSpec::TreeUnbounded, &cons, &s).unwrap();
        // in-rule sigma=-1 point contributes 0, the free point 1
        assert!((r.value.upper() - 0.5).abs() < TOL);
    }

    #[test]
    fn nonzero_gradient_on_trees_is_infeasible() {
        let s = sample(vec![vec![0.3, 0.3]], vec![1]);
        let cons = vec![Constraint::GradientAt {
            point: Point(vec![0.5, 0.5]),
            vector: vec![0.2, 0.0],
        }];
        let err = interpolating_sup(&ClassSpec::TreeUnbounded, &cons, &s).unwrap_err();
        assert_eq!(err.kind(), "infeasible");
        // ...but is fine on unbounded polynomials
        let r = interpolating_sup(&ClassSpec::PolyUnbounded, &cons, &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL);
    }

    #[test]
    fn shared_coordinate_is_degenerate() {
        let dist = unit_square_dist();
        let x0 = Point(vec![0.3, 0.6]);
        let s = sample(vec![vec![0.3, 0.1]], vec![1]); // shares coordinate 0 with x0
        let cons = vec![
            Constraint::ValueAt { point: x0.clone(), value: 0.2 },
            Constraint::ShapEquals { point: x0, phi: vec![0.1, 0.0], dist },
        ];
        let err = construct_witness(&ClassSpec::TreeUnbounded, &cons, &s).unwrap_err();
        assert_eq!(err.kind(), "degenerate");
    }

    #[test]
    fn random_mean_witnesses_verify() {
        let dist = unit_square_dist();
        let mut rng = trial_rng(101, 0);
        for _ in 0..30 {
            let n = rng.gen_range(1..6);
            let pts: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let labels: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let s = sample(pts, labels);
            let mu = rng.gen_range(-0.8..0.8);
            let y0 = rng.gen_range(-0.9..0.9);
            let cons = vec![
                Constraint::ValueAt {
                    point: Point(vec![rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]),
                    value: y0,
                },
                Constraint::MeanEquals { value: mu, dist: dist.clone() },
            ];
            let Witness::Model(m) =
                construct_witness(&ClassSpec::TreeUnbounded, &cons, &s).unwrap()
            else {
                panic!()
            };
            assert!((m.expectation(&dist).unwrap() - mu).abs() < TOL);
            for (p, &lbl) in s.points.iter().zip(&s.labels) {
                assert_eq!(m.evaluate(p).unwrap(), lbl as f64);
            }
        }
    }
}
