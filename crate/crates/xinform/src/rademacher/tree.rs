//! Supremum over axis-parallel decision trees of bounded depth.
//!
//! Thresholds between the same pair of adjacent critical coordinates induce
//! the same routing of every sample and constraint point, so trees are
//! enumerated by structure (shape, split features, threshold slots) with
//! leaf values free in [-1, 1]. Mass constraints (mean, anchors) depend on
//! the exact thresholds: leaf masses are multilinear in the thresholds, so
//! their attainable range over a slot box is spanned by the vertex
//! assignments, and a witness threshold is recovered by bisecting along the
//! segment between two vertices (intermediate value theorem).

use super::simplex::{LpBuilder, LpOutcome, Rel};
use super::{Constraint, LabeledSample, SupResult, Witness};
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Distribution, Interval, Point};
use crate::models::{AxisTree, FunctionModel, TreeNode};

const TOL: f64 = 1e-9;
const COORD_EPS: f64 = 1e-12;
const NEG_NUDGE: f64 = -1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Split {
    feature: usize,
    slot: usize,
}

/// Depth-2 tree shape: root split with optional child splits.
#[derive(Debug, Clone)]
struct Structure {
    root: Split,
    left: Option<Split>,
    right: Option<Split>,
}

impl Structure {
    fn thresholds(&self) -> usize {
        1 + self.left.is_some() as usize + self.right.is_some() as usize
    }

    fn leaves(&self) -> usize {
        let l = if self.left.is_some() { 2 } else { 1 };
        let r = if self.right.is_some() { 2 } else { 1 };
        l + r
    }

    /// (node index, side) path to each leaf; node 0 = root, 1 = left child
    /// split, 2 = right child split.
    fn leaf_paths(&self) -> Vec<Vec<(usize, bool)>> {
        let mut out = Vec::new();
        match self.left {
            Some(_) => {
                out.push(vec![(0, true), (1, true)]);
                out.push(vec![(0, true), (1, false)]);
            }
            None => out.push(vec![(0, true)]),
        }
        match self.right {
            Some(_) => {
                out.push(vec![(0, false), (2, true)]);
                out.push(vec![(0, false), (2, false)]);
            }
            None => out.push(vec![(0, false)]),
        }
        out
    }

    fn node(&self, idx: usize) -> Split {
        match idx {
            0 => self.root,
            1 => self.left.unwrap(),
            _ => self.right.unwrap(),
        }
    }

    /// Threshold-vector position of each node's threshold.
    fn t_index(&self, idx: usize) -> usize {
        match idx {
            0 => 0,
            1 => 1,
            _ => 1 + self.left.is_some() as usize,
        }
    }
}

struct Parsed {
    pins: Vec<(Point, f64, f64)>, // point, lower, upper value bound
    mean: Option<(f64, Distribution)>,
    anchor: Option<(AxisBox, f64, bool, i8, Distribution)>,
    /// Full per-component attribution constraint. The structure enumeration
    /// only carries its efficiency consequence (a mean pin), which yields an
    /// upper bound; a feasible-witness search supplies the lower bound.
    shap_full: Option<(Point, Vec<f64>, Distribution)>,
}

fn parse(constraints: &[Constraint]) -> Result<Parsed> {
    let mut p = Parsed { pins: Vec::new(), mean: None, anchor: None, shap_full: None };
    let mut shap: Option<(Point, f64, Distribution)> = None; // point, sum phi, dist
    let mut value_at: Vec<(Point, f64)> = Vec::new();
    for con in constraints {
        match con {
            Constraint::ValueAt { point, value } => {
                if value.abs() > 1.0 + TOL {
                    return Err(Error::Infeasible(format!(
                        "value constraint {value} outside the range bound [-1, 1]"
                    )));
                }
                p.pins.push((point.clone(), *value, *value));
                value_at.push((point.clone(), *value));
            }
            Constraint::SignAt { point, sign } => {
                if *sign >= 0 {
                    p.pins.push((point.clone(), 0.0, 1.0));
                } else {
                    // sign(0) is positive, so a negative sign is strict; the
                    // nudged upper bound keeps witnesses strictly below zero
                    // while moving the supremum by far less than 1e-9
                    p.pins.push((point.clone(), -1.0, NEG_NUDGE));
                }
            }
            Constraint::GradientAt { vector, .. } => {
                if vector.iter().any(|v| v.abs() > TOL) {
                    return Err(Error::Infeasible(
                        "trees only admit zero gradients".into(),
                    ));
                }
            }
            Constraint::MeanEquals { value, dist } => {
                if p.mean.is_some() {
                    return Err(Error::Unsupported("at most one mean constraint".into()));
                }
                p.mean = Some((*value, dist.clone()));
            }
            Constraint::ShapEquals { point, phi, dist } => {
                // the enumeration bound uses value + mean via efficiency;
                // the full rows are kept for the feasible-witness search
                shap = Some((point.clone(), phi.iter().sum(), dist.clone()));
                p.shap_full = Some((point.clone(), phi.clone(), dist.clone()));
            }
            Constraint::AnchorHolds { rule, precision, equality, sign, dist } => {
                if p.anchor.is_some() {
                    return Err(Error::Unsupported("at most one anchor constraint".into()));
                }
                if !(0.0..=1.0).contains(precision) {
                    return Err(Error::InvalidInput(format!(
                        "anchor precision {precision} outside [0, 1]"
                    )));
                }
                p.anchor =
                    Some((rule.clone(), *precision, *equality, *sign, dist.clone()));
            }
            other => {
                return Err(Error::Unsupported(format!(
                    "constraint {other:?} is not supported on bounded trees"
                )))
            }
        }
    }
    if let Some((x0, phi_sum, dist)) = shap {
        let y0 = value_at
            .iter()
            .find(|(p, _)| {
                p.coords()
                    .iter()
                    .zip(x0.coords())
                    .all(|(a, b)| (a - b).abs() <= COORD_EPS)
            })
            .map(|(_, y)| *y)
            .ok_or_else(|| {
                Error::Unsupported(
                    "attribution constraints on trees need an accompanying value constraint"
                        .into(),
                )
            })?;
        let mu = y0 - phi_sum;
        if let Some((existing, _)) = &p.mean {
            if (existing - mu).abs() > TOL {
                return Err(Error::Infeasible(
                    "mean constraint contradicts attribution efficiency".into(),
                ));
            }
        } else {
            p.mean = Some((mu, dist));
        }
    }
    if p.mean.is_some() && p.anchor.is_some() {
        return Err(Error::Unsupported(
            "mean and anchor constraints cannot be combined on bounded trees".into(),
        ));
    }
    Ok(p)
}

/// Left-routing rule: thresholds live strictly above the slot's lower edge,
/// so a critical coordinate goes left iff it is at or below that edge.
fn routes_left(x: f64, slot: (f64, f64)) -> bool {
    x <= slot.0 + COORD_EPS
}

fn leaf_of(structure: &Structure, slots: &[Vec<(f64, f64)>], p: &Point) -> usize {
    let paths = structure.leaf_paths();
    'path: for (k, path) in paths.iter().enumerate() {
        for &(node, left) in path {
            let s = structure.node(node);
            if routes_left(p.coords()[s.feature], slots[s.feature][s.slot]) != left {
                continue 'path;
            }
        }
        return k;
    }
    unreachable!("every point routes to exactly one leaf")
}

/// Leaf region for concrete thresholds.
fn leaf_region(
    structure: &Structure,
    support: &AxisBox,
    t: &[f64],
    path: &[(usize, bool)],
) -> AxisBox {
    let mut dims: Vec<Interval> = support.dims.clone();
    for &(node, left) in path {
        let s = structure.node(node);
        let thr = t[structure.t_index(node)];
        let iv = &dims[s.feature];
        dims[s.feature] = if left {
            Interval::closed(iv.lo(), thr.min(iv.hi()).max(iv.lo()))
        } else {
            Interval::closed(thr.max(iv.lo()).min(iv.hi()), iv.hi())
        };
    }
    AxisBox::new(dims)
}

/// All slot-corner threshold assignments compatible with the nesting order.
fn vertex_assignments(structure: &Structure, slots: &[Vec<(f64, f64)>]) -> Vec<Vec<f64>> {
    let m = structure.thresholds();
    let mut nodes = vec![0usize];
    if structure.left.is_some() {
        nodes.push(1);
    }
    if structure.right.is_some() {
        nodes.push(2);
    }
    let mut out = Vec::new();
    for mask in 0..(1usize << m) {
        let mut t = vec![0.0; m];
        for &node in &nodes {
            let s = structure.node(node);
            let (lo, hi) = slots[s.feature][s.slot];
            t[structure.t_index(node)] = if mask >> structure.t_index(node) & 1 == 0 {
                lo
            } else {
                hi
            };
        }
        // nesting order within a shared slot: t_left <= t_root <= t_right
        let root = structure.node(0);
        let mut ok = true;
        if let Some(l) = structure.left {
            if l.feature == root.feature
                && l.slot == root.slot
                && t[structure.t_index(1)] > t[0]
            {
                ok = false;
            }
        }
        if let Some(r) = structure.right {
            if r.feature == root.feature
                && r.slot == root.slot
                && t[structure.t_index(2)] < t[0]
            {
                ok = false;
            }
        }
        if ok && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn build_tree(structure: &Structure, t: &[f64], leaf_values: &[f64]) -> AxisTree {
    let paths = structure.leaf_paths();
    let child = |node_idx: usize, base: usize| -> TreeNode {
        // base = index of the first leaf under this child subtree
        let s = structure.node(node_idx);
        TreeNode::Split {
            feature: s.feature,
            threshold: t[structure.t_index(node_idx)],
            left: Box::new(TreeNode::Leaf(leaf_values[base])),
            right: Box::new(TreeNode::Leaf(leaf_values[base + 1])),
        }
    };
    let _ = &paths;
    let left_subtree = match structure.left {
        Some(_) => child(1, 0),
        None => TreeNode::Leaf(leaf_values[0]),
    };
    let right_base = if structure.left.is_some() { 2 } else { 1 };
    let right_subtree = match structure.right {
        Some(_) => child(2, right_base),
        None => TreeNode::Leaf(leaf_values[right_base]),
    };
    AxisTree {
        root: TreeNode::Split {
            feature: structure.root.feature,
            threshold: t[0],
            left: Box::new(left_subtree),
            right: Box::new(right_subtree),
        },
        depth_bound: Some(2),
    }
}

/// Bisection along the segment between two threshold assignments to hit
/// `target` for a continuous mass functional.
fn bisect_thresholds(
    f: impl Fn(&[f64]) -> f64,
    lo_v: &[f64],
    hi_v: &[f64],
    target: f64,
) -> Vec<f64> {
    let at = |s: f64| -> Vec<f64> {
        lo_v.iter().zip(hi_v).map(|(a, b)| a + s * (b - a)).collect()
    };
    let g = |s: f64| -> f64 { f(&at(s)) - target };
    // endpoints can miss the target by float noise from the solver; accept
    // them outright before relying on a sign change
    let g0 = g(0.0);
    if g0.abs() <= 1e-12 {
        return at(0.0);
    }
    if g(1.0).abs() <= 1e-12 {
        return at(1.0);
    }
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if gm.abs() <= 1e-13 {
            return at(mid);
        }
        if gm * g0 > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    at(0.5 * (a + b))
}

/// Nudge thresholds strictly above their slot's lower edge so point routing
/// matches the slot assumption.
fn nudge(structure: &Structure, slots: &[Vec<(f64, f64)>], t: &mut [f64]) {
    let mut nodes = vec![0usize];
    if structure.left.is_some() {
        nodes.push(1);
    }
    if structure.right.is_some() {
        nodes.push(2);
    }
    for &node in &nodes {
        let s = structure.node(node);
        let (lo, hi) = slots[s.feature][s.slot];
        let eps = (hi - lo) * 1e-9;
        let i = structure.t_index(node);
        if t[i] < lo + eps {
            t[i] = lo + eps;
        }
    }
}

pub fn tree_sup(
    depth: usize,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    if depth > 2 {
        return Err(Error::Budget(format!(
            "bounded-tree solver implemented for depth <= 2, requested {depth}"
        )));
    }
    let parsed = parse(constraints)?;
    let d = sample.points[0].dim();
    let n = sample.n() as f64;
    let dist = parsed
        .mean
        .as_ref()
        .map(|(_, dist)| dist.clone())
        .or_else(|| parsed.anchor.as_ref().map(|(_, _, _, _, dist)| dist.clone()));
    if let Some(dist) = &dist {
        if !matches!(dist, Distribution::UniformBox { .. }) {
            return Err(Error::UnsupportedDistribution(
                "tree mass constraints need a product distribution".into(),
            ));
        }
    }
    let support: AxisBox = match &dist {
        Some(dist) => dist.support().clone(),
        None => {
            let mut dims = Vec::with_capacity(d);
            for j in 0..d {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for p in sample.points.iter().chain(parsed.pins.iter().map(|(p, _, _)| p)) {
                    lo = lo.min(p.coords()[j]);
                    hi = hi.max(p.coords()[j]);
                }
                dims.push(Interval::closed(lo - 1.0, hi + 1.0));
            }
            AxisBox::new(dims)
        }
    };

    // critical coordinates and slots per feature
    let mut slots: Vec<Vec<(f64, f64)>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut coords = vec![support.dims[j].lo(), support.dims[j].hi()];
        for p in sample.points.iter().chain(parsed.pins.iter().map(|(p, _, _)| p)) {
            let x = p.coords()[j].clamp(support.dims[j].lo(), support.dims[j].hi());
            coords.push(x);
        }
        if let Some((rule, ..)) = &parsed.anchor {
            coords.push(rule.dims[j].lo().clamp(support.dims[j].lo(), support.dims[j].hi()));
            coords.push(rule.dims[j].hi().clamp(support.dims[j].lo(), support.dims[j].hi()));
        }
        coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
        coords.dedup_by(|a, b| (*a - *b).abs() <= COORD_EPS);
        let mut s = Vec::new();
        for w in coords.windows(2) {
            if w[1] - w[0] > 4.0 * COORD_EPS {
                s.push((w[0], w[1]));
            }
        }
        slots.push(s);
    }

    // enumerate structures (including depth 0 as a degenerate case below)
    let mut structures: Vec<Structure> = Vec::new();
    if depth >= 1 {
        let all_splits: Vec<Split> = (0..d)
            .flat_map(|j| (0..slots[j].len()).map(move |s| Split { feature: j, slot: s }))
            .collect();
        for &root in &all_splits {
            let child_opts = |left: bool| -> Vec<Option<Split>> {
                let mut opts = vec![None];
                if depth >= 2 {
                    for &c in &all_splits {
                        if c.feature == root.feature {
                            let ok = if left { c.slot <= root.slot } else { c.slot >= root.slot };
                            if !ok {
                                continue;
                            }
                        }
                        opts.push(Some(c));
                    }
                }
                opts
            };
            for l in child_opts(true) {
                for r in child_opts(false) {
                    structures.push(Structure { root, left: l, right: r });
                }
            }
        }
    }

    let mut best: Option<(f64, AxisTree)> = None;

    // depth-0 candidate: a single constant leaf
    {
        let sbar: f64 = sample.labels.iter().map(|&s| s as f64).sum::<f64>() / n;
        if let Some(r) = constant_candidate(&parsed, sbar) {
            let (value, leaf) = r;
            best = Some((value, AxisTree::leaf(leaf)));
        }
    }

    for structure in &structures {
        let k = structure.leaves();
        let paths = structure.leaf_paths();
        // objective coefficients and per-leaf bounds via slot routing
        let mut coef = vec![0.0; k];
        for (p, &s) in sample.points.iter().zip(&sample.labels) {
            coef[leaf_of(structure, &slots, p)] += s as f64 / n;
        }
        let mut lo: Vec<f64> = vec![-1.0; k];
        let mut hi: Vec<f64> = vec![1.0; k];
        let mut feasible = true;
        for (p, plo, phi) in &parsed.pins {
            let leaf = leaf_of(structure, &slots, p);
            lo[leaf] = lo[leaf].max(*plo);
            hi[leaf] = hi[leaf].min(*phi);
            if lo[leaf] > hi[leaf] + TOL {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let ub: f64 = coef
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(c, (l, h))| (c * l).max(c * h))
            .sum();
        if let Some((bv, _)) = &best {
            if ub <= *bv + 1e-15 {
                continue;
            }
        }

        let outcome: Option<(f64, Vec<f64>, Vec<f64>)> = match (&parsed.mean, &parsed.anchor) {
            (None, None) => {
                let v: Vec<f64> = coef
                    .iter()
                    .zip(lo.iter().zip(&hi))
                    .map(|(c, (l, h))| if c * h >= c * l { *h } else { *l })
                    .collect();
                let mut t: Vec<f64> = (0..structure.thresholds()).map(|_| 0.0).collect();
                midpoints(structure, &slots, &mut t);
                Some((ub, v, t))
            }
            (Some((mu, dist)), None) => solve_mean(
                structure, &slots, &support, dist, *mu, &coef, &lo, &hi, &paths,
            )?,
            (None, Some((rule, precision, equality, sign, dist))) => solve_anchor(
                structure, &slots, &support, dist, rule, *precision, *equality, *sign,
                &coef, &lo, &hi, &paths,
            )?,
            (Some(_), Some(_)) => unreachable!("rejected in parse"),
        };
        if let Some((value, v, mut t)) = outcome {
            let improves = match &best {
                Some((bv, _)) => value > *bv + 1e-15,
                None => true,
            };
            if improves {
                nudge(structure, &slots, &mut t);
                best = Some((value, build_tree(structure, &t, &v)));
            }
        }
    }

    let Some((value, tree)) = best else {
        return Err(Error::Infeasible("no bounded tree satisfies the constraints".into()));
    };
    let Some((x0, phi, shap_dist)) = &parsed.shap_full else {
        return Ok(SupResult::exact(
            value,
            Some(Witness::Model(FunctionModel::Tree { tree, dim: d })),
        ));
    };
    // the attribution constraint was only enforced through its efficiency
    // consequence, so `value` is an upper bound; certify a lower bound with
    // a tree that satisfies the full per-component rows
    let found = shap_feasible_search(
        depth, x0, phi, shap_dist, &parsed.pins, sample, &slots, value,
    )?;
    match found {
        Some((low, wtree)) if value - low <= TOL => Ok(SupResult::exact(
            low.min(value),
            Some(Witness::Model(FunctionModel::Tree { tree: wtree, dim: d })),
        )),
        Some((low, wtree)) => Ok(SupResult::bracket(
            low.min(value),
            value,
            Some(Witness::Model(FunctionModel::Tree { tree: wtree, dim: d })),
        )),
        None => Ok(SupResult::bracket(
            -1.0,
            value,
            Some(Witness::Symbolic {
                family: "tree-range-bound".into(),
                data: serde_json::json!({
                    "note": "no attribution-feasible candidate tree located; \
                             lower bound from the [-1, 1] range"
                }),
            }),
        )),
    }
}

/// Search for a bounded tree satisfying the full attribution rows exactly.
///
/// Candidate topologies: a single split, and a root split with both children
/// splitting the other feature at a shared threshold (a 2x2 cell tree).
/// For each concrete threshold assignment the attributions are linear in the
/// leaf values (conditional expectations are), so feasibility and the best
/// attainable correlation reduce to a tiny LP over the leaves.
#[allow(clippy::too_many_arguments)]
fn shap_feasible_search(
    depth: usize,
    x0: &Point,
    phi: &[f64],
    dist: &Distribution,
    pins: &[(Point, f64, f64)],
    sample: &LabeledSample,
    slots: &[Vec<(f64, f64)>],
    upper: f64,
) -> Result<Option<(f64, AxisTree)>> {
    let d = x0.dim();
    if d != 2 || depth == 0 {
        return Ok(None);
    }
    let support = dist.support();
    let mut cands: Vec<Vec<f64>> = Vec::with_capacity(2);
    for j in 0..2 {
        let (lo, hi) = (support.dims[j].lo(), support.dims[j].hi());
        let mut c: Vec<f64> = Vec::new();
        for &(a, b) in &slots[j] {
            c.push(a);
            c.push(b);
        }
        for i in 1..10 {
            c.push(lo + (hi - lo) * i as f64 / 10.0);
        }
        c.retain(|&t| t > lo + COORD_EPS && t < hi - COORD_EPS);
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        c.dedup_by(|a, b| (*a - *b).abs() <= COORD_EPS);
        cands.push(c);
    }

    let n = sample.n() as f64;
    let mut best: Option<(f64, AxisTree)> = None;
    let mut trees: Vec<AxisTree> = Vec::new();
    for j in 0..2usize {
        for &a in &cands[j] {
            trees.push(AxisTree {
                root: TreeNode::Split {
                    feature: j,
                    threshold: a,
                    left: Box::new(TreeNode::Leaf(0.0)),
                    right: Box::new(TreeNode::Leaf(1.0)),
                },
                depth_bound: Some(depth),
            });
            if depth >= 2 {
                for &b in &cands[1 - j] {
                    let sub = |base: f64| TreeNode::Split {
                        feature: 1 - j,
                        threshold: b,
                        left: Box::new(TreeNode::Leaf(base)),
                        right: Box::new(TreeNode::Leaf(base + 1.0)),
                    };
                    trees.push(AxisTree {
                        root: TreeNode::Split {
                            feature: j,
                            threshold: a,
                            left: Box::new(sub(0.0)),
                            right: Box::new(sub(2.0)),
                        },
                        depth_bound: Some(depth),
                    });
                }
            }
        }
    }

    for proto in &trees {
        // the certified upper bound caps the search; stop once it is met
        if best.as_ref().map_or(false, |(bv, _)| *bv >= upper - TOL) {
            break;
        }
        // the prototype's leaf values enumerate its leaves 0..k
        let k = match &proto.root {
            TreeNode::Split { left, right, .. } => {
                let leaves = |n: &TreeNode| match n {
                    TreeNode::Leaf(_) => 1,
                    TreeNode::Split { .. } => 2,
                };
                leaves(left) + leaves(right)
            }
            TreeNode::Leaf(_) => 1,
        };
        // indicator models per leaf, reusing the prototype's leaf numbering
        let indicator = |l: usize| -> AxisTree {
            fn map(node: &TreeNode, l: f64) -> TreeNode {
                match node {
                    TreeNode::Leaf(v) => {
                        TreeNode::Leaf(if (*v - l).abs() < 0.5 { 1.0 } else { 0.0 })
                    }
                    TreeNode::Split { feature, threshold, left, right } => TreeNode::Split {
                        feature: *feature,
                        threshold: *threshold,
                        left: Box::new(map(left, l)),
                        right: Box::new(map(right, l)),
                    },
                }
            }
            AxisTree { root: map(&proto.root, l as f64), depth_bound: proto.depth_bound }
        };
        let mut coef = vec![0.0f64; k];
        let mut lo = vec![-1.0f64; k];
        let mut hi = vec![1.0f64; k];
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; k]; d];
        let mut feasible = true;
        for l in 0..k {
            let ind = FunctionModel::Tree { tree: indicator(l), dim: 2 };
            for (p, &s) in sample.points.iter().zip(&sample.labels) {
                coef[l] += s as f64 * ind.evaluate(p)? / n;
            }
            let crate::explainers::Explanation::Shap { phi: cols } =
                crate::explainers::shap_explain(&ind, dist, x0)?
            else {
                unreachable!("shap explainer returns attributions");
            };
            for (row, col) in rows.iter_mut().zip(&cols) {
                row[l] = *col;
            }
            for (p, plo, phi_hi) in pins {
                if ind.evaluate(p)? > 0.5 {
                    lo[l] = lo[l].max(*plo);
                    hi[l] = hi[l].min(*phi_hi);
                }
            }
            if lo[l] > hi[l] + TOL {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        let mut lp = LpBuilder::new(coef.clone(), lo, hi);
        for (row, &target) in rows.into_iter().zip(phi) {
            lp.add_row(row, Rel::Eq, target);
        }
        if let LpOutcome::Optimal { value, x } = lp.solve()? {
            let improves = best.as_ref().map_or(true, |(bv, _)| value > *bv + 1e-15);
            if improves {
                fn fill(node: &TreeNode, v: &[f64]) -> TreeNode {
                    match node {
                        TreeNode::Leaf(l) => TreeNode::Leaf(v[*l as usize]),
                        TreeNode::Split { feature, threshold, left, right } => TreeNode::Split {
                            feature: *feature,
                            threshold: *threshold,
                            left: Box::new(fill(left, v)),
                            right: Box::new(fill(right, v)),
                        },
                    }
                }
                best = Some((
                    value,
                    AxisTree { root: fill(&proto.root, &x), depth_bound: proto.depth_bound },
                ));
            }
        }
    }
    Ok(best)
}

fn midpoints(structure: &Structure, slots: &[Vec<(f64, f64)>], t: &mut [f64]) {
    let set = |node: usize, t: &mut [f64]| {
        let s = structure.node(node);
        let (lo, hi) = slots[s.feature][s.slot];
        t[structure.t_index(node)] = 0.5 * (lo + hi);
    };
    set(0, t);
    if structure.left.is_some() {
        // shared-slot children order around the root threshold
        let s = structure.node(1);
        let root = structure.node(0);
        if s.feature == root.feature && s.slot == root.slot {
            let (lo, hi) = slots[s.feature][s.slot];
            t[structure.t_index(1)] = lo + 0.25 * (hi - lo);
        } else {
            set(1, t);
        }
    }
    if structure.right.is_some() {
        let s = structure.node(2);
        let root = structure.node(0);
        if s.feature == root.feature && s.slot == root.slot {
            let (lo, hi) = slots[s.feature][s.slot];
            t[structure.t_index(2)] = lo + 0.75 * (hi - lo);
        } else {
            set(2, t);
        }
    }
}

fn constant_candidate(parsed: &Parsed, sbar: f64) -> Option<(f64, f64)> {
    let mut lo: f64 = -1.0;
    let mut hi: f64 = 1.0;
    for (_, plo, phi) in &parsed.pins {
        lo = lo.max(*plo);
        hi = hi.min(*phi);
    }
    if lo > hi + TOL {
        return None;
    }
    if let Some((mu, _)) = &parsed.mean {
        // a constant's mean is itself
        if *mu < lo - TOL || *mu > hi + TOL {
            return None;
        }
        return Some((sbar * mu, *mu));
    }
    if let Some((_, precision, equality, sign, _)) = &parsed.anchor {
        // a constant leaf has precision 1 for its own sign
        let want = if *equality { (*precision - 1.0).abs() <= TOL } else { true };
        let (clo, chi) = if *sign >= 0 { (lo.max(0.0), hi) } else { (lo, hi.min(0.0)) };
        if !want || clo > chi + TOL {
            return None;
        }
        let v = if sbar >= 0.0 { chi } else { clo };
        return Some((sbar * v, v));
    }
    let v = if sbar >= 0.0 { hi } else { lo };
    Some((sbar * v, v))
}

#[allow(clippy::too_many_arguments)]
fn solve_mean(
    structure: &Structure,
    slots: &[Vec<(f64, f64)>],
    support: &AxisBox,
    dist: &Distribution,
    mu: f64,
    coef: &[f64],
    lo: &[f64],
    hi: &[f64],
    paths: &[Vec<(usize, bool)>],
) -> Result<Option<(f64, Vec<f64>, Vec<f64>)>> {
    let verts = vertex_assignments(structure, slots);
    let mut mass_vectors: Vec<(Vec<f64>, Vec<f64>)> = Vec::new(); // (masses, t)
    for t in &verts {
        let m: Vec<f64> = paths
            .iter()
            .map(|path| dist.box_mass(&leaf_region(structure, support, t, path)))
            .collect::<Result<_>>()?;
        if !mass_vectors
            .iter()
            .any(|(e, _)| e.iter().zip(&m).all(|(a, b)| (a - b).abs() <= 1e-14))
        {
            mass_vectors.push((m, t.clone()));
        }
    }
    let mut best: Option<(f64, Vec<f64>, usize, usize)> = None;
    for (i1, (m1, _)) in mass_vectors.iter().enumerate() {
        for (i2, (m2, _)) in mass_vectors.iter().enumerate() {
            let mut lp = LpBuilder::new(coef.to_vec(), lo.to_vec(), hi.to_vec());
            lp.add_row(m1.clone(), Rel::Le, mu);
            lp.add_row(m2.clone(), Rel::Ge, mu);
            if let LpOutcome::Optimal { value, x } = lp.solve()? {
                if best.as_ref().map(|(bv, ..)| value > bv + 1e-15).unwrap_or(true) {
                    best = Some((value, x, i1, i2));
                }
            }
        }
    }
    let Some((value, v, i1, i2)) = best else { return Ok(None) };
    let v: Vec<f64> = v.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect();
    // recover thresholds achieving the exact mean for this leaf assignment
    let dot = |m: &[f64]| -> f64 { m.iter().zip(&v).map(|(a, b)| a * b).sum() };
    let f = |t: &[f64]| -> f64 {
        paths
            .iter()
            .zip(&v)
            .map(|(path, val)| {
                dist.box_mass(&leaf_region(structure, support, t, path)).unwrap_or(0.0) * val
            })
            .sum()
    };
    let (m1, t1) = &mass_vectors[i1];
    let (m2, t2) = &mass_vectors[i2];
    let (from, to) = if dot(m1) <= dot(m2) { (t1, t2) } else { (t2, t1) };
    let t = bisect_thresholds(f, from, to, mu);
    if (f(&t) - mu).abs() > TOL {
        return Err(Error::Degenerate(
            "mean-threshold bisection failed to converge".into(),
        ));
    }
    Ok(Some((value, v, t)))
}

#[allow(clippy::too_many_arguments)]
fn solve_anchor(
    structure: &Structure,
    slots: &[Vec<(f64, f64)>],
    support: &AxisBox,
    dist: &Distribution,
    rule: &AxisBox,
    precision: f64,
    equality: bool,
    sign: i8,
    coef: &[f64],
    lo: &[f64],
    hi: &[f64],
    paths: &[Vec<(usize, bool)>],
) -> Result<Option<(f64, Vec<f64>, Vec<f64>)>> {
    let cov = dist.box_mass(rule)?;
    if cov <= 0.0 {
        return Err(Error::ZeroMass("anchor rule has zero coverage".into()));
    }
    let target = precision * cov;
    let verts = vertex_assignments(structure, slots);
    let k = paths.len();
    // in-rule mass per leaf at each vertex
    let mut rule_masses: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for t in &verts {
        let m: Vec<f64> = paths
            .iter()
            .map(|path| {
                let region = leaf_region(structure, support, t, path);
                match region.intersect(rule) {
                    Some(inter) => dist.box_mass(&inter),
                    None => Ok(0.0),
                }
            })
            .collect::<Result<_>>()?;
        rule_masses.push((m, t.clone()));
    }

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for pattern in 0..(1usize << k) {
        // pattern bit = leaf carries the anchor's sign
        let mut plo = lo.to_vec();
        let mut phi = hi.to_vec();
        let mut ok = true;
        for leaf in 0..k {
            if pattern >> leaf & 1 == 1 {
                if sign >= 0 {
                    plo[leaf] = plo[leaf].max(0.0);
                } else {
                    phi[leaf] = phi[leaf].min(0.0);
                }
            } else {
                // leaf must carry the opposite sign; sign_of(0) = +1, so a
                // negative-anchor complement leaf needs v >= 0
                if sign >= 0 {
                    phi[leaf] = phi[leaf].min(0.0);
                } else {
                    plo[leaf] = plo[leaf].max(0.0);
                }
            }
            if plo[leaf] > phi[leaf] + TOL {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let good = |m: &[f64]| -> f64 {
            (0..k).filter(|l| pattern >> l & 1 == 1).map(|l| m[l]).sum()
        };
        let gmin = rule_masses
            .iter()
            .map(|(m, _)| good(m))
            .fold(f64::INFINITY, f64::min);
        let gmax = rule_masses
            .iter()
            .map(|(m, _)| good(m))
            .fold(f64::NEG_INFINITY, f64::max);
        let attainable = if equality {
            target >= gmin - TOL && target <= gmax + TOL
        } else {
            gmax >= target - TOL
        };
        if !attainable {
            continue;
        }
        let value: f64 = coef
            .iter()
            .zip(plo.iter().zip(&phi))
            .map(|(c, (l, h))| (c * l).max(c * h))
            .sum();
        if best.as_ref().map(|(bv, ..)| value <= bv + 1e-15).unwrap_or(false) {
            continue;
        }
        let mut v: Vec<f64> = coef
            .iter()
            .zip(plo.iter().zip(&phi))
            .map(|(c, (l, h))| if c * h >= c * l { *h } else { *l })
            .collect();
        // a leaf that must carry the negative sign cannot sit at exactly 0,
        // since 0 reads as positive
        for leaf in 0..k {
            let needs_negative =
                if sign >= 0 { pattern >> leaf & 1 == 0 } else { pattern >> leaf & 1 == 1 };
            if needs_negative && v[leaf] == 0.0 {
                v[leaf] = -1e-15;
            }
        }
        // thresholds: hit the target good-mass exactly (equality) or take the
        // most-permissive vertex (inequality)
        let t = if equality {
            let from = rule_masses
                .iter()
                .min_by(|a, b| good(&a.0).partial_cmp(&good(&b.0)).unwrap())
                .unwrap();
            let to = rule_masses
                .iter()
                .max_by(|a, b| good(&a.0).partial_cmp(&good(&b.0)).unwrap())
                .unwrap();
            let gf = |t: &[f64]| -> f64 {
                paths
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| pattern >> l & 1 == 1)
                    .map(|(_, path)| {
                        let region = leaf_region(structure, support, t, path);
                        region
                            .intersect(rule)
                            .map(|b| dist.box_mass(&b).unwrap_or(0.0))
                            .unwrap_or(0.0)
                    })
                    .sum()
            };
            let t = bisect_thresholds(gf, &from.1, &to.1, target);
            if (gf(&t) - target).abs() > TOL {
                continue;
            }
            t
        } else {
            rule_masses
                .iter()
                .max_by(|a, b| good(&a.0).partial_cmp(&good(&b.0)).unwrap())
                .unwrap()
                .1
                .clone()
        };
        best = Some((value, v, t));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::trial_rng;
    use crate::models::sign_of;
    use rand::Rng;

    fn sample(points: Vec<Vec<f64>>, labels: Vec<i8>) -> LabeledSample {
        LabeledSample::new(points.into_iter().map(Point).collect(), labels).unwrap()
    }

    fn uniform_square() -> Distribution {
        Distribution::uniform(AxisBox::cube(0.0, 1.0, 2)).unwrap()
    }

    #[test]
    fn depth_two_separates_three_points_on_a_line() {
        let s = sample(vec![vec![0.1], vec![0.5], vec![0.9]], vec![1, -1, 1]);
        let r = tree_sup(2, &[], &s).unwrap();
        assert!((r.value.upper() - 1.0).abs() < TOL);
        let Some(Witness::Model(m)) = &r.witness else { panic!() };
        for (p, &lbl) in s.points.iter().zip(&s.labels) {
            assert_eq!(m.evaluate(p).unwrap(), lbl as f64);
        }
    }

    #[test]
    fn depth_one_cannot_separate_alternating_points() {
        // + - + on a line: one split gives at best 2 of 3
        let s = sample(vec![vec![0.1], vec![0.5], vec![0.9]], vec![1, -1, 1]);
        let r = tree_sup(1, &[], &s).unwrap();
        assert!((r.value.upper() - 1.0 / 3.0).abs() < TOL, "got {}", r.value.upper());
    }

    #[test]
    fn value_pin_routes_with_samples() {
        // pin at a point that shares every leaf with the lone sample point
        // under any depth-1 split on [0,1]: the sample sits right next to it
        let s = sample(vec![vec![0.500001]], vec![-1]);
        let cons = vec![Constraint::ValueAt { point: Point(vec![0.5]), value: 1.0 }];
        let r = tree_sup(1, &cons, &s).unwrap();
        // depth 1 can separate 0.5 from 0.500001, so the sup reaches 1
        assert!((r.value.upper() - 1.0).abs() < TOL);
        let Some(Witness::Model(m)) = &r.witness else { panic!() };
        assert!((m.evaluate(&Point(vec![0.5])).unwrap() - 1.0).abs() < TOL);
        assert_eq!(m.evaluate(&s.points[0]).unwrap(), -1.0);
    }

    #[test]
    fn mean_constraint_is_hit_exactly_by_the_witness() {
        let dist = uniform_square();
        let mut rng = trial_rng(51, 0);
        for _ in 0..15 {
            let n = rng.gen_range(2..6);
            let pts: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let labels: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let s = sample(pts, labels);
            let mu = rng.gen_range(-0.5..0.5);
            let cons = vec![Constraint::MeanEquals { value: mu, dist: dist.clone() }];
            let r = tree_sup(2, &cons, &s).unwrap();
            let Some(Witness::Model(m)) = &r.witness else { panic!() };
            assert!(
                (m.expectation(&dist).unwrap() - mu).abs() < 1e-7,
                "witness mean {} target {}",
                m.expectation(&dist).unwrap(),
                mu
            );
            let attained = s.correlation(m).unwrap();
            assert!(
                (attained - r.value.upper()).abs() < 1e-6,
                "claimed {} attained {}",
                r.value.upper(),
                attained
            );
        }
    }

    #[test]
    fn solver_matches_candidate_threshold_enumeration() {
        // pins and signs only: the sup depends only on the induced partition,
        // so enumeration over candidate thresholds is exact
        let mut rng = trial_rng(53, 0);
        for _ in 0..10 {
            let n = rng.gen_range(2..6);
            let pts: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
            let labels: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let s = sample(pts, labels.clone());
            let pin = Point(vec![rng.gen(), rng.gen()]);
            let y = rng.gen_range(-1.0..1.0);
            let cons = vec![Constraint::ValueAt { point: pin.clone(), value: y }];
            let solver = tree_sup(2, &cons, &s).unwrap().value.upper();

            // enumeration: candidate thresholds = midpoints between critical
            // coordinates per feature
            let mut cands: Vec<Vec<f64>> = Vec::new();
            for j in 0..2 {
                let mut coords: Vec<f64> =
                    s.points.iter().map(|p| p.coords()[j]).collect();
                coords.push(pin.coords()[j]);
                coords.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut mids = vec![coords[0] - 0.5, coords[coords.len() - 1] + 0.5];
                for w in coords.windows(2) {
                    mids.push(0.5 * (w[0] + w[1]));
                }
                cands.push(mids);
            }
            let mut brute = f64::NEG_INFINITY;
            let splits: Vec<(usize, f64)> = (0..2)
                .flat_map(|j| cands[j].iter().map(move |&t| (j, t)))
                .collect();
            let eval = |tree: &AxisTree| -> f64 {
                // best leaf values given routing: pin forces its leaf
                let mut by_leaf: std::collections::HashMap<String, (f64, bool)> =
                    std::collections::HashMap::new();
                for (p, &sig) in s.points.iter().zip(&labels) {
                    let key = format!("{:?}", tree.leaf_region(p, &AxisBox::cube(-10.0, 10.0, 2)));
                    by_leaf.entry(key).or_insert((0.0, false)).0 += sig as f64 / n as f64;
                }
                let pin_key =
                    format!("{:?}", tree.leaf_region(&pin, &AxisBox::cube(-10.0, 10.0, 2)));
                by_leaf.entry(pin_key.clone()).or_insert((0.0, false)).1 = true;
                by_leaf
                    .iter()
                    .map(|(key, (c, pinned))| {
                        if *pinned && *key == pin_key {
                            c * y
                        } else {
                            c.abs()
                        }
                    })
                    .sum()
            };
            for &(j0, t0) in &splits {
                for left in std::iter::once(None).chain(splits.iter().map(Some)) {
                    for right in std::iter::once(None).chain(splits.iter().map(Some)) {
                        let mk = |o: Option<&(usize, f64)>| -> TreeNode {
                            match o {
                                None => TreeNode::Leaf(0.0),
                                Some(&(j, t)) => TreeNode::Split {
                                    feature: j,
                                    threshold: t,
                                    left: Box::new(TreeNode::Leaf(0.0)),
                                    right: Box::new(TreeNode::Leaf(1.0)),
                                },
                            }
                        };
                        let tree = AxisTree {
                            root: TreeNode::Split {
                                feature: j0,
                                threshold: t0,
                                left: Box::new(mk(left)),
                                right: Box::new(mk(right)),
                            },
                            depth_bound: Some(2),
                        };
                        brute = brute.max(eval(&tree));
                    }
                }
            }
            assert!(
                (solver - brute).abs() < 1e-9,
                "solver {solver} enumeration {brute}"
            );
        }
    }

    #[test]
    fn anchor_precision_is_hit_by_the_witness() {
        let dist = uniform_square();
        let rule = AxisBox::new(vec![
            Interval::closed(0.0, 0.6),
            Interval::closed(0.0, 1.0),
        ]);
        let s = sample(vec![vec![0.2, 0.3], vec![0.8, 0.7]], vec![1, -1]);
        let cons = vec![Constraint::AnchorHolds {
            rule: rule.clone(),
            precision: 0.75,
            equality: true,
            sign: 1,
            dist: dist.clone(),
        }];
        let r = tree_sup(2, &cons, &s).unwrap();
        let Some(Witness::Model(m)) = &r.witness else { panic!() };
        let mut cov = 0.0;
        let mut good = 0.0;
        for (region, v) in m.regions(dist.support()).unwrap() {
            if let Some(inter) = region.intersect(&rule) {
                let mass = dist.box_mass(&inter).unwrap();
                cov += mass;
                if sign_of(v) == 1 {
                    good += mass;
                }
            }
        }
        assert!((good / cov - 0.75).abs() < 1e-7, "precision {}", good / cov);
        assert!(r.value.upper() <= 1.0 + TOL);
    }

    #[test]
    fn depth_above_two_is_a_budget_error() {
        let s = sample(vec![vec![0.5]], vec![1]);
        assert_eq!(tree_sup(3, &[], &s).unwrap_err().kind(), "budget");
    }

    #[test]
    fn infeasible_conflicting_pins() {
        // two contradictory values at the same point defeat every structure
        let s = sample(vec![vec![0.5, 0.5]], vec![1]);
        let cons = vec![
            Constraint::ValueAt { point: Point(vec![0.2, 0.2]), value: 1.0 },
            Constraint::ValueAt { point: Point(vec![0.2, 0.2]), value: -1.0 },
        ];
        assert_eq!(tree_sup(2, &cons, &s).unwrap_err().kind(), "infeasible");
    }
}
