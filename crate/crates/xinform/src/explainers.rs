//! The four explanation families, computed exactly, plus the brute-force
//! oracles used to cross-check them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Distribution, FeatureSubset, Interval, Point};
use crate::models::FunctionModel;

pub const SHAP_MAX_DIM: usize = 12;
pub const PERMUTATION_MAX_DIM: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfKind {
    Weak,
    Strong,
}

/// A local explanation of a model at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Explanation {
    /// Exact gradient; `None` when the gradient is undefined at the point
    /// (cell or leaf boundary of a piecewise-constant model).
    Gradient { vector: Option<Vec<f64>> },
    /// Index (0-based) and magnitude of the largest gradient component.
    TopComponent { index: usize, magnitude: f64 },
    /// Interventional Shapley attributions, one per feature.
    Shap { phi: Vec<f64> },
    /// Anchor rule containing the explained point, with its exact precision.
    Anchor { rule: AxisBox, precision: f64 },
    /// Opposite-label point; `radius` present for strong counterfactuals
    /// (distance to the point, certifying label constancy on the open ball).
    Counterfactual {
        point: Point,
        kind: CfKind,
        #[serde(skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    /// Gradient together with a stability certificate: explanations within
    /// the `r`-ball vary at Lipschitz rate at most `delta`.
    LocallyStableGradient { vector: Vec<f64>, r: f64, delta: f64 },
}

/// Exact gradient of the model at `x0`, or `vector: None` when `x0` lies on a
/// cell/leaf boundary of a piecewise-constant model.
pub fn gradient_explain(model: &FunctionModel, x0: &Point) -> Result<Explanation> {
    if x0.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x0.dim() });
    }
    let vector = gradient_vector(model, x0)?;
    Ok(Explanation::Gradient { vector })
}

fn gradient_vector(model: &FunctionModel, x0: &Point) -> Result<Option<Vec<f64>>> {
    match model {
        FunctionModel::Linear(l) => Ok(Some(l.w.clone())),
        FunctionModel::Poly(p) => Ok(Some(p.gradient(x0))),
        FunctionModel::Grid(g) => {
            // gradient undefined exactly on the interior cuts
            g.grid.cell_index(x0)?; // domain check
            let on_cut = g
                .grid
                .cuts()
                .iter()
                .zip(x0.coords())
                .any(|(cuts, &x)| cuts.iter().any(|&t| t == x));
            Ok(if on_cut { None } else { Some(vec![0.0; model.dim()]) })
        }
        FunctionModel::Tree { tree, dim } => {
            let domain = AxisBox::new(vec![Interval::unbounded(); *dim]);
            let region = tree.leaf_region(x0, &domain);
            let on_boundary = region.dims.iter().zip(x0.coords()).any(|(iv, &x)| {
                (iv.lo().is_finite() && x == iv.lo()) || (iv.hi().is_finite() && x == iv.hi())
            });
            Ok(if on_boundary { None } else { Some(vec![0.0; *dim]) })
        }
        FunctionModel::Gam(g) => {
            let domain = AxisBox::new(vec![Interval::unbounded()]);
            for (comp, &x) in g.components.iter().zip(x0.coords()) {
                let region = comp.leaf_region(&Point(vec![x]), &domain);
                let iv = &region.dims[0];
                if (iv.lo().is_finite() && x == iv.lo()) || (iv.hi().is_finite() && x == iv.hi()) {
                    return Ok(None);
                }
            }
            Ok(Some(vec![0.0; model.dim()]))
        }
        FunctionModel::Patched(pm) => {
            for (patch, _) in &pm.patches {
                let in_closure = patch
                    .dims
                    .iter()
                    .zip(x0.coords())
                    .all(|(iv, &x)| x >= iv.lo() && x <= iv.hi());
                if in_closure {
                    let on_edge = patch
                        .dims
                        .iter()
                        .zip(x0.coords())
                        .any(|(iv, &x)| x == iv.lo() || x == iv.hi());
                    return Ok(if on_edge { None } else { Some(vec![0.0; model.dim()]) });
                }
            }
            gradient_vector(&pm.base, x0)
        }
    }
}

/// `(argmax_j |∂_j f(x0)|, max_j |∂_j f(x0)|)`, ties broken by smallest index.
pub fn top_gradient_component(model: &FunctionModel, x0: &Point) -> Result<Explanation> {
    let Explanation::Gradient { vector } = gradient_explain(model, x0)? else { unreachable!() };
    let g = vector.ok_or_else(|| {
        Error::Degenerate("gradient undefined at the explained point".into())
    })?;
    let (index, magnitude) = g
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold((0, 0.0_f64), |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(Explanation::TopComponent { index, magnitude })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All interventional value-function evaluations `v(S, x0)` indexed by the
/// bitmask of `S`.
pub fn value_function_table(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
) -> Result<Vec<f64>> {
    let d = model.dim();
    (0..1usize << d)
        .map(|mask| model.marginal_value(dist, x0, &FeatureSubset::from_mask(mask, d)))
        .collect()
}

/// Exact interventional Shapley attributions via subset enumeration.
pub fn shap_explain(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
) -> Result<Explanation> {
    let d = model.dim();
    if d > SHAP_MAX_DIM {
        return Err(Error::DimensionTooLarge { d, max: SHAP_MAX_DIM, what: "exact subset enumeration" });
    }
    let v = value_function_table(model, dist, x0)?;
    let mut phi = vec![0.0; d];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << d {
            if mask >> j & 1 == 1 {
                continue;
            }
            let s = (mask as u32).count_ones() as usize;
            let weight = factorial(s) * factorial(d - s - 1) / factorial(d);
            *phi_j += weight * (v[mask | 1 << j] - v[mask]);
        }
    }
    Ok(Explanation::Shap { phi })
}

/// Independent Shapley oracle: the average marginal contribution over all
/// `d!` feature orderings.
pub fn shap_permutation_oracle(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
) -> Result<Explanation> {
    let d = model.dim();
    if d > PERMUTATION_MAX_DIM {
        return Err(Error::DimensionTooLarge { d, max: PERMUTATION_MAX_DIM, what: "permutation enumeration" });
    }
    let v = value_function_table(model, dist, x0)?;
    let mut phi = vec![0.0; d];
    let mut perm: Vec<usize> = (0..d).collect();
    let mut count = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let mut mask = 0usize;
        for &j in p {
            phi[j] += v[mask | 1 << j] - v[mask];
            mask |= 1 << j;
        }
        count += 1;
    });
    for phi_j in &mut phi {
        *phi_j /= count as f64;
    }
    Ok(Explanation::Shap { phi })
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Exact coverage and precision of an anchor rule: coverage is the rule's
/// probability mass, precision the mass fraction inside the rule sharing the
/// explained point's label.
pub fn anchor_metrics(
    model: &FunctionModel,
    dist: &Distribution,
    rule: &AxisBox,
    x0: &Point,
) -> Result<(f64, f64)> {
    if !rule.contains(x0)? {
        return Err(Error::InvalidInput("rule does not contain the explained point".into()));
    }
    let coverage = dist.box_mass(rule)?;
    if coverage <= 0.0 {
        return Err(Error::ZeroMass("anchor rule".into()));
    }
    let target = model.label(x0)?;
    let support = dist.support().clone();
    let mut matched = 0.0;
    for (region, value) in model.regions(&support)? {
        if crate::models::sign_of(value) != target {
            continue;
        }
        if let Some(inter) = region.intersect(rule) {
            matched += dist.box_mass(&inter)?;
        }
    }
    Ok((coverage, (matched / coverage).min(1.0)))
}

/// Greedy anchor search: start from the region of `x0` and repeatedly extend
/// one side of one axis to the next region boundary, taking the largest
/// coverage gain that keeps precision at or above the floor.
pub fn grow_anchor(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
    min_precision: f64,
) -> Result<Explanation> {
    if !(0.0 < min_precision && min_precision <= 1.0) {
        return Err(Error::InvalidInput("min_precision must be in (0, 1]".into()));
    }
    let support = dist.support().clone();
    let regions = model.regions(&support)?;
    let d = model.dim();

    // per-axis sorted distinct boundaries across all regions
    let mut edges: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (region, _) in &regions {
        for j in 0..d {
            edges[j].push(region.dims[j].lo());
            edges[j].push(region.dims[j].hi());
        }
    }
    for e in &mut edges {
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e.dedup();
    }

    // seed rule: the region containing x0
    let mut rule = regions
        .iter()
        .find(|(r, _)| r.contains(x0).unwrap_or(false))
        .map(|(r, _)| r.clone())
        .ok_or_else(|| Error::OutsideDomain("explained point outside the model's support partition".into()))?;
    let (_, p0) = anchor_metrics(model, dist, &rule, x0)?;
    if p0 < min_precision {
        return Err(Error::NotFound(format!(
            "no rule reaches precision {min_precision}; the seed region has precision {p0}"
        )));
    }

    loop {
        let (cov, _) = anchor_metrics(model, dist, &rule, x0)?;
        let mut best: Option<(f64, AxisBox, f64)> = None;
        for j in 0..d {
            let iv = &rule.dims[j];
            // extend downward to the previous edge
            if let Some(&lo) = edges[j].iter().rev().find(|&&e| e < iv.lo()) {
                let mut cand = rule.clone();
                cand.dims[j] = Interval::new(lo, iv.hi(), true, iv.hi_closed()).unwrap();
                consider(model, dist, x0, min_precision, cov, cand, &mut best)?;
            }
            // extend upward to the next edge
            if let Some(&hi) = edges[j].iter().find(|&&e| e > iv.hi()) {
                let mut cand = rule.clone();
                cand.dims[j] = Interval::new(iv.lo(), hi, iv.lo_closed(), true).unwrap();
                consider(model, dist, x0, min_precision, cov, cand, &mut best)?;
            }
        }
        match best {
            Some((_, cand, _)) => rule = cand,
            None => break,
        }
    }

    let (_, precision) = anchor_metrics(model, dist, &rule, x0)?;
    Ok(Explanation::Anchor { rule, precision })
}

fn consider(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
    min_precision: f64,
    current_cov: f64,
    cand: AxisBox,
    best: &mut Option<(f64, AxisBox, f64)>,
) -> Result<()> {
    let (cov, prec) = anchor_metrics(model, dist, &cand, x0)?;
    let gain = cov - current_cov;
    if prec >= min_precision && gain > 1e-15 {
        if best.as_ref().map_or(true, |(g, _, _)| gain > *g) {
            *best = Some((gain, cand, prec));
        }
    }
    Ok(())
}

const WEAK_CF_PROBES: usize = 2000;
const WEAK_CF_BISECTIONS: usize = 50;

/// Best-effort opposite-label point: seeded random probing over the search
/// box, then bisection along the segment toward `x0`. Closeness is not
/// optimal by design.
pub fn weak_counterfactual(
    model: &FunctionModel,
    x0: &Point,
    search_box: &AxisBox,
    seed: u64,
) -> Result<Explanation> {
    if !search_box.is_finite() {
        return Err(Error::InvalidInput("counterfactual search box must be finite".into()));
    }
    let target = -model.label(x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Option<Point> = None;
    for _ in 0..WEAK_CF_PROBES {
        let p = Point(
            search_box
                .dims
                .iter()
                .map(|iv| iv.lo() + rng.gen::<f64>() * iv.length())
                .collect(),
        );
        if model.label(&p)? == target {
            found = Some(p);
            break;
        }
    }
    let mut far = found.ok_or_else(|| {
        Error::NotFound("no opposite-label point found within the probe budget".into())
    })?;
    // bisect the segment [x0, far], keeping the opposite-label endpoint
    let mut near = x0.clone();
    for _ in 0..WEAK_CF_BISECTIONS {
        let mid = Point(
            near.coords()
                .iter()
                .zip(far.coords())
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        );
        if model.label(&mid)? == target {
            far = mid;
        } else {
            near = mid;
        }
    }
    Ok(Explanation::Counterfactual { point: far, kind: CfKind::Weak, radius: None })
}

/// Exact nearest opposite-label point for piecewise-constant models: the
/// minimal Euclidean distance from `x0` to the closed union of opposite-label
/// regions, certifying label constancy on the open ball of that radius.
pub fn strong_counterfactual(model: &FunctionModel, x0: &Point) -> Result<Explanation> {
    if !model.is_piecewise_constant() {
        return Err(Error::Unsupported(
            "strong counterfactuals require a piecewise-constant model".into(),
        ));
    }
    let domain = model_domain(model);
    let target = -model.label(x0)?;
    let mut best: Option<(f64, Point)> = None;
    for (region, value) in model.regions(&domain)? {
        if crate::models::sign_of(value) != target {
            continue;
        }
        let dist = region.distance_to(x0);
        if best.as_ref().map_or(true, |(b, _)| dist < *b) {
            best = Some((dist, region.project(x0)));
        }
    }
    let (radius, point) =
        best.ok_or_else(|| Error::NotFound("no opposite-label region exists".into()))?;
    Ok(Explanation::Counterfactual { point, kind: CfKind::Strong, radius: Some(radius) })
}

/// The natural domain of a piecewise-constant model: the grid bounding box,
/// or all of `R^d` for trees.
pub fn model_domain(model: &FunctionModel) -> AxisBox {
    match model {
        FunctionModel::Grid(g) => g.grid.bounding_box().clone(),
        FunctionModel::Patched(pm) => model_domain(&pm.base),
        _ => AxisBox::new(vec![Interval::unbounded(); model.dim()]),
    }
}

/// Minimal single-feature move that flips the label: minimizes `|r|` over
/// axis-aligned moves `x0 + r·e_j` reaching a closed opposite-label region.
/// Ties prefer the smaller axis index, then the negative direction.
pub fn single_axis_counterfactual(
    model: &FunctionModel,
    x0: &Point,
) -> Result<(Explanation, usize, f64)> {
    if !model.is_piecewise_constant() {
        return Err(Error::Unsupported(
            "single-axis counterfactuals require a piecewise-constant model".into(),
        ));
    }
    let domain = model_domain(model);
    let target = -model.label(x0)?;
    let d = model.dim();
    let mut best: Option<(usize, f64)> = None;
    for (region, value) in model.regions(&domain)? {
        if crate::models::sign_of(value) != target {
            continue;
        }
        for j in 0..d {
            // the axis line through x0 must pass through the region's other
            // coordinates
            let crosses = (0..d).all(|i| {
                i == j || {
                    let iv = &region.dims[i];
                    let x = x0.coords()[i];
                    x >= iv.lo() && x <= iv.hi()
                }
            });
            if !crosses {
                continue;
            }
            let iv = &region.dims[j];
            let x = x0.coords()[j];
            let r = if x < iv.lo() {
                iv.lo() - x
            } else if x > iv.hi() {
                iv.hi() - x
            } else {
                0.0 // cannot happen: x0's own region has the other label
            };
            if r == 0.0 {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bj, br)) => {
                    r.abs() < br.abs() - 1e-15
                        || ((r.abs() - br.abs()).abs() <= 1e-15
                            && (j < *bj || (j == *bj && r < *br)))
                }
            };
            if better {
                best = Some((j, r));
            }
        }
    }
    let (axis, step) =
        best.ok_or_else(|| Error::NotFound("no axis-aligned label flip exists".into()))?;
    let mut coords = x0.coords().to_vec();
    coords[axis] += step;
    let mut point = Point(coords);
    // the exact boundary point may land on the half-open edge owned by the
    // original label's side; nudge into the region interior if so
    if model.label(&point)? != target {
        let eps = 1e-9 * (1.0 + x0.coords()[axis].abs());
        let mut coords = point.0.clone();
        coords[axis] += step.signum() * eps;
        let nudged = Point(coords);
        if model.label(&nudged)? == target {
            point = nudged;
        }
    }
    Ok((Explanation::Counterfactual { point, kind: CfKind::Weak, radius: None }, axis, step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Grid, trial_rng};
    use crate::models::{AxisTree, GridFunction, LinearModel, TreeNode};
    use rand::Rng;

    fn linear(w: Vec<f64>, b: f64) -> FunctionModel {
        let bound = 10.0 + w.iter().map(|x| x * x).sum::<f64>().sqrt();
        FunctionModel::Linear(LinearModel { w, b, bound })
    }

    fn grid_model(k: usize, values: Vec<f64>) -> FunctionModel {
        let grid = Grid::equidistant(AxisBox::cube(0.0, 1.0, 2), k).unwrap();
        FunctionModel::Grid(GridFunction::new(grid, values).unwrap())
    }

    fn threshold_tree_1d(t: f64, lo: f64, hi: f64) -> FunctionModel {
        FunctionModel::Tree {
            tree: AxisTree {
                root: TreeNode::Split {
                    feature: 0,
                    threshold: t,
                    left: Box::new(TreeNode::Leaf(lo)),
                    right: Box::new(TreeNode::Leaf(hi)),
                },
                depth_bound: None,
            },
            dim: 1,
        }
    }

    fn uniform_square() -> Distribution {
        Distribution::uniform(AxisBox::cube(0.0, 1.0, 2)).unwrap()
    }

    #[test]
    fn gradient_of_linear_is_w() {
        let m = linear(vec![2.0, -1.0], 0.5);
        let e = gradient_explain(&m, &Point(vec![0.3, 0.7])).unwrap();
        assert_eq!(e, Explanation::Gradient { vector: Some(vec![2.0, -1.0]) });
    }

    #[test]
    fn gradient_of_grid_zero_or_undefined() {
        let m = grid_model(3, vec![0.0; 9]);
        let inside = gradient_explain(&m, &Point(vec![0.1, 0.9])).unwrap();
        assert_eq!(inside, Explanation::Gradient { vector: Some(vec![0.0, 0.0]) });
        let on_cut = gradient_explain(&m, &Point(vec![1.0 / 3.0, 0.5])).unwrap();
        assert_eq!(on_cut, Explanation::Gradient { vector: None });
    }

    #[test]
    fn gradient_of_tree_boundary() {
        let m = threshold_tree_1d(0.5, -1.0, 1.0);
        assert_eq!(
            gradient_explain(&m, &Point(vec![0.3])).unwrap(),
            Explanation::Gradient { vector: Some(vec![0.0]) }
        );
        assert_eq!(
            gradient_explain(&m, &Point(vec![0.5])).unwrap(),
            Explanation::Gradient { vector: None }
        );
    }

    #[test]
    fn top_component_with_ties() {
        let m = linear(vec![2.0, -3.0], 0.0);
        let e = top_gradient_component(&m, &Point(vec![0.0, 0.0])).unwrap();
        assert_eq!(e, Explanation::TopComponent { index: 1, magnitude: 3.0 });
        let zero = linear(vec![0.0, 0.0], 0.1);
        let e = top_gradient_component(&zero, &Point(vec![0.0, 0.0])).unwrap();
        assert_eq!(e, Explanation::TopComponent { index: 0, magnitude: 0.0 });
        let m = linear(vec![-5.0, 1.0], 0.0);
        let e = top_gradient_component(&m, &Point(vec![0.3, 0.3])).unwrap();
        assert_eq!(e, Explanation::TopComponent { index: 0, magnitude: 5.0 });
    }

    #[test]
    fn shap_constant_model_is_zero() {
        let m = grid_model(2, vec![0.4; 4]);
        let Explanation::Shap { phi } =
            shap_explain(&m, &uniform_square(), &Point(vec![0.3, 0.3])).unwrap()
        else {
            panic!()
        };
        assert!(phi.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn shap_1d_is_value_minus_mean() {
        let m = threshold_tree_1d(0.5, -0.8, 0.6);
        let dist = Distribution::uniform(AxisBox::cube(0.0, 1.0, 1)).unwrap();
        let x0 = Point(vec![0.7]);
        let Explanation::Shap { phi } = shap_explain(&m, &dist, &x0).unwrap() else { panic!() };
        let expected = m.evaluate(&x0).unwrap() - m.expectation(&dist).unwrap();
        assert!((phi[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn efficiency_holds_on_random_models() {
        let mut rng = trial_rng(21, 0);
        let dist = uniform_square();
        for _ in 0..50 {
            let values: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = grid_model(3, values);
            let x0 = Point(vec![rng.gen(), rng.gen()]);
            let Explanation::Shap { phi } = shap_explain(&m, &dist, &x0).unwrap() else { panic!() };
            let total: f64 = phi.iter().sum();
            let expected = m.evaluate(&x0).unwrap() - m.expectation(&dist).unwrap();
            assert!((total - expected).abs() <= 1e-9);
        }
    }

    #[test]
    fn shap_matches_permutation_oracle() {
        let mut rng = trial_rng(22, 0);
        let dist = uniform_square();
        for _ in 0..50 {
            let values: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = grid_model(3, values);
            let x0 = Point(vec![rng.gen(), rng.gen()]);
            let Explanation::Shap { phi: a } = shap_explain(&m, &dist, &x0).unwrap() else { panic!() };
            let Explanation::Shap { phi: b } = shap_permutation_oracle(&m, &dist, &x0).unwrap()
            else {
                panic!()
            };
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn shap_symmetry_on_symmetric_model() {
        // value depends only on which half each coordinate falls into,
        // symmetrically
        let m = grid_model(2, vec![-0.5, 0.2, 0.2, 0.9]);
        let dist = uniform_square();
        let x0 = Point(vec![0.3, 0.3]);
        let Explanation::Shap { phi } = shap_explain(&m, &dist, &x0).unwrap() else { panic!() };
        assert!((phi[0] - phi[1]).abs() < 1e-12);
    }

    #[test]
    fn shap_dummy_feature_gets_zero() {
        // constant in dimension 2
        let m = grid_model(2, vec![-0.7, -0.7, 0.4, 0.4]);
        let dist = uniform_square();
        let Explanation::Shap { phi } =
            shap_explain(&m, &dist, &Point(vec![0.8, 0.2])).unwrap()
        else {
            panic!()
        };
        assert!(phi[1].abs() <= 1e-12);
    }

    #[test]
    fn shap_dimension_cap() {
        let m = linear(vec![0.0; 13], 0.0);
        let support = AxisBox::cube(0.0, 1.0, 13);
        let dist = Distribution::uniform(support).unwrap();
        let err = shap_explain(&m, &dist, &Point(vec![0.5; 13])).unwrap_err();
        assert_eq!(err.kind(), "dimension-too-large");
    }

    #[test]
    fn anchor_metrics_threshold_tree() {
        let m = threshold_tree_1d(0.5, -1.0, 1.0);
        let dist = Distribution::uniform(AxisBox::cube(0.0, 1.0, 1)).unwrap();
        let rule = AxisBox::from_bounds(&[(0.25, 0.75)]);
        let (cov, prec) = anchor_metrics(&m, &dist, &rule, &Point(vec![0.6])).unwrap();
        assert!((cov - 0.5).abs() < 1e-12);
        assert!((prec - 0.5).abs() < 1e-12);
    }

    #[test]
    fn anchor_metrics_constant_model() {
        let m = grid_model(2, vec![0.5; 4]);
        let dist = uniform_square();
        let rule = AxisBox::from_bounds(&[(0.1, 0.9), (0.1, 0.9)]);
        let (_, prec) = anchor_metrics(&m, &dist, &rule, &Point(vec![0.5, 0.5])).unwrap();
        assert_eq!(prec, 1.0);
        let (cov, _) =
            anchor_metrics(&m, &dist, dist.support(), &Point(vec![0.5, 0.5])).unwrap();
        assert_eq!(cov, 1.0);
    }

    #[test]
    fn grow_anchor_threshold_tree() {
        let m = threshold_tree_1d(0.5, -1.0, 1.0);
        let dist = Distribution::uniform(AxisBox::cube(0.0, 1.0, 1)).unwrap();
        let Explanation::Anchor { rule, precision } =
            grow_anchor(&m, &dist, &Point(vec![0.7]), 1.0).unwrap()
        else {
            panic!()
        };
        assert_eq!(precision, 1.0);
        let (cov, _) = anchor_metrics(&m, &dist, &rule, &Point(vec![0.7])).unwrap();
        assert!((cov - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grow_anchor_constant_label_reaches_full_support() {
        let m = grid_model(2, vec![0.2, 0.4, 0.6, 0.8]);
        let dist = uniform_square();
        let Explanation::Anchor { rule, precision } =
            grow_anchor(&m, &dist, &Point(vec![0.3, 0.3]), 1.0).unwrap()
        else {
            panic!()
        };
        assert_eq!(precision, 1.0);
        let (cov, _) = anchor_metrics(&m, &dist, &rule, &Point(vec![0.3, 0.3])).unwrap();
        assert!((cov - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grow_anchor_checkerboard() {
        let m = grid_model(2, vec![0.5, -0.5, -0.5, 0.5]);
        let dist = uniform_square();
        let Explanation::Anchor { rule, precision } =
            grow_anchor(&m, &dist, &Point(vec![0.25, 0.25]), 0.9).unwrap()
        else {
            panic!()
        };
        let (_, re) = anchor_metrics(&m, &dist, &rule, &Point(vec![0.25, 0.25])).unwrap();
        assert_eq!(precision, re);
        assert!(precision >= 0.9);
        assert!(rule.contains(&Point(vec![0.25, 0.25])).unwrap());
    }

    #[test]
    fn weak_counterfactual_flips_label() {
        let m = threshold_tree_1d(0.5, -1.0, 1.0);
        let x0 = Point(vec![0.3]);
        let Explanation::Counterfactual { point, .. } =
            weak_counterfactual(&m, &x0, &AxisBox::cube(0.0, 1.0, 1), 3).unwrap()
        else {
            panic!()
        };
        assert_eq!(m.label(&point).unwrap(), 1);
        assert!(point.coords()[0] >= 0.5);
    }

    #[test]
    fn weak_counterfactual_constant_model_not_found() {
        let m = grid_model(2, vec![0.5; 4]);
        let err = weak_counterfactual(&m, &Point(vec![0.3, 0.3]), &AxisBox::cube(0.0, 1.0, 2), 1)
            .unwrap_err();
        assert_eq!(err.kind(), "not-found");
    }

    #[test]
    fn weak_counterfactual_checkerboard() {
        let m = grid_model(2, vec![-0.5, 0.5, 0.5, -0.5]);
        let x0 = Point(vec![0.25, 0.25]);
        assert_eq!(m.label(&x0).unwrap(), -1);
        let Explanation::Counterfactual { point, .. } =
            weak_counterfactual(&m, &x0, &AxisBox::cube(0.0, 1.0, 2), 5).unwrap()
        else {
            panic!()
        };
        assert_eq!(m.label(&point).unwrap(), 1);
    }

    #[test]
    fn strong_counterfactual_1d() {
        let m = threshold_tree_1d(0.5, -1.0, 1.0);
        let Explanation::Counterfactual { point, radius, .. } =
            strong_counterfactual(&m, &Point(vec![0.3])).unwrap()
        else {
            panic!()
        };
        assert!((radius.unwrap() - 0.2).abs() < 1e-12);
        assert!((point.coords()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strong_counterfactual_corner_distance() {
        let grid = Grid::new(
            AxisBox::cube(0.0, 1.0, 2),
            vec![vec![0.5], vec![0.5]],
        )
        .unwrap();
        // only the upper-right cell is positive
        let m = FunctionModel::Grid(
            GridFunction::new(grid, vec![-1.0, -1.0, -1.0, 1.0]).unwrap(),
        );
        let Explanation::Counterfactual { radius, .. } =
            strong_counterfactual(&m, &Point(vec![0.25, 0.25])).unwrap()
        else {
            panic!()
        };
        let expected = (2.0_f64 * 0.25 * 0.25).sqrt();
        assert!((radius.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn strong_counterfactual_constant_model_errors() {
        let m = grid_model(2, vec![0.5; 4]);
        assert!(strong_counterfactual(&m, &Point(vec![0.3, 0.3])).is_err());
    }

    #[test]
    fn strong_counterfactual_vs_dense_scan() {
        let mut rng = trial_rng(31, 0);
        for _ in 0..20 {
            let values: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = grid_model(3, values);
            let x0 = Point(vec![rng.gen(), rng.gen()]);
            let Ok(Explanation::Counterfactual { radius, .. }) = strong_counterfactual(&m, &x0)
            else {
                continue; // constant-sign draw
            };
            let radius = radius.unwrap();
            let target = -m.label(&x0).unwrap();
            let h = 1e-3;
            let mut scan_best = f64::INFINITY;
            let steps = (1.0 / h) as usize;
            for i in 0..=steps {
                for j in 0..=steps {
                    let p = Point(vec![i as f64 * h, j as f64 * h]);
                    if m.label(&p).unwrap() == target {
                        scan_best = scan_best.min(p.distance(&x0));
                    }
                }
            }
            assert!(
                (radius - scan_best).abs() <= 1e-3 * 2f64.sqrt(),
                "radius {radius} vs scan {scan_best}"
            );
            // the scan finds nothing strictly closer than the certificate
            assert!(scan_best >= radius - h * 2f64.sqrt());
        }
    }

    #[test]
    fn single_axis_counterfactual_1d() {
        let m = threshold_tree_1d(0.5, -1.0, 1.0);
        let (_, axis, step) = single_axis_counterfactual(&m, &Point(vec![0.3])).unwrap();
        assert_eq!(axis, 0);
        assert!((step - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_axis_counterfactual_picks_shorter_axis() {
        // flipping along axis 1 needs 0.4, along axis 2 needs 0.1
        let grid = Grid::new(
            AxisBox::cube(0.0, 1.0, 2),
            vec![vec![0.7], vec![0.4]],
        )
        .unwrap();
        // x0 = (0.3, 0.3) in cell (0,0); positive cells: (1,0) and (0,1)
        let m = FunctionModel::Grid(
            GridFunction::new(grid, vec![-1.0, 1.0, 1.0, -1.0]).unwrap(),
        );
        let (expl, axis, step) =
            single_axis_counterfactual(&m, &Point(vec![0.3, 0.3])).unwrap();
        assert_eq!(axis, 1);
        assert!((step - 0.1).abs() < 1e-12);
        let Explanation::Counterfactual { point, .. } = expl else { panic!() };
        assert_eq!(m.label(&point).unwrap(), 1);
    }

    #[test]
    fn single_axis_counterfactual_diagonal_only_errors() {
        // opposite region only diagonal from x0: no axis line crosses it
        let grid = Grid::new(
            AxisBox::cube(0.0, 1.0, 2),
            vec![vec![0.5], vec![0.5]],
        )
        .unwrap();
        let m = FunctionModel::Grid(
            GridFunction::new(grid, vec![-1.0, -1.0, -1.0, 1.0]).unwrap(),
        );
        let err = single_axis_counterfactual(&m, &Point(vec![0.25, 0.25])).unwrap_err();
        assert_eq!(err.kind(), "not-found");
    }
}
