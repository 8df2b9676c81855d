//! Scenario registry: each studied setting maps to a runnable configuration
//! (function class, sampling distribution, explained point, builtin model,
//! explanation-derived constraints, optional conditioning event) together with
//! its recorded expected verdict.
//!
//! Explain constraints are always derived from an actual explainer output on
//! the scenario's model — never hand-written — so every scenario exercises the
//! full round trip from explanation to informativeness verdict.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::explainers::{
    gradient_explain, grow_anchor, shap_explain, strong_counterfactual,
    top_gradient_component, weak_counterfactual, Explanation,
};
use crate::geometry::{AxisBox, Distribution, Grid, Point};
use crate::models::{AxisTree, ClassSpec, FunctionModel, GridFunction, LinearModel, GamModel, PolynomialModel, TreeNode};
use crate::rademacher::{gap_report, Constraint, EventSpec, GapReport, Verdict};

pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_SEED: u64 = 7;

/// Expected verdict registered for a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expected {
    Informative,
    NonInformative,
}

impl Expected {
    pub fn as_str(&self) -> &'static str {
        match self {
            Expected::Informative => "informative",
            Expected::NonInformative => "non-informative",
        }
    }

    /// Whether an observed verdict conforms to this expectation.
    pub fn matches(&self, v: Verdict) -> bool {
        match self {
            Expected::Informative => v == Verdict::Informative,
            Expected::NonInformative => v == Verdict::NonInformativeConsistent,
        }
    }
}

/// One registry row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScenarioEntry {
    pub id: &'static str,
    pub summary: &'static str,
    pub expected: Expected,
    /// Solver reports brackets; such scenarios can only certify
    /// informativeness, never non-informativeness.
    pub bracket: bool,
    /// Headline report conditions on a scenario-specific event.
    pub conditional: bool,
    pub default_n: usize,
}

pub const REGISTRY: [ScenarioEntry; 22] = [
    ScenarioEntry {
        id: "grad-linear",
        summary: "gradient explanations on bounded linear functions",
        expected: Expected::Informative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-noisy-linear",
        summary: "gradient explanations on noisy bounded linear functions",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-differentiable",
        summary: "gradient explanations on all bounded differentiable functions",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-poly-unbounded",
        summary: "gradient explanations on polynomials of unbounded degree",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-smooth",
        summary: "gradient explanations under bounded, Lipschitz gradients (bracket)",
        expected: Expected::Informative,
        bracket: true,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-poly-bounded",
        summary: "gradient explanations on degree-bounded polynomials",
        expected: Expected::Informative,
        bracket: false,
        conditional: false,
        default_n: 6,
    },
    ScenarioEntry {
        id: "grad-locally-stable",
        summary: "locally stable gradient explanations (bracket)",
        expected: Expected::Informative,
        bracket: true,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-piecewise-linear",
        summary: "gradient explanations on piecewise-linear functions over a known grid",
        expected: Expected::Informative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-top-component",
        summary: "largest-gradient-component explanations on linear functions",
        expected: Expected::Informative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "grad-tree-nontrivial",
        summary: "zero-gradient explanations on unbounded trees: non-trivial yet not informative",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "shap-grid",
        summary: "attribution explanations on a known grid, one sample per other cell",
        expected: Expected::Informative,
        bracket: false,
        conditional: true,
        default_n: 8,
    },
    ScenarioEntry {
        id: "shap-manifold",
        summary: "ambient attributions with samples on a one-dimensional manifold",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 6,
    },
    ScenarioEntry {
        id: "shap-tree-unbounded",
        summary: "attribution explanations on unbounded-depth trees",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "shap-gam-unbounded",
        summary: "attribution explanations on additive models with deep tree components",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "shap-tree-bounded",
        summary: "attribution explanations on depth-bounded trees (bracket)",
        expected: Expected::Informative,
        bracket: true,
        conditional: false,
        default_n: 8,
    },
    ScenarioEntry {
        id: "anchor-unbounded",
        summary: "non-perfect anchor rules on unbounded trees",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "anchor-bounded",
        summary: "non-perfect anchor rules on depth-bounded trees",
        expected: Expected::Informative,
        bracket: false,
        conditional: false,
        default_n: 6,
    },
    ScenarioEntry {
        id: "anchor-perfect",
        summary: "perfect anchor rules on unbounded trees",
        expected: Expected::Informative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "cf-weak-large",
        summary: "weak counterfactuals on unbounded trees",
        expected: Expected::NonInformative,
        bracket: false,
        conditional: false,
        default_n: 4,
    },
    ScenarioEntry {
        id: "cf-weak-tree-bounded",
        summary: "weak counterfactuals on depth-bounded trees",
        expected: Expected::Informative,
        bracket: false,
        conditional: false,
        default_n: 8,
    },
    ScenarioEntry {
        id: "cf-weak-lipschitz",
        summary: "weak counterfactuals with a known value on Lipschitz functions",
        expected: Expected::Informative,
        bracket: false,
        conditional: true,
        default_n: 4,
    },
    ScenarioEntry {
        id: "cf-strong",
        summary: "strong counterfactuals with samples inside the certified ball",
        expected: Expected::Informative,
        bracket: false,
        conditional: true,
        default_n: 4,
    },
];

pub fn list_scenarios() -> &'static [ScenarioEntry] {
    &REGISTRY
}

pub fn find_scenario(id: &str) -> Result<&'static ScenarioEntry> {
    REGISTRY
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::NotFound(format!("unknown scenario id {id:?}")))
}

/// A scenario request: an id plus numeric overrides and an optional model /
/// explained-point replacement.
#[derive(Debug, Clone, Default)]
pub struct ScenarioConfig {
    pub id: String,
    pub overrides: BTreeMap<String, f64>,
    pub model: Option<FunctionModel>,
    pub x0: Option<Point>,
}

impl ScenarioConfig {
    pub fn new(id: &str) -> Self {
        ScenarioConfig { id: id.to_string(), ..Default::default() }
    }

    pub fn set(mut self, key: &str, value: f64) -> Self {
        self.overrides.insert(key.to_string(), value);
        self
    }
}

/// Numeric parameters with registry defaults, after applying overrides.
#[derive(Debug, Clone)]
struct Params {
    d: usize,
    k: usize,
    depth: usize,
    n: usize,
    trials: usize,
    seed: u64,
    m: f64,
    epsilon: f64,
    alpha: f64,
    beta: f64,
    l: f64,
    r: f64,
    delta: f64,
    precision: f64,
}

const OVERRIDE_KEYS: [&str; 14] =
    ["d", "k", "K", "n", "trials", "seed", "M", "epsilon", "alpha", "beta", "L", "r", "delta", "precision"];

fn apply_overrides(p: &mut Params, overrides: &BTreeMap<String, f64>) -> Result<()> {
    let as_count = |v: f64, key: &str| -> Result<usize> {
        if v < 0.0 || v.fract() != 0.0 || v > 1e9 {
            return Err(Error::InvalidInput(format!("override {key}={v} is not a valid count")));
        }
        Ok(v as usize)
    };
    for (key, &v) in overrides {
        match key.as_str() {
            "d" => p.d = as_count(v, key)?,
            "k" => p.k = as_count(v, key)?,
            "K" => p.depth = as_count(v, key)?,
            "n" => p.n = as_count(v, key)?,
            "trials" => p.trials = as_count(v, key)?,
            "seed" => p.seed = as_count(v, key)? as u64,
            "M" => p.m = v,
            "epsilon" => p.epsilon = v,
            "alpha" => p.alpha = v,
            "beta" => p.beta = v,
            "L" => p.l = v,
            "r" => p.r = v,
            "delta" => p.delta = v,
            "precision" => p.precision = v,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown override key {other:?}; known keys: {}",
                    OVERRIDE_KEYS.join(", ")
                )))
            }
        }
    }
    Ok(())
}

/// A fully resolved scenario, ready to run (and to re-run per trial by hand,
/// e.g. for witness auditing).
#[derive(Debug, Clone)]
pub struct Setup {
    pub entry: &'static ScenarioEntry,
    pub class: ClassSpec,
    pub model: FunctionModel,
    /// Distribution the Rademacher points are drawn from.
    pub dist: Distribution,
    pub x0: Point,
    pub explanation: Explanation,
    pub predict: Vec<Constraint>,
    pub explain: Vec<Constraint>,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub event: Option<EventSpec>,
}

/// Outcome of a scenario run: the headline report (conditional when the
/// scenario registers a conditioning event) plus the unconditional companion.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub id: String,
    pub summary: &'static str,
    pub expected: Expected,
    pub headline: GapReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unconditional: Option<GapReport>,
    pub conforms: bool,
}

// ---------------------------------------------------------------------------
// builtin models
// ---------------------------------------------------------------------------

fn unit_square(d: usize) -> AxisBox {
    AxisBox::cube(0.0, 1.0, d)
}

fn centered_square(d: usize) -> AxisBox {
    AxisBox::cube(-0.5, 0.5, d)
}

/// `w = (1, …, 1)/√d`, `b = 0`.
fn diagonal_linear(d: usize, bound: f64) -> FunctionModel {
    let w = vec![1.0 / (d as f64).sqrt(); d];
    FunctionModel::Linear(LinearModel { w, b: 0.0, bound })
}

fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> TreeNode {
    TreeNode::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
}

/// Depth-2 checkerboard over the unit square: quadrant signs +, −, −, +.
fn checker_tree() -> FunctionModel {
    let left = split(1, 0.5, TreeNode::Leaf(1.0), TreeNode::Leaf(-1.0));
    let right = split(1, 0.5, TreeNode::Leaf(-1.0), TreeNode::Leaf(1.0));
    FunctionModel::Tree {
        tree: AxisTree { root: split(0, 0.5, left, right), depth_bound: Some(2) },
        dim: 2,
    }
}

/// Three vertical stripes −, +, − with a narrow middle stripe, so that a
/// greedy anchor grows past its seed region and settles at precision < 1.
fn stripe_tree() -> FunctionModel {
    let right = split(0, 0.55, TreeNode::Leaf(1.0), TreeNode::Leaf(-1.0));
    FunctionModel::Tree {
        tree: AxisTree { root: split(0, 0.5, TreeNode::Leaf(-1.0), right), depth_bound: Some(2) },
        dim: 2,
    }
}

/// Four alternating vertical stripes +, −, +, − (a depth-3 chain).
fn stripes4_tree(dim: usize) -> FunctionModel {
    let inner2 = split(0, 0.75, TreeNode::Leaf(1.0), TreeNode::Leaf(-1.0));
    let inner1 = split(0, 0.5, TreeNode::Leaf(-1.0), inner2);
    FunctionModel::Tree {
        tree: AxisTree { root: split(0, 0.25, TreeNode::Leaf(1.0), inner1), depth_bound: Some(3) },
        dim,
    }
}

/// Additive model whose first component is the alternating four-stripe chain
/// and whose remaining components are zero.
fn deep_gam(d: usize) -> FunctionModel {
    let FunctionModel::Tree { tree, .. } = stripes4_tree(1) else { unreachable!() };
    let mut components = vec![tree];
    components.extend((1..d).map(|_| AxisTree::leaf(0.0)));
    FunctionModel::Gam(GamModel { components })
}

/// Checkerboard grid function: cell `(i, j, …)` takes value `+1` when the
/// index sum is even, `−1` otherwise.
fn checkerboard_grid(k: usize, d: usize) -> Result<FunctionModel> {
    let grid = Grid::equidistant(unit_square(d), k)?;
    let values = grid
        .cell_indices()
        .iter()
        .map(|idx| if idx.iter().sum::<usize>() % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    Ok(FunctionModel::Grid(GridFunction::new(grid, values)?))
}

/// `f(x) = x^(1)·x^(2)` as an explicit polynomial.
fn product_poly(bound: f64) -> FunctionModel {
    FunctionModel::Poly(PolynomialModel {
        degree: 2,
        terms: vec![(vec![1, 1], 1.0)],
        bound,
    })
}

// ---------------------------------------------------------------------------
// constraint derivation helpers
// ---------------------------------------------------------------------------

fn value_pin(model: &FunctionModel, x0: &Point) -> Result<(Constraint, f64)> {
    let y0 = model.evaluate(x0)?;
    Ok((Constraint::ValueAt { point: x0.clone(), value: y0 }, y0))
}

fn gradient_constraint(model: &FunctionModel, x0: &Point) -> Result<(Constraint, Explanation)> {
    let expl = gradient_explain(model, x0)?;
    let Explanation::Gradient { vector: Some(ref v) } = expl else {
        return Err(Error::Degenerate(
            "gradient undefined at the explained point; move it off region boundaries".into(),
        ));
    };
    Ok((Constraint::GradientAt { point: x0.clone(), vector: v.clone() }, expl))
}

fn shap_constraint(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
) -> Result<(Constraint, Explanation)> {
    let expl = shap_explain(model, dist, x0)?;
    let Explanation::Shap { ref phi } = expl else { unreachable!() };
    Ok((
        Constraint::ShapEquals { point: x0.clone(), phi: phi.clone(), dist: dist.clone() },
        expl,
    ))
}

fn anchor_constraint(
    model: &FunctionModel,
    dist: &Distribution,
    x0: &Point,
    min_precision: f64,
) -> Result<(Constraint, Explanation)> {
    let expl = grow_anchor(model, dist, x0, min_precision)?;
    let Explanation::Anchor { ref rule, precision } = expl else { unreachable!() };
    Ok((
        Constraint::AnchorHolds {
            rule: rule.clone(),
            precision,
            equality: true,
            sign: model.label(x0)?,
            dist: dist.clone(),
        },
        expl,
    ))
}

// ---------------------------------------------------------------------------
// setup
// ---------------------------------------------------------------------------

/// Resolve a scenario configuration into a runnable setup.
pub fn setup_scenario(cfg: &ScenarioConfig) -> Result<Setup> {
    let entry = find_scenario(&cfg.id)?;
    let mut p = Params {
        d: 2,
        k: 3,
        depth: 2,
        n: entry.default_n,
        trials: DEFAULT_TRIALS,
        seed: DEFAULT_SEED,
        m: 10.0,
        epsilon: 0.1,
        alpha: 1.0,
        beta: 0.5,
        l: 1.0,
        r: 0.2,
        delta: 0.05,
        precision: 0.9,
    };
    apply_overrides(&mut p, &cfg.overrides)?;
    if p.n == 0 || p.trials == 0 {
        return Err(Error::InvalidInput("n and trials must be at least 1".into()));
    }

    let d = p.d;
    let build = |class: ClassSpec,
                 model: FunctionModel,
                 dist: Distribution,
                 x0: Point,
                 explanation: Explanation,
                 predict: Vec<Constraint>,
                 explain: Vec<Constraint>,
                 event: Option<EventSpec>|
     -> Setup {
        Setup {
            entry,
            class,
            model,
            dist,
            x0,
            explanation,
            predict,
            explain,
            n: p.n,
            trials: p.trials,
            seed: p.seed,
            event,
        }
    };

    let default_x0 = |coords: Vec<f64>| -> Point {
        cfg.x0.clone().unwrap_or(Point(coords))
    };

    match entry.id {
        "grad-linear" | "grad-noisy-linear" | "grad-differentiable" | "grad-smooth" => {
            let model = cfg.model.clone().unwrap_or_else(|| diagonal_linear(d, p.m));
            let dist = Distribution::uniform(centered_square(d))?;
            let x0 = default_x0(first_coords(&[0.3, 0.15, 0.1, -0.2], d));
            let (pin, _) = value_pin(&model, &x0)?;
            let (grad, explanation) = gradient_constraint(&model, &x0)?;
            let class = match entry.id {
                "grad-linear" => ClassSpec::Linear { bound: p.m },
                "grad-noisy-linear" => ClassSpec::NoisyLinear { bound: p.m, epsilon: p.epsilon },
                "grad-differentiable" => ClassSpec::BoundedDifferentiable,
                _ => ClassSpec::SmoothGrad { alpha: p.alpha, beta: p.beta },
            };
            Ok(build(
                class,
                model,
                dist,
                x0,
                explanation,
                vec![pin.clone()],
                vec![pin, grad],
                None,
            ))
        }
        "grad-poly-unbounded" | "grad-poly-bounded" => {
            let model = cfg.model.clone().unwrap_or_else(|| product_poly(p.m));
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.3, 0.6]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (grad, explanation) = gradient_constraint(&model, &x0)?;
            let class = if entry.id == "grad-poly-unbounded" {
                ClassSpec::PolyUnbounded
            } else {
                ClassSpec::PolyBounded { degree: 2, bound: p.m.min(1.0), dim: 2 }
            };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, grad], None))
        }
        "grad-locally-stable" => {
            let model = cfg.model.clone().unwrap_or_else(|| diagonal_linear(d, p.m));
            let dist = Distribution::uniform(centered_square(d))?;
            let x0 = default_x0(first_coords(&[0.1, 0.05, 0.0, 0.0], d));
            let (pin, _) = value_pin(&model, &x0)?;
            let (_, g) = gradient_constraint(&model, &x0)?;
            let Explanation::Gradient { vector: Some(v) } = g else { unreachable!() };
            // a linear model's gradient is constant, so any (r, delta) with
            // delta > 0 is a valid stability certificate
            let explanation =
                Explanation::LocallyStableGradient { vector: v.clone(), r: p.r, delta: p.delta };
            let stable = Constraint::LocallyStableGradient {
                point: x0.clone(),
                vector: v,
                r: p.r,
                delta: p.delta,
            };
            let class = ClassSpec::SmoothGrad { alpha: p.alpha, beta: p.beta };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, stable], None))
        }
        "grad-piecewise-linear" => {
            // piecewise-linear over a known grid: the gradient constraint only
            // binds the linear piece on the cell of the explained point, so
            // the scenario runs the linear class over that cell
            let model = cfg.model.clone().unwrap_or_else(|| diagonal_linear(d, p.m));
            let grid = Grid::equidistant(centered_square(d), 2)?;
            let x0 = default_x0(first_coords(&[0.25, 0.15, 0.1, 0.1], d));
            let cell = grid.cell_box(&grid.cell_index(&x0)?);
            let dist = Distribution::uniform(cell)?;
            let (pin, _) = value_pin(&model, &x0)?;
            let (grad, explanation) = gradient_constraint(&model, &x0)?;
            let class = ClassSpec::Linear { bound: p.m };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, grad], None))
        }
        "grad-top-component" => {
            let model = cfg.model.clone().unwrap_or_else(|| {
                FunctionModel::Linear(LinearModel { w: vec![0.8, 0.3], b: 0.0, bound: p.m })
            });
            let dist = Distribution::uniform(centered_square(2))?;
            let x0 = default_x0(vec![0.3, 0.15]);
            let (pin, _) = value_pin(&model, &x0)?;
            let explanation = top_gradient_component(&model, &x0)?;
            let Explanation::TopComponent { index, magnitude } = explanation else { unreachable!() };
            let top = Constraint::TopComponentAt { point: x0.clone(), index, magnitude };
            let class = ClassSpec::Linear { bound: p.m };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, top], None))
        }
        "grad-tree-nontrivial" => {
            // the explanation "the gradient exists at x0 and is zero" excludes
            // trees split through x0 (non-trivial) yet never changes the sup
            let model = cfg.model.clone().unwrap_or_else(checker_tree);
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.2, 0.3]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (grad, explanation) = gradient_constraint(&model, &x0)?;
            let class = ClassSpec::TreeUnbounded;
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, grad], None))
        }
        "shap-grid" => {
            let model = cfg.model.clone().unwrap_or(checkerboard_grid(p.k, 2)?);
            let grid = Grid::equidistant(unit_square(2), p.k)?;
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.5, 0.5]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (shap, explanation) = shap_constraint(&model, &dist, &x0)?;
            // conditioning event: one point in every grid cell besides the
            // cell of x0 (defined exactly when n matches)
            let x0_cell = grid.flat_index(&grid.cell_index(&x0)?);
            let other_cells: Vec<AxisBox> = grid
                .cell_indices()
                .iter()
                .filter(|idx| grid.flat_index(idx) != x0_cell)
                .map(|idx| grid.cell_box(idx))
                .collect();
            let event = (p.n == other_cells.len())
                .then(|| EventSpec::direct_product(other_cells, None));
            let class = ClassSpec::Grid { grid };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, shap], event))
        }
        "shap-manifold" => {
            // attributions use the ambient square marginals while the
            // Rademacher points live on the diagonal manifold
            let model = cfg.model.clone().unwrap_or(checkerboard_grid(p.k, 2)?);
            let grid = Grid::equidistant(unit_square(2), p.k)?;
            let ambient = Distribution::uniform(unit_square(2))?;
            let manifold = Distribution::diagonal(unit_square(2))?;
            let x0 = default_x0(vec![0.5, 0.5]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (shap, explanation) = shap_constraint(&model, &ambient, &x0)?;
            let class = ClassSpec::Grid { grid };
            Ok(build(class, model, manifold, x0, explanation, vec![pin.clone()], vec![pin, shap], None))
        }
        "shap-tree-unbounded" | "shap-tree-bounded" => {
            let model = cfg.model.clone().unwrap_or_else(|| {
                if entry.id == "shap-tree-unbounded" {
                    stripes4_tree(2)
                } else {
                    checker_tree()
                }
            });
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.3, 0.4]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (shap, explanation) = shap_constraint(&model, &dist, &x0)?;
            let class = if entry.id == "shap-tree-unbounded" {
                ClassSpec::TreeUnbounded
            } else {
                ClassSpec::TreeBounded { depth: p.depth }
            };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, shap], None))
        }
        "shap-gam-unbounded" => {
            let model = cfg.model.clone().unwrap_or_else(|| deep_gam(2));
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.3, 0.6]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (shap, explanation) = shap_constraint(&model, &dist, &x0)?;
            let class = ClassSpec::GamTreesUnbounded;
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, shap], None))
        }
        "anchor-unbounded" | "anchor-bounded" => {
            let model = cfg.model.clone().unwrap_or_else(stripe_tree);
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.3, 0.4]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (anchor, explanation) = anchor_constraint(&model, &dist, &x0, p.precision)?;
            let class = if entry.id == "anchor-unbounded" {
                ClassSpec::TreeUnbounded
            } else {
                ClassSpec::TreeBounded { depth: p.depth }
            };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, anchor], None))
        }
        "anchor-perfect" => {
            let model = cfg.model.clone().unwrap_or_else(checker_tree);
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.2, 0.3]);
            let (pin, _) = value_pin(&model, &x0)?;
            let (anchor, explanation) = anchor_constraint(&model, &dist, &x0, 1.0)?;
            let class = ClassSpec::TreeUnbounded;
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, anchor], None))
        }
        "cf-weak-large" | "cf-weak-tree-bounded" => {
            let model = cfg.model.clone().unwrap_or_else(checker_tree);
            let dist = Distribution::uniform(unit_square(2))?;
            let x0 = default_x0(vec![0.2, 0.3]);
            let (pin, y0) = value_pin(&model, &x0)?;
            let explanation = weak_counterfactual(&model, &x0, &unit_square(2), p.seed)?;
            let Explanation::Counterfactual { ref point, .. } = explanation else { unreachable!() };
            let flip = Constraint::SignAt {
                point: point.clone(),
                sign: -crate::models::sign_of(y0),
            };
            let class = if entry.id == "cf-weak-large" {
                ClassSpec::TreeUnbounded
            } else {
                ClassSpec::TreeBounded { depth: p.depth }
            };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, flip], None))
        }
        "cf-weak-lipschitz" => {
            let model = cfg.model.clone().unwrap_or_else(|| diagonal_linear(d, p.m));
            let support = centered_square(d);
            let dist = Distribution::uniform(support.clone())?;
            let x0 = default_x0(first_coords(&[0.3, 0.2, 0.1, 0.1], d));
            let (pin, y0) = value_pin(&model, &x0)?;
            let explanation = weak_counterfactual(&model, &x0, &support, p.seed)?;
            let Explanation::Counterfactual { ref point, .. } = explanation else { unreachable!() };
            let known_value = Constraint::ValueAt {
                point: point.clone(),
                value: model.evaluate(point)?,
            };
            // conditioning event: labels fixed to the sign of f(x0), samples
            // anywhere, so the prediction-consistent sup is at least |f(x0)|
            let s0 = crate::models::sign_of(y0);
            let event = Some(EventSpec::direct_product(
                vec![support; p.n],
                Some(vec![s0; p.n]),
            ));
            let class = ClassSpec::Lipschitz { l: p.l };
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, known_value], event))
        }
        "cf-strong" => {
            let model = cfg.model.clone().unwrap_or_else(checker_tree);
            let support = unit_square(2);
            let dist = Distribution::uniform(support.clone())?;
            let x0 = default_x0(vec![0.2, 0.3]);
            let (pin, y0) = value_pin(&model, &x0)?;
            let explanation = strong_counterfactual(&model, &x0)?;
            let Explanation::Counterfactual { radius: Some(radius), .. } = explanation else {
                unreachable!()
            };
            let s0 = crate::models::sign_of(y0);
            let ball = Constraint::SignOnBall { center: x0.clone(), radius, sign: s0 };
            // conditioning event: all samples inside the certified ball,
            // realized as the inscribed cube, with labels opposite to f(x0)
            let half = 0.999 * radius / (2f64).sqrt();
            let cube = AxisBox::from_bounds(
                &x0.coords()
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| {
                        let lo = (c - half).max(support.dims[j].lo());
                        let hi = (c + half).min(support.dims[j].hi());
                        (lo, hi)
                    })
                    .collect::<Vec<_>>(),
            );
            let event = Some(EventSpec::direct_product(
                vec![cube; p.n],
                Some(vec![-s0; p.n]),
            ));
            let class = ClassSpec::TreeUnbounded;
            Ok(build(class, model, dist, x0, explanation, vec![pin.clone()], vec![pin, ball], event))
        }
        other => Err(Error::NotFound(format!("unknown scenario id {other:?}"))),
    }
}

fn first_coords(template: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|j| template.get(j).copied().unwrap_or(0.0)).collect()
}

/// Run a scenario: the gap report under the registered conditioning event
/// (when one exists) is the headline; the unconditional companion is attached
/// for cross-checking direction.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let setup = setup_scenario(cfg)?;
    let headline = gap_report(
        setup.entry.id,
        &setup.class,
        &setup.predict,
        &setup.explain,
        &setup.dist,
        setup.n,
        setup.trials,
        setup.seed,
        setup.event.as_ref(),
    )?;
    let unconditional = match &setup.event {
        Some(_) => Some(gap_report(
            setup.entry.id,
            &setup.class,
            &setup.predict,
            &setup.explain,
            &setup.dist,
            setup.n,
            setup.trials,
            setup.seed,
            None,
        )?),
        None => None,
    };
    let conforms = setup.entry.expected.matches(headline.verdict);
    Ok(ScenarioOutcome {
        id: setup.entry.id.to_string(),
        summary: setup.entry.summary,
        expected: setup.entry.expected,
        headline,
        unconditional,
        conforms,
    })
}

/// Gap-versus-n series as tab-separated values for external plotting.
pub fn plot_data(cfg: &ScenarioConfig, ns: &[usize]) -> Result<String> {
    let mut out = String::from("n\tgap_mean\tgap_ci_low\tgap_ci_high\tverdict\n");
    for &n in ns {
        let mut c = cfg.clone();
        c.overrides.insert("n".into(), n as f64);
        let outcome = run_scenario(&c)?;
        let r = &outcome.headline;
        out.push_str(&format!(
            "{}\t{:.12}\t{:.12}\t{:.12}\t{}\n",
            n, r.gap_mean, r.gap_ci_low, r.gap_ci_high, r.verdict.as_str()
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_twenty_two_distinct_ids() {
        assert_eq!(REGISTRY.len(), 22);
        let mut ids: Vec<&str> = REGISTRY.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 22);
    }

    #[test]
    fn every_id_resolves_to_a_setup() {
        for entry in REGISTRY.iter() {
            let setup = setup_scenario(&ScenarioConfig::new(entry.id)).unwrap();
            assert_eq!(setup.entry.id, entry.id);
            assert_eq!(setup.n, entry.default_n);
            assert_eq!(setup.event.is_some(), entry.conditional);
            // the explain set extends the predict set
            for c in &setup.predict {
                assert!(setup.explain.contains(c));
            }
            assert!(setup.explain.len() > setup.predict.len());
        }
    }

    #[test]
    fn unknown_id_is_not_found() {
        let err = setup_scenario(&ScenarioConfig::new("no-such-scenario")).unwrap_err();
        assert_eq!(err.kind(), "not-found");
    }

    #[test]
    fn unknown_override_key_is_invalid_input() {
        let cfg = ScenarioConfig::new("grad-linear").set("bogus", 3.0);
        assert_eq!(setup_scenario(&cfg).unwrap_err().kind(), "invalid-input");
    }

    #[test]
    fn overrides_apply() {
        let cfg = ScenarioConfig::new("grad-linear").set("n", 7.0).set("trials", 11.0).set("seed", 9.0);
        let s = setup_scenario(&cfg).unwrap();
        assert_eq!((s.n, s.trials, s.seed), (7, 11, 9));
    }

    #[test]
    fn builtin_models_validate_on_their_support() {
        for entry in REGISTRY.iter() {
            let s = setup_scenario(&ScenarioConfig::new(entry.id)).unwrap();
            let problems = s.model.validate(Some(s.dist.support()));
            assert!(problems.is_empty(), "{}: {:?}", entry.id, problems);
        }
    }

    #[test]
    fn explanations_round_trip_into_constraints() {
        for entry in REGISTRY.iter() {
            let s = setup_scenario(&ScenarioConfig::new(entry.id)).unwrap();
            // the derived constraint must quote the explanation it came from
            match &s.explanation {
                Explanation::Gradient { vector: Some(v) } => {
                    assert!(s.explain.iter().any(|c| matches!(
                        c,
                        Constraint::GradientAt { vector, .. } if vector == v
                    )));
                }
                Explanation::TopComponent { index, magnitude } => {
                    assert!(s.explain.iter().any(|c| matches!(
                        c,
                        Constraint::TopComponentAt { index: i, magnitude: m, .. }
                            if i == index && m == magnitude
                    )));
                }
                Explanation::Shap { phi } => {
                    assert!(s.explain.iter().any(|c| matches!(
                        c,
                        Constraint::ShapEquals { phi: q, .. } if q == phi
                    )));
                }
                Explanation::Anchor { rule, precision } => {
                    assert!(s.explain.iter().any(|c| matches!(
                        c,
                        Constraint::AnchorHolds { rule: r, precision: p, .. }
                            if r == rule && p == precision
                    )));
                }
                Explanation::Counterfactual { point, radius, .. } => {
                    let ok = s.explain.iter().any(|c| match c {
                        Constraint::SignAt { point: q, .. } => q == point,
                        Constraint::ValueAt { point: q, .. } => q == point,
                        Constraint::SignOnBall { radius: r, .. } => Some(*r) == *radius,
                        _ => false,
                    });
                    assert!(ok, "{}", entry.id);
                }
                Explanation::LocallyStableGradient { vector, r, delta } => {
                    assert!(s.explain.iter().any(|c| matches!(
                        c,
                        Constraint::LocallyStableGradient { vector: v, r: rr, delta: dd, .. }
                            if v == vector && rr == r && dd == delta
                    )));
                }
                Explanation::Gradient { vector: None } => panic!("undefined gradient"),
            }
        }
    }

    #[test]
    fn quick_run_produces_a_report() {
        let cfg = ScenarioConfig::new("grad-linear").set("trials", 10.0);
        let out = run_scenario(&cfg).unwrap();
        assert_eq!(out.headline.trials, 10);
        assert_eq!(out.headline.scenario_id, "grad-linear");
    }
}
