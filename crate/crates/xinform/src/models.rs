//! Concrete decision functions with exact evaluation, exact expectations and
//! exact interventional value functions, plus the hypothesis-class
//! specifications consumed by the sup-correlation solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, Distribution, FeatureSubset, Grid, Interval, Point};

/// `sign` with the fixed convention `sign(0) = +1`.
pub fn sign_of(v: f64) -> i8 {
    if v >= 0.0 {
        1
    } else {
        -1
    }
}

/// Piecewise-constant function on a rectangular grid, one value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    /// Cell values in row-major (flat-index) order.
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::InvalidModel(format!(
                "expected {} cell values, got {}",
                grid.cell_count(),
                values.len()
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn value_at_cell(&self, idx: &[usize]) -> f64 {
        self.values[self.grid.flat_index(idx)]
    }

    /// Equivalent axis-parallel tree, splitting on every cut in dimension
    /// order. Used as a dual route for cross-checking.
    pub fn to_tree(&self) -> AxisTree {
        fn build(g: &GridFunction, dim: usize, prefix: &mut Vec<usize>) -> TreeNode {
            if dim == g.grid.dim() {
                return TreeNode::Leaf(g.value_at_cell(prefix));
            }
            fn range(g: &GridFunction, dim: usize, prefix: &mut Vec<usize>, lo: usize, hi: usize) -> TreeNode {
                if lo == hi {
                    prefix.push(lo);
                    let t = build(g, dim + 1, prefix);
                    prefix.pop();
                    return t;
                }
                let mid = (lo + hi) / 2;
                // cells [lo..=mid] are strictly below the cut after cell `mid`
                let threshold = g.grid.edges(dim)[mid + 1];
                let left = range(g, dim, prefix, lo, mid);
                let right = range(g, dim, prefix, mid + 1, hi);
                TreeNode::Split {
                    feature: dim,
                    threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
            range(g, dim, prefix, 0, g.grid.cells_along(dim) - 1)
        }
        AxisTree { root: build(self, 0, &mut Vec::new()), depth_bound: None }
    }
}

/// Node of an axis-parallel decision tree. Points with `x^(j) < t` go left,
/// points with `x^(j) >= t` go right.
/// Serialized form: a leaf is its bare value, a split is an object with
/// `feature`, `threshold`, `left`, `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaf_values<'a>(&'a self, out: &mut Vec<f64>) {
        match self {
            TreeNode::Leaf(v) => out.push(*v),
            TreeNode::Split { left, right, .. } => {
                left.leaf_values(out);
                right.leaf_values(out);
            }
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf(_) => None,
            TreeNode::Split { feature, left, right, .. } => {
                let mut m = *feature;
                if let Some(f) = left.max_feature() {
                    m = m.max(f);
                }
                if let Some(f) = right.max_feature() {
                    m = m.max(f);
                }
                Some(m)
            }
        }
    }
}

/// Axis-parallel decision tree with an optional declared depth bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTree {
    pub root: TreeNode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_bound: Option<usize>,
}

impl AxisTree {
    pub fn leaf(value: f64) -> Self {
        AxisTree { root: TreeNode::Leaf(value), depth_bound: None }
    }

    pub fn evaluate(&self, p: &Point) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if p.coords()[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    /// The leaf region containing `p`, as the intersection of the routing
    /// half-spaces with `domain`.
    pub fn leaf_region(&self, p: &Point, domain: &AxisBox) -> AxisBox {
        let mut region = domain.clone();
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(_) => return region,
                TreeNode::Split { feature, threshold, left, right } => {
                    let iv = &region.dims[*feature];
                    if p.coords()[*feature] < *threshold {
                        region.dims[*feature] = Interval::new(
                            iv.lo(),
                            iv.hi().min(*threshold),
                            iv.lo_closed(),
                            false,
                        )
                        .expect("routing interval");
                        node = left;
                    } else {
                        region.dims[*feature] = Interval::new(
                            iv.lo().max(*threshold),
                            iv.hi(),
                            true,
                            iv.hi_closed(),
                        )
                        .expect("routing interval");
                        node = right;
                    }
                }
            }
        }
    }

    /// Partition of `domain` into leaf regions with their values. Regions of
    /// zero width are dropped.
    pub fn regions(&self, domain: &AxisBox) -> Vec<(AxisBox, f64)> {
        let mut out = Vec::new();
        fn walk(node: &TreeNode, region: AxisBox, out: &mut Vec<(AxisBox, f64)>) {
            match node {
                TreeNode::Leaf(v) => out.push((region, *v)),
                TreeNode::Split { feature, threshold, left, right } => {
                    let iv = &region.dims[*feature];
                    let (lo, hi, t) = (iv.lo(), iv.hi(), *threshold);
                    if t > lo {
                        let mut r = region.clone();
                        r.dims[*feature] =
                            Interval::new(lo, hi.min(t), iv.lo_closed(), hi <= t && iv.hi_closed())
                                .expect("region interval");
                        walk(left, r, out);
                    }
                    if t < hi {
                        let mut r = region.clone();
                        r.dims[*feature] =
                            Interval::new(lo.max(t), hi, t <= lo && iv.lo_closed() || t > lo, iv.hi_closed())
                                .expect("region interval");
                        walk(right, r, out);
                    } else if t == hi && iv.hi_closed() {
                        // the single boundary slice has measure zero; skip it
                    }
                }
            }
        }
        walk(&self.root, domain.clone(), &mut out);
        out
    }
}

/// `f(x) = w·x + b`, with a declared norm bound `‖w‖ < M`, `|b| < M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub bound: f64,
}

impl LinearModel {
    pub fn evaluate(&self, p: &Point) -> f64 {
        self.w.iter().zip(p.coords()).map(|(w, x)| w * x).sum::<f64>() + self.b
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Generalized additive model: `g(x) = Σ_j g_j(x^(j))` with one-dimensional
/// tree components over the real line (outer leaves unbounded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub components: Vec<AxisTree>,
}

impl GamModel {
    pub fn evaluate(&self, p: &Point) -> f64 {
        self.components
            .iter()
            .zip(p.coords())
            .map(|(g, &x)| g.evaluate(&Point(vec![x])))
            .sum()
    }

    fn component_expectation(&self, j: usize, marginal: &Interval) -> f64 {
        let line = AxisBox::new(vec![marginal.clone()]);
        let len = marginal.length();
        self.components[j]
            .regions(&line)
            .iter()
            .map(|(r, v)| v * r.dims[0].length() / len)
            .sum()
    }
}

/// Multivariate polynomial with coefficient magnitudes bounded by `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub degree: usize,
    /// Terms as (multi-index exponents of length d, coefficient).
    pub terms: Vec<(Vec<usize>, f64)>,
    pub bound: f64,
}

impl PolynomialModel {
    pub fn dim(&self) -> usize {
        self.terms.first().map_or(0, |(a, _)| a.len())
    }

    pub fn evaluate(&self, p: &Point) -> f64 {
        self.terms
            .iter()
            .map(|(alpha, c)| {
                c * alpha
                    .iter()
                    .zip(p.coords())
                    .map(|(&k, &x)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn gradient(&self, p: &Point) -> Vec<f64> {
        let d = p.dim();
        let mut g = vec![0.0; d];
        for (alpha, c) in &self.terms {
            for j in 0..d {
                if alpha[j] == 0 {
                    continue;
                }
                let mut term = c * alpha[j] as f64;
                for (i, (&k, &x)) in alpha.iter().zip(p.coords()).enumerate() {
                    let k = if i == j { k - 1 } else { k };
                    term *= x.powi(k as i32);
                }
                g[j] += term;
            }
        }
        g
    }
}

/// `k`-th moment of the uniform distribution on `[a, b]`.
pub fn uniform_moment(a: f64, b: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let k1 = (k + 1) as f64;
    (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k1 * (b - a))
}

/// A base model overridden by constant values on disjoint axis boxes. Used by
/// the witness constructions: each patch must lie inside a region where the
/// base model is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchedModel {
    pub base: Box<FunctionModel>,
    pub patches: Vec<(AxisBox, f64)>,
}

impl PatchedModel {
    pub fn evaluate(&self, p: &Point) -> Result<f64> {
        for (b, v) in &self.patches {
            if b.contains(p)? {
                return Ok(*v);
            }
        }
        self.base.evaluate(p)
    }

    fn base_value_under(&self, patch: &AxisBox) -> Result<f64> {
        self.base.evaluate(&patch.center())
    }
}

/// Tagged union of all concrete function models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionModel {
    Grid(GridFunction),
    Tree { tree: AxisTree, dim: usize },
    Linear(LinearModel),
    Gam(GamModel),
    Poly(PolynomialModel),
    Patched(PatchedModel),
}

impl FunctionModel {
    pub fn dim(&self) -> usize {
        match self {
            FunctionModel::Grid(g) => g.grid.dim(),
            FunctionModel::Tree { dim, .. } => *dim,
            FunctionModel::Linear(l) => l.w.len(),
            FunctionModel::Gam(g) => g.components.len(),
            FunctionModel::Poly(p) => p.dim(),
            FunctionModel::Patched(p) => p.base.dim(),
        }
    }

    pub fn evaluate(&self, p: &Point) -> Result<f64> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.dim() });
        }
        match self {
            FunctionModel::Grid(g) => {
                let idx = g.grid.cell_index(p)?;
                Ok(g.value_at_cell(&idx))
            }
            FunctionModel::Tree { tree, .. } => Ok(tree.evaluate(p)),
            FunctionModel::Linear(l) => Ok(l.evaluate(p)),
            FunctionModel::Gam(g) => Ok(g.evaluate(p)),
            FunctionModel::Poly(poly) => Ok(poly.evaluate(p)),
            FunctionModel::Patched(pm) => pm.evaluate(p),
        }
    }

    /// `c_f(p) = sign(f(p))` with `sign(0) = +1`.
    pub fn label(&self, p: &Point) -> Result<i8> {
        Ok(sign_of(self.evaluate(p)?))
    }

    /// Whether the model is piecewise constant (exact region geometry
    /// available).
    pub fn is_piecewise_constant(&self) -> bool {
        matches!(
            self,
            FunctionModel::Grid(_) | FunctionModel::Tree { .. } | FunctionModel::Gam(_)
        ) || matches!(self, FunctionModel::Patched(p) if p.base.is_piecewise_constant())
    }

    /// Partition of `domain` into constant-value regions. Supported for
    /// piecewise-constant models only.
    pub fn regions(&self, domain: &AxisBox) -> Result<Vec<(AxisBox, f64)>> {
        match self {
            FunctionModel::Grid(g) => {
                let mut out = Vec::new();
                for idx in g.grid.cell_indices() {
                    if let Some(inter) = g.grid.cell_box(&idx).intersect(domain) {
                        if inter.volume() > 0.0 {
                            out.push((inter, g.value_at_cell(&idx)));
                        }
                    }
                }
                Ok(out)
            }
            FunctionModel::Tree { tree, .. } => Ok(tree.regions(domain)),
            FunctionModel::Gam(g) => {
                // product partition over each component's 1-d breakpoints
                let mut per_dim: Vec<Vec<Interval>> = Vec::new();
                for (j, comp) in g.components.iter().enumerate() {
                    let line = AxisBox::new(vec![domain.dims[j].clone()]);
                    per_dim.push(
                        comp.regions(&line).into_iter().map(|(b, _)| b.dims.into_iter().next().unwrap()).collect(),
                    );
                }
                let mut out = vec![(Vec::new(), 0.0)];
                for (j, ivs) in per_dim.iter().enumerate() {
                    let mut next = Vec::new();
                    for (dims, _) in &out {
                        for iv in ivs {
                            let mut nd = dims.clone();
                            nd.push(iv.clone());
                            let mid = 0.5 * (iv.lo() + iv.hi());
                            let partial = g.components[j].evaluate(&Point(vec![mid]));
                            let prev: f64 = dims
                                .iter()
                                .enumerate()
                                .map(|(i, d)| {
                                    g.components[i].evaluate(&Point(vec![0.5 * (d.lo() + d.hi())]))
                                })
                                .sum();
                            next.push((nd, prev + partial));
                        }
                    }
                    out = next;
                }
                Ok(out.into_iter().map(|(dims, v)| (AxisBox::new(dims), v)).collect())
            }
            FunctionModel::Patched(pm) => {
                let mut out = Vec::new();
                for (region, value) in pm.base.regions(domain)? {
                    let mut pieces = vec![region.clone()];
                    for (patch, pv) in &pm.patches {
                        let Some(inter) = patch.intersect(&region) else { continue };
                        if inter.volume() <= 0.0 {
                            continue;
                        }
                        let mut remaining = Vec::new();
                        for piece in pieces {
                            match patch.intersect(&piece) {
                                Some(hit) if hit.volume() > 0.0 => {
                                    remaining.extend(subtract_box(&piece, &hit));
                                }
                                _ => remaining.push(piece),
                            }
                        }
                        pieces = remaining;
                        out.push((inter, *pv));
                    }
                    for piece in pieces {
                        out.push((piece, value));
                    }
                }
                Ok(out)
            }
            _ => Err(Error::Unsupported(
                "region partition requires a piecewise-constant model".into(),
            )),
        }
    }

    /// Exact `E[f(X)]` under the distribution.
    pub fn expectation(&self, dist: &Distribution) -> Result<f64> {
        if self.dim() != dist.dim() {
            return Err(Error::DimensionMismatch { expected: dist.dim(), got: self.dim() });
        }
        match (self, dist) {
            (FunctionModel::Linear(l), Distribution::UniformBox { support }) => {
                Ok(l.evaluate(&support.center()))
            }
            (FunctionModel::Linear(l), Distribution::DiagonalSegment { .. }) => {
                let m = dist.marginal(0);
                let t = 0.5 * (m.lo() + m.hi());
                Ok(l.evaluate(&Point(vec![t; l.w.len()])))
            }
            (FunctionModel::Gam(g), Distribution::UniformBox { .. }) => Ok((0..g.components.len())
                .map(|j| g.component_expectation(j, &dist.marginal(j)))
                .sum()),
            (FunctionModel::Gam(g), Distribution::DiagonalSegment { .. }) => {
                // all coordinates share the diagonal parameter, so the sum is
                // a single 1-d piecewise-constant function of t
                let m = dist.marginal(0);
                Ok((0..g.components.len())
                    .map(|j| g.component_expectation(j, &m))
                    .sum())
            }
            (FunctionModel::Poly(poly), Distribution::UniformBox { support }) => Ok(poly
                .terms
                .iter()
                .map(|(alpha, c)| {
                    c * alpha
                        .iter()
                        .enumerate()
                        .map(|(j, &k)| {
                            uniform_moment(support.dims[j].lo(), support.dims[j].hi(), k)
                        })
                        .product::<f64>()
                })
                .sum()),
            (FunctionModel::Poly(poly), Distribution::DiagonalSegment { .. }) => {
                let m = dist.marginal(0);
                Ok(poly
                    .terms
                    .iter()
                    .map(|(alpha, c)| {
                        c * uniform_moment(m.lo(), m.hi(), alpha.iter().sum())
                    })
                    .sum())
            }
            (FunctionModel::Patched(pm), _) => {
                let mut e = pm.base.expectation(dist)?;
                for (patch, v) in &pm.patches {
                    let mass = dist.box_mass(patch)?;
                    if mass > 0.0 {
                        e += mass * (v - pm.base_value_under(patch)?);
                    }
                }
                Ok(e)
            }
            _ => {
                // piecewise-constant models: mass-weighted sum over regions
                let support = dist.support().clone();
                let mut e = 0.0;
                for (region, value) in self.regions(&support)? {
                    e += dist.box_mass(&region)? * value;
                }
                Ok(e)
            }
        }
    }

    /// Exact interventional value function `v(S, x) = E[f(x_S, X_{S̄})]`
    /// where absent features are integrated under their (product) marginals.
    /// Only product-structured distributions are supported.
    pub fn marginal_value(
        &self,
        dist: &Distribution,
        x: &Point,
        s: &FeatureSubset,
    ) -> Result<f64> {
        let support = match dist {
            Distribution::UniformBox { support } => support.clone(),
            Distribution::DiagonalSegment { .. } => {
                return Err(Error::UnsupportedDistribution(
                    "marginal factorization undefined for the diagonal segment".into(),
                ))
            }
        };
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        if s.len() == self.dim() {
            return self.evaluate(x);
        }
        if s.is_empty() {
            return self.expectation(dist);
        }
        match self {
            FunctionModel::Linear(l) => {
                let mut v = l.b;
                for j in 0..l.w.len() {
                    let xj = if s.contains(j) {
                        x.coords()[j]
                    } else {
                        0.5 * (support.dims[j].lo() + support.dims[j].hi())
                    };
                    v += l.w[j] * xj;
                }
                Ok(v)
            }
            FunctionModel::Gam(g) => Ok((0..g.components.len())
                .map(|j| {
                    if s.contains(j) {
                        g.components[j].evaluate(&Point(vec![x.coords()[j]]))
                    } else {
                        g.component_expectation(j, &support.dims[j])
                    }
                })
                .sum()),
            FunctionModel::Poly(poly) => Ok(poly
                .terms
                .iter()
                .map(|(alpha, c)| {
                    c * alpha
                        .iter()
                        .enumerate()
                        .map(|(j, &k)| {
                            if s.contains(j) {
                                x.coords()[j].powi(k as i32)
                            } else {
                                uniform_moment(support.dims[j].lo(), support.dims[j].hi(), k)
                            }
                        })
                        .product::<f64>()
                })
                .sum()),
            FunctionModel::Patched(pm) => {
                let mut v = pm.base.marginal_value(dist, x, s)?;
                for (patch, pv) in &pm.patches {
                    let mut mass = 1.0;
                    for j in 0..self.dim() {
                        if s.contains(j) {
                            if !patch.dims[j].contains(x.coords()[j]) {
                                mass = 0.0;
                                break;
                            }
                        } else {
                            let len = support.dims[j].length();
                            mass *= patch.dims[j].overlap_length(&support.dims[j]) / len;
                        }
                    }
                    if mass > 0.0 {
                        v += mass * (pv - pm.base_value_under(patch)?);
                    }
                }
                Ok(v)
            }
            _ => {
                // grid / tree: route fixed coordinates, weight the free ones
                // by their marginal masses over each region slice
                let mut v = 0.0;
                for (region, value) in self.regions(&support)? {
                    let mut mass = 1.0;
                    for j in 0..self.dim() {
                        if s.contains(j) {
                            // half-open membership: x_j belongs to the region
                            // owning it under the cell conventions
                            if !region_owns(&region, &support, j, x.coords()[j]) {
                                mass = 0.0;
                                break;
                            }
                        } else {
                            mass *= region.dims[j].overlap_length(&support.dims[j])
                                / support.dims[j].length();
                        }
                    }
                    if mass > 0.0 {
                        v += mass * value;
                    }
                }
                Ok(v)
            }
        }
    }

    /// Invariant violations as human-readable paths into the model document.
    pub fn validate(&self, eval_box: Option<&AxisBox>) -> Vec<String> {
        let mut issues = Vec::new();
        match self {
            FunctionModel::Grid(g) => {
                for (i, v) in g.values.iter().enumerate() {
                    if !(-1.0..=1.0).contains(v) {
                        issues.push(format!("values[{i}] = {v} outside [-1, 1]"));
                    }
                }
            }
            FunctionModel::Tree { tree, .. } => {
                let mut leaves = Vec::new();
                tree.root.leaf_values(&mut leaves);
                for (i, v) in leaves.iter().enumerate() {
                    if !(-1.0..=1.0).contains(v) {
                        issues.push(format!("leaf[{i}] = {v} outside [-1, 1]"));
                    }
                }
                if let Some(bound) = tree.depth_bound {
                    let depth = tree.root.depth();
                    if depth > bound {
                        issues.push(format!("depth {depth} exceeds declared bound {bound}"));
                    }
                }
                if let Some(f) = tree.root.max_feature() {
                    if f >= self.dim() {
                        issues.push(format!("split feature {f} out of range for dim {}", self.dim()));
                    }
                }
            }
            FunctionModel::Linear(l) => {
                if l.norm() >= l.bound {
                    issues.push(format!("‖w‖ = {} not strictly below bound {}", l.norm(), l.bound));
                }
                if l.b.abs() >= l.bound {
                    issues.push(format!("|b| = {} not strictly below bound {}", l.b.abs(), l.bound));
                }
            }
            FunctionModel::Gam(g) => {
                if let Some(bx) = eval_box {
                    // the sum bound is enforced over the evaluation region by
                    // checking every cell of the induced product partition
                    if let Ok(regions) = self.regions(bx) {
                        for (region, v) in regions {
                            if !(-1.0..=1.0).contains(&v) {
                                issues.push(format!(
                                    "component sum {v} outside [-1, 1] on {region:?}"
                                ));
                            }
                        }
                    }
                }
                for (j, comp) in g.components.iter().enumerate() {
                    if let Some(f) = comp.root.max_feature() {
                        if f != 0 {
                            issues.push(format!("components[{j}] splits on feature {f}, expected 0"));
                        }
                    }
                }
            }
            FunctionModel::Poly(poly) => {
                for (i, (alpha, c)) in poly.terms.iter().enumerate() {
                    if c.abs() > poly.bound {
                        issues.push(format!("terms[{i}] coefficient {c} exceeds bound {}", poly.bound));
                    }
                    let deg: usize = alpha.iter().sum();
                    if deg > poly.degree {
                        issues.push(format!("terms[{i}] degree {deg} exceeds declared degree {}", poly.degree));
                    }
                    if alpha.len() != poly.dim() {
                        issues.push(format!("terms[{i}] multi-index length mismatch"));
                    }
                }
            }
            FunctionModel::Patched(pm) => {
                issues.extend(pm.base.validate(eval_box));
                for (i, (a, _)) in pm.patches.iter().enumerate() {
                    for (k, (b, _)) in pm.patches.iter().enumerate().skip(i + 1) {
                        if a.overlap_volume(b) > 0.0 {
                            issues.push(format!("patches[{i}] and patches[{k}] overlap"));
                        }
                    }
                }
            }
        }
        issues
    }
}

/// Half-open ownership test for region membership along one dimension: lower
/// edge included, upper edge excluded unless it is the support's upper edge.
fn region_owns(region: &AxisBox, support: &AxisBox, j: usize, x: f64) -> bool {
    let iv = &region.dims[j];
    let at_top = iv.hi() >= support.dims[j].hi();
    x >= iv.lo() && (x < iv.hi() || (at_top && x <= iv.hi()))
}

/// Partition of `piece \ hit` into axis boxes, where `hit ⊆ piece`.
fn subtract_box(piece: &AxisBox, hit: &AxisBox) -> Vec<AxisBox> {
    let mut out = Vec::new();
    let mut core = piece.clone();
    for j in 0..piece.dim() {
        let c = &core.dims[j];
        let h = &hit.dims[j];
        if h.lo() > c.lo() {
            let mut below = core.clone();
            below.dims[j] = Interval::new(c.lo(), h.lo(), c.lo_closed(), false).expect("slab");
            out.push(below);
        }
        if h.hi() < c.hi() {
            let mut above = core.clone();
            above.dims[j] = Interval::new(h.hi(), c.hi(), false, c.hi_closed()).expect("slab");
            out.push(above);
        }
        core.dims[j] = h.clone();
    }
    out
}

/// Hypothesis-class specification consumed by the sup-correlation solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ClassSpec {
    /// Piecewise-constant functions on a known `k`-per-dimension grid, values
    /// in `[-1, 1]`.
    Grid { grid: Grid },
    /// Axis-parallel trees of depth at most `K`, leaf values in `[-1, 1]`.
    TreeBounded { depth: usize },
    /// Axis-parallel trees of arbitrary depth, leaf values in `[-1, 1]`.
    TreeUnbounded,
    /// Linear functions with `‖w‖, |b| < M`.
    Linear { bound: f64 },
    /// Differentiable functions within `ε` of some bounded linear function.
    NoisyLinear { bound: f64, epsilon: f64 },
    /// Differentiable functions into `[-1, 1]` with `‖∇h‖ ≤ α` and
    /// `β`-Lipschitz gradients.
    SmoothGrad { alpha: f64, beta: f64 },
    /// `L`-Lipschitz functions into `[-1, 1]`.
    Lipschitz { l: f64 },
    /// Polynomials of degree at most `D` with coefficients in `[-M, M]`.
    PolyBounded { degree: usize, bound: f64, dim: usize },
    /// All polynomials.
    PolyUnbounded,
    /// GAMs with deep tree components, sum in `[-1, 1]`.
    GamTreesUnbounded,
    /// All differentiable functions into `[-1, 1]`.
    BoundedDifferentiable,
}

impl ClassSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassSpec::Grid { .. } => "grid",
            ClassSpec::TreeBounded { .. } => "tree-bounded",
            ClassSpec::TreeUnbounded => "tree-unbounded",
            ClassSpec::Linear { .. } => "linear",
            ClassSpec::NoisyLinear { .. } => "noisy-linear",
            ClassSpec::SmoothGrad { .. } => "smooth-grad",
            ClassSpec::Lipschitz { .. } => "lipschitz",
            ClassSpec::PolyBounded { .. } => "poly-bounded",
            ClassSpec::PolyUnbounded => "poly-unbounded",
            ClassSpec::GamTreesUnbounded => "gam-trees-unbounded",
            ClassSpec::BoundedDifferentiable => "bounded-differentiable",
        }
    }

    /// Classes whose members can match any finite binary labeling exactly.
    pub fn is_interpolating(&self) -> bool {
        matches!(
            self,
            ClassSpec::TreeUnbounded
                | ClassSpec::PolyUnbounded
                | ClassSpec::GamTreesUnbounded
                | ClassSpec::BoundedDifferentiable
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ClassSpec::Grid { .. } | ClassSpec::TreeUnbounded | ClassSpec::PolyUnbounded => true,
            ClassSpec::GamTreesUnbounded | ClassSpec::BoundedDifferentiable => true,
            ClassSpec::TreeBounded { depth } => *depth > 0,
            ClassSpec::Linear { bound } => *bound > 0.0,
            ClassSpec::NoisyLinear { bound, epsilon } => *bound > 0.0 && *epsilon > 0.0,
            ClassSpec::SmoothGrad { alpha, beta } => *alpha > 0.0 && *beta > 0.0,
            ClassSpec::Lipschitz { l } => *l > 0.0,
            ClassSpec::PolyBounded { degree, bound, dim } => {
                *degree > 0 && *bound > 0.0 && *dim > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "class {} has a non-positive parameter",
                self.name()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::trial_rng;
    use rand::Rng;

    fn grid_2x2(values: [f64; 4]) -> FunctionModel {
        let grid = Grid::equidistant(AxisBox::cube(0.0, 1.0, 2), 2).unwrap();
        FunctionModel::Grid(GridFunction::new(grid, values.to_vec()).unwrap())
    }

    fn uniform_square() -> Distribution {
        Distribution::uniform(AxisBox::cube(0.0, 1.0, 2)).unwrap()
    }

    #[test]
    fn evaluate_linear() {
        let m = FunctionModel::Linear(LinearModel { w: vec![2.0, -1.0], b: 0.5, bound: 10.0 });
        assert_eq!(m.evaluate(&Point(vec![1.0, 1.0])).unwrap(), 1.5);
    }

    #[test]
    fn evaluate_depth_one_tree() {
        let tree = AxisTree {
            root: TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: Box::new(TreeNode::Leaf(-1.0)),
                right: Box::new(TreeNode::Leaf(1.0)),
            },
            depth_bound: Some(1),
        };
        let m = FunctionModel::Tree { tree, dim: 2 };
        assert_eq!(m.evaluate(&Point(vec![0.3, 0.9])).unwrap(), -1.0);
        assert_eq!(m.evaluate(&Point(vec![0.5, 0.9])).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_grid_cells() {
        // flat order: cell (0,0), (0,1), (1,0), (1,1)
        let m = grid_2x2([-1.0, 1.0, 0.5, -0.5]);
        assert_eq!(m.evaluate(&Point(vec![0.75, 0.25])).unwrap(), 0.5);
    }

    #[test]
    fn label_conventions() {
        let m = grid_2x2([-0.2, 0.0, 0.7, 1.0]);
        assert_eq!(m.label(&Point(vec![0.25, 0.25])).unwrap(), -1);
        assert_eq!(m.label(&Point(vec![0.25, 0.75])).unwrap(), 1); // sign(0) = +1
        assert_eq!(m.label(&Point(vec![0.75, 0.25])).unwrap(), 1);
    }

    #[test]
    fn grid_expectation_is_mean() {
        let m = grid_2x2([0.1, -0.3, 0.7, 0.5]);
        let e = m.expectation(&uniform_square()).unwrap();
        assert!((e - (0.1 - 0.3 + 0.7 + 0.5) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn linear_expectation_is_centroid_value() {
        let dist = Distribution::uniform(AxisBox::from_bounds(&[(0.0, 2.0), (1.0, 3.0)])).unwrap();
        let l = LinearModel { w: vec![1.5, -0.5], b: 0.25, bound: 10.0 };
        let m = FunctionModel::Linear(l.clone());
        let exact = m.expectation(&dist).unwrap();
        assert!((exact - (1.5 * 1.0 - 0.5 * 2.0 + 0.25)).abs() < 1e-12);
        // Monte-Carlo cross-check
        let pts = dist.sample_points(100_000, 5);
        let mc = pts.iter().map(|p| l.evaluate(p)).sum::<f64>() / pts.len() as f64;
        assert!((mc - exact).abs() < 1e-2);
    }

    #[test]
    fn marginal_value_endpoints() {
        let m = grid_2x2([0.1, -0.3, 0.7, 0.5]);
        let dist = uniform_square();
        let x = Point(vec![0.2, 0.8]);
        let full = m.marginal_value(&dist, &x, &FeatureSubset::full(2)).unwrap();
        assert_eq!(full, m.evaluate(&x).unwrap());
        let empty = m.marginal_value(&dist, &x, &FeatureSubset::empty()).unwrap();
        assert!((empty - m.expectation(&dist).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn marginal_value_left_column() {
        let m = grid_2x2([0.1, -0.3, 0.7, 0.5]);
        let dist = uniform_square();
        let x = Point(vec![0.2, 0.8]);
        let s = FeatureSubset::new(vec![0], 2).unwrap();
        // fixing x^(1) in the left column averages the two left cells
        let v = m.marginal_value(&dist, &x, &s).unwrap();
        assert!((v - (0.1 - 0.3) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_value_rejects_diagonal() {
        let m = grid_2x2([0.1, -0.3, 0.7, 0.5]);
        let dist = Distribution::diagonal(AxisBox::cube(0.0, 1.0, 2)).unwrap();
        let err = m
            .marginal_value(&dist, &Point(vec![0.2, 0.2]), &FeatureSubset::empty())
            .unwrap_err();
        assert_eq!(err.kind(), "unsupported-distribution");
    }

    #[test]
    fn marginal_value_monte_carlo() {
        let mut rng = trial_rng(99, 0);
        let dist = uniform_square();
        for _ in 0..50 {
            let values: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grid = Grid::equidistant(AxisBox::cube(0.0, 1.0, 2), 3).unwrap();
            let m = FunctionModel::Grid(GridFunction::new(grid, values).unwrap());
            let x = Point(vec![rng.gen(), rng.gen()]);
            let mask: usize = rng.gen_range(0..4);
            let s = FeatureSubset::from_mask(mask, 2);
            let exact = m.marginal_value(&dist, &x, &s).unwrap();
            // Monte Carlo over the free coordinates
            let n = 20_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let p = Point(
                    (0..2)
                        .map(|j| if s.contains(j) { x.coords()[j] } else { rng.gen() })
                        .collect(),
                );
                sum += m.evaluate(&p).unwrap();
            }
            let mc = sum / n as f64;
            let se = (1.0 / n as f64).sqrt(); // values bounded by 1
            assert!(
                (mc - exact).abs() < 4.0 * se + 1e-9,
                "mc {mc} vs exact {exact} for S={:?}",
                s.indices()
            );
        }
    }

    #[test]
    fn grid_tree_equivalence() {
        let mut rng = trial_rng(7, 3);
        let dist = uniform_square();
        for _ in 0..20 {
            let values: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grid = Grid::equidistant(AxisBox::cube(0.0, 1.0, 2), 3).unwrap();
            let gf = GridFunction::new(grid, values).unwrap();
            let tree = FunctionModel::Tree { tree: gf.to_tree(), dim: 2 };
            let gm = FunctionModel::Grid(gf);
            for _ in 0..50 {
                let p = Point(vec![rng.gen(), rng.gen()]);
                assert!((gm.evaluate(&p).unwrap() - tree.evaluate(&p).unwrap()).abs() < 1e-12);
            }
            assert!(
                (gm.expectation(&dist).unwrap() - tree.expectation(&dist).unwrap()).abs() < 1e-12
            );
            let x = Point(vec![rng.gen(), rng.gen()]);
            for mask in 0..4 {
                let s = FeatureSubset::from_mask(mask, 2);
                let a = gm.marginal_value(&dist, &x, &s).unwrap();
                let b = tree.marginal_value(&dist, &x, &s).unwrap();
                assert!((a - b).abs() < 1e-12, "S={:?}: {a} vs {b}", s.indices());
            }
        }
    }

    #[test]
    fn bounded_models_stay_bounded() {
        let mut rng = trial_rng(11, 0);
        let values: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid = Grid::equidistant(AxisBox::cube(0.0, 1.0, 2), 3).unwrap();
        let m = FunctionModel::Grid(GridFunction::new(grid, values).unwrap());
        for _ in 0..10_000 {
            let p = Point(vec![rng.gen(), rng.gen()]);
            let v = m.evaluate(&p).unwrap();
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn expectation_between_extremes() {
        let m = grid_2x2([0.1, -0.3, 0.7, 0.5]);
        let e = m.expectation(&uniform_square()).unwrap();
        assert!((-0.3..=0.7).contains(&e));
    }

    #[test]
    fn patched_expectation_and_marginals() {
        let base = grid_2x2([0.0, 0.0, 0.0, 0.0]);
        let patch = AxisBox::from_bounds(&[(0.1, 0.2), (0.1, 0.2)]);
        let m = FunctionModel::Patched(PatchedModel {
            base: Box::new(base),
            patches: vec![(patch.clone(), 1.0)],
        });
        let dist = uniform_square();
        assert!((m.expectation(&dist).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(m.evaluate(&Point(vec![0.15, 0.15])).unwrap(), 1.0);
        assert_eq!(m.evaluate(&Point(vec![0.5, 0.5])).unwrap(), 0.0);
        // v({0}, x) with x^(1) in the patch slice: patch contributes its
        // length in dimension 2
        let s = FeatureSubset::new(vec![0], 2).unwrap();
        let v = m.marginal_value(&dist, &Point(vec![0.15, 0.9]), &s).unwrap();
        assert!((v - 0.1).abs() < 1e-12);
        // and outside the slice: no contribution
        let v = m.marginal_value(&dist, &Point(vec![0.5, 0.9]), &s).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn patched_regions_partition_mass() {
        let base = grid_2x2([0.2, -0.4, 0.6, -0.8]);
        let m = FunctionModel::Patched(PatchedModel {
            base: Box::new(base),
            patches: vec![
                (AxisBox::from_bounds(&[(0.1, 0.2), (0.1, 0.3)]), 1.0),
                (AxisBox::from_bounds(&[(0.6, 0.9), (0.6, 0.7)]), -1.0),
            ],
        });
        let dist = uniform_square();
        let regions = m.regions(dist.support()).unwrap();
        let total: f64 = regions.iter().map(|(b, _)| dist.box_mass(b).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let e_regions: f64 = regions.iter().map(|(b, v)| dist.box_mass(b).unwrap() * v).sum();
        assert!((e_regions - m.expectation(&dist).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gam_evaluation_and_expectation() {
        let step = |t: f64, lo: f64, hi: f64| AxisTree {
            root: TreeNode::Split {
                feature: 0,
                threshold: t,
                left: Box::new(TreeNode::Leaf(lo)),
                right: Box::new(TreeNode::Leaf(hi)),
            },
            depth_bound: None,
        };
        let m = FunctionModel::Gam(GamModel {
            components: vec![step(0.5, -0.3, 0.3), step(0.25, 0.1, -0.1)],
        });
        assert!((m.evaluate(&Point(vec![0.6, 0.1])).unwrap() - 0.4).abs() < 1e-12);
        let e = m.expectation(&uniform_square()).unwrap();
        // component 1 integrates to 0; component 2 to 0.25*0.1 + 0.75*(-0.1)
        assert!((e - (-0.05)).abs() < 1e-12);
    }

    #[test]
    fn polynomial_evaluate_gradient_expectation() {
        // f(x, y) = 0.5 x^2 y - 0.25 y + 0.1
        let poly = PolynomialModel {
            degree: 3,
            terms: vec![
                (vec![2, 1], 0.5),
                (vec![0, 1], -0.25),
                (vec![0, 0], 0.1),
            ],
            bound: 1.0,
        };
        let m = FunctionModel::Poly(poly.clone());
        let p = Point(vec![2.0, 3.0]);
        assert!((m.evaluate(&p).unwrap() - (6.0 - 0.75 + 0.1)).abs() < 1e-12);
        let g = poly.gradient(&p);
        assert!((g[0] - 6.0).abs() < 1e-12); // x y * 1.0 at (2,3)
        assert!((g[1] - (2.0 - 0.25)).abs() < 1e-12);
        let e = m.expectation(&uniform_square()).unwrap();
        // E[x^2] = 1/3, E[y] = 1/2 on [0,1]
        assert!((e - (0.5 / 6.0 - 0.125 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn validate_reports_violations() {
        let bad = FunctionModel::Linear(LinearModel { w: vec![3.0, 4.0], b: 0.0, bound: 5.0 });
        let issues = bad.validate(None);
        assert_eq!(issues.len(), 1);
        assert!(issues[0].contains("‖w‖"));
        let ok = FunctionModel::Linear(LinearModel { w: vec![3.0, 4.0], b: 0.0, bound: 5.1 });
        assert!(ok.validate(None).is_empty());
    }

    #[test]
    fn model_json_roundtrip() {
        let m = grid_2x2([0.1, -0.3, 0.7, 0.5]);
        let s = serde_json::to_string(&m).unwrap();
        let back: FunctionModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let spec = ClassSpec::NoisyLinear { bound: 2.0, epsilon: 0.1 };
        let s = serde_json::to_string(&spec).unwrap();
        let back: ClassSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
    }
}
