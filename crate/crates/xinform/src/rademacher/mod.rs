//! Informativeness machinery: constraint sets encoding the
//! prediction-consistent and explanation-consistent classes, per-class
//! sup-correlation solvers, Monte-Carlo Rademacher estimators (unconditional
//! and conditional) and paired gap reports.

pub mod simplex;

mod interp;
mod linear;
mod lipschitz;
mod lp_classes;
mod smooth;
mod tree;

pub use interp::construct_witness;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{trial_rng, AxisBox, Distribution, Point};
use crate::models::{ClassSpec, FunctionModel};

/// One algebraic condition on class members, encoding part of "the
/// explanation is valid for g".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Constraint {
    ValueAt { point: Point, value: f64 },
    GradientAt { point: Point, vector: Vec<f64> },
    TopComponentAt { point: Point, index: usize, magnitude: f64 },
    MeanEquals { value: f64, dist: Distribution },
    ShapEquals { point: Point, phi: Vec<f64>, dist: Distribution },
    AnchorHolds { rule: AxisBox, precision: f64, equality: bool, sign: i8, dist: Distribution },
    SignAt { point: Point, sign: i8 },
    SignOnBall { center: Point, radius: f64, sign: i8 },
    LocallyStableGradient { point: Point, vector: Vec<f64>, r: f64, delta: f64 },
}

/// A Rademacher sample: points with random ±1 labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub points: Vec<Point>,
    pub labels: Vec<i8>,
}

impl LabeledSample {
    pub fn new(points: Vec<Point>, labels: Vec<i8>) -> Result<Self> {
        if points.len() != labels.len() || points.is_empty() {
            return Err(Error::InvalidInput("sample points/labels length mismatch or empty".into()));
        }
        Ok(LabeledSample { points, labels })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// `(1/n) Σ σ_i g(x_i)` for a concrete model.
    pub fn correlation(&self, model: &FunctionModel) -> Result<f64> {
        let mut sum = 0.0;
        for (p, &s) in self.points.iter().zip(&self.labels) {
            sum += s as f64 * model.evaluate(p)?;
        }
        Ok(sum / self.n() as f64)
    }
}

/// A certificate that a sup value (or bracket lower bound) is attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "witness", rename_all = "snake_case")]
pub enum Witness {
    /// A concrete model; attainment is re-verifiable by evaluation.
    Model(FunctionModel),
    /// A structurally verified construction for classes without a finite
    /// model representation (bump sums, interpolating polynomials). `data`
    /// records the construction parameters that make it valid.
    Symbolic { family: String, data: serde_json::Value },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupValue {
    Exact { value: f64 },
    Bracket { lower: f64, upper: f64 },
}

impl SupValue {
    pub fn upper(&self) -> f64 {
        match self {
            SupValue::Exact { value } => *value,
            SupValue::Bracket { upper, .. } => *upper,
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            SupValue::Exact { value } => *value,
            SupValue::Bracket { lower, .. } => *lower,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, SupValue::Exact { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupResult {
    pub value: SupValue,
    pub witness: Option<Witness>,
}

impl SupResult {
    pub fn exact(value: f64, witness: Option<Witness>) -> Self {
        SupResult { value: SupValue::Exact { value }, witness }
    }

    pub fn bracket(lower: f64, upper: f64, witness: Option<Witness>) -> Self {
        SupResult { value: SupValue::Bracket { lower, upper }, witness }
    }
}

/// `sup_{g ∈ F ∩ constraints} (1/n) Σ σ_i g(x_i)`, solved exactly or as a
/// bracket depending on the class.
pub fn sup_correlation(
    class: &ClassSpec,
    constraints: &[Constraint],
    sample: &LabeledSample,
) -> Result<SupResult> {
    class.validate()?;
    match class {
        ClassSpec::Grid { grid } => lp_classes::grid_sup(grid, constraints, sample),
        ClassSpec::PolyBounded { degree, bound, dim } => {
            lp_classes::poly_sup(*degree, *bound, *dim, constraints, sample)
        }
        ClassSpec::Linear { bound } => linear::linear_sup(*bound, constraints, sample),
        ClassSpec::NoisyLinear { bound, epsilon } => {
            linear::noisy_linear_sup(*bound, *epsilon, constraints, sample)
        }
        ClassSpec::Lipschitz { l } => lipschitz::lipschitz_sup(*l, constraints, sample),
        ClassSpec::TreeBounded { depth } => tree::tree_sup(*depth, constraints, sample),
        ClassSpec::SmoothGrad { alpha, beta } => {
            smooth::smooth_sup(*alpha, *beta, constraints, sample)
        }
        _ if class.is_interpolating() => interp::interpolating_sup(class, constraints, sample),
        _ => unreachable!("all class variants handled"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    ExactPerTrial,
    BracketPerTrial,
}

/// Monte-Carlo estimate of an (expected) Rademacher complexity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    /// Mean of the per-trial values (upper bounds when bracketed).
    pub mean: f64,
    pub standard_error: f64,
    /// Mean of the per-trial lower bounds; equals `mean` for exact solvers.
    pub lower_mean: f64,
    pub lower_standard_error: f64,
    pub trials: usize,
    pub n: usize,
    pub kind: EstimateKind,
}

fn summarize(uppers: &[f64], lowers: &[f64], n: usize, kind: EstimateKind) -> RademacherEstimate {
    let (mean, se) = mean_se(uppers);
    let (lower_mean, lower_se) = mean_se(lowers);
    RademacherEstimate {
        mean,
        standard_error: se,
        lower_mean,
        lower_standard_error: lower_se,
        trials: uppers.len(),
        n,
        kind,
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Event over one Rademacher trial: point `i` must fall in `regions[i]`,
/// labels optionally fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub regions: Vec<AxisBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i8>>,
    #[serde(default = "default_attempts")]
    pub max_rejection_attempts: usize,
    /// When set, sample directly from the per-point conditionals instead of
    /// rejection sampling (valid for product events).
    #[serde(default)]
    pub direct: bool,
}

fn default_attempts() -> usize {
    100_000
}

impl EventSpec {
    pub fn direct_product(regions: Vec<AxisBox>, labels: Option<Vec<i8>>) -> Self {
        EventSpec { regions, labels, max_rejection_attempts: default_attempts(), direct: true }
    }

    /// Exact probability of the event (product over points and fixed labels).
    pub fn probability(&self, dist: &Distribution) -> Result<f64> {
        let mut p = 1.0;
        for r in &self.regions {
            p *= dist.box_mass(r)?;
        }
        if let Some(labels) = &self.labels {
            p *= 0.5_f64.powi(labels.len() as i32);
        }
        Ok(p)
    }

    pub fn sample<R: Rng>(&self, dist: &Distribution, rng: &mut R) -> Result<LabeledSample> {
        let n = self.regions.len();
        let points: Vec<Point> = if self.direct {
            self.regions
                .iter()
                .map(|r| dist.sample_in_box(r, rng))
                .collect::<Result<_>>()?
        } else {
            let mut attempts = 0;
            'outer: loop {
                attempts += 1;
                if attempts > self.max_rejection_attempts {
                    return Err(Error::Budget(format!(
                        "rejection sampling exhausted after {} attempts",
                        self.max_rejection_attempts
                    )));
                }
                let cand = dist.sample_with_rng(n, rng);
                for (p, r) in cand.iter().zip(&self.regions) {
                    if !r.contains(p)? {
                        continue 'outer;
                    }
                }
                break cand;
            }
        };
        let labels = match &self.labels {
            Some(l) => l.clone(),
            None => (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect(),
        };
        LabeledSample::new(points, labels)
    }
}

fn draw_sample<R: Rng>(dist: &Distribution, n: usize, rng: &mut R) -> Result<LabeledSample> {
    let points = dist.sample_with_rng(n, rng);
    let labels = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
    LabeledSample::new(points, labels)
}

/// Run `trials` independent sup computations on fresh samples; per-trial RNG
/// streams derive from `(seed, trial)` so results are scheduling-invariant.
fn run_trials<F>(trials: usize, seed: u64, per_trial: F) -> Result<Vec<SupValue>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<SupValue> + Sync,
{
    let results: Vec<Result<SupValue>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            per_trial(&mut rng)
        })
        .collect();
    results.into_iter().collect()
}

/// Monte-Carlo estimate of `R_n(F ∩ constraints)`.
pub fn empirical_rademacher(
    class: &ClassSpec,
    constraints: &[Constraint],
    dist: &Distribution,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let values = run_trials(trials, seed, |rng| {
        let sample = draw_sample(dist, n, rng)?;
        Ok(sup_correlation(class, constraints, &sample)?.value)
    })?;
    Ok(collect_estimate(&values, n))
}

/// Conditional Rademacher complexity `E[sup | A]` for a product event.
pub fn conditional_rademacher(
    class: &ClassSpec,
    constraints: &[Constraint],
    dist: &Distribution,
    event: &EventSpec,
    trials: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    if event.probability(dist)? <= 0.0 && !event.direct {
        return Err(Error::ZeroMass("event has zero probability".into()));
    }
    let n = event.regions.len();
    let values = run_trials(trials, seed, |rng| {
        let sample = event.sample(dist, rng)?;
        Ok(sup_correlation(class, constraints, &sample)?.value)
    })?;
    Ok(collect_estimate(&values, n))
}

fn collect_estimate(values: &[SupValue], n: usize) -> RademacherEstimate {
    let kind = if values.iter().all(SupValue::is_exact) {
        EstimateKind::ExactPerTrial
    } else {
        EstimateKind::BracketPerTrial
    };
    let uppers: Vec<f64> = values.iter().map(SupValue::upper).collect();
    let lowers: Vec<f64> = values.iter().map(SupValue::lower).collect();
    summarize(&uppers, &lowers, n, kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Informative,
    NonInformativeConsistent,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Informative => "informative",
            Verdict::NonInformativeConsistent => "non-informative-consistent",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Paired comparison of the prediction-consistent and explanation-consistent
/// complexities on identical trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub scenario_id: String,
    pub class: String,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub predict: RademacherEstimate,
    pub explain: RademacherEstimate,
    /// Mean per-trial gap; for brackets the conservative gap
    /// `lower(predict) − upper(explain)`.
    pub gap_mean: f64,
    pub gap_standard_error: f64,
    pub gap_ci_low: f64,
    pub gap_ci_high: f64,
    pub min_trial_gap: f64,
    pub max_trial_gap: f64,
    pub verdict: Verdict,
    pub runtime_ms: u64,
}

pub const GAP_CSV_HEADER: &str = "scenario_id,class,n,trials,seed,R_predict_mean,R_predict_se,R_explain_mean_or_upper,R_explain_lower,gap_mean,gap_ci_low,gap_ci_high,verdict,runtime_ms";

impl GapReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12},{:.12},{},{}",
            self.scenario_id,
            self.class,
            self.n,
            self.trials,
            self.seed,
            self.predict.mean,
            self.predict.standard_error,
            self.explain.mean,
            self.explain.lower_mean,
            self.gap_mean,
            self.gap_ci_low,
            self.gap_ci_high,
            self.verdict.as_str(),
            self.runtime_ms
        )
    }
}

/// Paired estimate of both complexities on identical trials, with verdict.
///
/// `explain_constraints` must contain every predict constraint (the
/// explanation-consistent class is a subset by construction).
#[allow(clippy::too_many_arguments)]
pub fn gap_report(
    scenario_id: &str,
    class: &ClassSpec,
    predict_constraints: &[Constraint],
    explain_constraints: &[Constraint],
    dist: &Distribution,
    n: usize,
    trials: usize,
    seed: u64,
    event: Option<&EventSpec>,
) -> Result<GapReport> {
    for c in predict_constraints {
        if !explain_constraints.contains(c) {
            return Err(Error::InvalidInput(
                "explain constraints must include every predict constraint".into(),
            ));
        }
    }
    if let Some(e) = event {
        if e.regions.len() != n {
            return Err(Error::InvalidInput(format!(
                "event has {} regions but n = {n}",
                e.regions.len()
            )));
        }
    }
    let start = std::time::Instant::now();
    let pairs: Vec<Result<(SupValue, SupValue)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let sample = match event {
                Some(e) => e.sample(dist, &mut rng)?,
                None => draw_sample(dist, n, &mut rng)?,
            };
            let p = sup_correlation(class, predict_constraints, &sample)?.value;
            let e = sup_correlation(class, explain_constraints, &sample)?.value;
            // set inclusion must show up numerically
            debug_assert!(
                e.lower() <= p.upper() + 1e-9,
                "explain sup exceeds predict sup: {e:?} vs {p:?}"
            );
            Ok((p, e))
        })
        .collect();
    let pairs: Vec<(SupValue, SupValue)> = pairs.into_iter().collect::<Result<_>>()?;

    let predict = collect_estimate(&pairs.iter().map(|(p, _)| *p).collect::<Vec<_>>(), n);
    let explain = collect_estimate(&pairs.iter().map(|(_, e)| *e).collect::<Vec<_>>(), n);
    let all_exact = predict.kind == EstimateKind::ExactPerTrial
        && explain.kind == EstimateKind::ExactPerTrial;

    // conservative per-trial gap: certain separation even for brackets
    let gaps: Vec<f64> = pairs.iter().map(|(p, e)| p.lower() - e.upper()).collect();
    let (gap_mean, gap_se) = mean_se(&gaps);
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let verdict = if all_exact {
        if gap_mean > (3.0 * gap_se).max(1e-9) {
            Verdict::Informative
        } else if gaps.iter().all(|g| g.abs() <= 1e-9) {
            Verdict::NonInformativeConsistent
        } else {
            Verdict::Inconclusive
        }
    } else {
        let combined_se = (explain.standard_error.powi(2)
            + predict.lower_standard_error.powi(2))
        .sqrt();
        if explain.mean < predict.lower_mean - 3.0 * combined_se && gap_mean > 0.0 {
            Verdict::Informative
        } else {
            Verdict::Inconclusive
        }
    };

    Ok(GapReport {
        scenario_id: scenario_id.to_string(),
        class: class.name().to_string(),
        n,
        trials,
        seed,
        predict,
        explain,
        gap_mean,
        gap_standard_error: gap_se,
        gap_ci_low: gap_mean - 1.96 * gap_se,
        gap_ci_high: gap_mean + 1.96 * gap_se,
        min_trial_gap: min_gap,
        max_trial_gap: max_gap,
        verdict,
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

/// Numerical check of the decomposition
/// `R_n(G) = Σ_k Pr(A_k) · R_n(G | A_k)` for a partition of product events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub unconditional: RademacherEstimate,
    pub event_masses: Vec<f64>,
    pub conditional_means: Vec<f64>,
    pub weighted_sum: f64,
    pub weighted_sum_se: f64,
    pub discrepancy: f64,
    pub combined_se: f64,
    pub agrees_within_3_se: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn lemma_decomposition_check(
    class: &ClassSpec,
    constraints: &[Constraint],
    dist: &Distribution,
    n: usize,
    partition: &[EventSpec],
    trials: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    let masses: Vec<f64> =
        partition.iter().map(|e| e.probability(dist)).collect::<Result<_>>()?;
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "partition masses sum to {total}, expected 1"
        )));
    }
    for (i, a) in partition.iter().enumerate() {
        for b in partition.iter().skip(i + 1) {
            if events_overlap(a, b, dist)? {
                return Err(Error::InvalidInput(format!("partition events overlap (event {i})")));
            }
        }
    }
    let unconditional = empirical_rademacher(class, constraints, dist, n, trials, seed)?;
    let mut weighted_sum = 0.0;
    let mut weighted_var = 0.0;
    let mut conditional_means = Vec::new();
    for (k, (event, &mass)) in partition.iter().zip(&masses).enumerate() {
        let est = conditional_rademacher(
            class,
            constraints,
            dist,
            event,
            trials,
            seed.wrapping_add(1 + k as u64),
        )?;
        conditional_means.push(est.mean);
        weighted_sum += mass * est.mean;
        weighted_var += (mass * est.standard_error).powi(2);
    }
    let weighted_sum_se = weighted_var.sqrt();
    let discrepancy = (unconditional.mean - weighted_sum).abs();
    let combined_se = (unconditional.standard_error.powi(2) + weighted_var).sqrt();
    Ok(DecompositionReport {
        unconditional: unconditional.clone(),
        event_masses: masses,
        conditional_means,
        weighted_sum,
        weighted_sum_se,
        discrepancy,
        combined_se,
        agrees_within_3_se: discrepancy <= 3.0 * combined_se,
    })
}

fn events_overlap(a: &EventSpec, b: &EventSpec, dist: &Distribution) -> Result<bool> {
    if a.regions.len() != b.regions.len() {
        return Ok(false);
    }
    // product events overlap iff every per-point region pair overlaps and the
    // fixed labels are compatible
    for (ra, rb) in a.regions.iter().zip(&b.regions) {
        match ra.intersect(rb) {
            Some(inter) if dist.box_mass(&inter)? > 0.0 => {}
            _ => return Ok(false),
        }
    }
    if let (Some(la), Some(lb)) = (&a.labels, &b.labels) {
        if la.iter().zip(lb).any(|(x, y)| x != y) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;

    fn square_grid(k: usize) -> ClassSpec {
        ClassSpec::Grid { grid: Grid::equidistant(AxisBox::cube(0.0, 1.0, 2), k).unwrap() }
    }

    fn uniform_square() -> Distribution {
        Distribution::uniform(AxisBox::cube(0.0, 1.0, 2)).unwrap()
    }

    #[test]
    fn unconstrained_single_point_estimate_is_one() {
        // one sample point: an unconstrained grid always matches its label, so
        // every trial's supremum is exactly 1 (larger samples can collide in a
        // cell with opposite labels and fall short)
        let est = empirical_rademacher(&square_grid(2), &[], &uniform_square(), 1, 20, 7).unwrap();
        assert!((est.mean - 1.0).abs() < 1e-12);
        assert_eq!(est.standard_error, 0.0);
        assert_eq!(est.kind, EstimateKind::ExactPerTrial);
    }

    #[test]
    fn estimates_are_deterministic() {
        let a = empirical_rademacher(&square_grid(2), &[], &uniform_square(), 4, 10, 3).unwrap();
        let b = empirical_rademacher(&square_grid(2), &[], &uniform_square(), 4, 10, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_full_space_matches_unconditional() {
        let dist = uniform_square();
        let event = EventSpec::direct_product(vec![AxisBox::cube(0.0, 1.0, 2); 4], None);
        let cls = square_grid(2);
        let c = Constraint::MeanEquals { value: 0.0, dist: dist.clone() };
        let uncond =
            empirical_rademacher(&cls, std::slice::from_ref(&c), &dist, 4, 400, 11).unwrap();
        let cond =
            conditional_rademacher(&cls, &[c], &dist, &event, 400, 11).unwrap();
        let se = (uncond.standard_error.powi(2) + cond.standard_error.powi(2)).sqrt();
        assert!((uncond.mean - cond.mean).abs() <= 3.0 * se.max(1e-6));
    }

    #[test]
    fn gap_identical_constraints_is_noninformative() {
        let dist = uniform_square();
        let c = vec![Constraint::ValueAt { point: Point(vec![0.5, 0.5]), value: 0.3 }];
        let r = gap_report("same", &square_grid(2), &c, &c, &dist, 4, 30, 5, None).unwrap();
        assert_eq!(r.verdict, Verdict::NonInformativeConsistent);
        assert!(r.gap_mean.abs() < 1e-12);
    }

    #[test]
    fn gap_requires_inclusion() {
        let dist = uniform_square();
        let p = vec![Constraint::ValueAt { point: Point(vec![0.5, 0.5]), value: 0.3 }];
        let err = gap_report("bad", &square_grid(2), &p, &[], &dist, 4, 5, 5, None).unwrap_err();
        assert_eq!(err.kind(), "invalid-input");
    }

    #[test]
    fn decomposition_two_halfspaces() {
        // d=1 setting embedded in the 2-d square: split on the first axis
        let dist = uniform_square();
        let left = AxisBox::new(vec![
            crate::geometry::Interval::half_open(0.0, 0.5),
            crate::geometry::Interval::closed(0.0, 1.0),
        ]);
        let right = AxisBox::new(vec![
            crate::geometry::Interval::closed(0.5, 1.0),
            crate::geometry::Interval::closed(0.0, 1.0),
        ]);
        let n = 1;
        let parts = vec![
            EventSpec::direct_product(vec![left; n], None),
            EventSpec::direct_product(vec![right; n], None),
        ];
        let c = Constraint::MeanEquals { value: 0.0, dist: dist.clone() };
        let report =
            lemma_decomposition_check(&square_grid(2), &[c], &dist, n, &parts, 2000, 13).unwrap();
        assert!(report.agrees_within_3_se, "discrepancy {} vs se {}", report.discrepancy, report.combined_se);
    }

    #[test]
    fn overlapping_partition_rejected() {
        let dist = uniform_square();
        let whole = AxisBox::cube(0.0, 1.0, 2);
        let parts = vec![
            EventSpec::direct_product(vec![whole.clone()], Some(vec![1])),
            EventSpec::direct_product(vec![whole], Some(vec![1])),
        ];
        let err = lemma_decomposition_check(&square_grid(2), &[], &dist, 1, &parts, 10, 1)
            .unwrap_err();
        assert_eq!(err.kind(), "invalid-input");
    }
}
