//! Points, axis-aligned boxes, grids and sampling distributions.
//!
//! Everything here is immutable after construction and safe for shared
//! concurrent reads. Box masses are computed exactly; sampling is a
//! deterministic function of `(dist, n, seed)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// One closed/open interval, possibly unbounded. Infinite endpoints are
/// always open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntervalRepr", into = "IntervalRepr")]
pub struct Interval {
    lo: f64,
    hi: f64,
    lo_closed: bool,
    hi_closed: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInput(format!(
                "invalid interval [{lo}, {hi}]"
            )));
        }
        Ok(Interval {
            lo,
            hi,
            // infinite endpoints are open by definition
            lo_closed: lo_closed && lo.is_finite(),
            hi_closed: hi_closed && hi.is_finite(),
        })
    }

    /// Closed finite interval `[lo, hi]`.
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval::new(lo, hi, true, true).expect("closed interval")
    }

    /// Half-open interval `[lo, hi)`.
    pub fn half_open(lo: f64, hi: f64) -> Self {
        Interval::new(lo, hi, true, false).expect("half-open interval")
    }

    /// The whole real line.
    pub fn unbounded() -> Self {
        Interval::new(f64::NEG_INFINITY, f64::INFINITY, false, false).expect("line")
    }

    /// `(-inf, hi)` or `(-inf, hi]`.
    pub fn below(hi: f64, hi_closed: bool) -> Self {
        Interval::new(f64::NEG_INFINITY, hi, false, hi_closed).expect("ray")
    }

    /// `(lo, +inf)` or `[lo, +inf)`.
    pub fn above(lo: f64, lo_closed: bool) -> Self {
        Interval::new(lo, f64::INFINITY, lo_closed, false).expect("ray")
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn lo_closed(&self) -> bool {
        self.lo_closed
    }

    pub fn hi_closed(&self) -> bool {
        self.hi_closed
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        let above_lo = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below_hi = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above_lo && below_hi
    }

    /// Interval intersection, ignoring endpoint flags when the overlap has
    /// positive length (flags only matter for the degenerate point case).
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo > hi {
            return None;
        }
        let lo_closed = if self.lo >= other.lo { self.lo_closed } else { other.lo_closed };
        let hi_closed = if self.hi <= other.hi { self.hi_closed } else { other.hi_closed };
        if lo == hi && !(lo_closed && hi_closed) {
            return None;
        }
        Some(Interval { lo, hi, lo_closed, hi_closed })
    }

    /// Length of the overlap with `other`, zero if disjoint.
    pub fn overlap_length(&self, other: &Interval) -> f64 {
        (self.hi.min(other.hi) - self.lo.max(other.lo)).max(0.0)
    }
}

#[derive(Serialize, Deserialize)]
struct IntervalRepr {
    lower: Endpoint,
    upper: Endpoint,
    #[serde(default)]
    lower_closed: bool,
    #[serde(default)]
    upper_closed: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Num(f64),
    Sym(String),
}

impl Endpoint {
    fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Endpoint::Num(v) if v.is_finite() => Ok(*v),
            Endpoint::Num(v) => Err(format!("non-finite numeric endpoint {v}")),
            Endpoint::Sym(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(format!("unknown endpoint sentinel {other:?}")),
            },
        }
    }

    fn from_value(v: f64) -> Self {
        if v == f64::INFINITY {
            Endpoint::Sym("inf".into())
        } else if v == f64::NEG_INFINITY {
            Endpoint::Sym("-inf".into())
        } else {
            Endpoint::Num(v)
        }
    }
}

impl TryFrom<IntervalRepr> for Interval {
    type Error = String;

    fn try_from(r: IntervalRepr) -> std::result::Result<Self, String> {
        Interval::new(r.lower.value()?, r.upper.value()?, r.lower_closed, r.upper_closed)
            .map_err(|e| e.to_string())
    }
}

impl From<Interval> for IntervalRepr {
    fn from(iv: Interval) -> Self {
        IntervalRepr {
            lower: Endpoint::from_value(iv.lo),
            upper: Endpoint::from_value(iv.hi),
            lower_closed: iv.lo_closed,
            upper_closed: iv.hi_closed,
        }
    }
}

/// Axis-aligned box: one interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub dims: Vec<Interval>,
}

impl AxisBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        AxisBox { dims }
    }

    /// The closed unit-style box `[lo, hi]^d`.
    pub fn cube(lo: f64, hi: f64, d: usize) -> Self {
        AxisBox { dims: vec![Interval::closed(lo, hi); d] }
    }

    /// Closed box from per-dimension `(lo, hi)` pairs.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Self {
        AxisBox { dims: bounds.iter().map(|&(a, b)| Interval::closed(a, b)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn is_finite(&self) -> bool {
        self.dims.iter().all(Interval::is_finite)
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().map(Interval::length).product()
    }

    pub fn contains(&self, p: &Point) -> Result<bool> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.dim() });
        }
        Ok(self.dims.iter().zip(p.coords()).all(|(iv, &x)| iv.contains(x)))
    }

    pub fn intersect(&self, other: &AxisBox) -> Option<AxisBox> {
        if self.dim() != other.dim() {
            return None;
        }
        let dims: Option<Vec<_>> = self
            .dims
            .iter()
            .zip(&other.dims)
            .map(|(a, b)| a.intersect(b))
            .collect();
        dims.map(AxisBox::new)
    }

    /// Volume of the overlap with `other` (endpoint flags ignored).
    pub fn overlap_volume(&self, other: &AxisBox) -> f64 {
        self.dims
            .iter()
            .zip(&other.dims)
            .map(|(a, b)| a.overlap_length(b))
            .product()
    }

    pub fn center(&self) -> Point {
        Point(self.dims.iter().map(|iv| 0.5 * (iv.lo + iv.hi)).collect())
    }

    /// Euclidean distance from `p` to the closure of the box.
    pub fn distance_to(&self, p: &Point) -> f64 {
        self.dims
            .iter()
            .zip(p.coords())
            .map(|(iv, &x)| {
                let d = if x < iv.lo {
                    iv.lo - x
                } else if x > iv.hi {
                    x - iv.hi
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Closest point of the closed box to `p`.
    pub fn project(&self, p: &Point) -> Point {
        Point(
            self.dims
                .iter()
                .zip(p.coords())
                .map(|(iv, &x)| x.clamp(iv.lo, iv.hi))
                .collect(),
        )
    }
}

/// Sorted set of feature indices (0-based), `S ⊆ {0, ..., d-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset(Vec<usize>);

impl FeatureSubset {
    pub fn new(mut indices: Vec<usize>, d: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&max) = indices.last() {
            if max >= d {
                return Err(Error::InvalidInput(format!(
                    "feature index {max} out of range for d={d}"
                )));
            }
        }
        Ok(FeatureSubset(indices))
    }

    pub fn empty() -> Self {
        FeatureSubset(Vec::new())
    }

    pub fn full(d: usize) -> Self {
        FeatureSubset((0..d).collect())
    }

    /// Subset encoded by the low bits of `mask`.
    pub fn from_mask(mask: usize, d: usize) -> Self {
        FeatureSubset((0..d).filter(|j| mask >> j & 1 == 1).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }
}

/// Rectangular grid over a finite bounding box with per-dimension interior
/// cuts. Cells are half-open (lower closed, upper open), the topmost cell in
/// each dimension is closed, so every point of the box lies in exactly one
/// cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    bounding_box: AxisBox,
    cuts: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(bounding_box: AxisBox, cuts: Vec<Vec<f64>>) -> Result<Self> {
        if !bounding_box.is_finite() {
            return Err(Error::InvalidInput("grid bounding box must be finite".into()));
        }
        if cuts.len() != bounding_box.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounding_box.dim(),
                got: cuts.len(),
            });
        }
        for (j, (c, iv)) in cuts.iter().zip(&bounding_box.dims).enumerate() {
            for w in c.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidInput(format!(
                        "cuts in dimension {j} not strictly increasing"
                    )));
                }
            }
            if c.iter().any(|&t| t <= iv.lo() || t >= iv.hi()) {
                return Err(Error::InvalidInput(format!(
                    "cut outside the interior of dimension {j}"
                )));
            }
        }
        Ok(Grid { bounding_box, cuts })
    }

    /// Equidistant `k^d` grid on the given box.
    pub fn equidistant(bounding_box: AxisBox, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        let cuts = bounding_box
            .dims
            .iter()
            .map(|iv| {
                (1..k)
                    .map(|i| iv.lo() + iv.length() * i as f64 / k as f64)
                    .collect()
            })
            .collect();
        Grid::new(bounding_box, cuts)
    }

    pub fn dim(&self) -> usize {
        self.bounding_box.dim()
    }

    pub fn bounding_box(&self) -> &AxisBox {
        &self.bounding_box
    }

    pub fn cuts(&self) -> &[Vec<f64>] {
        &self.cuts
    }

    /// Number of cells along dimension `j`.
    pub fn cells_along(&self, j: usize) -> usize {
        self.cuts[j].len() + 1
    }

    pub fn cell_count(&self) -> usize {
        (0..self.dim()).map(|j| self.cells_along(j)).product()
    }

    /// Multi-index of the cell containing `p`. Points exactly on a cut belong
    /// to the upper side; the topmost cell also owns the upper boundary.
    pub fn cell_index(&self, p: &Point) -> Result<Vec<usize>> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.dim() });
        }
        if !self.bounding_box.contains(p)? {
            return Err(Error::OutsideDomain(format!(
                "point {:?} outside grid bounding box",
                p.coords()
            )));
        }
        Ok(self
            .cuts
            .iter()
            .zip(p.coords())
            .map(|(c, &x)| c.partition_point(|&t| t <= x))
            .collect())
    }

    /// Flat row-major index of a cell multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (j, &i) in idx.iter().enumerate() {
            flat = flat * self.cells_along(j) + i;
        }
        flat
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let d = self.dim();
        let mut idx = vec![0; d];
        for j in (0..d).rev() {
            let k = self.cells_along(j);
            idx[j] = flat % k;
            flat /= k;
        }
        idx
    }

    /// The closed region of a cell (endpoint ownership is a measure-zero
    /// detail that box-mass computations may ignore).
    pub fn cell_box(&self, idx: &[usize]) -> AxisBox {
        let dims = idx
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let edges = self.edges(j);
                Interval::closed(edges[i], edges[i + 1])
            })
            .collect();
        AxisBox::new(dims)
    }

    /// Cell edge coordinates along dimension `j`: `lo, cuts..., hi`.
    pub fn edges(&self, j: usize) -> Vec<f64> {
        let iv = &self.bounding_box.dims[j];
        let mut e = Vec::with_capacity(self.cuts[j].len() + 2);
        e.push(iv.lo());
        e.extend_from_slice(&self.cuts[j]);
        e.push(iv.hi());
        e
    }

    /// Iterate all cell multi-indices in row-major order.
    pub fn cell_indices(&self) -> Vec<Vec<usize>> {
        (0..self.cell_count()).map(|f| self.multi_index(f)).collect()
    }
}

/// Sampling distribution over the data space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform distribution over a finite box of positive volume.
    UniformBox { #[serde(rename = "box")] support: AxisBox },
    /// Uniform distribution on the diagonal `{x in box | x^(1) = ... = x^(d)}`.
    DiagonalSegment { #[serde(rename = "box")] support: AxisBox },
}

impl Distribution {
    pub fn uniform(support: AxisBox) -> Result<Self> {
        if !support.is_finite() || support.volume() <= 0.0 {
            return Err(Error::InvalidInput(
                "uniform box must be finite with positive volume".into(),
            ));
        }
        Ok(Distribution::UniformBox { support })
    }

    pub fn diagonal(support: AxisBox) -> Result<Self> {
        if !support.is_finite() {
            return Err(Error::InvalidInput("diagonal segment box must be finite".into()));
        }
        let (lo, hi) = Self::diagonal_range(&support);
        if lo >= hi {
            return Err(Error::InvalidInput(
                "diagonal segment must have positive length".into(),
            ));
        }
        Ok(Distribution::DiagonalSegment { support })
    }

    fn diagonal_range(support: &AxisBox) -> (f64, f64) {
        let lo = support.dims.iter().map(Interval::lo).fold(f64::NEG_INFINITY, f64::max);
        let hi = support.dims.iter().map(Interval::hi).fold(f64::INFINITY, f64::min);
        (lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.support().dim()
    }

    pub fn support(&self) -> &AxisBox {
        match self {
            Distribution::UniformBox { support } | Distribution::DiagonalSegment { support } => {
                support
            }
        }
    }

    /// Exact probability mass of an axis-aligned box.
    pub fn box_mass(&self, query: &AxisBox) -> Result<f64> {
        if query.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: query.dim() });
        }
        match self {
            Distribution::UniformBox { support } => {
                Ok(support.overlap_volume(query) / support.volume())
            }
            Distribution::DiagonalSegment { support } => {
                let (lo, hi) = Self::diagonal_range(support);
                let (mut qlo, mut qhi) = (lo, hi);
                for iv in &query.dims {
                    qlo = qlo.max(iv.lo());
                    qhi = qhi.min(iv.hi());
                }
                Ok(((qhi - qlo).max(0.0) / (hi - lo)).min(1.0))
            }
        }
    }

    /// Marginal interval of coordinate `j` under the distribution.
    pub fn marginal(&self, j: usize) -> Interval {
        match self {
            Distribution::UniformBox { support } => support.dims[j].clone(),
            Distribution::DiagonalSegment { support } => {
                let (lo, hi) = Self::diagonal_range(support);
                Interval::closed(lo, hi)
            }
        }
    }

    /// `n` i.i.d. draws, deterministic in `(self, n, seed)`.
    pub fn sample_points(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_rng(n, &mut rng)
    }

    pub fn sample_with_rng<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> Point {
        match self {
            Distribution::UniformBox { support } => Point(
                support
                    .dims
                    .iter()
                    .map(|iv| iv.lo() + rng.gen::<f64>() * iv.length())
                    .collect(),
            ),
            Distribution::DiagonalSegment { support } => {
                let (lo, hi) = Self::diagonal_range(support);
                let t = lo + rng.gen::<f64>() * (hi - lo);
                Point(vec![t; support.dim()])
            }
        }
    }

    /// Sample one point conditioned on an axis-aligned region of positive mass.
    pub fn sample_in_box<R: Rng>(&self, region: &AxisBox, rng: &mut R) -> Result<Point> {
        if self.box_mass(region)? <= 0.0 {
            return Err(Error::ZeroMass(format!("region {region:?}")));
        }
        match self {
            Distribution::UniformBox { support } => {
                let inter = support
                    .intersect(region)
                    .ok_or_else(|| Error::ZeroMass("empty intersection".into()))?;
                let u = Distribution::UniformBox { support: inter };
                Ok(u.sample_one(rng))
            }
            Distribution::DiagonalSegment { support } => {
                let (lo, hi) = Self::diagonal_range(support);
                let (mut qlo, mut qhi) = (lo, hi);
                for iv in &region.dims {
                    qlo = qlo.max(iv.lo());
                    qhi = qhi.min(iv.hi());
                }
                let t = qlo + rng.gen::<f64>() * (qhi - qlo);
                Ok(Point(vec![t; support.dim()]))
            }
        }
    }
}

/// Deterministic per-trial RNG stream. Trials with the same master seed use
/// disjoint ChaCha streams, so estimator results do not depend on scheduling.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial.wrapping_add(1));
    rng
}
