//! Per-item demand models.
//!
//! The nonparametric model pools history and forecast into one sample, fits a
//! Gaussian KDE with Scott's bandwidth `h = n^(-1/5) σ` and discretizes it to a
//! PMF on nonnegative integers. The normal comparator keeps the combined mean
//! and takes σ from the history (default) or from the pooled sample.

use std::fmt;
use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};
use thiserror::Error;

/// Tolerance on Σp for a PMF.
pub const PMF_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{0} series is empty")]
    EmptySeries(&'static str),
    #[error("need at least 2 observations, found {0}")]
    TooFewPoints(usize),
    #[error("probability level {0} outside [0, 1]")]
    Level(f64),
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("{0} must be at least {1}")]
    TooSmall(&'static str, usize),
}

/// History followed by forecast, with its mean and (n−1) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSeries {
    values: Vec<u64>,
    mean: f64,
    variance: f64,
}

impl CombinedSeries {
    pub fn from_values(values: Vec<u64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptySeries("combined"));
        }
        let (mean, variance) = mean_var(&values);
        Ok(Self {
            values,
            mean,
            variance,
        })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Mean and sample variance (n−1 denominator; 0 for a single point).
pub fn mean_var(values: &[u64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    let var = if values.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Concatenates history and forecast.
pub fn combine(history: &[u64], forecast: &[u64]) -> Result<CombinedSeries, ModelError> {
    if history.is_empty() {
        return Err(ModelError::EmptySeries("history"));
    }
    if forecast.is_empty() {
        return Err(ModelError::EmptySeries("forecast"));
    }
    let mut values = Vec::with_capacity(history.len() + forecast.len());
    values.extend_from_slice(history);
    values.extend_from_slice(forecast);
    CombinedSeries::from_values(values)
}

/// Fitted Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum KdeModel {
    Smooth { points: Vec<f64>, bandwidth: f64 },
    /// Zero-variance sample: Scott's rule gives h = 0, so the model is the
    /// point mass at the constant value.
    PointMass { value: u64 },
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl KdeModel {
    pub fn bandwidth(&self) -> Option<f64> {
        match self {
            KdeModel::Smooth { bandwidth, .. } => Some(*bandwidth),
            KdeModel::PointMass { .. } => None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, KdeModel::PointMass { .. })
    }

    /// Density f̂(x). A point mass has no density; returns 0 off the atom and
    /// infinity on it.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            KdeModel::Smooth { points, bandwidth } => {
                let h = *bandwidth;
                let s: f64 = points
                    .iter()
                    .map(|d| {
                        let u = (x - d) / h;
                        (-0.5 * u * u).exp()
                    })
                    .sum();
                s * INV_SQRT_2PI / (points.len() as f64 * h)
            }
            KdeModel::PointMass { value } => {
                if x == *value as f64 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Distribution function F̂(x).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            KdeModel::Smooth { points, bandwidth } => {
                let unit = NormalDist::new(0.0, 1.0).expect("unit normal");
                points.iter().map(|d| unit.cdf((x - d) / bandwidth)).sum::<f64>() / points.len() as f64
            }
            KdeModel::PointMass { value } => {
                if x >= *value as f64 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Scott's rule bandwidth for `n` points with standard deviation `sigma`.
pub fn scott_bandwidth(n: usize, sigma: f64) -> f64 {
    (n as f64).powf(-0.2) * sigma
}

pub fn fit_kde(series: &CombinedSeries) -> Result<KdeModel, ModelError> {
    if series.len() < 2 {
        return Err(ModelError::TooFewPoints(series.len()));
    }
    let sigma = series.std_dev();
    if sigma == 0.0 {
        return Ok(KdeModel::PointMass {
            value: series.values[0],
        });
    }
    Ok(KdeModel::Smooth {
        points: series.values.iter().map(|&v| v as f64).collect(),
        bandwidth: scott_bandwidth(series.len(), sigma),
    })
}

/// Integer support used for discretization: every integer between the
/// smallest and largest pooled observation.
pub fn support_range(series: &CombinedSeries) -> RangeInclusive<u64> {
    let lo = *series.values.iter().min().expect("nonempty");
    let hi = *series.values.iter().max().expect("nonempty");
    lo..=hi
}

/// Discretizes the KDE onto [`support_range`], normalizing densities to sum
/// to one. When the support starts at zero, the kernel mass below −½ (what
/// would round to negative demand) is added to the zero point before
/// normalizing.
pub fn discretize(kde: &KdeModel, series: &CombinedSeries) -> DemandPmf {
    match kde {
        KdeModel::PointMass { value } => DemandPmf::point_mass(*value),
        KdeModel::Smooth { .. } => {
            let support: Vec<u64> = support_range(series).collect();
            let mut weights: Vec<f64> = support.iter().map(|&x| kde.density(x as f64)).collect();
            if support[0] == 0 {
                weights[0] += kde.cdf(-0.5);
            }
            let total: f64 = weights.iter().sum();
            let probs = weights.iter().map(|w| w / total).collect();
            DemandPmf::new(support, probs).expect("discretized KDE is a valid pmf")
        }
    }
}

/// Discrete demand distribution on nonnegative integers.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandPmf {
    support: Vec<u64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl DemandPmf {
    /// Builds a PMF; support must be strictly increasing, probabilities
    /// nonnegative and summing to one within [`PMF_SUM_TOL`].
    pub fn new(support: Vec<u64>, probs: Vec<f64>) -> Result<Self, ModelError> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(ModelError::InvalidPmf(format!(
                "{} support points for {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if support.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidPmf("support not strictly increasing".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::InvalidPmf("negative or non-finite probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PMF_SUM_TOL {
            return Err(ModelError::InvalidPmf(format!("probabilities sum to {sum}")));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().expect("nonempty") = 1.0;
        Ok(Self {
            support,
            probs,
            cdf,
        })
    }

    pub fn point_mass(value: u64) -> Self {
        Self {
            support: vec![value],
            probs: vec![1.0],
            cdf: vec![1.0],
        }
    }

    pub fn support(&self) -> &[u64] {
        &self.support
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.support.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(x, p)| x as f64 * p).sum()
    }

    pub fn max_support(&self) -> u64 {
        *self.support.last().expect("nonempty")
    }

    /// Smallest support point whose CDF reaches `q`.
    pub fn quantile(&self, q: f64) -> Result<u64, ModelError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(ModelError::Level(q));
        }
        let idx = self.cdf.partition_point(|&c| c < q);
        Ok(self.support[idx.min(self.support.len() - 1)])
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }
}

pub fn pmf_quantile(pmf: &DemandPmf, q: f64) -> Result<u64, ModelError> {
    pmf.quantile(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    Historical,
    Combined,
}

impl fmt::Display for SigmaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaSource::Historical => "historical",
            SigmaSource::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalParams {
    pub mean: f64,
    pub std_dev: f64,
    pub sigma_source: SigmaSource,
}

impl NormalParams {
    pub fn is_degenerate(&self) -> bool {
        self.std_dev == 0.0
    }
}

/// Normal comparator: mean of the pooled series, σ from `sigma_source`.
pub fn fit_normal(
    history: &[u64],
    combined: &CombinedSeries,
    sigma_source: SigmaSource,
) -> Result<NormalParams, ModelError> {
    let std_dev = match sigma_source {
        SigmaSource::Historical => {
            if history.len() < 2 {
                return Err(ModelError::TooFewPoints(history.len()));
            }
            mean_var(history).1.sqrt()
        }
        SigmaSource::Combined => {
            if combined.len() < 2 {
                return Err(ModelError::TooFewPoints(combined.len()));
            }
            combined.std_dev()
        }
    };
    Ok(NormalParams {
        mean: combined.mean(),
        std_dev,
        sigma_source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Kde,
    Normal,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Kde, ModelKind::Normal];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Kde => "kde",
            ModelKind::Normal => "normal",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "kde" => Some(ModelKind::Kde),
            "normal" => Some(ModelKind::Normal),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel {
    Kde(DemandPmf),
    Normal(NormalParams),
}

impl DemandModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            DemandModel::Kde(_) => ModelKind::Kde,
            DemandModel::Normal(_) => ModelKind::Normal,
        }
    }

    /// Mean of a single period's demand as seen by the policy.
    pub fn mean(&self) -> f64 {
        match self {
            DemandModel::Kde(pmf) => pmf.mean(),
            DemandModel::Normal(p) => p.mean,
        }
    }

    fn sampler(&self) -> Sampler<'_> {
        match self {
            DemandModel::Kde(pmf) => Sampler::Pmf(pmf),
            DemandModel::Normal(p) if p.std_dev > 0.0 => {
                Sampler::Normal(Normal::new(p.mean, p.std_dev).expect("finite normal"))
            }
            DemandModel::Normal(p) => Sampler::Constant(p.mean.max(0.0).round() as u64),
        }
    }
}

enum Sampler<'a> {
    Pmf(&'a DemandPmf),
    Normal(Normal<f64>),
    Constant(u64),
}

impl Sampler<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Sampler::Pmf(pmf) => pmf.sample(rng),
            // Negative draws become zero demand; the rest round to units.
            Sampler::Normal(n) => n.sample(rng).max(0.0).round() as u64,
            Sampler::Constant(c) => *c,
        }
    }
}

/// Draws `count` nonnegative integer demands from `model`.
pub fn sample_demand<R: Rng + ?Sized>(model: &DemandModel, rng: &mut R, count: usize) -> Vec<u64> {
    let s = model.sampler();
    (0..count).map(|_| s.draw(rng)).collect()
}

/// Minimum Monte Carlo sample count for [`horizon_sum_quantile`].
pub const MIN_HORIZON_SAMPLES: usize = 1000;

/// Empirical α-quantile of total demand over `horizon` periods, from
/// `n_samples` independent horizon sums.
pub fn horizon_sum_quantile<R: Rng + ?Sized>(
    model: &DemandModel,
    horizon: u32,
    alpha: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<u64, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::Level(alpha));
    }
    if horizon == 0 {
        return Err(ModelError::TooSmall("horizon", 1));
    }
    if n_samples < MIN_HORIZON_SAMPLES {
        return Err(ModelError::TooSmall("n_samples", MIN_HORIZON_SAMPLES));
    }
    let s = model.sampler();
    let mut sums: Vec<u64> = (0..n_samples)
        .map(|_| (0..horizon).map(|_| s.draw(rng)).sum())
        .collect();
    sums.sort_unstable();
    Ok(empirical_quantile(&sums, alpha))
}

/// Smallest value whose empirical CDF reaches `q`, on sorted data.
pub(crate) fn empirical_quantile(sorted: &[u64], q: f64) -> u64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}
