//! Normality and variance-homogeneity tests used for the descriptive report.
//!
//! * Shapiro-Wilk W with Royston's AS R94 coefficients and p-value.
//! * D'Agostino-Pearson K² (skewness and kurtosis z-scores, chi-square 2 df).
//! * Anderson-Darling A² against a normal with estimated mean and variance,
//!   using the modified statistic `A²(1 + 0.75/n + 2.25/n²)` and its 5%
//!   critical value 0.752.
//! * Brown-Forsythe: one-way ANOVA F on absolute deviations from group medians.
//!
//! All tests decide at the 5% level.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};
use thiserror::Error;

use crate::ingest::ValidatedDataset;
use crate::par;

pub const SIGNIFICANCE: f64 = 0.05;

/// 5% critical value of the modified Anderson-Darling statistic, normal case
/// with both parameters estimated.
pub const AD_CRITICAL_5PCT: f64 = 0.752;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("{test}: sample size {n} outside [{min}, {max}]")]
    SampleSize {
        test: &'static str,
        n: usize,
        min: usize,
        max: usize,
    },
    #[error("{test}: sample has zero variance, statistic undefined")]
    ZeroVariance { test: &'static str },
    #[error("{test}: sample contains non-finite values")]
    NonFinite { test: &'static str },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub test_name: &'static str,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub critical_value_5pct: Option<f64>,
    pub reject_h0: bool,
}

impl TestResult {
    /// Recomputes the decision from the stored statistic and threshold.
    pub fn decision(&self) -> bool {
        match (self.p_value, self.critical_value_5pct) {
            (Some(p), _) => p < SIGNIFICANCE,
            (None, Some(c)) => self.statistic >= c,
            (None, None) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceTestResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub medians: [f64; 2],
    /// Mean absolute deviation from the group median, per group.
    pub mean_abs_dev: [f64; 2],
    pub group_sizes: [usize; 2],
    pub total: usize,
    pub reject_h0: bool,
}

impl VarianceTestResult {
    pub fn degrees_of_freedom(&self) -> (usize, usize) {
        (1, self.total - 2)
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn check_sample(test: &'static str, x: &[f64], min: usize, max: usize) -> Result<(), StatsError> {
    if x.len() < min || x.len() > max {
        return Err(StatsError::SampleSize {
            test,
            n: x.len(),
            min,
            max,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { test });
    }
    let first = x[0];
    if x.iter().all(|v| *v == first) {
        return Err(StatsError::ZeroVariance { test });
    }
    Ok(())
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    y.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    y
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Shapiro-Wilk test, valid for 3 ≤ n ≤ 5000.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestResult, StatsError> {
    const NAME: &str = "shapiro_wilk";
    check_sample(NAME, sample, 3, 5000)?;
    let n = sample.len();
    let x = sorted(sample);
    // Shift by the median element to limit cancellation; W is location free.
    let shift = x[n / 2];
    let x: Vec<f64> = x.iter().map(|v| v - shift).collect();
    let range = x[n - 1] - x[0];
    if range < 1e-19 {
        return Err(StatsError::ZeroVariance { test: NAME });
    }

    let coef = shapiro_coefficients(n);
    let (w, p) = shapiro_statistic(&x, &coef, range);
    Ok(TestResult {
        test_name: NAME,
        statistic: w,
        p_value: Some(p),
        critical_value_5pct: None,
        reject_h0: p < SIGNIFICANCE,
    })
}

/// Antisymmetric weights a_1..a_{n/2} (positive, largest first).
fn shapiro_coefficients(n: usize) -> Vec<f64> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];

    let half = n / 2;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = 0.5f64.sqrt();
        return a;
    }
    let an = n as f64;
    let an25 = an + 0.25;
    let norm = std_normal();
    let m: Vec<f64> = (1..=half)
        .map(|i| norm.inverse_cdf((i as f64 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let (start, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    a[0] = a1;
    for i in start..half {
        a[i] = -m[i] / fac;
    }
    a
}

fn shapiro_statistic(x: &[f64], a: &[f64], range: f64) -> (f64, f64) {
    const SMALL: f64 = 1e-19;
    const G: [f64; 2] = [-2.273, 0.459];
    const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

    let n = x.len();
    let an = n as f64;
    // Full coefficient vector: -a for the lower half, +a (mirrored) for the upper.
    let coef = |i: usize| -> f64 {
        let j = n - 1 - i;
        if i < j {
            -a[i]
        } else if i > j {
            a[j]
        } else {
            0.0
        }
    };

    let xs: Vec<f64> = x.iter().map(|v| v / range).collect();
    let sx = xs.iter().sum::<f64>() / an;
    let sa = (0..n).map(coef).sum::<f64>() / an;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, xi) in xs.iter().enumerate() {
        let asa = coef(i) - sa;
        let xsx = xi - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    if n == 3 {
        const PI6: f64 = 6.0 / PI;
        const STQR: f64 = PI / 3.0;
        let p = (PI6 * (w.sqrt().asin() - STQR)).max(0.0);
        return (w, p);
    }

    let mut y = w1.ln();
    let lxx = an.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return (w, SMALL);
        }
        y = -(gamma - y).ln();
        (poly(&C3, an), poly(&C4, an).exp())
    } else {
        (poly(&C5, lxx), poly(&C6, lxx).exp())
    };
    (w, std_normal().sf((y - m) / s))
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let mu = mean(x);
    let n = x.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

fn skew_z(g1: f64, n: f64) -> f64 {
    let y = g1 * (((n + 1.0) * (n + 3.0)) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    delta * (y / alpha + ((y / alpha).powi(2) + 1.0).sqrt()).ln()
}

fn kurtosis_z(b2: f64, n: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * ((6.0 * (n + 3.0) * (n + 5.0)) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

/// Smallest sample accepted by the K² omnibus test (the skewness transform
/// needs n ≥ 8). The kurtosis approximation is rough below n = 20.
pub const DAGOSTINO_MIN_N: usize = 8;

/// D'Agostino-Pearson K² omnibus test.
pub fn dagostino_k2(sample: &[f64]) -> Result<TestResult, StatsError> {
    const NAME: &str = "dagostino_k2";
    check_sample(NAME, sample, DAGOSTINO_MIN_N, usize::MAX)?;
    let (m2, m3, m4) = central_moments(sample);
    if m2 <= 0.0 {
        return Err(StatsError::ZeroVariance { test: NAME });
    }
    let n = sample.len() as f64;
    let g1 = m3 / m2.powf(1.5);
    let b2 = m4 / (m2 * m2);
    let zs = skew_z(g1, n);
    let zk = kurtosis_z(b2, n);
    let k2 = zs * zs + zk * zk;
    // Chi-square survival with 2 degrees of freedom.
    let p = (-k2 / 2.0).exp();
    Ok(TestResult {
        test_name: NAME,
        statistic: k2,
        p_value: Some(p),
        critical_value_5pct: None,
        reject_h0: p < SIGNIFICANCE,
    })
}

/// Raw Anderson-Darling A² against N(x̄, s²) with s the n−1 standard deviation.
pub fn anderson_darling_raw(sample: &[f64]) -> Result<f64, StatsError> {
    const NAME: &str = "anderson_darling";
    check_sample(NAME, sample, 8, usize::MAX)?;
    let n = sample.len();
    let y = sorted(sample);
    let mu = mean(&y);
    let s = (y.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    if s <= 0.0 {
        return Err(StatsError::ZeroVariance { test: NAME });
    }
    let norm = std_normal();
    let w: Vec<f64> = y.iter().map(|v| (v - mu) / s).collect();
    let log_cdf = |z: f64| norm.cdf(z).ln();
    let log_sf = |z: f64| norm.sf(z).ln();
    let nf = n as f64;
    let sum: f64 = (0..n)
        .map(|i| {
            let k = (2 * i + 1) as f64 / nf;
            k * (log_cdf(w[i]) + log_sf(w[n - 1 - i]))
        })
        .sum();
    Ok(-nf - sum)
}

/// Anderson-Darling normality test with the small-sample modification.
pub fn anderson_darling(sample: &[f64]) -> Result<TestResult, StatsError> {
    let a2 = anderson_darling_raw(sample)?;
    let n = sample.len() as f64;
    let adjusted = a2 * (1.0 + 0.75 / n + 2.25 / (n * n));
    Ok(TestResult {
        test_name: "anderson_darling",
        statistic: adjusted,
        p_value: None,
        critical_value_5pct: Some(AD_CRITICAL_5PCT),
        reject_h0: adjusted >= AD_CRITICAL_5PCT,
    })
}

fn median(x: &[f64]) -> f64 {
    let y = sorted(x);
    let n = y.len();
    if n % 2 == 1 {
        y[n / 2]
    } else {
        (y[n / 2 - 1] + y[n / 2]) / 2.0
    }
}

/// Brown-Forsythe test for equal variances of two groups.
pub fn brown_forsythe(group_a: &[f64], group_b: &[f64]) -> Result<VarianceTestResult, StatsError> {
    const NAME: &str = "brown_forsythe";
    for g in [group_a, group_b] {
        if g.len() < 2 {
            return Err(StatsError::SampleSize {
                test: NAME,
                n: g.len(),
                min: 2,
                max: usize::MAX,
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { test: NAME });
        }
    }
    let groups = [group_a, group_b];
    let medians = groups.map(median);
    let z: [Vec<f64>; 2] = [0, 1].map(|g| groups[g].iter().map(|v| (v - medians[g]).abs()).collect());
    let zbar_g = [mean(&z[0]), mean(&z[1])];
    let sizes = [group_a.len(), group_b.len()];
    let total = sizes[0] + sizes[1];
    let zbar = (z[0].iter().sum::<f64>() + z[1].iter().sum::<f64>()) / total as f64;

    let between: f64 = (0..2)
        .map(|g| sizes[g] as f64 * (zbar_g[g] - zbar).powi(2))
        .sum();
    let within: f64 = (0..2)
        .map(|g| z[g].iter().map(|v| (v - zbar_g[g]).powi(2)).sum::<f64>())
        .sum();
    let k = 2.0;
    let nf = total as f64;
    let (f, p) = if between == 0.0 {
        (0.0, 1.0)
    } else if within == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (nf - k) * between / ((k - 1.0) * within);
        let dist = FisherSnedecor::new(k - 1.0, nf - k).expect("valid F degrees of freedom");
        (f, dist.sf(f))
    };
    Ok(VarianceTestResult {
        f_statistic: f,
        p_value: p,
        medians,
        mean_abs_dev: zbar_g,
        group_sizes: sizes,
        total,
        reject_h0: p < SIGNIFICANCE,
    })
}

/// One row of the normality table: the three tests on an item's history.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityRow {
    pub item_id: String,
    pub shapiro: Result<TestResult, StatsError>,
    pub dagostino: Result<TestResult, StatsError>,
    pub anderson: Result<TestResult, StatsError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub item_id: String,
    pub result: Result<VarianceTestResult, StatsError>,
}

fn as_f64(v: &[u64]) -> Vec<f64> {
    v.iter().map(|&q| q as f64).collect()
}

/// Runs the three normality tests on every item's demand history.
pub fn normality_report(dataset: &ValidatedDataset) -> Vec<NormalityRow> {
    let items: Vec<_> = dataset.items.values().collect();
    par::map_ordered(&items, |d| {
        let x = as_f64(&d.history.values);
        NormalityRow {
            item_id: d.record.item_id.clone(),
            shapiro: shapiro_wilk(&x),
            dagostino: dagostino_k2(&x),
            anderson: anderson_darling(&x),
        }
    })
}

/// Brown-Forsythe test of history against forecast for every item.
pub fn variance_report(dataset: &ValidatedDataset) -> Vec<VarianceRow> {
    let items: Vec<_> = dataset.items.values().collect();
    par::map_ordered(&items, |d| VarianceRow {
        item_id: d.record.item_id.clone(),
        result: brown_forsythe(&as_f64(&d.history.values), &as_f64(&d.forecast.values)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_is_zero_variance() {
        assert_eq!(
            shapiro_wilk(&[5.0, 5.0, 5.0]),
            Err(StatsError::ZeroVariance { test: "shapiro_wilk" })
        );
        assert!(matches!(dagostino_k2(&[2.0; 30]), Err(StatsError::ZeroVariance { .. })));
        assert!(matches!(anderson_darling(&[2.0; 30]), Err(StatsError::ZeroVariance { .. })));
    }

    #[test]
    fn sample_size_bounds() {
        assert!(matches!(shapiro_wilk(&[1.0, 2.0]), Err(StatsError::SampleSize { .. })));
        assert!(matches!(shapiro_wilk(&vec![1.0; 5001]), Err(StatsError::SampleSize { .. })));
        assert!(matches!(dagostino_k2(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]), Err(StatsError::SampleSize { .. })));
        assert!(matches!(anderson_darling(&[1.0, 2.0, 3.0]), Err(StatsError::SampleSize { .. })));
        assert!(matches!(brown_forsythe(&[1.0], &[1.0, 2.0]), Err(StatsError::SampleSize { .. })));
    }

    #[test]
    fn shapiro_n3_exact() {
        // Equally spaced triple: W = 1 and p = 1.
        let r = shapiro_wilk(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.statistic - 1.0).abs() < 1e-12);
        assert!((r.p_value.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn anderson_critical_value_in_published_range() {
        let x: Vec<f64> = (0..52).map(|i| ((i * 37) % 52) as f64).collect();
        let r = anderson_darling(&x).unwrap();
        let c = r.critical_value_5pct.unwrap();
        assert!((0.74..=0.77).contains(&c));
        assert_eq!(r.decision(), r.reject_h0);
    }

    #[test]
    fn brown_forsythe_identical_groups() {
        let a = [3.0, 7.0, 1.0, 9.0, 4.0];
        let r = brown_forsythe(&a, &a).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        assert!(!r.reject_h0);
        assert_eq!(r.degrees_of_freedom(), (1, 8));
    }

    #[test]
    fn brown_forsythe_constant_groups() {
        let r = brown_forsythe(&[4.0, 4.0, 4.0], &[4.0, 4.0]).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn brown_forsythe_shift_invariant() {
        let a = [3.0, 7.0, 1.0, 9.0, 4.0, 12.0];
        let b = [2.0, 2.5, 3.0, 8.0];
        let base = brown_forsythe(&a, &b).unwrap();
        let shifted: Vec<f64> = b.iter().map(|v| v + 100.0).collect();
        let moved = brown_forsythe(&a, &shifted).unwrap();
        assert!((base.f_statistic - moved.f_statistic).abs() < 1e-9);
    }

    #[test]
    fn hand_computed_brown_forsythe() {
        // medians 2 and 5; z = {1,0,1} and {3,0,3}; zbar_g = 2/3, 2; zbar = 4/3.
        // between = 3(4/9) + 3(4/9) = 8/3; within = 2/3 + 6 = 20/3; F = 4 * (8/3) / (20/3) = 1.6
        let r = brown_forsythe(&[1.0, 2.0, 3.0], &[2.0, 5.0, 8.0]).unwrap();
        assert!((r.f_statistic - 1.6).abs() < 1e-12);
        assert_eq!(r.medians, [2.0, 5.0]);
    }
}
