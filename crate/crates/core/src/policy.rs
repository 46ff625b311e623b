//! Safety stock and base-stock levels.
//!
//! Normal model: `S_s = z_α σ √(L+R)`.
//! KDE model: `S_s = Q_α(D_{L+R}) − (L+R)·E[D]`, with the quantile taken from
//! Monte Carlo horizon sums and the expectation from the PMF mean.
//! Both are floored at zero. The order-up-to level is
//! `S = S_s + 2 C_s + I_s` with `C_s = μR/2` and `I_s = μL`.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::demand_model::{horizon_sum_quantile, DemandModel, ModelError, MIN_HORIZON_SAMPLES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("service level {0} must lie strictly inside (0, 1)")]
    OpenLevel(f64),
    #[error("service level {0} outside [0, 1]")]
    Level(f64),
    #[error("lead time and review period must be at least 1 week")]
    Periods,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Inverse standard normal CDF.
pub fn z_quantile(alpha: f64) -> Result<f64, PolicyError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PolicyError::OpenLevel(alpha));
    }
    Ok(Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    pub alpha: f64,
    pub lead_time: u32,
    pub review_period: u32,
    /// Monte Carlo horizon sums used for the KDE quantile.
    pub horizon_samples: usize,
}

impl PolicyParams {
    pub fn new(alpha: f64, lead_time: u32, review_period: u32, horizon_samples: usize) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PolicyError::Level(alpha));
        }
        if lead_time == 0 || review_period == 0 {
            return Err(PolicyError::Periods);
        }
        if horizon_samples < MIN_HORIZON_SAMPLES {
            return Err(ModelError::TooSmall("horizon_samples", MIN_HORIZON_SAMPLES).into());
        }
        Ok(Self {
            alpha,
            lead_time,
            review_period,
            horizon_samples,
        })
    }

    /// Risk horizon L + R in periods.
    pub fn horizon(&self) -> u32 {
        self.lead_time + self.review_period
    }

    pub fn z(&self) -> Result<f64, PolicyError> {
        z_quantile(self.alpha)
    }
}

/// Safety stock in units for `model` at `params`.
///
/// `rng` is only consumed by the KDE branch. At α = 0 both branches return 0;
/// the normal branch rejects α = 1.
pub fn safety_stock<R: Rng + ?Sized>(
    model: &DemandModel,
    params: &PolicyParams,
    rng: &mut R,
) -> Result<f64, PolicyError> {
    let horizon = params.horizon();
    let ss = match model {
        DemandModel::Normal(p) => {
            if params.alpha == 0.0 || p.is_degenerate() {
                return Ok(0.0);
            }
            params.z()? * p.std_dev * f64::from(horizon).sqrt()
        }
        DemandModel::Kde(pmf) => {
            let q = horizon_sum_quantile(model, horizon, params.alpha, params.horizon_samples, rng)?;
            q as f64 - f64::from(horizon) * pmf.mean()
        }
    };
    Ok(ss.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StockLevels {
    pub safety_stock: f64,
    /// C_s = μR/2
    pub cycle_stock: f64,
    /// I_s = μL
    pub in_transit: f64,
    /// S_s + 2 C_s + I_s at full precision.
    pub base_stock_exact: f64,
    /// Order-up-to level in whole units (ceiling of the exact level).
    pub base_stock: u64,
}

pub fn base_stock(safety_stock: f64, mean: f64, lead_time: u32, review_period: u32) -> StockLevels {
    let safety_stock = safety_stock.max(0.0);
    let mean = mean.max(0.0);
    let cycle_stock = 0.5 * mean * f64::from(review_period);
    let in_transit = mean * f64::from(lead_time);
    let exact = safety_stock + 2.0 * cycle_stock + in_transit;
    // Guard the ceiling against representation noise such as 233.00000000000003.
    let rounded = exact.round();
    let base = if (exact - rounded).abs() < 1e-9 { rounded } else { exact.ceil() };
    StockLevels {
        safety_stock,
        cycle_stock,
        in_transit,
        base_stock_exact: exact,
        base_stock: base as u64,
    }
}
