//! Seeded synthetic dataset of right-skewed items.
//!
//! Weekly demand is an integerized lognormal. The forecast keeps the history's
//! mean but with half its log-scale spread, the way a planning forecast is
//! smoother than the demand it predicts.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use crate::ingest::{
    validate_dataset, write_dataset, DemandSeries, ItemClass, ItemRecord, LengthRules, SeriesKind,
    ValidatedDataset,
};
use crate::seed::{rng_from, SeedPart};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOptions {
    pub items: usize,
    pub seed: u64,
    pub history_len: usize,
    pub forecast_len: usize,
    /// Items `1..=class_a_items` are class A, the rest class B.
    pub class_a_items: usize,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            items: 20,
            seed: 7,
            history_len: 52,
            forecast_len: 13,
            class_a_items: 10,
        }
    }
}

pub fn item_id(index: usize) -> String {
    format!("item_{index}")
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn draw<R: Rng>(rng: &mut R, median: f64, shape: f64, count: usize) -> Vec<u64> {
    let dist = LogNormal::new(median.ln(), shape).expect("finite parameters");
    (0..count).map(|_| dist.sample(rng).round() as u64).collect()
}

/// Item records plus history and forecast series, in item order.
pub fn generate(opts: &SyntheticOptions) -> (Vec<ItemRecord>, Vec<DemandSeries>, Vec<DemandSeries>) {
    let mut records = Vec::with_capacity(opts.items);
    let mut histories = Vec::with_capacity(opts.items);
    let mut forecasts = Vec::with_capacity(opts.items);
    for i in 1..=opts.items {
        let mut rng = rng_from(opts.seed, &[SeedPart::Str("synthetic"), SeedPart::Int(i as u64)]);
        let id = item_id(i);
        let median = log_uniform(&mut rng, 20.0, 400.0);
        let shape: f64 = rng.gen_range(0.5..1.1);
        let forecast_shape = 0.5 * shape;
        let mean = median * (0.5 * shape * shape).exp();
        let forecast_median = mean / (0.5 * forecast_shape * forecast_shape).exp();
        let lead_time_weeks = rng.gen_range(1..=6);
        let review_period_weeks = rng.gen_range(1..=2);
        let unit_cost = (log_uniform(&mut rng, 15.0, 600.0) * 100.0).round() / 100.0;
        histories.push(DemandSeries {
            item_id: id.clone(),
            kind: SeriesKind::History,
            values: draw(&mut rng, median, shape, opts.history_len),
        });
        forecasts.push(DemandSeries {
            item_id: id.clone(),
            kind: SeriesKind::Forecast,
            values: draw(&mut rng, forecast_median, forecast_shape, opts.forecast_len),
        });
        records.push(ItemRecord {
            item_id: id,
            class: if i <= opts.class_a_items { ItemClass::A } else { ItemClass::B },
            lead_time_weeks,
            review_period_weeks,
            unit_cost,
            weight: None,
        });
    }
    (records, histories, forecasts)
}

pub fn generate_dataset(opts: &SyntheticOptions) -> ValidatedDataset {
    let (records, histories, forecasts) = generate(opts);
    validate_dataset(
        records,
        histories,
        forecasts,
        LengthRules {
            history_len: opts.history_len,
            forecast_len: opts.forecast_len,
            strict: true,
        },
    )
    .expect("synthetic data is valid")
}

pub const CONFIG_TOML: &str = r#"# Synthetic 20-item dataset: weekly integerized lognormal demand.
demand_history = "demand_history.csv"
forecast = "forecast.csv"
item_master = "item_master.csv"
service_level_grid = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]
sim_periods = 1000
base_seed = 20240601
horizon_samples = 10000
normal_sigma_source = "historical"
demand_stream_mode = "own_model"

[wsl_target]
A = 0.95
B = 0.90
"#;

/// Writes the three input tables and a `config.toml` into `dir`.
pub fn write_bundle(dir: &Path, opts: &SyntheticOptions) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let ds = generate_dataset(opts);
    write_dataset(
        &ds,
        &dir.join("demand_history.csv"),
        &dir.join("forecast.csv"),
        &dir.join("item_master.csv"),
    )?;
    std::fs::write(dir.join("config.toml"), CONFIG_TOML)
}
