//! Periodic-review, order-up-to, lost-sales simulation.
//!
//! Period 0 initializes on-hand stock to `S − D_0` (floored at zero) and puts
//! an order of `D_0` in the farthest pipeline slot. In each later period the
//! slot-0 arrival is received, demand is served from what is available
//! (unmet demand is lost), the pipeline advances one slot, and on review
//! periods (`t mod R == 0`) an order raises the inventory position back to
//! `S`. A period is a stockout period when on-hand stock ends at zero.
//!
//! An order placed in period `t` is received in period `t + L`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand_model::{
    combine, discretize, fit_kde, fit_normal, sample_demand, CombinedSeries, DemandModel, ModelError,
    ModelKind, SigmaSource,
};
use crate::ingest::{ItemData, ItemRecord, ValidatedDataset};
use crate::par;
use crate::policy::{base_stock, safety_stock, PolicyError, PolicyParams, StockLevels};
use crate::seed::{basis_points, rng_from, SeedPart};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("demand array has {found} periods, expected {expected}")]
    DemandLength { expected: usize, found: usize },
    #[error("simulation of {periods} periods is shorter than one review cycle of {review} periods")]
    TooShort { periods: usize, review: u32 },
    #[error("lead time and review period must be at least 1")]
    Periods,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("cell ({item_id}, {alpha}, {model}): {source}")]
    Cell {
        item_id: String,
        alpha: f64,
        model: ModelKind,
        #[source]
        source: Box<SimError>,
    },
}

/// Which distribution drives the simulated demand of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandStreamMode {
    /// Each cell draws demand from its own model (KDE cells from the PMF,
    /// normal cells from the normal).
    OwnModel,
    /// Every cell of an item faces one shared demand path drawn from the KDE
    /// PMF, so both models are judged against the same demand.
    CommonStream,
}

impl fmt::Display for DemandStreamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandStreamMode::OwnModel => "own_model",
            DemandStreamMode::CommonStream => "common_stream",
        })
    }
}

/// Per-item simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub periods: usize,
    pub review_period: u32,
    pub lead_time: u32,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.lead_time == 0 || self.review_period == 0 {
            return Err(SimError::Periods);
        }
        if self.periods < self.review_period as usize {
            return Err(SimError::TooShort {
                periods: self.periods,
                review: self.review_period,
            });
        }
        Ok(())
    }
}

/// On-hand stock plus the in-transit pipeline; slot `k` arrives in `k + 1`
/// periods.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub on_hand: u64,
    pub pipeline: Vec<u64>,
}

impl SimState {
    pub fn inventory_position(&self) -> u64 {
        self.on_hand + self.pipeline.iter().sum::<u64>()
    }
}

/// Per-period record of a run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimTrace {
    pub on_hand: Vec<u64>,
    pub stockout: Vec<bool>,
    pub arrivals: Vec<u64>,
    /// Order placed in each period (0 outside review periods).
    pub orders: Vec<u64>,
    pub lost_sales: Vec<u64>,
    /// Smallest pipeline slot value seen in each period.
    pub pipeline_min: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimMetrics {
    pub sl_cycle: f64,
    pub sl_period: f64,
    pub safety_stock_units: f64,
    pub safety_stock_value: f64,
    pub stockout_periods: usize,
    pub stockout_cycles: usize,
    pub cycle_count: usize,
}

/// Runs the dynamics and returns the full trace.
pub fn simulate_trace(demand: &[u64], base_stock: u64, config: &SimConfig) -> Result<SimTrace, SimError> {
    config.validate()?;
    if demand.len() != config.periods {
        return Err(SimError::DemandLength {
            expected: config.periods,
            found: demand.len(),
        });
    }
    let lead = config.lead_time as usize;
    let review = config.review_period as usize;
    let t_max = config.periods;
    let mut trace = SimTrace {
        on_hand: Vec::with_capacity(t_max),
        stockout: Vec::with_capacity(t_max),
        arrivals: Vec::with_capacity(t_max),
        orders: Vec::with_capacity(t_max),
        lost_sales: Vec::with_capacity(t_max),
        pipeline_min: Vec::with_capacity(t_max),
    };

    let d0 = demand[0];
    let mut state = SimState {
        on_hand: base_stock.saturating_sub(d0),
        pipeline: vec![0; lead],
    };
    state.pipeline[lead - 1] = d0;
    trace.on_hand.push(state.on_hand);
    trace.stockout.push(state.on_hand == 0);
    trace.arrivals.push(0);
    trace.orders.push(d0);
    trace.lost_sales.push(d0.saturating_sub(base_stock));
    trace.pipeline_min.push(*state.pipeline.iter().min().expect("L >= 1"));

    for (t, &d) in demand.iter().enumerate().skip(1) {
        let arrival = state.pipeline[0];
        let available = state.on_hand + arrival;
        state.on_hand = available.saturating_sub(d);
        state.pipeline.rotate_left(1);
        state.pipeline[lead - 1] = 0;
        let order = if t % review == 0 {
            let q = base_stock.saturating_sub(state.inventory_position());
            state.pipeline[lead - 1] = q;
            q
        } else {
            0
        };
        trace.on_hand.push(state.on_hand);
        trace.stockout.push(state.on_hand == 0);
        trace.arrivals.push(arrival);
        trace.orders.push(order);
        trace.lost_sales.push(d.saturating_sub(available));
        trace.pipeline_min.push(*state.pipeline.iter().min().expect("L >= 1"));
    }
    Ok(trace)
}

/// Cycle and period service levels of a trace. Cycles are the complete
/// review windows `[jR, (j+1)R)`; a trailing partial window is not counted.
pub fn service_levels(trace: &SimTrace, review_period: u32) -> (f64, f64, usize, usize, usize) {
    let t_max = trace.stockout.len();
    let review = review_period as usize;
    let stockout_periods = trace.stockout.iter().filter(|s| **s).count();
    let cycles = t_max / review;
    let stockout_cycles = (0..cycles)
        .filter(|j| trace.stockout[j * review..(j + 1) * review].iter().any(|s| *s))
        .count();
    let sl_period = 1.0 - stockout_periods as f64 / t_max as f64;
    let sl_cycle = 1.0 - stockout_cycles as f64 / cycles as f64;
    (sl_cycle, sl_period, stockout_periods, stockout_cycles, cycles)
}

/// Simulates `demand` against `levels` and reports service and safety-stock value.
pub fn simulate(
    demand: &[u64],
    levels: &StockLevels,
    unit_cost: f64,
    config: &SimConfig,
) -> Result<SimMetrics, SimError> {
    let trace = simulate_trace(demand, levels.base_stock, config)?;
    let (sl_cycle, sl_period, stockout_periods, stockout_cycles, cycle_count) =
        service_levels(&trace, config.review_period);
    Ok(SimMetrics {
        sl_cycle,
        sl_period,
        safety_stock_units: levels.safety_stock,
        safety_stock_value: levels.safety_stock * unit_cost,
        stockout_periods,
        stockout_cycles,
        cycle_count,
    })
}

/// Grid-wide settings shared by every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub periods: usize,
    pub base_seed: u64,
    pub horizon_samples: usize,
    pub demand_stream_mode: DemandStreamMode,
    pub sigma_source: SigmaSource,
}

impl From<&crate::config::RunConfig> for GridConfig {
    fn from(cfg: &crate::config::RunConfig) -> Self {
        Self {
            periods: cfg.sim_periods,
            base_seed: cfg.base_seed,
            horizon_samples: cfg.horizon_samples,
            demand_stream_mode: cfg.demand_stream_mode,
            sigma_source: cfg.normal_sigma_source,
        }
    }
}

/// Both fitted models of one item.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedItem {
    pub record: ItemRecord,
    pub combined: CombinedSeries,
    pub bandwidth: Option<f64>,
    pub kde: DemandModel,
    pub normal: DemandModel,
}

impl FittedItem {
    pub fn model(&self, kind: ModelKind) -> &DemandModel {
        match kind {
            ModelKind::Kde => &self.kde,
            ModelKind::Normal => &self.normal,
        }
    }
}

pub fn fit_item(item: &ItemData, sigma_source: SigmaSource) -> Result<FittedItem, ModelError> {
    let combined = combine(&item.history.values, &item.forecast.values)?;
    let kde = fit_kde(&combined)?;
    let pmf = discretize(&kde, &combined);
    let normal = fit_normal(&item.history.values, &combined, sigma_source)?;
    Ok(FittedItem {
        record: item.record.clone(),
        bandwidth: kde.bandwidth(),
        combined,
        kde: DemandModel::Kde(pmf),
        normal: DemandModel::Normal(normal),
    })
}

/// Fits every item in canonical order.
pub fn fit_dataset(dataset: &ValidatedDataset, sigma_source: SigmaSource) -> Result<Vec<FittedItem>, (String, ModelError)> {
    let items: Vec<&ItemData> = dataset.items.values().collect();
    par::map_ordered(&items, |d| fit_item(d, sigma_source).map_err(|e| (d.record.item_id.clone(), e)))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub item_id: String,
    pub model: ModelKind,
    pub target_sl: f64,
    pub levels_base_stock: u64,
    pub metrics: SimMetrics,
    /// α_ik: realized cycle service level.
    pub realized_alpha: f64,
    /// C_ik: safety stock value.
    pub cost: f64,
}

/// Demand path for a cell under the configured stream mode.
pub fn cell_demand(item: &FittedItem, alpha: f64, kind: ModelKind, config: &GridConfig) -> Vec<u64> {
    let id = item.record.item_id.as_str();
    match config.demand_stream_mode {
        DemandStreamMode::OwnModel => {
            let mut rng = rng_from(
                config.base_seed,
                &[
                    SeedPart::Str("demand"),
                    SeedPart::Str(id),
                    SeedPart::Int(basis_points(alpha)),
                    SeedPart::Str(kind.tag()),
                ],
            );
            sample_demand(item.model(kind), &mut rng, config.periods)
        }
        DemandStreamMode::CommonStream => {
            let mut rng = rng_from(config.base_seed, &[SeedPart::Str("common-demand"), SeedPart::Str(id)]);
            sample_demand(&item.kde, &mut rng, config.periods)
        }
    }
}

/// Safety stock and base-stock levels of a cell. Cycle and in-transit stock
/// use the mean of the cell's own model. The horizon-sum stream is keyed by
/// item and model only, so safety stock is monotone across α.
pub fn cell_levels(item: &FittedItem, alpha: f64, kind: ModelKind, config: &GridConfig) -> Result<StockLevels, SimError> {
    let r = &item.record;
    let params = PolicyParams::new(alpha, r.lead_time_weeks, r.review_period_weeks, config.horizon_samples)?;
    let mut rng = rng_from(
        config.base_seed,
        &[
            SeedPart::Str("horizon"),
            SeedPart::Str(r.item_id.as_str()),
            SeedPart::Str(kind.tag()),
        ],
    );
    let model = item.model(kind);
    let ss = safety_stock(model, &params, &mut rng)?;
    Ok(base_stock(ss, model.mean(), r.lead_time_weeks, r.review_period_weeks))
}

/// Simulates one (item, α, model) cell.
pub fn run_cell(item: &FittedItem, alpha: f64, kind: ModelKind, config: &GridConfig) -> Result<CellResult, SimError> {
    let r = &item.record;
    let sim = SimConfig {
        periods: config.periods,
        review_period: r.review_period_weeks,
        lead_time: r.lead_time_weeks,
    };
    sim.validate()?;
    let levels = cell_levels(item, alpha, kind, config)?;
    let demand = cell_demand(item, alpha, kind, config);
    let metrics = simulate(&demand, &levels, r.unit_cost, &sim)?;
    Ok(CellResult {
        item_id: r.item_id.clone(),
        model: kind,
        target_sl: alpha,
        levels_base_stock: levels.base_stock,
        realized_alpha: metrics.sl_cycle,
        cost: metrics.safety_stock_value,
        metrics,
    })
}

/// All cells of a grid run in canonical (item, α, model) order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResults {
    pub cells: Vec<CellResult>,
}

impl GridResults {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, item_id: &str, alpha: f64, model: ModelKind) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.item_id == item_id && c.target_sl == alpha && c.model == model)
    }
}

fn cell_keys<'a>(items: &'a [FittedItem], grid: &[f64]) -> Vec<(&'a FittedItem, f64, ModelKind)> {
    let mut keys = Vec::with_capacity(items.len() * grid.len() * 2);
    for item in items {
        for &alpha in grid {
            for kind in ModelKind::ALL {
                keys.push((item, alpha, kind));
            }
        }
    }
    keys
}

fn collect(results: Vec<Result<CellResult, SimError>>, keys: &[(&FittedItem, f64, ModelKind)]) -> Result<GridResults, SimError> {
    let mut cells = Vec::with_capacity(results.len());
    for (res, (item, alpha, kind)) in results.into_iter().zip(keys) {
        match res {
            Ok(c) => cells.push(c),
            Err(e) => {
                return Err(SimError::Cell {
                    item_id: item.record.item_id.clone(),
                    alpha: *alpha,
                    model: *kind,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(GridResults { cells })
}

/// Runs items × grid × {KDE, normal}; parallel when the `parallel` feature is on.
pub fn run_grid(items: &[FittedItem], grid: &[f64], config: &GridConfig) -> Result<GridResults, SimError> {
    let keys = cell_keys(items, grid);
    let results = par::map_ordered(&keys, |(item, alpha, kind)| run_cell(item, *alpha, *kind, config));
    collect(results, &keys)
}

/// Same as [`run_grid`] on the calling thread only.
pub fn run_grid_sequential(items: &[FittedItem], grid: &[f64], config: &GridConfig) -> Result<GridResults, SimError> {
    let keys = cell_keys(items, grid);
    let results = keys
        .iter()
        .map(|(item, alpha, kind)| run_cell(item, *alpha, *kind, config))
        .collect();
    collect(results, &keys)
}
