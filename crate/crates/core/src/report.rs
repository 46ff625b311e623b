//! CSV outputs.
//!
//! Every file starts with a `# ssdim <kind> v<version>` line so a change of
//! layout shows up in diffs. Decimals use Rust's shortest round-trip form, so
//! reading a file back yields the exact values that were written.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::demand_model::{DemandModel, ModelKind};
use crate::ingest::ItemClass;
use crate::optimizer::{Plan, SummaryRow};
use crate::simulator::{FittedItem, GridResults};
use crate::stats_tests::{NormalityRow, TestResult, VarianceRow};

pub const SCHEMA_VERSION: u32 = 1;

/// p-values below this print as 0.
const P_DISPLAY_FLOOR: f64 = 1e-16;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub const GRID_HEADER: [&str; 7] = [
    "item_id",
    "model",
    "target_sl",
    "realized_cycle_sl",
    "realized_period_sl",
    "safety_stock_units",
    "safety_stock_value",
];

/// One line of the simulation grid file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub item_id: String,
    pub model: ModelKind,
    pub target_sl: f64,
    pub realized_cycle_sl: f64,
    pub realized_period_sl: f64,
    pub safety_stock_units: f64,
    pub safety_stock_value: f64,
}

pub fn grid_rows(grid: &GridResults) -> Vec<GridRow> {
    grid.cells
        .iter()
        .map(|c| GridRow {
            item_id: c.item_id.clone(),
            model: c.model,
            target_sl: c.target_sl,
            realized_cycle_sl: c.metrics.sl_cycle,
            realized_period_sl: c.metrics.sl_period,
            safety_stock_units: c.metrics.safety_stock_units,
            safety_stock_value: c.metrics.safety_stock_value,
        })
        .collect()
}

/// Assembles CSV text behind the schema comment line.
struct Table {
    text: String,
}

impl Table {
    fn new(kind: &str, header: &[&str]) -> Self {
        let mut t = Table {
            text: format!("# ssdim {kind} v{SCHEMA_VERSION}\n"),
        };
        t.row(header.iter().map(|s| s.to_string()));
        t
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
        let fields: Vec<String> = fields.into_iter().collect();
        wtr.write_record(&fields).expect("in-memory write");
        let bytes = wtr.into_inner().expect("in-memory flush");
        self.text.push_str(std::str::from_utf8(&bytes).expect("utf-8 fields"));
    }

    fn save(self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.text).map_err(|source| ReportError::Write {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn p_value(p: f64) -> String {
    if p < P_DISPLAY_FLOOR {
        "0".into()
    } else {
        num(p)
    }
}

fn statistic(r: &Result<TestResult, impl std::fmt::Debug>) -> String {
    r.as_ref().map_or_else(|_| "undefined".into(), |t| num(t.statistic))
}

fn test_p(r: &Result<TestResult, impl std::fmt::Debug>) -> String {
    match r {
        Ok(t) => t.p_value.map_or_else(|| "undefined".into(), p_value),
        Err(_) => "undefined".into(),
    }
}

/// Normality table with the Table 1 column names.
pub fn write_normality(path: &Path, rows: &[NormalityRow]) -> Result<(), ReportError> {
    let mut t = Table::new(
        "normality",
        &["item", "t-stat_SH", "t-stat_DA", "t-stat_AN", "c-val_AN", "p-val_SH", "p-val_DA"],
    );
    for r in rows {
        let crit = match &r.anderson {
            Ok(a) => a.critical_value_5pct.map_or_else(|| "undefined".into(), num),
            Err(_) => "undefined".into(),
        };
        t.row([
            r.item_id.clone(),
            statistic(&r.shapiro),
            statistic(&r.dagostino),
            statistic(&r.anderson),
            crit,
            test_p(&r.shapiro),
            test_p(&r.dagostino),
        ]);
    }
    t.save(path)
}

/// Variance-homogeneity table with the Table 2 column names.
pub fn write_variance(path: &Path, rows: &[VarianceRow]) -> Result<(), ReportError> {
    let mut t = Table::new("variance", &["item", "levene_f-statistics", "p-value"]);
    for r in rows {
        let (f, p) = match &r.result {
            Ok(v) => (num(v.f_statistic), p_value(v.p_value)),
            Err(_) => ("undefined".into(), "undefined".into()),
        };
        t.row([r.item_id.clone(), f, p]);
    }
    t.save(path)
}

/// Discretized KDE PMFs, one row per support point.
pub fn write_pmfs(path: &Path, items: &[FittedItem]) -> Result<(), ReportError> {
    let mut t = Table::new("pmf", &["item_id", "support", "probability"]);
    for it in items {
        if let DemandModel::Kde(pmf) = &it.kde {
            for (x, p) in pmf.iter() {
                t.row([it.record.item_id.clone(), x.to_string(), num(p)]);
            }
        }
    }
    t.save(path)
}

/// Fitted parameters of both models per item.
pub fn write_models(path: &Path, items: &[FittedItem]) -> Result<(), ReportError> {
    let mut t = Table::new(
        "models",
        &[
            "item_id",
            "class",
            "n",
            "combined_mean",
            "combined_std_dev",
            "bandwidth",
            "pmf_mean",
            "normal_mean",
            "normal_std_dev",
            "normal_sigma_source",
        ],
    );
    for it in items {
        let pmf_mean = it.kde.mean();
        let (nm, ns, src) = match &it.normal {
            DemandModel::Normal(p) => (p.mean, p.std_dev, p.sigma_source.to_string()),
            DemandModel::Kde(_) => unreachable!("normal slot holds a normal model"),
        };
        t.row([
            it.record.item_id.clone(),
            it.record.class.to_string(),
            it.combined.len().to_string(),
            num(it.combined.mean()),
            num(it.combined.std_dev()),
            it.bandwidth.map_or_else(|| "point_mass".into(), num),
            num(pmf_mean),
            num(nm),
            num(ns),
            src,
        ]);
    }
    t.save(path)
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<(), ReportError> {
    let mut t = Table::new("grid", &GRID_HEADER);
    for r in rows {
        t.row([
            r.item_id.clone(),
            r.model.tag().to_string(),
            num(r.target_sl),
            num(r.realized_cycle_sl),
            num(r.realized_period_sl),
            num(r.safety_stock_units),
            num(r.safety_stock_value),
        ]);
    }
    t.save(path)
}

/// Reads a grid file written by [`write_grid`].
pub fn read_grid(path: &Path) -> Result<Vec<GridRow>, ReportError> {
    let read_err = |source| ReportError::Read {
        path: path.to_path_buf(),
        source,
    };
    let format = |message: String| ReportError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(read_err)?;
    let header = rdr.headers().map_err(read_err)?.clone();
    if header.iter().ne(GRID_HEADER.iter().copied()) {
        return Err(format(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(read_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64, ReportError> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| format(format!("line {line}: {} is not a number: {:?}", GRID_HEADER[i], &rec[i])))
        };
        let model = ModelKind::from_tag(&rec[1]).ok_or_else(|| format(format!("line {line}: unknown model {:?}", &rec[1])))?;
        rows.push(GridRow {
            item_id: rec[0].to_string(),
            model,
            target_sl: field(2)?,
            realized_cycle_sl: field(3)?,
            realized_period_sl: field(4)?,
            safety_stock_units: field(5)?,
            safety_stock_value: field(6)?,
        });
    }
    Ok(rows)
}

/// Long-format service curves sorted by item, model and target.
pub fn write_service_curves(path: &Path, rows: &[GridRow]) -> Result<(), ReportError> {
    let mut sorted: Vec<&GridRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.item_id
            .cmp(&b.item_id)
            .then(a.model.cmp(&b.model))
            .then(a.target_sl.total_cmp(&b.target_sl))
    });
    let mut t = Table::new(
        "service_curves",
        &["item_id", "model", "target_sl", "realized_cycle_sl"],
    );
    for r in sorted {
        t.row([
            r.item_id.clone(),
            r.model.tag().to_string(),
            num(r.target_sl),
            num(r.realized_cycle_sl),
        ]);
    }
    t.save(path)
}

/// Chosen cells of each model's plan.
pub fn write_plan(path: &Path, plans: &[(ModelKind, &Plan)]) -> Result<(), ReportError> {
    let mut t = Table::new(
        "plan",
        &["item_id", "model", "chosen_target_sl", "realized_cycle_sl", "safety_stock_value"],
    );
    let mut lines: Vec<(&str, ModelKind, f64, f64, f64)> = plans
        .iter()
        .flat_map(|(m, p)| p.choices.iter().map(move |c| (c.item_id.as_str(), *m, c.target_sl, c.service, c.cost)))
        .collect();
    lines.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));
    for (id, m, target, service, cost) in lines {
        t.row([id.to_string(), m.tag().to_string(), num(target), num(service), num(cost)]);
    }
    t.save(path)
}

/// Class summary with the Table 4 metrics.
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), ReportError> {
    let mut t = Table::new(
        "summary",
        &["item_class", "model", "expected_cycle_sl", "expected_period_sl", "safety_stock_value"],
    );
    for r in rows {
        t.row([
            r.class.to_string(),
            r.model.tag().to_string(),
            num(r.mean_cycle_sl),
            num(r.mean_period_sl),
            num(r.total_value),
        ]);
    }
    t.save(path)
}

/// One row per item with the safety-stock value chosen under each model.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub item_id: String,
    pub class: ItemClass,
    pub kde_value: f64,
    pub normal_value: f64,
}

pub fn comparison_rows(kde: &Plan, normal: &Plan) -> Vec<ComparisonRow> {
    let normal_by_id: BTreeMap<&str, f64> = normal.choices.iter().map(|c| (c.item_id.as_str(), c.cost)).collect();
    let mut rows: Vec<ComparisonRow> = kde
        .choices
        .iter()
        .filter_map(|c| {
            normal_by_id.get(c.item_id.as_str()).map(|&nv| ComparisonRow {
                item_id: c.item_id.clone(),
                class: c.class,
                kde_value: c.cost,
                normal_value: nv,
            })
        })
        .collect();
    rows.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    rows
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<(), ReportError> {
    let mut t = Table::new(
        "comparison",
        &["item_id", "class", "kde_safety_stock_value", "normal_safety_stock_value"],
    );
    for r in rows {
        t.row([r.item_id.clone(), r.class.to_string(), num(r.kde_value), num(r.normal_value)]);
    }
    t.save(path)
}

/// Plain-text rendering of the class summary for terminal output.
pub fn summary_text(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:<7} {:>10} {:>11} {:>18}",
        "class", "model", "cycle SL", "period SL", "safety stock value"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<6} {:<7} {:>9.2}% {:>10.2}% {:>18.2}",
            r.class.to_string(),
            r.model.tag(),
            100.0 * r.mean_cycle_sl,
            100.0 * r.mean_period_sl,
            r.total_value
        );
    }
    s
}
