//! Loading and validation of the three input tables.
//!
//! * `demand_history.csv` / `forecast.csv`: `item_id,week,quantity`
//! * `item_master.csv`: `item_id,class,lead_time_weeks,review_period_weeks,unit_cost[,weight]`
//!
//! Quantities must be nonnegative integers. Weeks are opaque ordinals; rows of
//! an item are kept in file order, which is taken as time order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;

pub const DEMAND_HEADER: [&str; 3] = ["item_id", "week", "quantity"];
pub const ITEM_HEADER: [&str; 5] = [
    "item_id",
    "class",
    "lead_time_weeks",
    "review_period_weeks",
    "unit_cost",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header {found:?} does not match expected {expected:?}")]
    Header {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}, row {row}: {message}")]
    Row {
        path: PathBuf,
        row: u64,
        message: String,
    },
    #[error("{0}")]
    Validation(#[from] ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemClass {
    A,
    B,
    C,
}

impl ItemClass {
    pub const ALL: [ItemClass; 3] = [ItemClass::A, ItemClass::B, ItemClass::C];
}

impl fmt::Display for ItemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ItemClass::A => "A",
            ItemClass::B => "B",
            ItemClass::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for ItemClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ItemClass::A),
            "B" => Ok(ItemClass::B),
            "C" => Ok(ItemClass::C),
            other => Err(format!("unknown item class {other:?} (expected A, B or C)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub item_id: String,
    pub class: ItemClass,
    pub lead_time_weeks: u32,
    pub review_period_weeks: u32,
    pub unit_cost: f64,
    /// Weight of the item inside its class constraint. `None` means the
    /// equal-weight default `1 / |class|` applies.
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    History,
    Forecast,
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesKind::History => "history",
            SeriesKind::Forecast => "forecast",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandSeries {
    pub item_id: String,
    pub kind: SeriesKind,
    pub values: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemData {
    pub record: ItemRecord,
    pub history: DemandSeries,
    pub forecast: DemandSeries,
}

/// Length rules applied by [`validate_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthRules {
    pub history_len: usize,
    pub forecast_len: usize,
    pub strict: bool,
}

impl From<&RunConfig> for LengthRules {
    fn from(cfg: &RunConfig) -> Self {
        Self {
            history_len: cfg.history_len,
            forecast_len: cfg.forecast_len,
            strict: cfg.strict_lengths,
        }
    }
}

impl Default for LengthRules {
    fn default() -> Self {
        Self {
            history_len: 52,
            forecast_len: 13,
            strict: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset {
    /// Keyed by item id; iteration order is the canonical output order.
    pub items: BTreeMap<String, ItemData>,
    pub rules: LengthRules,
    pub warnings: Vec<String>,
}

impl ValidatedDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Keeps only the listed items. Unknown ids are reported back.
    pub fn retain_items(&mut self, ids: &[String]) -> Result<(), Vec<String>> {
        let unknown: Vec<String> = ids
            .iter()
            .filter(|id| !self.items.contains_key(*id))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            return Err(unknown);
        }
        let keep: HashSet<&String> = ids.iter().collect();
        self.items.retain(|k, _| keep.contains(k));
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = &ItemRecord> {
        self.items.values().map(|d| &d.record)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingHistory(String),
    MissingForecast(String),
    UnknownItem { item_id: String, kind: SeriesKind },
    Length {
        item_id: String,
        kind: SeriesKind,
        expected: usize,
        found: usize,
    },
    TooShort {
        item_id: String,
        kind: SeriesKind,
        found: usize,
    },
    DuplicateSeries { item_id: String, kind: SeriesKind },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingHistory(id) => write!(f, "{id}: no demand history"),
            Violation::MissingForecast(id) => write!(f, "{id}: no forecast"),
            Violation::UnknownItem { item_id, kind } => {
                write!(f, "{item_id}: {kind} series for an item missing from the item master")
            }
            Violation::Length {
                item_id,
                kind,
                expected,
                found,
            } => write!(f, "{item_id}: {kind} has {found} weeks, expected {expected}"),
            Violation::TooShort {
                item_id,
                kind,
                found,
            } => write!(f, "{item_id}: {kind} has {found} weeks, need at least 2"),
            Violation::DuplicateSeries { item_id, kind } => {
                write!(f, "{item_id}: more than one {kind} series")
            }
        }
    }
}

/// Every problem found by [`validate_dataset`]; never empty.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} validation error(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn headers(rdr: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Vec<String>, IngestError> {
    let h = rdr.headers().map_err(|source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(h.iter().map(|s| s.to_ascii_lowercase()).collect())
}

fn row_err(path: &Path, row: u64, message: impl Into<String>) -> IngestError {
    IngestError::Row {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn parse_quantity(raw: &str) -> Result<u64, String> {
    if let Ok(v) = raw.parse::<u64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(format!("negative quantity {raw:?}")),
        Ok(v) if v.fract() != 0.0 => Err(format!("fractional quantity {raw:?}")),
        Ok(_) => Err(format!("quantity {raw:?} is not a plain integer")),
        Err(_) => Err(format!("non-numeric quantity {raw:?}")),
    }
}

fn load_series(path: &Path, kind: SeriesKind) -> Result<Vec<DemandSeries>, IngestError> {
    let mut rdr = open(path)?;
    let found = headers(&mut rdr, path)?;
    if found != DEMAND_HEADER {
        return Err(IngestError::Header {
            path: path.to_path_buf(),
            expected: DEMAND_HEADER.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(row_err(path, row, format!("expected 3 fields, found {}", rec.len())));
        }
        let item = rec[0].to_string();
        if item.is_empty() {
            return Err(row_err(path, row, "empty item_id"));
        }
        let week: u64 = rec[1]
            .parse()
            .map_err(|_| row_err(path, row, format!("week {:?} is not a positive integer", &rec[1])))?;
        let qty = parse_quantity(&rec[2]).map_err(|m| row_err(path, row, m))?;
        if !seen.insert((item.clone(), week)) {
            return Err(row_err(path, row, format!("duplicate week {week} for item {item}")));
        }
        values
            .entry(item.clone())
            .or_insert_with(|| {
                order.push(item.clone());
                Vec::new()
            })
            .push(qty);
    }

    Ok(order
        .into_iter()
        .map(|item_id| {
            let v = values.remove(&item_id).unwrap_or_default();
            DemandSeries {
                item_id,
                kind,
                values: v,
            }
        })
        .collect())
}

/// Reads the weekly demand history table.
pub fn load_demand_history(path: &Path) -> Result<Vec<DemandSeries>, IngestError> {
    load_series(path, SeriesKind::History)
}

/// Reads the forward-looking forecast table (same schema as the history).
pub fn load_forecast(path: &Path) -> Result<Vec<DemandSeries>, IngestError> {
    load_series(path, SeriesKind::Forecast)
}

/// Reads the item master table.
pub fn load_item_master(path: &Path) -> Result<Vec<ItemRecord>, IngestError> {
    let mut rdr = open(path)?;
    let found = headers(&mut rdr, path)?;
    let has_weight = match found.len() {
        5 if found == ITEM_HEADER => false,
        6 if found[..5] == ITEM_HEADER && found[5] == "weight" => true,
        _ => {
            let mut expected: Vec<String> = ITEM_HEADER.iter().map(|s| s.to_string()).collect();
            expected.push("[weight]".into());
            return Err(IngestError::Header {
                path: path.to_path_buf(),
                expected,
                found,
            });
        }
    };

    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let row = rec.position().map_or(0, |p| p.line());
        let item_id = rec[0].to_string();
        if item_id.is_empty() {
            return Err(row_err(path, row, "empty item_id"));
        }
        if !ids.insert(item_id.clone()) {
            return Err(row_err(path, row, format!("duplicate item_id {item_id}")));
        }
        let class: ItemClass = rec[1].parse().map_err(|m: String| row_err(path, row, m))?;
        let positive = |field: &str, raw: &str| -> Result<u32, IngestError> {
            match raw.parse::<u32>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(row_err(path, row, format!("{field} {raw:?} must be a positive integer"))),
            }
        };
        let lead_time_weeks = positive("lead_time_weeks", &rec[2])?;
        let review_period_weeks = positive("review_period_weeks", &rec[3])?;
        let unit_cost: f64 = rec[4]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| row_err(path, row, format!("unit_cost {:?} must be a nonnegative number", &rec[4])))?;
        let weight = if has_weight && !rec[5].is_empty() {
            let w: f64 = rec[5]
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| row_err(path, row, format!("weight {:?} must be a nonnegative number", &rec[5])))?;
            Some(w)
        } else {
            None
        };
        out.push(ItemRecord {
            item_id,
            class,
            lead_time_weeks,
            review_period_weeks,
            unit_cost,
            weight,
        });
    }
    Ok(out)
}

/// Joins the three tables by item id and checks completeness and lengths.
///
/// Either every item passes, or the full list of violations is returned.
pub fn validate_dataset(
    records: Vec<ItemRecord>,
    histories: Vec<DemandSeries>,
    forecasts: Vec<DemandSeries>,
    rules: LengthRules,
) -> Result<ValidatedDataset, ValidationReport> {
    let mut violations = Vec::new();
    let mut warnings = Vec::new();

    let known: BTreeSet<String> = records.iter().map(|r| r.item_id.clone()).collect();
    let index = |series: Vec<DemandSeries>, violations: &mut Vec<Violation>| {
        let mut map: BTreeMap<String, DemandSeries> = BTreeMap::new();
        for s in series {
            if !known.contains(&s.item_id) {
                violations.push(Violation::UnknownItem {
                    item_id: s.item_id.clone(),
                    kind: s.kind,
                });
                continue;
            }
            if map.contains_key(&s.item_id) {
                violations.push(Violation::DuplicateSeries {
                    item_id: s.item_id.clone(),
                    kind: s.kind,
                });
                continue;
            }
            map.insert(s.item_id.clone(), s);
        }
        map
    };
    let mut hist = index(histories, &mut violations);
    let mut fcst = index(forecasts, &mut violations);

    let mut check_len = |s: &DemandSeries, expected: usize, violations: &mut Vec<Violation>| {
        let found = s.values.len();
        if rules.strict {
            if found != expected {
                violations.push(Violation::Length {
                    item_id: s.item_id.clone(),
                    kind: s.kind,
                    expected,
                    found,
                });
            }
        } else if found < 2 {
            violations.push(Violation::TooShort {
                item_id: s.item_id.clone(),
                kind: s.kind,
                found,
            });
        } else if found != expected {
            warnings.push(format!(
                "{}: {} has {found} weeks (configured {expected})",
                s.item_id, s.kind
            ));
        }
    };

    let mut items = BTreeMap::new();
    for record in records {
        let id = record.item_id.clone();
        let h = hist.remove(&id);
        let f = fcst.remove(&id);
        match &h {
            Some(s) => check_len(s, rules.history_len, &mut violations),
            None => violations.push(Violation::MissingHistory(id.clone())),
        }
        match &f {
            Some(s) => check_len(s, rules.forecast_len, &mut violations),
            None => violations.push(Violation::MissingForecast(id.clone())),
        }
        if let (Some(history), Some(forecast)) = (h, f) {
            items.insert(
                id,
                ItemData {
                    record,
                    history,
                    forecast,
                },
            );
        }
    }

    if violations.is_empty() {
        Ok(ValidatedDataset {
            items,
            rules,
            warnings,
        })
    } else {
        Err(ValidationReport { violations })
    }
}

/// Loads and validates the three tables named in `cfg`.
pub fn load_dataset(cfg: &RunConfig) -> Result<ValidatedDataset, IngestError> {
    let records = load_item_master(&cfg.item_master)?;
    let histories = load_demand_history(&cfg.demand_history)?;
    let forecasts = load_forecast(&cfg.forecast)?;
    Ok(validate_dataset(
        records,
        histories,
        forecasts,
        LengthRules::from(cfg),
    )?)
}

fn write_csv(path: &Path, rows: Vec<Vec<String>>) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.write_record(&r)?;
    }
    wtr.flush()
}

/// Writes a demand table in the `item_id,week,quantity` schema.
pub fn write_series(path: &Path, series: &[&DemandSeries]) -> std::io::Result<()> {
    let mut rows = vec![DEMAND_HEADER.iter().map(|s| s.to_string()).collect()];
    for s in series {
        for (week, q) in s.values.iter().enumerate() {
            rows.push(vec![s.item_id.clone(), (week + 1).to_string(), q.to_string()]);
        }
    }
    write_csv(path, rows)
}

/// Writes the item master, including the weight column only when some item
/// carries an explicit weight.
pub fn write_item_master(path: &Path, records: &[&ItemRecord]) -> std::io::Result<()> {
    let with_weight = records.iter().any(|r| r.weight.is_some());
    let mut header: Vec<String> = ITEM_HEADER.iter().map(|s| s.to_string()).collect();
    if with_weight {
        header.push("weight".into());
    }
    let mut rows = vec![header];
    for r in records {
        let mut row = vec![
            r.item_id.clone(),
            r.class.to_string(),
            r.lead_time_weeks.to_string(),
            r.review_period_weeks.to_string(),
            r.unit_cost.to_string(),
        ];
        if with_weight {
            row.push(r.weight.map(|w| w.to_string()).unwrap_or_default());
        }
        rows.push(row);
    }
    write_csv(path, rows)
}

/// Writes the dataset back out as the three input tables.
pub fn write_dataset(
    dataset: &ValidatedDataset,
    history: &Path,
    forecast: &Path,
    item_master: &Path,
) -> std::io::Result<()> {
    let records: Vec<&ItemRecord> = dataset.records().collect();
    write_item_master(item_master, &records)?;
    let h: Vec<&DemandSeries> = dataset.items.values().map(|d| &d.history).collect();
    write_series(history, &h)?;
    let f: Vec<&DemandSeries> = dataset.items.values().map(|d| &d.forecast).collect();
    write_series(forecast, &f)
}
