//! End-to-end stages behind the command-line tool.
//!
//! Each stage writes its outputs into the output directory and then rewrites
//! `manifest.json`, which lists the inputs and every output file present with
//! SHA-256 digests. Nothing in an output depends on the clock, the host or the
//! thread count.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::demand_model::ModelKind;
use crate::ingest::{load_dataset, IngestError, ItemRecord, ValidatedDataset};
use crate::optimizer::{build_problem, solve_bb, summarize, OptimizeError, Plan, SummaryRow};
use crate::report::{self, GridRow, ReportError};
use crate::simulator::{fit_dataset, run_grid, FittedItem, GridConfig, GridResults};
use crate::stats_tests::{normality_report, variance_report, NormalityRow, VarianceRow};

pub const NORMALITY_FILE: &str = "normality.csv";
pub const VARIANCE_FILE: &str = "variance.csv";
pub const PMF_FILE: &str = "pmf.csv";
pub const MODELS_FILE: &str = "models.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const PLAN_FILE: &str = "plan.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SERVICE_CURVES_FILE: &str = "service_curves.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Output files in stage order.
pub const OUTPUT_FILES: [&str; 9] = [
    NORMALITY_FILE,
    VARIANCE_FILE,
    PMF_FILE,
    MODELS_FILE,
    GRID_FILE,
    PLAN_FILE,
    SUMMARY_FILE,
    COMPARISON_FILE,
    SERVICE_CURVES_FILE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Check,
    Fit,
    Simulate,
    Optimize,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Check => "check",
            Stage::Fit => "fit",
            Stage::Simulate => "simulate",
            Stage::Optimize => "optimize",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Input(#[from] IngestError),
    #[error("unknown item ids in --items: {}", .0.join(", "))]
    UnknownItems(Vec<String>),
    #[error("--items selected no items")]
    EmptySelection,
    #[error("{stage} stage failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("optimize stage: {model} model {source}")]
    Infeasible {
        model: ModelKind,
        #[source]
        source: OptimizeError,
    },
}

impl PipelineError {
    /// 1 for invalid configuration or inputs, 2 for a failed stage, 3 for an
    /// infeasible optimization.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Input(_)
            | PipelineError::UnknownItems(_)
            | PipelineError::EmptySelection => 1,
            PipelineError::Stage { .. } => 2,
            PipelineError::Infeasible { .. } => 3,
        }
    }

    fn stage(stage: Stage, err: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: err.to_string(),
        }
    }
}

/// Parses an `--items` filter: comma-separated item ids.
pub fn parse_item_filter(filter: &str) -> Vec<String> {
    filter
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub items: Option<Vec<String>>,
}

pub struct CheckOutput {
    pub normality: Vec<NormalityRow>,
    pub variance: Vec<VarianceRow>,
}

pub struct OptimizeOutput {
    pub kde: Plan,
    pub normal: Plan,
    pub summary: Vec<SummaryRow>,
}

/// Loaded configuration and dataset for one invocation.
pub struct Pipeline {
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub dataset: ValidatedDataset,
    pub items: Option<Vec<String>>,
}

impl Pipeline {
    /// Loads the config (applying a seed override) and the filtered dataset.
    pub fn open(opts: &Options) -> Result<Self, PipelineError> {
        let mut config = RunConfig::load(&opts.config)?;
        if let Some(seed) = opts.seed {
            config.base_seed = seed;
        }
        let mut dataset = load_dataset(&config)?;
        if let Some(ids) = &opts.items {
            if ids.is_empty() {
                return Err(PipelineError::EmptySelection);
            }
            dataset.retain_items(ids).map_err(PipelineError::UnknownItems)?;
        }
        Ok(Self {
            config,
            config_path: opts.config.clone(),
            out_dir: opts.out_dir.clone(),
            dataset,
            items: opts.items.clone(),
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_out_dir(&self, stage: Stage) -> Result<(), PipelineError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| {
            PipelineError::stage(stage, format!("cannot create {}: {e}", self.out_dir.display()))
        })
    }

    fn records(&self) -> Vec<&ItemRecord> {
        self.dataset.records().collect()
    }

    /// Normality and variance-homogeneity tables.
    pub fn check(&self) -> Result<CheckOutput, PipelineError> {
        self.ensure_out_dir(Stage::Check)?;
        let normality = normality_report(&self.dataset);
        let variance = variance_report(&self.dataset);
        let save = |e: ReportError| PipelineError::stage(Stage::Check, e);
        report::write_normality(&self.out(NORMALITY_FILE), &normality).map_err(save)?;
        report::write_variance(&self.out(VARIANCE_FILE), &variance).map_err(save)?;
        Ok(CheckOutput { normality, variance })
    }

    fn fitted(&self, stage: Stage) -> Result<Vec<FittedItem>, PipelineError> {
        fit_dataset(&self.dataset, self.config.normal_sigma_source)
            .map_err(|(id, e)| PipelineError::stage(stage, format!("item {id}: {e}")))
    }

    /// Fits both models and writes the PMFs and model parameters.
    pub fn fit(&self) -> Result<Vec<FittedItem>, PipelineError> {
        self.ensure_out_dir(Stage::Fit)?;
        let items = self.fitted(Stage::Fit)?;
        let save = |e: ReportError| PipelineError::stage(Stage::Fit, e);
        report::write_pmfs(&self.out(PMF_FILE), &items).map_err(save)?;
        report::write_models(&self.out(MODELS_FILE), &items).map_err(save)?;
        Ok(items)
    }

    /// Runs the simulation grid and writes it.
    pub fn simulate(&self) -> Result<GridResults, PipelineError> {
        self.ensure_out_dir(Stage::Simulate)?;
        let items = self.fitted(Stage::Simulate)?;
        let grid = run_grid(&items, &self.config.service_level_grid, &GridConfig::from(&self.config))
            .map_err(|e| PipelineError::stage(Stage::Simulate, e))?;
        report::write_grid(&self.out(GRID_FILE), &report::grid_rows(&grid))
            .map_err(|e| PipelineError::stage(Stage::Simulate, e))?;
        Ok(grid)
    }

    fn read_grid(&self, stage: Stage) -> Result<Vec<GridRow>, PipelineError> {
        let path = self.out(GRID_FILE);
        if !path.exists() {
            return Err(PipelineError::stage(
                stage,
                format!("{} not found; run the simulate stage first", path.display()),
            ));
        }
        report::read_grid(&path).map_err(|e| PipelineError::stage(stage, e))
    }

    /// Solves both models' assignment problems from the grid file.
    pub fn optimize(&self) -> Result<OptimizeOutput, PipelineError> {
        self.ensure_out_dir(Stage::Optimize)?;
        let rows = self.read_grid(Stage::Optimize)?;
        let records = self.records();
        let solve = |model: ModelKind| -> Result<Plan, PipelineError> {
            let problem = build_problem(&rows, &records, self.config.wsl_target, model)
                .map_err(|e| PipelineError::stage(Stage::Optimize, e))?;
            solve_bb(&problem).map_err(|e| match e {
                OptimizeError::Infeasible(_) => PipelineError::Infeasible { model, source: e },
                other => PipelineError::stage(Stage::Optimize, other),
            })
        };
        let kde = solve(ModelKind::Kde)?;
        let normal = solve(ModelKind::Normal)?;
        let summary = summarize(&[(ModelKind::Kde, &kde), (ModelKind::Normal, &normal)], &rows)
            .map_err(|e| PipelineError::stage(Stage::Optimize, e))?;
        let save = |e: ReportError| PipelineError::stage(Stage::Optimize, e);
        report::write_plan(&self.out(PLAN_FILE), &[(ModelKind::Kde, &kde), (ModelKind::Normal, &normal)])
            .map_err(save)?;
        report::write_summary(&self.out(SUMMARY_FILE), &summary).map_err(save)?;
        report::write_comparison(&self.out(COMPARISON_FILE), &report::comparison_rows(&kde, &normal))
            .map_err(save)?;
        Ok(OptimizeOutput { kde, normal, summary })
    }

    /// Writes the service-curve plot data from the grid file.
    pub fn report(&self) -> Result<(), PipelineError> {
        self.ensure_out_dir(Stage::Report)?;
        let rows = self.read_grid(Stage::Report)?;
        report::write_service_curves(&self.out(SERVICE_CURVES_FILE), &rows)
            .map_err(|e| PipelineError::stage(Stage::Report, e))
    }

    /// check, fit, simulate, optimize and report in order.
    pub fn run(&self) -> Result<OptimizeOutput, PipelineError> {
        self.check()?;
        self.fit()?;
        self.simulate()?;
        let out = self.optimize()?;
        self.report()?;
        Ok(out)
    }

    /// Rewrites the manifest for the outputs currently in the directory.
    pub fn write_manifest(&self) -> Result<Manifest, PipelineError> {
        let manifest = self.manifest()?;
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(self.out(MANIFEST_FILE), text)
            .map_err(|e| PipelineError::stage(Stage::Report, format!("cannot write manifest: {e}")))?;
        Ok(manifest)
    }

    pub fn manifest(&self) -> Result<Manifest, PipelineError> {
        let digest_of = |path: &Path| -> Result<String, PipelineError> {
            file_digest(path)
                .map_err(|e| PipelineError::stage(Stage::Report, format!("cannot read {}: {e}", path.display())))
        };
        let cfg = &self.config;
        let mut inputs = Vec::new();
        for (role, path) in [
            ("config", self.config_path.as_path()),
            ("demand_history", cfg.demand_history.as_path()),
            ("forecast", cfg.forecast.as_path()),
            ("item_master", cfg.item_master.as_path()),
        ] {
            inputs.push(FileEntry {
                role: Some(role.to_string()),
                file: file_name(path),
                sha256: digest_of(path)?,
            });
        }
        let mut outputs = Vec::new();
        for name in OUTPUT_FILES {
            let path = self.out(name);
            if path.exists() {
                outputs.push(FileEntry {
                    role: None,
                    file: name.to_string(),
                    sha256: digest_of(&path)?,
                });
            }
        }
        // Input paths are reduced to file names so the manifest does not
        // depend on where the run happened.
        let mut snapshot = cfg.clone();
        snapshot.demand_history = PathBuf::from(file_name(&cfg.demand_history));
        snapshot.forecast = PathBuf::from(file_name(&cfg.forecast));
        snapshot.item_master = PathBuf::from(file_name(&cfg.item_master));
        Ok(Manifest {
            tool: "ssdim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: report::SCHEMA_VERSION,
            base_seed: cfg.base_seed,
            items: self.items.clone(),
            config: snapshot,
            inputs,
            outputs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub base_seed: u64,
    pub items: Option<Vec<String>>,
    pub config: RunConfig,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Lowercase hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex_digest(&bytes))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
