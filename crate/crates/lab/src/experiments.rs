//! The two sweeps and their CSV files.
//!
//! Rows are keyed by every input column. Re-running into an existing file
//! keeps rows whose key matches a requested point and whose status is
//! `ok`, computes the rest, and rewrites the file in grid order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io;
use std::path::Path;

use mmimo_core::closedform::{
    dof_required_mf, dof_required_mmse, gamma_mf_simple, gamma_mmse_simple, DofRequirement,
    MassiveMimoCondition, SimpleSystemPoint,
};
use mmimo_core::detect::{Detector, RateSimulation};
use mmimo_core::deteq::{de_sinr_mf, de_sinr_mmse};
use mmimo_core::model::{
    build_simple_profile, InversionMode, PilotStatistics, SimpleModelSpec, SystemConfig,
    TrainingSnr,
};
use mmimo_core::rmt::FixedPointOptions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{db_to_linear, DofContourConfig, DofRule, RateVsNConfig};
use crate::{parallel, LabError, VERSION};

pub const STATUS_OK: &str = "ok";

/// One `(N, P)` point of the rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVsNRow {
    pub experiment: String,
    pub cells: usize,
    pub users: usize,
    pub antennas: usize,
    pub dof: usize,
    pub dof_rule: String,
    pub snr_db: f64,
    pub alpha: f64,
    pub training_snr_db: Option<f64>,
    pub reference_cell: usize,
    pub trials: u64,
    pub seed: u64,
    pub mc_rate_mf: Option<f64>,
    pub se_mf: Option<f64>,
    pub de_rate_mf: Option<f64>,
    pub cf_rate_mf: Option<f64>,
    pub mc_rate_mmse: Option<f64>,
    pub se_mmse: Option<f64>,
    pub de_rate_mmse: Option<f64>,
    pub cf_rate_mmse: Option<f64>,
    /// `(trial, user)` pairs where the MMSE rate fell below the MF rate.
    pub mmse_below_mf: Option<u64>,
    pub status: String,
    pub version: String,
}

pub const RATE_VS_N_COLUMNS: [&str; 23] = [
    "experiment",
    "cells",
    "users",
    "antennas",
    "dof",
    "dof_rule",
    "snr_db",
    "alpha",
    "training_snr_db",
    "reference_cell",
    "trials",
    "seed",
    "mc_rate_mf",
    "se_mf",
    "de_rate_mf",
    "cf_rate_mf",
    "mc_rate_mmse",
    "se_mmse",
    "de_rate_mmse",
    "cf_rate_mmse",
    "mmse_below_mf",
    "status",
    "version",
];

impl RateVsNRow {
    fn blank(cfg: &RateVsNConfig, antennas: usize, rule: DofRule) -> Self {
        Self {
            experiment: "rate-vs-n".into(),
            cells: cfg.cells,
            users: cfg.users,
            antennas,
            dof: rule.dof(antennas),
            dof_rule: rule.to_string(),
            snr_db: cfg.snr_db,
            alpha: cfg.alpha,
            training_snr_db: cfg.training_snr_db,
            reference_cell: cfg.reference_cell,
            trials: cfg.trials,
            seed: cfg.seed,
            mc_rate_mf: None,
            se_mf: None,
            de_rate_mf: None,
            cf_rate_mf: None,
            mc_rate_mmse: None,
            se_mmse: None,
            de_rate_mmse: None,
            cf_rate_mmse: None,
            mmse_below_mf: None,
            status: STATUS_OK.into(),
            version: VERSION.into(),
        }
    }

    /// Every input column; two rows with equal keys describe the same run.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{:?}|{}|{}|{}",
            self.cells,
            self.users,
            self.antennas,
            self.dof,
            self.dof_rule,
            self.snr_db,
            self.alpha,
            self.training_snr_db,
            self.reference_cell,
            self.trials,
            self.seed
        )
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    sum / count as f64
}

fn rate(gamma: f64) -> f64 {
    (1.0 + gamma).log2()
}

fn fill_rate_point(row: &mut RateVsNRow, cfg: &RateVsNConfig) -> Result<(), LabError> {
    let (n, p) = (row.antennas, row.dof);
    if p == 0 || p > n {
        return Err(LabError::config(format!("P = {p} is not in 1..={n}")));
    }
    let snr = db_to_linear(cfg.snr_db);
    let training = match cfg.training_snr_db {
        Some(db) => TrainingSnr::Finite(db_to_linear(db)),
        None => TrainingSnr::Infinite,
    };
    let system = SystemConfig::new(cfg.cells, cfg.users, n, snr, training, cfg.seed)?;
    let lambda = system.default_lambda();
    let profile = build_simple_profile(&system, &SimpleModelSpec::dft(n, p, cfg.alpha)?)?;
    let stats = PilotStatistics::new(&profile, cfg.reference_cell, training, InversionMode::default())?;

    let de_mf = de_sinr_mf(&stats, snr);
    row.de_rate_mf = Some(mean(de_mf.users.iter().map(|u| u.rate())));
    let de_mmse = de_sinr_mmse(&stats, snr, lambda, &FixedPointOptions::default())?;
    row.de_rate_mmse = Some(mean(de_mmse.users.iter().map(|u| u.rate())));

    if training == TrainingSnr::Infinite {
        let point = SimpleSystemPoint::with_lambda(
            snr * n as f64,
            p as f64 / cfg.users as f64,
            cfg.alpha,
            cfg.cells,
            lambda,
        )?;
        row.cf_rate_mf = Some(rate(gamma_mf_simple(&point).gamma));
        row.cf_rate_mmse = Some(rate(gamma_mmse_simple(&point)?.gamma));
    }

    if cfg.trials > 0 {
        let detectors = [Detector::MatchedFilter, Detector::Mmse { lambda }];
        let simulation = RateSimulation::new(&profile, &system, &detectors, &[cfg.reference_cell])?;
        let (estimates, trials) = parallel::ergodic_rates(&simulation, cfg.trials);
        row.mc_rate_mf = Some(estimates[0].pooled.mean);
        row.se_mf = Some(estimates[0].pooled.std_error);
        row.mc_rate_mmse = Some(estimates[1].pooled.mean);
        row.se_mmse = Some(estimates[1].pooled.std_error);
        let violations = trials
            .iter()
            .flat_map(|t| t.rates[0].iter().zip(&t.rates[1]))
            .filter(|(mf, mmse)| **mmse < **mf - 1e-12 * mf.abs().max(1.0))
            .count();
        row.mmse_below_mf = Some(violations as u64);
    }
    Ok(())
}

/// Compute one point; solver failures become the row status.
pub fn rate_vs_n_point(cfg: &RateVsNConfig, antennas: usize, rule: DofRule) -> RateVsNRow {
    let mut row = RateVsNRow::blank(cfg, antennas, rule);
    if let Err(e) = fill_rate_point(&mut row, cfg) {
        row.status = format!("error: {e}");
    }
    row
}

/// The rate sweep in grid order (DoF rule, then `N`), reusing completed
/// rows from `previous`. With zero trials there is nothing to report and
/// the result is empty.
pub fn run_rate_vs_n(
    cfg: &RateVsNConfig,
    previous: &[RateVsNRow],
    mut progress: impl FnMut(&RateVsNRow, bool),
) -> Result<Vec<RateVsNRow>, LabError> {
    cfg.validate()?;
    if cfg.trials == 0 {
        return Ok(Vec::new());
    }
    let done: BTreeMap<String, &RateVsNRow> = previous
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| (r.key(), r))
        .collect();
    let mut rows = Vec::new();
    for &rule in &cfg.dof {
        for &n in &cfg.antennas {
            let key = RateVsNRow::blank(cfg, n, rule).key();
            let (row, reused) = match done.get(&key) {
                Some(&row) => (row.clone(), true),
                None => (rate_vs_n_point(cfg, n, rule), false),
            };
            progress(&row, reused);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// One `(alpha, eta, rho N)` point of the DoF contours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofContourRow {
    pub experiment: String,
    pub cells: usize,
    pub alpha: f64,
    pub eta: f64,
    pub effective_snr_db: f64,
    pub effective_snr: f64,
    pub lambda: f64,
    pub rate_infinity: Option<f64>,
    pub dof_mf: Option<f64>,
    pub status_mf: String,
    pub dof_mmse: Option<f64>,
    pub status_mmse: String,
    pub version: String,
}

pub const DOF_CONTOUR_COLUMNS: [&str; 13] = [
    "experiment",
    "cells",
    "alpha",
    "eta",
    "effective_snr_db",
    "effective_snr",
    "lambda",
    "rate_infinity",
    "dof_mf",
    "status_mf",
    "dof_mmse",
    "status_mmse",
    "version",
];

fn requirement_columns(
    condition: mmimo_core::Result<MassiveMimoCondition>,
) -> (Option<f64>, String, Option<f64>) {
    match condition {
        Ok(c) => {
            let status = match c.requirement {
                DofRequirement::Required(_) => STATUS_OK.to_string(),
                DofRequirement::Infeasible => "infeasible".to_string(),
                DofRequirement::Unbounded => "unbounded".to_string(),
            };
            (c.requirement.value(), status, c.rate_infinity.rate())
        }
        Err(e) => (None, format!("error: {e}"), None),
    }
}

/// Grid order: `alpha`, then `eta`, then `rho N`.
pub fn run_dof_contour(cfg: &DofContourConfig) -> Result<Vec<DofContourRow>, LabError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &alpha in &cfg.alphas {
        for &eta in &cfg.etas {
            for &db in &cfg.effective_snr_db {
                let effective_snr = db_to_linear(db);
                let lambda = cfg.lambda.unwrap_or(1.0 / effective_snr);
                let (dof_mf, status_mf, rate_infinity) =
                    requirement_columns(dof_required_mf(eta, effective_snr, alpha, cfg.cells));
                let (dof_mmse, status_mmse, _) = requirement_columns(dof_required_mmse(
                    eta,
                    effective_snr,
                    alpha,
                    cfg.cells,
                    lambda,
                ));
                rows.push(DofContourRow {
                    experiment: "dof-contour".into(),
                    cells: cfg.cells,
                    alpha,
                    eta,
                    effective_snr_db: db,
                    effective_snr,
                    lambda,
                    rate_infinity,
                    dof_mf,
                    status_mf,
                    dof_mmse,
                    status_mmse,
                    version: VERSION.into(),
                });
            }
        }
    }
    Ok(rows)
}

/// Header row followed by `rows`; the header is written even when `rows`
/// is empty.
pub fn write_csv<T: Serialize, W: io::Write>(
    writer: W,
    columns: &[&str],
    rows: &[T],
) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(columns)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<(), LabError> {
    let file = File::create(path).map_err(|source| LabError::Io {
        path: path.to_owned(),
        source,
    })?;
    write_csv(file, columns, rows).map_err(|source| LabError::Csv {
        path: path.to_owned(),
        source,
    })
}

/// Rows of an earlier run; a missing file is an empty run.
pub fn read_csv_file<T: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<T>, LabError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let csv_err = |source| LabError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if !header.iter().eq(columns.iter().copied()) {
        return Err(LabError::config(format!(
            "{} has a different column layout; refusing to resume",
            path.display()
        )));
    }
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err)
}
