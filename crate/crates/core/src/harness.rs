//! Monte Carlo experiment driver, rate regression, and ingestion.
//!
//! Every row of an experiment is reproducible in isolation: the per-row
//! seed is a pure function of (base seed, grid cell index, replicate
//! index), so serial and parallel execution produce identical output.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimateOptions};
use crate::fbm::{HurstParams, Normalization, PathSampler, MAX_GRID_EXP};
use crate::noise::{observe, read_series, IngestedSeries, NoiseModel};
use crate::util::format_float;
use crate::wavelet::{build_basis, WaveletBasis, DEFAULT_CASCADE_DEPTH};

/// Splitmix64-style seed derivation: mixes an index into a parent seed.
/// Used to give every (cell, replicate) an independent, reproducible
/// generator stream.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Full description of a Monte Carlo sweep.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub h_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub n_exps: Vec<u32>,
    pub noise_levels: Vec<NoiseModel>,
    pub replicates: u32,
    pub base_seed: u64,
    pub normalization: Normalization,
    pub rows_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub h_min: f64,
    pub h_max: f64,
}

impl ExperimentConfig {
    /// A single-cell sweep; the usual starting point in library code.
    pub fn single(h: f64, sigma: f64, n_exp: u32, noise: NoiseModel) -> Self {
        ExperimentConfig {
            h_values: vec![h],
            sigma_values: vec![sigma],
            n_exps: vec![n_exp],
            noise_levels: vec![noise],
            replicates: 1,
            base_seed: 0,
            normalization: Normalization::Kappa,
            rows_path: None,
            summary_path: None,
            h_min: 0.01,
            h_max: 0.99,
        }
    }

    /// Parses `key = value` text. Lists are comma-separated, except
    /// `noise_levels`, which is `;`-separated since its descriptors
    /// contain commas. Lines starting with `#` are comments.
    ///
    /// Keys: h_values, sigma_values, N_values, noise_levels, replicates,
    /// base_seed, normalization, rows_path, summary_path, h_min, h_max.
    /// Required: h_values, N_values, replicates, base_seed.
    pub fn parse(text: &str) -> Result<Self> {
        fn floats(v: &str) -> Result<Vec<f64>> {
            v.split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad number {:?}", s.trim())))
                })
                .collect()
        }
        let mut cfg = ExperimentConfig {
            h_values: Vec::new(),
            sigma_values: vec![1.0],
            n_exps: Vec::new(),
            noise_levels: vec![NoiseModel::from_str("const:0@gauss")?],
            replicates: 0,
            base_seed: 0,
            normalization: Normalization::Kappa,
            rows_path: None,
            summary_path: None,
            h_min: 0.01,
            h_max: 0.99,
        };
        let mut seen_replicates = false;
        let mut seen_seed = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad_num =
                || Error::Format(format!("config line {}: bad value {value:?}", lineno + 1));
            match key {
                "h_values" => cfg.h_values = floats(value)?,
                "sigma_values" => cfg.sigma_values = floats(value)?,
                "N_values" => {
                    cfg.n_exps = value
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|_| bad_num()))
                        .collect::<Result<_>>()?
                }
                "noise_levels" => {
                    cfg.noise_levels = value
                        .split(';')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_>>()?
                }
                "replicates" => {
                    cfg.replicates = value.parse().map_err(|_| bad_num())?;
                    seen_replicates = true;
                }
                "base_seed" => {
                    cfg.base_seed = value.parse().map_err(|_| bad_num())?;
                    seen_seed = true;
                }
                "normalization" => cfg.normalization = value.parse()?,
                "rows_path" => cfg.rows_path = Some(PathBuf::from(value)),
                "summary_path" => cfg.summary_path = Some(PathBuf::from(value)),
                "h_min" => cfg.h_min = value.parse().map_err(|_| bad_num())?,
                "h_max" => cfg.h_max = value.parse().map_err(|_| bad_num())?,
                other => {
                    return Err(Error::Format(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        if cfg.h_values.is_empty() {
            return Err(Error::Format("config is missing h_values".into()));
        }
        if cfg.n_exps.is_empty() {
            return Err(Error::Format("config is missing N_values".into()));
        }
        if !seen_replicates {
            return Err(Error::Format("config is missing replicates".into()));
        }
        if !seen_seed {
            return Err(Error::Format("config is missing base_seed".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Domain("replicates must be at least 1".into()));
        }
        if self.sigma_values.is_empty() || self.noise_levels.is_empty() {
            return Err(Error::Domain("value lists must be nonempty".into()));
        }
        for &h in &self.h_values {
            HurstParams::new(h, 1.0)?;
        }
        for &s in &self.sigma_values {
            HurstParams::new(0.5, s)?;
        }
        for &n_exp in &self.n_exps {
            if n_exp % 2 != 0 || !(8..=MAX_GRID_EXP).contains(&n_exp) {
                return Err(Error::Domain(format!(
                    "grid exponents must be even and in [8, {MAX_GRID_EXP}], got {n_exp}"
                )));
            }
        }
        let opts = EstimateOptions {
            h_min: self.h_min,
            h_max: self.h_max,
            compute_sigma: true,
        };
        opts.validate()
    }

    /// Grid cells in deterministic order: H outermost, then sigma, N,
    /// noise. The position in this sequence is the cell index that seeds
    /// the cell's replicate streams.
    pub fn cells(&self) -> Vec<(f64, f64, u32, NoiseModel)> {
        let mut out = Vec::new();
        for &h in &self.h_values {
            for &sigma in &self.sigma_values {
                for &n_exp in &self.n_exps {
                    for &noise in &self.noise_levels {
                        out.push((h, sigma, n_exp, noise));
                    }
                }
            }
        }
        out
    }
}

/// One replicate's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub h: f64,
    pub sigma: f64,
    pub n_exp: u32,
    /// Noise model descriptor, e.g. `const:0.03@gauss`.
    pub noise: String,
    pub replicate: u32,
    /// Row seed; rerunning the cell with this seed reproduces the row.
    pub seed: u64,
    pub j_star: Option<u32>,
    pub h_hat: Option<f64>,
    pub clamped: bool,
    pub sigma_hat: Option<f64>,
    pub abs_error: Option<f64>,
    pub error: Option<String>,
    /// Not serialized; rerun timing lands in the JSON summary instead.
    pub wall: Duration,
}

fn run_row(
    basis: &WaveletBasis,
    sampler: &PathSampler,
    noise: NoiseModel,
    opts: &EstimateOptions,
    h: f64,
    sigma: f64,
    n_exp: u32,
    replicate: u32,
    row_seed: u64,
) -> ReportRow {
    let started = Instant::now();
    let mut row = ReportRow {
        h,
        sigma,
        n_exp,
        noise: noise.to_string(),
        replicate,
        seed: row_seed,
        j_star: None,
        h_hat: None,
        clamped: false,
        sigma_hat: None,
        abs_error: None,
        error: None,
        wall: Duration::ZERO,
    };
    let path_seed = derive_seed(row_seed, 0);
    let noise_seed = derive_seed(row_seed, 1);
    let path = sampler.generate(path_seed);
    let outcome = observe(&path, &noise.with_seed(noise_seed))
        .and_then(|series| estimate(&series, basis, opts));
    match outcome {
        Ok(profile) => {
            row.j_star = profile.j_star;
            row.h_hat = profile.h_hat;
            row.clamped = profile.clamped;
            row.sigma_hat = profile.sigma_hat;
            row.abs_error = profile.h_hat.map(|hh| (hh - h).abs());
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.wall = started.elapsed();
    row
}

/// Runs the full sweep. Replicates within a cell run concurrently when
/// `parallel` is set; output is identical either way.
pub fn run_experiment(config: &ExperimentConfig, parallel: bool) -> Result<Vec<ReportRow>> {
    config.validate()?;
    let basis = build_basis(DEFAULT_CASCADE_DEPTH)?;
    let opts = EstimateOptions {
        h_min: config.h_min,
        h_max: config.h_max,
        compute_sigma: true,
    };
    let mut rows = Vec::new();
    for (cell_idx, (h, sigma, n_exp, noise)) in config.cells().into_iter().enumerate() {
        let cell_seed = derive_seed(config.base_seed, cell_idx as u64);
        let params = HurstParams::new(h, sigma)?;
        let sampler = match PathSampler::new(params, n_exp, config.normalization) {
            Ok(s) => s,
            Err(e) => {
                // record the failure on every row of the cell; the sweep goes on
                let msg = e.to_string();
                for rep in 0..config.replicates {
                    rows.push(ReportRow {
                        h,
                        sigma,
                        n_exp,
                        noise: noise.to_string(),
                        replicate: rep,
                        seed: derive_seed(cell_seed, rep as u64),
                        j_star: None,
                        h_hat: None,
                        clamped: false,
                        sigma_hat: None,
                        abs_error: None,
                        error: Some(msg.clone()),
                        wall: Duration::ZERO,
                    });
                }
                continue;
            }
        };
        let one = |rep: u32| {
            run_row(
                &basis,
                &sampler,
                noise,
                &opts,
                h,
                sigma,
                n_exp,
                rep,
                derive_seed(cell_seed, rep as u64),
            )
        };
        let mut cell_rows: Vec<ReportRow> = if parallel {
            (0..config.replicates).into_par_iter().map(one).collect()
        } else {
            (0..config.replicates).map(one).collect()
        };
        rows.append(&mut cell_rows);
    }
    Ok(rows)
}

const ROW_HEADER: &[&str] = &[
    "h", "sigma", "N", "noise", "replicate", "seed", "j_star", "h_hat", "clamped", "sigma_hat",
    "abs_error", "error",
];

/// Writes rows as CSV. Floats carry 17 significant digits, so the file
/// round-trips bit-exactly; wall time is deliberately left out to keep
/// reruns byte-identical.
pub fn write_rows<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROW_HEADER)?;
    let opt_f = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    for r in rows {
        w.write_record(&[
            format_float(r.h),
            format_float(r.sigma),
            r.n_exp.to_string(),
            r.noise.clone(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.j_star.map(|j| j.to_string()).unwrap_or_default(),
            opt_f(r.h_hat),
            r.clamped.to_string(),
            opt_f(r.sigma_hat),
            opt_f(r.abs_error),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows back. Wall times are not stored, so they come back zero.
pub fn read_rows<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let headers: Vec<&str> = rdr.headers()?.iter().collect();
    if headers != ROW_HEADER {
        return Err(Error::Format(format!(
            "unexpected rows header {headers:?}"
        )));
    }
    let parse_f = |s: &str, what: &str, row: usize| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("row {row}: bad {what} {s:?}")))
    };
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let rec = record?;
        let rowno = i + 2;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let opt_f = |idx: usize, what: &str| -> Result<Option<f64>> {
            let s = field(idx);
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f(s, what, rowno).map(Some)
            }
        };
        rows.push(ReportRow {
            h: parse_f(field(0), "h", rowno)?,
            sigma: parse_f(field(1), "sigma", rowno)?,
            n_exp: field(2)
                .parse()
                .map_err(|_| Error::Format(format!("row {rowno}: bad N")))?,
            noise: field(3).to_string(),
            replicate: field(4)
                .parse()
                .map_err(|_| Error::Format(format!("row {rowno}: bad replicate")))?,
            seed: field(5)
                .parse()
                .map_err(|_| Error::Format(format!("row {rowno}: bad seed")))?,
            j_star: if field(6).is_empty() {
                None
            } else {
                Some(
                    field(6)
                        .parse()
                        .map_err(|_| Error::Format(format!("row {rowno}: bad j_star")))?,
                )
            },
            h_hat: opt_f(7, "h_hat")?,
            clamped: match field(8) {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Format(format!(
                        "row {rowno}: bad clamped flag {other:?}"
                    )))
                }
            },
            sigma_hat: opt_f(9, "sigma_hat")?,
            abs_error: opt_f(10, "abs_error")?,
            error: match field(11) {
                "" => None,
                s => Some(s.to_string()),
            },
            wall: Duration::ZERO,
        });
    }
    Ok(rows)
}

fn median(sorted: &mut [f64]) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

/// Per-cell aggregates plus run totals, as a JSON value. RMSE and the
/// median exclude clamped and failed rows; their counts are reported so
/// nothing is silently dropped.
pub fn summarize(rows: &[ReportRow]) -> serde_json::Value {
    let mut cell_order: Vec<(f64, f64, u32, String)> = Vec::new();
    for r in rows {
        let key = (r.h, r.sigma, r.n_exp, r.noise.clone());
        if !cell_order.contains(&key) {
            cell_order.push(key);
        }
    }
    let mut cells = Vec::new();
    for (h, sigma, n_exp, noise) in cell_order {
        let members: Vec<&ReportRow> = rows
            .iter()
            .filter(|r| r.h == h && r.sigma == sigma && r.n_exp == n_exp && r.noise == noise)
            .collect();
        let clamped = members.iter().filter(|r| r.clamped).count();
        let errors = members.iter().filter(|r| r.error.is_some()).count();
        let mut abs_errs: Vec<f64> = members
            .iter()
            .filter(|r| !r.clamped && r.error.is_none())
            .filter_map(|r| r.abs_error)
            .collect();
        let rmse = if abs_errs.is_empty() {
            None
        } else {
            Some(
                (abs_errs.iter().map(|e| e * e).sum::<f64>() / abs_errs.len() as f64).sqrt(),
            )
        };
        let med = median(&mut abs_errs);
        let wall_ms: f64 = members
            .iter()
            .map(|r| r.wall.as_secs_f64() * 1e3)
            .sum::<f64>();
        cells.push(json!({
            "h": h,
            "sigma": sigma,
            "N": n_exp,
            "noise": noise,
            "rows": members.len(),
            "clamped": clamped,
            "errors": errors,
            "rmse": rmse,
            "median_abs_error": med,
            "mean_wall_ms": if members.is_empty() { 0.0 } else { wall_ms / members.len() as f64 },
        }));
    }
    json!({
        "cells": cells,
        "total_rows": rows.len(),
        "total_wall_ms": rows.iter().map(|r| r.wall.as_secs_f64() * 1e3).sum::<f64>(),
    })
}

/// One grid size's contribution to the rate regression.
#[derive(Clone, Debug, Serialize)]
pub struct RatePoint {
    pub n_exp: u32,
    pub log2_n: f64,
    pub log2_rmse: f64,
    /// Rows that entered the RMSE.
    pub replicates: usize,
    /// Rows dropped because the estimate was clamped.
    pub clamped_excluded: usize,
}

/// Least-squares fit of log2 RMSE(H-hat) against log2 n, with the
/// theoretical slope -1/(4H+2) alongside for comparison.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub h: f64,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theory_slope: f64,
}

/// Fits the convergence rate from experiment rows at one H value. The
/// matching rows must share a single (sigma, noise) combination, since a
/// rate only makes sense along one sequence of experiments. Clamped rows
/// carry no rate information and are excluded unless `include_clamped`
/// is set; failed rows are always excluded.
pub fn rate_fit(rows: &[ReportRow], h: f64, include_clamped: bool) -> Result<RateFit> {
    let mut arm: Option<(f64, &str)> = None;
    let mut by_n: std::collections::BTreeMap<u32, (Vec<f64>, usize)> =
        std::collections::BTreeMap::new();
    for r in rows {
        if r.error.is_some() || (r.h - h).abs() > 1e-12 {
            continue;
        }
        match arm {
            None => arm = Some((r.sigma, &r.noise)),
            Some((sigma, noise)) => {
                if sigma != r.sigma || noise != r.noise {
                    return Err(Error::Format(format!(
                        "rows at H = {h} mix sigma or noise levels \
                         ({sigma}, {noise:?}) vs ({}, {:?}); fit one arm at a time",
                        r.sigma, r.noise
                    )));
                }
            }
        }
        let entry = by_n.entry(r.n_exp).or_default();
        if r.clamped && !include_clamped {
            entry.1 += 1;
            continue;
        }
        if let Some(e) = r.abs_error {
            entry.0.push(e);
        }
    }
    let points: Vec<RatePoint> = by_n
        .into_iter()
        .filter(|(_, (errs, _))| !errs.is_empty())
        .map(|(n_exp, (errs, excluded))| {
            let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
            RatePoint {
                n_exp,
                log2_n: n_exp as f64,
                log2_rmse: 0.5 * mse.log2(),
                replicates: errs.len(),
                clamped_excluded: excluded,
            }
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::Format(format!(
            "rate fit needs rows at 3 or more distinct grid sizes, found {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.log2_n).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.log2_rmse).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.log2_n - mean_x).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.log2_n - mean_x) * (p.log2_rmse - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.log2_rmse - (intercept + slope * p.log2_n)).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.log2_rmse - mean_y).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        h,
        points,
        slope,
        intercept,
        r_squared,
        theory_slope: -1.0 / (4.0 * h + 2.0),
    })
}

/// Reads an external series from a CSV file.
pub fn ingest(path: &Path, trim: bool) -> Result<IngestedSeries> {
    read_series(File::open(path)?, trim)
}
