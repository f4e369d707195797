//! Trial execution, CSV emission and recomputation checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use starris::channel::{build_scenario, trial_rng, AntennaCounts, ChannelSet};
use starris::driver::{self, SolveReport};
use starris::model::{self, ProtocolKind, SystemSpec, Traffic};

use crate::config::{ExperimentConfig, Scheme};
use crate::error::CliError;

pub const CSV_HEADER: &str =
    "sweep_var,sweep_value,protocol,traffic,trial,seed,wsr_bps_hz,rate_t,rate_r,tau_star,iters,wall_ms,warnings";

/// Rows recomputed by `--verify`.
pub const VERIFY_ROWS: usize = 10;

/// Largest accepted gap between a row's WSR and its recomputation.
pub const VERIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub sweep_index: usize,
    pub sweep_value: Option<f64>,
    pub scheme: Scheme,
    pub trial: usize,
    pub seed: u64,
}

/// A finished cell together with everything needed to recompute its WSR.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    /// Spec the stored configuration is evaluated under.
    pub spec: SystemSpec,
    pub channels: ChannelSet,
    pub report: SolveReport,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunFlags {
    pub jobs: usize,
    pub timing: bool,
}

/// Cells in output order: sweep point, then scheme, then trial.
pub fn cells(config: &ExperimentConfig, schemes: &[Scheme]) -> Vec<Cell> {
    let mut out = Vec::new();
    for (sweep_index, sweep_value) in config.sweep_points().into_iter().enumerate() {
        for &scheme in schemes {
            for trial in 0..config.trials {
                out.push(Cell { sweep_index, sweep_value, scheme, trial, seed: config.base_seed + trial as u64 });
            }
        }
    }
    out
}

/// Channels for one trial. Every scheme and every power level of a trial
/// sees the same draw.
pub fn trial_channels(config: &ExperimentConfig, spec: &SystemSpec, seed: u64) -> Result<ChannelSet, CliError> {
    let mut rng = trial_rng(seed);
    let geometry = config.geometry(&mut rng).map_err(|e| CliError::Config(e.to_string()))?;
    let fading = config.fading().map_err(|e| CliError::Config(e.to_string()))?;
    let counts = AntennaCounts {
        n_tx: spec.n_tx,
        n_user_t: spec.n_user_t,
        n_user_r: spec.n_user_r,
        m_elements: spec.m_elements,
    };
    build_scenario(&geometry, &fading, &counts, &mut rng).map_err(|e| CliError::Config(e.to_string()))
}

fn solve_on(
    spec: &SystemSpec,
    channels: &ChannelSet,
    config: &ExperimentConfig,
    cell: &Cell,
) -> Result<(SystemSpec, SolveReport), CliError> {
    let options = config.solver.options(cell.seed);
    let broadcast = spec.traffic == Traffic::Broadcast;
    let result = match (cell.scheme, broadcast) {
        (Scheme::Es, false) => driver::solve_es(spec, channels, &options),
        (Scheme::Ms, false) => driver::solve_ms(spec, channels, &options),
        (Scheme::Ts, false) => driver::solve_ts(spec, channels, &options),
        (Scheme::Es, true) => driver::solve_broadcast(spec, channels, &options, ProtocolKind::Es),
        (Scheme::Ms, true) => driver::solve_broadcast(spec, channels, &options, ProtocolKind::Ms),
        (Scheme::Ts, true) => driver::solve_broadcast(spec, channels, &options, ProtocolKind::Ts),
        (Scheme::Ro, _) => driver::solve_reflecting_only(spec, channels, &options),
    };
    let report = result.map_err(|e| {
        let at = cell.sweep_value.map(|v| format!(" at {v}")).unwrap_or_default();
        CliError::Solver(format!("{} trial {}{at}: {e}", cell.scheme, cell.trial))
    })?;
    // Time splitting and the reflect-only baseline serve one user at a time
    // whatever the traffic, so their configurations are scored as unicast.
    let eval = match cell.scheme {
        Scheme::Ts | Scheme::Ro => SystemSpec { traffic: Traffic::Unicast, ..spec.clone() },
        _ => spec.clone(),
    };
    Ok((eval, report))
}

/// Runs every cell on a pool of `flags.jobs` workers. Results come back in
/// cell order whatever the scheduling.
pub fn execute(config: &ExperimentConfig, schemes: &[Scheme], flags: RunFlags) -> Result<Vec<CellResult>, CliError> {
    let cells = cells(config, schemes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(flags.jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("worker pool: {e}")))?;
    let results: Vec<Result<CellResult, CliError>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let start = Instant::now();
                let spec = config.spec_at(cell.sweep_value);
                let channels = trial_channels(config, &spec, cell.seed)?;
                let (spec, report) = solve_on(&spec, &channels, config, cell)?;
                let wall_ms = if flags.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                Ok(CellResult { cell: *cell, spec, channels, report, wall_ms })
            })
            .collect()
    });
    results.into_iter().collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_row(config: &ExperimentConfig, r: &CellResult) -> String {
    let rep = &r.report;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        config.sweep.var.as_str(),
        opt(r.cell.sweep_value),
        r.cell.scheme,
        config.traffic_label(),
        r.cell.trial,
        r.cell.seed,
        rep.final_wsr,
        rep.rates.t,
        rep.rates.r,
        opt(rep.tau_star),
        rep.iterations,
        if r.wall_ms > 0.0 { format!("{:.3}", r.wall_ms) } else { "0".to_string() },
        rep.warnings.len(),
    )
}

pub fn csv(config: &ExperimentConfig, results: &[CellResult]) -> String {
    let mut out = String::with_capacity(128 * (results.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in results {
        out.push_str(&csv_row(config, r));
        out.push('\n');
    }
    out
}

/// Mean WSR per (sweep point, scheme), in output order.
pub fn ensemble_means(results: &[CellResult]) -> Vec<(Option<f64>, Scheme, f64)> {
    let mut acc: BTreeMap<(usize, Scheme), (Option<f64>, f64, usize)> = BTreeMap::new();
    for r in results {
        let e = acc.entry((r.cell.sweep_index, r.cell.scheme)).or_insert((r.cell.sweep_value, 0.0, 0));
        e.1 += r.report.final_wsr;
        e.2 += 1;
    }
    let mut order: Vec<(usize, Scheme)> = Vec::new();
    for r in results {
        let k = (r.cell.sweep_index, r.cell.scheme);
        if !order.contains(&k) {
            order.push(k);
        }
    }
    order
        .into_iter()
        .map(|k| {
            let (v, sum, n) = acc[&k];
            (v, k.1, sum / n as f64)
        })
        .collect()
}

pub fn summary(config: &ExperimentConfig, results: &[CellResult]) -> String {
    let mut out = String::new();
    let var = config.sweep.var.as_str();
    for (v, scheme, mean) in ensemble_means(results) {
        let at = v.map(|x| format!("{var} = {x}, ")).unwrap_or_default();
        let _ = writeln!(out, "{at}{scheme}: mean WSR {mean:.4} bit/s/Hz over {} trials", config.trials);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub rows: Vec<usize>,
    pub max_error: f64,
    pub violations: Vec<String>,
}

/// Recomputes the WSR of up to [`VERIFY_ROWS`] rows, chosen from
/// `base_seed`, from the stored configuration, and checks the value the CSV
/// reports and the feasibility of that configuration.
pub fn verify(config: &ExperimentConfig, results: &[CellResult]) -> Result<VerifyOutcome, CliError> {
    let mut rng = trial_rng(config.base_seed ^ 0x7e51_f1ed);
    let n = results.len();
    let mut rows = sample(&mut rng, n, VERIFY_ROWS.min(n)).into_vec();
    rows.sort_unstable();
    let mut max_error = 0.0f64;
    let mut violations = Vec::new();
    for &i in &rows {
        let r = &results[i];
        let rep = &r.report;
        let wsr = model::wsr(&r.spec, &r.channels, &rep.precoders, &rep.star)
            .map_err(|e| CliError::Solver(format!("verify row {}: {e}", i + 1)))?;
        let field = csv_row(config, r);
        let written: f64 = field.split(',').nth(6).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN);
        let err = (wsr - written).abs();
        max_error = if err.is_nan() { f64::INFINITY } else { max_error.max(err) };
        for v in model::validate(&rep.star, &r.spec) {
            violations.push(format!("row {}: {v}", i + 1));
        }
        for v in model::validate_precoders(&rep.precoders, &rep.star, &r.spec) {
            violations.push(format!("row {}: {v}", i + 1));
        }
    }
    Ok(VerifyOutcome { rows, max_error, violations })
}
