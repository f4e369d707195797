//! Experiment configuration: a TOML file with a handful of top-level keys and
//! `[sweep]`, `[system]`, `[scenario]` and `[solver]` sections. Powers are
//! given in dBm, angles in degrees.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use starris::channel::{dbm_to_watts, db_to_linear, FadingParams, Position, ScenarioGeometry};
use starris::driver::SolveOptions;
use starris::model::{PerUser, SystemSpec, Traffic};
use starris::sdpcore::SolverSettings;
use starris::tarc::RhoSchedule;

use crate::error::CliError;

/// Protocols a row can be produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Es,
    Ms,
    Ts,
    /// Conventional reflect-only surface.
    #[serde(alias = "reflecting_only")]
    Ro,
}

impl Scheme {
    pub const COMPARE: [Scheme; 4] = [Scheme::Es, Scheme::Ms, Scheme::Ts, Scheme::Ro];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Es => "ES",
            Scheme::Ms => "MS",
            Scheme::Ts => "TS",
            Scheme::Ro => "RO",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMode {
    #[default]
    Unicast,
    Broadcast,
}

impl From<TrafficMode> for Traffic {
    fn from(t: TrafficMode) -> Self {
        match t {
            TrafficMode::Unicast => Traffic::Unicast,
            TrafficMode::Broadcast => Traffic::Broadcast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    #[default]
    None,
    PowerDbm,
    MElements,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::None => "none",
            SweepVar::PowerDbm => "power_dbm",
            SweepVar::MElements => "m_elements",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub var: SweepVar,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub m_elements: usize,
    pub n_user_t: usize,
    pub n_user_r: usize,
    pub n_streams_t: usize,
    pub n_streams_r: usize,
    pub power_dbm: f64,
    pub noise_dbm: f64,
    /// `[w_t, w_r]`.
    pub weights: [f64; 2],
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_tx: 4,
            m_elements: 8,
            n_user_t: 4,
            n_user_r: 4,
            n_streams_t: 2,
            n_streams_r: 2,
            power_dbm: 30.0,
            noise_dbm: -80.0,
            weights: [0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub tx_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub user_radius: f64,
    pub user_height: f64,
    /// Fixed user azimuths on their half-circles; drawn uniformly per trial
    /// when absent.
    pub azimuth_t_deg: Option<f64>,
    pub azimuth_r_deg: Option<f64>,
    pub rician_k_db: f64,
    pub pathloss_exponent: f64,
    pub pathloss_ref_db: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            tx_position: [0.0, 0.0, 10.0],
            ris_position: [0.0, 30.0, 10.0],
            user_radius: 5.0,
            user_height: 2.0,
            azimuth_t_deg: None,
            azimuth_r_deg: None,
            rician_k_db: 5.0,
            pathloss_exponent: 2.2,
            pathloss_ref_db: -30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub bcd_tol: f64,
    pub bcd_max_iter: usize,
    pub ccp_tol: f64,
    pub ccp_max_iter: usize,
    pub ccp_penalty: f64,
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
    pub mm_tol: f64,
    pub mm_max_iter: usize,
    pub tau_grid_step: f64,
    pub tau_refine_rounds: usize,
    pub ts_inner_max_iter: usize,
    pub rho_initial: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    pub rho_max_rounds: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self {
            bcd_tol: o.bcd_tol,
            bcd_max_iter: o.bcd_max_iter,
            ccp_tol: o.ccp_tol,
            ccp_max_iter: o.ccp_max_iter,
            ccp_penalty: o.ccp_penalty,
            sdp_tol: o.sdp.tol,
            sdp_max_iter: o.sdp.max_iter,
            mm_tol: o.mm_tol,
            mm_max_iter: o.mm_max_iter,
            tau_grid_step: o.tau_grid_step,
            tau_refine_rounds: o.tau_refine_rounds,
            ts_inner_max_iter: o.ts_inner_max_iter,
            rho_initial: o.rho.initial,
            rho_growth: o.rho.growth,
            rho_max: o.rho.max,
            rho_max_rounds: o.rho.max_rounds,
        }
    }
}

impl SolverConfig {
    /// Options for one trial; `seed` drives the initial phases.
    pub fn options(&self, seed: u64) -> SolveOptions {
        SolveOptions {
            bcd_tol: self.bcd_tol,
            bcd_max_iter: self.bcd_max_iter,
            ccp_tol: self.ccp_tol,
            ccp_max_iter: self.ccp_max_iter,
            ccp_penalty: self.ccp_penalty,
            sdp: SolverSettings { tol: self.sdp_tol, max_iter: self.sdp_max_iter },
            mm_tol: self.mm_tol,
            mm_max_iter: self.mm_max_iter,
            tau_grid_step: self.tau_grid_step,
            tau_refine_rounds: self.tau_refine_rounds,
            ts_inner_max_iter: self.ts_inner_max_iter,
            rho: RhoSchedule {
                initial: self.rho_initial,
                growth: self.rho_growth,
                max: self.rho_max,
                max_rounds: self.rho_max_rounds,
            },
            seed,
        }
    }
}

fn default_protocols() -> Vec<Scheme> {
    vec![Scheme::Es, Scheme::Ms, Scheme::Ts]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_protocols")]
    pub protocols: Vec<Scheme>,
    #[serde(default)]
    pub traffic: TrafficMode,
    /// CSV destination; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// One failed check, named by the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigViolation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.message().trim().to_string();
            if path.is_empty() || path == "." {
                CliError::Config(msg)
            } else {
                CliError::Config(format!("{path}: {msg}"))
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn traffic_label(&self) -> &'static str {
        Traffic::from(self.traffic).as_str()
    }

    /// Points of the sweep; a single `None` when nothing is swept.
    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        match self.sweep.var {
            SweepVar::None => vec![None],
            _ => self.sweep.values.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// System parameters at one sweep point.
    pub fn spec_at(&self, point: Option<f64>) -> SystemSpec {
        let s = &self.system;
        let mut power_dbm = s.power_dbm;
        let mut m = s.m_elements;
        match (self.sweep.var, point) {
            (SweepVar::PowerDbm, Some(v)) => power_dbm = v,
            (SweepVar::MElements, Some(v)) => m = v as usize,
            _ => {}
        }
        SystemSpec {
            n_tx: s.n_tx,
            n_user_t: s.n_user_t,
            n_user_r: s.n_user_r,
            n_streams: PerUser::new(s.n_streams_t, s.n_streams_r),
            m_elements: m,
            weights: PerUser::new(s.weights[0], s.weights[1]),
            power_budget: dbm_to_watts(power_dbm),
            noise_power: dbm_to_watts(s.noise_dbm),
            traffic: self.traffic.into(),
        }
    }

    pub fn fading(&self) -> starris::Result<FadingParams> {
        let sc = &self.scenario;
        FadingParams::new(sc.rician_k_db, sc.pathloss_exponent, db_to_linear(sc.pathloss_ref_db), self.system.noise_dbm)
    }

    /// User placement for one trial; consumes draws from `rng` only when
    /// the azimuths are not fixed.
    pub fn geometry<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> starris::Result<ScenarioGeometry> {
        let sc = &self.scenario;
        let tx = Position::from(sc.tx_position);
        let ris = Position::from(sc.ris_position);
        match (sc.azimuth_t_deg, sc.azimuth_r_deg) {
            (Some(t), Some(r)) => {
                ScenarioGeometry::with_azimuths(tx, ris, sc.user_radius, sc.user_height, t.to_radians(), r.to_radians())
            }
            _ => ScenarioGeometry::sample(tx, ris, sc.user_radius, sc.user_height, rng),
        }
    }

    /// Schema-level invariants; no solves are run.
    pub fn validate(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        let mut push = |field: &str, message: String| out.push(ConfigViolation { field: field.to_string(), message });
        if self.trials == 0 {
            push("trials", "must be at least 1".into());
        }
        if self.protocols.is_empty() {
            push("protocols", "must list at least one protocol".into());
        }
        let mut seen = self.protocols.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.protocols.len() {
            push("protocols", "must not repeat a protocol".into());
        }
        let w = self.system.weights;
        if !(w.iter().all(|x| (0.0..=1.0).contains(x)) && (w[0] + w[1] - 1.0).abs() <= 1e-9) {
            push("weights", format!("must lie in [0, 1] and sum to 1, got {} + {} = {}", w[0], w[1], w[0] + w[1]));
        }
        let sys = &self.system;
        for (name, v) in [
            ("n_tx", sys.n_tx),
            ("m_elements", sys.m_elements),
            ("n_user_t", sys.n_user_t),
            ("n_user_r", sys.n_user_r),
            ("n_streams_t", sys.n_streams_t),
            ("n_streams_r", sys.n_streams_r),
        ] {
            if v == 0 {
                push(&format!("system.{name}"), "must be at least 1".into());
            }
        }
        match self.sweep.var {
            SweepVar::None => {
                if !self.sweep.values.is_empty() {
                    push("sweep.values", "must be empty when sweep.var = \"none\"".into());
                }
            }
            var => {
                if self.sweep.values.is_empty() {
                    push("sweep.values", format!("must not be empty when sweeping {}", var.as_str()));
                }
                for &v in &self.sweep.values {
                    let ok = match var {
                        SweepVar::PowerDbm => v.is_finite(),
                        _ => v >= 1.0 && v.fract() == 0.0,
                    };
                    if !ok {
                        push("sweep.values", format!("{v} is not a valid {}", var.as_str()));
                    }
                }
            }
        }
        for point in self.sweep_points() {
            if let Err(starris::Error::Validation(problems)) = self.spec_at(point).validate() {
                for p in problems {
                    // Weights and counts are reported above under their own names.
                    if !p.starts_with("weights") && !p.starts_with("counts") && !p.starts_with("n_streams") {
                        let (field, msg) = split_problem(&p);
                        push(&format!("system.{field}"), msg);
                    }
                }
            }
        }
        if let Err(e) = self.fading() {
            push("scenario", e.to_string());
        }
        let sc = &self.scenario;
        if sc.azimuth_t_deg.is_some() != sc.azimuth_r_deg.is_some() {
            push("scenario.azimuth", "give both azimuth_t_deg and azimuth_r_deg or neither".into());
        }
        let mut probe = starris::channel::trial_rng(self.base_seed);
        if let Err(e) = self.geometry(&mut probe) {
            push("scenario", e.to_string());
        }
        if let Err(starris::Error::Validation(problems)) = self.solver.options(0).validate() {
            for p in problems {
                let (field, msg) = split_problem(&p);
                push(&format!("solver.{}", field.replace('.', "_")), msg);
            }
        }
        out
    }
}

fn split_problem(p: &str) -> (String, String) {
    match p.split_once(':') {
        Some((f, m)) => (f.trim().to_string(), m.trim().to_string()),
        None => ("general".to_string(), p.to_string()),
    }
}
