//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page draws one deployment, plots the time-splitting WSR against
//! `τ_t`, and runs a chosen protocol on the drawn channels.

use serde::Serialize;
use starris::channel::{build_scenario, dbm_to_watts, trial_rng, AntennaCounts, ChannelSet, FadingParams, ScenarioGeometry};
use starris::driver::{self, SolveOptions, SolveReport};
use starris::model::{PerUser, ProtocolKind, SystemSpec, Traffic};
use wasm_bindgen::prelude::*;

/// One drawn deployment and its channels.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: SystemSpec,
    pub geometry: ScenarioGeometry,
    pub channels: ChannelSet,
    pub seed: u64,
}

impl Scenario {
    pub fn draw(seed: u64, m_elements: usize, power_dbm: f64, broadcast: bool) -> starris::Result<Self> {
        let fading = FadingParams::default();
        let spec = SystemSpec {
            n_tx: 4,
            n_user_t: 4,
            n_user_r: 4,
            n_streams: PerUser::new(2, 2),
            m_elements,
            weights: PerUser::new(0.5, 0.5),
            power_budget: dbm_to_watts(power_dbm),
            noise_power: fading.noise_power,
            traffic: if broadcast { Traffic::Broadcast } else { Traffic::Unicast },
        };
        spec.validate()?;
        let mut rng = trial_rng(seed);
        let geometry = ScenarioGeometry::default_deployment(&mut rng)?;
        let counts = AntennaCounts { n_tx: 4, n_user_t: 4, n_user_r: 4, m_elements };
        let channels = build_scenario(&geometry, &fading, &counts, &mut rng)?;
        Ok(Self { spec, geometry, channels, seed })
    }

    fn options(&self, max_iter: usize) -> SolveOptions {
        SolveOptions {
            bcd_max_iter: max_iter.max(1),
            ts_inner_max_iter: max_iter.max(1),
            ccp_max_iter: 2,
            seed: self.seed,
            ..SolveOptions::default()
        }
    }

    /// Time-splitting WSR at `points` evenly spaced values of `τ_t` in [0, 1].
    pub fn tau_profile(&self, points: usize, max_iter: usize) -> starris::Result<Vec<f64>> {
        let n = points.max(2);
        let options = self.options(max_iter);
        (0..n)
            .map(|k| {
                let tau = k as f64 / (n - 1) as f64;
                driver::solve_ts_fixed(&self.spec, &self.channels, &options, tau).map(|r| r.final_wsr)
            })
            .collect()
    }

    pub fn solve(&self, protocol: &str, max_iter: usize) -> starris::Result<SolveReport> {
        let options = self.options(max_iter);
        let broadcast = self.spec.traffic == Traffic::Broadcast;
        match protocol.to_ascii_lowercase().as_str() {
            "ro" => driver::solve_reflecting_only(&self.spec, &self.channels, &options),
            other => {
                let kind: ProtocolKind = other.parse()?;
                match (kind, broadcast) {
                    (_, true) => driver::solve_broadcast(&self.spec, &self.channels, &options, kind),
                    (ProtocolKind::Es, false) => driver::solve_es(&self.spec, &self.channels, &options),
                    (ProtocolKind::Ms, false) => driver::solve_ms(&self.spec, &self.channels, &options),
                    (ProtocolKind::Ts, false) => driver::solve_ts(&self.spec, &self.channels, &options),
                }
            }
        }
    }

    /// Horizontal coordinates `[tx, ris, T user, R user]` as `x, y` pairs.
    pub fn layout(&self) -> Vec<f64> {
        let g = &self.geometry;
        [g.tx_position, g.ris_position, g.user_positions[0], g.user_positions[1]]
            .iter()
            .flat_map(|p| [p.x, p.y])
            .collect()
    }
}

/// What the page shows after a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub protocol: String,
    pub wsr: f64,
    pub rate_t: f64,
    pub rate_r: f64,
    pub tau_star: Option<f64>,
    pub iterations: usize,
    pub alpha_t: Vec<f64>,
    pub phase_t: Vec<f64>,
    pub phase_r: Vec<f64>,
    pub history: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SolveSummary {
    pub fn new(protocol: &str, r: &SolveReport) -> Self {
        Self {
            protocol: protocol.to_ascii_uppercase(),
            wsr: r.final_wsr,
            rate_t: r.rates.t,
            rate_r: r.rates.r,
            tau_star: r.tau_star,
            iterations: r.iterations,
            alpha_t: r.star.amp_t.iter().map(|a| a * a).collect(),
            phase_t: r.star.phase_t.clone(),
            phase_r: r.star.phase_r.clone(),
            history: r.wsr_history.clone(),
            warnings: r.warnings.clone(),
        }
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    inner: Scenario,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, m_elements: u32, power_dbm: f64, broadcast: bool) -> Result<Demo, JsError> {
        Scenario::draw(seed as u64, m_elements as usize, power_dbm, broadcast)
            .map(|inner| Demo { inner })
            .map_err(js_err)
    }

    pub fn layout(&self) -> Vec<f64> {
        self.inner.layout()
    }

    #[wasm_bindgen(js_name = tauProfile)]
    pub fn tau_profile(&self, points: u32, max_iter: u32) -> Result<Vec<f64>, JsError> {
        self.inner.tau_profile(points as usize, max_iter as usize).map_err(js_err)
    }

    /// Runs `es`, `ms`, `ts` or `ro` and returns a JSON summary.
    pub fn solve(&self, protocol: &str, max_iter: u32) -> Result<String, JsError> {
        let report = self.inner.solve(protocol, max_iter as usize).map_err(js_err)?;
        serde_json::to_string(&SolveSummary::new(protocol, &report)).map_err(js_err)
    }
}
