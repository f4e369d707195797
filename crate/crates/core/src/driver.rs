//! Block coordinate descent for energy splitting and mode selection, the
//! two-layer time-splitting search, and the reflecting-only baseline.

use rand::Rng;

use crate::channel::{trial_rng, ChannelSet};
use crate::error::{Error, Result};
use num_complex::Complex64;

use crate::linalg::{self, c64, ComplexMatrix, ComplexVector};
use crate::model::{self, PerUser, PrecoderSet, ProtocolKind, Side, StarConfig, SystemSpec, Traffic};
use crate::precoder;
use crate::sdpcore::SolverSettings;
use crate::tarc::{self, CcpOptions, MmOptions, RhoSchedule};
use crate::wmmse;

/// Relative WSR drop beyond which the previous iterate is kept.
pub const MONOTONE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub bcd_tol: f64,
    pub bcd_max_iter: usize,
    pub ccp_tol: f64,
    /// Linearization steps per coefficient update.
    pub ccp_max_iter: usize,
    pub ccp_penalty: f64,
    pub sdp: SolverSettings,
    pub mm_tol: f64,
    pub mm_max_iter: usize,
    pub tau_grid_step: f64,
    pub tau_refine_rounds: usize,
    /// Alternations per fixed `τ`.
    pub ts_inner_max_iter: usize,
    pub rho: RhoSchedule,
    /// Seeds the initial surface phases.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            bcd_tol: 1e-4,
            bcd_max_iter: 50,
            ccp_tol: 1e-4,
            ccp_max_iter: 5,
            ccp_penalty: 1.0,
            sdp: SolverSettings::default(),
            mm_tol: 1e-8,
            mm_max_iter: 500,
            tau_grid_step: 0.05,
            tau_refine_rounds: 2,
            ts_inner_max_iter: 30,
            rho: RhoSchedule::default(),
            seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("bcd_tol", self.bcd_tol),
            ("ccp_tol", self.ccp_tol),
            ("ccp_penalty", self.ccp_penalty),
            ("mm_tol", self.mm_tol),
            ("sdp.tol", self.sdp.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name}: must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("bcd_max_iter", self.bcd_max_iter),
            ("ccp_max_iter", self.ccp_max_iter),
            ("mm_max_iter", self.mm_max_iter),
            ("ts_inner_max_iter", self.ts_inner_max_iter),
            ("sdp.max_iter", self.sdp.max_iter),
        ] {
            if v == 0 {
                problems.push(format!("{name}: must be at least 1"));
            }
        }
        let steps = 1.0 / self.tau_grid_step;
        if !(self.tau_grid_step > 0.0 && self.tau_grid_step <= 1.0) || (steps - steps.round()).abs() > 1e-9 {
            problems.push(format!("tau_grid_step: must divide 1 evenly, got {}", self.tau_grid_step));
        }
        if !(self.rho.initial > 0.0 && self.rho.growth > 1.0 && self.rho.max >= self.rho.initial) {
            problems.push("rho: need initial > 0, growth > 1 and max >= initial".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn ccp(&self) -> CcpOptions {
        CcpOptions { tol: self.ccp_tol, max_outer: self.ccp_max_iter, penalty: self.ccp_penalty, sdp: self.sdp }
    }

    fn mm(&self) -> MmOptions {
        MmOptions { tol: self.mm_tol, max_iter: self.mm_max_iter }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub protocol: ProtocolKind,
    pub traffic: Traffic,
    pub star: StarConfig,
    pub precoders: PrecoderSet,
    pub final_wsr: f64,
    pub rates: PerUser<f64>,
    /// WSR after every outer iteration, starting with the initial point.
    pub wsr_history: Vec<f64>,
    /// Largest `|diag(Ω_t + Ω_r) − 1|` of the relaxations per iteration.
    pub constraint_residuals: Vec<f64>,
    pub rank_one_gaps: Vec<f64>,
    pub tau_star: Option<f64>,
    pub iterations: usize,
    pub sdp_solves: usize,
    pub warnings: Vec<String>,
}

fn context(what: &str, iteration: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Solver(m) => Error::Solver(format!("{what}, iteration {iteration}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{what}, iteration {iteration}: {m}")),
        other => other,
    }
}

/// Phases maximizing each side's cascaded gain `‖H_l Φ_l F‖_F²`, found by
/// MM from seeded random phases.
fn initial_phases(channels: &ChannelSet, seed: u64, mm: MmOptions) -> Result<PerUser<Vec<f64>>> {
    let m = channels.m_elements();
    let mut rng = trial_rng(seed ^ 0x5eed_0f_fa5e);
    let start: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let start = ComplexVector::from_iterator(m, start.iter().map(|&p| Complex64::from_polar(1.0, p)));
    let fft = (&channels.f * channels.f.adjoint()).transpose();
    PerUser::try_from_fn(|side| {
        let h = match side {
            Side::T => &channels.h_t,
            Side::R => &channels.h_r,
        };
        let gain = linalg::hermitize(&linalg::hadamard(&(h.adjoint() * h), &fft));
        let out = tarc::solve_ts_mm(&(-gain), &ComplexVector::zeros(m), &start, mm)?;
        Ok(out.phi.iter().map(|&z| linalg::wrap_phase(z)).collect())
    })
}

/// Leading `d` right singular vectors of `h`, scaled to Frobenius norm
/// `√power`.
fn eigen_beam(h: &ComplexMatrix, d: usize, power: f64) -> ComplexMatrix {
    let n = h.ncols();
    let gram = linalg::hermitize(&(h.adjoint() * h));
    let eig = linalg::hermitian_eigen(&gram);
    let mut w = ComplexMatrix::zeros(n, d);
    for k in 0..d.min(n) {
        w.set_column(k, &eig.vectors.column(n - 1 - k));
    }
    let norm = linalg::frobenius(&w);
    if norm > 0.0 {
        w *= c64((power.max(0.0)).sqrt() / norm, 0.0);
    }
    w
}

/// Eigen-beamforming start: equal power per user for unicast energy
/// splitting and mode selection, the full budget per active slot under time
/// splitting, and the dominant directions of `Σ H̄_lᴴH̄_l` for broadcast.
pub fn initial_precoders(spec: &SystemSpec, channels: &ChannelSet, star: &StarConfig) -> Result<PrecoderSet> {
    let h_bar = model::effective_channels(channels, star)?;
    let p = spec.power_budget;
    Ok(match (star.protocol, spec.traffic) {
        (ProtocolKind::Ts, _) => {
            // τ_t + τ_r = 1, so each active slot carries the full budget.
            let w = |side: Side| {
                let tau = star.tau()[side];
                let power = if tau > 0.0 { p } else { 0.0 };
                eigen_beam(&h_bar[side], spec.n_streams[side], power)
            };
            PrecoderSet::per_user(w(Side::T), w(Side::R))
        }
        (_, Traffic::Unicast) => PrecoderSet::per_user(
            eigen_beam(&h_bar.t, spec.n_streams.t, p / 2.0),
            eigen_beam(&h_bar.r, spec.n_streams.r, p / 2.0),
        ),
        (_, Traffic::Broadcast) => {
            let stacked = ComplexMatrix::from_fn(h_bar.t.nrows() + h_bar.r.nrows(), h_bar.t.ncols(), |i, j| {
                if i < h_bar.t.nrows() {
                    h_bar.t[(i, j)]
                } else {
                    h_bar.r[(i - h_bar.t.nrows(), j)]
                }
            });
            PrecoderSet::shared(eigen_beam(&stacked, spec.broadcast_streams(), p))
        }
    })
}

fn check_inputs(spec: &SystemSpec, channels: &ChannelSet, options: &SolveOptions) -> Result<()> {
    spec.validate()?;
    options.validate()?;
    channels.validate()?;
    channels.check_counts(&crate::channel::AntennaCounts {
        n_tx: spec.n_tx,
        m_elements: spec.m_elements,
        n_user_t: spec.n_user_t,
        n_user_r: spec.n_user_r,
    })
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old) / old.abs().max(1e-300)
}

/// Uniform transmit shares tried by the warm start.
const WARM_START_SHARES: [f64; 3] = [0.5, 0.0, 1.0];

/// Coefficient and precoder pair after a fixed-amplitude warm start.
struct WarmStart {
    share: f64,
    wsr: f64,
    star: StarConfig,
    precoders: PrecoderSet,
}

/// For each uniform split in [`WARM_START_SHARES`] the amplitudes are frozen
/// and precoder and MM phase updates alternate from the gain-maximizing
/// phases.
fn warm_starts(spec: &SystemSpec, channels: &ChannelSet, options: &SolveOptions) -> Result<Vec<WarmStart>> {
    let m = spec.m_elements;
    let phases = initial_phases(channels, options.seed, options.mm())?;
    WARM_START_SHARES
        .iter()
        .map(|&share| {
            // Relaxed splits are scored as energy splitting.
            let star = StarConfig {
                protocol: ProtocolKind::Es,
                amp_t: vec![share.sqrt(); m],
                amp_r: vec![(1.0 - share).sqrt(); m],
                phase_t: phases.t.clone(),
                phase_r: phases.r.clone(),
                tau_t: 1.0,
                tau_r: 1.0,
            };
            let (wsr, star, precoders) = fixed_amplitude_ao(spec, channels, options, star)?;
            Ok(WarmStart { share, wsr, star, precoders })
        })
        .collect()
}

fn best_start(starts: Vec<WarmStart>, keep: impl Fn(&WarmStart) -> bool) -> Option<WarmStart> {
    starts.into_iter().filter(keep).fold(None, |best, s| match best {
        Some(b) if b.wsr >= s.wsr => Some(b),
        _ => Some(s),
    })
}

/// Precoder and phase alternation with the amplitudes held fixed. With
/// `c = Dφ`, `D = diag(√α)`, the coefficient quadratic becomes
/// `φᴴ(DZD)φ − 2Re(φᵀDz)`, which MM handles directly.
fn fixed_amplitude_ao(
    spec: &SystemSpec,
    channels: &ChannelSet,
    options: &SolveOptions,
    mut star: StarConfig,
) -> Result<(f64, StarConfig, PrecoderSet)> {
    let mut w = initial_precoders(spec, channels, &star)?;
    let mut wsr = model::wsr(spec, channels, &w, &star)?;
    for it in 0..options.bcd_max_iter {
        let (state, _) = wmmse::update(spec, channels, &w, &star).map_err(context("warm-start decoder", it))?;
        let problem = precoder::assemble(spec, channels, &star, &state)?;
        let sol = precoder::solve_dual(&problem).map_err(context("warm-start precoder", it))?;
        let w_new = problem.into_precoders(&sol);
        let q = tarc::assemble_tarc(spec, channels, &w_new, &state, star.protocol)?;
        let mut next = star.clone();
        for side in Side::BOTH {
            let d = star.amplitudes(side);
            let m = d.len();
            let z = ComplexMatrix::from_fn(m, m, |i, j| q.z_mat[side][(i, j)] * (d[i] * d[j]));
            let zv = ComplexVector::from_fn(m, |i, _| q.z_vec[side][i] * d[i]);
            let start = ComplexVector::from_iterator(m, star.phases(side).iter().map(|&p| Complex64::from_polar(1.0, p)));
            let out = tarc::solve_ts_mm(&z, &zv, &start, options.mm()).map_err(context("warm-start phases", it))?;
            let p: Vec<f64> = out.phi.iter().map(|&c| linalg::wrap_phase(c)).collect();
            match side {
                Side::T => next.phase_t = p,
                Side::R => next.phase_r = p,
            }
        }
        let wsr_new = model::wsr(spec, channels, &w_new, &next)?;
        if wsr_new < wsr {
            break;
        }
        let gain = relative_change(wsr_new, wsr);
        star = next;
        w = w_new;
        wsr = wsr_new;
        if gain < options.bcd_tol {
            break;
        }
    }
    Ok((wsr, star, w))
}

/// Energy splitting starts from the best warm start. Mode selection runs
/// twice, from the even split through the penalty path and from the better
/// uniform binary assignment, and keeps the higher WSR.
fn coefficient_bcd(
    spec: &SystemSpec,
    channels: &ChannelSet,
    options: &SolveOptions,
    protocol: ProtocolKind,
) -> Result<SolveReport> {
    check_inputs(spec, channels, options)?;
    let starts = warm_starts(spec, channels, options)?;
    if protocol == ProtocolKind::Es {
        let s = best_start(starts, |_| true).expect("warm starts are non-empty");
        return bcd(spec, channels, options, protocol, s.star, s.precoders);
    }
    let mut binary = Vec::new();
    let mut relaxed = Vec::new();
    for s in starts {
        if s.share == 0.0 || s.share == 1.0 {
            binary.push(s);
        } else {
            relaxed.push(s);
        }
    }
    let mut best: Option<SolveReport> = None;
    let mut sdp_solves = 0;
    let mut iterations = 0;
    let candidates = [best_start(relaxed, |_| true), best_start(binary, |_| true)];
    for s in candidates.into_iter().flatten() {
        let mut star = s.star;
        if s.share == 0.0 || s.share == 1.0 {
            star.protocol = ProtocolKind::Ms;
        }
        let r = bcd(spec, channels, options, protocol, star, s.precoders)?;
        sdp_solves += r.sdp_solves;
        iterations += r.iterations;
        if best.as_ref().is_none_or(|b| r.final_wsr > b.final_wsr) {
            best = Some(r);
        }
    }
    let mut report = best.expect("mode selection has a start");
    report.sdp_solves = sdp_solves;
    report.iterations = iterations;
    Ok(report)
}

/// Shared loop for energy splitting and mode selection, unicast or
/// broadcast: `(U, V)`, then `W`, then `Φ`.
fn bcd(
    spec: &SystemSpec,
    channels: &ChannelSet,
    options: &SolveOptions,
    protocol: ProtocolKind,
    mut star: StarConfig,
    mut w: PrecoderSet,
) -> Result<SolveReport> {
    let mut report = SolveReport {
        protocol,
        traffic: spec.traffic,
        star: star.clone(),
        precoders: w.clone(),
        final_wsr: 0.0,
        rates: PerUser::new(0.0, 0.0),
        wsr_history: Vec::new(),
        constraint_residuals: Vec::new(),
        rank_one_gaps: Vec::new(),
        tau_star: None,
        iterations: 0,
        sdp_solves: 0,
        warnings: Vec::new(),
    };
    // A relaxed start is not mode-selection feasible; the history then
    // begins at the first binary iterate.
    if protocol == ProtocolKind::Es || star.protocol == ProtocolKind::Ms {
        report.wsr_history.push(model::wsr(spec, channels, &w, &star)?);
    }
    let mut rho = options.rho;
    for it in 0..options.bcd_max_iter {
        let (state, _) = wmmse::update(spec, channels, &w, &star).map_err(context("decoder update", it))?;
        let problem = precoder::assemble(spec, channels, &star, &state)?;
        let sol = precoder::solve_dual(&problem).map_err(context("precoder update", it))?;
        let w_new = problem.into_precoders(&sol);
        let q = tarc::assemble_tarc(spec, channels, &w_new, &state, protocol)?;
        let out = match protocol {
            ProtocolKind::Es => tarc::solve_es(&q, &star, options.ccp(), options.mm()),
            ProtocolKind::Ms => tarc::solve_ms(&q, &star, rho, options.ccp(), options.mm()),
            ProtocolKind::Ts => unreachable!("time splitting has its own search"),
        }
        .map_err(context("coefficient update", it))?;
        report.iterations = it + 1;
        report.sdp_solves += out.sdp_solves;
        report.constraint_residuals.push(out.constraint_residual);
        report.rank_one_gaps.push(out.rank_one_gap);
        report.warnings.extend(out.warnings.iter().map(|m| format!("iteration {it}: {m}")));
        if protocol == ProtocolKind::Ms {
            // Later updates start binary; continuing from the largest
            // penalty keeps them there.
            rho.initial = rho.max;
        }
        let wsr_new = model::wsr(spec, channels, &w_new, &out.star)?;
        let Some(&prev) = report.wsr_history.last() else {
            star = out.star;
            w = w_new;
            report.wsr_history.push(wsr_new);
            continue;
        };
        if wsr_new < prev - MONOTONE_TOL * prev.abs() {
            report
                .warnings
                .push(format!("iteration {it}: WSR fell from {prev:.9} to {wsr_new:.9}; keeping the previous iterate"));
            break;
        }
        star = out.star;
        w = w_new;
        report.wsr_history.push(wsr_new);
        if relative_change(wsr_new, prev) < options.bcd_tol {
            break;
        }
    }
    finish(report, spec, channels, star, w)
}

fn finish(
    mut report: SolveReport,
    spec: &SystemSpec,
    channels: &ChannelSet,
    star: StarConfig,
    w: PrecoderSet,
) -> Result<SolveReport> {
    report.rates = model::user_rates(spec, channels, &w, &star)?;
    report.final_wsr = model::wsr(spec, channels, &w, &star)?;
    if report.wsr_history.is_empty() {
        report.wsr_history.push(report.final_wsr);
    }
    report.star = star;
    report.precoders = w;
    Ok(report)
}

pub fn solve_es(spec: &SystemSpec, channels: &ChannelSet, options: &SolveOptions) -> Result<SolveReport> {
    unicast_only(spec)?;
    coefficient_bcd(spec, channels, options, ProtocolKind::Es)
}

pub fn solve_ms(spec: &SystemSpec, channels: &ChannelSet, options: &SolveOptions) -> Result<SolveReport> {
    unicast_only(spec)?;
    coefficient_bcd(spec, channels, options, ProtocolKind::Ms)
}

fn unicast_only(spec: &SystemSpec) -> Result<()> {
    if spec.traffic != Traffic::Unicast {
        return Err(Error::Domain("use solve_broadcast for broadcast traffic".into()));
    }
    Ok(())
}

pub fn solve_broadcast(
    spec: &SystemSpec,
    channels: &ChannelSet,
    options: &SolveOptions,
    protocol: ProtocolKind,
) -> Result<SolveReport> {
    if spec.traffic != Traffic::Broadcast {
        return Err(Error::Domain("solve_broadcast needs broadcast traffic".into()));
    }
    match protocol {
        // One user per slot: identical to unicast.
        ProtocolKind::Ts => {
            let unicast = SystemSpec { traffic: Traffic::Unicast, ..spec.clone() };
            let mut report = solve_ts(&unicast, channels, options)?;
            report.traffic = Traffic::Broadcast;
            Ok(report)
        }
        _ => coefficient_bcd(spec, channels, options, protocol),
    }
}

/// Alternating precoder and MM phase updates for a fixed `τ_t`.
fn ts_inner(
    spec: &SystemSpec,
    channels: &ChannelSet,
    options: &SolveOptions,
    tau_t: f64,
    phases: &PerUser<Vec<f64>>,
) -> Result<SolveReport> {
    let mut star = StarConfig::time_split(phases.t.clone(), phases.r.clone(), tau_t);
    let mut w = initial_precoders(spec, channels, &star)?;
    let wsr0 = model::wsr(spec, channels, &w, &star)?;
    let mut report = SolveReport {
        protocol: ProtocolKind::Ts,
        traffic: spec.traffic,
        star: star.clone(),
        precoders: w.clone(),
        final_wsr: wsr0,
        rates: PerUser::new(0.0, 0.0),
        wsr_history: vec![wsr0],
        constraint_residuals: Vec::new(),
        rank_one_gaps: Vec::new(),
        tau_star: Some(tau_t),
        iterations: 0,
        sdp_solves: 0,
        warnings: Vec::new(),
    };
    for it in 0..options.ts_inner_max_iter {
        let (state, _) = wmmse::update(spec, channels, &w, &star).map_err(context("decoder update", it))?;
        let problem = precoder::assemble(spec, channels, &star, &state)?;
        let sol = precoder::solve_dual(&problem).map_err(context("precoder update", it))?;
        let w_new = problem.into_precoders(&sol);
        let q = tarc::assemble_tarc(spec, channels, &w_new, &state, ProtocolKind::Ts)?;
        let mut next = star.clone();
        for side in Side::BOTH {
            let start = linalg::unit_phase(&star.coefficients(side));
            let out = tarc::solve_ts_mm(&q.z_mat[side], &q.z_vec[side], &start, options.mm())
                .map_err(context("phase update", it))?;
            let p: Vec<f64> = out.phi.iter().map(|&z| linalg::wrap_phase(z)).collect();
            match side {
                Side::T => next.phase_t = p,
                Side::R => next.phase_r = p,
            }
        }
        report.iterations = it + 1;
        let wsr_new = model::wsr(spec, channels, &w_new, &next)?;
        let prev = *report.wsr_history.last().expect("history starts with the initial point");
        if wsr_new < prev - MONOTONE_TOL * prev.abs() {
            report
                .warnings
                .push(format!("τ = {tau_t}, iteration {it}: WSR fell from {prev:.9} to {wsr_new:.9}; keeping the previous iterate"));
            break;
        }
        star = next;
        w = w_new;
        report.wsr_history.push(wsr_new);
        if relative_change(wsr_new, prev) < options.bcd_tol {
            break;
        }
    }
    finish(report, spec, channels, star, w)
}

/// Time splitting at a fixed `τ_t`, started like [`solve_ts`].
pub fn solve_ts_fixed(spec: &SystemSpec, channels: &ChannelSet, options: &SolveOptions, tau_t: f64) -> Result<SolveReport> {
    check_inputs(spec, channels, options)?;
    if !(0.0..=1.0).contains(&tau_t) {
        return Err(Error::Domain(format!("τ_t must lie in [0, 1], got {tau_t}")));
    }
    let spec = &SystemSpec { traffic: Traffic::Unicast, ..spec.clone() };
    let phases = initial_phases(channels, options.seed, options.mm())?;
    ts_inner(spec, channels, options, tau_t, &phases)
}

/// Grid search over `τ_t` followed by golden-section refinement around the
/// best grid point.
pub fn solve_ts(spec: &SystemSpec, channels: &ChannelSet, options: &SolveOptions) -> Result<SolveReport> {
    check_inputs(spec, channels, options)?;
    let spec = &SystemSpec { traffic: Traffic::Unicast, ..spec.clone() };
    let phases = initial_phases(channels, options.seed, options.mm())?;
    let steps = (1.0 / options.tau_grid_step).round() as usize;
    let mut evaluated = 0;
    let mut eval = |tau: f64| -> Result<SolveReport> {
        evaluated += 1;
        ts_inner(spec, channels, options, tau, &phases)
    };
    let mut best: Option<SolveReport> = None;
    let mut best_k = 0;
    for k in 0..=steps {
        let tau = (k as f64 / steps as f64).clamp(0.0, 1.0);
        let r = eval(tau)?;
        if best.as_ref().is_none_or(|b| r.final_wsr > b.final_wsr) {
            best = Some(r);
            best_k = k;
        }
    }
    let mut best = best.expect("the grid has at least two points");
    if options.tau_refine_rounds > 0 {
        let h = 1.0 / steps as f64;
        let (mut lo, mut hi) = (((best_k as f64 - 1.0) * h).max(0.0), ((best_k as f64 + 1.0) * h).min(1.0));
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut r1 = eval(x1)?;
        let mut r2 = eval(x2)?;
        for _ in 1..options.tau_refine_rounds {
            if r1.final_wsr >= r2.final_wsr {
                hi = x2;
                x2 = x1;
                r2 = r1;
                x1 = hi - g * (hi - lo);
                r1 = eval(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                r1 = r2;
                x2 = lo + g * (hi - lo);
                r2 = eval(x2)?;
            }
        }
        for r in [r1, r2] {
            if r.final_wsr > best.final_wsr {
                best = r;
            }
        }
    }
    best.tau_star = Some(best.star.tau_t);
    Ok(best)
}

/// All energy reflected: time splitting with the whole frame given to the R
/// user, reported as energy splitting with `α_r = 1`.
pub fn solve_reflecting_only(spec: &SystemSpec, channels: &ChannelSet, options: &SolveOptions) -> Result<SolveReport> {
    check_inputs(spec, channels, options)?;
    let unicast = SystemSpec { traffic: Traffic::Unicast, ..spec.clone() };
    let phases = initial_phases(channels, options.seed, options.mm())?;
    let ts = ts_inner(&unicast, channels, options, 0.0, &phases)?;
    let m = spec.m_elements;
    let star = StarConfig {
        protocol: ProtocolKind::Es,
        amp_t: vec![0.0; m],
        amp_r: vec![1.0; m],
        phase_t: ts.star.phase_t.clone(),
        phase_r: ts.star.phase_r.clone(),
        tau_t: 1.0,
        tau_r: 1.0,
    };
    let precoders = PrecoderSet::per_user(ComplexMatrix::zeros(spec.n_tx, spec.n_streams.t), ts.precoders.w_r.clone());
    let report = SolveReport { protocol: ProtocolKind::Es, traffic: Traffic::Unicast, tau_star: None, ..ts };
    finish(report, &unicast, channels, star, precoders)
}
