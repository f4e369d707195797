//! Core data types, protocol constraint validation and exact rate
//! evaluation.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, ComplexVector};

/// Absolute tolerance for the energy relationship, time split and power
/// budget.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Distance from {0, 1} accepted for mode-selection amplitudes.
pub const BINARITY_TOL: f64 = 1e-3;
/// Deviation from unit modulus accepted for time-splitting coefficients.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    /// Energy splitting: every element serves both sides.
    Es,
    /// Mode selection: every element serves exactly one side.
    Ms,
    /// Time splitting: all elements switch sides over time.
    Ts,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::Es, ProtocolKind::Ms, ProtocolKind::Ts];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Es => "ES",
            ProtocolKind::Ms => "MS",
            ProtocolKind::Ts => "TS",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ES" => Ok(ProtocolKind::Es),
            "MS" => Ok(ProtocolKind::Ms),
            "TS" => Ok(ProtocolKind::Ts),
            other => Err(Error::Domain(format!("unknown protocol '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Traffic {
    Unicast,
    Broadcast,
}

impl Traffic {
    pub fn as_str(self) -> &'static str {
        match self {
            Traffic::Unicast => "unicast",
            Traffic::Broadcast => "broadcast",
        }
    }
}

impl fmt::Display for Traffic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Traffic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unicast" => Ok(Traffic::Unicast),
            "broadcast" => Ok(Traffic::Broadcast),
            other => Err(Error::Domain(format!("unknown traffic mode '{other}'"))),
        }
    }
}

/// The transmission-side (T) or reflection-side (R) user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    T,
    R,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::T, Side::R];

    pub fn other(self) -> Side {
        match self {
            Side::T => Side::R,
            Side::R => Side::T,
        }
    }
}

/// One value per user.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerUser<T> {
    pub t: T,
    pub r: T,
}

impl<T> PerUser<T> {
    pub fn new(t: T, r: T) -> Self {
        Self { t, r }
    }

    pub fn from_fn(mut f: impl FnMut(Side) -> T) -> Self {
        let t = f(Side::T);
        let r = f(Side::R);
        Self { t, r }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Side, &T) -> U) -> PerUser<U> {
        PerUser { t: f(Side::T, &self.t), r: f(Side::R, &self.r) }
    }

    pub fn try_from_fn(mut f: impl FnMut(Side) -> Result<T>) -> Result<Self> {
        let t = f(Side::T)?;
        let r = f(Side::R)?;
        Ok(Self { t, r })
    }

    pub fn swapped(self) -> Self {
        Self { t: self.r, r: self.t }
    }
}

impl<T> Index<Side> for PerUser<T> {
    type Output = T;

    fn index(&self, side: Side) -> &T {
        match side {
            Side::T => &self.t,
            Side::R => &self.r,
        }
    }
}

impl<T> IndexMut<Side> for PerUser<T> {
    fn index_mut(&mut self, side: Side) -> &mut T {
        match side {
            Side::T => &mut self.t,
            Side::R => &mut self.r,
        }
    }
}

/// Transmitting and reflecting coefficients of the surface.
///
/// `amp_*` hold the square-root amplitudes `√α` per element, `phase_*` the
/// phase shifts in radians. `tau_*` are the time fractions used by the
/// time-splitting protocol and are `(1, 1)` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct StarConfig {
    pub protocol: ProtocolKind,
    pub amp_t: Vec<f64>,
    pub amp_r: Vec<f64>,
    pub phase_t: Vec<f64>,
    pub phase_r: Vec<f64>,
    pub tau_t: f64,
    pub tau_r: f64,
}

impl StarConfig {
    /// Energy splitting with `α_t = α_r = 1/2` and zero phases.
    pub fn even_split(m: usize) -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            protocol: ProtocolKind::Es,
            amp_t: vec![a; m],
            amp_r: vec![a; m],
            phase_t: vec![0.0; m],
            phase_r: vec![0.0; m],
            tau_t: 1.0,
            tau_r: 1.0,
        }
    }

    /// Time splitting with unit amplitudes.
    pub fn time_split(phase_t: Vec<f64>, phase_r: Vec<f64>, tau_t: f64) -> Self {
        let m = phase_t.len();
        Self {
            protocol: ProtocolKind::Ts,
            amp_t: vec![1.0; m],
            amp_r: vec![1.0; phase_r.len()],
            phase_t: phase_t.into_iter().map(linalg::wrap_angle).collect(),
            phase_r: phase_r.into_iter().map(linalg::wrap_angle).collect(),
            tau_t,
            tau_r: 1.0 - tau_t,
        }
    }

    /// Builds a configuration from per-side coefficient vectors `√α e^{jφ}`.
    pub fn from_coefficients(
        protocol: ProtocolKind,
        coeff_t: &ComplexVector,
        coeff_r: &ComplexVector,
    ) -> Self {
        let amps = |v: &ComplexVector| v.iter().map(|z| z.norm()).collect::<Vec<_>>();
        let phases = |v: &ComplexVector| v.iter().map(|z| linalg::wrap_phase(*z)).collect::<Vec<_>>();
        Self {
            protocol,
            amp_t: amps(coeff_t),
            amp_r: amps(coeff_r),
            phase_t: phases(coeff_t),
            phase_r: phases(coeff_r),
            tau_t: 1.0,
            tau_r: 1.0,
        }
    }

    pub fn m_elements(&self) -> usize {
        self.amp_t.len()
    }

    pub fn amplitudes(&self, side: Side) -> &[f64] {
        match side {
            Side::T => &self.amp_t,
            Side::R => &self.amp_r,
        }
    }

    pub fn phases(&self, side: Side) -> &[f64] {
        match side {
            Side::T => &self.phase_t,
            Side::R => &self.phase_r,
        }
    }

    pub fn tau(&self) -> PerUser<f64> {
        PerUser::new(self.tau_t, self.tau_r)
    }

    /// Diagonal of `Φ_l`: `√α_m e^{jφ_m}`.
    pub fn coefficients(&self, side: Side) -> ComplexVector {
        let amp = self.amplitudes(side);
        let phase = self.phases(side);
        ComplexVector::from_iterator(
            amp.len(),
            amp.iter().zip(phase).map(|(&a, &p)| Complex64::from_polar(a, p)),
        )
    }

    /// Same coefficients relabelled as the other side.
    pub fn swapped(&self) -> Self {
        Self {
            protocol: self.protocol,
            amp_t: self.amp_r.clone(),
            amp_r: self.amp_t.clone(),
            phase_t: self.phase_r.clone(),
            phase_r: self.phase_t.clone(),
            tau_t: self.tau_r,
            tau_r: self.tau_t,
        }
    }
}

/// Precoding matrices. With `shared` set, both users are served by the same
/// common-message precoder (`w_t == w_r`) whose power counts once.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub w_t: ComplexMatrix,
    pub w_r: ComplexMatrix,
    pub shared: bool,
}

impl PrecoderSet {
    pub fn per_user(w_t: ComplexMatrix, w_r: ComplexMatrix) -> Self {
        Self { w_t, w_r, shared: false }
    }

    pub fn shared(w: ComplexMatrix) -> Self {
        Self { w_t: w.clone(), w_r: w, shared: true }
    }

    pub fn get(&self, side: Side) -> &ComplexMatrix {
        match side {
            Side::T => &self.w_t,
            Side::R => &self.w_r,
        }
    }

    /// Transmit power, time-weighted by `tau` when given.
    pub fn power(&self, tau: Option<PerUser<f64>>) -> f64 {
        let energy = |w: &ComplexMatrix| w.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if self.shared {
            return energy(&self.w_t);
        }
        match tau {
            Some(tau) => tau.t * energy(&self.w_t) + tau.r * energy(&self.w_r),
            None => energy(&self.w_t) + energy(&self.w_r),
        }
    }

    pub fn swapped(&self) -> Self {
        Self { w_t: self.w_r.clone(), w_r: self.w_t.clone(), shared: self.shared }
    }
}

/// System dimensions, weights and budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub n_tx: usize,
    pub n_user_t: usize,
    pub n_user_r: usize,
    /// Streams per user; broadcast uses `n_streams.t` for the common message.
    pub n_streams: PerUser<usize>,
    pub m_elements: usize,
    pub weights: PerUser<f64>,
    /// Watts.
    pub power_budget: f64,
    /// Watts.
    pub noise_power: f64,
    pub traffic: Traffic,
}

impl SystemSpec {
    pub fn n_user(&self, side: Side) -> usize {
        match side {
            Side::T => self.n_user_t,
            Side::R => self.n_user_r,
        }
    }

    pub fn broadcast_streams(&self) -> usize {
        self.n_streams.t
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_tx == 0 || self.n_user_t == 0 || self.n_user_r == 0 || self.m_elements == 0 {
            problems.push("counts: antenna and element counts must be at least 1".to_string());
        }
        if self.n_streams.t == 0 || self.n_streams.r == 0 {
            problems.push("n_streams: stream counts must be at least 1".to_string());
        }
        let (wt, wr) = (self.weights.t, self.weights.r);
        if !(0.0..=1.0).contains(&wt) || !(0.0..=1.0).contains(&wr) || (wt + wr - 1.0).abs() > FEASIBILITY_TOL {
            problems.push(format!("weights: must lie in [0,1] and sum to 1, got ({wt}, {wr})"));
        }
        if !(self.power_budget > 0.0) {
            problems.push("power_budget: must be positive".to_string());
        }
        if !(self.noise_power > 0.0) {
            problems.push("noise_power: must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            n_user_t: self.n_user_r,
            n_user_r: self.n_user_t,
            n_streams: self.n_streams.swapped(),
            weights: self.weights.swapped(),
            ..self.clone()
        }
    }
}

/// A violated constraint, named by the invariant it breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.constraint, self.detail)
    }
}

/// `H_l · Diag(√α^l ⊙ e^{jφ^l}) · F`.
pub fn effective_channel(
    h_l: &ComplexMatrix,
    star: &StarConfig,
    side: Side,
    f: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let coeff = star.coefficients(side);
    if h_l.ncols() != coeff.len() || f.nrows() != coeff.len() {
        return Err(Error::Dimension(format!(
            "effective channel: h is {}x{}, {} coefficients, f is {}x{}",
            h_l.nrows(),
            h_l.ncols(),
            coeff.len(),
            f.nrows(),
            f.ncols()
        )));
    }
    // Scale the rows of F instead of forming Diag(φ).
    let mut scaled = f.clone();
    for (m, c) in coeff.iter().enumerate() {
        for j in 0..scaled.ncols() {
            scaled[(m, j)] *= *c;
        }
    }
    Ok(h_l * scaled)
}

/// Effective channels of both users.
pub fn effective_channels(channels: &ChannelSet, star: &StarConfig) -> Result<PerUser<ComplexMatrix>> {
    PerUser::try_from_fn(|side| {
        let h = match side {
            Side::T => &channels.h_t,
            Side::R => &channels.h_r,
        };
        effective_channel(h, star, side, &channels.f)
    })
}

/// `σ² I + H̄ W' W'ᴴ H̄ᴴ`, the interference-plus-noise covariance.
pub fn interference_covariance(
    h_bar: &ComplexMatrix,
    w_other: Option<&ComplexMatrix>,
    noise: f64,
) -> Result<ComplexMatrix> {
    let n = h_bar.nrows();
    let mut c = linalg::identity(n).scale(noise);
    if let Some(w) = w_other {
        linalg::check_product(h_bar, w, "interference")?;
        let hw = h_bar * w;
        c += &hw * hw.adjoint();
    }
    Ok(linalg::hermitize(&c))
}

/// `log₂ det(I + H̄WWᴴH̄ᴴ C⁻¹)` with `C = H̄W'W'ᴴH̄ᴴ + σ²I`.
pub fn rate_unicast(
    h_bar: &ComplexMatrix,
    w_l: &ComplexMatrix,
    w_other: Option<&ComplexMatrix>,
    noise: f64,
) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    linalg::check_product(h_bar, w_l, "rate")?;
    let c = interference_covariance(h_bar, w_other, noise)?;
    let hw = h_bar * w_l;
    let total = linalg::hermitize(&(&c + &hw * hw.adjoint()));
    // log det(C + S) - log det(C) avoids forming C⁻¹.
    let rate = linalg::log2_det_pd(&total, "signal-plus-interference covariance")?
        - linalg::log2_det_pd(&c, "interference covariance")?;
    Ok(rate.max(0.0))
}

/// `τ log₂ det(I + σ⁻² H̄WWᴴH̄ᴴ)`.
pub fn rate_ts(h_bar: &ComplexMatrix, w_l: &ComplexMatrix, noise: f64, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("time fraction {tau} outside [0, 1]")));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    Ok(tau * rate_unicast(h_bar, w_l, None, noise)?)
}

/// Per-user rates for the protocol and traffic mode of `spec`/`star`.
///
/// Time splitting applies `τ_l` once per user. Broadcast energy splitting
/// and mode selection evaluate each user's rate for the shared precoder
/// without an interference term.
pub fn user_rates(
    spec: &SystemSpec,
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    star: &StarConfig,
) -> Result<PerUser<f64>> {
    let h_bar = effective_channels(channels, star)?;
    let noise = spec.noise_power;
    match (star.protocol, spec.traffic) {
        (ProtocolKind::Ts, _) => PerUser::try_from_fn(|side| {
            rate_ts(&h_bar[side], precoders.get(side), noise, star.tau()[side])
        }),
        (_, Traffic::Broadcast) => PerUser::try_from_fn(|side| {
            rate_unicast(&h_bar[side], precoders.get(side), None, noise)
        }),
        (_, Traffic::Unicast) => PerUser::try_from_fn(|side| {
            rate_unicast(
                &h_bar[side],
                precoders.get(side),
                Some(precoders.get(side.other())),
                noise,
            )
        }),
    }
}

/// Weighted sum rate `Σ_l w_l R_l`; fails when a constraint is violated.
pub fn wsr(
    spec: &SystemSpec,
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    star: &StarConfig,
) -> Result<f64> {
    let mut violations = validate(star, spec);
    violations.extend(validate_precoders(precoders, star, spec));
    if !violations.is_empty() {
        return Err(Error::Validation(violations.iter().map(|v| v.to_string()).collect()));
    }
    let rates = user_rates(spec, channels, precoders, star)?;
    Ok(spec.weights.t * rates.t + spec.weights.r * rates.r)
}

/// Protocol constraints on the surface coefficients. Empty iff feasible.
pub fn validate(star: &StarConfig, spec: &SystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let m = spec.m_elements;
    if star.amp_t.len() != m || star.amp_r.len() != m || star.phase_t.len() != m || star.phase_r.len() != m {
        out.push(Violation {
            constraint: "dimension",
            detail: format!("expected {m} coefficients per side"),
        });
        return out;
    }
    let tau_range = std::f64::consts::TAU;
    for side in Side::BOTH {
        for (k, &p) in star.phases(side).iter().enumerate() {
            if !(0.0..tau_range).contains(&p) {
                out.push(Violation {
                    constraint: "phase range",
                    detail: format!("{side:?} element {k}: phase {p} outside [0, 2π)"),
                });
            }
        }
    }
    match star.protocol {
        ProtocolKind::Es | ProtocolKind::Ms => {
            for k in 0..m {
                let at = star.amp_t[k] * star.amp_t[k];
                let ar = star.amp_r[k] * star.amp_r[k];
                let in_range = |a: f64| (-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&a);
                if star.amp_t[k] < 0.0 || star.amp_r[k] < 0.0 || !in_range(at) || !in_range(ar) {
                    out.push(Violation {
                        constraint: "amplitude range",
                        detail: format!("element {k}: α_t={at}, α_r={ar}"),
                    });
                }
                if (at + ar - 1.0).abs() > FEASIBILITY_TOL {
                    out.push(Violation {
                        constraint: "energy relationship",
                        detail: format!("element {k}: α_t + α_r = {}", at + ar),
                    });
                }
                if star.protocol == ProtocolKind::Ms {
                    for (side, a) in [(Side::T, at), (Side::R, ar)] {
                        if a.min(1.0 - a).abs() > BINARITY_TOL {
                            out.push(Violation {
                                constraint: "mode selection binarity",
                                detail: format!("{side:?} element {k}: α = {a}"),
                            });
                        }
                    }
                }
            }
        }
        ProtocolKind::Ts => {
            for side in Side::BOTH {
                for (k, &a) in star.amplitudes(side).iter().enumerate() {
                    if (a - 1.0).abs() > UNIT_MODULUS_TOL {
                        out.push(Violation {
                            constraint: "unit modulus",
                            detail: format!("{side:?} element {k}: amplitude {a}"),
                        });
                    }
                }
            }
            let (tt, tr) = (star.tau_t, star.tau_r);
            if !(0.0..=1.0).contains(&tt) || !(0.0..=1.0).contains(&tr) || (tt + tr - 1.0).abs() > FEASIBILITY_TOL {
                out.push(Violation {
                    constraint: "time split",
                    detail: format!("τ_t={tt}, τ_r={tr}"),
                });
            }
        }
    }
    out
}

/// Shape and power-budget checks on the precoders.
pub fn validate_precoders(precoders: &PrecoderSet, star: &StarConfig, spec: &SystemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    for side in Side::BOTH {
        if precoders.get(side).nrows() != spec.n_tx {
            out.push(Violation {
                constraint: "dimension",
                detail: format!("{side:?} precoder has {} rows, expected {}", precoders.get(side).nrows(), spec.n_tx),
            });
        }
    }
    if precoders.shared && precoders.w_t != precoders.w_r {
        out.push(Violation {
            constraint: "shared precoder",
            detail: "shared precoder set holds two different matrices".into(),
        });
    }
    let tau = (star.protocol == ProtocolKind::Ts).then(|| star.tau());
    let power = precoders.power(tau);
    if power > spec.power_budget * (1.0 + FEASIBILITY_TOL) {
        out.push(Violation {
            constraint: "power budget",
            detail: format!("power {power:e} exceeds budget {:e}", spec.power_budget),
        });
    }
    out
}
