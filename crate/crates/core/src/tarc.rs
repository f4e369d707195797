//! Transmitting and reflecting coefficient updates.
//!
//! For fixed precoders, decoders and weights each user's MSE term is the
//! quadratic `φ_lᴴ Z_l φ_l − 2 Re(φ_lᵀ z_l)` in the coefficient vector
//! `φ_l = diag(Φ_l)`, up to a constant. Energy splitting and mode selection
//! are handled through the Lemma-1 LMI lifting with a linearized trace
//! constraint; time splitting uses the closed-form MM phase update.
//!
//! The linearized constraint `Tr(D₁) ≤ 2Re(φ⁽ⁿ⁾ᴴφ) − ‖φ⁽ⁿ⁾‖²` together with
//! the LMI (which implies `D₁ ⪰ φφᴴ`) admits only `φ = φ⁽ⁿ⁾`, so both trace
//! constraints carry a penalized slack `t ≥ 0`. The slack acts as a trust
//! region `‖φ − φ⁽ⁿ⁾‖² ≤ t` and keeps `Ω` close to `φφᴴ`.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, c64, ComplexMatrix, ComplexVector};
use crate::model::{PerUser, PrecoderSet, ProtocolKind, Side, StarConfig, SystemSpec, Traffic, BINARITY_TOL};
use crate::sdpcore::{self, Affine, ComplexAffine, ConicProblem, HermitianExpr, SolveStatus, SolverSettings, VarId, VarKind};
use crate::wmmse::WmmseState;

/// Rank-one gap above which a warning is recorded.
pub const RANK_ONE_WARN: f64 = 1e-3;

/// `Z_l` and `z_l` for both users.
#[derive(Debug, Clone, PartialEq)]
pub struct TarcQuadratic {
    pub z_mat: PerUser<ComplexMatrix>,
    pub z_vec: PerUser<ComplexVector>,
}

impl TarcQuadratic {
    pub fn m_elements(&self) -> usize {
        self.z_vec.t.len()
    }

    /// `φᴴZ_lφ − 2Re(φᵀz_l)`.
    pub fn side_objective(&self, side: Side, phi: &ComplexVector) -> f64 {
        quadratic(&self.z_mat[side], &self.z_vec[side], phi)
    }

    pub fn objective(&self, coeff: &PerUser<ComplexVector>) -> f64 {
        self.side_objective(Side::T, &coeff.t) + self.side_objective(Side::R, &coeff.r)
    }

    pub fn objective_of(&self, star: &StarConfig) -> f64 {
        self.objective(&PerUser::from_fn(|s| star.coefficients(s)))
    }

    fn scale(&self) -> f64 {
        Side::BOTH
            .iter()
            .map(|&s| linalg::frobenius(&self.z_mat[s]).max(self.z_vec[s].norm()))
            .fold(0.0, f64::max)
    }

    fn scaled(&self, k: f64) -> Self {
        Self {
            z_mat: self.z_mat.map(|_, m| m.scale(k)),
            z_vec: self.z_vec.map(|_, v| v.scale(k)),
        }
    }
}

fn quadratic(z: &ComplexMatrix, zv: &ComplexVector, phi: &ComplexVector) -> f64 {
    let lin: num_complex::Complex64 = phi.iter().zip(zv.iter()).map(|(p, q)| p * q).sum();
    linalg::hermitian_form(z, phi) - 2.0 * lin.re
}

/// Builds `Z_l = (w_l H_lᴴU_lV_lU_lᴴH_l) ⊙ (F S Fᴴ)ᵀ` and
/// `z_l = diag(w_l F W_l V_l U_lᴴ H_l)`, where `S` is `Σ_l W_lW_lᴴ` for
/// unicast energy splitting and mode selection, `W_lW_lᴴ` under time
/// splitting, and `WWᴴ` for a shared broadcast precoder.
pub fn assemble_tarc(
    spec: &SystemSpec,
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    state: &WmmseState,
    protocol: ProtocolKind,
) -> Result<TarcQuadratic> {
    let f = &channels.f;
    let m = f.nrows();
    let gram = |w: &ComplexMatrix| -> Result<ComplexMatrix> {
        linalg::check_product(f, w, "coefficient quadratic")?;
        let fw = f * w;
        Ok(&fw * fw.adjoint())
    };
    let shared = precoders.shared || spec.traffic == Traffic::Broadcast && protocol != ProtocolKind::Ts;
    let common = if protocol == ProtocolKind::Ts {
        None
    } else if shared {
        Some(gram(precoders.get(Side::T))?)
    } else {
        Some(gram(&precoders.w_t)? + gram(&precoders.w_r)?)
    };
    let mut z_mat = PerUser::new(ComplexMatrix::zeros(m, m), ComplexMatrix::zeros(m, m));
    let mut z_vec = PerUser::new(ComplexVector::zeros(m), ComplexVector::zeros(m));
    for side in Side::BOTH {
        let h = match side {
            Side::T => &channels.h_t,
            Side::R => &channels.h_r,
        };
        let (u, v) = (&state.u[side], &state.v[side]);
        if h.ncols() != m || u.nrows() != h.nrows() {
            return Err(Error::Dimension(format!(
                "{side:?}: channel is {}x{}, decoder has {} rows, {m} elements",
                h.nrows(),
                h.ncols(),
                u.nrows()
            )));
        }
        let w = spec.weights[side];
        let uh_h = u.adjoint() * h;
        let left = (uh_h.adjoint() * v * &uh_h).scale(w);
        let s = match &common {
            Some(c) => c.clone(),
            None => gram(precoders.get(side))?,
        };
        z_mat[side] = linalg::hermitize(&linalg::hadamard(&left, &s.transpose()));
        let wl = precoders.get(side);
        let prod = (f * wl * v * uh_h).scale(w);
        z_vec[side] = prod.diagonal();
    }
    Ok(TarcQuadratic { z_mat, z_vec })
}

// ---------------------------------------------------------------------------
// Unit-modulus MM

/// Largest eigenvalue of a Hermitian matrix by shifted power iteration,
/// falling back to a dense eigensolver when the iteration stalls.
pub fn max_eigenvalue(z: &ComplexMatrix) -> Result<f64> {
    linalg::check_square(z, "max_eigenvalue")?;
    let n = z.nrows();
    if n == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let norm = linalg::frobenius(z);
    if linalg::hermitian_defect(z) > 1e-8 * norm.max(1.0) {
        return Err(Error::Domain("matrix is not Hermitian".into()));
    }
    if norm == 0.0 {
        return Ok(0.0);
    }
    let z = linalg::hermitize(z);
    // Gershgorin shift makes the matrix PSD so power iteration targets the
    // top of the spectrum.
    let shift = (0..n).map(|i| z.row(i).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
    let mut b = z.clone();
    for i in 0..n {
        b[(i, i)] += c64(shift, 0.0);
    }
    let mut v = ComplexVector::from_fn(n, |k, _| c64(1.0, 0.1 * k as f64 / n as f64));
    v /= c64(v.norm(), 0.0);
    for _ in 0..2000 {
        let bv = &b * &v;
        let next = v.dotc(&bv).re;
        let nb = bv.norm();
        if nb == 0.0 {
            break;
        }
        let residual = (&bv - &v * c64(next, 0.0)).norm();
        v = bv / c64(nb, 0.0);
        if residual <= 1e-12 * shift.max(f64::MIN_POSITIVE) {
            return Ok(next - shift);
        }
    }
    let dense = linalg::hermitian_eigen(&z).values[n - 1];
    Ok(dense)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MmOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmOutcome {
    pub phi: ComplexVector,
    pub objective: f64,
    pub history: Vec<f64>,
}

/// `φ ← exp(j∠((λ_max I − Z)φ + z*))` until the objective change falls
/// below `tol` (relative). Each step is checked to be non-increasing.
pub fn solve_ts_mm(z: &ComplexMatrix, zv: &ComplexVector, phi_init: &ComplexVector, opts: MmOptions) -> Result<MmOutcome> {
    let m = zv.len();
    if z.nrows() != m || z.ncols() != m || phi_init.len() != m {
        return Err(Error::Dimension(format!(
            "MM: Z is {}x{}, z has {m} entries, init has {}",
            z.nrows(),
            z.ncols(),
            phi_init.len()
        )));
    }
    if phi_init.iter().any(|p| (p.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::Domain("MM start must be unit modulus".into()));
    }
    let lambda = max_eigenvalue(z)?.max(0.0);
    let mut phi = linalg::unit_phase(phi_init);
    let mut obj = quadratic(z, zv, &phi);
    let mut history = vec![obj];
    let zc = zv.map(|c| c.conj());
    for _ in 0..opts.max_iter {
        let target = &phi * c64(lambda, 0.0) - z * &phi + &zc;
        // Entries with a vanishing target keep their phase.
        let next = target.zip_map(&phi, |t, p| if t.norm() > 0.0 { t / t.norm() } else { p });
        let next_obj = quadratic(z, zv, &next);
        if !next_obj.is_finite() {
            return Err(Error::Numeric("MM objective is not finite".into()));
        }
        // The majorizer guarantees descent; guard against rounding.
        if next_obj > obj + 1e-12 * obj.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let change = obj - next_obj;
        phi = next;
        obj = next_obj;
        history.push(obj);
        if change <= opts.tol * obj.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(MmOutcome { phi, objective: obj, history })
}

// ---------------------------------------------------------------------------
// Penalty-CCP over the LMI lifting

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpOptions {
    pub tol: f64,
    pub max_outer: usize,
    /// Initial slack penalty, relative to the normalized objective.
    pub penalty: f64,
    pub sdp: SolverSettings,
}

impl Default for CcpOptions {
    fn default() -> Self {
        Self { tol: 1e-4, max_outer: 30, penalty: 1.0, sdp: SolverSettings::default() }
    }
}

/// Penalty escalation for mode selection, relative to `max_l ‖Z_l‖_F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoSchedule {
    pub initial: f64,
    pub growth: f64,
    pub max: f64,
    /// Relaxations allowed before rounding.
    pub max_rounds: usize,
}

impl Default for RhoSchedule {
    fn default() -> Self {
        Self { initial: 1e-3, growth: 5.0, max: 1e6, max_rounds: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TarcOutcome {
    pub star: StarConfig,
    /// True quadratic objective of `star`.
    pub objective: f64,
    /// Objective of every accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
    /// `max_l ‖Ω_l − φ_lφ_lᴴ‖_F` of the last relaxation solved.
    pub rank_one_gap: f64,
    /// `|objective(extracted) − objective(relaxed φ)|` of the last accepted
    /// relaxation, and the bound `gap · max_l ‖Z_l‖_F` it is compared to.
    pub extraction_error: f64,
    pub extraction_bound: f64,
    /// `‖diag(Ω_t + Ω_r) − 1‖∞` of the last relaxation.
    pub constraint_residual: f64,
    /// Mode selection only: `max_m min(α_m, 1 − α_m)` before rounding.
    pub binarity: Option<f64>,
    pub sdp_solves: usize,
    pub warnings: Vec<String>,
}

impl TarcOutcome {
    fn unchanged(star: &StarConfig, objective: f64) -> Self {
        Self {
            star: star.clone(),
            objective,
            history: vec![objective],
            rank_one_gap: 0.0,
            extraction_error: 0.0,
            extraction_bound: 0.0,
            constraint_residual: 0.0,
            binarity: None,
            sdp_solves: 0,
            warnings: Vec::new(),
        }
    }
}

struct Lifted {
    problem: ConicProblem,
    phi: PerUser<VarId>,
    omega: PerUser<VarId>,
}

/// Mode-selection penalty `ρ Σ ((α − χ)² + α²(1 − χ)²)` on `α = [Ω_l]_mm`.
struct MsPenalty<'a> {
    rho: f64,
    chi: &'a PerUser<Vec<f64>>,
}

fn build_lifted(q: &TarcQuadratic, anchor: &PerUser<ComplexVector>, mu: f64, ms: Option<&MsPenalty>) -> Lifted {
    let m = q.m_elements();
    let mut p = ConicProblem::new();
    let mut phi = PerUser::new(VarId::default(), VarId::default());
    let mut omega = phi;
    let mut d1 = phi;
    let mut d2 = phi;
    let mut slack = phi;
    for side in Side::BOTH {
        let tag = match side {
            Side::T => "t",
            Side::R => "r",
        };
        phi[side] = p.add_variable(&format!("phi_{tag}"), VarKind::Complex(m));
        omega[side] = p.add_variable(&format!("omega_{tag}"), VarKind::Hermitian(m));
        d1[side] = p.add_variable(&format!("d1_{tag}"), VarKind::Hermitian(m));
        d2[side] = p.add_variable(&format!("d2_{tag}"), VarKind::Hermitian(m));
        slack[side] = p.add_variable(&format!("t_{tag}"), VarKind::Real(1));
    }
    for side in Side::BOTH {
        p.add_quadratic_form(phi[side], &q.z_mat[side]);
        let zv = &q.z_vec[side];
        for k in 0..m {
            // −2Re(φ_k z_k) = −2(x_k Re z_k − y_k Im z_k).
            let e = p.complex(phi[side], k);
            p.add_linear(&e.re.scale(-2.0 * zv[k].re).add(&e.im.scale(2.0 * zv[k].im)));
        }
        let t = p.real(slack[side], 0);
        p.add_linear(&t.clone().scale(mu));
        p.add_nonnegative(t.clone());

        let mut lmi = HermitianExpr::new(2 * m + 1);
        for i in 0..m {
            for j in i..m {
                lmi.set(i, j, p.herm(d1[side], i, j));
                lmi.set(m + i, m + j, p.herm(d2[side], i, j));
            }
            for j in 0..m {
                lmi.set(i, m + j, p.herm(omega[side], i, j));
            }
            lmi.set(i, 2 * m, p.complex(phi[side], i));
            lmi.set(m + i, 2 * m, p.complex(phi[side], i));
        }
        lmi.set(2 * m, 2 * m, ComplexAffine::constant(c64(1.0, 0.0)));
        p.add_lmi(lmi);

        // 2Re(φ⁽ⁿ⁾ᴴφ) − ‖φ⁽ⁿ⁾‖² + t − Tr(D) ≥ 0 for D = D₁, D₂.
        let a = &anchor[side];
        let mut lin = Affine::constant(-a.norm_squared()).add(&t);
        for k in 0..m {
            let e = p.complex(phi[side], k);
            lin = lin.add(&e.re.scale(2.0 * a[k].re)).add(&e.im.scale(2.0 * a[k].im));
        }
        for d in [d1[side], d2[side]] {
            let mut expr = lin.clone();
            for k in 0..m {
                expr = expr.sub(&p.herm(d, k, k).re);
            }
            p.add_nonnegative(expr);
        }

        if let Some(pen) = ms {
            for k in 0..m {
                let alpha = p.herm(omega[side], k, k).re;
                let chi = pen.chi[side][k];
                p.add_square(&alpha.clone().add(&Affine::constant(-chi)), pen.rho);
                p.add_square(&alpha.scale(1.0 - chi), pen.rho);
            }
        }
    }
    for k in 0..m {
        let sum = p.herm(omega[Side::T], k, k).re.add(&p.herm(omega[Side::R], k, k).re);
        p.add_equality(sum.add(&Affine::constant(-1.0)));
    }
    Lifted { problem: p, phi, omega }
}

struct Extracted {
    coeff: PerUser<ComplexVector>,
    alpha: PerUser<Vec<f64>>,
    relaxed_phi: PerUser<ComplexVector>,
    rank_one_gap: f64,
    residual: f64,
}

fn solve_lifted(lifted: &Lifted, settings: SolverSettings) -> Result<Extracted> {
    let sol = sdpcore::solve(&lifted.problem, settings)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Solver("coefficient subproblem is infeasible".into()));
    }
    let p = &lifted.problem;
    let phi = PerUser::from_fn(|s| p.complex_value(lifted.phi[s], &sol.x));
    let omega = PerUser::from_fn(|s| p.hermitian_value(lifted.omega[s], &sol.x));
    let m = phi.t.len();
    let mut rank_one_gap = 0.0f64;
    for side in Side::BOTH {
        let outer = &phi[side] * phi[side].adjoint();
        rank_one_gap = rank_one_gap.max(linalg::frobenius(&(&omega[side] - outer)));
    }
    let mut residual = 0.0f64;
    let mut alpha = PerUser::new(vec![0.0; m], vec![0.0; m]);
    for k in 0..m {
        let at = omega.t[(k, k)].re;
        let ar = omega.r[(k, k)].re;
        residual = residual.max((at + ar - 1.0).abs());
        let (at, ar) = (at.max(0.0), ar.max(0.0));
        let total = at + ar;
        let nt = if total > 0.0 { at / total } else { 0.5 };
        alpha.t[k] = nt;
        alpha.r[k] = 1.0 - nt;
    }
    let coeff = PerUser::from_fn(|s| with_amplitudes(&phi[s], &alpha[s]));
    Ok(Extracted { coeff, alpha, relaxed_phi: phi, rank_one_gap, residual })
}

/// `√α_m e^{j∠φ_m}`.
fn with_amplitudes(phi: &ComplexVector, alpha: &[f64]) -> ComplexVector {
    let unit = linalg::unit_phase(phi);
    ComplexVector::from_iterator(unit.len(), unit.iter().zip(alpha).map(|(u, &a)| u * a.sqrt()))
}

fn coefficients(star: &StarConfig) -> PerUser<ComplexVector> {
    PerUser::from_fn(|s| star.coefficients(s))
}

/// `α = 1/2` on every element with phases from an MM solve per side.
pub fn es_initialization(q: &TarcQuadratic, mm: MmOptions) -> Result<PerUser<ComplexVector>> {
    let m = q.m_elements();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    PerUser::try_from_fn(|side| {
        // φ = ψ/√2 with |ψ| = 1: ½ψᴴZψ − √2 Re(ψᵀz).
        let z = q.z_mat[side].scale(0.5);
        let zv = q.z_vec[side].scale(h);
        let start = ComplexVector::from_element(m, c64(1.0, 0.0));
        let out = solve_ts_mm(&z, &zv, &start, mm)?;
        Ok(out.phi.scale(h))
    })
}

/// Energy-splitting coefficient update. Each relaxation is linearized at
/// the current feasible point; its solution is projected back onto the
/// energy relationship and accepted only when the true objective improves,
/// so the accepted objectives never increase.
pub fn solve_es(q: &TarcQuadratic, init: &StarConfig, opts: CcpOptions, mm: MmOptions) -> Result<TarcOutcome> {
    check_sizes(q, init)?;
    let scale = q.scale();
    let init_obj = q.objective_of(init);
    if scale == 0.0 {
        return Ok(TarcOutcome::unchanged(init, init_obj));
    }
    let qn = q.scaled(1.0 / scale);
    let mut current = coefficients(init);
    let mut best = qn.objective(&current);
    let warm = es_initialization(&qn, mm)?;
    let warm_obj = qn.objective(&warm);
    if warm_obj < best {
        current = warm;
        best = warm_obj;
    }
    let mut history = vec![best * scale];
    let mut outcome = TarcOutcome::unchanged(init, init_obj);
    let zf = Side::BOTH.iter().map(|&s| linalg::frobenius(&qn.z_mat[s])).fold(0.0, f64::max);
    let mut mu = opts.penalty;
    let mut rejected = 0;
    let mut last_gap = 0.0;
    for _ in 0..opts.max_outer {
        let lifted = build_lifted(&qn, &current, mu, None);
        let ex = solve_lifted(&lifted, opts.sdp)?;
        outcome.sdp_solves += 1;
        last_gap = ex.rank_one_gap;
        outcome.constraint_residual = ex.residual;
        let cand = qn.objective(&ex.coeff);
        if cand < best - 1e-12 * best.abs().max(1.0) {
            let gain = best - cand;
            outcome.extraction_error = (cand - qn.objective(&ex.relaxed_phi)).abs() * scale;
            outcome.extraction_bound = ex.rank_one_gap * zf * scale;
            current = ex.coeff;
            best = cand;
            history.push(best * scale);
            rejected = 0;
            mu = (mu * 0.5).max(opts.penalty * MU_FLOOR);
            if gain < opts.tol * best.abs().max(1e-12) {
                break;
            }
        } else {
            rejected += 1;
            mu *= 4.0;
            if rejected >= 3 {
                break;
            }
        }
    }
    // A larger slack penalty pins the lifting to rank one without moving
    // far from the accepted point.
    let mut polish = 0;
    while last_gap > RANK_ONE_WARN && polish < 3 {
        mu = mu.max(opts.penalty) * 10.0;
        let lifted = build_lifted(&qn, &current, mu, None);
        let ex = solve_lifted(&lifted, opts.sdp)?;
        outcome.sdp_solves += 1;
        last_gap = ex.rank_one_gap;
        outcome.constraint_residual = ex.residual;
        let cand = qn.objective(&ex.coeff);
        if cand < best {
            current = ex.coeff;
            best = cand;
            history.push(best * scale);
        }
        polish += 1;
    }
    outcome.rank_one_gap = last_gap;
    if last_gap > RANK_ONE_WARN {
        outcome.warnings.push(format!("rank-one gap {last_gap:.2e} at termination"));
    }
    outcome.star = StarConfig::from_coefficients(ProtocolKind::Es, &current.t, &current.r);
    outcome.objective = q.objective_of(&outcome.star);
    outcome.history = history;
    Ok(outcome)
}

/// Smallest slack penalty, relative to [`CcpOptions::penalty`].
const MU_FLOOR: f64 = 1e-3;

/// `χ = (α + α²) / (1 + α²)`.
pub fn chi_update(alpha: f64) -> f64 {
    (alpha + alpha * alpha) / (1.0 + alpha * alpha)
}

fn binarity(alpha: &PerUser<Vec<f64>>) -> f64 {
    alpha.t.iter().chain(&alpha.r).map(|&a| a.min(1.0 - a)).fold(0.0, f64::max)
}

/// Mode-selection coefficient update: penalized relaxations with growing
/// `ρ` and closed-form `χ` until the amplitudes are binary, then rounding
/// and a local search over flips and exchanges with MM phases on each
/// side's active elements.
pub fn solve_ms(
    q: &TarcQuadratic,
    init: &StarConfig,
    rho: RhoSchedule,
    opts: CcpOptions,
    mm: MmOptions,
) -> Result<TarcOutcome> {
    check_sizes(q, init)?;
    let m = q.m_elements();
    let scale = q.scale();
    let init_binary = init.protocol == ProtocolKind::Ms
        && (0..m).all(|k| {
            let a = init.amp_t[k] * init.amp_t[k];
            a.min(1.0 - a) <= BINARITY_TOL
        });
    let init_obj = q.objective_of(init);
    if scale == 0.0 {
        let star = round_binary(init, &PerUser::from_fn(|s| init.amplitudes(s).iter().map(|a| a * a).collect()));
        let obj = q.objective_of(&star);
        return Ok(TarcOutcome::unchanged(&star, obj));
    }
    let qn = q.scaled(1.0 / scale);
    let zf = Side::BOTH.iter().map(|&s| linalg::frobenius(&qn.z_mat[s])).fold(0.0, f64::max).max(1e-12);
    let mut current = coefficients(init);
    let mut alpha: PerUser<Vec<f64>> = PerUser::from_fn(|s| init.amplitudes(s).iter().map(|a| a * a).collect());
    let mut outcome = TarcOutcome::unchanged(init, init_obj);
    let mut history = vec![qn.objective(&current) * scale];
    let mut r = rho.initial * zf;
    let cap = rho.max * zf;
    let mut level = binarity(&alpha);
    let mut rounds = 0;
    while level >= BINARITY_TOL && rounds < rho.max_rounds {
        let chi = alpha.map(|_, a| a.iter().map(|&x| chi_update(x)).collect::<Vec<_>>());
        let pen = MsPenalty { rho: r, chi: &chi };
        let lifted = build_lifted(&qn, &current, opts.penalty, Some(&pen));
        let ex = solve_lifted(&lifted, opts.sdp)?;
        outcome.sdp_solves += 1;
        outcome.rank_one_gap = ex.rank_one_gap;
        outcome.constraint_residual = ex.residual;
        current = ex.coeff;
        alpha = ex.alpha;
        history.push(qn.objective(&current) * scale);
        level = binarity(&alpha);
        rounds += 1;
        r = (r * rho.growth).min(cap);
    }
    outcome.binarity = Some(level);
    if level >= BINARITY_TOL {
        outcome.warnings.push(format!("mode selection not binary at ρ cap (max min(α,1−α) = {level:.2e})"));
    }
    // Rounding, then single-element flips and T/R exchanges while they help;
    // phases are re-optimized by MM for every assignment tried.
    let phases = PerUser::from_fn(|s| linalg::unit_phase(&current[s]));
    let mut assign: Vec<bool> = (0..m).map(|k| alpha.t[k] >= 0.5).collect();
    let (mut star, mut obj) = assignment_phases(q, &assign, &phases, mm)?;
    let mut moves: Vec<Vec<usize>> = (0..m).map(|k| vec![k]).collect();
    for k in 0..m {
        for j in k + 1..m {
            moves.push(vec![k, j]);
        }
    }
    for _ in 0..m {
        let mut improved = false;
        for mv in &moves {
            // Pairs are exchanges between the sides.
            if mv.len() == 2 && assign[mv[0]] == assign[mv[1]] {
                continue;
            }
            for &k in mv {
                assign[k] = !assign[k];
            }
            let start = PerUser::from_fn(|s| {
                ComplexVector::from_iterator(m, star.phases(s).iter().map(|&p| num_complex::Complex64::from_polar(1.0, p)))
            });
            let (cand, cand_obj) = assignment_phases(q, &assign, &start, mm)?;
            if cand_obj < obj - 1e-12 * obj.abs().max(f64::MIN_POSITIVE) {
                star = cand;
                obj = cand_obj;
                improved = true;
            } else {
                for &k in mv {
                    assign[k] = !assign[k];
                }
            }
        }
        if !improved {
            break;
        }
    }
    if init_binary {
        let start = round_binary(init, &PerUser::from_fn(|s| init.amplitudes(s).iter().map(|a| a * a).collect()));
        let start_obj = q.objective_of(&start);
        if start_obj <= obj {
            star = start;
            obj = start_obj;
        }
    }
    history.push(obj);
    outcome.star = star;
    outcome.objective = obj;
    outcome.history = history;
    Ok(outcome)
}

/// Binary configuration with `assign[k]` choosing T for element `k` and
/// phases from MM on each side's active elements, started at `phases`.
fn assignment_phases(
    q: &TarcQuadratic,
    assign: &[bool],
    phases: &PerUser<ComplexVector>,
    mm: MmOptions,
) -> Result<(StarConfig, f64)> {
    let m = assign.len();
    let mut coeff = PerUser::new(ComplexVector::zeros(m), ComplexVector::zeros(m));
    for side in Side::BOTH {
        let active: Vec<usize> = (0..m).filter(|&k| assign[k] == (side == Side::T)).collect();
        if active.is_empty() {
            continue;
        }
        let zs = ComplexMatrix::from_fn(active.len(), active.len(), |i, j| q.z_mat[side][(active[i], active[j])]);
        let zv = ComplexVector::from_fn(active.len(), |i, _| q.z_vec[side][active[i]]);
        let start = ComplexVector::from_fn(active.len(), |i, _| phases[side][active[i]]);
        let out = solve_ts_mm(&zs, &zv, &start, mm)?;
        for (i, &k) in active.iter().enumerate() {
            coeff[side][k] = out.phi[i];
        }
    }
    let mut star = StarConfig::from_coefficients(ProtocolKind::Ms, &coeff.t, &coeff.r);
    for (k, &t) in assign.iter().enumerate() {
        star.amp_t[k] = if t { 1.0 } else { 0.0 };
        star.amp_r[k] = if t { 0.0 } else { 1.0 };
    }
    // Inactive elements keep their previous phase.
    for side in Side::BOTH {
        for k in 0..m {
            if coeff[side][k].norm() == 0.0 {
                let p = linalg::wrap_phase(phases[side][k]);
                match side {
                    Side::T => star.phase_t[k] = p,
                    Side::R => star.phase_r[k] = p,
                }
            }
        }
    }
    let obj = q.objective_of(&star);
    Ok((star, obj))
}

fn round_binary(star: &StarConfig, alpha: &PerUser<Vec<f64>>) -> StarConfig {
    let m = star.m_elements();
    let mut out = star.clone();
    out.protocol = ProtocolKind::Ms;
    for k in 0..m {
        let t = alpha.t[k] >= 0.5;
        out.amp_t[k] = if t { 1.0 } else { 0.0 };
        out.amp_r[k] = if t { 0.0 } else { 1.0 };
    }
    out.tau_t = 1.0;
    out.tau_r = 1.0;
    out
}

fn check_sizes(q: &TarcQuadratic, init: &StarConfig) -> Result<()> {
    let m = q.m_elements();
    if init.m_elements() != m || q.z_vec.r.len() != m || Side::BOTH.iter().any(|&s| q.z_mat[s].shape() != (m, m)) {
        return Err(Error::Dimension(format!(
            "coefficient quadratic has {m} elements, configuration has {}",
            init.m_elements()
        )));
    }
    Ok(())
}
