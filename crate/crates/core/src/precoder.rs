//! Precoder subproblem: minimize `Σ_k τ_k [Tr(W_kᴴ A_k W_k) − 2 Re Tr(B_k W_k)]`
//! subject to `Σ_k τ_k Tr(W_k W_kᴴ) ≤ P_s`, solved through the Lagrange
//! dual with bisection on the power multiplier.

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::model::{self, PerUser, PrecoderSet, ProtocolKind, Side, StarConfig, SystemSpec, Traffic};
use crate::wmmse::WmmseState;

/// Relative power gap at which the bisection stops.
const POWER_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 200;

/// One precoder `W_k` with its quadratic `A_k`, linear term `B_k` and time
/// weight `τ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderBlock {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLayout {
    /// Blocks are `[T user, R user]`.
    PerUser,
    /// A single common precoder.
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPrecoderProblem {
    pub blocks: Vec<PrecoderBlock>,
    pub power_budget: f64,
    pub layout: BlockLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSolution {
    pub w: Vec<ComplexMatrix>,
    pub lambda: f64,
    pub power: f64,
}

/// Builds `A` (or per-user `A_l`) and `B_l` from the current WMMSE state.
pub fn assemble(
    spec: &SystemSpec,
    channels: &ChannelSet,
    star: &StarConfig,
    state: &WmmseState,
) -> Result<QuadraticPrecoderProblem> {
    let h_bar = model::effective_channels(channels, star)?;
    let mut a_l = PerUser::new(ComplexMatrix::zeros(0, 0), ComplexMatrix::zeros(0, 0));
    let mut b_l = a_l.clone();
    for side in Side::BOTH {
        let (u, v, h) = (&state.u[side], &state.v[side], &h_bar[side]);
        if u.nrows() != h.nrows() {
            return Err(Error::Dimension(format!(
                "{side:?} decoder has {} rows, channel has {}",
                u.nrows(),
                h.nrows()
            )));
        }
        let w = spec.weights[side];
        let uh_h = u.adjoint() * h;
        a_l[side] = linalg::hermitize(&(uh_h.adjoint() * v * &uh_h).scale(w));
        b_l[side] = (v * uh_h).scale(w);
    }
    let (blocks, layout) = match (star.protocol, spec.traffic) {
        (ProtocolKind::Ts, _) => (
            vec![
                PrecoderBlock { a: a_l.t, b: b_l.t, tau: star.tau_t },
                PrecoderBlock { a: a_l.r, b: b_l.r, tau: star.tau_r },
            ],
            BlockLayout::PerUser,
        ),
        (_, Traffic::Unicast) => {
            let a = &a_l.t + &a_l.r;
            (
                vec![
                    PrecoderBlock { a: a.clone(), b: b_l.t, tau: 1.0 },
                    PrecoderBlock { a, b: b_l.r, tau: 1.0 },
                ],
                BlockLayout::PerUser,
            )
        }
        (_, Traffic::Broadcast) => (
            vec![PrecoderBlock { a: &a_l.t + &a_l.r, b: &b_l.t + &b_l.r, tau: 1.0 }],
            BlockLayout::Shared,
        ),
    };
    Ok(QuadraticPrecoderProblem { blocks, power_budget: spec.power_budget, layout })
}

impl QuadraticPrecoderProblem {
    pub fn objective(&self, w: &[ComplexMatrix]) -> f64 {
        self.blocks
            .iter()
            .zip(w)
            .map(|(blk, w)| {
                let quad = linalg::trace(&(w.adjoint() * &blk.a * w)).re;
                let lin = linalg::trace(&(&blk.b * w)).re;
                blk.tau * (quad - 2.0 * lin)
            })
            .sum()
    }

    pub fn power(&self, w: &[ComplexMatrix]) -> f64 {
        self.blocks
            .iter()
            .zip(w)
            .map(|(blk, w)| blk.tau * w.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn into_precoders(&self, solution: &PrecoderSolution) -> PrecoderSet {
        match self.layout {
            BlockLayout::PerUser => PrecoderSet::per_user(solution.w[0].clone(), solution.w[1].clone()),
            BlockLayout::Shared => PrecoderSet::shared(solution.w[0].clone()),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.power_budget > 0.0) {
            return Err(Error::Domain("power budget must be positive".into()));
        }
        for blk in &self.blocks {
            linalg::check_square(&blk.a, "A")?;
            if blk.b.ncols() != blk.a.nrows() {
                return Err(Error::Dimension(format!(
                    "B is {}x{}, A is {}x{}",
                    blk.b.nrows(),
                    blk.b.ncols(),
                    blk.a.nrows(),
                    blk.a.ncols()
                )));
            }
            if !(0.0..=1.0).contains(&blk.tau) {
                return Err(Error::Domain(format!("time weight {} outside [0, 1]", blk.tau)));
            }
        }
        Ok(())
    }
}

/// Spectral form of one block: `W(λ) = Q (Λ + λ)⁻¹ Qᴴ Bᴴ`.
struct Spectral {
    values: Vec<f64>,
    vectors: ComplexMatrix,
    /// `Qᴴ Bᴴ`.
    projected: ComplexMatrix,
    /// Row energies of `projected`.
    energy: Vec<f64>,
    tau: f64,
    rows: usize,
    cols: usize,
}

impl Spectral {
    fn new(blk: &PrecoderBlock) -> Self {
        let eig = linalg::hermitian_eigen(&blk.a);
        let projected = eig.vectors.adjoint() * blk.b.adjoint();
        let energy = (0..projected.nrows())
            .map(|i| projected.row(i).iter().map(|z| z.norm_sqr()).sum())
            .collect();
        Self {
            values: eig.values.iter().copied().collect(),
            vectors: eig.vectors,
            projected,
            energy,
            tau: blk.tau,
            rows: blk.b.ncols(),
            cols: blk.b.nrows(),
        }
    }

    fn active(&self) -> bool {
        self.tau > 0.0
    }

    fn null_threshold(&self) -> f64 {
        let top = self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        1e-12 * top.max(f64::MIN_POSITIVE)
    }

    /// Whether `B` has a component in the null space of `A`.
    fn unbounded_at_zero(&self) -> bool {
        let thr = self.null_threshold();
        let total: f64 = self.energy.iter().sum();
        self.values
            .iter()
            .zip(&self.energy)
            .any(|(&v, &e)| v <= thr && e > 1e-24 * total.max(f64::MIN_POSITIVE))
    }

    fn power(&self, lambda: f64) -> f64 {
        if !self.active() {
            return 0.0;
        }
        let thr = self.null_threshold();
        let mut p = 0.0;
        for (&v, &e) in self.values.iter().zip(&self.energy) {
            let d = v.max(0.0) + lambda;
            if lambda == 0.0 && v <= thr {
                continue;
            }
            p += e / (d * d);
        }
        self.tau * p
    }

    fn precoder(&self, lambda: f64) -> ComplexMatrix {
        if !self.active() {
            return ComplexMatrix::zeros(self.rows, self.cols);
        }
        let thr = self.null_threshold();
        let mut scaled = self.projected.clone();
        for (i, &v) in self.values.iter().enumerate() {
            let s = if lambda == 0.0 && v <= thr { 0.0 } else { 1.0 / (v.max(0.0) + lambda) };
            scaled.row_mut(i).scale_mut(s);
        }
        &self.vectors * scaled
    }
}

/// Solves the precoder subproblem. `λ* = 0` when the unconstrained
/// minimizer (pseudo-inverse for singular `A`) meets the budget, otherwise
/// the multiplier is bisected until the time-weighted power equals `P_s`.
/// Blocks with `τ = 0` receive a zero precoder and no power.
pub fn solve_dual(problem: &QuadraticPrecoderProblem) -> Result<PrecoderSolution> {
    problem.validate()?;
    let spectra: Vec<Spectral> = problem.blocks.iter().map(Spectral::new).collect();
    let budget = problem.power_budget;
    let power = |lambda: f64| spectra.iter().map(|s| s.power(lambda)).sum::<f64>();
    let finish = |lambda: f64| {
        let w: Vec<ComplexMatrix> = spectra.iter().map(|s| s.precoder(lambda)).collect();
        let p = problem.power(&w);
        PrecoderSolution { w, lambda, power: p }
    };

    let bounded = !spectra.iter().any(|s| s.active() && s.unbounded_at_zero());
    if bounded && power(0.0) <= budget {
        return Ok(finish(0.0));
    }

    // Any λ ≥ sqrt(Σ τ‖B‖² / P) satisfies the budget; start doubling far
    // below that scale.
    let scale = (spectra
        .iter()
        .map(|s| s.tau * s.energy.iter().sum::<f64>())
        .sum::<f64>()
        / budget)
        .sqrt();
    let mut hi = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut lo = 0.0;
    let mut doublings = 0;
    while power(hi) >= budget {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Numeric("could not bracket the power multiplier".into()));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let gap = (budget - power(hi)) / budget;
        if gap <= POWER_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if power(mid) >= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(finish(hi))
}
