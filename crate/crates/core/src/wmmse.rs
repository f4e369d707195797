//! Weighted MMSE reformulation of the rate: MSE matrices, optimal linear
//! decoders and weights, and the surrogate objective.
//!
//! The surrogate is measured in bits, `(ln det V − Tr(V E) + d) / ln 2`,
//! so that `V = E⁻¹` is its exact maximizer and, with `d = N_d`, its value
//! at the optimal decoder and weight equals the rate.

use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::model::{self, PerUser, PrecoderSet, ProtocolKind, Side, StarConfig, SystemSpec, Traffic};

/// Decoder `U_l`, weight `V_l` and surrogate constant `d_l` for both users.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub u: PerUser<ComplexMatrix>,
    pub v: PerUser<ComplexMatrix>,
    pub d: PerUser<f64>,
}

/// `E = (UᴴH̄W − I)(·)ᴴ + UᴴH̄W'W'ᴴH̄ᴴU + σ²UᴴU`; the interference term is
/// dropped when `w_other` is `None`.
pub fn mse_matrix(
    h_bar: &ComplexMatrix,
    w_l: &ComplexMatrix,
    w_other: Option<&ComplexMatrix>,
    u_l: &ComplexMatrix,
    noise: f64,
) -> Result<ComplexMatrix> {
    linalg::check_product(h_bar, w_l, "mse")?;
    if u_l.nrows() != h_bar.nrows() || u_l.ncols() != w_l.ncols() {
        return Err(Error::Dimension(format!(
            "decoder is {}x{}, expected {}x{}",
            u_l.nrows(),
            u_l.ncols(),
            h_bar.nrows(),
            w_l.ncols()
        )));
    }
    let uh = u_l.adjoint();
    let err = &uh * h_bar * w_l - linalg::identity(w_l.ncols());
    let mut e = &err * err.adjoint() + (&uh * u_l).scale(noise);
    if let Some(w) = w_other {
        linalg::check_product(h_bar, w, "mse interference")?;
        let g = &uh * h_bar * w;
        e += &g * g.adjoint();
    }
    Ok(linalg::hermitize(&e))
}

/// `U* = (H̄WWᴴH̄ᴴ + C)⁻¹ H̄W`.
pub fn optimal_decoder(h_bar: &ComplexMatrix, w_l: &ComplexMatrix, c_l: &ComplexMatrix) -> Result<ComplexMatrix> {
    linalg::check_product(h_bar, w_l, "decoder")?;
    let hw = h_bar * w_l;
    let total = c_l + &hw * hw.adjoint();
    let inv = linalg::hermitian_pd_inverse(&total, "receive covariance")?;
    Ok(inv * hw)
}

/// `V* = (E*)⁻¹`, Hermitian-symmetrized.
pub fn optimal_weight(e_star: &ComplexMatrix) -> Result<ComplexMatrix> {
    linalg::hermitian_pd_inverse(e_star, "MSE matrix")
}

/// `Σ_l w_l (log₂ det V_l − (Tr(V_l E_l) − d_l) / ln 2)`.
pub fn surrogate(state: &WmmseState, e: &PerUser<ComplexMatrix>, weights: PerUser<f64>) -> Result<f64> {
    let mut total = 0.0;
    for side in Side::BOTH {
        let v = &state.v[side];
        let log_det = linalg::log2_det_pd(v, "weight matrix")
            .map_err(|_| Error::Domain(format!("{side:?} weight matrix is not positive definite")))?;
        let tr = linalg::trace(&(v * &e[side])).re;
        total += weights[side] * (log_det - (tr - state.d[side]) / LN_2);
    }
    Ok(total)
}

/// Interfering precoder seen by `side`, if any.
pub fn interferer<'a>(
    spec: &SystemSpec,
    star: &StarConfig,
    precoders: &'a PrecoderSet,
    side: Side,
) -> Option<&'a ComplexMatrix> {
    let interference = star.protocol != ProtocolKind::Ts && spec.traffic == Traffic::Unicast && !precoders.shared;
    interference.then(|| precoders.get(side.other()))
}

/// Optimal decoders and weights for fixed precoders and coefficients,
/// together with the MSE matrices `E*` they induce.
pub fn update(
    spec: &SystemSpec,
    channels: &ChannelSet,
    precoders: &PrecoderSet,
    star: &StarConfig,
) -> Result<(WmmseState, PerUser<ComplexMatrix>)> {
    let h_bar = model::effective_channels(channels, star)?;
    let mut u = PerUser::new(ComplexMatrix::zeros(0, 0), ComplexMatrix::zeros(0, 0));
    let mut v = u.clone();
    let mut e = u.clone();
    let mut d = PerUser::new(0.0, 0.0);
    for side in Side::BOTH {
        let w = precoders.get(side);
        let other = interferer(spec, star, precoders, side);
        let c = model::interference_covariance(&h_bar[side], other, spec.noise_power)?;
        let u_star = optimal_decoder(&h_bar[side], w, &c)?;
        let e_star = mse_matrix(&h_bar[side], w, other, &u_star, spec.noise_power)?;
        v[side] = optimal_weight(&e_star)?;
        d[side] = w.ncols() as f64;
        u[side] = u_star;
        e[side] = e_star;
    }
    Ok((WmmseState { u, v, d }, e))
}

/// Surrogate weights: `w_l`, times `τ_l` under time splitting.
pub fn effective_weights(spec: &SystemSpec, star: &StarConfig) -> PerUser<f64> {
    match star.protocol {
        ProtocolKind::Ts => PerUser::new(spec.weights.t * star.tau_t, spec.weights.r * star.tau_r),
        _ => spec.weights,
    }
}
