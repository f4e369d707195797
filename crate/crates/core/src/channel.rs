//! Scenario geometry, distance-dependent path loss and Rician-faded channel
//! matrices.
//!
//! All arrays are uniform linear arrays with half-wavelength spacing laid out
//! along the horizontal axis perpendicular to the Tx→RIS direction. Link
//! angles are azimuths of the horizontal projection of the link, measured
//! from array broadside.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};

/// Reference distance of the path-loss law, in meters.
pub const REFERENCE_DISTANCE: f64 = 1.0;

pub type Position = Vector3<f64>;

/// Generator used for all channel draws.
pub type TrialRng = ChaCha8Rng;

/// Independent generator for one trial.
pub fn trial_rng(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGeometry {
    pub tx_position: Position,
    pub ris_position: Position,
    /// `[T user, R user]`.
    pub user_positions: [Position; 2],
    pub half_circle_radius: f64,
    pub user_height: f64,
}

impl ScenarioGeometry {
    /// Places users on the two half-circles of radius `radius` around the
    /// RIS at the given azimuths (radians). The T user azimuth must lie in
    /// `(0, π)`, the R user azimuth in `(π, 2π)`.
    pub fn with_azimuths(
        tx_position: Position,
        ris_position: Position,
        radius: f64,
        user_height: f64,
        azimuth_t: f64,
        azimuth_r: f64,
    ) -> Result<Self> {
        let (broadside, axis) = horizontal_frame(&tx_position, &ris_position)?;
        let place = |az: f64| {
            let offset = (axis * az.cos() + broadside * az.sin()) * radius;
            Position::new(
                ris_position.x + offset.x,
                ris_position.y + offset.y,
                user_height,
            )
        };
        let geometry = Self {
            tx_position,
            ris_position,
            user_positions: [place(azimuth_t), place(azimuth_r)],
            half_circle_radius: radius,
            user_height,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Users drawn uniformly on their half-circles.
    pub fn sample<R: Rng + ?Sized>(
        tx_position: Position,
        ris_position: Position,
        radius: f64,
        user_height: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let pi = std::f64::consts::PI;
        let mut draw = |offset: f64| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                return offset + pi * u;
            }
        };
        let az_t = draw(0.0);
        let az_r = draw(pi);
        Self::with_azimuths(tx_position, ris_position, radius, user_height, az_t, az_r)
    }

    /// Default deployment: Tx at (0, 0, 10), RIS at (0, 30, 10), users on
    /// 5 m half-circles at 2 m height.
    pub fn default_deployment<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        Self::sample(
            Position::new(0.0, 0.0, 10.0),
            Position::new(0.0, 30.0, 10.0),
            5.0,
            2.0,
            rng,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (broadside, _) = horizontal_frame(&self.tx_position, &self.ris_position)?;
        let side = |p: &Position| (p - self.ris_position).dot(&broadside);
        if side(&self.user_positions[0]) <= 0.0 {
            return Err(Error::Domain(
                "T user must lie in the transmission half-space of the RIS".into(),
            ));
        }
        if side(&self.user_positions[1]) >= 0.0 {
            return Err(Error::Domain(
                "R user must lie in the reflection half-space of the RIS".into(),
            ));
        }
        let nodes = [
            self.tx_position,
            self.ris_position,
            self.user_positions[0],
            self.user_positions[1],
        ];
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                if (nodes[i] - nodes[j]).norm() <= 0.0 {
                    return Err(Error::Domain(format!("nodes {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn tx_ris_distance(&self) -> f64 {
        (self.ris_position - self.tx_position).norm()
    }

    pub fn ris_user_distance(&self, user: usize) -> f64 {
        (self.user_positions[user] - self.ris_position).norm()
    }
}

/// Unit horizontal vectors `(broadside, array axis)`: broadside points from
/// the Tx toward the RIS, the array axis is perpendicular to it.
fn horizontal_frame(tx: &Position, ris: &Position) -> Result<(Position, Position)> {
    let d = Position::new(ris.x - tx.x, ris.y - tx.y, 0.0);
    let n = d.norm();
    if n <= 0.0 {
        return Err(Error::Domain(
            "Tx and RIS must be horizontally separated".into(),
        ));
    }
    let broadside = d / n;
    let axis = Position::new(broadside.y, -broadside.x, 0.0);
    Ok((broadside, axis))
}

/// Azimuth of the horizontal projection of `to - from` relative to array
/// broadside: `sin θ` is the projection onto the array axis.
fn link_angle(from: &Position, to: &Position, axis: &Position) -> f64 {
    let d = Position::new(to.x - from.x, to.y - from.y, 0.0);
    let n = d.norm();
    if n <= 0.0 {
        return 0.0;
    }
    (d.dot(axis) / n).clamp(-1.0, 1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingParams {
    /// Linear Rician factor.
    pub rician_k: f64,
    pub pathloss_exponent_ris: f64,
    pub pathloss_ref_gain: f64,
    /// Noise power in watts.
    pub noise_power: f64,
}

impl FadingParams {
    pub fn new(rician_k_db: f64, exponent: f64, ref_gain: f64, noise_dbm: f64) -> Result<Self> {
        let p = Self {
            rician_k: db_to_linear(rician_k_db),
            pathloss_exponent_ris: exponent,
            pathloss_ref_gain: ref_gain,
            noise_power: dbm_to_watts(noise_dbm),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rician_k >= 0.0) {
            return Err(Error::Domain("rician_k must be non-negative".into()));
        }
        if !(self.pathloss_exponent_ris > 0.0) {
            return Err(Error::Domain("path-loss exponent must be positive".into()));
        }
        if !(self.pathloss_ref_gain > 0.0) {
            return Err(Error::Domain("path-loss reference gain must be positive".into()));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::Domain("noise power must be positive".into()));
        }
        Ok(())
    }
}

impl Default for FadingParams {
    /// K = 5 dB, β = 2.2, PL₀ = 10⁻³, σ² = −80 dBm.
    fn default() -> Self {
        Self::new(5.0, 2.2, 1e-3, -80.0).expect("default fading parameters are valid")
    }
}

/// `PL₀ · (d / d₀)^(−β)`.
pub fn path_loss(distance: f64, params: &FadingParams) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {distance}")));
    }
    Ok(params.pathloss_ref_gain * (distance / REFERENCE_DISTANCE).powf(-params.pathloss_exponent_ris))
}

/// ULA response with half-wavelength spacing: entry k is `exp(jπ k sin θ)`.
pub fn steering_vector(n_elements: usize, angle: f64) -> Result<ComplexVector> {
    if n_elements == 0 {
        return Err(Error::Domain("steering vector needs at least one element".into()));
    }
    let step = std::f64::consts::PI * angle.sin();
    Ok(ComplexVector::from_fn(n_elements, |k, _| {
        Complex64::from_polar(1.0, step * k as f64)
    }))
}

/// Circularly-symmetric complex Gaussian sample with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `√(k/(k+1)) a bᴴ + √(1/(k+1)) G` with i.i.d. CN(0, 1) entries in `G`.
pub fn sample_rician<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    lhs_steering: &ComplexVector,
    rhs_steering: &ComplexVector,
    k: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if lhs_steering.len() != rows || rhs_steering.len() != cols {
        return Err(Error::Domain(format!(
            "steering lengths ({}, {}) do not match a {rows}x{cols} channel",
            lhs_steering.len(),
            rhs_steering.len()
        )));
    }
    if !(k >= 0.0) {
        return Err(Error::Domain("Rician factor must be non-negative".into()));
    }
    let los = (k / (k + 1.0)).sqrt();
    let nlos = (1.0 / (k + 1.0)).sqrt();
    // Column-major fill keeps the draw order fixed.
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
        lhs_steering[i] * rhs_steering[j].conj() * los + complex_gaussian(rng) * nlos
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AntennaCounts {
    pub n_tx: usize,
    pub n_user_t: usize,
    pub n_user_r: usize,
    pub m_elements: usize,
}

impl AntennaCounts {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_user_t == 0 || self.n_user_r == 0 || self.m_elements == 0 {
            return Err(Error::Domain("antenna and element counts must be positive".into()));
        }
        Ok(())
    }
}

/// Tx→RIS channel `f` (M×N) and RIS→user channels `h_t` (N_t×M), `h_r`
/// (N_r×M).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub f: ComplexMatrix,
    pub h_t: ComplexMatrix,
    pub h_r: ComplexMatrix,
}

impl ChannelSet {
    pub fn new(f: ComplexMatrix, h_t: ComplexMatrix, h_r: ComplexMatrix) -> Result<Self> {
        let set = Self { f, h_t, h_r };
        set.validate()?;
        Ok(set)
    }

    pub fn m_elements(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.f.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.f.nrows();
        if self.h_t.ncols() != m || self.h_r.ncols() != m {
            return Err(Error::Dimension(format!(
                "RIS dimension mismatch: f has {m} rows, h_t {} cols, h_r {} cols",
                self.h_t.ncols(),
                self.h_r.ncols()
            )));
        }
        let finite = |c: &ComplexMatrix| c.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !(finite(&self.f) && finite(&self.h_t) && finite(&self.h_r)) {
            return Err(Error::Numeric("channel contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn check_counts(&self, counts: &AntennaCounts) -> Result<()> {
        if self.f.shape() != (counts.m_elements, counts.n_tx)
            || self.h_t.shape() != (counts.n_user_t, counts.m_elements)
            || self.h_r.shape() != (counts.n_user_r, counts.m_elements)
        {
            return Err(Error::Dimension("channel set does not match antenna counts".into()));
        }
        Ok(())
    }

    /// FNV-1a digest over the bit patterns of all entries.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for m in [&self.f, &self.h_t, &self.h_r] {
            for z in m.iter() {
                for word in [z.re.to_bits(), z.im.to_bits()] {
                    for byte in word.to_le_bytes() {
                        hash ^= byte as u64;
                        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
                    }
                }
            }
        }
        hash
    }

    /// Swaps the roles of the two users.
    pub fn swapped(&self) -> Self {
        Self { f: self.f.clone(), h_t: self.h_r.clone(), h_r: self.h_t.clone() }
    }
}

/// Draws the three channels of a deployment: each link is a Rician matrix
/// scaled by the square root of its path loss.
pub fn build_scenario<R: Rng + ?Sized>(
    geometry: &ScenarioGeometry,
    params: &FadingParams,
    counts: &AntennaCounts,
    rng: &mut R,
) -> Result<ChannelSet> {
    geometry.validate()?;
    params.validate()?;
    counts.validate()?;
    let (_, axis) = horizontal_frame(&geometry.tx_position, &geometry.ris_position)?;
    let tx = geometry.tx_position;
    let ris = geometry.ris_position;

    let f = {
        let gain = path_loss(geometry.tx_ris_distance(), params)?.sqrt();
        let a_ris = steering_vector(counts.m_elements, link_angle(&ris, &tx, &axis))?;
        let a_tx = steering_vector(counts.n_tx, link_angle(&tx, &ris, &axis))?;
        sample_rician(counts.m_elements, counts.n_tx, &a_ris, &a_tx, params.rician_k, rng)?
            .scale(gain)
    };
    let mut user_channel = |user: usize, n_rx: usize| -> Result<ComplexMatrix> {
        let pos = geometry.user_positions[user];
        let gain = path_loss(geometry.ris_user_distance(user), params)?.sqrt();
        let a_user = steering_vector(n_rx, link_angle(&pos, &ris, &axis))?;
        let a_ris = steering_vector(counts.m_elements, link_angle(&ris, &pos, &axis))?;
        Ok(sample_rician(n_rx, counts.m_elements, &a_user, &a_ris, params.rician_k, rng)?
            .scale(gain))
    };
    let h_t = user_channel(0, counts.n_user_t)?;
    let h_r = user_channel(1, counts.n_user_r)?;
    ChannelSet::new(f, h_t, h_r)
}
