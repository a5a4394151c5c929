//! Lossless two-conductor mode solver.
//!
//! The coupled pair obeys `V'' + w^2 L C V = 0`. With `P = L C` the squared
//! mode slownesses are the eigenvalues of `P`:
//!
//! ```text
//! s^2 = (P11 + P22 -/+ u) / 2,   u = sqrt((P11 - P22)^2 + 4 P12 P21)
//! ```
//!
//! The c-mode is always the `-u` branch and the pi-mode the `+u` branch, so
//! `v_c >= v_pi` and the delay difference `tau_pi - tau_c` is non-negative.
//! The branch rule is a labeling convention, not a statement about which
//! mode is even-like.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{PhysicalLine, SegmentSpec};

/// Magnitude below which a mode-coupling term of `P` counts as zero, (s/m)^2.
pub const COUPLING_EPS: f64 = 1e-30;

/// Angular frequency at which the mode impedances are evaluated.
pub const IMPEDANCE_REF_OMEGA: f64 = 2.0 * std::f64::consts::PI * 1e9;

/// Per-unit-length inductance (H/m) and capacitance (F/m) matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LcMatrices {
    l: Matrix2<f64>,
    c: Matrix2<f64>,
}

impl LcMatrices {
    pub fn new(l: Matrix2<f64>, c: Matrix2<f64>) -> Result<Self> {
        let lc = Self { l, c };
        if lc.p_matrix().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSegment("L*C products are not finite".into()));
        }
        Ok(lc)
    }

    pub fn from_rows(l: [[f64; 2]; 2], c: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(
            Matrix2::new(l[0][0], l[0][1], l[1][0], l[1][1]),
            Matrix2::new(c[0][0], c[0][1], c[1][0], c[1][1]),
        )
    }

    /// Builds a line with `L = l0 * I` and a capacitance matrix chosen so that
    /// the pair has the requested `tau_pi - tau_c` per meter and asymmetry
    /// `1 - sqrt(p)`.
    pub fn with_mode_targets(l0: f64, c0: f64, delta_tau_per_m: f64, delta_t_s: f64) -> Result<Self> {
        if !(l0 > 0.0 && c0 > 0.0 && delta_tau_per_m > 0.0) {
            return Err(Error::InvalidSegment(
                "l0, c0 and delta tau per meter must be positive".into(),
            ));
        }
        let sqrt_p = 1.0 - delta_t_s;
        if !(sqrt_p > 0.0) {
            return Err(Error::InvalidSegment(format!(
                "asymmetry {delta_t_s} gives non-positive sqrt(p)"
            )));
        }
        let p = sqrt_p * sqrt_p;
        let q = (1.0 - p) / (1.0 + p);
        let d = delta_tau_per_m / l0.sqrt();
        let radicand = 4.0 * c0 - d * d;
        if !(radicand > 0.0) {
            return Err(Error::InvalidSegment("delta tau too large for c0".into()));
        }
        // eigenvalues of C are c0 -/+ r
        let r = d * radicand.sqrt() / 2.0;
        if r >= c0 {
            return Err(Error::InvalidSegment("delta tau too large for c0".into()));
        }
        let eta_c0 = -q * r;
        let c12 = -r * (1.0 - q * q).sqrt();
        Self::from_rows(
            [[l0, 0.0], [0.0, l0]],
            [[c0 + eta_c0, c12], [c12, c0 - eta_c0]],
        )
    }

    pub fn l(&self) -> &Matrix2<f64> {
        &self.l
    }

    pub fn c(&self) -> &Matrix2<f64> {
        &self.c
    }

    /// `P = L C`, written out entry by entry.
    pub fn p_matrix(&self) -> Matrix2<f64> {
        let (l, c) = (&self.l, &self.c);
        Matrix2::new(
            l[(0, 0)] * c[(0, 0)] + l[(0, 1)] * c[(1, 0)],
            l[(0, 0)] * c[(0, 1)] + l[(0, 1)] * c[(1, 1)],
            l[(1, 0)] * c[(0, 0)] + l[(1, 1)] * c[(1, 0)],
            l[(1, 0)] * c[(0, 1)] + l[(1, 1)] * c[(1, 1)],
        )
    }

    /// Both matrices symmetric and both diagonals equal.
    pub fn is_symmetric_pair(&self) -> bool {
        let (l, c) = (&self.l, &self.c);
        l[(0, 1)] == l[(1, 0)]
            && c[(0, 1)] == c[(1, 0)]
            && l[(0, 0)] == l[(1, 1)]
            && c[(0, 0)] == c[(1, 1)]
    }
}

/// Everything derived from one `LcMatrices`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSolution {
    /// c-mode phase velocity, m/s (the `-u` branch).
    pub v_c: f64,
    /// pi-mode phase velocity, m/s (the `+u` branch).
    pub v_pi: f64,
    /// c-mode slowness `1/v_c`, s/m.
    pub slowness_c: f64,
    /// pi-mode slowness `1/v_pi`, s/m.
    pub slowness_pi: f64,
    /// Discriminant `u`, (s/m)^2.
    pub u: f64,
    pub r_c: f64,
    pub r_pi: f64,
    /// `-r_c / r_pi`; one for a symmetric pair.
    pub p: f64,
    /// `1 - sqrt(p)`.
    pub delta_t_s: f64,
    pub z_c1: f64,
    pub z_c2: f64,
    pub z_pi1: f64,
    pub z_pi2: f64,
}

pub fn solve_modes(lc: &LcMatrices) -> Result<ModeSolution> {
    let p = lc.p_matrix();
    let (p11, p12, p21, p22) = (p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]);
    let trace = p11 + p22;
    let diff = p11 - p22;
    let disc = diff * diff + 4.0 * p12 * p21;
    if !(disc >= 0.0) {
        return Err(Error::NonPropagatingMode(format!(
            "u^2 = {disc:e} < 0, propagation constants are complex"
        )));
    }
    let u = disc.sqrt();
    let s2_c = (trace - u) / 2.0;
    let s2_pi = (trace + u) / 2.0;
    if !(s2_c > 0.0 && s2_pi > 0.0) {
        return Err(Error::NonPropagatingMode(format!(
            "squared slowness ({s2_c:e}, {s2_pi:e}) must both be positive"
        )));
    }
    if p12.abs() < COUPLING_EPS {
        return Err(Error::UncoupledDegenerate(p12));
    }
    // s^2 - P11 = ((P22 - P11) -/+ u) / 2, kept in this form so a symmetric
    // pair gives r_c = -r_pi exactly.
    let r_c = (-diff - u) / 2.0 / p12;
    let r_pi = (-diff + u) / 2.0 / p12;
    let ratio = -r_c / r_pi;
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::UncoupledDegenerate(p21));
    }
    let slowness_c = s2_c.sqrt();
    let slowness_pi = s2_pi.sqrt();

    let (l11, l12, l21, l22) = (lc.l[(0, 0)], lc.l[(0, 1)], lc.l[(1, 0)], lc.l[(1, 1)]);
    let i_omega = Complex64::new(0.0, IMPEDANCE_REF_OMEGA);
    let det_term = i_omega * (l12 * l21 - l11 * l22);
    let gamma_c = i_omega * slowness_c;
    let gamma_pi = i_omega * slowness_pi;
    let z_c1 = det_term / (gamma_c * (l12 * r_c - l22));
    let z_c2 = det_term * r_c / (gamma_c * (l21 - l11 * r_c));
    let z_pi1 = det_term / (gamma_pi * (l12 * r_pi - l22));
    let z_pi2 = det_term * r_pi / (gamma_pi * (l21 - l11 * r_pi));

    Ok(ModeSolution {
        v_c: 1.0 / slowness_c,
        v_pi: 1.0 / slowness_pi,
        slowness_c,
        slowness_pi,
        u,
        r_c,
        r_pi,
        p: ratio,
        delta_t_s: 1.0 - ratio.sqrt(),
        z_c1: z_c1.re,
        z_c2: z_c2.re,
        z_pi1: z_pi1.re,
        z_pi2: z_pi2.re,
    })
}

/// Normalized residual of the characteristic quartic at slowness `s`
/// (`gamma = i w s`). Frequency independent.
pub fn characteristic_residual(lc: &LcMatrices, slowness: f64) -> f64 {
    let p = lc.p_matrix();
    let (p11, p12, p21, p22) = (p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]);
    let s2 = slowness * slowness;
    let value = s2 * s2 - (p11 + p22) * s2 + (p11 * p22 - p12 * p21);
    let scale = p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    value.abs() / (scale * scale)
}

/// Asymmetry written against a symmetric base:
/// `P = [[P22 + dc', P21 + dc''], [P21, P22]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymmetryPerturbation {
    pub delta_c_prime: f64,
    pub delta_c_doubleprime: f64,
    pub base_p22: f64,
    pub base_p21: f64,
}

impl AsymmetryPerturbation {
    /// Unique decomposition of `lc.p_matrix()` into base plus perturbation.
    pub fn from_lc(lc: &LcMatrices) -> Self {
        let p = lc.p_matrix();
        Self {
            delta_c_prime: p[(0, 0)] - p[(1, 1)],
            delta_c_doubleprime: p[(0, 1)] - p[(1, 0)],
            base_p22: p[(1, 1)],
            base_p21: p[(1, 0)],
        }
    }

    pub fn sum(&self) -> f64 {
        self.delta_c_prime + self.delta_c_doubleprime
    }

    /// `(|dc'|/|P22|, |dc''|/|P21|)`.
    pub fn relative_size(&self) -> (f64, f64) {
        (
            (self.delta_c_prime / self.base_p22).abs(),
            (self.delta_c_doubleprime / self.base_p21).abs(),
        )
    }
}

/// First-order estimate `1 - sqrt(p) ~ (dc' + dc'') / (v_c^-2 - v_pi^-2)`.
///
/// Accurate to first order only when `dc''` is zero: a pure `dc''`
/// perturbation leaves `p = 1` exactly.
pub fn estimate_delta_t_s(pert: &AsymmetryPerturbation, v_c: f64, v_pi: f64) -> Result<f64> {
    let denom = v_c.powi(-2) - v_pi.powi(-2);
    if !(denom.abs() >= COUPLING_EPS) {
        return Err(Error::DegenerateVelocities);
    }
    let (rel1, rel2) = pert.relative_size();
    if rel1 > 0.1 || rel2 > 0.1 {
        log::warn!(
            "asymmetry perturbation is not small (|dc'|/|P22| = {rel1:.3}, |dc''|/|P21| = {rel2:.3})"
        );
    }
    Ok(pert.sum() / denom)
}

/// SC segment of length `length` cut from the line `lc`.
///
/// `delta_tau = length * (1/v_pi - 1/v_c)` and `t_s = delta_t_s * delta_tau`,
/// the latter evaluated through `v_s = (v_c + v_pi) / ((dc' + dc'') v_c v_pi)`
/// as `t_s = -length / v_s`. Without `pert` the coupling sum is recovered by
/// inverting the first-order asymmetry estimate, and the returned segment
/// keeps the physical description. With `pert` the result is a plain declared
/// segment because its `t_s` no longer follows from `lc` alone.
pub fn derive_segment(
    lc: &LcMatrices,
    length: f64,
    pert: Option<&AsymmetryPerturbation>,
) -> Result<SegmentSpec> {
    if !(length > 0.0) {
        return Err(Error::NegativeLength(length));
    }
    let m = solve_modes(lc)?;
    let delta_tau = length * (m.slowness_pi - m.slowness_c);
    let coupling_sum = match pert {
        Some(p) => p.sum(),
        None => m.delta_t_s * (m.slowness_c * m.slowness_c - m.slowness_pi * m.slowness_pi),
    };
    let inv_v_s = coupling_sum / (m.slowness_c + m.slowness_pi);
    let t_s = -length * inv_v_s;
    let physical = pert.is_none().then(|| PhysicalLine {
        lc: lc.clone(),
        length,
        t_l_prepend: 0.0,
    });
    Ok(SegmentSpec::Sc {
        delta_tau,
        t_s,
        physical,
    })
}
