//! Exact single-ended S-parameters of a matched, lossless coupled segment and
//! the mixed-mode view of them.
//!
//! For a segment with mode ratio `p`, delay difference `delta_tau`, average
//! delay `common_delay` and a flat delay `t_l` on the P line at its input,
//! the forward block `[[S21, S23], [S41, S43]]` is
//!
//! ```text
//! S21 = (cos x - i q sin x) e^{-i phi} D      S23 = -2i s sin x e^{-i phi}
//! S41 = -2i s sin x e^{-i phi} D              S43 = (cos x + i q sin x) e^{-i phi}
//! ```
//!
//! with `q = (1-p)/(1+p)`, `s = sqrt(p)/(1+p)`, `x = -pi f delta_tau`,
//! `phi = 2 pi f common_delay` and `D = e^{+i 2 pi f t_l}`. The block is
//! unitary for every `x`. The reverse block is its transpose.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Block, FourPortResponse, FrequencyGrid, MixedModeResponse};

/// Unnormalized `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Exact synthesis parameters of one coupled segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSynthParams {
    pub p: f64,
    /// `tau_pi - tau_c`, seconds.
    pub delta_tau: f64,
    /// Average of the two mode delays, seconds.
    pub common_delay: f64,
    /// Flat delay on the P line at the segment input, seconds.
    pub t_l: f64,
}

impl SegmentSynthParams {
    pub fn new(p: f64, delta_tau: f64, common_delay: f64, t_l: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::Unsynthesizable(format!("p must be positive, got {p}")));
        }
        if !(common_delay.is_finite() && common_delay >= 0.0) {
            return Err(Error::Unsynthesizable(format!(
                "common delay must be non-negative, got {common_delay}"
            )));
        }
        if !delta_tau.is_finite() || !t_l.is_finite() {
            return Err(Error::Unsynthesizable("delays must be finite".into()));
        }
        Ok(Self {
            p,
            delta_tau,
            common_delay,
            t_l,
        })
    }

    /// Pure flat delay on the P line.
    pub fn flat(t_l: f64) -> Self {
        Self {
            p: 1.0,
            delta_tau: 0.0,
            common_delay: 0.0,
            t_l,
        }
    }

    /// Forward block at one frequency.
    pub fn forward_block(&self, f: f64) -> Block {
        let p = self.p;
        let q = (1.0 - p) / (1.0 + p);
        let s = p.sqrt() / (1.0 + p);
        let (sx, cx) = (-PI * f * self.delta_tau).sin_cos();
        let common = Complex64::cis(-2.0 * PI * f * self.common_delay);
        let d = Complex64::cis(2.0 * PI * f * self.t_l);
        let through_p = Complex64::new(cx, -q * sx) * common;
        let through_n = Complex64::new(cx, q * sx) * common;
        let coupling = Complex64::new(0.0, -2.0 * s * sx) * common;
        Block::new(through_p * d, coupling, coupling * d, through_n)
    }
}

pub fn synth_segment(params: &SegmentSynthParams, grid: &FrequencyGrid) -> FourPortResponse {
    let forward: Vec<Block> = grid
        .points()
        .par_iter()
        .map(|&f| params.forward_block(f))
        .collect();
    FourPortResponse::from_forward(grid.clone(), forward).expect("one block per grid point")
}

/// Flat P-line delay `t_l` with no coupling and no common delay.
pub fn synth_lc_segment(t_l: f64, grid: &FrequencyGrid) -> FourPortResponse {
    synth_segment(&SegmentSynthParams::flat(t_l), grid)
}

pub fn to_mixed_mode(resp: &FourPortResponse) -> MixedModeResponse {
    let n = resp.len();
    let mut mm = MixedModeResponse {
        grid: resp.grid().clone(),
        sdd21: Vec::with_capacity(n),
        scc21: Vec::with_capacity(n),
        scd21: Vec::with_capacity(n),
        sdc21: Vec::with_capacity(n),
        ssd21: Vec::with_capacity(n),
        ssd41: Vec::with_capacity(n),
        ssd12: Vec::with_capacity(n),
        ssd32: Vec::with_capacity(n),
    };
    for k in 0..n {
        let (s21, s23, s41, s43) = (resp.s21(k), resp.s23(k), resp.s41(k), resp.s43(k));
        let (s12, s14, s32, s34) = (resp.s12(k), resp.s14(k), resp.s32(k), resp.s34(k));
        mm.ssd21.push((s21 - s23) * FRAC_1_SQRT_2);
        mm.ssd41.push((s43 - s41) * FRAC_1_SQRT_2);
        mm.ssd12.push((s12 - s14) * FRAC_1_SQRT_2);
        mm.ssd32.push((s34 - s32) * FRAC_1_SQRT_2);
        // paired so that symmetric segments give exactly zero conversion
        let (through_sum, through_diff) = (s21 + s43, s21 - s43);
        let (cross_sum, cross_diff) = (s41 + s23, s41 - s23);
        mm.sdd21.push((through_sum - cross_sum) * 0.5);
        mm.scc21.push((through_sum + cross_sum) * 0.5);
        mm.scd21.push((through_diff + cross_diff) * 0.5);
        mm.sdc21.push((through_diff - cross_diff) * 0.5);
    }
    mm
}

/// Second-order small-asymmetry expansions of the insertion magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeExpansions {
    pub sdd21_sq: f64,
    pub scd21_sq: f64,
    pub s21_sq: f64,
    pub s41_sq: f64,
}

/// Evaluates the expansions in `delta = 1 - sqrt(p)` term by term.
pub fn magnitude_expansions(p: f64, delta_tau: f64, t_l: f64, f: f64) -> MagnitudeExpansions {
    let d = 1.0 - p.sqrt();
    if !(d.abs() < 0.3) {
        log::warn!("asymmetry 1 - sqrt(p) = {d:.3} is outside the expansion regime");
    }
    let w = 2.0 * PI * f;
    let first = 0.5 * (w * delta_tau).sin() * (w * t_l).sin() * d;
    let second = (0.125 * (w * (delta_tau - t_l)).cos() + 0.375 * (w * (delta_tau + t_l)).cos()
        - 0.5 * (w * t_l).cos())
        * d
        * d;
    let half_t = (PI * f * t_l).sin_cos();
    let half_tau = (PI * f * delta_tau).sin_cos();
    let sin2_tau = half_tau.0 * half_tau.0;
    MagnitudeExpansions {
        sdd21_sq: half_t.1 * half_t.1 - first + second,
        scd21_sq: half_t.0 * half_t.0 + first - second,
        s21_sq: half_tau.1 * half_tau.1 + sin2_tau * d * d,
        s41_sq: sin2_tau - sin2_tau * d * d,
    }
}
