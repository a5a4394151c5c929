//! Skew extraction from S-parameter phases, the first-order closed forms, and
//! resonance / zero-skew frequencies.
//!
//! Direction naming follows the crate-wide port picture: `skew_21` is seen at
//! the right end for a signal entering at the left, `skew_12` the reverse.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{FourPortResponse, FrequencyGrid, MixedModeResponse, SkewProfile};
use crate::sparam::{sinc, to_mixed_mode};

/// Distance from pi below which an adjacent-point jump is ambiguous.
pub const PI_AMBIGUITY: f64 = 1e-9;

/// Largest adjacent-point phase step accepted when extracting skew.
pub const MAX_PHASE_STEP: f64 = FRAC_PI_2;

/// Continuous phase over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedPhase {
    pub grid: FrequencyGrid,
    pub phase: Vec<f64>,
}

impl UnwrappedPhase {
    /// Largest |phase[k+1] - phase[k]|.
    pub fn max_step(&self) -> f64 {
        self.phase
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }
}

/// Maps `x` into [-pi, pi]; odd in `x`.
fn wrap(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

pub fn unwrap(series: &[Complex64], grid: &FrequencyGrid) -> Result<UnwrappedPhase> {
    if series.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let mut phase = Vec::with_capacity(series.len());
    let mut prev_raw = series[0].arg();
    phase.push(prev_raw);
    for (k, z) in series.iter().enumerate().skip(1) {
        let raw = z.arg();
        let step = wrap(raw - prev_raw);
        if (step.abs() - PI).abs() < PI_AMBIGUITY {
            return Err(Error::GridTooCoarse(format!(
                "phase jump of pi between {:e} Hz and {:e} Hz is ambiguous",
                grid.points()[k - 1],
                grid.points()[k]
            )));
        }
        phase.push(phase[k - 1] + step);
        prev_raw = raw;
    }
    Ok(UnwrappedPhase {
        grid: grid.clone(),
        phase,
    })
}

/// Fails unless the grid step resolves a delay of `delay` seconds, i.e.
/// `step < 1 / (2 delay)`.
pub fn check_nyquist(grid: &FrequencyGrid, delay: f64) -> Result<()> {
    let delay = delay.abs();
    if delay > 0.0 && grid.max_spacing() * 2.0 * delay >= 1.0 {
        return Err(Error::GridTooCoarse(format!(
            "step {:e} Hz does not resolve a delay of {delay:e} s (needs < {:e} Hz)",
            grid.max_spacing(),
            0.5 / delay
        )));
    }
    Ok(())
}

fn guarded(series: &[Complex64], grid: &FrequencyGrid, label: &str) -> Result<UnwrappedPhase> {
    let u = unwrap(series, grid)?;
    let step = u.max_step();
    if step >= MAX_PHASE_STEP {
        return Err(Error::GridTooCoarse(format!(
            "{label} phase moves {step:.3} rad between adjacent points"
        )));
    }
    Ok(u)
}

/// `(unwrap(a) - unwrap(b)) / (2 pi f)` with the difference re-anchored so its
/// first value lies in [-pi, pi].
fn phase_difference_delay(a: &UnwrappedPhase, b: &UnwrappedPhase) -> Vec<f64> {
    let d0 = a.phase[0] - b.phase[0];
    let offset = d0 - wrap(d0);
    a.grid
        .points()
        .iter()
        .zip(a.phase.iter().zip(&b.phase))
        .map(|(&f, (pa, pb))| (pa - pb - offset) / (TAU * f))
        .collect()
}

pub fn extract_skew(resp: &FourPortResponse) -> Result<SkewProfile> {
    let mm = to_mixed_mode(resp);
    extract_skew_mixed(&mm)
}

pub fn extract_skew_mixed(mm: &MixedModeResponse) -> Result<SkewProfile> {
    let grid = &mm.grid;
    let direction = |a: &[Complex64], b: &[Complex64], la: &str, lb: &str| -> Result<Vec<f64>> {
        let ua = guarded(a, grid, la)?;
        let ub = guarded(b, grid, lb)?;
        Ok(phase_difference_delay(&ua, &ub))
    };
    let (s21, s12) = rayon::join(
        || direction(&mm.ssd21, &mm.ssd41, "Ssd21", "Ssd41"),
        || direction(&mm.ssd12, &mm.ssd32, "Ssd12", "Ssd32"),
    );
    SkewProfile::new(grid.clone(), s21?, s12?)
}

/// First-order skew of an LC stage of skew `t_l` followed by an SC stage.
pub fn closed_form_skew(t_l: f64, delta_tau: f64, t_s: f64, grid: &FrequencyGrid) -> Result<SkewProfile> {
    let mut s21 = Vec::with_capacity(grid.len());
    let mut s12 = Vec::with_capacity(grid.len());
    for &f in grid.points() {
        let arg = TAU * f * delta_tau;
        let damped = t_s * sinc(arg);
        s21.push(arg.cos() * t_l + damped);
        s12.push(t_l + damped);
    }
    SkewProfile::new(grid.clone(), s21, s12)
}

/// Delay difference read from differential and common-mode phases.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTauProfile {
    pub grid: FrequencyGrid,
    /// `(phase(Sdd21) - phase(Scc21)) / (2 pi f)`.
    pub signed: Vec<f64>,
    /// `|signed|`.
    pub magnitude: Vec<f64>,
}

impl DeltaTauProfile {
    pub fn median_magnitude(&self) -> f64 {
        let mut v = self.magnitude.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    /// Magnitude at the grid point nearest to `f`.
    pub fn at(&self, f: f64) -> f64 {
        let pts = self.grid.points();
        let k = pts.partition_point(|&x| x < f);
        let k = if k == pts.len() || (k > 0 && f - pts[k - 1] < pts[k] - f) {
            k - 1
        } else {
            k
        };
        self.magnitude[k]
    }
}

pub fn delta_tau_from_mixed(mm: &MixedModeResponse) -> Result<DeltaTauProfile> {
    let dd = unwrap(&mm.sdd21, &mm.grid)?;
    let cc = unwrap(&mm.scc21, &mm.grid)?;
    let signed = phase_difference_delay(&dd, &cc);
    let magnitude = signed.iter().map(|v| v.abs()).collect();
    Ok(DeltaTauProfile {
        grid: mm.grid.clone(),
        signed,
        magnitude,
    })
}

/// `f_n = 1/(2 delta_tau) + (n - 1)/delta_tau` for `n = 1..=n_max`.
pub fn resonance_freqs(delta_tau: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(delta_tau > 0.0 && delta_tau.is_finite()) {
        return Err(Error::ZeroDeltaTau(delta_tau));
    }
    Ok((1..=n_max)
        .map(|n| 0.5 / delta_tau + (n - 1) as f64 / delta_tau)
        .collect())
}

/// `f_0 = n / (2 delta_tau)` for `n = 1..=n_max`.
pub fn skew_zero_freqs(delta_tau: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(delta_tau > 0.0 && delta_tau.is_finite()) {
        return Err(Error::ZeroDeltaTau(delta_tau));
    }
    Ok((1..=n_max).map(|n| n as f64 / (2.0 * delta_tau)).collect())
}
