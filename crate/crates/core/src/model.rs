//! Shared data model: frequency grids, segment descriptors and per-frequency
//! responses. Nothing in here does physics.
//!
//! Port picture used throughout the crate: single-ended ports 1 and 3 are the
//! P and N conductors at the left end, 2 and 4 the P and N conductors at the
//! right end. `skew_21` is the skew seen at the right end for a signal
//! launched at the left mixed-mode port, `skew_12` the reverse. All times
//! are stored in seconds and all frequencies in hertz.

use std::sync::Arc;

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mode_solver::{derive_segment, LcMatrices};

/// 2x2 complex transmission block.
pub type Block = Matrix2<Complex64>;

/// Largest |S_ij - S_ji| still treated as reciprocal.
pub const RECIPROCITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Strictly increasing list of positive frequencies.
///
/// Points live behind an `Arc` so every response derived from the same grid
/// shares one allocation.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    points: Arc<[f64]>,
    max_spacing: f64,
}

impl PartialEq for FrequencyGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || self.points == other.points
    }
}

impl FrequencyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid("no frequency points".into()));
        }
        let mut max_spacing = 0.0_f64;
        for (i, &f) in points.iter().enumerate() {
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::NonPositiveFrequency(f));
            }
            if i > 0 {
                let step = f - points[i - 1];
                if step <= 0.0 {
                    return Err(Error::EmptyGrid(format!(
                        "points not strictly increasing at index {i}"
                    )));
                }
                max_spacing = max_spacing.max(step);
            }
        }
        Ok(Self {
            points: points.into(),
            max_spacing,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Largest distance between adjacent points (0 for a single point).
    pub fn max_spacing(&self) -> f64 {
        self.max_spacing
    }

    pub(crate) fn check_same(&self, other: &FrequencyGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub fn make_grid(f_start: f64, f_stop: f64, n_points: usize, spacing: Spacing) -> Result<FrequencyGrid> {
    if !(f_start.is_finite() && f_start > 0.0) {
        return Err(Error::NonPositiveFrequency(f_start));
    }
    if !f_stop.is_finite() || f_stop <= f_start {
        return Err(Error::EmptyGrid(format!(
            "stop {f_stop} Hz must exceed start {f_start} Hz"
        )));
    }
    if n_points < 2 {
        return Err(Error::EmptyGrid(format!("need at least 2 points, got {n_points}")));
    }
    let last = n_points - 1;
    let points = match spacing {
        Spacing::Linear => {
            let span = f_stop - f_start;
            (0..n_points)
                .map(|i| {
                    if i == last {
                        f_stop
                    } else {
                        f_start + span * (i as f64) / (last as f64)
                    }
                })
                .collect()
        }
        Spacing::Log => {
            let (a, b) = (f_start.ln(), f_stop.ln());
            (0..n_points)
                .map(|i| match i {
                    0 => f_start,
                    i if i == last => f_stop,
                    i => (a + (b - a) * (i as f64) / (last as f64)).exp(),
                })
                .collect()
        }
    };
    FrequencyGrid::new(points)
}

/// Per-unit-length description of a strongly coupled line, from which the
/// segment's delay difference and skew amplitude are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalLine {
    pub lc: LcMatrices,
    /// Meters.
    pub length: f64,
    /// Flat delay placed on the P line in front of the coupled section.
    pub t_l_prepend: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Lc,
    Sc,
}

impl std::fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SegmentKind::Lc => "LC",
            SegmentKind::Sc => "SC",
        })
    }
}

/// One stage of a cascaded channel.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentSpec {
    /// Loosely coupled stage with a flat skew `t_l`.
    Lc { t_l: f64 },
    /// Strongly coupled stage. `delta_tau` is the pi-mode minus c-mode delay,
    /// `t_s` the amplitude of its damped-oscillatory skew.
    Sc {
        delta_tau: f64,
        t_s: f64,
        physical: Option<PhysicalLine>,
    },
}

impl SegmentSpec {
    pub fn lc(t_l: f64) -> Self {
        SegmentSpec::Lc { t_l }
    }

    pub fn sc(delta_tau: f64, t_s: f64) -> Self {
        SegmentSpec::Sc {
            delta_tau,
            t_s,
            physical: None,
        }
    }

    pub fn kind(&self) -> SegmentKind {
        match self {
            SegmentSpec::Lc { .. } => SegmentKind::Lc,
            SegmentSpec::Sc { .. } => SegmentKind::Sc,
        }
    }

    pub fn delta_tau(&self) -> f64 {
        match self {
            SegmentSpec::Lc { .. } => 0.0,
            SegmentSpec::Sc { delta_tau, .. } => *delta_tau,
        }
    }

    pub fn t_s(&self) -> f64 {
        match self {
            SegmentSpec::Lc { .. } => 0.0,
            SegmentSpec::Sc { t_s, .. } => *t_s,
        }
    }

    /// Flat skew of the stage: `t_l` for LC, the prepended delay for a
    /// physical SC stage, zero otherwise.
    pub fn t_l(&self) -> f64 {
        match self {
            SegmentSpec::Lc { t_l } => *t_l,
            SegmentSpec::Sc {
                physical: Some(ph), ..
            } => ph.t_l_prepend,
            SegmentSpec::Sc { .. } => 0.0,
        }
    }
}

/// Tolerance for the declared-versus-derived check of physical SC segments.
pub const PHYSICAL_MATCH_TOL: f64 = 1e-15;

pub fn validate_segment(s: SegmentSpec) -> Result<SegmentSpec> {
    match &s {
        SegmentSpec::Lc { t_l } => {
            if !t_l.is_finite() {
                return Err(Error::InvalidSegment(format!("LC t_l is not finite: {t_l}")));
            }
        }
        SegmentSpec::Sc {
            delta_tau,
            t_s,
            physical,
        } => {
            if !delta_tau.is_finite() || !t_s.is_finite() {
                return Err(Error::InvalidSegment("SC parameters must be finite".into()));
            }
            if *delta_tau == 0.0 {
                return Err(Error::InvalidSegment(
                    "SC segment needs a non-zero delta tau; use LC for uncoupled stages".into(),
                ));
            }
            if let Some(ph) = physical {
                if !(ph.length > 0.0) {
                    return Err(Error::NegativeLength(ph.length));
                }
                if !ph.t_l_prepend.is_finite() {
                    return Err(Error::InvalidSegment("t_l_prepend is not finite".into()));
                }
                let derived = derive_segment(&ph.lc, ph.length, None)?;
                let (dt, ts) = (derived.delta_tau(), derived.t_s());
                if (dt - delta_tau).abs() > PHYSICAL_MATCH_TOL
                    || (ts - t_s).abs() > PHYSICAL_MATCH_TOL
                {
                    return Err(Error::InconsistentPhysicalParams(format!(
                        "declared (delta_tau {delta_tau:e} s, t_s {t_s:e} s), \
                         derived (delta_tau {dt:e} s, t_s {ts:e} s)"
                    )));
                }
            }
        }
    }
    Ok(s)
}

/// Matched four-port described by its transmission blocks.
///
/// `forward[k]` is `[[S21, S23], [S41, S43]]` (left ports 1/3 in, right ports
/// 2/4 out) and `reverse[k]` is `[[S12, S14], [S32, S34]]`.
#[derive(Debug, Clone)]
pub struct FourPortResponse {
    grid: FrequencyGrid,
    forward: Vec<Block>,
    reverse: Vec<Block>,
    reciprocal: bool,
}

impl FourPortResponse {
    /// Builds a reciprocal response: every reverse block is the transpose of
    /// the forward block.
    pub fn from_forward(grid: FrequencyGrid, forward: Vec<Block>) -> Result<Self> {
        if forward.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let reverse = forward.iter().map(|b| b.transpose()).collect();
        Ok(Self {
            grid,
            forward,
            reverse,
            reciprocal: true,
        })
    }

    pub fn new(grid: FrequencyGrid, forward: Vec<Block>, reverse: Vec<Block>) -> Result<Self> {
        if forward.len() != grid.len() || reverse.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let mut resp = Self {
            grid,
            forward,
            reverse,
            reciprocal: false,
        };
        resp.reciprocal = resp.max_reciprocity_error() <= RECIPROCITY_TOL;
        Ok(resp)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn forward(&self) -> &[Block] {
        &self.forward
    }

    pub fn reverse(&self) -> &[Block] {
        &self.reverse
    }

    pub fn is_reciprocal(&self) -> bool {
        self.reciprocal
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn s21(&self, k: usize) -> Complex64 {
        self.forward[k][(0, 0)]
    }
    pub fn s23(&self, k: usize) -> Complex64 {
        self.forward[k][(0, 1)]
    }
    pub fn s41(&self, k: usize) -> Complex64 {
        self.forward[k][(1, 0)]
    }
    pub fn s43(&self, k: usize) -> Complex64 {
        self.forward[k][(1, 1)]
    }
    pub fn s12(&self, k: usize) -> Complex64 {
        self.reverse[k][(0, 0)]
    }
    pub fn s14(&self, k: usize) -> Complex64 {
        self.reverse[k][(0, 1)]
    }
    pub fn s32(&self, k: usize) -> Complex64 {
        self.reverse[k][(1, 0)]
    }
    pub fn s34(&self, k: usize) -> Complex64 {
        self.reverse[k][(1, 1)]
    }

    /// max over frequency of |S12-S21|, |S14-S41|, |S32-S23|, |S34-S43|.
    pub fn max_reciprocity_error(&self) -> f64 {
        self.forward
            .iter()
            .zip(&self.reverse)
            .map(|(f, r)| (f.transpose() - r).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// max over frequency and over both blocks of | |col|^2 - 1 |.
    pub fn max_unitarity_error(&self) -> f64 {
        self.forward
            .iter()
            .chain(&self.reverse)
            .flat_map(|b| {
                (0..2).map(move |c| (b[(0, c)].norm_sqr() + b[(1, c)].norm_sqr() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Intra-pair skew in both propagation directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewProfile {
    grid: FrequencyGrid,
    skew_21: Vec<f64>,
    skew_12: Vec<f64>,
}

impl SkewProfile {
    pub fn new(grid: FrequencyGrid, skew_21: Vec<f64>, skew_12: Vec<f64>) -> Result<Self> {
        if skew_21.len() != grid.len() || skew_12.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(k) = skew_21
            .iter()
            .chain(&skew_12)
            .position(|v| !v.is_finite())
        {
            return Err(Error::GridTooCoarse(format!(
                "non-finite skew value at index {}",
                k % grid.len()
            )));
        }
        Ok(Self {
            grid,
            skew_21,
            skew_12,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn skew_21(&self) -> &[f64] {
        &self.skew_21
    }

    pub fn skew_12(&self) -> &[f64] {
        &self.skew_12
    }

    /// Same profile with the two directions exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            skew_21: self.skew_12.clone(),
            skew_12: self.skew_21.clone(),
        }
    }
}

/// Mixed-mode and mixed single-ended/differential transmission terms.
#[derive(Debug, Clone)]
pub struct MixedModeResponse {
    pub grid: FrequencyGrid,
    pub sdd21: Vec<Complex64>,
    pub scc21: Vec<Complex64>,
    pub scd21: Vec<Complex64>,
    pub sdc21: Vec<Complex64>,
    pub ssd21: Vec<Complex64>,
    pub ssd41: Vec<Complex64>,
    pub ssd12: Vec<Complex64>,
    pub ssd32: Vec<Complex64>,
}
