//! Exact cascading of matched segments and skew re-extraction. Used as the
//! reference against which the graph evaluation is checked.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ispg::{Direction, IspgGraph};
use crate::mode_solver::solve_modes;
use crate::model::{Block, FourPortResponse, FrequencyGrid, SegmentSpec, SkewProfile};
use crate::skew::extract_skew;
use crate::sparam::{synth_segment, SegmentSynthParams};

/// Common delay given to declared SC nodes, as a multiple of `|delta_tau|`.
pub const DECLARED_COMMON_DELAY_FACTOR: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct CascadeResult {
    pub response: FourPortResponse,
    pub per_segment: Vec<FourPortResponse>,
}

/// Chains segments listed left to right. Forward blocks multiply as
/// `A_N ... A_1`, reverse blocks as `B_1 ... B_N`.
pub fn cascade(segments: &[FourPortResponse]) -> Result<CascadeResult> {
    let first = segments
        .first()
        .ok_or_else(|| Error::Config("nothing to cascade".into()))?;
    let grid = first.grid().clone();
    for s in &segments[1..] {
        grid.check_same(s.grid())?;
    }
    // reciprocal segments give a reciprocal chain; build it from the forward
    // products so the reverse blocks are exact transposes
    let reciprocal = segments.iter().all(FourPortResponse::is_reciprocal);
    let forward: Vec<Block> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            segments[1..]
                .iter()
                .fold(segments[0].forward()[k], |acc, s| s.forward()[k] * acc)
        })
        .collect();
    let response = if reciprocal {
        FourPortResponse::from_forward(grid, forward)?
    } else {
        let reverse: Vec<Block> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                segments[1..]
                    .iter()
                    .fold(segments[0].reverse()[k], |acc, s| acc * s.reverse()[k])
            })
            .collect();
        FourPortResponse::new(grid, forward, reverse)?
    };
    Ok(CascadeResult {
        response,
        per_segment: segments.to_vec(),
    })
}

/// Exact synthesis parameters for one node.
///
/// A physical SC node uses its solved modes. A declared SC node gets the
/// mode ratio whose exact low-frequency skew equals `t_s`:
/// `q = t_s / delta_tau`, `p = (1 - q) / (1 + q)`.
pub fn node_synth_params(node: &SegmentSpec) -> Result<SegmentSynthParams> {
    match node {
        SegmentSpec::Lc { t_l } => Ok(SegmentSynthParams::flat(*t_l)),
        SegmentSpec::Sc {
            physical: Some(ph), ..
        } => {
            let m = solve_modes(&ph.lc)?;
            SegmentSynthParams::new(
                m.p,
                ph.length * (m.slowness_pi - m.slowness_c),
                ph.length * (m.slowness_c + m.slowness_pi) / 2.0,
                ph.t_l_prepend,
            )
        }
        SegmentSpec::Sc {
            delta_tau, t_s, ..
        } => {
            let q = t_s / delta_tau;
            if !(q.abs() < 1.0) {
                return Err(Error::Unsynthesizable(format!(
                    "|t_s| = {:e} s must be below |delta_tau| = {:e} s",
                    t_s.abs(),
                    delta_tau.abs()
                )));
            }
            SegmentSynthParams::new(
                (1.0 - q) / (1.0 + q),
                *delta_tau,
                DECLARED_COMMON_DELAY_FACTOR * delta_tau.abs(),
                0.0,
            )
        }
    }
}

/// Synthesizes every node on `grid` and cascades them in physical order.
pub fn cascade_graph(graph: &IspgGraph, grid: &FrequencyGrid) -> Result<CascadeResult> {
    let segments = graph
        .nodes()
        .iter()
        .map(|n| Ok(synth_segment(&node_synth_params(n)?, grid)))
        .collect::<Result<Vec<_>>>()?;
    cascade(&segments)
}

/// Skew of the exact cascade, in the graph's direction.
pub fn oracle_skew(graph: &IspgGraph, grid: &FrequencyGrid) -> Result<SkewProfile> {
    let c = cascade_graph(graph, grid)?;
    let p = extract_skew(&c.response)?;
    Ok(match graph.direction() {
        Direction::LeftToRight => p,
        Direction::RightToLeft => p.swapped(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionMetrics {
    pub rms: f64,
    pub max_abs: f64,
    pub peak_to_peak_ref: f64,
}

/// Error of `a` against reference `b`, pooled and per direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileComparison {
    pub rms: f64,
    pub max_abs: f64,
    pub peak_to_peak_ref: f64,
    pub skew_21: DirectionMetrics,
    pub skew_12: DirectionMetrics,
}

fn metrics(a: &[f64], b: &[f64]) -> DirectionMetrics {
    let n = a.len() as f64;
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let max_abs = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (lo, hi) = b
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    DirectionMetrics {
        rms: (ss / n).sqrt(),
        max_abs,
        peak_to_peak_ref: hi - lo,
    }
}

pub fn compare_profiles(a: &SkewProfile, b: &SkewProfile) -> Result<ProfileComparison> {
    a.grid().check_same(b.grid())?;
    let d21 = metrics(a.skew_21(), b.skew_21());
    let d12 = metrics(a.skew_12(), b.skew_12());
    let both_a: Vec<f64> = a.skew_21().iter().chain(a.skew_12()).copied().collect();
    let both_b: Vec<f64> = b.skew_21().iter().chain(b.skew_12()).copied().collect();
    let pooled = metrics(&both_a, &both_b);
    Ok(ProfileComparison {
        rms: pooled.rms,
        max_abs: pooled.max_abs,
        peak_to_peak_ref: pooled.peak_to_peak_ref,
        skew_21: d21,
        skew_12: d12,
    })
}
