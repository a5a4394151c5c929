//! Least-squares fit of graph parameters to a measured skew profile.
//!
//! Skew is linear in every `t_l` and `t_s`, so for a fixed set of delay
//! differences the best flat/damped amplitudes come from one linear solve.
//! Unknown delay differences are scanned on a lattice around the hint, and
//! the best lattice point is polished with Nelder-Mead over all unknowns.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ispg::{evaluate_profile, Direction, IspgGraph};
use crate::model::{FrequencyGrid, SegmentSpec, SkewProfile};

pub const MAX_UNKNOWNS: usize = 5;
/// Flat and damped amplitudes are kept within +/- this bound, seconds.
pub const T_BOUND: f64 = 10e-12;
/// Lattice half-width for delay differences, relative to the hint.
pub const DELTA_TAU_SPAN: f64 = 0.1;
/// Lattice step for delay differences, seconds.
pub const DELTA_TAU_STEP: f64 = 0.5e-12;
const MAX_LATTICE: usize = 4096;
const SIMPLEX_T_STEP: f64 = 0.1;
const SIMPLEX_TAU_STEP: f64 = 0.5;
const MAX_ITERS: u64 = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    Known(f64),
    Unknown,
}

impl Param {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Param::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemplateNode {
    Lc { t_l: Param },
    Sc { delta_tau: Param, t_s: Param },
}

/// Channel topology with some parameters left open.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTemplate {
    pub nodes: Vec<TemplateNode>,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    T,
    DeltaTau,
}

impl GraphTemplate {
    pub fn new(nodes: Vec<TemplateNode>) -> Self {
        Self {
            nodes,
            direction: Direction::LeftToRight,
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.slots().len()
    }

    fn slots(&self) -> Vec<Field> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match n {
                TemplateNode::Lc { t_l } => {
                    if t_l.is_unknown() {
                        out.push(Field::T);
                    }
                }
                TemplateNode::Sc { delta_tau, t_s } => {
                    if delta_tau.is_unknown() {
                        out.push(Field::DeltaTau);
                    }
                    if t_s.is_unknown() {
                        out.push(Field::T);
                    }
                }
            }
        }
        out
    }

    /// Fills the unknowns, in node order (delay difference before amplitude),
    /// from `values` in seconds.
    pub fn instantiate(&self, values: &[f64]) -> Result<IspgGraph> {
        let mut it = values.iter().copied();
        let mut take = |p: Param| -> Result<f64> {
            match p {
                Param::Known(v) => Ok(v),
                Param::Unknown => it
                    .next()
                    .ok_or_else(|| Error::Config("too few values for template unknowns".into())),
            }
        };
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            nodes.push(match *n {
                TemplateNode::Lc { t_l } => SegmentSpec::lc(take(t_l)?),
                TemplateNode::Sc { delta_tau, t_s } => {
                    let dt = take(delta_tau)?;
                    SegmentSpec::sc(dt, take(t_s)?)
                }
            });
        }
        IspgGraph::with_direction(nodes, self.direction)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub graph: IspgGraph,
    /// Fitted unknowns in template order, seconds.
    pub values: Vec<f64>,
    /// RMS residual over both directions after refinement, seconds.
    pub residual_rms: f64,
    /// RMS residual of the best lattice point, seconds.
    pub lattice_rms: f64,
}

fn residual_rms(model: &SkewProfile, measured: &SkewProfile) -> f64 {
    let n = 2 * measured.grid().len();
    let ss: f64 = model
        .skew_21()
        .iter()
        .zip(measured.skew_21())
        .chain(model.skew_12().iter().zip(measured.skew_12()))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (ss / n as f64).sqrt()
}

fn stacked(p: &SkewProfile) -> DVector<f64> {
    DVector::from_iterator(
        2 * p.grid().len(),
        p.skew_21().iter().chain(p.skew_12()).copied(),
    )
}

/// Best amplitudes for fixed delay differences. `values` holds the delay
/// differences already; amplitude slots are overwritten.
fn solve_amplitudes(
    template: &GraphTemplate,
    slots: &[Field],
    values: &mut [f64],
    measured: &SkewProfile,
    target: &DVector<f64>,
) -> Result<f64> {
    let grid = measured.grid();
    let t_slots: Vec<usize> = (0..slots.len()).filter(|&i| slots[i] == Field::T).collect();
    for &i in &t_slots {
        values[i] = 0.0;
    }
    let base = evaluate_profile(&template.instantiate(values)?, grid)?;
    if !t_slots.is_empty() {
        let base_v = stacked(&base);
        let mut a = DMatrix::<f64>::zeros(base_v.len(), t_slots.len());
        for (col, &i) in t_slots.iter().enumerate() {
            values[i] = 1e-12;
            let p = evaluate_profile(&template.instantiate(values)?, grid)?;
            a.set_column(col, &((stacked(&p) - &base_v) / 1e-12));
            values[i] = 0.0;
        }
        let rhs = target - base_v;
        let sol = a
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::NonConvergent(e.to_string()))?;
        for (col, &i) in t_slots.iter().enumerate() {
            values[i] = sol[col].clamp(-T_BOUND, T_BOUND);
        }
    }
    let model = evaluate_profile(&template.instantiate(values)?, grid)?;
    Ok(residual_rms(&model, measured))
}

fn lattice(hint: f64) -> Vec<f64> {
    let k_max = (DELTA_TAU_SPAN * hint / DELTA_TAU_STEP + 1e-9).floor() as i64;
    (-k_max..=k_max)
        .map(|k| hint + k as f64 * DELTA_TAU_STEP)
        .collect()
}

struct Refine<'a> {
    template: &'a GraphTemplate,
    measured: &'a SkewProfile,
}

impl CostFunction for Refine<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, ArgminError> {
        let values: Vec<f64> = x.iter().map(|v| v * 1e-12).collect();
        let cost = self
            .template
            .instantiate(&values)
            .and_then(|g| evaluate_profile(&g, self.measured.grid()))
            .map(|m| residual_rms(&m, self.measured) * 1e12)
            .unwrap_or(f64::INFINITY);
        Ok(if cost.is_finite() { cost } else { f64::INFINITY })
    }
}

fn check_band(grid: &FrequencyGrid, delta_tau_hint: f64) -> Result<()> {
    let band = grid.last() - grid.first();
    let needed = 2.0 / delta_tau_hint;
    if band < needed {
        return Err(Error::InsufficientBandwidth { band, needed });
    }
    Ok(())
}

/// Fits the unknowns of `template` to `measured` (both directions).
pub fn fit_parameters(
    measured: &SkewProfile,
    template: &GraphTemplate,
    delta_tau_hint: f64,
) -> Result<FitResult> {
    let slots = template.slots();
    if slots.len() > MAX_UNKNOWNS {
        return Err(Error::OverParameterized(slots.len()));
    }
    if !(delta_tau_hint > 0.0 && delta_tau_hint.is_finite()) {
        return Err(Error::ZeroDeltaTau(delta_tau_hint));
    }
    check_band(measured.grid(), delta_tau_hint)?;
    let target = stacked(measured);

    let tau_slots: Vec<usize> = (0..slots.len())
        .filter(|&i| slots[i] == Field::DeltaTau)
        .collect();
    let axis = lattice(delta_tau_hint);
    let mut values = vec![0.0; slots.len()];
    for &i in &tau_slots {
        values[i] = delta_tau_hint;
    }

    let combos = axis.len().checked_pow(tau_slots.len() as u32).unwrap_or(usize::MAX);
    let mut best_values = values.clone();
    let mut best = solve_amplitudes(template, &slots, &mut best_values, measured, &target)?;
    if tau_slots.is_empty() {
        // nothing to scan
    } else if combos <= MAX_LATTICE {
        let mut idx = vec![0usize; tau_slots.len()];
        loop {
            for (j, &i) in tau_slots.iter().enumerate() {
                values[i] = axis[idx[j]];
            }
            let r = solve_amplitudes(template, &slots, &mut values, measured, &target)?;
            if r < best {
                best = r;
                best_values.clone_from(&values);
            }
            let mut j = 0;
            while j < idx.len() {
                idx[j] += 1;
                if idx[j] < axis.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == idx.len() {
                break;
            }
        }
    } else {
        // coordinate sweeps when the full product is too large
        for _ in 0..3 {
            for &i in &tau_slots {
                let mut trial = best_values.clone();
                for &cand in &axis {
                    trial[i] = cand;
                    let r = solve_amplitudes(template, &slots, &mut trial, measured, &target)?;
                    if r < best {
                        best = r;
                        best_values.clone_from(&trial);
                    }
                }
            }
        }
    }
    let lattice_rms = best;
    log::debug!("lattice best residual {:.4} ps", lattice_rms * 1e12);

    if slots.is_empty() {
        return Ok(FitResult {
            graph: template.instantiate(&[])?,
            values: vec![],
            residual_rms: lattice_rms,
            lattice_rms,
        });
    }

    let x0: Vec<f64> = best_values.iter().map(|v| v * 1e12).collect();
    let mut simplex = vec![x0.clone()];
    for (i, field) in slots.iter().enumerate() {
        let mut v = x0.clone();
        v[i] += match field {
            Field::T => SIMPLEX_T_STEP,
            Field::DeltaTau => SIMPLEX_TAU_STEP,
        };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-12)
        .map_err(|e| Error::NonConvergent(e.to_string()))?;
    let problem = Refine { template, measured };
    let res = Executor::new(problem, solver)
        .configure(|st| st.max_iters(MAX_ITERS))
        .run()
        .map_err(|e| Error::NonConvergent(e.to_string()))?;
    let state = res.state();
    let refined_cost = state.get_best_cost() * 1e-12;
    let refined = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::NonConvergent("no parameters after refinement".into()))?;
    if !refined_cost.is_finite() || refined_cost > lattice_rms {
        return Err(Error::NonConvergent(format!(
            "refined residual {refined_cost:e} s is not below lattice residual {lattice_rms:e} s"
        )));
    }
    let values: Vec<f64> = refined.iter().map(|v| v * 1e-12).collect();
    Ok(FitResult {
        graph: template.instantiate(&values)?,
        values,
        residual_rms: refined_cost,
        lattice_rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_grid, Spacing};

    fn baseline_template() -> GraphTemplate {
        GraphTemplate::new(vec![
            TemplateNode::Lc { t_l: Param::Unknown },
            TemplateNode::Sc {
                delta_tau: Param::Unknown,
                t_s: Param::Unknown,
            },
            TemplateNode::Lc { t_l: Param::Unknown },
        ])
    }

    #[test]
    fn lattice_contains_hint() {
        let l = lattice(88e-12);
        assert!(l.contains(&88e-12));
        assert!(l.first().unwrap() >= &(0.9 * 88e-12 - 1e-18));
        assert!(l.last().unwrap() <= &(1.1 * 88e-12 + 1e-18));
    }

    #[test]
    fn noiseless_recovery() {
        let grid = make_grid(100e6, 50e9, 500, Spacing::Linear).unwrap();
        let truth = baseline_template().instantiate(&[1e-12, 88e-12, 5e-12, 0.8e-12]).unwrap();
        let measured = evaluate_profile(&truth, &grid).unwrap();
        let fit = fit_parameters(&measured, &baseline_template(), 86e-12).unwrap();
        let want = [1e-12, 88e-12, 5e-12, 0.8e-12];
        for (v, w) in fit.values.iter().zip(want) {
            assert!((v - w).abs() < 0.05e-12, "{v:e} vs {w:e}");
        }
        assert!(fit.residual_rms < 1e-15);
    }

    #[test]
    fn limits_enforced() {
        let grid = make_grid(100e6, 50e9, 50, Spacing::Linear).unwrap();
        let g = baseline_template().instantiate(&[1e-12, 88e-12, 5e-12, 0.8e-12]).unwrap();
        let m = evaluate_profile(&g, &grid).unwrap();
        let mut six = baseline_template();
        six.nodes.push(TemplateNode::Sc {
            delta_tau: Param::Unknown,
            t_s: Param::Unknown,
        });
        assert!(matches!(fit_parameters(&m, &six, 88e-12), Err(Error::OverParameterized(6))));
        let narrow = make_grid(1e9, 10e9, 50, Spacing::Linear).unwrap();
        let m = evaluate_profile(&g, &narrow).unwrap();
        assert!(matches!(
            fit_parameters(&m, &baseline_template(), 88e-12),
            Err(Error::InsufficientBandwidth { .. })
        ));
    }
}
