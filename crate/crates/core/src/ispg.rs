//! Skew propagation graph: a cascaded channel as an ordered list of LC and SC
//! nodes, evaluated with a right-to-left counter sweep.
//!
//! The sweep walks from the observation end towards the source keeping a
//! phase `phi` and a running skew `S`:
//!
//! ```text
//! LC node:  S += t_l cos(phi)
//! SC node:  S += t_s sinc(pi f dtau) cos(phi + pi f dtau);  phi += 2 pi f dtau
//! ```
//!
//! `skew_21` sweeps the nodes in signal order for the graph's direction and
//! `skew_12` sweeps the opposite order.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mode_solver::LcMatrices;
use crate::model::{validate_segment, FrequencyGrid, PhysicalLine, SegmentKind, SegmentSpec, SkewProfile};
use crate::sparam::sinc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Source at node 0.
    #[default]
    LeftToRight,
    /// Source at the last node.
    RightToLeft,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::LeftToRight => Direction::RightToLeft,
            Direction::RightToLeft => Direction::LeftToRight,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::LeftToRight => "left_to_right",
            Direction::RightToLeft => "right_to_left",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "left_to_right" => Some(Direction::LeftToRight),
            "right_to_left" => Some(Direction::RightToLeft),
            _ => None,
        }
    }
}

/// Ordered channel description. Node 0 is the physical left end.
#[derive(Debug, Clone, PartialEq)]
pub struct IspgGraph {
    nodes: Vec<SegmentSpec>,
    direction: Direction,
}

/// One sweep stage. A physical SC node with a prepended delay yields two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Stage {
    pub node: usize,
    pub kind: SegmentKind,
    pub t: f64,
    pub delta_tau: f64,
}

impl IspgGraph {
    pub fn new(nodes: Vec<SegmentSpec>) -> Result<Self> {
        Self::with_direction(nodes, Direction::LeftToRight)
    }

    pub fn with_direction(nodes: Vec<SegmentSpec>, direction: Direction) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("a channel needs at least one segment".into()));
        }
        let nodes = nodes
            .into_iter()
            .map(validate_segment)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nodes, direction })
    }

    pub fn nodes(&self) -> &[SegmentSpec] {
        &self.nodes
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same channel observed from the other end.
    pub fn reversed(&self) -> Self {
        Self {
            nodes: self.nodes.clone(),
            direction: self.direction.flipped(),
        }
    }

    /// Stages in physical left-to-right order.
    pub(crate) fn physical_stages(&self) -> Vec<Stage> {
        let mut out = Vec::with_capacity(self.nodes.len());
        for (node, seg) in self.nodes.iter().enumerate() {
            match seg {
                SegmentSpec::Lc { t_l } => out.push(Stage {
                    node,
                    kind: SegmentKind::Lc,
                    t: *t_l,
                    delta_tau: 0.0,
                }),
                SegmentSpec::Sc {
                    delta_tau,
                    t_s,
                    physical,
                } => {
                    if let Some(ph) = physical {
                        if ph.t_l_prepend != 0.0 {
                            out.push(Stage {
                                node,
                                kind: SegmentKind::Lc,
                                t: ph.t_l_prepend,
                                delta_tau: 0.0,
                            });
                        }
                    }
                    out.push(Stage {
                        node,
                        kind: SegmentKind::Sc,
                        t: *t_s,
                        delta_tau: *delta_tau,
                    });
                }
            }
        }
        out
    }

    /// Stages in signal order (source first).
    pub(crate) fn signal_stages(&self) -> Vec<Stage> {
        let mut s = self.physical_stages();
        if self.direction == Direction::RightToLeft {
            s.reverse();
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepStep {
    /// Index into `IspgGraph::nodes`.
    pub node: usize,
    pub kind: SegmentKind,
    pub phase_before: f64,
    pub contribution: f64,
    pub phase_after: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTrace {
    pub steps: Vec<SweepStep>,
}

fn sweep_stages(stages: &[Stage], f: f64, mut trace: Option<&mut Vec<SweepStep>>) -> f64 {
    let mut phi = 0.0_f64;
    let mut total = 0.0;
    for st in stages.iter().rev() {
        let before = phi;
        let contribution = match st.kind {
            SegmentKind::Lc => st.t * phi.cos(),
            SegmentKind::Sc => {
                let half = PI * f * st.delta_tau;
                let c = st.t * sinc(half) * (phi + half).cos();
                phi += TAU * f * st.delta_tau;
                c
            }
        };
        total += contribution;
        if let Some(t) = trace.as_deref_mut() {
            t.push(SweepStep {
                node: st.node,
                kind: st.kind,
                phase_before: before,
                contribution,
                phase_after: phi,
            });
        }
    }
    total
}

/// Skew at frequency `f` (> 0) for the graph's direction, with the trace of
/// every step in sweep order.
pub fn counter_sweep(graph: &IspgGraph, f: f64) -> (f64, SweepTrace) {
    let mut steps = Vec::with_capacity(graph.len() + 1);
    let s = sweep_stages(&graph.signal_stages(), f, Some(&mut steps));
    (s, SweepTrace { steps })
}

/// Double-sum form: each stage is weighted by the phase `Theta` accumulated
/// over all SC stages between it and the observation end.
pub fn total_skew_direct(graph: &IspgGraph, f: f64) -> f64 {
    let stages = graph.signal_stages();
    let theta: Vec<f64> = stages
        .iter()
        .map(|s| match s.kind {
            SegmentKind::Lc => 0.0,
            SegmentKind::Sc => TAU * f * s.delta_tau,
        })
        .collect();
    let n = stages.len();
    let mut lc_sum = 0.0;
    let mut sc_sum = 0.0;
    for i in 0..n {
        let mut big_theta = 0.0;
        for th in theta[i + 1..n].iter().rev() {
            big_theta += th;
        }
        match stages[i].kind {
            SegmentKind::Lc => lc_sum += stages[i].t * big_theta.cos(),
            SegmentKind::Sc => {
                let half = PI * f * stages[i].delta_tau;
                sc_sum += stages[i].t * sinc(half) * (big_theta + half).cos();
            }
        }
    }
    lc_sum + sc_sum
}

pub fn evaluate_profile(graph: &IspgGraph, grid: &FrequencyGrid) -> Result<SkewProfile> {
    let fwd = graph.signal_stages();
    let mut rev = fwd.clone();
    rev.reverse();
    let (s21, s12): (Vec<f64>, Vec<f64>) = grid
        .points()
        .par_iter()
        .map(|&f| (sweep_stages(&fwd, f, None), sweep_stages(&rev, f, None)))
        .unzip();
    SkewProfile::new(grid.clone(), s21, s12)
}

fn ps(v: f64) -> String {
    let x = v * 1e12;
    let r = (x * 1e6).round() / 1e6;
    format!("{r}")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz DOT document for the graph. Display labels are rounded; exact
/// values ride along in `ispg_*` attributes so the text parses back.
pub fn export_graph(graph: &IspgGraph) -> String {
    let mut out = String::new();
    out.push_str("digraph ispg {\n");
    out.push_str("  rankdir=LR;\n");
    let _ = writeln!(out, "  ispg_direction={};", quote(graph.direction.as_str()));
    out.push_str("  node [fontname=\"Helvetica\"];\n");
    for (i, seg) in graph.nodes.iter().enumerate() {
        let _ = write!(out, "  n{i} [");
        match seg {
            SegmentSpec::Lc { t_l } => {
                let label = format!("LC{}\\nt_l = {} ps", i + 1, ps(*t_l));
                let _ = write!(
                    out,
                    "shape=box, label=\"{label}\", ispg_index=\"{i}\", ispg_kind=\"LC\", ispg_t_l=\"{t_l:e}\""
                );
            }
            SegmentSpec::Sc {
                delta_tau,
                t_s,
                physical,
            } => {
                let label = format!(
                    "SC{}\\ndtau = {} ps\\nt_s = {} ps",
                    i + 1,
                    ps(*delta_tau),
                    ps(*t_s)
                );
                let _ = write!(
                    out,
                    "shape=circle, label=\"{label}\", ispg_index=\"{i}\", ispg_kind=\"SC\", \
                     ispg_delta_tau=\"{delta_tau:e}\", ispg_t_s=\"{t_s:e}\""
                );
                if let Some(ph) = physical {
                    let (l, c) = (ph.lc.l(), ph.lc.c());
                    let _ = write!(
                        out,
                        ", ispg_length=\"{:e}\", ispg_t_l_prepend=\"{:e}\", \
                         ispg_L=\"{:e} {:e} {:e} {:e}\", ispg_C=\"{:e} {:e} {:e} {:e}\"",
                        ph.length,
                        ph.t_l_prepend,
                        l[(0, 0)],
                        l[(0, 1)],
                        l[(1, 0)],
                        l[(1, 1)],
                        c[(0, 0)],
                        c[(0, 1)],
                        c[(1, 0)],
                        c[(1, 1)]
                    );
                }
            }
        }
        out.push_str("];\n");
    }
    for i in 1..graph.nodes.len() {
        let _ = writeln!(out, "  n{} -> n{i} [style=solid];", i - 1);
    }
    let n = graph.nodes.len();
    if n > 1 {
        let (from, to) = match graph.direction {
            Direction::LeftToRight => (n - 1, 0),
            Direction::RightToLeft => (0, n - 1),
        };
        let _ = writeln!(
            out,
            "  n{from} -> n{to} [style=dashed, color=red, constraint=false, \
             label=\"evaluation sweep\", ispg_role=\"sweep\"];"
        );
    }
    out.push_str("}\n");
    out
}

/// Splits `a=1, b="x, y"` into pairs, honoring quotes and escapes.
fn parse_attrs(body: &str, line: usize) -> Result<Vec<(String, String)>> {
    let syntax = |reason: &str| Error::Syntax {
        line,
        reason: reason.to_string(),
    };
    let mut out = Vec::new();
    let mut chars = body.chars().peekable();
    loop {
        while matches!(chars.peek(), Some(c) if c.is_whitespace() || *c == ',' || *c == ';') {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
            chars.next();
        }
        if chars.next() != Some('=') {
            return Err(syntax(&format!("attribute '{key}' has no value")));
        }
        while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
            chars.next();
        }
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut closed = false;
            while let Some(c) = chars.next() {
                match c {
                    '\\' => match chars.next() {
                        Some(e @ ('"' | '\\')) => value.push(e),
                        Some(e) => {
                            value.push('\\');
                            value.push(e);
                        }
                        None => break,
                    },
                    '"' => {
                        closed = true;
                        break;
                    }
                    c => value.push(c),
                }
            }
            if !closed {
                return Err(syntax("unterminated string"));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' || c == ';' || c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        out.push((key, value));
    }
    Ok(out)
}

fn attr<'a>(attrs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn attr_f64(attrs: &[(String, String)], key: &str, line: usize) -> Result<f64> {
    let v = attr(attrs, key).ok_or_else(|| Error::Syntax {
        line,
        reason: format!("missing attribute {key}"),
    })?;
    v.trim().parse::<f64>().map_err(|_| Error::Syntax {
        line,
        reason: format!("{key} is not a number: {v:?}"),
    })
}

fn attr_matrix(attrs: &[(String, String)], key: &str, line: usize) -> Result<[[f64; 2]; 2]> {
    let v = attr(attrs, key).ok_or_else(|| Error::Syntax {
        line,
        reason: format!("missing attribute {key}"),
    })?;
    let nums: Vec<f64> = v
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Syntax {
            line,
            reason: format!("{key} must hold four numbers"),
        })?;
    if nums.len() != 4 {
        return Err(Error::Syntax {
            line,
            reason: format!("{key} must hold four numbers"),
        });
    }
    Ok([[nums[0], nums[1]], [nums[2], nums[3]]])
}

/// Reads back a document written by [`export_graph`]. Nodes are identified by
/// their `ispg_*` attributes; layout attributes and edges are ignored.
pub fn parse_dot(text: &str) -> Result<IspgGraph> {
    let mut direction = Direction::LeftToRight;
    let mut nodes: Vec<(usize, SegmentSpec)> = Vec::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with("//") || s.starts_with('#') {
            continue;
        }
        if !seen_header {
            if !(s.starts_with("digraph") && s.ends_with('{')) {
                return Err(Error::Syntax {
                    line,
                    reason: "expected 'digraph <name> {'".into(),
                });
            }
            seen_header = true;
            continue;
        }
        if s == "}" {
            continue;
        }
        if let Some(rest) = s.strip_prefix("ispg_direction") {
            let attrs = parse_attrs(&format!("ispg_direction{rest}"), line)?;
            let v = attr(&attrs, "ispg_direction").unwrap_or_default();
            direction = Direction::parse(v).ok_or_else(|| Error::Syntax {
                line,
                reason: format!("unknown direction {v:?}"),
            })?;
            continue;
        }
        let Some(open) = s.find('[') else { continue };
        let head = s[..open].trim();
        if head.contains("->") || head == "node" || head == "edge" || head == "graph" {
            continue;
        }
        let close = s.rfind(']').ok_or_else(|| Error::Syntax {
            line,
            reason: "unterminated attribute list".into(),
        })?;
        if close < open {
            return Err(Error::Syntax {
                line,
                reason: "unterminated attribute list".into(),
            });
        }
        let attrs = parse_attrs(&s[open + 1..close], line)?;
        let Some(kind) = attr(&attrs, "ispg_kind") else {
            continue;
        };
        let index = match attr(&attrs, "ispg_index") {
            Some(v) => v.parse::<usize>().map_err(|_| Error::Syntax {
                line,
                reason: format!("bad ispg_index {v:?}"),
            })?,
            None => nodes.len(),
        };
        let seg = match kind {
            "LC" => SegmentSpec::lc(attr_f64(&attrs, "ispg_t_l", line)?),
            "SC" => {
                let delta_tau = attr_f64(&attrs, "ispg_delta_tau", line)?;
                let t_s = attr_f64(&attrs, "ispg_t_s", line)?;
                let physical = if attr(&attrs, "ispg_length").is_some() {
                    let lc = LcMatrices::from_rows(
                        attr_matrix(&attrs, "ispg_L", line)?,
                        attr_matrix(&attrs, "ispg_C", line)?,
                    )?;
                    Some(PhysicalLine {
                        lc,
                        length: attr_f64(&attrs, "ispg_length", line)?,
                        t_l_prepend: attr_f64(&attrs, "ispg_t_l_prepend", line)?,
                    })
                } else {
                    None
                };
                SegmentSpec::Sc {
                    delta_tau,
                    t_s,
                    physical,
                }
            }
            other => {
                return Err(Error::Syntax {
                    line,
                    reason: format!("unknown node kind {other:?}"),
                })
            }
        };
        nodes.push((index, seg));
    }
    if !seen_header {
        return Err(Error::Syntax {
            line: 1,
            reason: "empty document".into(),
        });
    }
    nodes.sort_by_key(|(i, _)| *i);
    if nodes.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(Error::Config("node indices are not 0..N without gaps".into()));
    }
    IspgGraph::with_direction(nodes.into_iter().map(|(_, s)| s).collect(), direction)
}

pub use crate::fit::{fit_parameters, FitResult, GraphTemplate, Param, TemplateNode};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_grid, Spacing};

    fn worked() -> IspgGraph {
        IspgGraph::new(vec![
            SegmentSpec::lc(0.5e-12),
            SegmentSpec::sc(33.4e-12, 3e-12),
            SegmentSpec::lc(1e-12),
            SegmentSpec::sc(66.2e-12, 6e-12),
        ])
        .unwrap()
    }

    #[test]
    fn single_lc() {
        let g = IspgGraph::new(vec![SegmentSpec::lc(1.5e-12)]).unwrap();
        for f in [1e6, 3e9, 90e9] {
            assert_eq!(counter_sweep(&g, f).0, 1.5e-12);
        }
        assert!(IspgGraph::new(vec![]).is_err());
    }

    #[test]
    fn worked_example_low_frequency() {
        let (s, trace) = counter_sweep(&worked(), 1e6);
        assert!((s - 10.5e-12).abs() < 1e-15);
        assert_eq!(trace.steps.len(), 4);
        assert_eq!(trace.steps[0].node, 3);
        assert_eq!(trace.steps[3].node, 0);
        for st in &trace.steps {
            if st.kind == SegmentKind::Lc {
                assert_eq!(st.phase_before, st.phase_after);
            }
        }
    }

    #[test]
    fn worked_example_four_terms() {
        let g = worked();
        for f in [1e9, 7.5e9, 23e9, 61e9] {
            let (a, b) = (TAU * f * 33.4e-12, TAU * f * 66.2e-12);
            let expected = 6e-12 * sinc(b / 2.0) * (b / 2.0).cos()
                + 1e-12 * b.cos()
                + 3e-12 * sinc(a / 2.0) * (b + a / 2.0).cos()
                + 0.5e-12 * (a + b).cos();
            assert!((counter_sweep(&g, f).0 - expected).abs() < 1e-24);
            assert!((total_skew_direct(&g, f) - expected).abs() < 1e-24);
        }
    }

    #[test]
    fn measured_baseline_formula() {
        let g = IspgGraph::new(vec![
            SegmentSpec::lc(1e-12),
            SegmentSpec::sc(88e-12, 5e-12),
            SegmentSpec::lc(0.8e-12),
        ])
        .unwrap();
        for f in [0.5e9, 5.68e9, 47e9] {
            let x = PI * f * 88e-12;
            let expected = 0.8e-12 + 5e-12 * sinc(x) * x.cos() + 1e-12 * (2.0 * x).cos();
            assert!((total_skew_direct(&g, f) - expected).abs() < 1e-24);
        }
    }

    #[test]
    fn direction_and_single_sc() {
        let g = worked();
        let grid = make_grid(10e6, 70e9, 300, Spacing::Linear).unwrap();
        let a = evaluate_profile(&g, &grid).unwrap();
        let b = evaluate_profile(&g.reversed(), &grid).unwrap();
        assert_eq!(a.swapped(), b);
        let one = IspgGraph::new(vec![SegmentSpec::sc(20e-12, 2e-12)]).unwrap();
        let p = evaluate_profile(&one, &grid).unwrap();
        assert_eq!(p.skew_21(), p.skew_12());
    }

    #[test]
    fn offset_versus_modulation() {
        let g = IspgGraph::new(vec![SegmentSpec::lc(3e-12), SegmentSpec::sc(66.2e-12, 6e-12)]).unwrap();
        let grid = make_grid(10e6, 70e9, 300, Spacing::Linear).unwrap();
        let p = evaluate_profile(&g, &grid).unwrap();
        let cf = crate::skew::closed_form_skew(3e-12, 66.2e-12, 6e-12, &grid).unwrap();
        for k in 0..grid.len() {
            assert!((p.skew_21()[k] - cf.skew_21()[k]).abs() < 1e-24);
            assert!((p.skew_12()[k] - cf.skew_12()[k]).abs() < 1e-24);
        }
    }

    #[test]
    fn dot_round_trip() {
        let g = worked().reversed();
        let text = export_graph(&g);
        assert_eq!(text.matches("shape=box").count(), 2);
        assert_eq!(text.matches("shape=circle").count(), 2);
        assert_eq!(text.matches("style=solid").count(), 3);
        assert_eq!(text.matches("style=dashed").count(), 1);
        assert_eq!(parse_dot(&text).unwrap(), g);

        let lone = IspgGraph::new(vec![SegmentSpec::lc(1e-12)]).unwrap();
        let t = export_graph(&lone);
        assert!(t.contains("shape=box") && !t.contains("circle") && !t.contains("dashed"));
        assert_eq!(parse_dot(&t).unwrap(), lone);
    }

    #[test]
    fn dot_errors_have_lines() {
        assert!(matches!(parse_dot(""), Err(Error::Syntax { .. })));
        let bad = "digraph x {\n  n0 [ispg_kind=\"XX\"];\n}\n";
        assert!(matches!(parse_dot(bad), Err(Error::Syntax { line: 2, .. })));
        let missing = "digraph x {\n  n0 [ispg_kind=\"SC\", ispg_t_s=\"1e-12\"];\n}\n";
        assert!(matches!(parse_dot(missing), Err(Error::Syntax { line: 2, .. })));
    }
}
