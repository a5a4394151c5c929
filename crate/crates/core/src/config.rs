//! Channel description files.
//!
//! ```toml
//! schema = 1
//! direction = "left_to_right"      # optional
//!
//! [grid]
//! start = "10 MHz"
//! stop = "70 GHz"
//! points = 7000
//! spacing = "linear"               # or "log"
//!
//! [[segment]]
//! kind = "LC"
//! t_l = "0.5 ps"
//!
//! [[segment]]
//! kind = "SC"
//! delta_tau = "33.4 ps"
//! t_s = "3 ps"
//!
//! [[segment]]                      # physical line; delays are derived
//! kind = "SC"
//! length = "1 m"
//! L = [[4e-7, 0.0], [0.0, 4e-7]]   # H/m
//! C = [[6e-11, -1e-11], [-1e-11, 6e-11]]  # F/m
//!
//! [compare]
//! tolerance = 0.05                 # RMS error / reference peak-to-peak
//! ```
//!
//! Quantities are plain numbers in SI units or strings with a unit suffix.
//! `"?"` marks a parameter to be fitted. Unknown keys are rejected. A
//! Graphviz document written by the graph exporter is accepted as well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{GraphTemplate, Param, TemplateNode};
use crate::ispg::{export_graph, parse_dot, Direction, IspgGraph};
use crate::mode_solver::{derive_segment, LcMatrices};
use crate::model::{make_grid, FrequencyGrid, PhysicalLine, SegmentSpec, Spacing};

pub const SCHEMA_VERSION: u32 = 1;

/// A number in SI units, a string with a unit, or `"?"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Time,
    Frequency,
    Length,
}

fn unit_exponent(unit: &str, dim: Dim) -> Option<i32> {
    let u = unit.trim();
    match dim {
        Dim::Time => match u {
            "s" => Some(0),
            "ms" => Some(-3),
            "us" | "µs" => Some(-6),
            "ns" => Some(-9),
            "ps" => Some(-12),
            "fs" => Some(-15),
            _ => None,
        },
        Dim::Frequency => match u.to_ascii_lowercase().as_str() {
            "hz" => Some(0),
            "khz" => Some(3),
            "mhz" => Some(6),
            "ghz" => Some(9),
            "thz" => Some(12),
            _ => None,
        },
        Dim::Length => match u {
            "m" => Some(0),
            "cm" => Some(-2),
            "mm" => Some(-3),
            "um" | "µm" => Some(-6),
            _ => None,
        },
    }
}

/// Splits `"33.4ps"` / `"33.4 ps"` into number text and unit text.
fn split_number(s: &str) -> (&str, &str) {
    let s = s.trim();
    let mut end = 0;
    let bytes = s.as_bytes();
    while end < bytes.len() {
        let c = bytes[end];
        let exp_sign = end > 0 && (bytes[end - 1] == b'e' || bytes[end - 1] == b'E');
        let exp_mark = (c == b'e' || c == b'E')
            && end + 1 < bytes.len()
            && (bytes[end + 1].is_ascii_digit() || bytes[end + 1] == b'-' || bytes[end + 1] == b'+');
        if c.is_ascii_digit() || c == b'.' || exp_mark || ((c == b'-' || c == b'+') && (end == 0 || exp_sign)) {
            end += 1;
        } else {
            break;
        }
    }
    (&s[..end], &s[end..])
}

impl Quantity {
    fn resolve(&self, dim: Dim, field: &str) -> Result<Param> {
        match self {
            Quantity::Number(v) => {
                if v.is_finite() {
                    Ok(Param::Known(*v))
                } else {
                    Err(Error::Config(format!("{field}: value must be finite")))
                }
            }
            Quantity::Text(t) if t.trim() == "?" => Ok(Param::Unknown),
            Quantity::Text(t) => {
                let (num, unit) = split_number(t);
                let bad = || Error::Config(format!("{field}: cannot read quantity {t:?}"));
                if num.is_empty() {
                    return Err(bad());
                }
                let exp = if unit.trim().is_empty() {
                    0
                } else {
                    unit_exponent(unit, dim).ok_or_else(|| {
                        Error::Config(format!("{field}: unit {:?} does not fit this field", unit.trim()))
                    })?
                };
                // rescale in decimal so "33.4 ps" reads exactly as 33.4e-12
                let (mantissa, own_exp) = match num.find(['e', 'E']) {
                    Some(i) => (&num[..i], num[i + 1..].parse::<i32>().map_err(|_| bad())?),
                    None => (num, 0),
                };
                let v: f64 = format!("{mantissa}e{}", own_exp + exp).parse().map_err(|_| bad())?;
                if !v.is_finite() {
                    return Err(bad());
                }
                Ok(Param::Known(v))
            }
        }
    }

    fn known(&self, dim: Dim, field: &str) -> Result<f64> {
        match self.resolve(dim, field)? {
            Param::Known(v) => Ok(v),
            Param::Unknown => Err(Error::Config(format!(
                "{field}: unknown values are only allowed in fit templates"
            ))),
        }
    }

    /// Known time value in seconds.
    pub fn seconds(&self, field: &str) -> Result<f64> {
        self.known(Dim::Time, field)
    }

    /// Shortest exact decimal form, e.g. `"3.34e-11 s"`.
    pub fn seconds_text(v: f64) -> Self {
        Quantity::Text(format!("{v:e} s"))
    }

    fn from_param(p: Param) -> Self {
        match p {
            Param::Known(v) => Quantity::seconds_text(v),
            Param::Unknown => Quantity::Text("?".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: Quantity,
    pub stop: Quantity,
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<String>,
}

impl GridSpec {
    pub fn build(&self) -> Result<FrequencyGrid> {
        let spacing = match self.spacing.as_deref() {
            None | Some("linear") => Spacing::Linear,
            Some("log") => Spacing::Log,
            Some(other) => return Err(Error::Config(format!("grid.spacing: unknown spacing {other:?}"))),
        };
        make_grid(
            self.start.known(Dim::Frequency, "grid.start")?,
            self.stop.known(Dim::Frequency, "grid.stop")?,
            self.points,
            spacing,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_l: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_tau: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_s: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<Quantity>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub l: Option<[[f64; 2]; 2]>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_l_prepend: Option<Quantity>,
}

enum Resolved {
    Node(TemplateNode),
    Physical(SegmentSpec),
}

impl SegmentEntry {
    fn resolve(&self, i: usize) -> Result<Resolved> {
        let name = |f: &str| format!("segment[{i}].{f}");
        let forbid = |present: bool, f: &str, kind: &str| -> Result<()> {
            if present {
                Err(Error::Config(format!("{} is not allowed on {kind} segments", name(f))))
            } else {
                Ok(())
            }
        };
        let need = |q: &Option<Quantity>, f: &str| -> Result<Quantity> {
            q.clone()
                .ok_or_else(|| Error::Config(format!("{} is required", name(f))))
        };
        match self.kind.as_str() {
            "LC" | "lc" => {
                forbid(self.delta_tau.is_some(), "delta_tau", "LC")?;
                forbid(self.t_s.is_some(), "t_s", "LC")?;
                forbid(self.length.is_some(), "length", "LC")?;
                forbid(self.l.is_some(), "L", "LC")?;
                forbid(self.c.is_some(), "C", "LC")?;
                forbid(self.t_l_prepend.is_some(), "t_l_prepend", "LC")?;
                let t_l = need(&self.t_l, "t_l")?.resolve(Dim::Time, &name("t_l"))?;
                Ok(Resolved::Node(TemplateNode::Lc { t_l }))
            }
            "SC" | "sc" => {
                forbid(self.t_l.is_some(), "t_l", "SC")?;
                let physical = self.length.is_some() || self.l.is_some() || self.c.is_some();
                if !physical {
                    forbid(self.t_l_prepend.is_some(), "t_l_prepend", "declared SC")?;
                    let delta_tau = need(&self.delta_tau, "delta_tau")?.resolve(Dim::Time, &name("delta_tau"))?;
                    let t_s = need(&self.t_s, "t_s")?.resolve(Dim::Time, &name("t_s"))?;
                    return Ok(Resolved::Node(TemplateNode::Sc { delta_tau, t_s }));
                }
                let length = need(&self.length, "length")?.known(Dim::Length, &name("length"))?;
                let l = self.l.ok_or_else(|| Error::Config(format!("{} is required", name("L"))))?;
                let c = self.c.ok_or_else(|| Error::Config(format!("{} is required", name("C"))))?;
                let lc = LcMatrices::from_rows(l, c)?;
                let t_l_prepend = match &self.t_l_prepend {
                    Some(q) => q.known(Dim::Time, &name("t_l_prepend"))?,
                    None => 0.0,
                };
                let derived = derive_segment(&lc, length, None)?;
                let delta_tau = match &self.delta_tau {
                    Some(q) => q.known(Dim::Time, &name("delta_tau"))?,
                    None => derived.delta_tau(),
                };
                let t_s = match &self.t_s {
                    Some(q) => q.known(Dim::Time, &name("t_s"))?,
                    None => derived.t_s(),
                };
                Ok(Resolved::Physical(SegmentSpec::Sc {
                    delta_tau,
                    t_s,
                    physical: Some(PhysicalLine {
                        lc,
                        length,
                        t_l_prepend,
                    }),
                }))
            }
            other => Err(Error::Config(format!(
                "{}: unknown kind {other:?}, expected \"LC\" or \"SC\"",
                name("kind")
            ))),
        }
    }

    pub fn from_segment(s: &SegmentSpec) -> Self {
        match s {
            SegmentSpec::Lc { t_l } => Self {
                kind: "LC".into(),
                t_l: Some(Quantity::seconds_text(*t_l)),
                ..Default::default()
            },
            SegmentSpec::Sc {
                delta_tau,
                t_s,
                physical,
            } => {
                let mut e = Self {
                    kind: "SC".into(),
                    delta_tau: Some(Quantity::seconds_text(*delta_tau)),
                    t_s: Some(Quantity::seconds_text(*t_s)),
                    ..Default::default()
                };
                if let Some(ph) = physical {
                    let rows = |m: &nalgebra::Matrix2<f64>| [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]];
                    e.length = Some(Quantity::Text(format!("{:e} m", ph.length)));
                    e.l = Some(rows(ph.lc.l()));
                    e.c = Some(rows(ph.lc.c()));
                    e.t_l_prepend = Some(Quantity::seconds_text(ph.t_l_prepend));
                }
                e
            }
        }
    }

    fn from_template(n: &TemplateNode) -> Self {
        match *n {
            TemplateNode::Lc { t_l } => Self {
                kind: "LC".into(),
                t_l: Some(Quantity::from_param(t_l)),
                ..Default::default()
            },
            TemplateNode::Sc { delta_tau, t_s } => Self {
                kind: "SC".into(),
                delta_tau: Some(Quantity::from_param(delta_tau)),
                t_s: Some(Quantity::from_param(t_s)),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
    #[serde(default)]
    pub segment: Vec<SegmentEntry>,
}

impl ChannelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema
            )));
        }
        if cfg.segment.is_empty() {
            return Err(Error::Config("no segments listed".into()));
        }
        cfg.direction()?;
        Ok(cfg)
    }

    /// TOML or, when the text starts with `digraph`, an exported graph.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with("digraph") {
            Ok(Self::from_graph(&parse_dot(text)?, None))
        } else {
            Self::from_toml(text)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("channel config serializes")
    }

    pub fn from_graph(graph: &IspgGraph, grid: Option<GridSpec>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            direction: match graph.direction() {
                Direction::LeftToRight => None,
                d => Some(d.as_str().to_string()),
            },
            grid,
            compare: None,
            segment: graph.nodes().iter().map(SegmentEntry::from_segment).collect(),
        }
    }

    pub fn from_template(t: &GraphTemplate) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            direction: match t.direction {
                Direction::LeftToRight => None,
                d => Some(d.as_str().to_string()),
            },
            grid: None,
            compare: None,
            segment: t.nodes.iter().map(SegmentEntry::from_template).collect(),
        }
    }

    pub fn direction(&self) -> Result<Direction> {
        match self.direction.as_deref() {
            None => Ok(Direction::LeftToRight),
            Some(s) => Direction::parse(s).ok_or_else(|| {
                Error::Config(format!(
                    "direction: expected \"left_to_right\" or \"right_to_left\", got {s:?}"
                ))
            }),
        }
    }

    pub fn grid(&self) -> Result<Option<FrequencyGrid>> {
        self.grid.as_ref().map(GridSpec::build).transpose()
    }

    pub fn to_graph(&self) -> Result<IspgGraph> {
        let mut nodes = Vec::with_capacity(self.segment.len());
        for (i, e) in self.segment.iter().enumerate() {
            nodes.push(match e.resolve(i)? {
                Resolved::Physical(s) => s,
                Resolved::Node(TemplateNode::Lc { t_l }) => SegmentSpec::lc(known(t_l, i)?),
                Resolved::Node(TemplateNode::Sc { delta_tau, t_s }) => {
                    SegmentSpec::sc(known(delta_tau, i)?, known(t_s, i)?)
                }
            });
        }
        IspgGraph::with_direction(nodes, self.direction()?)
    }

    /// Template for fitting. A physical segment becomes known values, with
    /// its prepended delay as a separate LC node.
    pub fn to_template(&self) -> Result<GraphTemplate> {
        let mut nodes = Vec::with_capacity(self.segment.len());
        for (i, e) in self.segment.iter().enumerate() {
            match e.resolve(i)? {
                Resolved::Node(n) => nodes.push(n),
                Resolved::Physical(s) => {
                    if s.t_l() != 0.0 {
                        nodes.push(TemplateNode::Lc {
                            t_l: Param::Known(s.t_l()),
                        });
                    }
                    nodes.push(TemplateNode::Sc {
                        delta_tau: Param::Known(s.delta_tau()),
                        t_s: Param::Known(s.t_s()),
                    });
                }
            }
        }
        Ok(GraphTemplate {
            nodes,
            direction: self.direction()?,
        })
    }

    /// Graphviz rendering of the configured channel.
    pub fn to_dot(&self) -> Result<String> {
        Ok(export_graph(&self.to_graph()?))
    }
}

fn known(p: Param, i: usize) -> Result<f64> {
    match p {
        Param::Known(v) => Ok(v),
        Param::Unknown => Err(Error::Config(format!(
            "segment[{i}]: unknown values are only allowed in fit templates"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: &str = r#"
schema = 1

[grid]
start = "10 MHz"
stop = "70 GHz"
points = 7000

[[segment]]
kind = "LC"
t_l = "0.5 ps"

[[segment]]
kind = "SC"
delta_tau = "33.4 ps"
t_s = "3ps"

[[segment]]
kind = "LC"
t_l = 1e-12

[[segment]]
kind = "SC"
delta_tau = "66.2 ps"
t_s = "6 ps"
"#;

    #[test]
    fn worked_config() {
        let cfg = ChannelConfig::parse(WORKED).unwrap();
        let g = cfg.to_graph().unwrap();
        assert_eq!(g.nodes()[1], SegmentSpec::sc(33.4e-12, 3e-12));
        assert_eq!(g.nodes()[3], SegmentSpec::sc(66.2e-12, 6e-12));
        let grid = cfg.grid().unwrap().unwrap();
        assert_eq!((grid.first(), grid.last(), grid.len()), (10e6, 70e9, 7000));
    }

    #[test]
    fn strictness() {
        let typo = WORKED.replace("t_s = \"3ps\"", "ts = \"3ps\"");
        assert!(matches!(ChannelConfig::parse(&typo), Err(Error::Config(_))));
        let kind = WORKED.replace("kind = \"LC\"\nt_l = \"0.5 ps\"", "kind = \"XX\"\nt_l = \"0.5 ps\"");
        assert!(ChannelConfig::parse(&kind).unwrap().to_graph().is_err());
        let unit = WORKED.replace("\"0.5 ps\"", "\"0.5 GHz\"");
        assert!(ChannelConfig::parse(&unit).unwrap().to_graph().is_err());
        assert!(ChannelConfig::parse("schema = 1\n").is_err());
        assert!(ChannelConfig::parse("schema = 2\n[[segment]]\nkind=\"LC\"\nt_l=0.0\n").is_err());
    }

    #[test]
    fn template_unknowns() {
        let text = "schema = 1\n[[segment]]\nkind = \"LC\"\nt_l = \"?\"\n[[segment]]\nkind = \"SC\"\ndelta_tau = \"?\"\nt_s = \"?\"\n";
        let cfg = ChannelConfig::parse(text).unwrap();
        assert_eq!(cfg.to_template().unwrap().unknown_count(), 3);
        assert!(cfg.to_graph().is_err());
        let back = ChannelConfig::from_template(&cfg.to_template().unwrap());
        assert_eq!(back.to_template().unwrap(), cfg.to_template().unwrap());
    }

    #[test]
    fn physical_segment_round_trip() {
        let lc = LcMatrices::with_mode_targets(400e-9, 60e-12, 66.2e-12, 0.05).unwrap();
        let mut seg = derive_segment(&lc, 0.5, None).unwrap();
        if let SegmentSpec::Sc { physical: Some(ph), .. } = &mut seg {
            ph.t_l_prepend = 1e-12;
        }
        let g = IspgGraph::new(vec![seg, SegmentSpec::lc(-2e-13)]).unwrap();
        let text = ChannelConfig::from_graph(&g, None).to_toml();
        assert_eq!(ChannelConfig::parse(&text).unwrap().to_graph().unwrap(), g);
        let dot = export_graph(&g);
        assert_eq!(ChannelConfig::parse(&dot).unwrap().to_graph().unwrap(), g);
    }

    #[test]
    fn mismatched_physical_values_rejected() {
        let lc = LcMatrices::with_mode_targets(400e-9, 60e-12, 66.2e-12, 0.05).unwrap();
        let seg = derive_segment(&lc, 1.0, None).unwrap();
        let mut e = SegmentEntry::from_segment(&seg);
        e.delta_tau = Some(Quantity::Number(seg.delta_tau() + 1e-12));
        let cfg = ChannelConfig {
            schema: 1,
            direction: None,
            grid: None,
            compare: None,
            segment: vec![e],
        };
        assert!(matches!(cfg.to_graph(), Err(Error::InconsistentPhysicalParams(_))));
    }

    #[test]
    fn quantities() {
        let q = |s: &str| Quantity::Text(s.into()).resolve(Dim::Time, "x").unwrap();
        assert_eq!(q("33.4 ps"), Param::Known(33.4e-12));
        assert_eq!(q("3.34e1ps"), Param::Known(33.4e-12));
        assert_eq!(q("-0.8 ps"), Param::Known(-0.8e-12));
        assert_eq!(q("2e-12"), Param::Known(2e-12));
        assert_eq!(q(" ? "), Param::Unknown);
        let f = Quantity::Text("100 GHz".into()).resolve(Dim::Frequency, "f").unwrap();
        assert_eq!(f, Param::Known(100e9));
        assert!(Quantity::Text("ps".into()).resolve(Dim::Time, "x").is_err());
        assert!(Quantity::Text("1 parsec".into()).resolve(Dim::Time, "x").is_err());
    }
}
