//! Touchstone v1.x reader and writer for 2- and 4-port S-parameter files.
//!
//! The reader never panics: any input yields a document or a structured
//! error with a 1-based line number.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Block, FourPortResponse, FrequencyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreqUnit {
    Hz,
    KHz,
    MHz,
    #[default]
    GHz,
}

impl FreqUnit {
    pub fn multiplier(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::KHz => 1e3,
            FreqUnit::MHz => 1e6,
            FreqUnit::GHz => 1e9,
        }
    }

    fn token(self) -> &'static str {
        match self {
            FreqUnit::Hz => "HZ",
            FreqUnit::KHz => "KHZ",
            FreqUnit::MHz => "MHZ",
            FreqUnit::GHz => "GHZ",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataFormat {
    #[default]
    Ri,
    Ma,
    Db,
}

impl DataFormat {
    fn token(self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RI" => Some(DataFormat::Ri),
            "MA" => Some(DataFormat::Ma),
            "DB" => Some(DataFormat::Db),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionLine {
    pub freq_unit: FreqUnit,
    pub format: DataFormat,
    pub reference_ohms: f64,
}

impl Default for OptionLine {
    fn default() -> Self {
        Self {
            freq_unit: FreqUnit::GHz,
            format: DataFormat::Ma,
            reference_ohms: 50.0,
        }
    }
}

/// Order of matrix entries within a 3+ port record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixOrder {
    #[default]
    RowMajor,
    ColumnMajor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchstoneDocument {
    pub option_line: OptionLine,
    pub n_ports: usize,
    /// Hz.
    pub frequencies: Vec<f64>,
    pub data: Vec<DMatrix<Complex64>>,
    pub comments: Vec<String>,
}

fn syntax(line: usize, reason: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        reason: reason.into(),
    }
}

fn parse_option_line(body: &str, line: usize) -> Result<OptionLine> {
    let mut opt = OptionLine::default();
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opt.freq_unit = FreqUnit::Hz,
            "KHZ" => opt.freq_unit = FreqUnit::KHz,
            "MHZ" => opt.freq_unit = FreqUnit::MHz,
            "GHZ" => opt.freq_unit = FreqUnit::GHz,
            "S" => {}
            p @ ("Y" | "Z" | "H" | "G") => return Err(Error::UnsupportedParameter(p.to_string())),
            "RI" => opt.format = DataFormat::Ri,
            "MA" => opt.format = DataFormat::Ma,
            "DB" => opt.format = DataFormat::Db,
            "R" => {
                let v = tokens
                    .next()
                    .ok_or_else(|| syntax(line, "reference resistance missing after R"))?;
                let r: f64 = v
                    .parse()
                    .map_err(|_| syntax(line, format!("bad reference resistance {v:?}")))?;
                if !(r.is_finite() && r > 0.0) {
                    return Err(syntax(line, format!("reference resistance must be positive, got {v}")));
                }
                opt.reference_ohms = r;
            }
            other => return Err(syntax(line, format!("unknown option {other:?}"))),
        }
    }
    Ok(opt)
}

fn to_complex(format: DataFormat, a: f64, b: f64) -> Complex64 {
    match format {
        DataFormat::Ri => Complex64::new(a, b),
        DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
        DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
    }
}

/// Reads a v1.x file with `n_ports` ports (2 or 4). 2-port records use the
/// fixed `N11 N21 N12 N22` order; larger records follow `order`.
pub fn read_touchstone(text: &str, n_ports: usize) -> Result<TouchstoneDocument> {
    read_touchstone_with(text, n_ports, MatrixOrder::RowMajor)
}

pub fn read_touchstone_with(text: &str, n_ports: usize, order: MatrixOrder) -> Result<TouchstoneDocument> {
    if n_ports != 2 && n_ports != 4 {
        return Err(Error::Config(format!("only 2- and 4-port files are supported, got {n_ports}")));
    }
    let record_len = 1 + 2 * n_ports * n_ports;
    let mut option_line: Option<OptionLine> = None;
    let mut comments = Vec::new();
    let mut pending: Vec<(f64, usize)> = Vec::with_capacity(record_len);
    let mut records: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let (content, comment) = match raw.find('!') {
            Some(i) => (&raw[..i], Some(&raw[i + 1..])),
            None => (raw, None),
        };
        if let Some(c) = comment {
            comments.push(c.trim_end().to_string());
        }
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(body) = content.strip_prefix('#') {
            if option_line.is_none() {
                option_line = Some(parse_option_line(body, line)?);
            }
            continue;
        }
        if content.starts_with('[') {
            return Err(syntax(line, "Touchstone 2.0 keywords are not supported"));
        }
        for tok in content.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| syntax(line, format!("not a number: {tok:?}")))?;
            if !v.is_finite() {
                return Err(syntax(line, format!("non-finite value {tok:?}")));
            }
            pending.push((v, line));
            if pending.len() == record_len {
                let first_line = pending[0].1;
                records.push((pending.iter().map(|p| p.0).collect(), first_line));
                pending.clear();
            }
        }
    }
    if !pending.is_empty() {
        return Err(syntax(
            last_line,
            format!(
                "incomplete record: {} of {record_len} values",
                pending.len()
            ),
        ));
    }
    if records.is_empty() {
        return Err(syntax(last_line.max(1), "no network data"));
    }
    let option_line = option_line.unwrap_or_default();
    let mult = option_line.freq_unit.multiplier();
    let mut frequencies = Vec::with_capacity(records.len());
    let mut data = Vec::with_capacity(records.len());
    for (values, line) in records {
        let f = values[0] * mult;
        if !f.is_finite() {
            return Err(syntax(line, "frequency overflows"));
        }
        if let Some(&prev) = frequencies.last() {
            if f <= prev {
                return Err(Error::NonMonotoneFrequency { line });
            }
        }
        let mut m = DMatrix::<Complex64>::zeros(n_ports, n_ports);
        for k in 0..n_ports * n_ports {
            let z = to_complex(option_line.format, values[1 + 2 * k], values[2 + 2 * k]);
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(syntax(line, "matrix entry overflows"));
            }
            let column_major = n_ports == 2 || order == MatrixOrder::ColumnMajor;
            let (i, j) = if column_major {
                (k % n_ports, k / n_ports)
            } else {
                (k / n_ports, k % n_ports)
            };
            m[(i, j)] = z;
        }
        frequencies.push(f);
        data.push(m);
    }
    Ok(TouchstoneDocument {
        option_line,
        n_ports,
        frequencies,
        data,
        comments,
    })
}

fn write_pair(out: &mut String, format: DataFormat, z: Complex64) {
    let (a, b) = match format {
        DataFormat::Ri => (z.re, z.im),
        DataFormat::Ma => (z.norm(), z.arg().to_degrees()),
        DataFormat::Db => {
            let mag = z.norm();
            // 10^(-1e4/20) underflows to exactly zero on read
            let db = if mag > 0.0 { 20.0 * mag.log10() } else { -1e4 };
            (db, z.arg().to_degrees())
        }
    };
    let _ = write!(out, " {a:e} {b:e}");
}

impl TouchstoneDocument {
    /// Serializes with frequencies in the document's unit. Four pairs per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "!{c}");
        }
        let o = &self.option_line;
        let _ = writeln!(
            out,
            "# {} S {} R {}",
            o.freq_unit.token(),
            o.format.token(),
            o.reference_ohms
        );
        let n = self.n_ports;
        let mult = o.freq_unit.multiplier();
        for (f, m) in self.frequencies.iter().zip(&self.data) {
            let _ = write!(out, "{:e}", f / mult);
            if n == 2 {
                for (i, j) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    write_pair(&mut out, o.format, m[(i, j)]);
                }
                out.push('\n');
            } else {
                for i in 0..n {
                    if i > 0 {
                        out.push(' ');
                    }
                    for j in 0..n {
                        if j > 0 && j % 4 == 0 {
                            out.push_str("\n ");
                        }
                        write_pair(&mut out, o.format, m[(i, j)]);
                    }
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Assignment of file ports to the library's ports.
///
/// `file_port(k)` is the file port carrying library port `k`, where library
/// ports are 1 = P left, 2 = P right, 3 = N left, 4 = N right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortMap {
    file_ports: [usize; 4],
}

impl Default for PortMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl PortMap {
    pub fn identity() -> Self {
        Self {
            file_ports: [1, 2, 3, 4],
        }
    }

    pub fn new(file_ports: [usize; 4]) -> Result<Self> {
        let mut seen = [false; 4];
        for &p in &file_ports {
            if !(1..=4).contains(&p) || seen[p - 1] {
                return Err(Error::BadPortMap(format!(
                    "{file_ports:?} is not a permutation of 1..4"
                )));
            }
            seen[p - 1] = true;
        }
        Ok(Self { file_ports })
    }

    /// Parses `"a,b,c,d"`: the file ports for library ports 1, 2, 3, 4.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::BadPortMap(format!("expected four comma-separated ports, got {s:?}")));
        }
        let mut ports = [0usize; 4];
        for (slot, p) in ports.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::BadPortMap(format!("not a port number: {p:?}")))?;
        }
        Self::new(ports)
    }

    pub fn file_port(&self, library_port: usize) -> usize {
        self.file_ports[library_port - 1]
    }

    /// Exchanges P and N at both ends.
    pub fn swapped_pn(&self) -> Self {
        let [a, b, c, d] = self.file_ports;
        Self {
            file_ports: [c, d, a, b],
        }
    }
}

/// Per-frequency energy in the entries a matched four-port model drops.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscardReport {
    /// Sum of |S|^2 over reflections and near-end coupling, per frequency.
    pub per_frequency: Vec<f64>,
    pub max: f64,
}

/// Extracts the transmission blocks of a 4-port document.
pub fn to_four_port(doc: &TouchstoneDocument, map: &PortMap) -> Result<(FourPortResponse, DiscardReport)> {
    if doc.n_ports != 4 {
        return Err(Error::BadPortMap(format!(
            "a four-port document is required, got {} ports",
            doc.n_ports
        )));
    }
    let grid = FrequencyGrid::new(doc.frequencies.clone())?;
    let idx = |lib: usize| map.file_port(lib) - 1;
    let mut forward = Vec::with_capacity(doc.data.len());
    let mut reverse = Vec::with_capacity(doc.data.len());
    let mut discarded = Vec::with_capacity(doc.data.len());
    for m in &doc.data {
        let s = |i: usize, j: usize| m[(idx(i), idx(j))];
        forward.push(Block::new(s(2, 1), s(2, 3), s(4, 1), s(4, 3)));
        reverse.push(Block::new(s(1, 2), s(1, 4), s(3, 2), s(3, 4)));
        let dropped = [(1, 1), (2, 2), (3, 3), (4, 4), (3, 1), (1, 3), (2, 4), (4, 2)]
            .iter()
            .map(|&(i, j)| s(i, j).norm_sqr())
            .sum::<f64>();
        discarded.push(dropped);
    }
    let max = discarded.iter().copied().fold(0.0, f64::max);
    log::info!(
        "discarded reflection and near-end energy: max {max:.3e} over {} points",
        discarded.len()
    );
    let resp = FourPortResponse::new(grid, forward, reverse)?;
    Ok((
        resp,
        DiscardReport {
            per_frequency: discarded,
            max,
        },
    ))
}

/// Four-port document for a matched response; unused entries are zero.
pub fn four_port_document(resp: &FourPortResponse, format: DataFormat) -> TouchstoneDocument {
    let mut data = Vec::with_capacity(resp.len());
    for k in 0..resp.len() {
        let mut m = DMatrix::<Complex64>::zeros(4, 4);
        m[(1, 0)] = resp.s21(k);
        m[(1, 2)] = resp.s23(k);
        m[(3, 0)] = resp.s41(k);
        m[(3, 2)] = resp.s43(k);
        m[(0, 1)] = resp.s12(k);
        m[(0, 3)] = resp.s14(k);
        m[(2, 1)] = resp.s32(k);
        m[(2, 3)] = resp.s34(k);
        data.push(m);
    }
    TouchstoneDocument {
        option_line: OptionLine {
            freq_unit: FreqUnit::Hz,
            format,
            reference_ohms: 50.0,
        },
        n_ports: 4,
        frequencies: resp.grid().points().to_vec(),
        data,
        comments: vec![
            " matched four-port: 1 = P left, 2 = P right, 3 = N left, 4 = N right".into(),
            " reflections and near-end coupling are zero".into(),
        ],
    }
}

pub fn write_touchstone(resp: &FourPortResponse, format: DataFormat) -> String {
    four_port_document(resp, format).to_text()
}
