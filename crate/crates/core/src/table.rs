//! Plot-ready result tables as CSV or a JSON envelope.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::model::SkewProfile;
use crate::skew::DeltaTauProfile;

/// Column units: GHz and ps for people, Hz and s with `Si`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Units {
    #[default]
    Human,
    Si,
}

impl Units {
    fn freq(self) -> (&'static str, f64) {
        match self {
            Units::Human => ("ghz", 1e-9),
            Units::Si => ("hz", 1.0),
        }
    }

    fn time(self) -> (&'static str, f64) {
        match self {
            Units::Human => ("ps", 1e12),
            Units::Si => ("s", 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv: {e}")))
    }

    /// `{"meta": .., "columns": [..], "rows": [[..], ..]}`.
    pub fn to_json(&self, meta: Map<String, Value>) -> String {
        let doc = json!({
            "meta": Value::Object(meta),
            "columns": self.columns,
            "rows": self.rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("finite table values serialize");
        s.push('\n');
        s
    }

    /// Parses CSV written by [`Table::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let columns = r
            .headers()
            .map_err(|e| Error::Config(format!("csv: {e}")))?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::Config(format!("csv: {e}")))?;
            rows.push(
                rec.iter()
                    .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("csv: {e}"))))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self { columns, rows })
    }
}

pub fn skew_table(profile: &SkewProfile, units: Units) -> Table {
    let (fu, fs) = units.freq();
    let (tu, ts) = units.time();
    Table {
        columns: vec![format!("freq_{fu}"), format!("skew21_{tu}"), format!("skew12_{tu}")],
        rows: profile
            .grid()
            .points()
            .iter()
            .zip(profile.skew_21().iter().zip(profile.skew_12()))
            .map(|(f, (a, b))| vec![f * fs, a * ts, b * ts])
            .collect(),
    }
}

pub fn delta_tau_table(dt: &DeltaTauProfile, units: Units) -> Table {
    let (fu, fs) = units.freq();
    let (tu, ts) = units.time();
    Table {
        columns: vec![
            format!("freq_{fu}"),
            format!("delta_tau_{tu}"),
            format!("delta_tau_signed_{tu}"),
        ],
        rows: dt
            .grid
            .points()
            .iter()
            .zip(dt.magnitude.iter().zip(&dt.signed))
            .map(|(f, (m, s))| vec![f * fs, m * ts, s * ts])
            .collect(),
    }
}

/// Resonance and zero-skew frequencies by order.
pub fn resonance_table(resonances: &[f64], zeros: &[f64], units: Units) -> Table {
    let (fu, fs) = units.freq();
    Table {
        columns: vec!["order".into(), format!("resonance_{fu}"), format!("skew_zero_{fu}")],
        rows: resonances
            .iter()
            .zip(zeros)
            .enumerate()
            .map(|(n, (r, z))| vec![(n + 1) as f64, r * fs, z * fs])
            .collect(),
    }
}

/// Model and reference profiles side by side.
pub fn comparison_table(model: &SkewProfile, reference: &SkewProfile, units: Units) -> Table {
    let (fu, fs) = units.freq();
    let (tu, ts) = units.time();
    let n = model.grid().len();
    Table {
        columns: vec![
            format!("freq_{fu}"),
            format!("ispg21_{tu}"),
            format!("ispg12_{tu}"),
            format!("oracle21_{tu}"),
            format!("oracle12_{tu}"),
        ],
        rows: (0..n)
            .map(|k| {
                vec![
                    model.grid().points()[k] * fs,
                    model.skew_21()[k] * ts,
                    model.skew_12()[k] * ts,
                    reference.skew_21()[k] * ts,
                    reference.skew_12()[k] * ts,
                ]
            })
            .collect(),
    }
}
