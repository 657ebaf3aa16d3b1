//! JSON and CSV encodings of run and sweep results.
//!
//! A run report in CSV is a two-column `key,value` table: keys are dotted
//! paths into the JSON form and values are JSON scalars, so both encodings
//! decode to the same in-memory report.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analytics::{AnalyticReport, SweepRow};
use crate::channel::SchmidtVector;
use crate::correction::Regime;
use crate::error::{Error, Result};
use crate::montecarlo::{EmpiricalReport, Mode, Protocol, ProtocolTrace};
use crate::qutrit::QutritState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Validation(format!("unknown format '{s}', expected json or csv"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub mode: Mode,
    pub schmidt: SchmidtVector,
    pub state: QutritState,
    /// Analytic success probability of the simulated protocol. Equals
    /// `analytic.p_total` in qutrit mode.
    pub p_success: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub analytic: AnalyticReport,
    pub empirical: EmpiricalReport,
    /// The first few trials of the run, in trial order.
    pub trace_sample: Vec<ProtocolTrace>,
    pub meta: RunMeta,
}

impl RunReport {
    pub fn build(
        protocol: &Protocol,
        empirical: EmpiricalReport,
        psi: &QutritState,
        a: &SchmidtVector,
        seed: u64,
        sample: usize,
        notes: Vec<String>,
    ) -> Result<Self> {
        let n = (sample as u64).min(empirical.trials);
        let trace_sample = (0..n).map(|k| protocol.trace(seed, k)).collect::<Result<_>>()?;
        Ok(Self {
            analytic: protocol.analytic().clone(),
            empirical,
            trace_sample,
            meta: RunMeta {
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                mode: protocol.mode(),
                schmidt: *a,
                state: *psi,
                p_success: protocol.analytic_success(),
                notes,
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Contract(format!("json encoding: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("json decoding: {e}")))
    }

    pub fn to_csv(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Contract(format!("json encoding: {e}")))?;
        let mut rows = Vec::new();
        flatten("", &value, &mut rows);
        let mut w = csv_writer();
        w.write_record(["key", "value"]).map_err(csv_err)?;
        for (k, v) in rows {
            w.write_record([k, v]).map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let mut root = Value::Null;
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let (Some(key), Some(raw)) = (record.get(0), record.get(1)) else {
                return Err(Error::Validation("csv row needs key and value".into()));
            };
            let leaf: Value =
                serde_json::from_str(raw).map_err(|e| Error::Validation(format!("csv value for '{key}': {e}")))?;
            insert(&mut root, key, leaf)?;
        }
        serde_json::from_value(root).map_err(|e| Error::Validation(format!("csv decoding: {e}")))
    }

    pub fn encode(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        Value::Array(items) if !items.is_empty() => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.to_string())),
    }
}

/// Places `leaf` at a dotted path; numeric segments index arrays.
fn insert(root: &mut Value, path: &str, leaf: Value) -> Result<()> {
    let mut node = root;
    for seg in path.split('.') {
        if let Ok(i) = seg.parse::<usize>() {
            if node.is_null() {
                *node = Value::Array(Vec::new());
            }
            let Value::Array(items) = node else {
                return Err(Error::Validation(format!("csv key '{path}' mixes arrays and objects")));
            };
            if i > items.len() {
                return Err(Error::Validation(format!("csv key '{path}' skips an index")));
            }
            if i == items.len() {
                items.push(Value::Null);
            }
            node = &mut items[i];
        } else {
            if node.is_null() {
                *node = Value::Object(Map::new());
            }
            let Value::Object(map) = node else {
                return Err(Error::Validation(format!("csv key '{path}' mixes arrays and objects")));
            };
            node = map.entry(seg).or_insert(Value::Null);
        }
    }
    *node = leaf;
    Ok(())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Contract(format!("csv encoding: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(format!("csv encoding: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Validation(format!("csv: {e}"))
}

pub const SWEEP_HEADER: [&str; 6] = ["a0", "a1", "a2", "a3", "regime", "p_total"];

/// First row with the largest `p_total`.
pub fn sweep_max(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
        Some(b) if b.p_total >= r.p_total => Some(b),
        _ => Some(r),
    })
}

/// Sweep table with a trailing `# max ...` summary line.
pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        let [a0, a1, a2, a3] = r.schmidt.coeffs();
        w.write_record([
            a0.to_string(),
            a1.to_string(),
            a2.to_string(),
            a3.to_string(),
            r.regime.to_string(),
            r.p_total.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let mut text = finish(w)?;
    if let Some(best) = sweep_max(rows) {
        text.push_str(&format!("# max p_total = {} at a = {} ({})\n", best.p_total, best.schmidt, best.regime));
    }
    Ok(text)
}

/// Reads rows written by [`sweep_to_csv`], skipping the summary line.
pub fn sweep_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?;
    if header.iter().ne(SWEEP_HEADER) {
        return Err(Error::Validation(format!("unexpected sweep header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Validation(format!("'{s}': {e}")));
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(csv_err)?;
        let schmidt = SchmidtVector::new([num(&r[0])?, num(&r[1])?, num(&r[2])?, num(&r[3])?])?;
        rows.push(SweepRow { schmidt, regime: r[4].parse::<Regime>()?, p_total: num(&r[5])? });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub resolution: usize,
    pub rows: Vec<SweepRow>,
    pub max: Option<SweepRow>,
}

impl SweepReport {
    pub fn new(resolution: usize, rows: Vec<SweepRow>) -> Self {
        let max = sweep_max(&rows).cloned();
        Self { resolution, rows, max }
    }

    pub fn encode(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => {
                serde_json::to_string_pretty(self).map_err(|e| Error::Contract(format!("json encoding: {e}")))
            }
            Format::Csv => sweep_to_csv(&self.rows),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::sweep;
    use crate::correction::classify_regime;
    use crate::montecarlo::{stream_rng, Execution};

    fn report(psi: &QutritState, a: &SchmidtVector, mode: Mode) -> RunReport {
        let p = Protocol::new(psi, a, mode).unwrap();
        let e = p.run(500, 17, Execution::Serial).unwrap();
        RunReport::build(&p, e, psi, a, 17, 5, vec!["note, with comma".into()]).unwrap()
    }

    #[test]
    fn json_and_csv_round_trip() {
        let mut rng = stream_rng(8, 0);
        for _ in 0..5 {
            let psi = QutritState::random(&mut rng);
            let a = SchmidtVector::random(&mut rng);
            let r = report(&psi, &a, Mode::Qutrit);
            assert_eq!(RunReport::from_json(&r.to_json().unwrap()).unwrap(), r);
            assert_eq!(RunReport::from_csv(&r.to_csv().unwrap()).unwrap(), r);
        }
    }

    #[test]
    fn round_trip_with_nulls_and_empty_lists() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let a = SchmidtVector::new([0.0, 0.0, h, h]).unwrap();
        let psi = QutritState::from_real(0.0, 0.6, 0.8).unwrap();
        let mut r = report(&psi, &a, Mode::Qubit);
        r.meta.notes.clear();
        let csv = r.to_csv().unwrap();
        assert!(csv.contains("meta.notes,[]"));
        assert_eq!(RunReport::from_csv(&csv).unwrap(), r);
    }

    #[test]
    fn json_has_expected_top_level_keys() {
        let r = report(&QutritState::from_real(1.0, 0.0, 0.0).unwrap(), &SchmidtVector::uniform(), Mode::Qutrit);
        let v: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        for k in ["analytic", "empirical", "trace_sample", "meta"] {
            assert!(keys.contains(&k.to_string()));
        }
        for k in ["version", "seed", "timestamp"] {
            assert!(v["meta"].get(k).is_some());
        }
        assert_eq!(r.trace_sample.len(), 5);
    }

    #[test]
    fn sweep_csv_format() {
        let rows = sweep(4).unwrap();
        let text = sweep_to_csv(&rows).unwrap();
        assert!(text.starts_with("a0,a1,a2,a3,regime,p_total\n"));
        assert!(!text.contains('\r'));
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("# max p_total = 0.5"));
        let parsed = sweep_from_csv(&text).unwrap();
        assert_eq!(parsed, rows);
        for r in &parsed {
            assert_eq!(r.regime, classify_regime(&r.schmidt));
        }
    }

    #[test]
    fn bad_csv_is_rejected() {
        assert!(RunReport::from_csv("key,value\nmeta.seed,notjson\n").is_err());
        assert!(sweep_from_csv("a,b\n1,2\n").is_err());
        assert!("xml".parse::<Format>().is_err());
    }
}
