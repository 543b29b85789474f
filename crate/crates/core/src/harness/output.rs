//! CSV and JSON rendering of sweep results.
//!
//! Every number is written with 12 significant digits in plain decimal
//! notation, so identical rows always give identical bytes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::ctmc::Metrics;

use super::sweep::{Engine, Quality, ResultRow};

pub const CSV_HEADER: [&str; 8] = [
    "scenario",
    "sweep_value",
    "engine",
    "p_block",
    "p_drop",
    "utilization",
    "throughput",
    "quality",
];

const FAILED_PREFIX: &str = "error: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("no result rows to write")]
    Empty,
    #[error("writing {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed row {row}: {reason}")]
    Malformed { row: usize, reason: String },
}

/// `v` with 12 significant digits, positional notation, trailing zeros
/// trimmed.
pub fn fmt_sig12(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let mut out = String::from(sign);
    if exp < 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-exp - 1) as usize));
        out.push_str(&digits);
    } else if (exp as usize) + 1 >= digits.len() {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', exp as usize + 1 - digits.len()));
        return out;
    } else {
        let split = exp as usize + 1;
        out.push_str(&digits[..split]);
        out.push('.');
        out.push_str(&digits[split..]);
    }
    let trimmed = out.trim_end_matches('0').trim_end_matches('.');
    trimmed.to_string()
}

fn round12(v: f64) -> f64 {
    fmt_sig12(v).parse().unwrap_or(v)
}

fn quality_cell(q: &Quality) -> String {
    match q {
        Quality::Residual(r) => fmt_sig12(*r),
        Quality::HalfWidth(Some(m)) => m.as_array().map(fmt_sig12).join(";"),
        Quality::HalfWidth(None) => String::new(),
        Quality::Failed(msg) => format!("{FAILED_PREFIX}{msg}"),
    }
}

pub fn write_csv(rows: &[ResultRow], out: impl Write) -> Result<(), OutputError> {
    if rows.is_empty() {
        return Err(OutputError::Empty);
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let metrics = match &r.metrics {
            Some(m) => m.as_array().map(fmt_sig12),
            None => Default::default(),
        };
        w.write_record([
            r.scenario.as_str(),
            &fmt_sig12(r.sweep_value),
            r.engine.tag(),
            &metrics[0],
            &metrics[1],
            &metrics[2],
            &metrics[3],
            &quality_cell(&r.quality),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn parse_num(s: &str, row: usize) -> Result<f64, OutputError> {
    s.parse().map_err(|_| OutputError::Malformed { row, reason: format!("bad number `{s}`") })
}

/// Inverse of [`write_csv`], up to the 12-digit rounding.
pub fn read_csv(input: impl io::Read) -> Result<Vec<ResultRow>, OutputError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(OutputError::Malformed { row: 0, reason: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let engine = match &rec[2] {
            "analytical" => Engine::Analytical,
            "simulation" => Engine::Simulation,
            other => {
                return Err(OutputError::Malformed { row, reason: format!("unknown engine `{other}`") })
            }
        };
        let q = &rec[7];
        let (metrics, quality) = if let Some(msg) = q.strip_prefix(FAILED_PREFIX) {
            (None, Quality::Failed(msg.to_string()))
        } else {
            let m = Metrics {
                p_block: parse_num(&rec[3], row)?,
                p_drop: parse_num(&rec[4], row)?,
                utilization: parse_num(&rec[5], row)?,
                throughput: parse_num(&rec[6], row)?,
            };
            let quality = match engine {
                Engine::Analytical => Quality::Residual(parse_num(q, row)?),
                Engine::Simulation if q.is_empty() => Quality::HalfWidth(None),
                Engine::Simulation => {
                    let parts = q
                        .split(';')
                        .map(|s| parse_num(s, row))
                        .collect::<Result<Vec<_>, _>>()?;
                    let [a, b, c, d] = parts[..] else {
                        return Err(OutputError::Malformed { row, reason: "expected 4 half-widths".into() });
                    };
                    Quality::HalfWidth(Some(Metrics { p_block: a, p_drop: b, utilization: c, throughput: d }))
                }
            };
            (Some(m), quality)
        };
        rows.push(ResultRow {
            scenario: rec[0].to_string(),
            sweep_value: parse_num(&rec[1], row)?,
            engine,
            metrics,
            quality,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    scenarios: Vec<JsonScenario<'a>>,
}

#[derive(Serialize)]
struct JsonScenario<'a> {
    label: &'a str,
    points: Vec<JsonPoint>,
}

#[derive(Serialize)]
struct JsonPoint {
    sweep_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytical: Option<JsonEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation: Option<JsonEntry>,
}

#[derive(Serialize)]
struct JsonEntry {
    metrics: Option<Metrics>,
    quality: Quality,
}

fn rounded_metrics(m: &Metrics) -> Metrics {
    let a = m.as_array().map(round12);
    Metrics { p_block: a[0], p_drop: a[1], utilization: a[2], throughput: a[3] }
}

fn json_entry(r: &ResultRow) -> JsonEntry {
    let quality = match &r.quality {
        Quality::Residual(x) => Quality::Residual(round12(*x)),
        Quality::HalfWidth(h) => Quality::HalfWidth(h.as_ref().map(rounded_metrics)),
        Quality::Failed(s) => Quality::Failed(s.clone()),
    };
    JsonEntry { metrics: r.metrics.as_ref().map(rounded_metrics), quality }
}

/// Rows grouped by scenario, then by sweep point, with the same rounded
/// values the CSV carries.
pub fn write_json(rows: &[ResultRow], mut out: impl Write) -> Result<(), OutputError> {
    if rows.is_empty() {
        return Err(OutputError::Empty);
    }
    let mut doc = JsonDoc { scenarios: Vec::new() };
    for r in rows {
        if doc.scenarios.last().is_none_or(|s| s.label != r.scenario) {
            doc.scenarios.push(JsonScenario { label: &r.scenario, points: Vec::new() });
        }
        let sc = doc.scenarios.last_mut().expect("just pushed");
        let value = round12(r.sweep_value);
        if sc.points.last().is_none_or(|p| p.sweep_value != value) {
            sc.points.push(JsonPoint { sweep_value: value, analytical: None, simulation: None });
        }
        let pt = sc.points.last_mut().expect("just pushed");
        let entry = Some(json_entry(r));
        match r.engine {
            Engine::Analytical => pt.analytical = entry,
            Engine::Simulation => pt.simulation = entry,
        }
    }
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n").map_err(serde_json::Error::io)?;
    Ok(())
}

pub fn render(rows: &[ResultRow], format: Format) -> Result<Vec<u8>, OutputError> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(rows, &mut buf)?,
        Format::Json => write_json(rows, &mut buf)?,
    }
    Ok(buf)
}

/// Writes `rows` to `path`; nothing is created when `rows` is empty.
pub fn emit_results(rows: &[ResultRow], format: Format, path: &Path) -> Result<(), OutputError> {
    let bytes = render(rows, format)?;
    fs::write(path, bytes).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(engine: Engine, v: f64) -> ResultRow {
        let m = Metrics { p_block: 0.123456789012345, p_drop: 1.5e-7, utilization: 0.5, throughput: 6.25 };
        ResultRow {
            scenario: "CAF(4,2)".into(),
            sweep_value: v,
            engine,
            metrics: Some(m),
            quality: match engine {
                Engine::Analytical => Quality::Residual(3.2e-16),
                Engine::Simulation => Quality::HalfWidth(Some(m)),
            },
        }
    }

    #[test]
    fn sig12_rendering() {
        assert_eq!(fmt_sig12(0.0), "0");
        assert_eq!(fmt_sig12(0.5), "0.5");
        assert_eq!(fmt_sig12(6.25), "6.25");
        assert_eq!(fmt_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig12(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(fmt_sig12(1.5e-7), "0.00000015");
        assert_eq!(fmt_sig12(123456789012345.0), "123456789012000");
        assert_eq!(fmt_sig12(12.0), "12");
        assert_eq!(fmt_sig12(1234.5678), "1234.5678");
    }

    #[test]
    fn csv_layout() {
        let rows = vec![row(Engine::Analytical, 0.5), row(Engine::Simulation, 0.5)];
        let text = String::from_utf8(render(&rows, Format::Csv).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scenario,sweep_value,engine,p_block,p_drop,utilization,throughput,quality"
        );
        assert_eq!(
            lines.next().unwrap(),
            "\"CAF(4,2)\",0.5,analytical,0.123456789012,0.00000015,0.5,6.25,0.00000000000000032"
        );
        assert!(lines.next().unwrap().ends_with(",0.123456789012;0.00000015;0.5;6.25"));
    }

    #[test]
    fn failed_rows_round_trip() {
        let mut r = row(Engine::Simulation, 1.0);
        r.metrics = None;
        r.quality = Quality::Failed("no SU admitted, \"P_d\" undefined".into());
        let back = read_csv(&render(&[r.clone()], Format::Csv).unwrap()[..]).unwrap();
        assert_eq!(back, vec![r]);
    }

    #[test]
    fn empty_rows_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(matches!(emit_results(&[], Format::Csv, &path), Err(OutputError::Empty)));
        assert!(!path.exists());
        assert!(matches!(emit_results(&[], Format::Json, &path), Err(OutputError::Empty)));
    }

    #[test]
    fn json_groups_by_scenario_and_point() {
        let rows = vec![row(Engine::Analytical, 0.5), row(Engine::Simulation, 0.5), row(Engine::Analytical, 1.0)];
        let v: serde_json::Value = serde_json::from_slice(&render(&rows, Format::Json).unwrap()).unwrap();
        let points = &v["scenarios"][0]["points"];
        assert_eq!(points.as_array().unwrap().len(), 2);
        assert_eq!(points[0]["analytical"]["metrics"]["p_block"], 0.123456789012);
        assert!(points[1].get("simulation").is_none());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_stable(
            vals in proptest::collection::vec((0.0..10.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..8.0f64), 1..8)
        ) {
            let rows: Vec<ResultRow> = vals.iter().enumerate().map(|(k, &(v, a, b, c, d))| ResultRow {
                scenario: format!("S{k}"),
                sweep_value: v,
                engine: if k % 2 == 0 { Engine::Analytical } else { Engine::Simulation },
                metrics: Some(Metrics { p_block: a, p_drop: b, utilization: c, throughput: d }),
                quality: if k % 2 == 0 { Quality::Residual(a * 1e-12) } else { Quality::HalfWidth(None) },
            }).collect();
            let once = read_csv(&render(&rows, Format::Csv).unwrap()[..]).unwrap();
            let twice = read_csv(&render(&once, Format::Csv).unwrap()[..]).unwrap();
            prop_assert_eq!(&once, &twice);
            for (a, b) in rows.iter().zip(&once) {
                prop_assert_eq!(&a.scenario, &b.scenario);
                for (x, y) in a.metrics.unwrap().as_array().iter().zip(b.metrics.unwrap().as_array()) {
                    prop_assert!((x - y).abs() <= 1e-11 * x.abs().max(1e-300));
                }
            }
        }
    }
}
