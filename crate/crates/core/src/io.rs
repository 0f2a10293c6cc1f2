//! File formats: experiment tables in, curves, grids, regions and
//! transcripts out.
//!
//! Floats are written rounded to 9 significant digits in shortest
//! round-trip form, so identical inputs give byte-identical files. Every
//! CSV starts with `#`-prefixed provenance lines.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::bound::hull::BoundCurve;
use crate::bound::net::NetConfig;
use crate::bound::region::UncertaintyRegion;
use crate::error::{Error, Result};
use crate::keyrate::{CriticalPoint, ExperimentRate, ExperimentRecord, FeasibilityGrid};
use crate::protocol::{KeptAs, RoundRecord};
use crate::scalar::Real;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// `x` rounded to 9 significant digits, shortest round-trip form.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let r: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

fn f<T: Real>(x: T) -> String {
    fmt_float(x.as_f64())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub net: Option<NetConfig>,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            net: None,
            seed: None,
        }
    }

    pub fn with_net(mut self, net: NetConfig) -> Self {
        self.net = Some(net);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn header(&self) -> String {
        let mut h = format!(
            "# tool: {} {}\n# command: {}\n# config: {}\n",
            self.tool, self.version, self.command, self.config
        );
        if let Some(n) = &self.net {
            h += &format!(
                "# net: bVertices={} phiPoints={} sGrid={} lipschitzMode={}\n",
                n.b_vertices,
                n.phi_points,
                n.s_grid,
                serde_json::to_value(n.lipschitz_mode)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            );
        }
        if let Some(s) = self.seed {
            h += &format!("# seed: {s}\n");
        }
        h
    }
}

/// `# key: value` lines appended after the provenance block.
pub fn note_lines(notes: &[(&str, String)]) -> String {
    notes.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
}

fn csv_body(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn with_header(prov: &Provenance, notes: &[(&str, String)], body: Vec<u8>) -> Vec<u8> {
    let mut out = prov.header().into_bytes();
    out.extend(note_lines(notes).into_bytes());
    out.extend(body);
    out
}

/// Columns `s,t_star,c_qubit,c_hull,slack,gap`.
pub fn curve_csv<T: Real>(curve: &BoundCurve<T>, prov: &Provenance) -> Result<Vec<u8>> {
    let hull = curve.hull_values();
    let rows = curve.points.iter().zip(hull).map(|(p, h)| {
        vec![
            f(p.s),
            f(p.t_star),
            f(p.c_qubit),
            f(h),
            f(p.slack_used),
            f(p.max_gap),
        ]
    });
    let body = csv_body(&["s", "t_star", "c_qubit", "c_hull", "slack", "gap"], rows)?;
    Ok(with_header(
        prov,
        &[
            ("lambda", f(curve.lambda)),
            ("hull", format!("{:?}", curve.mode)),
        ],
        body,
    ))
}

/// Columns `S,qber,best_lambda,key_rate`; the zero contour goes to its own file.
pub fn grid_csv<T: Real>(
    grid: &FeasibilityGrid<T>,
    prov: &Provenance,
    notes: &[(&str, String)],
) -> Result<Vec<u8>> {
    let rows = grid
        .cells
        .iter()
        .map(|c| vec![f(c.s), f(c.qber), f(c.best_lambda), f(c.key_rate)]);
    Ok(with_header(
        prov,
        notes,
        csv_body(&["S", "qber", "best_lambda", "key_rate"], rows)?,
    ))
}

/// Columns `S,qber`.
pub fn contour_csv<T: Real>(
    grid: &FeasibilityGrid<T>,
    prov: &Provenance,
    notes: &[(&str, String)],
) -> Result<Vec<u8>> {
    let rows = grid.zero_contour.iter().map(|&(s, q)| vec![f(s), f(q)]);
    Ok(with_header(prov, notes, csv_body(&["S", "qber"], rows)?))
}

/// Columns `lambda,s_star,q_star`.
pub fn critical_csv<T: Real>(
    points: &[CriticalPoint<T>],
    prov: &Provenance,
    notes: &[(&str, String)],
) -> Result<Vec<u8>> {
    let rows = points
        .iter()
        .map(|c| vec![f(c.lambda), f(c.s_star), f(c.q_star)]);
    Ok(with_header(
        prov,
        notes,
        csv_body(&["lambda", "s_star", "q_star"], rows)?,
    ))
}

/// Half-planes `lambda,bound`, then the boundary `x,y` as a second table.
pub fn region_csv<T: Real>(
    region: &UncertaintyRegion<T>,
    prov: &Provenance,
    notes: &[(&str, String)],
) -> Result<Vec<u8>> {
    let rows = region.boundary.iter().map(|&(x, y)| vec![f(x), f(y)]);
    let mut n: Vec<(&str, String)> = notes.to_vec();
    n.push(("S", f(region.s)));
    for h in &region.half_planes {
        n.push((
            "halfPlane",
            format!("lambda={} bound={}", f(h.lambda), f(h.bound)),
        ));
    }
    Ok(with_header(prov, &n, csv_body(&["h_a0", "h_a1"], rows)?))
}

/// Columns `label,year,S,qber,best_lambda,rate,status`.
pub fn experiments_csv<T: Real>(
    rows: &[(String, Result<ExperimentRate<T>>)],
    prov: &Provenance,
    notes: &[(&str, String)],
) -> Result<Vec<u8>> {
    let body = rows.iter().map(|(label, r)| match r {
        Ok(e) => vec![
            e.label.clone(),
            e.year.to_string(),
            f(e.s),
            f(e.qber),
            f(e.best_lambda),
            f(e.rate),
            "ok".into(),
        ],
        Err(err) => vec![
            label.clone(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            err.to_string(),
        ],
    });
    Ok(with_header(
        prov,
        notes,
        csv_body(
            &[
                "label",
                "year",
                "S",
                "qber",
                "best_lambda",
                "rate",
                "status",
            ],
            body,
        )?,
    ))
}

/// Columns `round,x,y,a,b,kept_as`.
pub fn transcript_csv(records: &[RoundRecord], prov: &Provenance) -> Result<Vec<u8>> {
    let rows = records.iter().map(|r| {
        vec![
            r.round.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.a.to_string(),
            r.b.to_string(),
            KeptAs::of(r).as_str().into(),
        ]
    });
    Ok(with_header(
        prov,
        &[],
        csv_body(&["round", "x", "y", "a", "b", "kept_as"], rows)?,
    ))
}

/// JSON document `{ "provenance": …, "result": … }` with floats rounded
/// like the CSV files.
pub fn json_document<S: Serialize>(prov: &Provenance, result: &S) -> Result<Vec<u8>> {
    let mut v = serde_json::json!({ "provenance": prov, "result": result });
    round_floats(&mut v);
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

fn round_floats(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            if let Ok(r) = fmt_float(x).parse::<f64>() {
                if let Some(m) = serde_json::Number::from_f64(r) {
                    *n = m;
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_floats),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path)?.write_all(bytes)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RowError {
    /// 1-based line in the file, header included.
    pub line: usize,
    pub label: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentTable {
    pub records: Vec<ExperimentRecord<f64>>,
    /// Line of each entry of `records`.
    pub record_lines: Vec<usize>,
    pub row_errors: Vec<RowError>,
    pub warnings: Vec<String>,
}

const EXPERIMENT_COLUMNS: [&str; 5] = ["label", "year", "S", "qber", "source"];

/// Parse `label,year,S,qber,source`; bad rows are collected, not fatal.
pub fn parse_experiments<R: Read>(input: R) -> Result<ExperimentTable> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let mut table = ExperimentTable::default();
    if text.trim().is_empty() {
        table.warnings.push("experiment file is empty".into());
        return Ok(table);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let idx: Vec<usize> = EXPERIMENT_COLUMNS
        .iter()
        .map(|c| header.iter().position(|h| h == c))
        .collect::<Option<_>>()
        .ok_or_else(|| {
            Error::Invalid(format!(
                "missing header: expected columns {}",
                EXPERIMENT_COLUMNS.join(",")
            ))
        })?;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| rec.get(idx[i]).unwrap_or("").to_string();
        let label = get(0);
        let parsed = (|| -> std::result::Result<ExperimentRecord<f64>, String> {
            let num = |i: usize, name: &str| {
                get(i)
                    .parse::<f64>()
                    .map_err(|_| format!("{name} is not a number: '{}'", get(i)))
            };
            let year = get(1)
                .parse::<i32>()
                .map_err(|_| format!("year is not an integer: '{}'", get(1)))?;
            let r = ExperimentRecord {
                label: label.clone(),
                year,
                s: num(2, "S")?,
                qber: num(3, "qber")?,
                source: get(4),
            };
            r.validate().map_err(|e| match e {
                Error::Invalid(m) => m,
                other => other.to_string(),
            })?;
            Ok(r)
        })();
        match parsed {
            Ok(r) => {
                table.records.push(r);
                table.record_lines.push(line);
            }
            Err(message) => table.row_errors.push(RowError {
                line,
                label,
                message,
            }),
        }
    }
    if table.records.is_empty() && table.row_errors.is_empty() {
        table
            .warnings
            .push("experiment file has no data rows".into());
    }
    Ok(table)
}

pub fn load_experiments(path: &Path) -> Result<ExperimentTable> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_experiments(file)
}
