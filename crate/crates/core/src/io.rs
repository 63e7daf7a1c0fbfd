//! File formats: wide dense CSV, long sparse CSV, response CSVs and the JSON
//! test report.
//!
//! Dense: the first row holds the grid times, every following row one curve.
//! Responses for dense data are a single column aligned by row order (an
//! optional non-numeric header line is skipped). Sparse: a long table with
//! header `subject_id,time,value` plus a response table with header
//! `subject_id,response`, joined by id.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::domain::{DenseSample, SparseSample, Subject, TestReport};
use crate::error::{Error, Result};

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv: {e}"))
}

fn parse_number(field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidParameter(format!("{what}: cannot parse {field:?} as a number")))
}

fn reader<R: Read>(input: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input)
}

/// Raw grid and rows of a wide dense file (not yet validated).
pub fn read_dense_curves<R: Read>(input: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = reader(input, false);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .map(|f| parse_number(f, &format!("curve file row {}", line + 1)))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidParameter("curve file is empty".into()));
    }
    let grid = rows.remove(0);
    Ok((grid, rows))
}

/// Single-column responses; a leading non-numeric line is treated as a header.
pub fn read_responses<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut rdr = reader(input, false);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let field = rec.get(0).unwrap_or("");
        match field.trim().parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if line == 0 => continue,
            Err(_) => return Err(Error::InvalidParameter(format!("response line {}: {field:?}", line + 1))),
        }
    }
    Ok(out)
}

pub fn read_dense<R1: Read, R2: Read>(curves: R1, responses: R2) -> Result<DenseSample> {
    let (grid, rows) = read_dense_curves(curves)?;
    let y = read_responses(responses)?;
    if y.len() != rows.len() {
        return Err(Error::ResponseLengthMismatch { subjects: rows.len(), responses: y.len() });
    }
    DenseSample::new(&grid, &rows, &y)
}

/// Writes a dense sample in the wide format; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_dense<W1: Write, W2: Write>(sample: &DenseSample, curves: W1, responses: W2) -> Result<()> {
    let io_err = |e: std::io::Error| Error::InvalidParameter(format!("write: {e}"));
    let mut w = csv::Writer::from_writer(curves);
    let fmt = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>();
    w.write_record(fmt(sample.grid().points())).map_err(csv_error)?;
    for i in 0..sample.n() {
        w.write_record(fmt(sample.curve(i))).map_err(csv_error)?;
    }
    w.flush().map_err(io_err)?;
    let mut r = csv::Writer::from_writer(responses);
    r.write_record(["response"]).map_err(csv_error)?;
    for y in sample.responses() {
        r.write_record([y.to_string()]).map_err(csv_error)?;
    }
    r.flush().map_err(io_err)?;
    Ok(())
}

fn header_index(headers: &csv::StringRecord, name: &str, file: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::InvalidParameter(format!("{file}: missing column {name:?}")))
}

/// Long-format observations joined with responses by subject id. Subjects keep
/// the order of their first appearance in the observation file.
pub fn read_sparse<R1: Read, R2: Read>(
    observations: R1,
    responses: R2,
    domain: Option<(f64, f64)>,
) -> Result<SparseSample> {
    let mut rdr = reader(observations, true);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (ci, ct, cv) = (
        header_index(&headers, "subject_id", "observation file")?,
        header_index(&headers, "time", "observation file")?,
        header_index(&headers, "value", "observation file")?,
    );
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Subject> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let what = format!("observation line {}", line + 2);
        let id = rec.get(ci).ok_or_else(|| Error::InvalidParameter(format!("{what}: missing subject_id")))?;
        let t = parse_number(rec.get(ct).unwrap_or(""), &what)?;
        let v = parse_number(rec.get(cv).unwrap_or(""), &what)?;
        let entry = by_id.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Subject { times: Vec::new(), values: Vec::new() }
        });
        entry.times.push(t);
        entry.values.push(v);
    }

    let mut rdr = reader(responses, true);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (ri, ry) =
        (header_index(&headers, "subject_id", "response file")?, header_index(&headers, "response", "response file")?);
    let mut resp: HashMap<String, f64> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let what = format!("response line {}", line + 2);
        let id = rec.get(ri).ok_or_else(|| Error::InvalidParameter(format!("{what}: missing subject_id")))?;
        let y = parse_number(rec.get(ry).unwrap_or(""), &what)?;
        if resp.insert(id.to_string(), y).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate response for subject {id:?}")));
        }
    }
    if resp.len() != order.len() {
        return Err(Error::ResponseLengthMismatch { subjects: order.len(), responses: resp.len() });
    }
    let mut subjects = Vec::with_capacity(order.len());
    let mut y = Vec::with_capacity(order.len());
    for id in &order {
        let r = resp.get(id).ok_or_else(|| Error::InvalidParameter(format!("no response for subject {id:?}")))?;
        y.push(*r);
        subjects.push(by_id.remove(id).expect("id recorded"));
    }
    SparseSample::new(subjects, &y, domain)
}

/// Float written with 17 significant digits.
struct Exact(f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(serde::Serialize)]
struct ReportJson<'a> {
    statistic: Exact,
    statistic_label: &'a str,
    eigenvalues: Vec<Exact>,
    d: usize,
    fve: Exact,
    p_value: Exact,
    mc_se: Exact,
    seed: u64,
    n: usize,
    m: usize,
    mc_draws: usize,
    fve_target: Exact,
    null_scale: Exact,
    max_tied_fraction: Exact,
    tie_warning: bool,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<Exact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    critical_value: Option<Exact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reject: Option<bool>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(rename = "K_mode", skip_serializing_if = "Option::is_none")]
    k_mode: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma2: Option<Exact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_grid_size: Option<usize>,
}

/// JSON report with fixed keys and 17-significant-digit floats.
pub fn report_json(report: &TestReport) -> String {
    let d = &report.diagnostics;
    let json = ReportJson {
        statistic: Exact(report.statistic),
        statistic_label: report.statistic_label,
        eigenvalues: report.spectrum.retained().iter().map(|&v| Exact(v)).collect(),
        d: report.spectrum.d,
        fve: Exact(report.spectrum.fve),
        p_value: Exact(report.p_value),
        mc_se: Exact(report.p_value_mc_se),
        seed: d.seed,
        n: d.n,
        m: d.m,
        mc_draws: d.mc_draws,
        fve_target: Exact(d.fve_target),
        null_scale: Exact(d.null_scale),
        max_tied_fraction: Exact(d.max_tied_fraction),
        tie_warning: d.tie_warning,
        degenerate: d.degenerate,
        alpha: report.alpha.map(Exact),
        critical_value: report.alpha_critical.map(Exact),
        reject: report.reject,
        k: d.k,
        k_mode: d.k_fixed.map(|f| if f { "fixed" } else { "cv" }),
        sigma2: d.sigma2.map(Exact),
        output_grid_size: d.output_grid_size,
    };
    serde_json::to_string_pretty(&json).expect("report serialises")
}

/// One-line human summary.
pub fn summary_line(report: &TestReport) -> String {
    let mut line = format!(
        "{} = {:.6e}, d = {}, p = {:.4e} ± {:.1e}",
        report.statistic_label, report.statistic, report.spectrum.d, report.p_value, report.p_value_mc_se
    );
    if let Some(k) = report.diagnostics.k {
        line.push_str(&format!(", K = {k}"));
    }
    if report.diagnostics.degenerate {
        line.push_str(" [degenerate spectrum]");
    }
    if report.diagnostics.tie_warning {
        line.push_str(" [tie warning]");
    }
    line
}
