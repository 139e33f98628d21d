// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! CSV and JSON readers and writers for pipeline artifacts.
//!
//! CSV files may begin with `#` comment lines; readers skip them. Floats are
//! written in shortest round-trip form so re-reading is lossless.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::connectivity::TimeSeries;
use crate::error::{format_err, Error, Result};
use crate::measures::{MeasureTable, SystemPartition};
use crate::multilayer::CommunityAssignment;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn write_comment<W: Write>(w: &mut W, comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

fn finish<W: Write>(wtr: csv::Writer<W>) -> Result<()> {
    wtr.into_inner().map_err(|e| Error::Io(e.to_string()))?.flush()?;
    Ok(())
}

fn parse_f64(s: &str, field: &str, row: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| format_err(field, format!("row {row}: `{s}` is not a number")))
}

fn parse_usize(s: &str, field: &str, row: usize) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| format_err(field, format!("row {row}: `{s}` is not a non-negative integer")))
}

/// Samples as rows, regions as columns, region labels in the header.
pub fn read_timeseries_csv<R: Read>(r: R, sample_period: f64) -> Result<TimeSeries> {
    let mut rdr = reader(r);
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err("row", e.to_string()))?;
        if rec.len() != labels.len() {
            return Err(format_err("row", format!("row {row} has {} fields, expected {}", rec.len(), labels.len())));
        }
        for (k, s) in rec.iter().enumerate() {
            values.push(parse_f64(s, &labels[k], row)?);
        }
    }
    TimeSeries::new(values, labels, sample_period)
}

pub fn write_timeseries_csv<W: Write>(mut w: W, ts: &TimeSeries, comment: Option<&str>) -> Result<()> {
    write_comment(&mut w, comment)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ts.region_labels())?;
    for t in 0..ts.n_samples() {
        wtr.write_record((0..ts.n_regions()).map(|i| ts.get(t, i).to_string()))?;
    }
    finish(wtr)
}

/// Layers as rows, nodes as columns.
pub fn write_assignment_csv<W: Write>(
    mut w: W,
    ca: &CommunityAssignment,
    labels: &[String],
    comment: Option<&str>,
) -> Result<()> {
    check_labels(labels, ca.n_nodes())?;
    write_comment(&mut w, comment)?;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(labels)?;
    for l in 0..ca.n_layers() {
        wtr.write_record(ca.layer(l).iter().map(|c| c.to_string()))?;
    }
    finish(wtr)
}

pub fn read_assignment_csv<R: Read>(r: R) -> Result<(CommunityAssignment, Vec<String>)> {
    let mut rdr = reader(r);
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err("row", e.to_string()))?;
        let v = rec
            .iter()
            .enumerate()
            .map(|(k, s)| parse_usize(s, &labels[k.min(labels.len() - 1)], row))
            .collect::<Result<Vec<_>>>()?;
        rows.push(v);
    }
    Ok((CommunityAssignment::from_rows(&rows)?, labels))
}

fn check_labels(labels: &[String], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{} labels for {n} nodes", labels.len())));
    }
    Ok(())
}

/// Ensemble of assignments in long form: `run,layer,<node labels>`.
pub fn write_ensemble_csv<W: Write>(
    mut w: W,
    cas: &[CommunityAssignment],
    labels: &[String],
    comment: Option<&str>,
) -> Result<()> {
    let first = cas.first().ok_or_else(|| Error::EmptyInput("empty ensemble".into()))?;
    check_labels(labels, first.n_nodes())?;
    write_comment(&mut w, comment)?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["run".to_string(), "layer".to_string()];
    header.extend(labels.iter().cloned());
    wtr.write_record(&header)?;
    for (r, ca) in cas.iter().enumerate() {
        for l in 0..ca.n_layers() {
            let mut rec = vec![r.to_string(), l.to_string()];
            rec.extend(ca.layer(l).iter().map(|c| c.to_string()));
            wtr.write_record(&rec)?;
        }
    }
    finish(wtr)
}

pub fn read_ensemble_csv<R: Read>(r: R) -> Result<(Vec<CommunityAssignment>, Vec<String>)> {
    let mut rdr = reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "run" || header[1] != "layer" {
        return Err(format_err("header", "expected `run,layer,<labels>`"));
    }
    let labels = header[2..].to_vec();
    let mut runs: Vec<Vec<Vec<usize>>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err("row", e.to_string()))?;
        let run = parse_usize(&rec[0], "run", row)?;
        let layer = parse_usize(&rec[1], "layer", row)?;
        if run == runs.len() && layer == 0 {
            runs.push(Vec::new());
        } else if run + 1 != runs.len() || layer != runs[run].len() {
            return Err(format_err("layer", format!("row {row}: runs and layers must be contiguous from 0")));
        }
        let v = rec
            .iter()
            .skip(2)
            .enumerate()
            .map(|(k, s)| parse_usize(s, &labels[k.min(labels.len() - 1)], row))
            .collect::<Result<Vec<_>>>()?;
        runs[run].push(v);
    }
    let cas = runs.iter().map(|r| CommunityAssignment::from_rows(r)).collect::<Result<Vec<_>>>()?;
    if cas.is_empty() {
        return Err(Error::EmptyInput("ensemble file has no rows".into()));
    }
    Ok((cas, labels))
}

/// One row of `measures.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub subject: String,
    pub measure: String,
    pub target: String,
    pub raw: f64,
    pub normalized: Option<f64>,
}

pub fn measure_rows(subject: &str, table: &MeasureTable, sys: &SystemPartition) -> Vec<MeasureRow> {
    table
        .entries
        .iter()
        .map(|e| MeasureRow {
            subject: subject.to_string(),
            measure: e.kind.name().to_string(),
            target: e.target.label(sys),
            raw: e.raw,
            normalized: e.normalized,
        })
        .collect()
}

fn write_rows<W: Write, T: Serialize>(mut w: W, rows: &[T], header: &[&str], comment: Option<&str>) -> Result<()> {
    write_comment(&mut w, comment)?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(header)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    finish(wtr)
}

fn read_rows<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    reader(r)
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| format_err("row", format!("row {i}: {e}"))))
        .collect()
}

pub const MEASURE_COLUMNS: [&str; 5] = ["subject", "measure", "target", "raw", "normalized"];

pub fn write_measures_csv<W: Write>(w: W, rows: &[MeasureRow], comment: Option<&str>) -> Result<()> {
    write_rows(w, rows, &MEASURE_COLUMNS, comment)
}

pub fn read_measures_csv<R: Read>(r: R) -> Result<Vec<MeasureRow>> {
    read_rows(r)
}

/// One row of `stats.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub contrast: String,
    pub target: String,
    pub statistic: f64,
    pub dof: f64,
    pub p_raw: f64,
    pub p_fdr: f64,
    pub p_bonferroni: f64,
    pub rejected: bool,
}

pub const STATS_COLUMNS: [&str; 8] =
    ["contrast", "target", "statistic", "dof", "p_raw", "p_fdr", "p_bonferroni", "rejected"];

pub fn write_stats_csv<W: Write>(w: W, rows: &[StatsRow], comment: Option<&str>) -> Result<()> {
    write_rows(w, rows, &STATS_COLUMNS, comment)
}

pub fn read_stats_csv<R: Read>(r: R) -> Result<Vec<StatsRow>> {
    read_rows(r)
}

pub fn read_json<R: Read, T: DeserializeOwned>(r: R, what: &str) -> Result<T> {
    serde_json::from_reader(r).map_err(|e| format_err(what, e.to_string()))
}

/// Pretty-printed with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}
