//! Flat-file formats: counts, figure data and tables as CSV, everything
//! else as JSON.
//!
//! Floats are written with 17 significant digits, so every file parses back
//! to the exact values that were written.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::design::SurveyDesign;
use crate::error::{Error, Result};
use crate::estimate::ResponseCounts;
use crate::power::SdPoint;
use crate::tables::TableRow;

pub const COUNTS_HEADER: [&str; 3] = ["block_label", "k_index", "count"];
pub const POWER_HEADER: [&str; 3] = ["b", "power_pair", "power_list"];
pub const SD_HEADER: [&str; 4] = ["n", "sd_method", "sd_pair", "sd_binomial"];
pub const TABLE_HEADER: [&str; 4] = ["table", "method", "quantity", "value"];

/// Machine-format float: 17 significant digits, `inf`/`-inf`/`NaN` as is.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn format_error(line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::FileFormat {
        line,
        column,
        message: message.into(),
    }
}

fn from_csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    let column = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.field().map_or(0, |f| f as usize + 1),
        _ => 0,
    };
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.kind().to_string(),
        _ => e.to_string(),
    };
    format_error(line, column, message)
}

fn io_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("i/o error: {e}"))
}

/// Parse a headed CSV into records, returning each with its line number.
fn read_records<T: DeserializeOwned, R: Read>(reader: R, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers().map_err(from_csv_error)?.clone();
    if found.len() != header.len() {
        return Err(format_error(
            1,
            0,
            format!("expected header '{}'", header.join(",")),
        ));
    }
    for (k, (got, want)) in found.iter().zip(header).enumerate() {
        if got != *want {
            return Err(format_error(1, k + 1, format!("expected column '{want}', found '{got}'")));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(from_csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let value = rec.deserialize::<T>(Some(&found)).map_err(|e| {
            let e = from_csv_error(e);
            match e {
                Error::FileFormat { column, message, .. } => format_error(line, column, message),
                other => other,
            }
        })?;
        out.push((line, value));
    }
    Ok(out)
}

fn write_rows<W: Write>(writer: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(io_error)?;
    for r in rows {
        w.write_record(&r).map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

#[derive(Debug, Deserialize)]
struct CountRow {
    block_label: String,
    k_index: usize,
    count: u64,
}

/// Counts CSV `block_label,k_index,count` (`k_index` 1-based within the
/// block). Omitted responses count as zero.
pub fn read_counts_csv<R: Read>(reader: R, design: &SurveyDesign) -> Result<ResponseCounts> {
    let index: HashMap<&str, usize> = design
        .blocks()
        .iter()
        .enumerate()
        .map(|(i, b)| (b.label(), i))
        .collect();
    let mut blocks: Vec<Vec<u64>> = design.blocks().iter().map(|b| vec![0; b.n_responses()]).collect();
    let mut seen: Vec<Vec<bool>> = blocks.iter().map(|b| vec![false; b.len()]).collect();
    for (line, row) in read_records::<CountRow, _>(reader, &COUNTS_HEADER)? {
        let &b = index
            .get(row.block_label.as_str())
            .ok_or_else(|| format_error(line, 1, format!("unknown block '{}'", row.block_label)))?;
        let k = row.k_index;
        if k == 0 || k > blocks[b].len() {
            return Err(format_error(
                line,
                2,
                format!("k_index {k} outside 1..={}", blocks[b].len()),
            ));
        }
        if seen[b][k - 1] {
            return Err(format_error(
                line,
                2,
                format!("duplicate row for {} response {k}", row.block_label),
            ));
        }
        seen[b][k - 1] = true;
        blocks[b][k - 1] = row.count;
    }
    Ok(ResponseCounts::new(blocks))
}

pub fn write_counts_csv<W: Write>(writer: W, design: &SurveyDesign, counts: &ResponseCounts) -> Result<()> {
    counts.check_shape(design)?;
    let rows = design
        .blocks()
        .iter()
        .zip(counts.blocks())
        .flat_map(|(b, c)| {
            c.iter()
                .enumerate()
                .map(move |(k, x)| vec![b.label().to_string(), (k + 1).to_string(), x.to_string()])
        });
    write_rows(writer, &COUNTS_HEADER, rows)
}

/// Figure data for power curves: one bias grid, one column per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub b: Vec<f64>,
    pub power_pair: Vec<f64>,
    pub power_list: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct PowerRow {
    b: f64,
    power_pair: f64,
    power_list: f64,
}

pub fn write_power_csv<W: Write>(writer: W, table: &PowerTable) -> Result<()> {
    if table.power_pair.len() != table.b.len() || table.power_list.len() != table.b.len() {
        return Err(Error::LengthMismatch {
            expected: table.b.len(),
            got: table.power_pair.len().min(table.power_list.len()),
        });
    }
    let rows = (0..table.b.len()).map(|i| {
        vec![
            fmt_f64(table.b[i]),
            fmt_f64(table.power_pair[i]),
            fmt_f64(table.power_list[i]),
        ]
    });
    write_rows(writer, &POWER_HEADER, rows)
}

pub fn read_power_csv<R: Read>(reader: R) -> Result<PowerTable> {
    let mut t = PowerTable {
        b: vec![],
        power_pair: vec![],
        power_list: vec![],
    };
    for (_, r) in read_records::<PowerRow, _>(reader, &POWER_HEADER)? {
        t.b.push(r.b);
        t.power_pair.push(r.power_pair);
        t.power_list.push(r.power_list);
    }
    Ok(t)
}

pub fn write_sd_csv<W: Write>(writer: W, points: &[SdPoint]) -> Result<()> {
    let rows = points.iter().map(|p| {
        vec![
            p.n.to_string(),
            fmt_f64(p.sd_method),
            fmt_f64(p.sd_pair),
            fmt_f64(p.sd_binomial),
        ]
    });
    write_rows(writer, &SD_HEADER, rows)
}

pub fn read_sd_csv<R: Read>(reader: R) -> Result<Vec<SdPoint>> {
    Ok(read_records::<SdPoint, _>(reader, &SD_HEADER)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

pub fn write_table_csv<W: Write>(writer: W, rows: &[TableRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            r.table.clone(),
            r.method.clone(),
            r.quantity.clone(),
            fmt_f64(r.value),
        ]
    });
    write_rows(writer, &TABLE_HEADER, rows)
}

pub fn read_table_csv<R: Read>(reader: R) -> Result<Vec<TableRow>> {
    Ok(read_records::<TableRow, _>(reader, &TABLE_HEADER)?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn write_json<W: Write, T: Serialize>(writer: W, value: &T) -> Result<()> {
    let mut writer = writer;
    serde_json::to_writer_pretty(&mut writer, value).map_err(io_error)?;
    writer.write_all(b"\n").map_err(io_error)
}

pub fn read_json<R: Read, T: DeserializeOwned>(reader: R) -> Result<T> {
    serde_json::from_reader(reader).map_err(|e| format_error(e.line() as u64, e.column(), e.to_string()))
}
