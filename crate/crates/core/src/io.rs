//! CSV formats. Series: header `timestamp_iso8601,value`, one row per step.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};
use crate::forecasting::{DayType, HistoryDay};
use crate::series::{TimeGrid, TimeSeries, Unit};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| Error::Parse(format!("timestamp {s:?}: {e}")))
}

/// Read a series; the grid is inferred from the timestamps, which must be
/// uniformly spaced.
pub fn read_series<R: Read>(reader: R, unit: Unit) -> Result<TimeSeries> {
    let (grid, mut cols) = read_columns(reader, &["value"])?;
    TimeSeries::new(grid, cols.remove(0), unit)
}

/// Timestamped CSV with the given value columns after `timestamp_iso8601`.
/// Returns the inferred grid and one vector per column.
pub fn read_columns<R: Read>(reader: R, names: &[&str]) -> Result<(TimeGrid, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("timestamp_iso8601")
        .chain(names.iter().copied())
        .collect();
    if headers.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected header {}, got {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut stamps = Vec::new();
    let mut cols = vec![Vec::new(); names.len()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != expected.len() {
            return Err(Error::Parse(format!(
                "row {}: expected {} fields",
                i + 1,
                expected.len()
            )));
        }
        stamps.push(parse_timestamp(&rec[0])?);
        for (c, col) in cols.iter_mut().enumerate() {
            let field = &rec[c + 1];
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: {} {field:?}: {e}", i + 1, names[c])))?;
            col.push(v);
        }
    }
    if stamps.len() < 2 {
        return Err(Error::InvalidLength(format!(
            "a series file needs at least 2 rows, found {}",
            stamps.len()
        )));
    }
    let step = (stamps[1] - stamps[0]).num_seconds();
    if step <= 0 || step > u32::MAX as i64 {
        return Err(Error::Parse(format!(
            "non-increasing timestamps at row 2 ({step} s)"
        )));
    }
    for (i, w) in stamps.windows(2).enumerate() {
        if (w[1] - w[0]).num_seconds() != step {
            return Err(Error::GridMismatch(format!(
                "irregular spacing at row {}: expected {step} s",
                i + 2
            )));
        }
    }
    let grid = TimeGrid::new(stamps[0], step as u32, stamps.len())?;
    Ok((grid, cols))
}

/// Columns sharing one grid, written after a `timestamp_iso8601` column.
pub fn write_columns<W: Write>(
    writer: W,
    grid: &TimeGrid,
    names: &[&str],
    cols: &[&[f64]],
) -> Result<()> {
    if cols.len() != names.len() || cols.iter().any(|c| c.len() != grid.steps()) {
        return Err(Error::InvalidLength(format!(
            "{} columns for {} names on a {}-step grid",
            cols.len(),
            names.len(),
            grid.steps()
        )));
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(std::iter::once("timestamp_iso8601").chain(names.iter().copied()))?;
    for i in 0..grid.steps() {
        let mut row = vec![format_timestamp(grid.timestamp(i))];
        row.extend(cols.iter().map(|c| c[i].to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_series<W: Write>(writer: W, series: &TimeSeries) -> Result<()> {
    write_columns(writer, series.grid(), &["value"], &[series.values()])
}

pub fn read_series_file(path: impl AsRef<Path>, unit: Unit) -> Result<TimeSeries> {
    read_series(open(path.as_ref())?, unit)
}

pub fn write_series_file(path: impl AsRef<Path>, series: &TimeSeries) -> Result<()> {
    write_series(create(path.as_ref())?, series)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

pub const HISTORY_INDEX: &str = "index.csv";
const INDEX_HEADER: [&str; 4] = [
    "date",
    "day_type",
    "mean_irradiance_wm2",
    "mean_temperature_c",
];
const DAY_COLUMNS: [&str; 2] = ["gross_load_kw", "pv_kw"];

/// History directory: `index.csv` with one row per day plus one
/// `<date>.csv` per day holding gross load and PV.
pub fn read_history_dir(dir: impl AsRef<Path>) -> Result<Vec<HistoryDay>> {
    let dir = dir.as_ref();
    let mut rdr = csv::Reader::from_reader(open(&dir.join(HISTORY_INDEX))?);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).ne(INDEX_HEADER) {
        return Err(Error::Parse(format!(
            "history index: expected header {}, got {}",
            INDEX_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut days = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != INDEX_HEADER.len() {
            return Err(Error::Parse(format!(
                "history index row {}: expected 4 fields",
                i + 1
            )));
        }
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d").map_err(|e| {
            Error::Parse(format!(
                "history index row {}: date {:?}: {e}",
                i + 1,
                &rec[0]
            ))
        })?;
        let day_type: DayType = rec[1].parse()?;
        let num = |j: usize| -> Result<f64> {
            rec[j].trim().parse().map_err(|e| {
                Error::Parse(format!(
                    "history index row {}: {} {:?}: {e}",
                    i + 1,
                    INDEX_HEADER[j],
                    &rec[j]
                ))
            })
        };
        let (grid, mut cols) = read_columns(open(&dir.join(format!("{date}.csv")))?, &DAY_COLUMNS)?;
        let pv = TimeSeries::new(grid, cols.remove(1), Unit::Kw)?;
        let gross = TimeSeries::new(grid, cols.remove(0), Unit::Kw)?;
        days.push(HistoryDay::new(
            date,
            day_type,
            num(2)?,
            num(3)?,
            gross,
            pv,
        )?);
    }
    Ok(days)
}

/// Inverse of [`read_history_dir`]; the directory must exist.
pub fn write_history_dir(dir: impl AsRef<Path>, days: &[HistoryDay]) -> Result<()> {
    let dir = dir.as_ref();
    let mut wtr = csv::Writer::from_writer(create(&dir.join(HISTORY_INDEX))?);
    wtr.write_record(INDEX_HEADER)?;
    for d in days {
        wtr.write_record([
            d.date.to_string(),
            d.day_type.to_string(),
            d.mean_irradiance.to_string(),
            d.mean_temperature.to_string(),
        ])?;
        write_columns(
            create(&dir.join(format!("{}.csv", d.date)))?,
            d.gross_load.grid(),
            &DAY_COLUMNS,
            &[d.gross_load.values(), d.pv.values()],
        )?;
    }
    wtr.flush()?;
    Ok(())
}

const PRICE_COLUMNS: [&str; 2] = ["afrr_up_chf_per_kwh", "afrr_down_chf_per_kwh"];

/// Raw aFRR price scenario `(up, down)`.
pub fn read_price_scenario(path: impl AsRef<Path>) -> Result<(TimeSeries, TimeSeries)> {
    let (grid, mut cols) = read_columns(open(path.as_ref())?, &PRICE_COLUMNS)?;
    let down = TimeSeries::new(grid, cols.remove(1), Unit::ChfPerKwh)?;
    let up = TimeSeries::new(grid, cols.remove(0), Unit::ChfPerKwh)?;
    Ok((up, down))
}

pub fn write_price_scenario(
    path: impl AsRef<Path>,
    up: &TimeSeries,
    down: &TimeSeries,
) -> Result<()> {
    up.ensure_same_grid(down)?;
    write_columns(
        create(path.as_ref())?,
        up.grid(),
        &PRICE_COLUMNS,
        &[up.values(), down.values()],
    )
}
