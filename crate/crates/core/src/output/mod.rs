//! Table and figure writers. Every figure goes out with a sibling CSV holding
//! exactly the plotted data.

mod svg;

pub use svg::{Band, LinePlot, Series};

use std::path::Path;

use crate::error::Result;

/// Shortest round-trip decimal; non-finite values become an empty field.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Parse a field written by [`num`]; empty means NaN.
pub fn parse_num(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}

/// Write a header plus rows as CSV.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV written by [`write_table`] as (header, rows).
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Write `plot` to `svg_path` and its data to the same path with a `.csv` extension.
pub fn write_figure(svg_path: impl AsRef<Path>, plot: &LinePlot) -> Result<()> {
    let (header, rows) = plot.data_table();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_figure_with(svg_path, plot, &header, &rows)
}

/// As [`write_figure`], with a caller-shaped sibling table (it must hold the
/// plotted values).
pub fn write_figure_with(
    svg_path: impl AsRef<Path>,
    plot: &LinePlot,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let svg_path = svg_path.as_ref();
    std::fs::write(svg_path, plot.render())?;
    write_table(svg_path.with_extension("csv"), header, rows)
}
