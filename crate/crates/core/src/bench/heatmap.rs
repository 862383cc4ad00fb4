use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit grayscale P5 image and the value range mapped to `0..=255`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub pgm: Vec<u8>,
    pub min: f64,
    pub max: f64,
}

/// Render `grid[row][col]` with linear min/max scaling.
///
/// Row 0 is the bottom of the image so that `x₂` points up. Non-finite cells
/// are ignored when computing the range and drawn black.
pub fn render_heatmap(grid: &[Vec<f64>]) -> Result<Heatmap> {
    let rows = grid.len();
    let cols = grid.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Shape("empty heatmap grid".into()));
    }
    if let Some(r) = grid.iter().position(|r| r.len() != cols) {
        return Err(Error::Shape(format!(
            "ragged grid: row {r} has {} cells, expected {cols}",
            grid[r].len()
        )));
    }
    let finite = grid.iter().flatten().copied().filter(|v| v.is_finite());
    let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let (min, max) = if min > max { (0.0, 0.0) } else { (min, max) };
    let span = max - min;

    let mut pgm = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for row in grid.iter().rev() {
        pgm.extend(row.iter().map(|&v| {
            if !v.is_finite() || span <= 0.0 {
                0
            } else {
                (255.0 * (v - min) / span).round().clamp(0.0, 255.0) as u8
            }
        }));
    }
    Ok(Heatmap { pgm, min, max })
}

/// Write `path` (the image) and `path.txt` holding the value range.
pub fn write_heatmap(path: &Path, grid: &[Vec<f64>]) -> Result<Heatmap> {
    let map = render_heatmap(grid)?;
    std::fs::write(path, &map.pgm)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    std::fs::write(side, format!("min={:e}\nmax={:e}\n", map.min, map.max))?;
    Ok(map)
}

/// Build a dense grid from a long-format CSV with `row`, `col` and a value
/// column. Cells absent from the file are NaN.
pub fn grid_from_long_csv(path: &Path, value_column: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("{}: no column {name:?}", path.display())))
    };
    let (ri, ci, vi) = (col_of("row")?, col_of("col")?, col_of(value_column)?);
    let mut cells = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = || Error::InvalidData {
            index: line,
            what: format!("{}: malformed record {:?}", path.display(), rec),
        };
        let r: usize = field(ri).parse().map_err(|_| bad())?;
        let c: usize = field(ci).parse().map_err(|_| bad())?;
        let v: f64 = field(vi).parse().map_err(|_| bad())?;
        cells.push((r, c, v));
    }
    let rows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let cols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let mut grid = vec![vec![f64::NAN; cols]; rows];
    for (r, c, v) in cells {
        grid[r][c] = v;
    }
    Ok(grid)
}
