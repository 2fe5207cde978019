//! CSV arrays and image grids.

use std::fmt::Write as _;
use std::path::Path;

use coopnet::data::save_image;
use coopnet::tensor::{Real, Tensor};
use coopnet::{Error, Result};

/// Reads a numeric CSV. A non-numeric first line is a header; when it names
/// columns `y0, y1, ...` only those are kept.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Image {
        path: path.to_path_buf(),
        message: m,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let mut keep: Option<Vec<usize>> = None;
    if let Some(first) = lines.peek() {
        if first.split(',').any(|f| f.trim().parse::<f64>().is_err()) {
            let cols: Vec<usize> = first
                .split(',')
                .enumerate()
                .filter(|(_, name)| {
                    let n = name.trim();
                    n.len() > 1 && n.starts_with('y') && n[1..].chars().all(|c| c.is_ascii_digit())
                })
                .map(|(i, _)| i)
                .collect();
            keep = (!cols.is_empty()).then_some(cols);
            lines.next();
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let row = match &keep {
            Some(cols) => cols
                .iter()
                .map(|&c| vals.get(c).copied().ok_or_else(|| bad(format!("row {} is short", i + 1))))
                .collect::<Result<Vec<f64>>>()?,
            None => vals,
        };
        if rows.first().is_some_and(|r: &Vec<f64>| r.len() != row.len()) {
            return Err(bad(format!("row {} has {} columns, expected {}", i + 1, row.len(), rows[0].len())));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn matrix_tensor<S: Real>(rows: &[Vec<f64>], path: &Path) -> Result<Tensor<S>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || d == 0 {
        return Err(Error::Config(format!("{} holds no data", path.display())));
    }
    Tensor::from_f64([rows.len(), d], &rows.iter().flatten().copied().collect::<Vec<_>>())
}

/// Writes `header` and one line per row of `rows`, each prefixed by the
/// matching entry of `keys`.
pub fn write_rows<S: Real>(path: &Path, header: &[String], keys: &[Vec<String>], rows: &Tensor<S>) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows.batch() {
        let mut fields = keys.get(i).cloned().unwrap_or_default();
        fields.extend(rows.sample(i).iter().map(|v| format!("{v}")));
        let _ = writeln!(out, "{}", fields.join(","));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn y_header(prefix: &[&str], d: usize, name: char) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|j| format!("{name}{j}")))
        .collect()
}

/// Tiles a batch of `[c, h, w]` images (item `r * cols + k` at row `r`,
/// column `k`) into one image and saves it.
pub fn save_grid<S: Real>(path: &Path, items: &Tensor<S>, cols: usize) -> Result<()> {
    let s = items.sample_shape();
    if s.len() != 3 || cols == 0 || items.batch() % cols != 0 {
        return Err(Error::Shape(format!("cannot tile {:?} into {cols} columns", items.shape())));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let rows = items.batch() / cols;
    let (gh, gw) = (rows * h, cols * w);
    let mut grid = vec![S::zero(); c * gh * gw];
    for r in 0..rows {
        for k in 0..cols {
            let tile = items.sample(r * cols + k);
            for ch in 0..c {
                for i in 0..h {
                    let src = &tile[(ch * h + i) * w..(ch * h + i + 1) * w];
                    let at = (ch * gh + r * h + i) * gw + k * w;
                    grid[at..at + w].copy_from_slice(src);
                }
            }
        }
    }
    save_image(path, &Tensor::from_vec([c, gh, gw], grid)?)
}
