//! CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::construct::{EigenvalueFamily, MapFamily, MatrixFamily};
use crate::error::{Error, Result};
use crate::interval::{rat, Grid, Rational, SampledFunction};
use crate::markov::MarkovKernel;

/// Dense family CSVs are skipped above this many values.
pub const CSV_VALUE_CAP: u64 = 20_000_000;

/// Digits after the decimal point in every CSV float.
pub const CSV_PRECISION: usize = 12;

fn fmt(v: f64) -> String {
    format!("{v:.CSV_PRECISION$}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// One row per map, `M+1` columns. Returns `false` without writing above [`CSV_VALUE_CAP`].
pub fn write_family_csv(path: &Path, family: &dyn MapFamily) -> Result<bool> {
    let grid = family.grid();
    if family.count() * grid.len() as u64 > CSV_VALUE_CAP {
        return Ok(false);
    }
    let mut rows = vec![Vec::with_capacity(grid.len()); family.count() as usize];
    for y in 0..grid.len() {
        let mut i = 0;
        for (v, c) in family.column(y) {
            for _ in 0..c {
                rows[i].push(fmt(v));
                i += 1;
            }
        }
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(true)
}

/// Reads a family CSV; endpoint values must be multiples of `1/M`.
pub fn read_family_csv(path: &Path) -> Result<MatrixFamily> {
    let rows = read_matrix(path)?;
    let width = rows.first().map_or(0, |r| r.len());
    let grid = Grid::new(width.saturating_sub(1))?;
    let m = grid.m() as i128;
    let reps: Vec<Rational> = (0..=m).map(|i| rat(i, m)).collect();
    MatrixFamily::new(grid, rows, None, reps)
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("{}: line {}: bad number {s:?}", path.display(), line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// `(M+1) × (M+1)` row-stochastic matrix, row `y` holding the weights of `μ_y`.
pub fn write_kernel_csv(path: &Path, kernel: &MarkovKernel) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in kernel.rows() {
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_kernel_csv(path: &Path) -> Result<MarkovKernel> {
    let rows = read_matrix(path)?;
    let grid = Grid::new(rows.len().saturating_sub(1))?;
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != grid.len()) {
        return Err(Error::Malformed(format!(
            "{}: row {} has {} entries, expected {}",
            path.display(),
            i + 1,
            r.len(),
            grid.len()
        )));
    }
    MarkovKernel::from_rows(grid, rows)
}

/// Header `x,value`, one line per grid point.
pub fn write_function_csv(path: &Path, f: &SampledFunction) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "value"])?;
    for (x, v) in f.grid().points().zip(f.values()) {
        w.write_record([fmt(x), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `x,value` samples on a uniform grid starting at 0 and ending at 1.
pub fn read_function_csv<R: Read>(reader: R, name: &str) -> Result<SampledFunction> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut values = Vec::new();
    for (line, rec) in r.deserialize::<(f64, f64)>().enumerate() {
        let (x, v) = rec.map_err(|e| Error::Malformed(format!("{name}: line {}: {e}", line + 2)))?;
        values.push((x, v));
    }
    let grid = Grid::new(values.len().saturating_sub(1))?;
    for (i, (x, _)) in values.iter().enumerate() {
        if (x - grid.point(i)).abs() > 1e-9 {
            return Err(Error::Malformed(format!(
                "{name}: line {}: x = {x}, expected grid point {}",
                i + 2,
                grid.point(i)
            )));
        }
    }
    SampledFunction::new(grid, values.into_iter().map(|p| p.1).collect())
}

/// Columns `y, phi, avg` for one function.
pub fn write_plot_csv(path: &Path, image: &SampledFunction, average: &SampledFunction) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["y", "phi", "avg"])?;
    for (y, (p, a)) in image.grid().points().zip(image.values().iter().zip(average.values())) {
        w.write_record([fmt(y), fmt(*p), fmt(*a)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_family(dir: &Path, stem: &str, family: &EigenvalueFamily) -> Result<bool> {
    write_json(&dir.join(format!("{stem}.json")), family)?;
    write_family_csv(&dir.join(format!("{stem}.csv")), family)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_and_function_round_trip() {
        let dir = std::env::temp_dir().join(format!("mm-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let g = Grid::new(8).unwrap();
        let k = MarkovKernel::example2(g, 3.0, 1.0).unwrap();
        write_kernel_csv(&dir.join("k.csv"), &k).unwrap();
        let back = read_kernel_csv(&dir.join("k.csv")).unwrap();
        for (a, b) in k.rows().zip(back.rows()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-11);
            }
        }
        let f = SampledFunction::from_fn(g, |x| x * x);
        write_function_csv(&dir.join("f.csv"), &f).unwrap();
        let back = read_function_csv(File::open(dir.join("f.csv")).unwrap(), "f.csv").unwrap();
        assert!(crate::interval::sup_distance(&f, &back).unwrap() < 1e-11);
        let err = read_function_csv("x,value\n0,1\n0.7,2\n1,3\n".as_bytes(), "bad").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let id: Vec<f64> = g.points().collect();
        let fam = MatrixFamily::new(g, vec![id.clone(), id], None, vec![rat(0, 1), rat(1, 1)]).unwrap();
        assert!(write_family_csv(&dir.join("fam.csv"), &fam).unwrap());
        let back = read_family_csv(&dir.join("fam.csv")).unwrap();
        assert_eq!(back.count(), 2);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
