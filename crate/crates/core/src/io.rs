//! Artifact writers: CSV tables, surface CSVs and the binary grid dump.
//!
//! Floats are written with `{:e}`, the shortest decimal that reads back to
//! the same bits, so identical runs give identical files.
//!
//! # Binary grid dump
//!
//! A `.rgrd` file holds one [`GridFunction`], little-endian throughout:
//!
//! | field     | type                  |
//! |-----------|-----------------------|
//! | magic     | 4 bytes `RGRD`        |
//! | version   | `u32` (1)             |
//! | dims      | `u32` `d`             |
//! | times     | `u32` `nt`            |
//! | per axis  | `f64` lower, `f64` upper, `u32` points |
//! | time axis | `nt × f64`            |
//! | values    | `nt × Πpoints × f64`  |
//!
//! Values are row-major with time slowest and the last state axis fastest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::diffusion::SpatialGrid;
use crate::error::{Error, Result};
use crate::pde::GridFunction;

pub const GRID_MAGIC: &[u8; 4] = b"RGRD";
pub const GRID_VERSION: u32 = 1;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Plain CSV with a header row.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn push_values(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_f64(v)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Time indices `0, stride, 2·stride, …` plus the last one.
pub fn strided_times(n_times: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut ks: Vec<usize> = (0..n_times).step_by(stride).collect();
    if ks.last() != Some(&(n_times - 1)) {
        ks.push(n_times - 1);
    }
    ks
}

/// Columns `t, x0, …, x{d-1}, name₁, name₂, …` over the given time indices.
/// All surfaces must share grid and times.
pub fn surfaces_csv(columns: &[(&str, &GridFunction)], time_indices: &[usize]) -> Result<CsvTable> {
    let Some((_, first)) = columns.first() else {
        return Err(Error::Config("no surfaces to write".into()));
    };
    if columns
        .iter()
        .any(|(_, g)| g.grid != first.grid || g.times != first.times)
    {
        return Err(Error::Config("surfaces live on different grids".into()));
    }
    let d = first.grid.dim();
    let header = ["t".to_string()]
        .into_iter()
        .chain((0..d).map(|i| format!("x{i}")))
        .chain(columns.iter().map(|(n, _)| n.to_string()));
    let mut table = CsvTable::new(header);
    let mut x = vec![0.0; d];
    for &k in time_indices {
        for node in 0..first.grid.n_nodes() {
            first.grid.node_into(node, &mut x);
            let mut row = Vec::with_capacity(1 + d + columns.len());
            row.push(fmt_f64(first.times[k]));
            row.extend(x.iter().map(|&v| fmt_f64(v)));
            row.extend(columns.iter().map(|(_, g)| fmt_f64(g.value(k, node))));
            table.push(row);
        }
    }
    Ok(table)
}

pub fn write_grid(path: &Path, g: &GridFunction) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = g.grid.dim();
    let counts = |n: usize| {
        u32::try_from(n).map_err(|_| Error::Config(format!("{n} does not fit the grid header")))
    };
    w.write_all(GRID_MAGIC)?;
    w.write_all(&GRID_VERSION.to_le_bytes())?;
    w.write_all(&counts(d)?.to_le_bytes())?;
    w.write_all(&counts(g.times.len())?.to_le_bytes())?;
    for i in 0..d {
        w.write_all(&g.grid.lower[i].to_le_bytes())?;
        w.write_all(&g.grid.upper[i].to_le_bytes())?;
        w.write_all(&counts(g.grid.points[i])?.to_le_bytes())?;
    }
    for t in &g.times {
        w.write_all(&t.to_le_bytes())?;
    }
    for v in g.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: String,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Parse {
            context: self.context.clone(),
            message: format!("truncated at byte {}", self.pos),
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn read_grid(path: &Path) -> Result<GridFunction> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let context = path.display().to_string();
    let bad = |message: String| Error::Parse {
        context: context.clone(),
        message,
    };
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
        context: context.clone(),
    };
    if &c.take::<4>()? != GRID_MAGIC {
        return Err(bad("missing RGRD magic".into()));
    }
    let version = c.u32()?;
    if version != GRID_VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let d = c.u32()?;
    let nt = c.u32()?;
    let (mut lower, mut upper, mut points) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..d {
        lower.push(c.f64()?);
        upper.push(c.f64()?);
        points.push(c.u32()?);
    }
    let grid = SpatialGrid::new(lower, upper, points)?;
    let times = (0..nt).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
    let values = (0..nt * grid.n_nodes())
        .map(|_| c.f64())
        .collect::<Result<Vec<_>>>()?;
    if c.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(GridFunction::from_slices(grid, times, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridFunction {
        let grid = SpatialGrid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![5, 4]).unwrap();
        GridFunction::sample(&grid, &[0.0, 0.5, 1.0], |t, x| t + x[0] * x[1] + 0.1)
    }

    #[test]
    fn binary_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rgrd");
        let g = sample();
        write_grid(&path, &g).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back, g);
        let len = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(len, 16 + 2 * 20 + 3 * 8 + 3 * 20 * 8);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.rgrd");
        write_grid(&path, &sample()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_grid(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_lists_every_node_per_time() {
        let g = sample();
        let t = surfaces_csv(&[("a", &g), ("b", &g)], &strided_times(3, 2)).unwrap();
        assert_eq!(t.len(), 2 * 20);
        let text = t.render();
        assert!(text.starts_with("t,x0,x1,a,b\n"));
        let row: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.0, -1.0, 0.0, 0.1, 0.1]);
    }

    #[test]
    fn floats_round_trip_through_text() {
        for v in [0.1 + 0.2, 1e-300, -3.5e17, 0.0, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
