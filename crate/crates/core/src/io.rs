//! File formats shared by every command.
//!
//! Points: CSV (`x,y` per line, optional header) or binary
//! (`CGPT`, u32 version, u8 frame, 3 pad bytes, u64 count, then `x y` pairs as f64 LE).
//!
//! Grids: binary (`CGGR`, u32 version, u32 components, origin x y, spacing,
//! u64 nx, u64 ny, then row-major f64 LE with components interleaved).
//!
//! Equilibrium measures: columnar text `x y density in_support` after a
//! `# grid` header line, or the grid binary with one component.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldgrid::{GridField, ScalarGrid};
use crate::geometry::{Frame, Grid, Point, PointConfiguration};
use crate::potential::EquilibriumMeasure;

const POINTS_MAGIC: &[u8; 4] = b"CGPT";
const GRID_MAGIC: &[u8; 4] = b"CGGR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointFormat {
    Csv,
    Bin,
}

impl PointFormat {
    pub fn extension(self) -> &'static str {
        match self {
            PointFormat::Csv => "csv",
            PointFormat::Bin => "bin",
        }
    }
}

impl std::str::FromStr for PointFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(PointFormat::Csv),
            "bin" => Ok(PointFormat::Bin),
            other => Err(Error::Validation(format!("unknown format '{other}' (expected csv or bin)"))),
        }
    }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

/// `x,y` lines with a header. `f64` display is the shortest exact representation.
pub fn points_to_csv(config: &PointConfiguration) -> String {
    let mut s = String::with_capacity(32 * config.n() + 4);
    s.push_str("x,y\n");
    for p in &config.points {
        let _ = writeln!(s, "{},{}", p.x, p.y);
    }
    s
}

pub fn points_from_csv(text: &str, frame: Frame) -> Result<PointConfiguration> {
    let mut points = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = k + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if points.is_empty() && k == first_content_line(text) && is_header(line) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse { line: lineno, message: format!("expected 2 fields, found {}", fields.len()) });
        }
        let parse = |f: &str| {
            f.parse::<f64>().map_err(|_| Error::Parse { line: lineno, message: format!("'{f}' is not a number") })
        };
        let (x, y) = (parse(fields[0])?, parse(fields[1])?);
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Parse { line: lineno, message: "non-finite coordinate".into() });
        }
        points.push(Point::new(x, y));
    }
    PointConfiguration::new(points, frame)
}

fn first_content_line(text: &str) -> usize {
    text.lines().position(|l| {
        let l = l.trim();
        !l.is_empty() && !l.starts_with('#')
    })
    .unwrap_or(0)
}

fn is_header(line: &str) -> bool {
    let f: Vec<String> = line.split(',').map(|s| s.trim().to_ascii_lowercase()).collect();
    f.len() == 2 && f[0] == "x" && f[1] == "y"
}

pub fn points_to_bin(config: &PointConfiguration) -> Vec<u8> {
    let mut b = Vec::with_capacity(20 + 16 * config.n());
    b.extend_from_slice(POINTS_MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.push(match config.frame {
        Frame::Macroscopic => 0,
        Frame::BlownUp => 1,
    });
    b.extend_from_slice(&[0; 3]);
    b.extend_from_slice(&(config.n() as u64).to_le_bytes());
    for p in &config.points {
        b.extend_from_slice(&p.x.to_le_bytes());
        b.extend_from_slice(&p.y.to_le_bytes());
    }
    b
}

pub fn points_from_bin(bytes: &[u8]) -> Result<PointConfiguration> {
    let mut r = Reader::new(bytes, POINTS_MAGIC)?;
    let frame = match r.take(4)?[0] {
        0 => Frame::Macroscopic,
        1 => Frame::BlownUp,
        f => return Err(Error::Format(format!("unknown frame tag {f}"))),
    };
    let n = r.u64()? as usize;
    if r.remaining() != 16 * n {
        return Err(Error::Format(format!("expected {} bytes of coordinates, found {}", 16 * n, r.remaining())));
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, y) = (r.f64()?, r.f64()?);
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::Format("non-finite coordinate".into()));
        }
        points.push(Point::new(x, y));
    }
    PointConfiguration::new(points, frame)
}

pub fn encode_points(config: &PointConfiguration, format: PointFormat) -> Vec<u8> {
    match format {
        PointFormat::Csv => points_to_csv(config).into_bytes(),
        PointFormat::Bin => points_to_bin(config),
    }
}

pub fn write_points(path: &Path, config: &PointConfiguration, format: PointFormat) -> Result<()> {
    write_atomic(path, &encode_points(config, format))
}

/// Read a CSV or binary point file (detected by the magic bytes) in the given frame.
pub fn ingest_points(path: &Path, frame: Frame) -> Result<PointConfiguration> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(POINTS_MAGIC) {
        let config = points_from_bin(&bytes)?;
        if config.frame != frame {
            return Err(Error::WrongFrame { expected: frame, found: config.frame });
        }
        return Ok(config);
    }
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("not UTF-8 text: {e}")))?;
    points_from_csv(text, frame)
}

fn grid_bytes(grid: &Grid, components: u32, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut b = Vec::with_capacity(48 + 8 * components as usize * grid.len());
    b.extend_from_slice(GRID_MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&components.to_le_bytes());
    for v in [grid.origin.x, grid.origin.y, grid.spacing] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&(grid.nx as u64).to_le_bytes());
    b.extend_from_slice(&(grid.ny as u64).to_le_bytes());
    values.for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
    b
}

fn grid_from_bytes(bytes: &[u8], components: u32) -> Result<(Grid, Vec<f64>)> {
    let mut r = Reader::new(bytes, GRID_MAGIC)?;
    let c = r.u32()?;
    if c != components {
        return Err(Error::Format(format!("expected {components} components per cell, found {c}")));
    }
    let origin = Point::new(r.f64()?, r.f64()?);
    let spacing = r.f64()?;
    let (nx, ny) = (r.u64()? as usize, r.u64()? as usize);
    let grid = Grid::new(origin, spacing, nx, ny)?;
    let count = grid.len() * components as usize;
    if r.remaining() != 8 * count {
        return Err(Error::Format(format!("expected {} bytes of values, found {}", 8 * count, r.remaining())));
    }
    let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Ok((grid, values))
}

pub fn scalar_grid_to_bin(g: &ScalarGrid) -> Vec<u8> {
    grid_bytes(&g.grid, 1, g.values.iter().copied())
}

pub fn scalar_grid_from_bin(bytes: &[u8]) -> Result<ScalarGrid> {
    let (grid, values) = grid_from_bytes(bytes, 1)?;
    Ok(ScalarGrid { grid, values })
}

pub fn grid_field_to_bin(f: &GridField) -> Vec<u8> {
    grid_bytes(&f.grid, 2, f.values.iter().flat_map(|p| [p.x, p.y]))
}

pub fn grid_field_from_bin(bytes: &[u8]) -> Result<GridField> {
    let (grid, v) = grid_from_bytes(bytes, 2)?;
    Ok(GridField { grid, values: v.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect() })
}

pub fn equilibrium_to_bin(eq: &EquilibriumMeasure) -> Vec<u8> {
    grid_bytes(&eq.grid, 1, eq.density.iter().copied())
}

pub fn equilibrium_from_bin(bytes: &[u8]) -> Result<EquilibriumMeasure> {
    let (grid, density) = grid_from_bytes(bytes, 1)?;
    EquilibriumMeasure::from_density(grid, density)
}

pub fn equilibrium_to_columns(eq: &EquilibriumMeasure) -> String {
    let g = &eq.grid;
    let mut s = String::with_capacity(48 * g.len() + 64);
    let _ = writeln!(s, "# grid {} {} {} {} {}", g.origin.x, g.origin.y, g.spacing, g.nx, g.ny);
    s.push_str("x y density in_support\n");
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            let c = g.center(i, j);
            let _ = writeln!(s, "{} {} {} {}", c.x, c.y, eq.density[k], eq.support_mask[k] as u8);
        }
    }
    s
}

pub fn equilibrium_from_columns(text: &str) -> Result<EquilibriumMeasure> {
    let mut lines = text.lines().enumerate();
    let (_, head) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let h: Vec<&str> = head.split_whitespace().collect();
    if h.len() != 7 || h[0] != "#" || h[1] != "grid" {
        return Err(Error::Parse { line: 1, message: "expected '# grid origin_x origin_y spacing nx ny'".into() });
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse { line: 1, message: format!("'{s}' is not a number") });
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse { line: 1, message: format!("'{s}' is not a count") });
    let grid = Grid::new(Point::new(num(h[2])?, num(h[3])?), num(h[4])?, int(h[5])?, int(h[6])?)?;
    let mut density = Vec::with_capacity(grid.len());
    for (k, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with("x ") {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let d = f
            .get(2)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|_| f.len() == 4)
            .ok_or(Error::Parse { line: k + 1, message: "expected 'x y density in_support'".into() })?;
        density.push(d);
    }
    if density.len() != grid.len() {
        return Err(Error::Format(format!("expected {} rows, found {}", grid.len(), density.len())));
    }
    EquilibriumMeasure::from_density(grid, density)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if !bytes.starts_with(magic) {
            return Err(Error::Format(format!("missing {} header", String::from_utf8_lossy(magic))));
        }
        let mut r = Reader { bytes, pos: 4 };
        let v = r.u32()?;
        if v != VERSION {
            return Err(Error::Format(format!("unsupported version {v}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_examples() {
        let c = points_from_csv("0,0\n1,0", Frame::Macroscopic).unwrap();
        assert_eq!(c.points, vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]);
        assert_eq!(points_from_csv("", Frame::BlownUp).unwrap().n(), 0);
        match points_from_csv("a,b", Frame::Macroscopic) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let h = points_from_csv("x,y\n0.5,-2\n\n3,4\n", Frame::Macroscopic).unwrap();
        assert_eq!(h.n(), 2);
        assert!(matches!(points_from_csv("1,2\n1,inf", Frame::Macroscopic), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(points_from_csv("1,2,3", Frame::Macroscopic), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(points_from_bin(b"CGPX").is_err());
        let c = PointConfiguration::blown_up(vec![Point::new(1.0, 2.0)]).unwrap();
        let b = points_to_bin(&c);
        assert!(points_from_bin(&b[..b.len() - 1]).is_err());
        assert_eq!(points_from_bin(&b).unwrap(), c);
    }

    #[test]
    fn grid_and_equilibrium_round_trip() {
        let grid = Grid::new(Point::new(-1.0, -0.5), 0.25, 8, 4).unwrap();
        let s = ScalarGrid::from_fn(grid, |p| p.x * p.y + 0.1);
        assert_eq!(scalar_grid_from_bin(&scalar_grid_to_bin(&s)).unwrap(), s);
        let f = GridField::from_fn(grid, |p| Point::new(p.y, -p.x / 3.0));
        assert_eq!(grid_field_from_bin(&grid_field_to_bin(&f)).unwrap(), f);
        assert!(grid_field_from_bin(&scalar_grid_to_bin(&s)).is_err());

        let eq = EquilibriumMeasure::uniform_disk(grid, Point::ORIGIN, 0.6, 1.0 / (std::f64::consts::PI * 0.36)).unwrap();
        let back = equilibrium_from_columns(&equilibrium_to_columns(&eq)).unwrap();
        assert_eq!(back.density, eq.density);
        assert_eq!(back.support_mask, eq.support_mask);
        assert_eq!(back.grid, eq.grid);
        let back = equilibrium_from_bin(&equilibrium_to_bin(&eq)).unwrap();
        assert_eq!(back.density, eq.density);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
