//! Cartesian grids, scalar/vector fields, cloud-in-cell transfer, and field
//! file formats (binary and CSV).

use crate::error::{Result, VpError};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Uniform cartesian grid geometry.  `origin` is the coordinate of the first
/// sample point; values are stored row-major with the z index fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl Grid3 {
    pub fn cube(center: f64, half_extent: f64, n: usize) -> Self {
        let h = 2.0 * half_extent / n as f64;
        Grid3 {
            origin: [center - half_extent + 0.5 * h; 3],
            spacing: [h; 3],
            dims: [n; 3],
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn unflat(&self, flat: usize) -> [usize; 3] {
        let k = flat % self.dims[2];
        let j = (flat / self.dims[2]) % self.dims[1];
        let i = flat / (self.dims[1] * self.dims[2]);
        [i, j, k]
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflat(flat);
        [
            self.origin[0] + self.spacing[0] * idx[0] as f64,
            self.origin[1] + self.spacing[1] * idx[1] as f64,
            self.origin[2] + self.spacing[2] * idx[2] as f64,
        ]
    }

    /// Index of the nearest sample point, or None when outside the grid.
    pub fn nearest(&self, p: [f64; 3]) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let s = (p[a] - self.origin[a]) / self.spacing[a];
            let i = s.round();
            if i < 0.0 || i >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = i as usize;
        }
        Some(self.flat(idx[0], idx[1], idx[2]))
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField3 {
    pub grid: Grid3,
    pub values: Vec<f64>,
}

impl ScalarField3 {
    pub fn zeros(grid: Grid3) -> Self {
        ScalarField3 {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        ScalarField3 { grid, values }
    }

    /// Trilinear interpolation; clamps to the grid hull.
    pub fn gather(&self, p: [f64; 3]) -> f64 {
        let (base, frac) = cic_base(&self.grid, p);
        let mut acc = 0.0;
        for (flat, w) in cic_stencil(&self.grid, base, frac) {
            acc += w * self.values[flat];
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        write_field_payload(&mut w, &self.grid, 1, &self.values)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<ScalarField3> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let (grid, ncomp, values) = read_field_payload(&mut r)?;
        if ncomp != 1 {
            return Err(VpError::InvalidArgument(format!(
                "expected scalar field, found {ncomp} components"
            )));
        }
        Ok(ScalarField3 { grid, values })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,y,z,value")?;
        for (i, v) in self.values.iter().enumerate() {
            let p = self.grid.point(i);
            writeln!(w, "{},{},{},{}", p[0], p[1], p[2], v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField3 {
    pub grid: Grid3,
    /// Three component planes, each grid.len() long.
    pub components: [Vec<f64>; 3],
}

impl VectorField3 {
    pub fn zeros(grid: Grid3) -> Self {
        VectorField3 {
            grid,
            components: [
                vec![0.0; grid.len()],
                vec![0.0; grid.len()],
                vec![0.0; grid.len()],
            ],
        }
    }

    pub fn from_fn(grid: Grid3, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for i in 0..grid.len() {
            let v = f(grid.point(i));
            for a in 0..3 {
                out.components[a][i] = v[a];
            }
        }
        out
    }

    pub fn gather(&self, p: [f64; 3]) -> [f64; 3] {
        let (base, frac) = cic_base(&self.grid, p);
        let mut acc = [0.0; 3];
        for (flat, w) in cic_stencil(&self.grid, base, frac) {
            for a in 0..3 {
                acc[a] += w * self.components[a][flat];
            }
        }
        acc
    }

    pub fn value(&self, flat: usize) -> [f64; 3] {
        [
            self.components[0][flat],
            self.components[1][flat],
            self.components[2][flat],
        ]
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.grid.len()).fold(0.0f64, |m, i| {
            let v = self.value(i);
            m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        })
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let mut interleaved = Vec::with_capacity(3 * self.grid.len());
        for i in 0..self.grid.len() {
            for a in 0..3 {
                interleaved.push(self.components[a][i]);
            }
        }
        write_field_payload(&mut w, &self.grid, 3, &interleaved)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<VectorField3> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let (grid, ncomp, interleaved) = read_field_payload(&mut r)?;
        if ncomp != 3 {
            return Err(VpError::InvalidArgument(format!(
                "expected vector field, found {ncomp} components"
            )));
        }
        let mut out = VectorField3::zeros(grid);
        for i in 0..grid.len() {
            for a in 0..3 {
                out.components[a][i] = interleaved[3 * i + a];
            }
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,y,z,fx,fy,fz")?;
        for i in 0..self.grid.len() {
            let p = self.grid.point(i);
            let v = self.value(i);
            writeln!(w, "{},{},{},{},{},{}", p[0], p[1], p[2], v[0], v[1], v[2])?;
        }
        Ok(())
    }
}

/// Binary field layout, all little-endian:
///   magic "VPF1" (4 bytes), component count u32,
///   origin 3xf64, spacing 3xf64, dims 3xu64, then values f64
///   (row major, z fastest, components interleaved).
fn write_field_payload<W: Write>(w: &mut W, grid: &Grid3, ncomp: u32, values: &[f64]) -> Result<()> {
    w.write_all(b"VPF1")?;
    w.write_all(&ncomp.to_le_bytes())?;
    for a in 0..3 {
        w.write_all(&grid.origin[a].to_le_bytes())?;
    }
    for a in 0..3 {
        w.write_all(&grid.spacing[a].to_le_bytes())?;
    }
    for a in 0..3 {
        w.write_all(&(grid.dims[a] as u64).to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_field_payload<R: Read>(r: &mut R) -> Result<(Grid3, u32, Vec<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"VPF1" {
        return Err(VpError::InvalidArgument("bad field file magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let ncomp = u32::from_le_bytes(b4);
    let mut f = || -> Result<f64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    };
    let origin = [f()?, f()?, f()?];
    let spacing = [f()?, f()?, f()?];
    let mut u = || -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let dims = [u()? as usize, u()? as usize, u()? as usize];
    let grid = Grid3 {
        origin,
        spacing,
        dims,
    };
    let n = grid.len() * ncomp as usize;
    let mut values = Vec::with_capacity(n);
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    for c in buf.chunks_exact(8) {
        values.push(f64::from_le_bytes(c.try_into().unwrap()));
    }
    Ok((grid, ncomp, values))
}

pub(crate) fn cic_base(grid: &Grid3, p: [f64; 3]) -> ([usize; 3], [f64; 3]) {
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let s = (p[a] - grid.origin[a]) / grid.spacing[a];
        let s = s.clamp(0.0, (grid.dims[a] - 1) as f64 - 1e-12);
        let i = s.floor();
        base[a] = i as usize;
        frac[a] = s - i;
    }
    (base, frac)
}

pub(crate) fn cic_stencil(
    grid: &Grid3,
    base: [usize; 3],
    frac: [f64; 3],
) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..8usize).filter_map(move |corner| {
        let mut idx = [0usize; 3];
        let mut w = 1.0;
        for a in 0..3 {
            let hi = (corner >> a) & 1 == 1;
            let i = base[a] + hi as usize;
            if i >= grid.dims[a] {
                return None;
            }
            idx[a] = i;
            w *= if hi { frac[a] } else { 1.0 - frac[a] };
        }
        (w != 0.0).then(|| (grid.flat(idx[0], idx[1], idx[2]), w))
    })
}

/// Cloud-in-cell deposit of weighted points; returns raw weight sums per
/// node (divide by cell volume for a density).  Points outside the grid
/// hull are clamped onto it when `clamp` is set, otherwise dropped.
pub fn deposit_cic(
    grid: Grid3,
    points: impl Iterator<Item = ([f64; 3], f64)>,
    clamp: bool,
) -> ScalarField3 {
    let mut out = ScalarField3::zeros(grid);
    for (p, w) in points {
        if !clamp {
            let mut inside = true;
            for a in 0..3 {
                let s = (p[a] - grid.origin[a]) / grid.spacing[a];
                if s < -0.5 || s > (grid.dims[a] - 1) as f64 + 0.5 {
                    inside = false;
                    break;
                }
            }
            if !inside {
                continue;
            }
        }
        let (base, frac) = cic_base(&grid, p);
        for (flat, wt) in cic_stencil(&grid, base, frac) {
            out.values[flat] += w * wt;
        }
    }
    out
}
