//! Binary spinor-field files with a JSON sidecar.
//!
//! Layout, all little-endian:
//!
//! | bytes            | content                                    |
//! |------------------|--------------------------------------------|
//! | 4                | magic `SPF1`                               |
//! | 4                | `n` as u32                                 |
//! | 4 n              | grid sizes as u32                          |
//! | 8 n              | spin offsets `delta` as f64                |
//! | 8 n^2            | lattice matrix, row-major f64 (columns are the basis vectors) |
//! | 4                | fiber dimension as u32                     |
//! | 16 * points * fiber | samples: points in lexicographic grid order, components inner, each `re, im` f64 |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clifford::FIBER_DIM;
use crate::torus::{SpinorField, TorusSpinGeometry};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPF1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub n: usize,
    pub grid: Vec<usize>,
    pub delta: Vec<f64>,
    /// Row-major lattice matrix.
    pub lattice: Vec<f64>,
    pub fiber_dim: usize,
}

impl FieldHeader {
    pub fn for_geometry(geom: &TorusSpinGeometry) -> Self {
        let n = geom.dim();
        let l = geom.lattice();
        Self {
            n,
            grid: geom.grid().to_vec(),
            delta: geom.delta().to_vec(),
            lattice: (0..n).flat_map(|r| (0..n).map(move |c| l[(r, c)])).collect(),
            fiber_dim: FIBER_DIM,
        }
    }

    pub fn geometry(&self) -> Result<TorusSpinGeometry> {
        let lattice = DMatrix::from_row_slice(self.n, self.n, &self.lattice);
        TorusSpinGeometry::new(lattice, &self.delta, &self.grid)
    }

    pub fn num_points(&self) -> usize {
        self.grid.iter().product()
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn write_field<W: Write>(w: &mut W, geom: &TorusSpinGeometry, field: &SpinorField) -> Result<()> {
    if field.grid() != geom.grid() {
        return Err(Error::GeometryMismatch);
    }
    let h = FieldHeader::for_geometry(geom);
    w.write_all(MAGIC)?;
    put_u32(w, h.n)?;
    for &g in &h.grid {
        put_u32(w, g)?;
    }
    for v in h.delta.iter().chain(&h.lattice) {
        w.write_all(&v.to_le_bytes())?;
    }
    put_u32(w, h.fiber_dim)?;
    let points = field.num_points();
    let data = field.data();
    for p in 0..points {
        for c in 0..FIBER_DIM {
            let z = data[c * points + p];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field<R: Read>(r: &mut R) -> Result<(FieldHeader, SpinorField)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let n = get_u32(r)?;
    if !(2..=3).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    let grid = (0..n).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
    let delta = (0..n).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    let lattice = (0..n * n).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    let fiber_dim = get_u32(r)?;
    if fiber_dim != FIBER_DIM {
        return Err(Error::Format(format!("fiber dimension {fiber_dim}, expected {FIBER_DIM}")));
    }
    let header = FieldHeader { n, grid, delta, lattice, fiber_dim };
    let points = header.num_points();
    let mut data = vec![Complex64::new(0.0, 0.0); points * fiber_dim];
    for p in 0..points {
        for c in 0..fiber_dim {
            let re = get_f64(r)?;
            let im = get_f64(r)?;
            data[c * points + p] = Complex64::new(re, im);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let field = SpinorField::from_data(&header.grid, data)?;
    Ok((header, field))
}

/// Path of the JSON sidecar next to a field file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the binary file and its sidecar.
pub fn save_field(path: &Path, geom: &TorusSpinGeometry, field: &SpinorField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, geom, field)?;
    w.flush()?;
    let header = FieldHeader::for_geometry(geom);
    let json = serde_json::to_string_pretty(&header).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads a field file, checking the sidecar when present.
pub fn load_field(path: &Path) -> Result<(FieldHeader, SpinorField)> {
    let (header, field) = read_field(&mut BufReader::new(File::open(path)?))?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = std::fs::read_to_string(side)?;
        let meta: FieldHeader = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if meta != header {
            return Err(Error::Format("sidecar disagrees with binary header".into()));
        }
    }
    Ok((header, field))
}
