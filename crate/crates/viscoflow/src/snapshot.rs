//! Raw field dumps and state snapshots.
//!
//! A dump is one ASCII header line `dim n1 n2 n3 ncomp time` followed by
//! little-endian float64 samples, row-major over grid points with
//! components innermost (the first axis varies fastest). Snapshots write
//! one dump per field plus a manifest line in `snapshots.index`, and
//! round-trip bit-exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::{Grid, TWO_PI};
use crate::stepper::State;

#[derive(Debug, Clone, PartialEq)]
pub struct RawHeader {
    pub dim: usize,
    pub n: [usize; 3],
    pub ncomp: usize,
    pub time: f64,
}

/// Write one field dump: components interleaved per point.
pub fn write_field_raw(
    path: &Path,
    grid: &Grid,
    comps: &[&[f64]],
    time: f64,
) -> Result<(), Error> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "{} {} {} {} {} {:.16e}\n",
        grid.dim(),
        grid.n(0),
        grid.n(1),
        grid.n(2),
        comps.len(),
        time
    );
    w.write_all(header.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    let npts = grid.points();
    let mut buf = Vec::with_capacity(npts * comps.len() * 8);
    for idx in 0..npts {
        for c in comps {
            buf.extend_from_slice(&c[idx].to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a dump back; returns the header and per-component columns.
pub fn read_field_raw(path: &Path) -> Result<(RawHeader, Vec<Vec<f64>>), Error> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header_bytes = Vec::new();
    loop {
        let mut b = [0u8; 1];
        r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
        if b[0] == b'\n' {
            break;
        }
        header_bytes.push(b[0]);
        if header_bytes.len() > 256 {
            return Err(Error::Snapshot(format!(
                "{}: header line exceeds 256 bytes",
                path.display()
            )));
        }
    }
    let header_line = String::from_utf8(header_bytes)
        .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?;
    let parts: Vec<&str> = header_line.split_whitespace().collect();
    if parts.len() != 6 {
        return Err(Error::Snapshot(format!(
            "{}: expected 6 header fields, got {}",
            path.display(),
            parts.len()
        )));
    }
    let parse = |s: &str| -> Result<usize, Error> {
        s.parse()
            .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))
    };
    let header = RawHeader {
        dim: parse(parts[0])?,
        n: [parse(parts[1])?, parse(parts[2])?, parse(parts[3])?],
        ncomp: parse(parts[4])?,
        time: parts[5]
            .parse()
            .map_err(|e| Error::Snapshot(format!("{}: {e}", path.display())))?,
    };
    let npts = header.n[0] * header.n[1] * header.n[2];
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.len() != npts * header.ncomp * 8 {
        return Err(Error::Snapshot(format!(
            "{}: expected {} data bytes, got {}",
            path.display(),
            npts * header.ncomp * 8,
            raw.len()
        )));
    }
    let mut comps = vec![vec![0.0f64; npts]; header.ncomp];
    for idx in 0..npts {
        for (c, comp) in comps.iter_mut().enumerate() {
            let off = (idx * header.ncomp + c) * 8;
            comp[idx] = f64::from_le_bytes(raw[off..off + 8].try_into().unwrap());
        }
    }
    Ok((header, comps))
}

fn grid_from_header(h: &RawHeader, reference: Option<&Grid>) -> Result<Grid, Error> {
    if let Some(g) = reference {
        if g.dim() != h.dim || (0..3).any(|a| g.n(a) != h.n[a]) {
            return Err(Error::Snapshot(format!(
                "dump shape {}x{}x{} (dim {}) does not match the configured grid",
                h.n[0], h.n[1], h.n[2], h.dim
            )));
        }
        return Ok(*g);
    }
    // The dump header does not carry extents; default to the 2*pi box.
    Grid::new(h.dim, &h.n[..h.dim], &vec![TWO_PI; h.dim])
}

pub fn read_scalar(path: &Path, grid: &Grid) -> Result<ScalarField, Error> {
    let (h, mut comps) = read_field_raw(path)?;
    let g = grid_from_header(&h, Some(grid))?;
    if h.ncomp != 1 {
        return Err(Error::Snapshot(format!(
            "{}: expected 1 component, got {}",
            path.display(),
            h.ncomp
        )));
    }
    ScalarField::from_data(g, comps.remove(0))
}

pub fn read_vector(path: &Path, grid: &Grid) -> Result<VectorField, Error> {
    let (h, comps) = read_field_raw(path)?;
    let g = grid_from_header(&h, Some(grid))?;
    if h.ncomp != g.dim() {
        return Err(Error::Snapshot(format!(
            "{}: expected {} components, got {}",
            path.display(),
            g.dim(),
            h.ncomp
        )));
    }
    VectorField::from_comps(g, comps)
}

pub fn read_tensor(path: &Path, grid: &Grid) -> Result<TensorField, Error> {
    let (h, comps) = read_field_raw(path)?;
    let g = grid_from_header(&h, Some(grid))?;
    if h.ncomp != g.dim() * g.dim() {
        return Err(Error::Snapshot(format!(
            "{}: expected {} components, got {}",
            path.display(),
            g.dim() * g.dim(),
            h.ncomp
        )));
    }
    TensorField::from_comps(g, comps)
}

/// File set of one snapshot: `<prefix>_rho.raw`, `<prefix>_u.raw`,
/// `<prefix>_F.raw` under `dir`, plus a manifest line.
pub fn write_snapshot(state: &State, dir: &Path, index: usize) -> Result<Vec<PathBuf>, Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = state.grid();
    let prefix = format!("snap_{index:06}");
    let rho_path = dir.join(format!("{prefix}_rho.raw"));
    let u_path = dir.join(format!("{prefix}_u.raw"));
    let f_path = dir.join(format!("{prefix}_F.raw"));
    write_field_raw(&rho_path, grid, &[state.rho.data()], state.t)?;
    let u_comps: Vec<&[f64]> = state.u.comps().iter().map(|c| c.as_slice()).collect();
    write_field_raw(&u_path, grid, &u_comps, state.t)?;
    let f_comps: Vec<&[f64]> = state.f.comps().iter().map(|c| c.as_slice()).collect();
    write_field_raw(&f_path, grid, &f_comps, state.t)?;

    let index_path = dir.join("snapshots.index");
    let mut manifest = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&index_path)
        .map_err(|e| Error::io(&index_path, e))?;
    writeln!(
        manifest,
        "{index} {:.16e} {prefix}_rho.raw {prefix}_u.raw {prefix}_F.raw",
        state.t
    )
    .map_err(|e| Error::io(&index_path, e))?;
    Ok(vec![rho_path, u_path, f_path])
}

/// Load a snapshot from its path prefix (`dir/snap_000003`). The box
/// extent is not stored in dumps; pass `length` for non-default boxes.
pub fn read_snapshot(prefix: &Path, length: Option<&[f64]>) -> Result<State, Error> {
    let with = |suffix: &str| -> PathBuf {
        let mut s = prefix.as_os_str().to_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    let (h, mut rho_comps) = read_field_raw(&with("_rho.raw"))?;
    let grid = match length {
        Some(l) => Grid::new(h.dim, &h.n[..h.dim], l)?,
        None => grid_from_header(&h, None)?,
    };
    let rho = ScalarField::from_data(grid, rho_comps.remove(0))?;
    let u = read_vector(&with("_u.raw"), &grid)?;
    let f = read_tensor(&with("_F.raw"), &grid)?;
    State::new(h.time, rho, u, f)
}
