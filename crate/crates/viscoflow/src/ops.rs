//! Finite-difference calculus on periodic grids: gradient, divergence,
//! Laplacian, tensor divergence, and the discrete norms.
//!
//! All derivatives use 4th-order central stencils with periodic wrap, so
//! operators stay local and every output point can be computed
//! independently. Spectral differentiation exists only as a test oracle.

use rayon::prelude::*;

use crate::error::Error;
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::reduce;

#[derive(Clone, Copy)]
enum Kernel {
    /// `(8 (f_{+1} - f_{-1}) - (f_{+2} - f_{-2})) / (12 h)`
    First,
    /// `(16 ((f_{+1} - f) + (f_{-1} - f)) - ((f_{+2} - f) + (f_{-2} - f))) / (12 h^2)`
    Second,
}

impl Kernel {
    /// Paired so that constant data cancels to exactly zero.
    #[inline]
    fn eval(self, m2: f64, m1: f64, f0: f64, p1: f64, p2: f64, scale: f64) -> f64 {
        match self {
            Kernel::First => scale * (8.0 * (p1 - m1) - (p2 - m2)),
            Kernel::Second => {
                scale * (16.0 * ((p1 - f0) + (m1 - f0)) - ((p2 - f0) + (m2 - f0)))
            }
        }
    }
}

/// Apply a 5-point stencil along one axis with periodic wrap.
fn stencil_axis(grid: &Grid, data: &[f64], axis: usize, kernel: Kernel, scale: f64) -> Vec<f64> {
    let n = [grid.n(0), grid.n(1), grid.n(2)];
    let mut out = vec![0.0; data.len()];
    if n[axis] == 1 {
        // Inactive axis of a 2-D grid: derivative is zero.
        return out;
    }
    let nx = n[0];
    let na = n[axis] as isize;

    match axis {
        0 => {
            // Wrap tables along the contiguous axis, shared by every row.
            let mut tap = vec![[0usize; 4]; nx];
            for (i, t) in tap.iter_mut().enumerate() {
                let i = i as isize;
                *t = [
                    (i - 2).rem_euclid(na) as usize,
                    (i - 1).rem_euclid(na) as usize,
                    (i + 1).rem_euclid(na) as usize,
                    (i + 2).rem_euclid(na) as usize,
                ];
            }
            out.par_chunks_mut(nx).enumerate().for_each(|(r, row)| {
                let base = r * nx;
                let src = &data[base..base + nx];
                for i in 0..nx {
                    let t = &tap[i];
                    row[i] = kernel.eval(src[t[0]], src[t[1]], src[i], src[t[2]], src[t[3]], scale);
                }
            });
        }
        _ => {
            out.par_chunks_mut(nx).enumerate().for_each(|(r, row)| {
                let (j, k) = (r % n[1], r / n[1]);
                let c = if axis == 1 { j } else { k } as isize;
                let mut bases = [0usize; 5];
                for (m, off) in (-2isize..=2).enumerate() {
                    let cw = (c + off).rem_euclid(na) as usize;
                    let (jj, kk) = if axis == 1 { (cw, k) } else { (j, cw) };
                    bases[m] = (kk * n[1] + jj) * nx;
                }
                for i in 0..nx {
                    row[i] = kernel.eval(
                        data[bases[0] + i],
                        data[bases[1] + i],
                        data[bases[2] + i],
                        data[bases[3] + i],
                        data[bases[4] + i],
                        scale,
                    );
                }
            });
        }
    }
    out
}

/// First derivative along `axis`, 4th order.
pub(crate) fn diff1(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    stencil_axis(grid, data, axis, Kernel::First, 1.0 / (12.0 * grid.h(axis)))
}

/// Second derivative along `axis`, 4th order.
pub(crate) fn diff2(grid: &Grid, data: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.h(axis);
    stencil_axis(grid, data, axis, Kernel::Second, 1.0 / (12.0 * h * h))
}

/// Gradient of a scalar field.
pub fn apply_gradient(f: &ScalarField) -> Result<VectorField, Error> {
    let grid = *f.grid();
    let comps = (0..grid.dim())
        .map(|a| diff1(&grid, f.data(), a))
        .collect();
    let out = VectorField::from_comps(grid, comps)?;
    out.validate_finite("apply_gradient output")?;
    Ok(out)
}

/// Divergence of a vector field.
pub fn apply_divergence(v: &VectorField) -> Result<ScalarField, Error> {
    let grid = *v.grid();
    let mut acc = diff1(&grid, v.comp(0), 0);
    for a in 1..grid.dim() {
        let d = diff1(&grid, v.comp(a), a);
        acc.par_iter_mut().zip(d.par_iter()).for_each(|(x, y)| *x += *y);
    }
    let out = ScalarField::from_data(grid, acc)?;
    out.validate_finite("apply_divergence output")?;
    Ok(out)
}

/// Componentwise Laplacian of a scalar field.
pub fn laplacian_scalar(f: &ScalarField) -> Result<ScalarField, Error> {
    let grid = *f.grid();
    let mut acc = diff2(&grid, f.data(), 0);
    for a in 1..grid.dim() {
        let d = diff2(&grid, f.data(), a);
        acc.par_iter_mut().zip(d.par_iter()).for_each(|(x, y)| *x += *y);
    }
    let out = ScalarField::from_data(grid, acc)?;
    out.validate_finite("laplacian output")?;
    Ok(out)
}

/// Componentwise Laplacian of a vector field.
pub fn apply_laplacian(v: &VectorField) -> Result<VectorField, Error> {
    let grid = *v.grid();
    let mut comps = Vec::with_capacity(grid.dim());
    for c in 0..grid.dim() {
        let mut acc = diff2(&grid, v.comp(c), 0);
        for a in 1..grid.dim() {
            let d = diff2(&grid, v.comp(c), a);
            acc.par_iter_mut().zip(d.par_iter()).for_each(|(x, y)| *x += *y);
        }
        comps.push(acc);
    }
    let out = VectorField::from_comps(grid, comps)?;
    out.validate_finite("apply_laplacian output")?;
    Ok(out)
}

/// Row-wise divergence of a tensor field: `(div T)_i = d_j T_ij`.
pub fn apply_tensor_divergence(t: &TensorField) -> Result<VectorField, Error> {
    let grid = *t.grid();
    let mut comps = Vec::with_capacity(grid.dim());
    for i in 0..grid.dim() {
        let mut acc = diff1(&grid, t.comp(i, 0), 0);
        for j in 1..grid.dim() {
            let d = diff1(&grid, t.comp(i, j), j);
            acc.par_iter_mut().zip(d.par_iter()).for_each(|(x, y)| *x += *y);
        }
        comps.push(acc);
    }
    let out = VectorField::from_comps(grid, comps)?;
    out.validate_finite("apply_tensor_divergence output")?;
    Ok(out)
}

/// Velocity gradient tensor `(grad v)_ij = d v_i / d x_j`.
pub fn velocity_gradient(v: &VectorField) -> Result<TensorField, Error> {
    let grid = *v.grid();
    let dim = grid.dim();
    let mut comps = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            comps.push(diff1(&grid, v.comp(i), j));
        }
    }
    let out = TensorField::from_comps(grid, comps)?;
    out.validate_finite("velocity_gradient output")?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Discrete norms
// ---------------------------------------------------------------------------

/// Norm kinds supported by [`DiscreteNorm`]. `Lq` and `W1q` require
/// `3 < q <= 6`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    L1,
    L2,
    Lq(f64),
    Linf,
    W1q(f64),
}

fn validate_q(q: f64) -> Result<(), Error> {
    if q > 3.0 && q <= 6.0 {
        Ok(())
    } else {
        Err(Error::InvalidNormOrder { q })
    }
}

/// Midpoint-rule quadrature of the pointwise Euclidean magnitude over a set
/// of components.
fn quad_norm(grid: &Grid, comps: &[&[f64]], kind: NormKind) -> Result<f64, Error> {
    let vol = grid.cell_volume();
    let npts = grid.points();
    let mag_sq = |idx: usize| -> f64 {
        let mut s = 0.0;
        for c in comps {
            s += c[idx] * c[idx];
        }
        s
    };
    let val = match kind {
        NormKind::L1 => reduce::sum_indexed(npts, |i| mag_sq(i).sqrt()) * vol,
        NormKind::L2 => (reduce::sum_indexed(npts, mag_sq) * vol).sqrt(),
        NormKind::Lq(q) => {
            validate_q(q)?;
            (reduce::sum_indexed(npts, |i| mag_sq(i).powf(q / 2.0)) * vol).powf(1.0 / q)
        }
        NormKind::Linf => (0..npts)
            .into_par_iter()
            .map(mag_sq)
            .reduce(|| 0.0, f64::max)
            .sqrt(),
        NormKind::W1q(_) => unreachable!("W1q handled by callers"),
    };
    Ok(val)
}

fn w1q_norm(grid: &Grid, comps: &[&[f64]], q: f64) -> Result<f64, Error> {
    validate_q(q)?;
    let lq = quad_norm(grid, comps, NormKind::Lq(q))?;
    let mut grads: Vec<Vec<f64>> = Vec::new();
    for c in comps {
        for a in 0..grid.dim() {
            grads.push(diff1(grid, c, a));
        }
    }
    let grad_refs: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
    let gq = quad_norm(grid, &grad_refs, NormKind::Lq(q))?;
    Ok((lq.powf(q) + gq.powf(q)).powf(1.0 / q))
}

/// Midpoint-rule discrete norms.
pub trait DiscreteNorm {
    fn discrete_norm(&self, kind: NormKind) -> Result<f64, Error>;
}

impl DiscreteNorm for ScalarField {
    fn discrete_norm(&self, kind: NormKind) -> Result<f64, Error> {
        match kind {
            NormKind::W1q(q) => w1q_norm(self.grid(), &[self.data()], q),
            k => quad_norm(self.grid(), &[self.data()], k),
        }
    }
}

impl DiscreteNorm for VectorField {
    fn discrete_norm(&self, kind: NormKind) -> Result<f64, Error> {
        let comps: Vec<&[f64]> = self.comps().iter().map(|c| c.as_slice()).collect();
        match kind {
            NormKind::W1q(q) => w1q_norm(self.grid(), &comps, q),
            k => quad_norm(self.grid(), &comps, k),
        }
    }
}

impl DiscreteNorm for TensorField {
    fn discrete_norm(&self, kind: NormKind) -> Result<f64, Error> {
        let comps: Vec<&[f64]> = self.comps().iter().map(|c| c.as_slice()).collect();
        match kind {
            NormKind::W1q(q) => w1q_norm(self.grid(), &comps, q),
            k => quad_norm(self.grid(), &comps, k),
        }
    }
}

/// Discrete `W^{2,q}` surrogate of a velocity field: `Lq` norms of the
/// field, its first derivatives, and all composed second derivatives,
/// combined in the `q`-mean.
pub fn w2q_surrogate(v: &VectorField, q: f64) -> Result<f64, Error> {
    validate_q(q)?;
    let grid = v.grid();
    let mut acc: f64 = 0.0;
    let comps: Vec<&[f64]> = v.comps().iter().map(|c| c.as_slice()).collect();
    acc += quad_norm(grid, &comps, NormKind::Lq(q))?.powf(q);
    let mut firsts: Vec<Vec<f64>> = Vec::new();
    for c in &comps {
        for a in 0..grid.dim() {
            firsts.push(diff1(grid, c, a));
        }
    }
    let first_refs: Vec<&[f64]> = firsts.iter().map(|g| g.as_slice()).collect();
    acc += quad_norm(grid, &first_refs, NormKind::Lq(q))?.powf(q);
    let mut seconds: Vec<Vec<f64>> = Vec::new();
    for g in &firsts {
        for a in 0..grid.dim() {
            seconds.push(diff1(grid, g, a));
        }
    }
    let second_refs: Vec<&[f64]> = seconds.iter().map(|g| g.as_slice()).collect();
    acc += quad_norm(grid, &second_refs, NormKind::Lq(q))?.powf(q);
    Ok(acc.powf(1.0 / q))
}
