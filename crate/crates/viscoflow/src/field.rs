//! Field storage: scalar, vector, and tensor samples on a periodic grid.
//!
//! Storage is structure-of-arrays, one flat row-major allocation per
//! component, which keeps stencil sweeps contiguous. Tensor components are
//! ordered `(i, j)` with `i` the row, so `T[i][j]` houses quantities like
//! `(grad u)_ij = d u_i / d x_j`.

use rayon::prelude::*;

use crate::error::Error;
use crate::grid::Grid;
use crate::reduce;

/// Dense 3x3 scratch matrix; 2-D fields use the top-left block.
pub type Mat3 = [[f64; 3]; 3];

pub fn mat_identity(dim: usize) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for a in 0..dim {
        m[a][a] = 1.0;
    }
    m
}

pub fn mat_mul(dim: usize, a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            let mut s = 0.0;
            for k in 0..dim {
                s += a[i][k] * b[k][j];
            }
            c[i][j] = s;
        }
    }
    c
}

pub fn mat_det(dim: usize, m: &Mat3) -> f64 {
    match dim {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

pub fn mat_frobenius(dim: usize, m: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += m[i][j] * m[i][j];
        }
    }
    s.sqrt()
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn mat_expm(dim: usize, m: &Mat3) -> Mat3 {
    let norm = (0..dim)
        .map(|i| (0..dim).map(|j| m[i][j].abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings as i32);
    let mut b = *m;
    for r in b.iter_mut().take(dim) {
        for v in r.iter_mut().take(dim) {
            *v *= scale;
        }
    }
    // Taylor series converges fast once the scaled norm is below 1/2.
    let mut result = mat_identity(dim);
    let mut term = mat_identity(dim);
    for k in 1..=16 {
        term = mat_mul(dim, &term, &b);
        let inv = 1.0 / (k as f64);
        for i in 0..dim {
            for j in 0..dim {
                term[i][j] *= inv;
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mat_mul(dim, &result, &result);
    }
    result
}

fn check_finite(what: &str, slices: &[&[f64]]) -> Result<(), Error> {
    for s in slices {
        if let Some(index) = reduce::first_non_finite(s) {
            return Err(Error::NonFinite {
                what: what.to_string(),
                index,
            });
        }
    }
    Ok(())
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid, what: &str) -> Result<(), Error> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "{what}: operands live on different grids"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scalar field
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            data: vec![0.0; grid.points()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            data: vec![c; grid.points()],
        }
    }

    /// Evaluate `f` at every node position.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64 + Sync) -> Self {
        let mut data = vec![0.0; grid.points()];
        data.par_iter_mut().enumerate().for_each(|(idx, v)| {
            *v = f(grid.position(grid.coords(idx)));
        });
        ScalarField { grid, data }
    }

    pub fn from_data(grid: Grid, data: Vec<f64>) -> Result<Self, Error> {
        if data.len() != grid.points() {
            return Err(Error::ShapeMismatch(format!(
                "scalar field: {} samples for a grid of {} points",
                data.len(),
                grid.points()
            )));
        }
        Ok(ScalarField { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn min(&self) -> f64 {
        reduce::min(&self.data)
    }

    pub fn max(&self) -> f64 {
        reduce::max(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        reduce::max_abs(&self.data)
    }

    pub fn validate_finite(&self, what: &str) -> Result<(), Error> {
        check_finite(what, &[&self.data])
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField, Error> {
        check_same_grid(&self.grid, &other.grid, "sub")?;
        let mut out = self.clone();
        out.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(x, y)| *x -= *y);
        Ok(out)
    }

    /// Fails naming the first offending cell if any sample is `<= 0`.
    pub fn validate_positive(&self) -> Result<(), Error> {
        if let Some((index, &value)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0))
        {
            return Err(Error::NonPositiveDensity { index, value });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Vector field
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            comps: vec![vec![0.0; grid.points()]; grid.dim()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3] + Sync) -> Self {
        let mut out = Self::zeros(grid);
        let points = grid.points();
        for c in 0..grid.dim() {
            let data = &mut out.comps[c];
            data.par_iter_mut().enumerate().for_each(|(idx, v)| {
                *v = f(grid.position(grid.coords(idx)))[c];
            });
            debug_assert_eq!(data.len(), points);
        }
        out
    }

    pub fn from_comps(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self, Error> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.points()) {
            return Err(Error::ShapeMismatch(
                "vector field: component count or sample count does not match grid".into(),
            ));
        }
        Ok(VectorField { grid, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// Vector value at a node.
    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for c in 0..self.grid.dim() {
            v[c] = self.comps[c][idx];
        }
        v
    }

    pub fn validate_finite(&self, what: &str) -> Result<(), Error> {
        let slices: Vec<&[f64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        check_finite(what, &slices)
    }

    /// Largest pointwise Euclidean magnitude.
    pub fn max_magnitude(&self) -> f64 {
        let dim = self.grid.dim();
        (0..self.grid.points())
            .into_par_iter()
            .map(|idx| {
                let mut s = 0.0;
                for c in 0..dim {
                    s += self.comps[c][idx] * self.comps[c][idx];
                }
                s
            })
            .reduce(|| 0.0, f64::max)
            .sqrt()
    }

    /// `self + alpha * other`, componentwise.
    pub fn axpy(&self, alpha: f64, other: &VectorField) -> Result<VectorField, Error> {
        check_same_grid(&self.grid, &other.grid, "axpy")?;
        let mut out = self.clone();
        for c in 0..self.grid.dim() {
            out.comps[c]
                .par_iter_mut()
                .zip(other.comps[c].par_iter())
                .for_each(|(x, y)| *x += alpha * *y);
        }
        Ok(out)
    }

    pub fn scale(&self, alpha: f64) -> VectorField {
        let mut out = self.clone();
        for c in 0..self.grid.dim() {
            out.comps[c].par_iter_mut().for_each(|x| *x *= alpha);
        }
        out
    }

    /// Deterministic Euclidean inner product over all components.
    pub fn dot(&self, other: &VectorField) -> Result<f64, Error> {
        check_same_grid(&self.grid, &other.grid, "dot")?;
        let mut s = 0.0;
        for c in 0..self.grid.dim() {
            s += reduce::dot(&self.comps[c], &other.comps[c]);
        }
        Ok(s)
    }

    pub fn norm_l2(&self) -> f64 {
        let mut s = 0.0;
        for c in 0..self.grid.dim() {
            s += reduce::dot(&self.comps[c], &self.comps[c]);
        }
        s.sqrt()
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField, Error> {
        self.axpy(-1.0, other)
    }
}

// ---------------------------------------------------------------------------
// Tensor field
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    comps: Vec<Vec<f64>>, // component (i, j) at i * dim + j
}

impl TensorField {
    pub fn zeros(grid: Grid) -> Self {
        TensorField {
            comps: vec![vec![0.0; grid.points()]; grid.dim() * grid.dim()],
            grid,
        }
    }

    /// The identity tensor at every node.
    pub fn identity(grid: Grid) -> Self {
        let mut t = Self::zeros(grid);
        for a in 0..grid.dim() {
            let d = grid.dim();
            t.comps[a * d + a].par_iter_mut().for_each(|v| *v = 1.0);
        }
        t
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> Mat3 + Sync) -> Self {
        let mut out = Self::zeros(grid);
        let dim = grid.dim();
        for i in 0..dim {
            for j in 0..dim {
                out.comps[i * dim + j]
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(idx, v)| {
                        *v = f(grid.position(grid.coords(idx)))[i][j];
                    });
            }
        }
        out
    }

    pub fn from_comps(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self, Error> {
        if comps.len() != grid.dim() * grid.dim()
            || comps.iter().any(|c| c.len() != grid.points())
        {
            return Err(Error::ShapeMismatch(
                "tensor field: component count or sample count does not match grid".into(),
            ));
        }
        Ok(TensorField { grid, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn comp(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[i * self.grid.dim() + j]
    }

    pub fn comp_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.comps[i * d + j]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    /// Matrix value at a node, padded with zeros outside `dim`.
    #[inline]
    pub fn mat_at(&self, idx: usize) -> Mat3 {
        let dim = self.grid.dim();
        let mut m = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] = self.comps[i * dim + j][idx];
            }
        }
        m
    }

    pub fn set_mat(&mut self, idx: usize, m: &Mat3) {
        let dim = self.grid.dim();
        for i in 0..dim {
            for j in 0..dim {
                self.comps[i * dim + j][idx] = m[i][j];
            }
        }
    }

    /// Pointwise determinant.
    pub fn det_field(&self) -> ScalarField {
        let grid = self.grid;
        let dim = grid.dim();
        let mut out = ScalarField::zeros(grid);
        out.data_mut()
            .par_iter_mut()
            .enumerate()
            .for_each(|(idx, v)| {
                *v = mat_det(dim, &self.mat_at(idx));
            });
        out
    }

    pub fn validate_finite(&self, what: &str) -> Result<(), Error> {
        let slices: Vec<&[f64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        check_finite(what, &slices)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| reduce::max_abs(c))
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField, Error> {
        check_same_grid(&self.grid, &other.grid, "sub")?;
        let mut out = self.clone();
        for c in 0..self.comps.len() {
            out.comps[c]
                .par_iter_mut()
                .zip(other.comps[c].par_iter())
                .for_each(|(x, y)| *x -= *y);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_fn_places_samples_at_positions() {
        let g = Grid::cubic(2, 16).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0].sin());
        let idx = g.index([3, 5, 0]);
        let x = g.position([3, 5, 0]);
        assert_eq!(f.data()[idx], x[0].sin());
    }

    #[test]
    fn tensor_component_order_is_row_major() {
        let g = Grid::cubic(2, 8).unwrap();
        let t = TensorField::from_fn(g, |_| [[1.0, 2.0, 0.0], [3.0, 4.0, 0.0], [0.0; 3]]);
        assert_eq!(t.comp(0, 1)[0], 2.0);
        assert_eq!(t.comp(1, 0)[0], 3.0);
        let m = t.mat_at(0);
        assert_eq!(m[0][1], 2.0);
    }

    #[test]
    fn det_of_identity_is_one() {
        let g = Grid::cubic(3, 8).unwrap();
        let t = TensorField::identity(g);
        let d = t.det_field();
        assert!(d.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn expm_of_antisymmetric_is_rotation() {
        // exp of a rotation generator has orthonormal columns.
        let w = 0.7f64;
        let m = [[0.0, -w, 0.0], [w, 0.0, 0.0], [0.0; 3]];
        let e = mat_expm(2, &m);
        assert!((e[0][0] - w.cos()).abs() < 1e-14);
        assert!((e[1][0] - w.sin()).abs() < 1e-14);
        let det = mat_det(2, &e);
        assert!((det - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_detected() {
        let g = Grid::cubic(2, 8).unwrap();
        let mut f = ScalarField::zeros(g);
        f.data_mut()[17] = f64::NAN;
        assert!(matches!(
            f.validate_finite("test"),
            Err(Error::NonFinite { index: 17, .. })
        ));
    }
}
