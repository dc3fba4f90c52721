//! Periodic structured grid: the index arithmetic every field and stencil
//! shares.
//!
//! The domain is the torus `[0, L_a)` per axis; every axis wraps modulo its
//! cell count and no ghost layers are ever exposed.

use crate::error::Error;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Uniform periodic grid in two or three dimensions.
///
/// Unused axes (the third axis of a 2-D grid) carry a single cell so that
/// index arithmetic is uniform across dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; 3],
    length: [f64; 3],
    h: [f64; 3],
}

impl Grid {
    /// Build a grid with explicit per-axis cell counts and extents.
    ///
    /// Cell counts must be powers of two with at least 8 cells per active
    /// axis; extents must be positive.
    pub fn new(dim: usize, n: &[usize], length: &[f64]) -> Result<Self, Error> {
        if dim != 2 && dim != 3 {
            return Err(Error::Grid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n.len() != dim || length.len() != dim {
            return Err(Error::Grid(format!(
                "expected {dim} cell counts and extents, got {} and {}",
                n.len(),
                length.len()
            )));
        }
        let mut nn = [1usize; 3];
        let mut ll = [1.0f64; 3];
        let mut hh = [1.0f64; 3];
        for a in 0..dim {
            if !n[a].is_power_of_two() || n[a] < 8 {
                return Err(Error::Grid(format!(
                    "axis {a}: cell count {} must be a power of two >= 8",
                    n[a]
                )));
            }
            if !(length[a] > 0.0) || !length[a].is_finite() {
                return Err(Error::Grid(format!(
                    "axis {a}: extent {} must be positive and finite",
                    length[a]
                )));
            }
            nn[a] = n[a];
            ll[a] = length[a];
            hh[a] = length[a] / n[a] as f64;
        }
        Ok(Grid {
            dim,
            n: nn,
            length: ll,
            h: hh,
        })
    }

    /// Grid on `[0, 2*pi)^dim` with `n` cells per axis.
    pub fn cubic(dim: usize, n: usize) -> Result<Self, Error> {
        Self::new(dim, &vec![n; dim], &vec![TWO_PI; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cell count along `axis` (1 for the inactive axis of a 2-D grid).
    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.length[axis]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn min_h(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).fold(f64::MAX, f64::min)
    }

    pub fn min_length(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.length[a])
            .fold(f64::MAX, f64::min)
    }

    /// Total number of grid points.
    pub fn points(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Cell volume `h_1 * ... * h_dim`, the midpoint-rule quadrature weight.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.length[a]).product()
    }

    /// Linear index of the point `(i, j, k)`; the first axis varies fastest.
    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        (ijk[2] * self.n[1] + ijk[1]) * self.n[0] + ijk[0]
    }

    /// Inverse of [`Grid::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let r = idx / self.n[0];
        [i, r % self.n[1], r / self.n[1]]
    }

    /// Physical position of a node.
    #[inline]
    pub fn position(&self, ijk: [usize; 3]) -> [f64; 3] {
        [
            ijk[0] as f64 * self.h[0],
            ijk[1] as f64 * self.h[1],
            ijk[2] as f64 * self.h[2],
        ]
    }

    /// Wrap a (possibly negative) index onto the axis.
    #[inline]
    pub fn wrap(&self, i: isize, axis: usize) -> usize {
        let n = self.n[axis] as isize;
        i.rem_euclid(n) as usize
    }

    /// Wrap a physical coordinate into `[0, L_a)`.
    #[inline]
    pub fn wrap_coord(&self, x: f64, axis: usize) -> f64 {
        let l = self.length[axis];
        let w = x.rem_euclid(l);
        // rem_euclid can return l itself when x is a tiny negative number.
        if w >= l {
            0.0
        } else {
            w
        }
    }

    /// Strides of the three axes in the linear layout.
    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [1, self.n[0], self.n[0] * self.n[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(1, &[16], &[1.0]).is_err());
        assert!(Grid::new(2, &[16, 12], &[1.0, 1.0]).is_err());
        assert!(Grid::new(2, &[16, 4], &[1.0, 1.0]).is_err());
        assert!(Grid::new(2, &[16, 16], &[1.0, -1.0]).is_err());
        assert!(Grid::new(3, &[8, 8, 8], &[1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(3, &[8, 16, 32], &[1.0, 1.0, 1.0]).unwrap();
        for idx in [0, 1, 7, 8, 4095, g.points() - 1] {
            assert_eq!(g.index(g.coords(idx)), idx);
        }
    }

    #[test]
    fn wrapping() {
        let g = Grid::cubic(2, 16).unwrap();
        assert_eq!(g.wrap(-1, 0), 15);
        assert_eq!(g.wrap(16, 0), 0);
        assert_eq!(g.wrap(-17, 1), 15);
        let x = g.wrap_coord(-0.25, 0);
        assert!((0.0..g.length(0)).contains(&x));
        assert!((x - (TWO_PI - 0.25)).abs() < 1e-12);
        // A tiny negative coordinate must not wrap to L itself.
        let y = g.wrap_coord(-1e-18, 0);
        assert!((0.0..g.length(0)).contains(&y));
    }

    #[test]
    fn two_d_grid_has_singleton_third_axis() {
        let g = Grid::cubic(2, 32).unwrap();
        assert_eq!(g.n(2), 1);
        assert_eq!(g.points(), 32 * 32);
        assert!((g.cell_volume() - (TWO_PI / 32.0).powi(2)).abs() < 1e-15);
    }
}
