//! Pressure law and hyperelastic closure: `P(rho) = a rho^gamma`, the
//! stored energy `W(F)`, its stress `S = dW/dF`, and the elastic source
//! `div(rho F F^T)` that feeds the momentum balance.

use rayon::prelude::*;

use crate::error::Error;
use crate::field::{check_same_grid, mat_frobenius, Mat3, ScalarField, TensorField, VectorField};
use crate::ops;

/// Barotropic gamma-law pressure, strictly increasing and convex on
/// `rho > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    a: f64,
    gamma: f64,
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw { a: 1.0, gamma: 1.4 }
    }
}

impl PressureLaw {
    pub fn new(a: f64, gamma: f64) -> Result<Self, Error> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Config(vec![format!(
                "pressure amplitude a = {a} violates a > 0"
            )]));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::Config(vec![format!(
                "pressure exponent gamma = {gamma} violates gamma >= 1"
            )]));
        }
        Ok(PressureLaw { a, gamma })
    }

    pub fn amplitude(&self) -> f64 {
        self.a
    }

    pub fn exponent(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            self.a * rho
        } else {
            self.a * rho.powf(self.gamma)
        }
    }

    #[inline]
    pub fn derivative(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            self.a
        } else {
            self.a * self.gamma * rho.powf(self.gamma - 1.0)
        }
    }

    /// Pressure potential `Pi(rho)` with `rho Pi'(rho) - Pi(rho) = P(rho)`:
    /// `a rho^gamma / (gamma - 1)` for `gamma > 1`, `a rho ln rho` at
    /// `gamma = 1`.
    #[inline]
    pub fn potential(&self, rho: f64) -> f64 {
        if self.gamma == 1.0 {
            self.a * rho * rho.ln()
        } else {
            self.a * rho.powf(self.gamma) / (self.gamma - 1.0)
        }
    }
}

/// Pointwise pressure field. Hard-errors on a non-positive density, naming
/// the offending cell.
pub fn pressure(rho: &ScalarField, law: &PressureLaw) -> Result<ScalarField, Error> {
    rho.validate_positive()?;
    let mut out = rho.clone();
    out.data_mut().par_iter_mut().for_each(|v| *v = law.eval(*v));
    out.validate_finite("pressure output")?;
    Ok(out)
}

/// Stored elastic energy density as a function of the deformation gradient.
///
/// The Hookean closure `W(F) = |F|^2 / 2` is the one the solver uses; a
/// custom evaluator exists so the stress can be verified against numeric
/// differentiation of an arbitrary `W`.
pub enum EnergyDensity {
    Hookean,
    Custom(EnergyFn),
}

/// Evaluator for a custom stored energy: `(dim, F) -> W(F)`.
pub type EnergyFn = Box<dyn Fn(usize, &Mat3) -> f64 + Sync>;

impl EnergyDensity {
    pub fn eval(&self, dim: usize, f: &Mat3) -> f64 {
        match self {
            EnergyDensity::Hookean => {
                let fr = mat_frobenius(dim, f);
                0.5 * fr * fr
            }
            EnergyDensity::Custom(w) => w(dim, f),
        }
    }
}

/// First Piola-Kirchhoff stress `S_ij = dW/dF_ij`.
///
/// The Hookean path is analytic (`S = F`); any other energy is
/// differentiated by central differences with relative step
/// `1e-6 * (1 + |F|)`.
pub fn piola_stress(dim: usize, f: &Mat3, w: &EnergyDensity) -> Mat3 {
    match w {
        EnergyDensity::Hookean => *f,
        EnergyDensity::Custom(_) => piola_stress_numeric(dim, f, w),
    }
}

/// Central finite-difference evaluation of `dW/dF`; also used to
/// cross-check the analytic Hookean path.
pub fn piola_stress_numeric(dim: usize, f: &Mat3, w: &EnergyDensity) -> Mat3 {
    let step = 1e-6 * (1.0 + mat_frobenius(dim, f));
    let mut s = [[0.0; 3]; 3];
    let mut probe = *f;
    for i in 0..dim {
        for j in 0..dim {
            let orig = probe[i][j];
            probe[i][j] = orig + step;
            let wp = w.eval(dim, &probe);
            probe[i][j] = orig - step;
            let wm = w.eval(dim, &probe);
            probe[i][j] = orig;
            s[i][j] = (wp - wm) / (2.0 * step);
        }
    }
    s
}

/// The elastic momentum source `div(rho F F^T)`: form the Cauchy stress
/// pointwise, then take the row-wise tensor divergence.
pub fn cauchy_elastic_source(rho: &ScalarField, f: &TensorField) -> Result<VectorField, Error> {
    check_same_grid(rho.grid(), f.grid(), "cauchy_elastic_source")?;
    let grid = *rho.grid();
    let dim = grid.dim();
    let mut stress = TensorField::zeros(grid);
    // rho F F^T is symmetric; computed entry by entry anyway.
    for i in 0..dim {
        for j in 0..dim {
            let fi: Vec<&[f64]> = (0..dim).map(|k| f.comp(i, k)).collect();
            let fj: Vec<&[f64]> = (0..dim).map(|k| f.comp(j, k)).collect();
            let r = rho.data();
            stress
                .comp_mut(i, j)
                .par_iter_mut()
                .enumerate()
                .for_each(|(idx, v)| {
                    let mut s = 0.0;
                    for k in 0..dim {
                        s += fi[k][idx] * fj[k][idx];
                    }
                    *v = r[idx] * s;
                });
        }
    }
    ops::apply_tensor_divergence(&stress)
}

/// Pointwise Hookean energy density `|F|^2 / 2`.
pub fn elastic_energy_density(f: &TensorField) -> Result<ScalarField, Error> {
    let grid = *f.grid();
    let dim = grid.dim();
    let mut out = ScalarField::zeros(grid);
    let comps: Vec<&[f64]> = f.comps().iter().map(|c| c.as_slice()).collect();
    out.data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, v)| {
            let mut s = 0.0;
            for c in comps.iter().take(dim * dim) {
                s += c[idx] * c[idx];
            }
            *v = 0.5 * s;
        });
    out.validate_finite("elastic_energy_density output")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pressure_examples() {
        let g = Grid::cubic(2, 8).unwrap();
        let law = PressureLaw::new(1.0, 1.4).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let p = pressure(&one, &law).unwrap();
        assert!(p.data().iter().all(|&v| v == 1.0));

        // 2^1.4, frozen from scalar arithmetic.
        let two = ScalarField::constant(g, 2.0);
        let p = pressure(&two, &law).unwrap();
        let expect = 2.6390158215457884;
        assert!(p.data().iter().all(|&v| (v - expect).abs() < 1e-15));

        // gamma = 1, a = 1: the identity law, bit-exact.
        let ident = PressureLaw::new(1.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x| 1.0 + 0.3 * x[0].sin());
        let p = pressure(&f, &ident).unwrap();
        assert_eq!(p.data(), f.data());
    }

    #[test]
    fn pressure_rejects_nonpositive_density() {
        let g = Grid::cubic(2, 8).unwrap();
        let law = PressureLaw::default();
        let mut rho = ScalarField::constant(g, 1.0);
        rho.data_mut()[5] = -0.25;
        match pressure(&rho, &law) {
            Err(Error::NonPositiveDensity { index, value }) => {
                assert_eq!(index, 5);
                assert_eq!(value, -0.25);
            }
            other => panic!("expected NonPositiveDensity, got {other:?}"),
        }
    }

    #[test]
    fn pressure_is_monotone() {
        let g = Grid::cubic(2, 16).unwrap();
        let law = PressureLaw::default();
        let lo = ScalarField::from_fn(g, |x| 1.0 + 0.2 * x[0].sin());
        let hi = ScalarField::from_fn(g, |x| 1.5 + 0.2 * x[0].sin());
        let plo = pressure(&lo, &law).unwrap();
        let phi = pressure(&hi, &law).unwrap();
        assert!(plo.data().iter().zip(phi.data()).all(|(a, b)| a <= b));
    }

    #[test]
    fn law_is_increasing_and_convex_on_samples() {
        let law = PressureLaw::new(0.8, 1.4).unwrap();
        let mut prev_p = 0.0;
        let mut prev_dp = 0.0;
        for k in 1..100 {
            let rho = 0.05 * k as f64;
            let p = law.eval(rho);
            let dp = law.derivative(rho);
            assert!(p > prev_p);
            assert!(dp >= prev_dp);
            prev_p = p;
            prev_dp = dp;
        }
    }

    #[test]
    fn hookean_stress_is_the_deformation_gradient() {
        let f = [[1.0, 0.4, 0.0], [-0.2, 0.9, 0.0], [0.0; 3]];
        let s = piola_stress(2, &f, &EnergyDensity::Hookean);
        assert_eq!(s, f);
        let zero = [[0.0; 3]; 3];
        assert_eq!(piola_stress(3, &zero, &EnergyDensity::Hookean), zero);
    }

    #[test]
    fn numeric_stress_matches_analytic_hookean_on_random_matrices() {
        let hook = EnergyDensity::Custom(Box::new(|dim, f| {
            let fr = mat_frobenius(dim, f);
            0.5 * fr * fr
        }));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let dim = if rng.gen_bool(0.5) { 2 } else { 3 };
            let mut f = [[0.0; 3]; 3];
            for i in 0..dim {
                for j in 0..dim {
                    f[i][j] = rng.gen_range(-2.0..2.0);
                }
            }
            let s = piola_stress_numeric(dim, &f, &hook);
            for i in 0..dim {
                for j in 0..dim {
                    let denom = f[i][j].abs().max(1.0);
                    assert!(
                        (s[i][j] - f[i][j]).abs() / denom <= 1e-6,
                        "entry ({i},{j}): {} vs {}",
                        s[i][j],
                        f[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn elastic_source_trivial_cases() {
        let g = Grid::cubic(3, 8).unwrap();
        let rho = ScalarField::constant(g, 1.0);
        let f = TensorField::identity(g);
        let src = cauchy_elastic_source(&rho, &f).unwrap();
        for a in 0..3 {
            assert!(src.comp(a).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn elastic_source_diagonal_perturbation_matches_analytic() {
        let g = Grid::cubic(2, 64).unwrap();
        let eps = 0.1;
        let rho = ScalarField::constant(g, 1.0);
        let f = TensorField::from_fn(g, |x| {
            let mut m = [[0.0; 3]; 3];
            m[0][0] = 1.0 + eps * x[0].sin();
            m[1][1] = 1.0;
            m
        });
        let src = cauchy_elastic_source(&rho, &f).unwrap();
        // Component 1 is d/dx1 of (1 + eps sin x1)^2.
        let exact = ScalarField::from_fn(g, |x| {
            2.0 * (1.0 + eps * x[0].sin()) * eps * x[0].cos()
        });
        let err = src
            .comp(0)
            .iter()
            .zip(exact.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 10.0 * g.h(0).powi(4), "err = {err}");
    }

    #[test]
    fn elastic_source_matches_brute_force_and_scales_linearly() {
        let g = Grid::cubic(2, 16).unwrap();
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (x[0] + 0.5 * x[1]).sin());
        let f = TensorField::from_fn(g, |x| {
            [
                [1.0 + 0.2 * x[1].cos(), 0.1 * x[0].sin(), 0.0],
                [-0.15 * (x[0] + x[1]).sin(), 0.9, 0.0],
                [0.0; 3],
            ]
        });
        let src = cauchy_elastic_source(&rho, &f).unwrap();

        // Brute-force oracle: assemble rho F F^T entrywise with naive index
        // summation, then the same discrete divergence.
        let mut t = TensorField::zeros(g);
        for idx in 0..g.points() {
            let m = f.mat_at(idx);
            let r = rho.data()[idx];
            let mut out = [[0.0; 3]; 3];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        out[i][j] += r * m[i][k] * m[j][k];
                    }
                }
            }
            t.set_mat(idx, &out);
        }
        let oracle = ops::apply_tensor_divergence(&t).unwrap();
        for a in 0..2 {
            let err = src
                .comp(a)
                .iter()
                .zip(oracle.comp(a))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "component {a}: {err}");
        }

        // Bilinear consistency: scaling rho scales the output.
        let mut rho_scaled = rho.clone();
        rho_scaled.data_mut().iter_mut().for_each(|v| *v *= 4.0);
        let scaled = cauchy_elastic_source(&rho_scaled, &f).unwrap();
        for a in 0..2 {
            let err = scaled
                .comp(a)
                .iter()
                .zip(src.comp(a))
                .map(|(x, y)| (x - 4.0 * y).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-11, "component {a}: {err}");
        }
    }

    #[test]
    fn energy_density_examples() {
        let g3 = Grid::cubic(3, 8).unwrap();
        let w = elastic_energy_density(&TensorField::identity(g3)).unwrap();
        assert!(w.data().iter().all(|&v| v == 1.5));

        let g2 = Grid::cubic(2, 8).unwrap();
        let w = elastic_energy_density(&TensorField::zeros(g2)).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.0));

        let mut t = TensorField::zeros(g2);
        t.comp_mut(0, 1).iter_mut().for_each(|v| *v = 2.0);
        let w = elastic_energy_density(&t).unwrap();
        assert!(w.data().iter().all(|&v| v == 2.0));
    }
}
