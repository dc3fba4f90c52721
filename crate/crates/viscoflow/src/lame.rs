//! The implicit momentum sub-solve: a variable-coefficient Lamé system
//! `(rho/dt) u - mu Lap u - (mu + lambda) grad div u = b`, solved
//! matrix-free by preconditioned conjugate gradients.
//!
//! The operator is symmetric positive definite on the periodic grid
//! whenever `mu > 0` and `3 mu + 2 lambda > 0`. The strongest
//! preconditioner inverts the constant-coefficient operator (mean density)
//! exactly in Fourier space, where it is block-diagonal with a `d x d`
//! symmetric block per wavenumber.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::error::Error;
use crate::field::{check_same_grid, ScalarField, VectorField};
use crate::grid::Grid;
use crate::ops;
use crate::reduce;

/// Preconditioner choice for [`solve_momentum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
    FftConstantCoefficient,
}

impl Preconditioner {
    pub fn name(&self) -> &'static str {
        match self {
            Preconditioner::None => "none",
            Preconditioner::Jacobi => "jacobi",
            Preconditioner::FftConstantCoefficient => "fft_constant_coefficient",
        }
    }
}

/// One implicit-Euler momentum solve: coefficients, right-hand side, and
/// the previous velocity that forms the time-derivative term.
pub struct LameProblem<'a> {
    pub rho: &'a ScalarField,
    pub mu: f64,
    pub lambda: f64,
    pub dt: f64,
    pub rhs: &'a VectorField,
    pub u_prev: &'a VectorField,
}

impl<'a> LameProblem<'a> {
    /// Validates ellipticity (`mu > 0`, `3 mu + 2 lambda > 0`), a positive
    /// density floor, and shape agreement.
    pub fn new(
        rho: &'a ScalarField,
        mu: f64,
        lambda: f64,
        dt: f64,
        rhs: &'a VectorField,
        u_prev: &'a VectorField,
    ) -> Result<Self, Error> {
        let mut errs = Vec::new();
        if !(mu > 0.0) {
            errs.push(format!("mu = {mu} violates mu > 0"));
        }
        if !(3.0 * mu + 2.0 * lambda > 0.0) {
            errs.push(format!(
                "3*mu + 2*lambda = {} violates 3mu + 2lambda > 0",
                3.0 * mu + 2.0 * lambda
            ));
        }
        if !(dt > 0.0) {
            errs.push(format!("dt = {dt} violates dt > 0"));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        rho.validate_positive()?;
        check_same_grid(rho.grid(), rhs.grid(), "LameProblem rhs")?;
        check_same_grid(rho.grid(), u_prev.grid(), "LameProblem u_prev")?;
        Ok(LameProblem {
            rho,
            mu,
            lambda,
            dt,
            rhs,
            u_prev,
        })
    }

    fn grid(&self) -> &Grid {
        self.rho.grid()
    }
}

/// Iteration record for one momentum solve.
#[derive(Debug, Clone)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative residual `|b - A u| / |b|` in the unpreconditioned norm.
    pub final_residual: f64,
    pub preconditioner: Preconditioner,
}

/// Apply `(rho/dt) u - mu Lap u - (mu + lambda) grad div u`.
pub fn apply_lame_operator(p: &LameProblem, u: &VectorField) -> Result<VectorField, Error> {
    check_same_grid(p.grid(), u.grid(), "apply_lame_operator")?;
    let grid = *p.grid();
    let lap = ops::apply_laplacian(u)?;
    let graddiv = ops::apply_gradient(&ops::apply_divergence(u)?)?;
    let mut out = VectorField::zeros(grid);
    let inv_dt = 1.0 / p.dt;
    let (mu, ml) = (p.mu, p.mu + p.lambda);
    for c in 0..grid.dim() {
        let rho = p.rho.data();
        let uc = u.comp(c);
        let lc = lap.comp(c);
        let gc = graddiv.comp(c);
        out.comp_mut(c)
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| {
                *v = rho[i] * inv_dt * uc[i] - mu * lc[i] - ml * gc[i];
            });
    }
    out.validate_finite("apply_lame_operator output")?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// FFT machinery
// ---------------------------------------------------------------------------

/// Discrete symbol of the 4th-order first derivative: `i s(theta) / h` with
/// `s = (8 sin t - sin 2t) / 6`.
fn symbol_d1(theta: f64, h: f64) -> f64 {
    (8.0 * theta.sin() - (2.0 * theta).sin()) / (6.0 * h)
}

/// Discrete symbol of the 4th-order second derivative (positive form, the
/// eigenvalue of `-d^2/dx^2`).
fn symbol_d2(theta: f64, h: f64) -> f64 {
    (30.0 - 32.0 * theta.cos() + 2.0 * (2.0 * theta).cos()) / (12.0 * h * h)
}

struct AxisFft {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

/// Exact inverse of the constant-coefficient operator with mean density,
/// applied spectrally. Per wavenumber the block is
/// `alpha I + (mu + lambda) s s^T` with `alpha = rho_mean/dt + mu sum
/// sigma2`, inverted in closed form by the rank-one update formula.
pub struct FftPreconditioner {
    grid: Grid,
    axes: Vec<AxisFft>,
    sigma2: [Vec<f64>; 3],
    s1: [Vec<f64>; 3],
    alpha0: f64, // rho_mean / dt
    mu: f64,
    ml: f64, // mu + lambda
}

impl FftPreconditioner {
    pub fn new(grid: Grid, rho_mean: f64, mu: f64, lambda: f64, dt: f64) -> Self {
        let mut planner = FftPlanner::new();
        let mut axes = Vec::new();
        let mut sigma2: [Vec<f64>; 3] = [vec![0.0], vec![0.0], vec![0.0]];
        let mut s1: [Vec<f64>; 3] = [vec![0.0], vec![0.0], vec![0.0]];
        for a in 0..3 {
            let n = grid.n(a);
            if a < grid.dim() {
                axes.push(AxisFft {
                    fwd: planner.plan_fft_forward(n),
                    inv: planner.plan_fft_inverse(n),
                    n,
                });
                let h = grid.h(a);
                sigma2[a] = (0..n)
                    .map(|k| {
                        let theta = std::f64::consts::TAU * k as f64 / n as f64;
                        symbol_d2(theta, h)
                    })
                    .collect();
                s1[a] = (0..n)
                    .map(|k| {
                        let theta = std::f64::consts::TAU * k as f64 / n as f64;
                        symbol_d1(theta, h)
                    })
                    .collect();
            }
        }
        FftPreconditioner {
            grid,
            axes,
            sigma2,
            s1,
            alpha0: rho_mean / dt,
            mu,
            ml: mu + lambda,
        }
    }

    /// Forward (or inverse) complex FFT along every active axis.
    fn fft_all_axes(&self, buf: &mut [Complex<f64>], forward: bool) {
        let n = [self.grid.n(0), self.grid.n(1), self.grid.n(2)];
        for (a, axis) in self.axes.iter().enumerate() {
            let fft = if forward { &axis.fwd } else { &axis.inv };
            let stride = self.grid.strides()[a];
            let count = self.grid.points() / axis.n;
            // Gather lines along the axis, transform, scatter back.
            let mut lines: Vec<Vec<Complex<f64>>> = (0..count)
                .into_par_iter()
                .map(|line| {
                    let base = line_base(line, a, &n);
                    let mut tmp: Vec<Complex<f64>> =
                        (0..axis.n).map(|m| buf[base + m * stride]).collect();
                    fft.process(&mut tmp);
                    tmp
                })
                .collect();
            for (line, tmp) in lines.drain(..).enumerate() {
                let base = line_base(line, a, &n);
                for (m, v) in tmp.into_iter().enumerate() {
                    buf[base + m * stride] = v;
                }
            }
        }
    }

    /// Apply the inverse operator to a residual field.
    pub fn apply(&self, r: &VectorField) -> VectorField {
        let grid = self.grid;
        let dim = grid.dim();
        let npts = grid.points();
        let mut spectra: Vec<Vec<Complex<f64>>> = (0..dim)
            .map(|c| {
                let mut buf: Vec<Complex<f64>> =
                    r.comp(c).iter().map(|&v| Complex::new(v, 0.0)).collect();
                self.fft_all_axes(&mut buf, true);
                buf
            })
            .collect();

        // Pointwise block inverse per wavenumber.
        let n = [grid.n(0), grid.n(1), grid.n(2)];
        let (alpha0, mu, ml) = (self.alpha0, self.mu, self.ml);
        let sigma2 = &self.sigma2;
        let s1 = &self.s1;
        // Split borrows: process each component buffer in place.
        let mut hats: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); dim];
        for idx in 0..npts {
            let i = idx % n[0];
            let rem = idx / n[0];
            let (j, k) = (rem % n[1], rem / n[1]);
            let mut sig = sigma2[0][i];
            if dim > 1 {
                sig += sigma2[1][j];
            }
            if dim > 2 {
                sig += sigma2[2][k];
            }
            let alpha = alpha0 + mu * sig;
            let sv = [
                s1[0][i],
                if dim > 1 { s1[1][j] } else { 0.0 },
                if dim > 2 { s1[2][k] } else { 0.0 },
            ];
            let s_sq = sv[0] * sv[0] + sv[1] * sv[1] + sv[2] * sv[2];
            let mut s_dot = Complex::new(0.0, 0.0);
            for c in 0..dim {
                hats[c] = spectra[c][idx];
                s_dot += sv[c] * hats[c];
            }
            let coef = ml / (alpha + ml * s_sq);
            for c in 0..dim {
                spectra[c][idx] = (hats[c] - sv[c] * s_dot * coef) / alpha;
            }
        }

        let mut out = VectorField::zeros(grid);
        let scale = 1.0 / npts as f64;
        for c in 0..dim {
            self.fft_all_axes(&mut spectra[c], false);
            out.comp_mut(c)
                .par_iter_mut()
                .zip(spectra[c].par_iter())
                .for_each(|(v, z)| *v = z.re * scale);
        }
        out
    }
}

#[inline]
fn line_base(line: usize, axis: usize, n: &[usize; 3]) -> usize {
    match axis {
        0 => line * n[0],
        1 => {
            let (i, k) = (line % n[0], line / n[0]);
            k * n[0] * n[1] + i
        }
        _ => line,
    }
}

/// Diagonal of the discrete operator, for Jacobi preconditioning.
fn jacobi_diagonal(p: &LameProblem) -> Vec<Vec<f64>> {
    let grid = p.grid();
    let dim = grid.dim();
    // Laplacian diagonal: 30/(12 h^2) per axis; composed grad-div diagonal
    // on its own axis: 130/(144 h^2).
    let lap_diag: f64 = (0..dim).map(|a| 30.0 / (12.0 * grid.h(a) * grid.h(a))).sum();
    (0..dim)
        .map(|c| {
            let gd_diag = 130.0 / (144.0 * grid.h(c) * grid.h(c));
            let base = p.mu * lap_diag + (p.mu + p.lambda) * gd_diag;
            let inv_dt = 1.0 / p.dt;
            p.rho
                .data()
                .iter()
                .map(|&r| r * inv_dt + base)
                .collect::<Vec<f64>>()
        })
        .collect()
}

/// Solve the momentum system by (preconditioned) conjugate gradients.
///
/// The stopping criterion is the relative residual in the unpreconditioned
/// norm; convergence is confirmed against a freshly computed true residual
/// before returning. On stagnation the best iterate and residual history
/// ride along in the error.
pub fn solve_momentum(
    p: &LameProblem,
    tol: f64,
    max_iter: usize,
    precond: Preconditioner,
) -> Result<(VectorField, SolveStats), Error> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(vec![format!(
            "solver tolerance {tol} violates 0 < tol < 1"
        )]));
    }
    if max_iter < 1 {
        return Err(Error::Config(vec!["max_iter must be >= 1".into()]));
    }
    let grid = *p.grid();

    // b = rhs + (rho/dt) u_prev
    let mut b = p.rhs.clone();
    let inv_dt = 1.0 / p.dt;
    for c in 0..grid.dim() {
        let rho = p.rho.data();
        let up = p.u_prev.comp(c);
        b.comp_mut(c)
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v += rho[i] * inv_dt * up[i]);
    }
    let bnorm = b.norm_l2();
    if bnorm == 0.0 {
        // The operator is SPD, so b = 0 has the unique solution u = 0.
        return Ok((
            VectorField::zeros(grid),
            SolveStats {
                iterations: 0,
                final_residual: 0.0,
                preconditioner: precond,
            },
        ));
    }

    let fft_precond = match precond {
        Preconditioner::FftConstantCoefficient => {
            let rho_mean = reduce::sum(p.rho.data()) / grid.points() as f64;
            Some(FftPreconditioner::new(grid, rho_mean, p.mu, p.lambda, p.dt))
        }
        _ => None,
    };
    let jacobi = match precond {
        Preconditioner::Jacobi => Some(jacobi_diagonal(p)),
        _ => None,
    };
    let apply_precond = |r: &VectorField| -> VectorField {
        match precond {
            Preconditioner::None => r.clone(),
            Preconditioner::Jacobi => {
                let diag = jacobi.as_ref().unwrap();
                let mut z = r.clone();
                for c in 0..grid.dim() {
                    let d = &diag[c];
                    z.comp_mut(c)
                        .par_iter_mut()
                        .enumerate()
                        .for_each(|(i, v)| *v /= d[i]);
                }
                z
            }
            Preconditioner::FftConstantCoefficient => fft_precond.as_ref().unwrap().apply(r),
        }
    };

    let mut x = p.u_prev.clone();
    let mut r = b.sub(&apply_lame_operator(p, &x)?)?;
    let mut history = vec![r.norm_l2() / bnorm];
    if history[0] <= tol {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                final_residual: history[0],
                preconditioner: precond,
            },
        ));
    }

    let mut z = apply_precond(&r);
    let mut dir = z.clone();
    let mut rz = r.dot(&z)?;

    for it in 1..=max_iter {
        let ad = apply_lame_operator(p, &dir)?;
        let dad = dir.dot(&ad)?;
        if !(dad > 0.0) {
            // Loss of positive-definiteness signals round-off exhaustion.
            return Err(Error::SolveDiverged {
                iterations: it,
                final_residual: *history.last().unwrap(),
                tol,
                history,
                best: Box::new(x),
            });
        }
        let alpha = rz / dad;
        x = x.axpy(alpha, &dir)?;
        r = r.axpy(-alpha, &ad)?;
        let rel = r.norm_l2() / bnorm;
        history.push(rel);
        if rel <= tol {
            // Confirm with the true residual; the recursive one drifts.
            let r_true = b.sub(&apply_lame_operator(p, &x)?)?;
            let rel_true = r_true.norm_l2() / bnorm;
            if rel_true <= tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        final_residual: rel_true,
                        preconditioner: precond,
                    },
                ));
            }
            r = r_true;
        }
        let z_new = apply_precond(&r);
        let rz_new = r.dot(&z_new)?;
        let beta = rz_new / rz;
        dir = z_new.axpy(beta, &dir)?;
        z = z_new;
        let _ = &z;
        rz = rz_new;
    }
    let final_residual = *history.last().unwrap();
    Err(Error::SolveDiverged {
        iterations: max_iter,
        final_residual,
        tol,
        history,
        best: Box::new(x),
    })
}
