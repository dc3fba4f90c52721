//! Semi-Lagrangian transport of the density and the deformation gradient
//! along characteristics of a frozen velocity field.
//!
//! Both updates integrate the characteristic ODE backwards with an RK2
//! (midpoint) trace and apply an integrating factor at the foot: the
//! density picks up `exp(-dt div v)`, the deformation gradient the
//! propagator of `dF/dt = (grad v) F`.

use rayon::prelude::*;

use crate::error::Error;
use crate::field::{
    check_same_grid, mat_expm, mat_identity, mat_mul, Mat3, ScalarField, TensorField, VectorField,
};
use crate::grid::Grid;
use crate::interp;
use crate::ops;
use crate::reduce;

/// Backward characteristic feet and the midpoint velocity data the
/// integrating factors need.
///
/// Feet are stored unwrapped, so `node - foot` is the physical displacement;
/// every foot lies within `dt * |v|_inf` of its node componentwise.
#[derive(Debug, Clone)]
pub struct DeparturePoints {
    grid: Grid,
    feet: Vec<[f64; 3]>,
    divv_mid: Vec<f64>,
    gradv_mid: Vec<Mat3>,
    /// `max |div v|` over the grid, for envelope accounting.
    div_inf: f64,
    dt: f64,
}

impl DeparturePoints {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn feet(&self) -> &[[f64; 3]] {
        &self.feet
    }

    pub fn divv_mid(&self) -> &[f64] {
        &self.divv_mid
    }

    pub fn gradv_mid(&self) -> &[Mat3] {
        &self.gradv_mid
    }

    pub fn div_inf(&self) -> f64 {
        self.div_inf
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Trace departure points backwards with an RK2 midpoint step and sample
/// `div v` and `grad v` at the characteristic midpoints.
///
/// Refuses with an advisory dt when one step would advect material more
/// than a quarter of the shortest box extent.
pub fn trace_departure_points(v: &VectorField, dt: f64) -> Result<DeparturePoints, Error> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(vec![format!("dt = {dt} violates dt > 0")]));
    }
    v.validate_finite("trace velocity")?;
    let grid = *v.grid();
    let dim = grid.dim();

    let vmax = v.max_magnitude();
    let travel = dt * vmax;
    let limit = grid.min_length() / 4.0;
    if travel > limit {
        return Err(Error::CflViolation {
            dt,
            travel,
            advisory_dt: limit / vmax,
        });
    }

    let divv = ops::apply_divergence(v)?;
    let gradv = ops::velocity_gradient(v)?;
    let div_lo = divv.min();
    let div_hi = divv.max();
    let div_inf = reduce::max_abs(divv.data());

    // Componentwise grid bounds keep sampled velocities inside the range of
    // the stored field, so feet stay within one CFL ball of their node.
    let mut vlo = [0.0; 3];
    let mut vhi = [0.0; 3];
    for c in 0..dim {
        vlo[c] = reduce::min(v.comp(c));
        vhi[c] = reduce::max(v.comp(c));
    }

    let npts = grid.points();
    let mut feet = vec![[0.0; 3]; npts];
    let mut divv_mid = vec![0.0; npts];
    let mut gradv_mid = vec![[[0.0; 3]; 3]; npts];

    feet.par_iter_mut()
        .zip(divv_mid.par_iter_mut())
        .zip(gradv_mid.par_iter_mut())
        .enumerate()
        .for_each(|(idx, ((foot, dmid), gmid))| {
            let x = grid.position(grid.coords(idx));
            let vx = v.at(idx);
            let mut mid = [0.0; 3];
            for c in 0..3 {
                mid[c] = x[c] - 0.5 * dt * vx[c];
            }
            let mut vm = interp::sample_vector(v, mid);
            for c in 0..dim {
                vm[c] = vm[c].clamp(vlo[c], vhi[c]);
            }
            for c in 0..3 {
                foot[c] = x[c] - dt * vm[c];
            }
            // The grid-range clamp keeps the integrating factor inside the
            // exponential envelope of the stored divergence.
            *dmid = interp::sample_scalar(&divv, mid).clamp(div_lo, div_hi);
            *gmid = interp::sample_tensor(&gradv, mid);
        });

    Ok(DeparturePoints {
        grid,
        feet,
        divv_mid,
        gradv_mid,
        div_inf,
        dt,
    })
}

/// Advance the density: `rho_new(x) = rho(foot) * exp(-dt * div v_mid)`,
/// plus `dt * source(x)` when a manufactured source is injected.
///
/// With `monotone` set, the foot sample is clipped to its cell's corner
/// range, which makes the exponential min/max envelope exact. A foot sample
/// `<= 0` is a hard error: clamping would mask under-resolution.
pub fn advect_density(
    rho: &ScalarField,
    dp: &DeparturePoints,
    dt: f64,
    monotone: bool,
    source: Option<&ScalarField>,
) -> Result<ScalarField, Error> {
    check_same_grid(rho.grid(), &dp.grid, "advect_density")?;
    if let Some(s) = source {
        check_same_grid(s.grid(), &dp.grid, "advect_density source")?;
    }
    let grid = dp.grid;
    let mut out = ScalarField::zeros(grid);
    let data = rho.data();
    out.data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, v)| {
            let foot = dp.feet[idx];
            let s = if monotone {
                interp::sample_component_monotone(&grid, data, foot)
            } else {
                interp::sample_component(&grid, data, foot)
            };
            let mut val = s * (-dt * dp.divv_mid[idx]).exp();
            if s <= 0.0 {
                // Flag for the sequential scan below; NaN survives the add.
                val = f64::NAN;
            }
            if let Some(src) = source {
                val += dt * src.data()[idx];
            }
            *v = val;
        });
    out.validate_positive().map_err(|e| match e {
        Error::NonPositiveDensity { index, value } if value.is_nan() => Error::NonPositiveDensity {
            index,
            value: interp::sample_component(&grid, data, dp.feet[index]),
        },
        other => other,
    })?;
    out.validate_finite("advect_density output")?;
    Ok(out)
}

/// Advance the deformation gradient: `F_new(x) = E * F(foot)` with the
/// propagator `E` of `dF/dt = G F` at the midpoint gradient `G`.
///
/// The default propagator is the second-order truncation
/// `I + dt G + (dt G)^2 / 2`, matching the RK2 trace; `exact_propagator`
/// switches to the full matrix exponential for stiffness experiments.
pub fn advect_deformation(
    f: &TensorField,
    dp: &DeparturePoints,
    dt: f64,
    exact_propagator: bool,
    source: Option<&TensorField>,
) -> Result<TensorField, Error> {
    check_same_grid(f.grid(), &dp.grid, "advect_deformation")?;
    if let Some(s) = source {
        check_same_grid(s.grid(), &dp.grid, "advect_deformation source")?;
    }
    let grid = dp.grid;
    let dim = grid.dim();
    let mut out = TensorField::zeros(grid);

    // Work node by node to keep the matrix algebra readable; collect into
    // per-component columns afterwards.
    let results: Vec<Mat3> = (0..grid.points())
        .into_par_iter()
        .map(|idx| {
            let foot = dp.feet[idx];
            let f_foot = interp::sample_tensor(f, foot);
            let g = dp.gradv_mid[idx];
            let e = propagator(dim, &g, dt, exact_propagator);
            let mut m = mat_mul(dim, &e, &f_foot);
            if let Some(src) = source {
                let s = src.mat_at(idx);
                for i in 0..dim {
                    for j in 0..dim {
                        m[i][j] += dt * s[i][j];
                    }
                }
            }
            m
        })
        .collect();
    for (idx, m) in results.iter().enumerate() {
        out.set_mat(idx, m);
    }
    out.validate_finite("advect_deformation output")?;
    Ok(out)
}

fn propagator(dim: usize, g: &Mat3, dt: f64, exact: bool) -> Mat3 {
    let mut gdt = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            gdt[i][j] = dt * g[i][j];
        }
    }
    if exact {
        return mat_expm(dim, &gdt);
    }
    let g2 = mat_mul(dim, &gdt, &gdt);
    let mut e = mat_identity(dim);
    for i in 0..dim {
        for j in 0..dim {
            e[i][j] += gdt[i][j] + 0.5 * g2[i][j];
        }
    }
    e
}
