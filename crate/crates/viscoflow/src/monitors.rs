//! Invariant monitoring: every identity and a-priori bound the continuous
//! system satisfies, evaluated numerically each step.
//!
//! Monitored quantities: the curl-compatibility defect of the deformation
//! gradient and its exponential growth bound, persistence of
//! `div(rho F^T) = 0`, material conservation of `rho det F` along composed
//! characteristics, the exponential min/max envelope of the density, the
//! `L^q` growth bound on `F`, and the energy budget. Monitors only report;
//! they never modify a state or project fields.

use rayon::prelude::*;

use crate::constitutive::PressureLaw;
use crate::error::Error;
use crate::field::{check_same_grid, mat_frobenius, ScalarField, TensorField, VectorField};
use crate::interp;
use crate::ops::{self, DiscreteNorm, NormKind};
use crate::reduce;
use crate::stepper::State;
use crate::transport::DeparturePoints;

/// Monitor thresholds and toggles.
#[derive(Debug, Clone)]
pub struct MonitorConfig {
    /// Norm order for the deformation-gradient growth bound.
    pub q: f64,
    /// Discretization allowance for the curl growth check; `None` means
    /// `10 h^2`.
    pub curl_allowance: Option<f64>,
    pub envelope_allowance: f64,
    pub fnorm_allowance: f64,
    /// When set, a failed bound aborts the run.
    pub fatal: bool,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            q: 4.0,
            curl_allowance: None,
            envelope_allowance: 0.0,
            fnorm_allowance: 0.0,
            fatal: false,
        }
    }
}

/// One row of diagnostics at a given time. Written to CSV in exactly this
/// column order.
#[derive(Debug, Clone)]
pub struct MonitorReport {
    pub t: f64,
    pub mass: f64,
    pub curl_defect_max: f64,
    pub curl_bound: f64,
    pub div_rho_ft_norm: f64,
    pub volume_defect: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub envelope_lo: f64,
    pub envelope_hi: f64,
    pub f_norm_q: f64,
    pub f_norm_bound: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub grad_u_l2: f64,
    pub picard_iters: usize,
    pub lame_iters: usize,
}

impl MonitorReport {
    pub const CSV_HEADER: &'static str = "t,mass,curl_defect_max,curl_bound,div_rhoFt_norm,\
volume_defect,rho_min,rho_max,envelope_lo,envelope_hi,f_norm_q,f_norm_bound,kinetic,elastic,\
grad_u_l2,picard_iters,lame_iters";

    /// Floats carry 17 significant digits so rows round-trip losslessly.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},\
{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            self.t,
            self.mass,
            self.curl_defect_max,
            self.curl_bound,
            self.div_rho_ft_norm,
            self.volume_defect,
            self.rho_min,
            self.rho_max,
            self.envelope_lo,
            self.envelope_hi,
            self.f_norm_q,
            self.f_norm_bound,
            self.kinetic,
            self.elastic,
            self.grad_u_l2,
            self.picard_iters,
            self.lame_iters
        )
    }

    pub fn validate_finite(&self) -> Result<(), Error> {
        let vals = [
            self.t,
            self.mass,
            self.curl_defect_max,
            self.curl_bound,
            self.div_rho_ft_norm,
            self.volume_defect,
            self.rho_min,
            self.rho_max,
            self.envelope_lo,
            self.envelope_hi,
            self.f_norm_q,
            self.f_norm_bound,
            self.kinetic,
            self.elastic,
            self.grad_u_l2,
        ];
        if let Some(index) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "monitor report".into(),
                index,
            });
        }
        Ok(())
    }
}

/// Outcome of one bound evaluation; `slack >= 0` means the bound holds
/// with that much room.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub name: &'static str,
    pub pass: bool,
    pub slack: f64,
}

/// Energy budget at one instant.
#[derive(Debug, Clone, Copy)]
pub struct Energies {
    pub kinetic: f64,
    pub elastic: f64,
    pub grad_u_l2: f64,
    pub potential: f64,
}

/// What the stepper hands the suite after each accepted step.
pub struct StepInfo<'a> {
    /// Departure points of the accepted (converged-velocity) advection.
    pub dp: &'a DeparturePoints,
    pub picard_iters: usize,
    pub lame_iters: usize,
    pub dt: f64,
}

// ---------------------------------------------------------------------------
// Standalone monitor operations
// ---------------------------------------------------------------------------

/// Pointwise curl-compatibility defect of the deformation gradient:
/// `max_{i,j,k} |F_lk d_l F_ij - F_lj d_l F_ik|`, summed literally over the
/// repeated index. Returns the defect field and its global maximum.
pub fn curl_defect(f: &TensorField) -> Result<(ScalarField, f64), Error> {
    f.validate_finite("curl_defect input")?;
    let grid = *f.grid();
    let dim = grid.dim();
    // dfc[i][j][l] = d_l F_ij
    let mut dfc = vec![vec![vec![Vec::new(); dim]; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            for l in 0..dim {
                dfc[i][j][l] = ops::diff1(&grid, f.comp(i, j), l);
            }
        }
    }
    let mut out = ScalarField::zeros(grid);
    out.data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(idx, v)| {
            let m = f.mat_at(idx);
            let mut worst = 0.0f64;
            for i in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        let mut s = 0.0;
                        for l in 0..dim {
                            s += m[l][k] * dfc[i][j][l][idx] - m[l][j] * dfc[i][k][l][idx];
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
            *v = worst;
        });
    let max = reduce::max(out.data());
    Ok((out, max))
}

/// Growth-bound check for the curl defect along a run.
///
/// `history` holds `(t, |grad u|_inf)` samples at step boundaries; the
/// bound is `m0 * exp(2 * trapezoid(history))` plus the allowance.
pub fn curl_growth_check(
    history: &[(f64, f64)],
    m0: f64,
    mt: f64,
    allowance: f64,
) -> BoundCheck {
    let mut integral = 0.0;
    for w in history.windows(2) {
        integral += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    let bound = m0 * (2.0 * integral).exp() + allowance;
    BoundCheck {
        name: "curl_growth",
        pass: mt <= bound,
        slack: bound - mt,
    }
}

/// L2 norm of `div(rho F^T)`, the compatibility divergence that the system
/// conserves: component `a` is `sum_b d_b (rho F_ba)`.
pub fn elastic_compatibility_divergence(
    rho: &ScalarField,
    f: &TensorField,
) -> Result<f64, Error> {
    check_same_grid(rho.grid(), f.grid(), "elastic_compatibility_divergence")?;
    let grid = *rho.grid();
    let dim = grid.dim();
    // Assemble rho F^T as a tensor field, then take the row-wise divergence.
    let mut t = TensorField::zeros(grid);
    for a in 0..dim {
        for b in 0..dim {
            let src = f.comp(b, a);
            let r = rho.data();
            t.comp_mut(a, b)
                .par_iter_mut()
                .enumerate()
                .for_each(|(idx, v)| *v = r[idx] * src[idx]);
        }
    }
    let div = ops::apply_tensor_divergence(&t)?;
    div.discrete_norm(NormKind::L2)
}

/// Material-conservation defect of `rho det F`: the sup-norm difference
/// between its value now and its initial value at the composed
/// characteristic foot `x + delta(x)`.
pub fn material_volume_defect(
    state: &State,
    initial: &State,
    delta: &VectorField,
) -> Result<f64, Error> {
    check_same_grid(state.grid(), initial.grid(), "material_volume_defect")?;
    check_same_grid(state.grid(), delta.grid(), "material_volume_defect")?;
    let grid = *state.grid();
    let w_now = weighted_det(state);
    let w0 = weighted_det(initial);
    let worst = (0..grid.points())
        .into_par_iter()
        .map(|idx| {
            let x = grid.position(grid.coords(idx));
            let d = delta.at(idx);
            let foot = [x[0] + d[0], x[1] + d[1], x[2] + d[2]];
            let back = interp::sample_scalar(&w0, foot);
            (w_now.data()[idx] - back).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

fn weighted_det(state: &State) -> ScalarField {
    let det = state.f.det_field();
    let mut out = det;
    out.data_mut()
        .par_iter_mut()
        .zip(state.rho.data().par_iter())
        .for_each(|(v, &r)| *v *= r);
    out
}

/// Kinetic and elastic quadratures plus the velocity-gradient norm.
fn energy_core(state: &State) -> Result<(f64, f64, f64), Error> {
    let grid = state.grid();
    let vol = grid.cell_volume();
    let npts = grid.points();
    let dim = grid.dim();
    let rho = state.rho.data();
    let kinetic = 0.5
        * vol
        * reduce::sum_indexed(npts, |idx| {
            let v = state.u.at(idx);
            let mut s = 0.0;
            for c in 0..dim {
                s += v[c] * v[c];
            }
            rho[idx] * s
        });
    let elastic = 0.5
        * vol
        * reduce::sum_indexed(npts, |idx| {
            let m = state.f.mat_at(idx);
            let fr = mat_frobenius(dim, &m);
            rho[idx] * fr * fr
        });
    let grad_u = ops::velocity_gradient(&state.u)?;
    let grad_u_l2 = grad_u.discrete_norm(NormKind::L2)?;
    Ok((kinetic, elastic, grad_u_l2))
}

/// Kinetic, elastic, velocity-gradient, and pressure-potential budget.
pub fn energy_report(state: &State, law: &PressureLaw) -> Result<Energies, Error> {
    let (kinetic, elastic, grad_u_l2) = energy_core(state)?;
    let vol = state.grid().cell_volume();
    let potential = vol * reduce::sum_map(state.rho.data(), |r| law.potential(r));
    Ok(Energies {
        kinetic,
        elastic,
        grad_u_l2,
        potential,
    })
}

/// Pointwise sup of the Frobenius norm of `grad u`.
fn grad_inf(u: &VectorField) -> Result<f64, Error> {
    let g = ops::velocity_gradient(u)?;
    let dim = u.grid().dim();
    Ok((0..u.grid().points())
        .into_par_iter()
        .map(|idx| mat_frobenius(dim, &g.mat_at(idx)))
        .reduce(|| 0.0, f64::max))
}

// ---------------------------------------------------------------------------
// The suite
// ---------------------------------------------------------------------------

/// Holds the reference data and accumulated integrals the bounds need, and
/// produces one [`MonitorReport`] per accepted step.
pub struct MonitorSuite {
    cfg: MonitorConfig,
    curl_allowance: f64,
    /// Initial curl defect maximum.
    m0: f64,
    /// Initial `W^{1,q}` norm of the deformation gradient.
    f0_w1q: f64,
    /// Initial `rho det F`, sampled at composed feet for the material check.
    w0_state: State,
    /// Composed backward displacement: the material origin of the point now
    /// at `x` is `x + delta(x)`.
    delta: VectorField,
    /// Exponential density envelopes, multiplied per accepted step.
    env_lo: f64,
    env_hi: f64,
    /// Trapezoid accumulator of `|grad u|_inf` over step boundaries.
    grad_accum: f64,
    grad_prev: f64,
    /// Trapezoid accumulator of the `W^{2,q}` surrogate of the velocity.
    w2q_accum: f64,
    w2q_prev: f64,
    report0: MonitorReport,
    last_t: f64,
}

impl MonitorSuite {
    pub fn new(initial: &State, cfg: MonitorConfig) -> Result<Self, Error> {
        let grid = *initial.grid();
        let curl_allowance = cfg
            .curl_allowance
            .unwrap_or(10.0 * grid.min_h() * grid.min_h());
        let (_, m0) = curl_defect(&initial.f)?;
        let f0_w1q = initial.f.discrete_norm(NormKind::W1q(cfg.q))?;
        let grad_prev = grad_inf(&initial.u)?;
        let w2q_prev = ops::w2q_surrogate(&initial.u, cfg.q)?;
        let delta = VectorField::zeros(grid);
        let env_lo = initial.rho.min();
        let env_hi = initial.rho.max();

        let mut suite = MonitorSuite {
            cfg,
            curl_allowance,
            m0,
            f0_w1q,
            w0_state: initial.clone(),
            delta,
            env_lo,
            env_hi,
            grad_accum: 0.0,
            grad_prev,
            w2q_accum: 0.0,
            w2q_prev,
            report0: MonitorReport {
                t: initial.t,
                mass: 0.0,
                curl_defect_max: 0.0,
                curl_bound: 0.0,
                div_rho_ft_norm: 0.0,
                volume_defect: 0.0,
                rho_min: 0.0,
                rho_max: 0.0,
                envelope_lo: 0.0,
                envelope_hi: 0.0,
                f_norm_q: 0.0,
                f_norm_bound: 0.0,
                kinetic: 0.0,
                elastic: 0.0,
                grad_u_l2: 0.0,
                picard_iters: 0,
                lame_iters: 0,
            },
            last_t: initial.t,
        };
        suite.report0 = suite.build_report(initial, 0, 0)?;
        Ok(suite)
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn initial_report(&self) -> &MonitorReport {
        &self.report0
    }

    /// The composed displacement field (read-only view for tests).
    pub fn composed_displacement(&self) -> &VectorField {
        &self.delta
    }

    fn build_report(
        &self,
        state: &State,
        picard_iters: usize,
        lame_iters: usize,
    ) -> Result<MonitorReport, Error> {
        let grid = state.grid();
        let mass = reduce::sum(state.rho.data()) * grid.cell_volume();
        let (_, curl_max) = curl_defect(&state.f)?;
        let curl_bound = self.m0 * (2.0 * self.grad_accum).exp();
        let div_norm = elastic_compatibility_divergence(&state.rho, &state.f)?;
        let volume_defect = material_volume_defect(state, &self.w0_state, &self.delta)?;
        let rho_min = state.rho.min();
        let rho_max = state.rho.max();
        let f_norm_q = state.f.discrete_norm(NormKind::Lq(self.cfg.q))?;
        let f_norm_bound = (self.f0_w1q + self.w2q_accum) * self.w2q_accum.exp();
        let (kinetic, elastic, grad_u_l2) = energy_core(state)?;
        let report = MonitorReport {
            t: state.t,
            mass,
            curl_defect_max: curl_max,
            curl_bound,
            div_rho_ft_norm: div_norm,
            volume_defect,
            rho_min,
            rho_max,
            envelope_lo: self.env_lo,
            envelope_hi: self.env_hi,
            f_norm_q,
            f_norm_bound,
            kinetic,
            elastic,
            grad_u_l2,
            picard_iters,
            lame_iters,
        };
        report.validate_finite()?;
        Ok(report)
    }

    /// Fold one accepted step into the accumulators and report.
    pub fn advance(
        &mut self,
        state: &State,
        info: &StepInfo,
    ) -> Result<(MonitorReport, Vec<BoundCheck>), Error> {
        // Compose the backward flow map: the new origin of x is the old
        // origin of its departure foot.
        let grid = *state.grid();
        let feet = info.dp.feet();
        let mut delta_new = VectorField::zeros(grid);
        for c in 0..grid.dim() {
            let old = &self.delta;
            let comp: Vec<f64> = (0..grid.points())
                .into_par_iter()
                .map(|idx| {
                    let x = grid.position(grid.coords(idx));
                    let foot = feet[idx];
                    let carried = interp::sample_component(&grid, old.comp(c), foot);
                    (foot[c] - x[c]) + carried
                })
                .collect();
            delta_new.comp_mut(c).copy_from_slice(&comp);
        }
        self.delta = delta_new;

        // Envelope factors use the per-step frozen velocity: the integral
        // of the piecewise-constant |div v| history, which is what the
        // advection exponent actually saw.
        let div_inf = info.dp.div_inf();
        self.env_lo *= (-info.dt * div_inf).exp();
        self.env_hi *= (info.dt * div_inf).exp();

        // Trapezoid accumulators on step boundaries.
        let grad_now = grad_inf(&state.u)?;
        self.grad_accum += 0.5 * info.dt * (self.grad_prev + grad_now);
        self.grad_prev = grad_now;
        let w2q_now = ops::w2q_surrogate(&state.u, self.cfg.q)?;
        self.w2q_accum += 0.5 * info.dt * (self.w2q_prev + w2q_now);
        self.w2q_prev = w2q_now;
        self.last_t = state.t;

        let report = self.build_report(state, info.picard_iters, info.lame_iters)?;
        let checks = self.check_bounds(&report);
        Ok((report, checks))
    }

    /// Evaluate the growth/envelope bounds recorded in a report.
    pub fn check_bounds(&self, r: &MonitorReport) -> Vec<BoundCheck> {
        let curl_bound = r.curl_bound + self.curl_allowance;
        let env_a = self.cfg.envelope_allowance;
        let f_bound = r.f_norm_bound + self.cfg.fnorm_allowance;
        vec![
            BoundCheck {
                name: "curl_growth",
                pass: r.curl_defect_max <= curl_bound,
                slack: curl_bound - r.curl_defect_max,
            },
            BoundCheck {
                name: "envelope_lo",
                pass: r.rho_min >= r.envelope_lo - env_a,
                slack: r.rho_min - (r.envelope_lo - env_a),
            },
            BoundCheck {
                name: "envelope_hi",
                pass: r.rho_max <= r.envelope_hi + env_a,
                slack: r.envelope_hi + env_a - r.rho_max,
            },
            BoundCheck {
                name: "f_norm_growth",
                pass: r.f_norm_q <= f_bound,
                slack: f_bound - r.f_norm_q,
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::transport;

    #[test]
    fn curl_defect_of_constant_tensor_is_exactly_zero() {
        let g = Grid::cubic(3, 8).unwrap();
        let f = TensorField::from_fn(g, |_| {
            [[1.0, 0.3, -0.2], [0.0, 0.9, 0.5], [0.1, 0.0, 1.1]]
        });
        let (field, max) = curl_defect(&f).unwrap();
        assert_eq!(max, 0.0);
        assert!(field.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn curl_defect_of_conformal_field_matches_brute_force() {
        // F = c(x) I violates compatibility; the defect is |c| |dc| off the
        // diagonal pattern. Verified against a naive index-summation oracle
        // sharing only the derivative fields.
        let g = Grid::cubic(2, 32).unwrap();
        let f = TensorField::from_fn(g, |x| {
            let c = 1.0 + 0.5 * x[0].sin() * x[1].cos();
            [[c, 0.0, 0.0], [0.0, c, 0.0], [0.0; 3]]
        });
        let (field, max) = curl_defect(&f).unwrap();

        // Oracle: loop everything naively.
        let mut dfc = vec![vec![vec![Vec::new(); 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for l in 0..2 {
                    dfc[i][j][l] = ops::diff1(&g, f.comp(i, j), l);
                }
            }
        }
        let mut worst_global = 0.0f64;
        for idx in 0..g.points() {
            let m = f.mat_at(idx);
            let mut worst = 0.0f64;
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let mut s = 0.0;
                        for l in 0..2 {
                            s += m[l][k] * dfc[i][j][l][idx] - m[l][j] * dfc[i][k][l][idx];
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
            assert_eq!(field.data()[idx], worst, "at {idx}");
            worst_global = worst_global.max(worst);
        }
        assert_eq!(max, worst_global);

        // Analytic pattern: max over (i,j,k) equals |c| * max |dc|
        // pointwise; check at one interior node.
        let idx = g.index([7, 9, 0]);
        let x = g.position([7, 9, 0]);
        let c = 1.0 + 0.5 * x[0].sin() * x[1].cos();
        let dcx = 0.5 * x[0].cos() * x[1].cos();
        let dcy = -0.5 * x[0].sin() * x[1].sin();
        let expect = c.abs() * dcx.abs().max(dcy.abs());
        assert!((field.data()[idx] - expect).abs() < 1e-3);
    }

    #[test]
    fn growth_check_trivial_cases() {
        // m0 = 0 and a defect within the allowance passes.
        let check = curl_growth_check(&[(0.0, 1.0), (1.0, 1.0)], 0.0, 1e-5, 1e-3);
        assert!(check.pass);
        // Zero velocity history: bound reduces to m0 + allowance.
        let check = curl_growth_check(&[(0.0, 0.0), (1.0, 0.0)], 2.0, 2.0, 0.0);
        assert!(check.pass);
        assert_eq!(check.slack, 0.0);
        let check = curl_growth_check(&[(0.0, 0.0), (1.0, 0.0)], 2.0, 2.0001, 0.0);
        assert!(!check.pass);
    }

    #[test]
    fn compatibility_divergence_trivial_and_constructed() {
        let g = Grid::cubic(2, 32).unwrap();
        let rho = ScalarField::constant(g, 1.0);
        let f = TensorField::identity(g);
        assert_eq!(
            elastic_compatibility_divergence(&rho, &f).unwrap(),
            0.0
        );

        // Constructed compatible data: F = (grad Psi)^{-1}, rho = det grad
        // Psi for an explicit periodic inverse map Psi = x - psi(x). The
        // cofactor identity makes div(rho F^T) vanish analytically, so the
        // discrete norm is pure truncation error at order 4.
        let mut norms = Vec::new();
        for n in [32usize, 64] {
            let g = Grid::cubic(2, n).unwrap();
            let eps = 0.1;
            let (rho, f) = compatible_data(g, eps);
            norms.push(elastic_compatibility_divergence(&rho, &f).unwrap());
        }
        assert!(norms[0] / norms[1] > 10.0, "order ~4: {norms:?}");
        assert!(norms[1] < 1e-4);
    }

    /// Compatible initial data from an explicit periodic inverse map with
    /// genuinely coupled coordinates.
    fn compatible_data(g: Grid, eps: f64) -> (ScalarField, TensorField) {
        // Psi(x) = x - eps (sin(x1 + 2 x2), cos(2 x1 - x2)); B = grad Psi;
        // F = B^{-1}, rho = det B.
        let b_of = move |x: [f64; 3]| {
            let cp = (x[0] + 2.0 * x[1]).cos();
            let sm = (2.0 * x[0] - x[1]).sin();
            [
                [1.0 - eps * cp, -2.0 * eps * cp, 0.0],
                [2.0 * eps * sm, 1.0 - eps * sm, 0.0],
                [0.0; 3],
            ]
        };
        let rho = ScalarField::from_fn(g, move |x| {
            let b = b_of(x);
            b[0][0] * b[1][1] - b[0][1] * b[1][0]
        });
        let f = TensorField::from_fn(g, move |x| {
            let b = b_of(x);
            let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
            [
                [b[1][1] / det, -b[0][1] / det, 0.0],
                [-b[1][0] / det, b[0][0] / det, 0.0],
                [0.0; 3],
            ]
        });
        (rho, f)
    }

    #[test]
    fn volume_defect_zero_at_rest() {
        let g = Grid::cubic(2, 16).unwrap();
        let s = State::equilibrium(g);
        let delta = VectorField::zeros(g);
        assert_eq!(material_volume_defect(&s, &s, &delta).unwrap(), 0.0);
    }

    #[test]
    fn volume_defect_single_step_is_second_order() {
        // One transport step of compatible unit-weight data under a smooth
        // flow; oracle integrates the characteristic ODE at dt/100.
        let g = Grid::cubic(2, 64).unwrap();
        let v = VectorField::from_fn(g, |x| [0.3 * x[1].sin(), 0.2 * x[0].sin(), 0.0]);
        let rho0 = ScalarField::constant(g, 1.0);
        let f0 = TensorField::identity(g);
        let s0 = State::new(0.0, rho0, VectorField::zeros(g), f0).unwrap();
        let mut defects = Vec::new();
        for dt in [0.1, 0.05] {
            let dp = transport::trace_departure_points(&v, dt).unwrap();
            let rho1 = transport::advect_density(&s0.rho, &dp, dt, false, None).unwrap();
            let f1 = transport::advect_deformation(&s0.f, &dp, dt, false, None).unwrap();
            let s1 = State::new(dt, rho1, v.clone(), f1).unwrap();
            // delta after one step is foot - x.
            let mut delta = VectorField::zeros(g);
            for c in 0..2 {
                let comp: Vec<f64> = (0..g.points())
                    .map(|idx| {
                        let x = g.position(g.coords(idx));
                        dp.feet()[idx][c] - x[c]
                    })
                    .collect();
                delta.comp_mut(c).copy_from_slice(&comp);
            }
            defects.push(material_volume_defect(&s1, &s0, &delta).unwrap());
        }
        // rho0 det F0 = 1 everywhere, so the defect is the scheme's own
        // O(dt^2) error.
        assert!(defects[0] < 5e-3, "{defects:?}");
        assert!(defects[0] / defects[1] > 3.0, "{defects:?}");
    }

    #[test]
    fn energy_report_closed_forms() {
        let g = Grid::cubic(2, 32).unwrap();
        let law = PressureLaw::default();
        let s = State::equilibrium(g);
        let e = energy_report(&s, &law).unwrap();
        let vol = g.volume();
        assert_eq!(e.kinetic, 0.0);
        assert!((e.elastic - 0.5 * 2.0 * vol).abs() < 1e-10);
        assert_eq!(e.grad_u_l2, 0.0);
        // Pi(1) = a/(gamma-1) = 1/0.4 = 2.5
        assert!((e.potential - 2.5 * vol).abs() < 1e-9);

        // Kinetic of u = (sin x1, 0) with rho = 1: pi^2 in 2D.
        let s = State::new(
            0.0,
            ScalarField::constant(g, 1.0),
            VectorField::from_fn(g, |x| [x[0].sin(), 0.0, 0.0]),
            TensorField::identity(g),
        )
        .unwrap();
        let e = energy_report(&s, &law).unwrap();
        let expect = std::f64::consts::PI.powi(2);
        assert!((e.kinetic - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn gamma_one_potential_uses_log_branch() {
        let law = PressureLaw::new(2.0, 1.0).unwrap();
        let rho = 1.7;
        assert!((law.potential(rho) - 2.0 * rho * rho.ln()).abs() < 1e-15);
    }

    #[test]
    fn suite_is_read_only() {
        let g = Grid::cubic(2, 16).unwrap();
        let s = State::new(
            0.0,
            ScalarField::from_fn(g, |x| 1.0 + 0.2 * x[0].sin()),
            VectorField::from_fn(g, |x| [0.1 * x[1].sin(), 0.0, 0.0]),
            TensorField::identity(g),
        )
        .unwrap();
        let before: Vec<u64> = s
            .rho
            .data()
            .iter()
            .chain(s.u.comp(0))
            .chain(s.f.comp(0, 0))
            .map(|v| v.to_bits())
            .collect();
        let mut suite = MonitorSuite::new(&s, MonitorConfig::default()).unwrap();
        let dp = transport::trace_departure_points(&s.u, 0.01).unwrap();
        let info = StepInfo {
            dp: &dp,
            picard_iters: 1,
            lame_iters: 0,
            dt: 0.01,
        };
        let _ = suite.advance(&s, &info).unwrap();
        let after: Vec<u64> = s
            .rho
            .data()
            .iter()
            .chain(s.u.comp(0))
            .chain(s.f.comp(0, 0))
            .map(|v| v.to_bits())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn envelope_reduces_to_initial_extrema_at_rest() {
        let g = Grid::cubic(2, 16).unwrap();
        let s = State::new(
            0.0,
            ScalarField::from_fn(g, |x| 1.0 + 0.25 * x[0].sin()),
            VectorField::zeros(g),
            TensorField::identity(g),
        )
        .unwrap();
        let suite = MonitorSuite::new(&s, MonitorConfig::default()).unwrap();
        let r = suite.initial_report();
        assert_eq!(r.envelope_lo, s.rho.min());
        assert_eq!(r.envelope_hi, s.rho.max());
        let checks = suite.check_bounds(r);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn csv_row_has_header_arity() {
        let g = Grid::cubic(2, 16).unwrap();
        let s = State::equilibrium(g);
        let suite = MonitorSuite::new(&s, MonitorConfig::default()).unwrap();
        let row = suite.initial_report().csv_row();
        assert_eq!(
            row.split(',').count(),
            MonitorReport::CSV_HEADER.split(',').count()
        );
    }
}
