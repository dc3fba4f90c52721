//! Time stepping: the per-step Picard fixed point over the velocity, and
//! the outer simulation loop with adaptive dt halving.
//!
//! One step freezes a velocity iterate `v`, transports the density and
//! deformation gradient along its characteristics, assembles the momentum
//! right-hand side from the transported fields, and solves the implicit
//! momentum system for the next iterate. The loop stops when the relative
//! velocity change drops below the Picard tolerance; the accepted state is
//! rebuilt by re-advecting with the converged velocity.

use crate::constitutive::{self, PressureLaw};
use crate::error::Error;
use crate::field::{check_same_grid, ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::lame::{self, LameProblem, Preconditioner};
use crate::monitors::{MonitorReport, MonitorSuite, StepInfo};
use crate::ops::{self, DiscreteNorm, NormKind};
use crate::transport::{self, DeparturePoints};

/// Physical coefficients of the momentum balance.
#[derive(Debug, Clone, Copy)]
pub struct Physics {
    pub mu: f64,
    pub lambda: f64,
    pub pressure: PressureLaw,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            mu: 1.0,
            lambda: 0.0,
            pressure: PressureLaw::default(),
        }
    }
}

/// The solution triple at one time level. Construction validates
/// positivity of the density, finiteness, and grid agreement.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub rho: ScalarField,
    pub u: VectorField,
    pub f: TensorField,
}

impl State {
    pub fn new(t: f64, rho: ScalarField, u: VectorField, f: TensorField) -> Result<Self, Error> {
        check_same_grid(rho.grid(), u.grid(), "State")?;
        check_same_grid(rho.grid(), f.grid(), "State")?;
        rho.validate_positive()?;
        rho.validate_finite("State density")?;
        u.validate_finite("State velocity")?;
        f.validate_finite("State deformation gradient")?;
        Ok(State { t, rho, u, f })
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    /// Equilibrium state: unit density, zero velocity, identity gradient.
    pub fn equilibrium(grid: Grid) -> Self {
        State {
            t: 0.0,
            rho: ScalarField::constant(grid, 1.0),
            u: VectorField::zeros(grid),
            f: TensorField::identity(grid),
        }
    }
}

/// Per-step solver knobs.
#[derive(Debug, Clone)]
pub struct StepConfig {
    pub dt: f64,
    /// Floor for adaptive halving.
    pub dt_min: f64,
    /// Relative L2 change threshold for the Picard loop.
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Under-relaxation weight on the new velocity iterate.
    pub relaxation: f64,
    pub lame_tol: f64,
    pub lame_max_iter: usize,
    pub preconditioner: Preconditioner,
    /// Abort when an iterate's L2 norm exceeds this radius.
    pub ball_radius_guard: Option<f64>,
    pub monotone_advection: bool,
    pub exact_propagator: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 0.01,
            dt_min: 1e-10,
            picard_tol: 1e-8,
            max_picard: 50,
            relaxation: 1.0,
            lame_tol: 1e-10,
            lame_max_iter: 500,
            preconditioner: Preconditioner::FftConstantCoefficient,
            ball_radius_guard: None,
            monotone_advection: true,
            exact_propagator: false,
        }
    }
}

impl StepConfig {
    fn validate(&self) -> Result<(), Error> {
        let mut errs = Vec::new();
        if !(self.dt > 0.0) {
            errs.push(format!("dt = {} violates dt > 0", self.dt));
        }
        if self.dt_min > self.dt {
            errs.push(format!(
                "dt_min = {} violates dt_min <= dt = {}",
                self.dt_min, self.dt
            ));
        }
        if !(self.picard_tol > 0.0) {
            errs.push(format!(
                "picard_tol = {} violates picard_tol > 0",
                self.picard_tol
            ));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            errs.push(format!(
                "relaxation = {} violates 0 < relaxation <= 1",
                self.relaxation
            ));
        }
        if self.max_picard < 1 {
            errs.push("max_picard must be >= 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Per-iteration record of the fixed-point loop.
#[derive(Debug, Clone)]
pub struct PicardTrace {
    /// Relative change per iteration, `|v_new - v| / max(|v|, 1e-14)`.
    pub changes: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Manufactured source fields, evaluated at the step's target time.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub g_rho: ScalarField,
    pub g_u: VectorField,
    pub g_f: TensorField,
}

/// Supplies manufactured sources to the simulation loop.
pub trait ForcingSource: Sync {
    fn at(&self, grid: &Grid, t: f64) -> Result<Forcing, Error>;
}

/// `-rho (v . grad) v - grad P(rho) + div(rho F F^T)`.
pub fn assemble_momentum_rhs(
    rho: &ScalarField,
    v: &VectorField,
    f: &TensorField,
    law: &PressureLaw,
) -> Result<VectorField, Error> {
    check_same_grid(rho.grid(), v.grid(), "assemble_momentum_rhs")?;
    check_same_grid(rho.grid(), f.grid(), "assemble_momentum_rhs")?;
    let grid = *rho.grid();
    let dim = grid.dim();

    let p = constitutive::pressure(rho, law)?;
    let grad_p = ops::apply_gradient(&p)?;
    let elastic = constitutive::cauchy_elastic_source(rho, f)?;
    let gradv = ops::velocity_gradient(v)?;

    let mut out = VectorField::zeros(grid);
    for i in 0..dim {
        let gp = grad_p.comp(i);
        let el = elastic.comp(i);
        let r = rho.data();
        let gv: Vec<&[f64]> = (0..dim).map(|j| gradv.comp(i, j)).collect();
        let vc: Vec<&[f64]> = (0..dim).map(|j| v.comp(j)).collect();
        use rayon::prelude::*;
        out.comp_mut(i)
            .par_iter_mut()
            .enumerate()
            .for_each(|(idx, o)| {
                let mut conv = 0.0;
                for j in 0..dim {
                    conv += vc[j][idx] * gv[j][idx];
                }
                *o = -r[idx] * conv - gp[idx] + el[idx];
            });
    }
    out.validate_finite("assemble_momentum_rhs output")?;
    Ok(out)
}

/// Everything one accepted step hands back to the caller.
pub struct StepOutcome {
    pub state: State,
    pub trace: PicardTrace,
    /// Departure points of the final (converged-velocity) advection.
    pub dp: DeparturePoints,
    /// Total momentum-solver iterations across the Picard loop.
    pub lame_iters: usize,
}

/// One time step of the fixed-point map over the velocity.
pub fn picard_step(
    s: &State,
    phys: &Physics,
    cfg: &StepConfig,
    forcing: Option<&Forcing>,
) -> Result<StepOutcome, Error> {
    cfg.validate()?;
    let dt = cfg.dt;
    let theta = cfg.relaxation;

    let mut v = s.u.clone();
    let mut u_next = s.u.clone();
    let mut changes = Vec::new();
    let mut lame_iters = 0usize;
    let mut converged = false;

    for _ in 0..cfg.max_picard {
        let dp = transport::trace_departure_points(&v, dt)?;
        let rho_k = transport::advect_density(
            &s.rho,
            &dp,
            dt,
            cfg.monotone_advection,
            forcing.map(|f| &f.g_rho),
        )?;
        let f_k = transport::advect_deformation(
            &s.f,
            &dp,
            dt,
            cfg.exact_propagator,
            forcing.map(|f| &f.g_f),
        )?;
        let mut rhs = assemble_momentum_rhs(&rho_k, &v, &f_k, &phys.pressure)?;
        if let Some(frc) = forcing {
            rhs = rhs.axpy(1.0, &frc.g_u)?;
        }
        let problem = LameProblem::new(&rho_k, phys.mu, phys.lambda, dt, &rhs, &s.u)?;
        let (u1, stats) =
            lame::solve_momentum(&problem, cfg.lame_tol, cfg.lame_max_iter, cfg.preconditioner)?;
        lame_iters += stats.iterations;

        let v_next = if theta == 1.0 {
            u1.clone()
        } else {
            u1.scale(theta).axpy(1.0 - theta, &v)?
        };
        let change = v_next.sub(&v)?.norm_l2() / v.norm_l2().max(1e-14);
        changes.push(change);

        if let Some(guard) = cfg.ball_radius_guard {
            let norm = v_next.discrete_norm(NormKind::L2)?;
            if norm > guard {
                return Err(Error::NormBlowup { norm, guard });
            }
        }

        v = v_next;
        u_next = u1;
        if change <= cfg.picard_tol {
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(Error::PicardDiverged {
            iterations: changes.len(),
            last_change: *changes.last().unwrap_or(&f64::NAN),
        });
    }

    // Rebuild the accepted state with the converged velocity.
    let dp = transport::trace_departure_points(&v, dt)?;
    let rho_new = transport::advect_density(
        &s.rho,
        &dp,
        dt,
        cfg.monotone_advection,
        forcing.map(|f| &f.g_rho),
    )?;
    let f_new = transport::advect_deformation(
        &s.f,
        &dp,
        dt,
        cfg.exact_propagator,
        forcing.map(|f| &f.g_f),
    )?;
    let iterations = changes.len();
    let state = State::new(s.t + dt, rho_new, u_next, f_new)?;
    Ok(StepOutcome {
        state,
        trace: PicardTrace {
            changes,
            converged,
            iterations,
        },
        dp,
        lame_iters,
    })
}

/// Consumes per-step results; the CLI streams them to disk, tests collect
/// them in memory.
pub trait StepObserver {
    fn on_step(&mut self, state: &State, report: &MonitorReport) -> Result<(), Error>;
}

/// Observer that drops everything.
pub struct NullObserver;

impl StepObserver for NullObserver {
    fn on_step(&mut self, _state: &State, _report: &MonitorReport) -> Result<(), Error> {
        Ok(())
    }
}

/// Aggregate result of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub final_state: State,
    pub steps: usize,
    pub halvings: usize,
    pub final_dt: f64,
    pub total_picard: usize,
    pub total_lame: usize,
}

const MAX_HALVINGS: usize = 10;

/// Advance to `t_final`, emitting one monitor report per accepted step.
///
/// A Picard divergence (or a CFL refusal, which is the same disease) halves
/// dt, up to ten times and never below `dt_min`; running out of halvings
/// aborts with diagnostics.
pub fn run_simulation(
    initial: State,
    t_final: f64,
    phys: &Physics,
    cfg: &StepConfig,
    suite: &mut MonitorSuite,
    observer: &mut dyn StepObserver,
    forcing: Option<&dyn ForcingSource>,
) -> Result<RunSummary, Error> {
    cfg.validate()?;
    if !(t_final > initial.t) {
        return Err(Error::Config(vec![format!(
            "t_final = {t_final} violates t_final > t0 = {}",
            initial.t
        )]));
    }
    let grid = *initial.rho.grid();
    observer.on_step(&initial, suite.initial_report())?;

    let mut state = initial;
    let mut dt = cfg.dt;
    let mut halvings = 0usize;
    let mut steps = 0usize;
    let mut total_picard = 0usize;
    let mut total_lame = 0usize;
    let eps = 1e-12 * t_final.abs().max(1.0);

    while state.t < t_final - eps {
        let dt_step = dt.min(t_final - state.t);
        let forcing_eval = match forcing {
            Some(src) => Some(src.at(&grid, state.t + dt_step)?),
            None => None,
        };
        let step_cfg = StepConfig {
            dt: dt_step,
            ..cfg.clone()
        };
        match picard_step(&state, phys, &step_cfg, forcing_eval.as_ref()) {
            Ok(out) => {
                let info = StepInfo {
                    dp: &out.dp,
                    picard_iters: out.trace.iterations,
                    lame_iters: out.lame_iters,
                    dt: dt_step,
                };
                let (report, checks) = suite.advance(&out.state, &info)?;
                if suite.config().fatal {
                    if let Some(bad) = checks.iter().find(|c| !c.pass) {
                        return Err(Error::InvariantFailure {
                            t: out.state.t,
                            detail: format!("{} violated (slack {:e})", bad.name, bad.slack),
                        });
                    }
                }
                observer.on_step(&out.state, &report)?;
                total_picard += out.trace.iterations;
                total_lame += out.lame_iters;
                steps += 1;
                state = out.state;
            }
            Err(Error::PicardDiverged { .. }) | Err(Error::CflViolation { .. }) => {
                halvings += 1;
                let next_dt = dt / 2.0;
                if halvings > MAX_HALVINGS || next_dt < cfg.dt_min {
                    return Err(Error::DtUnderflow {
                        t: state.t,
                        dt: next_dt,
                        dt_min: cfg.dt_min,
                        halvings,
                    });
                }
                dt = next_dt;
            }
            Err(other) => return Err(other),
        }
    }

    Ok(RunSummary {
        final_state: state,
        steps,
        halvings,
        final_dt: dt,
        total_picard,
        total_lame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitors::MonitorConfig;

    fn small_cfg(dt: f64) -> StepConfig {
        StepConfig {
            dt,
            ..StepConfig::default()
        }
    }

    #[test]
    fn rhs_vanishes_at_equilibrium_exactly() {
        let g = Grid::cubic(2, 16).unwrap();
        let rho = ScalarField::constant(g, 1.3);
        let v = VectorField::zeros(g);
        let f = TensorField::identity(g);
        let rhs = assemble_momentum_rhs(&rho, &v, &f, &PressureLaw::default()).unwrap();
        assert_eq!(rhs.norm_l2(), 0.0);
    }

    #[test]
    fn rhs_pressure_and_elastic_terms_cancel_for_identity_law() {
        // v = 0, F = I, gamma = a = 1: grad P = grad rho cancels the
        // elastic divergence exactly at the discrete level too.
        let g = Grid::cubic(2, 32).unwrap();
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.1 * x[0].sin());
        let v = VectorField::zeros(g);
        let f = TensorField::identity(g);
        let law = PressureLaw::new(1.0, 1.0).unwrap();
        let rhs = assemble_momentum_rhs(&rho, &v, &f, &law).unwrap();
        assert_eq!(rhs.norm_l2(), 0.0);
    }

    #[test]
    fn rhs_matches_term_by_term_reassembly() {
        let g = Grid::cubic(2, 16).unwrap();
        let rho = ScalarField::from_fn(g, |x| 1.0 + 0.2 * (x[0] + x[1]).sin());
        let v = VectorField::from_fn(g, |x| [0.3 * x[1].sin(), -0.2 * x[0].cos(), 0.0]);
        let f = TensorField::from_fn(g, |x| {
            let mut m = crate::field::mat_identity(2);
            m[0][1] = 0.1 * x[0].sin();
            m
        });
        let law = PressureLaw::default();
        let rhs = assemble_momentum_rhs(&rho, &v, &f, &law).unwrap();

        // Independent reassembly with separate operator calls.
        let p = constitutive::pressure(&rho, &law).unwrap();
        let gp = ops::apply_gradient(&p).unwrap();
        let el = constitutive::cauchy_elastic_source(&rho, &f).unwrap();
        let gradv = ops::velocity_gradient(&v).unwrap();
        for i in 0..2 {
            for idx in 0..g.points() {
                let conv: f64 = (0..2)
                    .map(|j| v.comp(j)[idx] * gradv.comp(i, j)[idx])
                    .sum();
                let expect = -rho.data()[idx] * conv - gp.comp(i)[idx] + el.comp(i)[idx];
                let got = rhs.comp(i)[idx];
                assert!(
                    (got - expect).abs() <= 1e-14 * expect.abs().max(1.0),
                    "component {i} at {idx}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn equilibrium_converges_in_one_iteration_and_is_preserved() {
        let g = Grid::cubic(2, 16).unwrap();
        let s = State::equilibrium(g);
        let out = picard_step(&s, &Physics::default(), &small_cfg(0.05), None).unwrap();
        assert_eq!(out.trace.iterations, 1);
        assert!(out.trace.converged);
        assert_eq!(out.state.rho.data(), s.rho.data());
        assert_eq!(out.state.u.norm_l2(), 0.0);
        for c in 0..4 {
            assert_eq!(out.state.f.comps()[c], s.f.comps()[c]);
        }
    }

    #[test]
    fn acoustic_step_is_first_order_in_dt() {
        // Against a dt/16 reference, the one-step error at fixed target
        // time halves when dt halves (implicit-Euler order).
        let g = Grid::cubic(2, 32).unwrap();
        let phys = Physics::default();
        let make_state = || {
            State::new(
                0.0,
                ScalarField::from_fn(g, |x| 1.0 + 1e-3 * x[0].sin()),
                VectorField::zeros(g),
                TensorField::identity(g),
            )
            .unwrap()
        };
        let t_target = 0.08;
        let run_to = |dt: f64| {
            let mut s = make_state();
            let cfg = StepConfig {
                dt,
                picard_tol: 1e-12,
                ..StepConfig::default()
            };
            let n = (t_target / dt).round() as usize;
            for _ in 0..n {
                s = picard_step(&s, &phys, &cfg, None).unwrap().state;
            }
            s
        };
        let reference = run_to(t_target / 16.0);
        let coarse = run_to(t_target);
        let half = run_to(t_target / 2.0);
        let err_c = coarse.u.sub(&reference.u).unwrap().norm_l2();
        let err_h = half.u.sub(&reference.u).unwrap().norm_l2();
        let order = (err_c / err_h).log2();
        assert!(
            (0.6..2.6).contains(&order),
            "implicit Euler order ~1, got {order} ({err_c:e}, {err_h:e})"
        );
    }

    #[test]
    fn picard_contraction_improves_when_dt_halves() {
        let g = Grid::cubic(2, 32).unwrap();
        let phys = Physics::default();
        let state = State::new(
            0.0,
            ScalarField::from_fn(g, |x| 1.0 + 0.1 * x[0].sin()),
            VectorField::from_fn(g, |x| [0.1 * x[1].sin(), 0.1 * x[0].cos(), 0.0]),
            TensorField::identity(g),
        )
        .unwrap();
        let mut rates = Vec::new();
        let mut iters = Vec::new();
        for dt in [0.08, 0.04, 0.02] {
            let cfg = StepConfig {
                dt,
                picard_tol: 1e-13,
                max_picard: 60,
                ..StepConfig::default()
            };
            let out = picard_step(&state, &phys, &cfg, None).unwrap();
            iters.push(out.trace.iterations);
            let ch = &out.trace.changes;
            // Geometric decay rate from consecutive changes, skipping the
            // first (guess-dependent) entry.
            let mut ratios = Vec::new();
            for w in ch.windows(2).skip(1) {
                if w[0] > 1e-14 {
                    ratios.push(w[1] / w[0]);
                }
            }
            let rate = ratios.iter().sum::<f64>() / ratios.len() as f64;
            rates.push(rate);
        }
        assert!(
            rates[0] > rates[1] && rates[1] > rates[2],
            "contraction rates must improve: {rates:?}"
        );
        assert!(
            iters[0] >= iters[1] && iters[1] >= iters[2],
            "iteration count must be non-increasing as dt shrinks: {iters:?}"
        );
    }

    #[test]
    fn divergence_reports_picard_error() {
        let g = Grid::cubic(2, 16).unwrap();
        let state = State::new(
            0.0,
            ScalarField::from_fn(g, |x| 1.0 + 0.3 * x[0].sin()),
            VectorField::from_fn(g, |x| [0.5 * x[1].sin(), 0.5 * x[0].sin(), 0.0]),
            TensorField::identity(g),
        )
        .unwrap();
        let cfg = StepConfig {
            dt: 0.05,
            max_picard: 1,
            picard_tol: 1e-14,
            ..StepConfig::default()
        };
        match picard_step(&state, &Physics::default(), &cfg, None) {
            Err(Error::PicardDiverged { iterations, .. }) => assert_eq!(iterations, 1),
            other => panic!("expected PicardDiverged, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn ball_guard_trips_on_tiny_radius() {
        let g = Grid::cubic(2, 16).unwrap();
        let state = State::new(
            0.0,
            ScalarField::from_fn(g, |x| 1.0 + 0.2 * x[0].sin()),
            VectorField::from_fn(g, |x| [0.2 * x[1].sin(), 0.0, 0.0]),
            TensorField::identity(g),
        )
        .unwrap();
        let cfg = StepConfig {
            dt: 0.02,
            ball_radius_guard: Some(1e-6),
            ..StepConfig::default()
        };
        assert!(matches!(
            picard_step(&state, &Physics::default(), &cfg, None),
            Err(Error::NormBlowup { .. })
        ));
    }

    #[test]
    fn equilibrium_run_is_exactly_stationary() {
        let g = Grid::cubic(2, 16).unwrap();
        let initial = State::equilibrium(g);
        let phys = Physics::default();
        let cfg = small_cfg(0.01);
        let mut suite = MonitorSuite::new(&initial, MonitorConfig::default()).unwrap();
        let summary = run_simulation(
            initial.clone(),
            1.0,
            &phys,
            &cfg,
            &mut suite,
            &mut NullObserver,
            None,
        )
        .unwrap();
        assert_eq!(summary.steps, 100);
        assert_eq!(summary.halvings, 0);
        let d = summary.final_state.rho.sub(&initial.rho).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        assert_eq!(summary.final_state.u.norm_l2(), 0.0);
    }

    #[test]
    fn dt_underflow_aborts_with_diagnostics() {
        let g = Grid::cubic(2, 16).unwrap();
        let state = State::new(
            0.0,
            ScalarField::from_fn(g, |x| 1.0 + 0.3 * x[0].sin()),
            VectorField::from_fn(g, |x| [0.4 * x[1].sin(), 0.0, 0.0]),
            TensorField::identity(g),
        )
        .unwrap();
        let phys = Physics::default();
        // max_picard 1 cannot converge; halving runs out.
        let cfg = StepConfig {
            dt: 0.01,
            dt_min: 0.005,
            max_picard: 1,
            picard_tol: 1e-14,
            ..StepConfig::default()
        };
        let mut suite = MonitorSuite::new(&state, MonitorConfig::default()).unwrap();
        match run_simulation(state, 1.0, &phys, &cfg, &mut suite, &mut NullObserver, None) {
            Err(Error::DtUnderflow { halvings, .. }) => assert!(halvings >= 1),
            other => panic!("expected DtUnderflow, got {:?}", other.map(|_| ())),
        }
    }
}
