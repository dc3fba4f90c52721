//! Run configuration: a line-oriented `key = value` format with
//! `[section]` headers, full validation with every violation reported, and
//! the built-in initial-condition presets.

use crate::constitutive::PressureLaw;
use crate::error::Error;
use crate::field::{mat_det, Mat3, ScalarField, TensorField, VectorField};
use crate::grid::{Grid, TWO_PI};
use crate::lame::Preconditioner;
use crate::monitors::MonitorConfig;
use crate::snapshot;
use crate::stepper::{Physics, State, StepConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [grid]
    pub dim: usize,
    pub n: Vec<usize>,
    pub length: Vec<f64>,
    // [physics]
    pub mu: f64,
    pub lambda: f64,
    pub pressure_a: f64,
    pub pressure_gamma: f64,
    // [initial]
    pub preset: String,
    pub amplitude: f64,
    pub velocity_amplitude: f64,
    pub rho_file: String,
    pub u_file: String,
    pub f_file: String,
    // [stepping]
    pub dt: f64,
    pub t_final: f64,
    pub dt_min: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
    pub relaxation: f64,
    pub lame_tol: f64,
    pub lame_max_iter: usize,
    pub preconditioner: String,
    /// `0` disables the guard.
    pub ball_radius_guard: f64,
    pub monotone_advection: bool,
    pub exact_propagator: bool,
    // [monitors]
    pub fnorm_q: f64,
    /// `None` means automatic (`10 h^2`).
    pub curl_allowance: Option<f64>,
    pub envelope_allowance: f64,
    pub fnorm_allowance: f64,
    pub fatal: bool,
    // [output]
    pub out_dir: String,
    pub snapshot_every: usize,
    pub csv: String,
    // [run]
    pub threads: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 2,
            n: vec![32, 32],
            length: vec![TWO_PI, TWO_PI],
            mu: 1.0,
            lambda: 0.0,
            pressure_a: 1.0,
            pressure_gamma: 1.4,
            preset: "equilibrium".into(),
            amplitude: 0.0,
            velocity_amplitude: 0.0,
            rho_file: String::new(),
            u_file: String::new(),
            f_file: String::new(),
            dt: 0.01,
            t_final: 1.0,
            dt_min: 1e-10,
            picard_tol: 1e-8,
            max_picard: 50,
            relaxation: 1.0,
            lame_tol: 1e-10,
            lame_max_iter: 500,
            preconditioner: "fft".into(),
            ball_radius_guard: 0.0,
            monotone_advection: true,
            exact_propagator: false,
            fnorm_q: 4.0,
            curl_allowance: None,
            envelope_allowance: 0.0,
            fnorm_allowance: 0.0,
            fatal: false,
            out_dir: "out".into(),
            snapshot_every: 0,
            csv: "monitors.csv".into(),
            threads: 0,
            seed: 42,
        }
    }
}

fn parse_usize_list(v: &str) -> Result<Vec<usize>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_f64_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {v}")),
    }
}

/// Parse a config text. Every malformed line, unknown key, and violated
/// constraint is reported, not just the first.
pub fn parse_config(text: &str) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    let mut errs: Vec<String> = Vec::new();
    let mut section = String::new();
    let mut n_explicit: Option<Vec<usize>> = None;
    let mut length_explicit: Option<Vec<f64>> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) => {
                    let known = [
                        "grid", "physics", "initial", "stepping", "monitors", "output", "run",
                    ];
                    if known.contains(&name) {
                        section = name.to_string();
                    } else {
                        errs.push(format!("line {}: unknown section [{name}]", lineno + 1));
                    }
                }
                None => errs.push(format!("line {}: malformed section header", lineno + 1)),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errs.push(format!("line {}: expected key = value", lineno + 1));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let mut bad = |msg: String| errs.push(format!("line {}: {key}: {msg}", lineno + 1));
        macro_rules! set {
            ($field:expr, $parse:expr) => {
                match $parse {
                    Ok(v) => $field = v,
                    Err(e) => bad(e.to_string()),
                }
            };
        }
        match (section.as_str(), key) {
            ("grid", "dim") => set!(cfg.dim, value.parse::<usize>()),
            ("grid", "n") => match parse_usize_list(value) {
                Ok(v) => n_explicit = Some(v),
                Err(e) => bad(e),
            },
            ("grid", "length") => match parse_f64_list(value) {
                Ok(v) => length_explicit = Some(v),
                Err(e) => bad(e),
            },
            ("physics", "mu") => set!(cfg.mu, value.parse::<f64>()),
            ("physics", "lambda") => set!(cfg.lambda, value.parse::<f64>()),
            ("physics", "pressure_a") => set!(cfg.pressure_a, value.parse::<f64>()),
            ("physics", "pressure_gamma") => set!(cfg.pressure_gamma, value.parse::<f64>()),
            ("initial", "preset") => cfg.preset = value.to_string(),
            ("initial", "amplitude") => set!(cfg.amplitude, value.parse::<f64>()),
            ("initial", "velocity_amplitude") => {
                set!(cfg.velocity_amplitude, value.parse::<f64>())
            }
            ("initial", "rho_file") => cfg.rho_file = value.to_string(),
            ("initial", "u_file") => cfg.u_file = value.to_string(),
            ("initial", "f_file") => cfg.f_file = value.to_string(),
            ("stepping", "dt") => set!(cfg.dt, value.parse::<f64>()),
            ("stepping", "t_final") => set!(cfg.t_final, value.parse::<f64>()),
            ("stepping", "dt_min") => set!(cfg.dt_min, value.parse::<f64>()),
            ("stepping", "picard_tol") => set!(cfg.picard_tol, value.parse::<f64>()),
            ("stepping", "max_picard") => set!(cfg.max_picard, value.parse::<usize>()),
            ("stepping", "relaxation") => set!(cfg.relaxation, value.parse::<f64>()),
            ("stepping", "lame_tol") => set!(cfg.lame_tol, value.parse::<f64>()),
            ("stepping", "lame_max_iter") => set!(cfg.lame_max_iter, value.parse::<usize>()),
            ("stepping", "preconditioner") => cfg.preconditioner = value.to_string(),
            ("stepping", "ball_radius_guard") => {
                set!(cfg.ball_radius_guard, value.parse::<f64>())
            }
            ("stepping", "monotone_advection") => {
                set!(cfg.monotone_advection, parse_bool(value))
            }
            ("stepping", "exact_propagator") => set!(cfg.exact_propagator, parse_bool(value)),
            ("monitors", "fnorm_q") => set!(cfg.fnorm_q, value.parse::<f64>()),
            ("monitors", "curl_allowance") => {
                if value == "auto" {
                    cfg.curl_allowance = None;
                } else {
                    match value.parse::<f64>() {
                        Ok(v) => cfg.curl_allowance = Some(v),
                        Err(e) => bad(e.to_string()),
                    }
                }
            }
            ("monitors", "envelope_allowance") => {
                set!(cfg.envelope_allowance, value.parse::<f64>())
            }
            ("monitors", "fnorm_allowance") => set!(cfg.fnorm_allowance, value.parse::<f64>()),
            ("monitors", "fatal") => set!(cfg.fatal, parse_bool(value)),
            ("output", "dir") => cfg.out_dir = value.to_string(),
            ("output", "snapshot_every") => set!(cfg.snapshot_every, value.parse::<usize>()),
            ("output", "csv") => cfg.csv = value.to_string(),
            ("run", "threads") => set!(cfg.threads, value.parse::<usize>()),
            ("run", "seed") => set!(cfg.seed, value.parse::<u64>()),
            ("", _) => errs.push(format!(
                "line {}: key {key} appears before any [section]",
                lineno + 1
            )),
            (s, k) => errs.push(format!("line {}: unknown key {k} in [{s}]", lineno + 1)),
        }
    }

    // Broadcast single-entry grid lists across the dimension.
    let dim = cfg.dim;
    if let Some(n) = n_explicit {
        cfg.n = if n.len() == 1 { vec![n[0]; dim] } else { n };
    } else {
        cfg.n = vec![cfg.n[0]; dim];
    }
    if let Some(l) = length_explicit {
        cfg.length = if l.len() == 1 { vec![l[0]; dim] } else { l };
    } else {
        cfg.length = vec![TWO_PI; dim];
    }

    errs.extend(cfg.constraint_violations());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

impl RunConfig {
    /// All violated constraints, each naming its inequality.
    fn constraint_violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.dim != 2 && self.dim != 3 {
            errs.push(format!("dim = {} violates dim in {{2, 3}}", self.dim));
        }
        for (a, &n) in self.n.iter().enumerate() {
            if !n.is_power_of_two() || n < 8 {
                errs.push(format!(
                    "n[{a}] = {n} violates power-of-two n >= 8"
                ));
            }
        }
        if !(self.mu > 0.0) {
            errs.push(format!("mu = {} violates mu > 0", self.mu));
        }
        if !(3.0 * self.mu + 2.0 * self.lambda > 0.0) {
            errs.push(format!(
                "3*mu + 2*lambda = {} violates 3mu + 2lambda > 0",
                3.0 * self.mu + 2.0 * self.lambda
            ));
        }
        if !(self.pressure_a > 0.0) {
            errs.push(format!("pressure_a = {} violates a > 0", self.pressure_a));
        }
        if !(self.pressure_gamma >= 1.0) {
            errs.push(format!(
                "pressure_gamma = {} violates gamma >= 1",
                self.pressure_gamma
            ));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt = {} violates dt > 0", self.dt));
        }
        if !(self.picard_tol > 0.0) {
            errs.push(format!(
                "picard_tol = {} violates picard_tol > 0",
                self.picard_tol
            ));
        }
        if self.dt_min > self.dt {
            errs.push(format!(
                "dt_min = {} violates dt_min <= dt = {}",
                self.dt_min, self.dt
            ));
        }
        let known_presets = [
            "equilibrium",
            "acoustic",
            "compatible-deformation",
            "incompatible-deformation",
            "file",
        ];
        if !known_presets.contains(&self.preset.as_str()) {
            errs.push(format!(
                "preset = {} is not one of {known_presets:?}",
                self.preset
            ));
        }
        if self.preset == "file"
            && (self.rho_file.is_empty() || self.u_file.is_empty() || self.f_file.is_empty())
        {
            errs.push("preset = file requires rho_file, u_file, and f_file".into());
        }
        if !["none", "jacobi", "fft"].contains(&self.preconditioner.as_str()) {
            errs.push(format!(
                "preconditioner = {} is not one of none, jacobi, fft",
                self.preconditioner
            ));
        }
        errs
    }

    /// Canonical serialized form; parses back to an equal config.
    pub fn serialize(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        let fl = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let ul = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "[grid]\n\
             dim = {}\n\
             n = {}\n\
             length = {}\n\
             \n[physics]\n\
             mu = {}\n\
             lambda = {}\n\
             pressure_a = {}\n\
             pressure_gamma = {}\n\
             \n[initial]\n\
             preset = {}\n\
             amplitude = {}\n\
             velocity_amplitude = {}\n\
             rho_file = {}\n\
             u_file = {}\n\
             f_file = {}\n\
             \n[stepping]\n\
             dt = {}\n\
             t_final = {}\n\
             dt_min = {}\n\
             picard_tol = {}\n\
             max_picard = {}\n\
             relaxation = {}\n\
             lame_tol = {}\n\
             lame_max_iter = {}\n\
             preconditioner = {}\n\
             ball_radius_guard = {}\n\
             monotone_advection = {}\n\
             exact_propagator = {}\n\
             \n[monitors]\n\
             fnorm_q = {}\n\
             curl_allowance = {}\n\
             envelope_allowance = {}\n\
             fnorm_allowance = {}\n\
             fatal = {}\n\
             \n[output]\n\
             dir = {}\n\
             snapshot_every = {}\n\
             csv = {}\n\
             \n[run]\n\
             threads = {}\n\
             seed = {}\n",
            self.dim,
            ul(&self.n),
            fl(&self.length),
            f(self.mu),
            f(self.lambda),
            f(self.pressure_a),
            f(self.pressure_gamma),
            self.preset,
            f(self.amplitude),
            f(self.velocity_amplitude),
            self.rho_file,
            self.u_file,
            self.f_file,
            f(self.dt),
            f(self.t_final),
            f(self.dt_min),
            f(self.picard_tol),
            self.max_picard,
            f(self.relaxation),
            f(self.lame_tol),
            self.lame_max_iter,
            self.preconditioner,
            f(self.ball_radius_guard),
            self.monotone_advection,
            self.exact_propagator,
            f(self.fnorm_q),
            match self.curl_allowance {
                None => "auto".to_string(),
                Some(v) => f(v),
            },
            f(self.envelope_allowance),
            f(self.fnorm_allowance),
            self.fatal,
            self.out_dir,
            self.snapshot_every,
            self.csv,
            self.threads,
            self.seed
        )
    }

    pub fn grid(&self) -> Result<Grid, Error> {
        Grid::new(self.dim, &self.n, &self.length)
    }

    pub fn physics(&self) -> Result<Physics, Error> {
        Ok(Physics {
            mu: self.mu,
            lambda: self.lambda,
            pressure: PressureLaw::new(self.pressure_a, self.pressure_gamma)?,
        })
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            dt: self.dt,
            dt_min: self.dt_min,
            picard_tol: self.picard_tol,
            max_picard: self.max_picard,
            relaxation: self.relaxation,
            lame_tol: self.lame_tol,
            lame_max_iter: self.lame_max_iter,
            preconditioner: match self.preconditioner.as_str() {
                "none" => Preconditioner::None,
                "jacobi" => Preconditioner::Jacobi,
                _ => Preconditioner::FftConstantCoefficient,
            },
            ball_radius_guard: if self.ball_radius_guard > 0.0 {
                Some(self.ball_radius_guard)
            } else {
                None
            },
            monotone_advection: self.monotone_advection,
            exact_propagator: self.exact_propagator,
        }
    }

    pub fn monitor_config(&self) -> MonitorConfig {
        MonitorConfig {
            q: self.fnorm_q,
            curl_allowance: self.curl_allowance,
            envelope_allowance: self.envelope_allowance,
            fnorm_allowance: self.fnorm_allowance,
            fatal: self.fatal,
        }
    }

    /// Build the configured initial state.
    pub fn initial_state(&self) -> Result<State, Error> {
        let grid = self.grid()?;
        match self.preset.as_str() {
            "equilibrium" => Ok(State::equilibrium(grid)),
            "acoustic" => preset_acoustic(grid, self.amplitude, self.velocity_amplitude),
            "compatible-deformation" => {
                preset_compatible(grid, self.amplitude, self.velocity_amplitude)
            }
            "incompatible-deformation" => {
                preset_incompatible(grid, self.amplitude, self.velocity_amplitude)
            }
            "file" => {
                let rho = snapshot::read_scalar(self.rho_file.as_ref(), &grid)?;
                let u = snapshot::read_vector(self.u_file.as_ref(), &grid)?;
                let f = snapshot::read_tensor(self.f_file.as_ref(), &grid)?;
                State::new(0.0, rho, u, f)
            }
            other => Err(Error::Config(vec![format!("unknown preset {other}")])),
        }
    }
}

/// Longitudinal density wave `rho = 1 + amp sin(x1)` with a compressive
/// velocity `u1 = vamp sin(x1)`.
pub fn preset_acoustic(grid: Grid, amp: f64, vamp: f64) -> Result<State, Error> {
    State::new(
        0.0,
        ScalarField::from_fn(grid, move |x| 1.0 + amp * x[0].sin()),
        VectorField::from_fn(grid, move |x| [vamp * x[0].sin(), 0.0, 0.0]),
        TensorField::identity(grid),
    )
}

/// Shear-dominated smooth velocity shared by the deformation presets.
fn preset_velocity(grid: Grid, vamp: f64) -> VectorField {
    VectorField::from_fn(grid, move |x| {
        [
            vamp * (x[1].sin() + 0.5 * x[0].sin()),
            vamp * x[0].sin(),
            0.0,
        ]
    })
}

/// Deformation-compatible data built from an explicit periodic inverse
/// map `Psi(x) = x - psi(x)`: `F = (grad Psi)^{-1}` and `rho = det grad
/// Psi`, which satisfies `div(rho F^T) = 0` and the curl identity
/// analytically, with `rho det F = 1`.
pub fn preset_compatible(grid: Grid, amp: f64, vamp: f64) -> Result<State, Error> {
    let dim = grid.dim();
    let b_of = move |x: [f64; 3]| -> Mat3 {
        let mut b = [[0.0; 3]; 3];
        for a in 0..dim {
            b[a][a] = 1.0;
        }
        // grad psi for psi = amp (sin(x1 + 2 x2), cos(2 x1 - x2)) in 2-D,
        // with a third coupled component in 3-D.
        let cp = (x[0] + 2.0 * x[1]).cos();
        let sm = (2.0 * x[0] - x[1]).sin();
        b[0][0] -= amp * cp;
        b[0][1] -= 2.0 * amp * cp;
        b[1][0] += 2.0 * amp * sm;
        b[1][1] -= amp * sm;
        if dim == 3 {
            let cz = (x[2] + 2.0 * x[0]).cos();
            b[2][2] -= amp * cz;
            b[2][0] -= 2.0 * amp * cz;
        }
        b
    };
    let rho = ScalarField::from_fn(grid, move |x| mat_det(dim, &b_of(x)));
    let f = TensorField::from_fn(grid, move |x| {
        let b = b_of(x);
        invert(dim, &b)
    });
    State::new(0.0, rho, preset_velocity(grid, vamp), f)
}

/// Conformal, curl-incompatible deformation `F = (1 + amp sin x1) I` with
/// unit density.
pub fn preset_incompatible(grid: Grid, amp: f64, vamp: f64) -> Result<State, Error> {
    let dim = grid.dim();
    let f = TensorField::from_fn(grid, move |x| {
        let c = 1.0 + amp * x[0].sin();
        let mut m = [[0.0; 3]; 3];
        for a in 0..dim {
            m[a][a] = c;
        }
        m
    });
    State::new(
        0.0,
        ScalarField::constant(grid, 1.0),
        preset_velocity(grid, vamp),
        f,
    )
}

fn invert(dim: usize, m: &Mat3) -> Mat3 {
    let det = mat_det(dim, m);
    let mut inv = [[0.0; 3]; 3];
    match dim {
        2 => {
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
        }
        _ => {
            for i in 0..3 {
                for j in 0..3 {
                    // Adjugate: cofactor of (j, i).
                    let r = [(j + 1) % 3, (j + 2) % 3];
                    let c = [(i + 1) % 3, (i + 2) % 3];
                    inv[i][j] =
                        (m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]]) / det;
                }
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitors;

    #[test]
    fn empty_config_yields_documented_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.dt, 0.01);
        assert_eq!(cfg.pressure_gamma, 1.4);
        assert_eq!(cfg.picard_tol, 1e-8);
    }

    #[test]
    fn negative_mu_is_rejected_naming_the_inequality() {
        let err = parse_config("[physics]\nmu = -1\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("mu > 0"), "{msg}");
    }

    #[test]
    fn ellipticity_violation_is_named() {
        // mu = 0.5, lambda = -1: 1.5 - 2 < 0.
        let err = parse_config("[physics]\nmu = 0.5\nlambda = -1\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("3mu + 2lambda > 0"), "{msg}");
    }

    #[test]
    fn all_errors_are_collected() {
        let err =
            parse_config("[physics]\nmu = -1\n[grid]\nn = 12\n[stepping]\ndt = -0.5\n")
                .unwrap_err();
        match err {
            Error::Config(list) => {
                assert!(list.len() >= 3, "{list:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_errors_not_warnings() {
        assert!(parse_config("[grid]\nresolution = 32\n").is_err());
        assert!(parse_config("[turbo]\nx = 1\n").is_err());
        assert!(parse_config("dim = 2\n").is_err(), "key before section");
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "[grid]\ndim = 3\nn = 8,16,8\nlength = 1.5,6.283185307179586,2.0\n\
                    [physics]\nmu = 0.7\nlambda = -0.3\n\
                    [initial]\npreset = acoustic\namplitude = 1e-3\n\
                    [stepping]\ndt = 0.005\npreconditioner = jacobi\n\
                    [monitors]\ncurl_allowance = 0.125\n\
                    [run]\nthreads = 2\nseed = 7\n";
        let cfg = parse_config(text).unwrap();
        let cfg2 = parse_config(&cfg.serialize()).unwrap();
        assert_eq!(cfg, cfg2);
        // And the auto allowance round-trips too.
        let cfg3 = parse_config("[monitors]\ncurl_allowance = auto\n").unwrap();
        let cfg4 = parse_config(&cfg3.serialize()).unwrap();
        assert_eq!(cfg3, cfg4);
    }

    #[test]
    fn comments_and_broadcast_lists() {
        let cfg = parse_config("[grid]\ndim = 3\nn = 16 # per axis\n").unwrap();
        assert_eq!(cfg.n, vec![16, 16, 16]);
        assert_eq!(cfg.length.len(), 3);
    }

    #[test]
    fn compatible_preset_satisfies_its_identities() {
        let g = Grid::cubic(2, 64).unwrap();
        let s = preset_compatible(g, 0.1, 0.0).unwrap();
        // div(rho F^T) = 0 analytically -> discrete O(h^4).
        let div = monitors::elastic_compatibility_divergence(&s.rho, &s.f).unwrap();
        assert!(div < 1e-4, "div = {div}");
        // Curl identity holds analytically as well.
        let (_, curl) = monitors::curl_defect(&s.f).unwrap();
        assert!(curl < 1e-4, "curl = {curl}");
        // rho det F = 1 pointwise by construction.
        let det = s.f.det_field();
        for idx in 0..g.points() {
            assert!((s.rho.data()[idx] * det.data()[idx] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn compatible_preset_in_3d() {
        let g = Grid::cubic(3, 16).unwrap();
        let s = preset_compatible(g, 0.05, 0.0).unwrap();
        let det = s.f.det_field();
        for idx in 0..g.points() {
            assert!((s.rho.data()[idx] * det.data()[idx] - 1.0).abs() < 1e-12);
        }
        let div = monitors::elastic_compatibility_divergence(&s.rho, &s.f).unwrap();
        assert!(div < 3e-2, "div = {div}");
    }

    #[test]
    fn incompatible_preset_has_nonzero_curl_defect() {
        let g = Grid::cubic(2, 32).unwrap();
        let s = preset_incompatible(g, 0.5, 0.0).unwrap();
        let (_, curl) = monitors::curl_defect(&s.f).unwrap();
        assert!(curl > 0.1, "curl = {curl}");
    }
}
