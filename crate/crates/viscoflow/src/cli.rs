//! Command-line surface: `run`, `mms`, `check`, and `bench` subcommands.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver divergence,
//! 4 invariant failure, 5 I/O failure. Failures print one machine-readable
//! line to stderr: `error code=<n> kind=<kind> msg="..."`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_config, RunConfig};
use crate::error::Error;
use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::lame::{self, LameProblem, Preconditioner};
use crate::mms::{convergence_study, MmsCase};
use crate::monitors::{MonitorReport, MonitorSuite};
use crate::snapshot;
use crate::stepper::{run_simulation, Physics, State, StepConfig, StepObserver};
use crate::transport;

/// Entry point; returns the process exit code.
pub fn run_cli(args: &[String]) -> i32 {
    let result = match args.first().map(|s| s.as_str()) {
        Some("run") => cmd_run(&args[1..]),
        Some("mms") => cmd_mms(&args[1..]),
        Some("check") => cmd_check(&args[1..]),
        Some("bench") => cmd_bench(&args[1..]),
        Some("--help") | Some("-h") | Some("help") => {
            print!("{USAGE}");
            return 0;
        }
        Some(other) => Err(Error::Usage(format!("unknown subcommand {other}"))),
        None => Err(Error::Usage("missing subcommand".into())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            let msg = format!("{e}").replace('\n', " ").replace('"', "'");
            eprintln!("error code={code} kind={} msg=\"{msg}\"", error_kind(&e));
            code
        }
    }
}

const USAGE: &str = "viscoflow <subcommand>

  run    --config <file>
         Advance the configured problem to t_final, writing a monitor CSV
         and optional snapshots to the output directory.

  mms    [--case <name>] [--dim <2|3>] [--levels <n1,n2,n3>] [--dt0 <dt>]
         [--scaling <linear|quadratic>] [--t-final <t>] [--out <csv>]
         [--mu <v>] [--lambda <v>]
         Manufactured-solution convergence study; prints the EOC table.
         Cases: equilibrium, traveling-wave, rotating-deformation.

  check  <snapshot-prefix> [--length <l1,l2,...>]
         Load a snapshot (e.g. out/snap_000004) and print its full
         monitor report.

  bench  [--n <list>] [--dim <2|3>] [--reps <k>] [--seed <s>]
         Time operator application, transport, and momentum solves per
         grid size and print a throughput table.
";

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::Grid(_) | Error::ShapeMismatch(_)
        | Error::InvalidNormOrder { .. } => 2,
        Error::PicardDiverged { .. }
        | Error::SolveDiverged { .. }
        | Error::DtUnderflow { .. }
        | Error::NormBlowup { .. }
        | Error::CflViolation { .. }
        | Error::NonPositiveDensity { .. } => 3,
        Error::InvariantFailure { .. } | Error::NonFinite { .. } => 4,
        Error::Io { .. } | Error::Snapshot(_) => 5,
        Error::Study { source, .. } => exit_code(source),
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Usage(_) => "usage",
        Error::Grid(_) => "grid",
        Error::ShapeMismatch(_) => "shape_mismatch",
        Error::InvalidNormOrder { .. } => "invalid_norm_order",
        Error::PicardDiverged { .. } => "picard_diverged",
        Error::SolveDiverged { .. } => "solve_diverged",
        Error::DtUnderflow { .. } => "dt_underflow",
        Error::NormBlowup { .. } => "norm_blowup",
        Error::CflViolation { .. } => "cfl_violation",
        Error::NonPositiveDensity { .. } => "nonpositive_density",
        Error::InvariantFailure { .. } => "invariant_failure",
        Error::NonFinite { .. } => "non_finite",
        Error::Io { .. } => "io",
        Error::Snapshot(_) => "snapshot",
        Error::Study { .. } => "study",
    }
}

/// Flag parser: `--key value` pairs plus positional arguments.
struct Flags {
    positional: Vec<String>,
    pairs: Vec<(String, String)>,
}

fn parse_flags(args: &[String]) -> Result<Flags, Error> {
    let mut positional = Vec::new();
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if let Some(key) = a.strip_prefix("--") {
            let value = it
                .next()
                .ok_or_else(|| Error::Usage(format!("--{key} requires a value")))?;
            pairs.push((key.to_string(), value.clone()));
        } else {
            positional.push(a.clone());
        }
    }
    Ok(Flags { positional, pairs })
}

impl Flags {
    fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, Error>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Usage(format!("--{key}: {e}"))),
        }
    }

    fn reject_unknown(&self, known: &[&str]) -> Result<(), Error> {
        for (k, _) in &self.pairs {
            if !known.contains(&k.as_str()) {
                return Err(Error::Usage(format!("unknown flag --{k}")));
            }
        }
        Ok(())
    }
}

fn init_threads(config_threads: usize) {
    let n = std::env::var("VISCOFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(config_threads);
    if n > 0 {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunObserver {
    csv: BufWriter<File>,
    csv_path: PathBuf,
    out_dir: PathBuf,
    snapshot_every: usize,
    steps_seen: usize,
    last_snapshot: Option<usize>,
}

impl RunObserver {
    fn new(cfg: &RunConfig) -> Result<Self, Error> {
        let out_dir = PathBuf::from(&cfg.out_dir);
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let csv_path = out_dir.join(&cfg.csv);
        let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut csv = BufWriter::new(file);
        writeln!(csv, "{}", MonitorReport::CSV_HEADER).map_err(|e| Error::io(&csv_path, e))?;
        Ok(RunObserver {
            csv,
            csv_path,
            out_dir,
            snapshot_every: cfg.snapshot_every,
            steps_seen: 0,
            last_snapshot: None,
        })
    }
}

impl StepObserver for RunObserver {
    fn on_step(&mut self, state: &State, report: &MonitorReport) -> Result<(), Error> {
        writeln!(self.csv, "{}", report.csv_row()).map_err(|e| Error::io(&self.csv_path, e))?;
        // Flush per row so an interrupted run leaves a valid prefix.
        self.csv.flush().map_err(|e| Error::io(&self.csv_path, e))?;
        if self.snapshot_every > 0 && self.steps_seen.is_multiple_of(self.snapshot_every) {
            snapshot::write_snapshot(state, &self.out_dir, self.steps_seen)?;
            self.last_snapshot = Some(self.steps_seen);
        }
        self.steps_seen += 1;
        Ok(())
    }
}

fn cmd_run(args: &[String]) -> Result<(), Error> {
    let flags = parse_flags(args)?;
    flags.reject_unknown(&["config"])?;
    let path = flags
        .get("config")
        .ok_or_else(|| Error::Usage("run requires --config <file>".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = parse_config(&text)?;
    init_threads(cfg.threads);

    let initial = cfg.initial_state()?;
    let phys = cfg.physics()?;
    let step_cfg = cfg.step_config();
    let mut suite = MonitorSuite::new(&initial, cfg.monitor_config())?;
    let mut observer = RunObserver::new(&cfg)?;
    let summary = run_simulation(
        initial,
        cfg.t_final,
        &phys,
        &step_cfg,
        &mut suite,
        &mut observer,
        None,
    )?;
    // Always capture the final state when snapshots are on.
    if cfg.snapshot_every > 0 && observer.last_snapshot != Some(summary.steps) {
        snapshot::write_snapshot(&summary.final_state, &observer.out_dir, summary.steps)?;
    }
    println!(
        "run complete: {} steps to t = {:.6e} (dt = {:.3e}, {} halvings, {} Picard iters, {} solver iters)",
        summary.steps,
        summary.final_state.t,
        summary.final_dt,
        summary.halvings,
        summary.total_picard,
        summary.total_lame
    );
    println!("monitor CSV: {}", observer.csv_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// mms
// ---------------------------------------------------------------------------

fn cmd_mms(args: &[String]) -> Result<(), Error> {
    let flags = parse_flags(args)?;
    flags.reject_unknown(&[
        "case", "dim", "levels", "dt0", "scaling", "t-final", "out", "mu", "lambda", "threads",
    ])?;
    init_threads(flags.parse("threads", 0usize)?);
    let case_name = flags.get("case").unwrap_or("traveling-wave");
    let case = MmsCase::from_name(case_name)
        .ok_or_else(|| Error::Usage(format!("unknown case {case_name}")))?;
    let dim: usize = flags.parse("dim", 2)?;
    let levels_raw = flags.get("levels").unwrap_or("16,32,64");
    let ns: Vec<usize> = levels_raw
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Usage(format!("--levels: {e}")))?;
    let dt0: f64 = flags.parse("dt0", 0.1)?;
    let t_final: f64 = flags.parse("t-final", 0.4)?;
    let scaling = flags.get("scaling").unwrap_or("linear");
    let n0 = *ns.first().ok_or_else(|| Error::Usage("empty --levels".into()))? as f64;
    let dts: Vec<f64> = ns
        .iter()
        .map(|&n| match scaling {
            "quadratic" => dt0 * (n0 / n as f64).powi(2),
            _ => dt0 * (n0 / n as f64),
        })
        .collect();
    if scaling != "linear" && scaling != "quadratic" {
        return Err(Error::Usage(format!(
            "--scaling must be linear or quadratic, got {scaling}"
        )));
    }
    let phys = Physics {
        mu: flags.parse("mu", 1.0)?,
        lambda: flags.parse("lambda", 0.0)?,
        ..Physics::default()
    };
    // Monotone clipping is a conservation guard, not an accuracy feature;
    // order measurement runs without it.
    let cfg = StepConfig {
        monotone_advection: false,
        picard_tol: 1e-10,
        ..StepConfig::default()
    };
    let table = convergence_study(case, dim, &ns, &dts, t_final, &phys, &cfg)?;
    print!("{table}");
    if let Some(out) = flags.get("out") {
        std::fs::write(out, table.to_csv()).map_err(|e| Error::io(out, e))?;
        println!("EOC table written to {out}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn cmd_check(args: &[String]) -> Result<(), Error> {
    let flags = parse_flags(args)?;
    flags.reject_unknown(&["length"])?;
    let prefix = flags
        .positional
        .first()
        .ok_or_else(|| Error::Usage("check requires a snapshot prefix".into()))?;
    let length: Option<Vec<f64>> = match flags.get("length") {
        None => None,
        Some(v) => Some(
            v.split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Usage(format!("--length: {e}")))?,
        ),
    };
    let state = snapshot::read_snapshot(Path::new(prefix), length.as_deref())?;
    let suite = MonitorSuite::new(&state, Default::default())?;
    let r = suite.initial_report();
    println!("snapshot {prefix} at t = {:.16e}", r.t);
    println!("mass             = {:.16e}", r.mass);
    println!("curl_defect_max  = {:.16e}", r.curl_defect_max);
    println!("curl_bound       = {:.16e}", r.curl_bound);
    println!("div_rhoFt_norm   = {:.16e}", r.div_rho_ft_norm);
    println!("volume_defect    = {:.16e}", r.volume_defect);
    println!("rho_min          = {:.16e}", r.rho_min);
    println!("rho_max          = {:.16e}", r.rho_max);
    println!("envelope_lo      = {:.16e}", r.envelope_lo);
    println!("envelope_hi      = {:.16e}", r.envelope_hi);
    println!("f_norm_q         = {:.16e}", r.f_norm_q);
    println!("f_norm_bound     = {:.16e}", r.f_norm_bound);
    println!("kinetic          = {:.16e}", r.kinetic);
    println!("elastic          = {:.16e}", r.elastic);
    println!("grad_u_l2        = {:.16e}", r.grad_u_l2);
    for check in suite.check_bounds(r) {
        println!(
            "bound {:<16} {} (slack {:.3e})",
            check.name,
            if check.pass { "pass" } else { "FAIL" },
            check.slack
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn band_limited(grid: Grid, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.gen_range(-3i32..=3) as f64,
                rng.gen_range(-3i32..=3) as f64,
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.05..0.2),
            )
        })
        .collect();
    let dim = grid.dim();
    VectorField::from_fn(grid, move |x| {
        let mut v = [0.0; 3];
        for (c, val) in v.iter_mut().enumerate().take(dim) {
            for (kx, ky, ph, a) in &modes {
                *val += a * (kx * x[0] + ky * x[1] + ph + c as f64).sin();
            }
        }
        v
    })
}

fn cmd_bench(args: &[String]) -> Result<(), Error> {
    let flags = parse_flags(args)?;
    flags.reject_unknown(&["n", "dim", "reps", "seed", "threads"])?;
    init_threads(flags.parse("threads", 0usize)?);
    let dim: usize = flags.parse("dim", 2)?;
    let reps: usize = flags.parse("reps", 20)?;
    let seed: u64 = flags.parse("seed", 42)?;
    let ns: Vec<usize> = flags
        .get("n")
        .unwrap_or("32,64")
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Usage(format!("--n: {e}")))?;

    println!(
        "{:>6} {:>10} {:>22} {:>10} {:>12}",
        "n", "points", "kernel", "ms/call", "Mpoints/s"
    );
    for &n in &ns {
        let grid = Grid::cubic(dim, n)?;
        let points = grid.points();
        let rho = ScalarField::from_fn(grid, |x| 1.0 + 0.3 * x[0].sin() * x[1].cos());
        let u = band_limited(grid, seed);
        let rhs = band_limited(grid, seed + 1);
        let f = TensorField::identity(grid);
        let zero = VectorField::zeros(grid);
        let p = LameProblem::new(&rho, 1.0, 0.0, 0.1, &rhs, &zero)?;

        let report = |kernel: &str, calls: usize, secs: f64| {
            let ms = 1e3 * secs / calls as f64;
            let mpts = points as f64 * calls as f64 / secs / 1e6;
            println!("{n:>6} {points:>10} {kernel:>22} {ms:>10.3} {mpts:>12.1}");
        };

        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = lame::apply_lame_operator(&p, &u)?;
        }
        report("lame_operator", reps, t0.elapsed().as_secs_f64());

        let dt = 0.2 * grid.min_h() / (u.max_magnitude() + 1e-9);
        let t0 = Instant::now();
        for _ in 0..reps {
            let dp = transport::trace_departure_points(&u, dt)?;
            let _ = transport::advect_density(&rho, &dp, dt, true, None)?;
            let _ = transport::advect_deformation(&f, &dp, dt, false, None)?;
        }
        report("transport_step", reps, t0.elapsed().as_secs_f64());

        let t0 = Instant::now();
        let (_, stats) =
            lame::solve_momentum(&p, 1e-8, 500, Preconditioner::FftConstantCoefficient)?;
        let secs = t0.elapsed().as_secs_f64();
        report(
            &format!("momentum_solve({})", stats.iterations),
            1,
            secs,
        );
    }
    Ok(())
}
