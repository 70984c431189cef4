//! Command-line front end: guidance guess, simplified and full solves,
//! trajectory validation and mass sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ascent_core::continuation::{simplified_problem, step_one, step_one_target};
use ascent_core::guidance::{assemble_guess, simulate_closed_loop};
use ascent_core::scenario::BUNDLED;
use ascent_core::sweep::{m0_grid, sweep_m0};
use ascent_core::validate::validate_trajectory;
use ascent_core::{solve, Error, Result, Scenario, Trajectory};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

const EXIT_INVALID: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ascent",
    version,
    about = "Optimal endo-atmospheric ascent trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Guidance-law costate guess and closed-loop trace toward the first target.
    Guess(Common),
    /// Solve the simplified problem of the first step.
    SolveSimplified(Common),
    /// Full pipeline: first step, then continuation.
    Solve(Common),
    /// Check the invariants of a trajectory CSV.
    Validate {
        file: PathBuf,
        /// Homotopy parameter the time-domain file was solved at.
        #[arg(long, default_value_t = 1.0)]
        lambda1: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Solve across a geometric grid of initial masses.
    SweepM0 {
        #[arg(long, default_value_t = 500.0)]
        from: f64,
        #[arg(long, default_value_t = 5000.0)]
        to: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Bundled scenario name (S1, S2, S3) or path to a scenario file.
    #[arg(value_name = "SCENARIO")]
    positional: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    /// Directory for CSV artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Initial mass override [kg].
    #[arg(long)]
    m0: Option<f64>,
    /// Integration steps override.
    #[arg(long)]
    steps: Option<usize>,
    /// Target the final point directly in the first step.
    #[arg(long)]
    shortcut: bool,
    /// JSON report path (defaults to a file in the output directory).
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Common {
    fn scenario_name(&self) -> Result<Option<&str>> {
        match (&self.positional, &self.scenario) {
            (Some(a), Some(b)) if a != b => Err(Error::validation(
                "scenario",
                format!("given twice with different values ({a}, {b})"),
            )),
            (Some(a), _) | (None, Some(a)) => Ok(Some(a)),
            (None, None) => Ok(None),
        }
    }

    fn apply(&self, mut s: Scenario) -> Result<Scenario> {
        if let Some(m0) = self.m0 {
            s.vehicle.m0 = m0;
        }
        if let Some(steps) = self.steps {
            s.solver.steps = steps;
        }
        if self.shortcut {
            s.shortcut_target = true;
        }
        s.validate()?;
        Ok(s)
    }

    fn load(&self) -> Result<Scenario> {
        let name = self
            .scenario_name()?
            .ok_or_else(|| Error::validation("scenario", "no scenario given"))?;
        self.apply(Scenario::load(name)?)
    }

    fn prepare_out(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }

    fn report_path(&self, default: &str) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| self.out.join(default))
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn guess(c: &Common) -> Result<u8> {
    let s = c.load()?;
    let out = c.prepare_out()?;
    let target = step_one_target(&s)?;
    let flight = simulate_closed_loop(&s.y0, &target, &s.vehicle, 1e-3)?;
    flight.write_csv(fs::File::create(out.join("closed_loop.csv"))?)?;
    let local = assemble_guess(&s.y0, &target, &s.vehicle);
    let residual = local.as_ref().ok().and_then(|g| {
        simplified_problem(&s, target)
            .and_then(|p| p.residual_of(&g.costate0, g.s_f))
            .ok()
            .map(|r| r.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    });
    let report = json!({
        "scenario": s.name,
        "target": target,
        "guess": local.as_ref().ok(),
        "guess_error": local.as_ref().err().map(|e| e.to_string()),
        "guess_residual": residual,
        "closed_loop": {
            "samples": flight.samples.len(),
            "initial_range": flight.initial_range,
            "final_range": flight.final_range,
            "gamma_error": flight.gamma_error,
            "chi_error": flight.chi_error,
        },
    });
    write_json(&c.report_path("guess.json"), &report)?;
    println!(
        "{}: closed loop ends at {:.1} m, angle errors ({:.4}, {:.4}) rad",
        s.name, flight.final_range, flight.gamma_error, flight.chi_error
    );
    Ok(0)
}

fn solve_simplified(c: &Common) -> Result<u8> {
    let s = c.load()?;
    let out = c.prepare_out()?;
    let one = step_one(&s)?;
    let traj = simplified_problem(&s, one.x_tilde_f)?
        .trajectory(&one.simplified.costate0, one.simplified.s_f)?;
    traj.save_csv(&out.join("simplified.csv"))?;
    let report = json!({
        "scenario": s.name,
        "target": one.x_tilde_f,
        "guess_source": one.guess_source,
        "guess_residual": one.guess_residual,
        "solution": one.simplified,
    });
    write_json(&c.report_path("simplified.json"), &report)?;
    println!(
        "{}: s_f = {:.1} m, t_f = {:.3} s, {} Newton iterations",
        s.name, one.simplified.s_f, one.simplified.t_f, one.simplified.newton.iterations
    );
    Ok(0)
}

fn solve_full(c: &Common) -> Result<u8> {
    let s = c.load()?;
    let out = c.prepare_out()?;
    let sol = solve(&s)?;
    sol.trajectory.save_csv(&out.join("trajectory.csv"))?;
    write_json(&c.report_path("report.json"), &sol.report)?;
    println!(
        "{}: v(tf) = {:.1} m/s, tf = {:.2} s, {} corrector solves, residual {:.1e}",
        s.name, sol.v_tf, sol.t_f, sol.report.total_corrector_solves, sol.report.final_residual
    );
    Ok(0)
}

fn validate(file: &Path, lambda1: f64, c: &Common) -> Result<u8> {
    let s = c.load()?;
    let traj = Trajectory::load_csv(file)?;
    let report = validate_trajectory(&traj, &s, lambda1)?;
    if let Some(path) = &c.report {
        write_json(path, &report)?;
    }
    for check in &report.checks {
        println!(
            "{} {}: {:.3e} (tolerance {:.1e})",
            if check.passed { "ok  " } else { "FAIL" },
            check.name,
            check.value,
            check.tolerance
        );
    }
    Ok(if report.passed() { 0 } else { EXIT_INVALID })
}

fn sweep(from: f64, to: f64, points: usize, c: &Common) -> Result<u8> {
    let scenarios = match c.scenario_name()? {
        Some(_) => vec![c.load()?],
        None => BUNDLED
            .iter()
            .map(|n| c.apply(Scenario::load(n)?))
            .collect::<Result<Vec<_>>>()?,
    };
    let grid = match c.m0 {
        Some(m0) => vec![m0],
        None => m0_grid(from, to, points)?,
    };
    let out = c.prepare_out()?;
    let rows = sweep_m0(&scenarios, &grid);

    let mut table = String::from("scenario,m0,v_tf,t_f,corrector_solves,error\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scenario,
            r.m0,
            opt(r.v_tf),
            opt(r.t_f),
            r.corrector_solves
                .map(|n| n.to_string())
                .unwrap_or_default(),
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
        match (r.v_tf, r.t_f) {
            (Some(v), Some(t)) => println!(
                "{:>4} m0 = {:>8.1}  v(tf) = {:>7.1}  tf = {:>6.2}",
                r.scenario, r.m0, v, t
            ),
            _ => println!(
                "{:>4} m0 = {:>8.1}  failed: {}",
                r.scenario,
                r.m0,
                r.error.as_deref().unwrap_or("")
            ),
        }
    }
    fs::write(out.join("sweep.csv"), table)?;
    write_json(&c.report_path("sweep.json"), &rows)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Guess(c) => guess(c),
        Command::SolveSimplified(c) => solve_simplified(c),
        Command::Solve(c) => solve_full(c),
        Command::Validate {
            file,
            lambda1,
            common,
        } => validate(file, *lambda1, common),
        Command::SweepM0 {
            from,
            to,
            points,
            common,
        } => sweep(*from, *to, *points, common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let body = json!({
                "error": e.kind(),
                "root": e.root().kind(),
                "message": e.to_string(),
            });
            eprintln!("{body}");
            ExitCode::from(if e.is_input_error() {
                EXIT_INVALID
            } else {
                EXIT_SOLVER
            })
        }
    }
}
