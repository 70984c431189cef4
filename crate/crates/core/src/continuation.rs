//! The three-stage pipeline: solve the simplified problem from the guidance
//! guess, continue `lambda1` from 0 to 1 toward the first-step target, then
//! continue `lambda2` from 0 to 1, moving the target to the desired final
//! point.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::guidance::{
    assemble_guess, fitted_guess, los_between, simulate_closed_loop, InitialGuess,
};
use crate::integrator::{integrate, GridSpec};
use crate::newton::{inf_norm, NewtonOptions};
use crate::scenario::Scenario;
use crate::shooting::{FullProblem, FullUnknowns, SimplifiedProblem, SimplifiedSolution};
use crate::simplified::SimplifiedState;
use crate::trajectory::Trajectory;
use crate::vehicle::{full_dynamics, AlphaModel, ControlTB, FullState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    /// Reuse the previous solution.
    #[default]
    Zeroth,
    /// Extrapolate linearly through the last two accepted solutions.
    Secant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationOpts {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub growth: f64,
    pub shrink: f64,
    pub predictor: Predictor,
    /// Integration steps per shooting evaluation.
    pub steps: usize,
    pub newton: NewtonOptions,
}

impl Default for ContinuationOpts {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            min_step: 1e-4,
            max_step: 0.5,
            growth: 1.5,
            shrink: 0.5,
            predictor: Predictor::Zeroth,
            steps: 400,
            newton: NewtonOptions::default(),
        }
    }
}

impl ContinuationOpts {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.min_step
            && self.min_step <= self.initial_step
            && self.initial_step <= self.max_step
            && self.max_step <= 1.0;
        if !ok {
            return Err(Error::validation(
                "solver.initial_step",
                "need 0 < min_step <= initial_step <= max_step <= 1",
            ));
        }
        if !(self.growth >= 1.0) {
            return Err(Error::validation("solver.growth", "must be >= 1"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::validation("solver.shrink", "must lie in (0, 1)"));
        }
        if self.steps < 2 {
            return Err(Error::validation("solver.steps", "must be >= 2"));
        }
        if self.newton.max_iterations == 0 || !(self.newton.tolerance > 0.0) {
            return Err(Error::validation(
                "solver.newton",
                "need max_iterations >= 1 and tolerance > 0",
            ));
        }
        Ok(())
    }
}

/// One corrector attempt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub stage: Stage,
    pub lambda1: f64,
    pub lambda2: f64,
    pub step: f64,
    /// Horizon after the step (the predicted one if it was rejected).
    pub t_f: f64,
    pub accepted: bool,
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub unknowns: FullUnknowns,
    /// Target of the first step.
    pub x_tilde_f: SimplifiedState,
    /// Reference horizon of the problem the current unknowns solve; it fixes
    /// the thrust/coast split of the grid.
    pub t_f_reference: f64,
    pub history: Vec<StepRecord>,
    /// Unknowns accepted before the current ones, for the secant predictor.
    #[serde(skip)]
    previous: Option<(f64, FullUnknowns)>,
}

impl HomotopyState {
    pub fn new(unknowns: FullUnknowns, x_tilde_f: SimplifiedState, t_f_reference: f64) -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            unknowns,
            x_tilde_f,
            t_f_reference,
            history: Vec::new(),
            previous: None,
        }
    }

    /// Accepted corrector solves of a stage.
    pub fn corrector_solves(&self, stage: Stage) -> usize {
        self.history
            .iter()
            .filter(|r| r.stage == stage && r.accepted && r.step > 0.0)
            .count()
    }

    pub fn rejected_solves(&self, stage: Stage) -> usize {
        self.history
            .iter()
            .filter(|r| r.stage == stage && !r.accepted)
            .count()
    }
}

/// Which costate guess seeded the first shooting solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessSource {
    /// Local derivatives of the guidance law at the initial point.
    Local,
    /// Least-squares fit to a closed-loop guidance flight.
    Fitted,
}

/// Closed-loop samples closer than this fraction of the initial range are
/// left out of the costate fit.
const FIT_CUTOFF: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOne {
    pub x_tilde_f: SimplifiedState,
    pub guess: InitialGuess,
    pub guess_source: GuessSource,
    /// Scaled shooting residual at the guidance guess.
    pub guess_residual: f64,
    pub simplified: SimplifiedSolution,
    /// Full-problem unknowns at `lambda1 = 0`, polished by one corrector.
    pub unknowns: FullUnknowns,
    /// Reference horizon of the polishing problem.
    pub t_f_reference: f64,
    pub polish_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub corrector_solves: usize,
    pub rejected: usize,
    pub newton_iterations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub m0: f64,
    pub shortcut_target: bool,
    pub x_tilde_f: SimplifiedState,
    pub step_one_newton_iterations: usize,
    pub guess_source: GuessSource,
    pub guess_residual: f64,
    pub stages: Vec<StageSummary>,
    pub history: Vec<StepRecord>,
    pub total_corrector_solves: usize,
    pub final_residual: f64,
    pub v_tf: f64,
    pub t_f: f64,
    pub max_abs_u: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalSolution {
    pub trajectory: Trajectory,
    pub unknowns: FullUnknowns,
    pub v_tf: f64,
    pub t_f: f64,
    pub report: RunReport,
}

/// Endpoint of zero-control flight at `lambda1 = 0` over `t_f`.
pub fn zero_control_endpoint(scenario: &Scenario, t_f: f64) -> Result<FullState> {
    let p = &scenario.vehicle;
    let sol = integrate(
        |t, y, dy| {
            let x = FullState::from_array([y[0], y[1], y[2], y[3], y[4], y[5]]);
            let f = full_dynamics(t, &x, ControlTB::default(), 0.0, p, AlphaModel::FirstOrder)?;
            dy.copy_from_slice(&f.to_array());
            Ok(())
        },
        &scenario.x0().to_array(),
        &GridSpec::uniform(scenario.solver.steps, 0.0, t_f),
    )?;
    let e = sol.last();
    Ok(FullState::from_array([e[0], e[1], e[2], e[3], e[4], e[5]]))
}

/// Horizon of the zero-control flight: explicit guess or range over `v0`.
pub fn initial_horizon(scenario: &Scenario) -> Result<f64> {
    match scenario.tf_guess {
        Some(t) => Ok(t),
        None => Ok(los_between(&scenario.y0, &scenario.yf)?.range / scenario.v0),
    }
}

/// Target of the first step: the desired point under the shortcut,
/// otherwise the endpoint of zero-control flight.
pub fn step_one_target(scenario: &Scenario) -> Result<SimplifiedState> {
    if scenario.shortcut_target {
        return Ok(scenario.yf);
    }
    let e = zero_control_endpoint(scenario, initial_horizon(scenario)?)?;
    Ok(SimplifiedState {
        r: e.r,
        lat: e.lat,
        lon: e.lon,
        gamma: e.gamma,
        chi: e.chi,
    })
}

pub fn simplified_problem(
    scenario: &Scenario,
    target: SimplifiedState,
) -> Result<SimplifiedProblem> {
    SimplifiedProblem::new(
        scenario.y0,
        target,
        scenario.v0,
        scenario.vehicle,
        scenario.solver.steps,
    )
}

pub fn step_one(scenario: &Scenario) -> Result<StepOne> {
    scenario.validate()?;
    let diverged = |e: Error| Error::StepOneDiverged(Box::new(e));
    let x_tilde_f = step_one_target(scenario).map_err(diverged)?;
    let prob = simplified_problem(scenario, x_tilde_f).map_err(diverged)?;
    let residual_at = |g: &InitialGuess| {
        prob.residual_of(&g.costate0, g.s_f)
            .map(|r| inf_norm(&r))
            .unwrap_or(f64::INFINITY)
    };
    let opts = &scenario.solver.newton;
    // local guess first, trajectory fit when it is unavailable or fails
    let local = assemble_guess(&scenario.y0, &x_tilde_f, &scenario.vehicle)
        .and_then(|g| prob.solve(&g.costate0, g.s_f, opts).map(|sol| (g, sol)));
    let (guess, guess_source, simplified) = match local {
        Ok((g, sol)) => (g, GuessSource::Local, sol),
        Err(first) => {
            let fitted = simulate_closed_loop(&scenario.y0, &x_tilde_f, &scenario.vehicle, 1e-3)
                .and_then(|flight| {
                    fitted_guess(&scenario.y0, &flight, &scenario.vehicle, FIT_CUTOFF)
                });
            match fitted.and_then(|g| prob.solve(&g.costate0, g.s_f, opts).map(|sol| (g, sol))) {
                Ok((g, sol)) => (g, GuessSource::Fitted, sol),
                Err(_) => return Err(diverged(first)),
            }
        }
    };
    let guess_residual = residual_at(&guess);

    let converted = FullUnknowns::from_simplified(&simplified.costate0, simplified.t_f);
    let polish = full_problem(scenario, x_tilde_f, 0.0, converted.t_f)
        .and_then(|fp| fp.solve(&converted, &scenario.solver.newton))
        .map_err(diverged)?;
    Ok(StepOne {
        x_tilde_f,
        guess,
        guess_source,
        guess_residual,
        simplified,
        unknowns: polish.unknowns,
        t_f_reference: converted.t_f,
        polish_iterations: polish.newton.iterations,
    })
}

pub fn full_problem(
    scenario: &Scenario,
    target: SimplifiedState,
    lambda1: f64,
    t_f_reference: f64,
) -> Result<FullProblem> {
    FullProblem::new(
        scenario.x0(),
        target,
        lambda1,
        scenario.vehicle,
        scenario.solver.steps,
        t_f_reference,
    )
}

/// First-step target moved toward the desired point.
pub fn interpolated_target(
    x_tilde_f: &SimplifiedState,
    yf: &SimplifiedState,
    lambda2: f64,
) -> SimplifiedState {
    let a = x_tilde_f.to_array();
    let b = yf.to_array();
    SimplifiedState::from_array(std::array::from_fn(|i| a[i] + lambda2 * (b[i] - a[i])))
}

fn predict(
    hs: &HomotopyState,
    current: f64,
    next: f64,
    kind: Predictor,
    t_sw: f64,
) -> FullUnknowns {
    match (kind, hs.previous) {
        (Predictor::Secant, Some((prev_lambda, prev))) if current != prev_lambda => {
            let ratio = (next - current) / (current - prev_lambda);
            let a = hs.unknowns.costate0.to_array();
            let b = prev.costate0.to_array();
            let ta = hs.unknowns.horizon_coordinate(t_sw);
            let tb = prev.horizon_coordinate(t_sw);
            FullUnknowns::from_horizon_coordinate(
                crate::full_ocp::FullCostate::from_array(std::array::from_fn(|i| {
                    a[i] + ratio * (a[i] - b[i])
                })),
                ta + ratio * (ta - tb),
                t_sw,
            )
        }
        _ => hs.unknowns,
    }
}

/// Generic adaptive continuation in one parameter. `problem_at` builds the
/// shooting problem for a parameter value and reference horizon.
fn continue_parameter<F>(
    mut hs: HomotopyState,
    stage: Stage,
    opts: &ContinuationOpts,
    t_sw: f64,
    problem_at: F,
) -> Result<HomotopyState>
where
    F: Fn(f64, f64) -> Result<FullProblem>,
{
    let get = |hs: &HomotopyState| match stage {
        Stage::Lambda2 => hs.lambda2,
        _ => hs.lambda1,
    };
    let mut step = opts.initial_step;
    hs.previous = None;
    while get(&hs) < 1.0 {
        let current = get(&hs);
        let next = (current + step).min(1.0);
        let guess = predict(&hs, current, next, opts.predictor, t_sw);
        let (l1, l2) = match stage {
            Stage::Lambda2 => (hs.lambda1, next),
            _ => (next, hs.lambda2),
        };
        let attempt = problem_at(next, guess.t_f).and_then(|fp| fp.solve(&guess, &opts.newton));
        match attempt {
            Ok(sol) => {
                hs.history.push(StepRecord {
                    stage,
                    lambda1: l1,
                    lambda2: l2,
                    step: next - current,
                    t_f: sol.unknowns.t_f,
                    accepted: true,
                    iterations: sol.newton.iterations,
                    residual: sol.newton.residual_norm(),
                    error: None,
                });
                hs.previous = Some((current, hs.unknowns));
                hs.unknowns = sol.unknowns;
                hs.t_f_reference = guess.t_f;
                hs.lambda1 = l1;
                hs.lambda2 = l2;
                step = (step * opts.growth).min(opts.max_step);
            }
            Err(e) => {
                let (iterations, residual) = match &e {
                    Error::Newton(f) => (
                        f.history.len().saturating_sub(1),
                        inf_norm(&f.last_residual),
                    ),
                    _ => (0, f64::NAN),
                };
                hs.history.push(StepRecord {
                    stage,
                    lambda1: l1,
                    lambda2: l2,
                    step: next - current,
                    t_f: guess.t_f,
                    accepted: false,
                    iterations,
                    residual,
                    error: Some(e.to_string()),
                });
                step *= opts.shrink;
                if step < opts.min_step {
                    return Err(Error::ContinuationStalled {
                        stage,
                        lambda: current,
                        step,
                        last: Box::new(e),
                    });
                }
            }
        }
    }
    Ok(hs)
}

pub fn continue_lambda1(hs: HomotopyState, scenario: &Scenario) -> Result<HomotopyState> {
    let target = interpolated_target(&hs.x_tilde_f, &scenario.yf, hs.lambda2);
    continue_parameter(
        hs,
        Stage::Lambda1,
        &scenario.solver,
        scenario.vehicle.t_sw,
        |l1, tf| full_problem(scenario, target, l1, tf),
    )
}

pub fn continue_lambda2(mut hs: HomotopyState, scenario: &Scenario) -> Result<HomotopyState> {
    if hs.x_tilde_f == scenario.yf {
        // degenerate target path: nothing to solve
        hs.history.push(StepRecord {
            stage: Stage::Lambda2,
            lambda1: hs.lambda1,
            lambda2: 1.0,
            step: 0.0,
            t_f: hs.unknowns.t_f,
            accepted: true,
            iterations: 0,
            residual: 0.0,
            error: None,
        });
        hs.lambda2 = 1.0;
        return Ok(hs);
    }
    let x_tilde_f = hs.x_tilde_f;
    let lambda1 = hs.lambda1;
    continue_parameter(
        hs,
        Stage::Lambda2,
        &scenario.solver,
        scenario.vehicle.t_sw,
        |l2, tf| {
            full_problem(
                scenario,
                interpolated_target(&x_tilde_f, &scenario.yf, l2),
                lambda1,
                tf,
            )
        },
    )
}

fn stage_summary(hs: &HomotopyState, stage: Stage, wall: f64) -> StageSummary {
    StageSummary {
        stage,
        corrector_solves: hs.corrector_solves(stage),
        rejected: hs.rejected_solves(stage),
        newton_iterations: hs
            .history
            .iter()
            .filter(|r| r.stage == stage)
            .map(|r| r.iterations)
            .sum(),
        wall_time_s: wall,
    }
}

/// Runs the whole pipeline.
pub fn solve(scenario: &Scenario) -> Result<OptimalSolution> {
    let start = Instant::now();
    let tag = |stage: Stage| {
        move |e: Error| match e {
            Error::StepOneDiverged(_)
            | Error::ContinuationStalled { .. }
            | Error::Validation { .. } => e,
            other => Error::InStage {
                stage,
                source: Box::new(other),
            },
        }
    };
    let one = step_one(scenario)?;
    let t1 = start.elapsed().as_secs_f64();

    let mut hs = HomotopyState::new(one.unknowns, one.x_tilde_f, one.t_f_reference);
    hs.history.push(StepRecord {
        stage: Stage::StepOne,
        lambda1: 0.0,
        lambda2: 0.0,
        step: 0.0,
        t_f: one.unknowns.t_f,
        accepted: true,
        iterations: one.simplified.newton.iterations + one.polish_iterations,
        residual: one.simplified.newton.residual_norm(),
        error: None,
    });
    let hs = continue_lambda1(hs, scenario).map_err(tag(Stage::Lambda1))?;
    let t2 = start.elapsed().as_secs_f64();
    let hs = continue_lambda2(hs, scenario).map_err(tag(Stage::Lambda2))?;
    let t3 = start.elapsed().as_secs_f64();

    let last = full_problem(scenario, scenario.yf, 1.0, hs.t_f_reference)?;
    let final_residual = inf_norm(&last.residual_of(&hs.unknowns)?);
    let trajectory = last.trajectory(&hs.unknowns)?;
    let end = trajectory.last().expect("non-empty trajectory").state;
    let v_tf = end.speed();

    let mut step_one_summary = stage_summary(&hs, Stage::StepOne, t1);
    step_one_summary.corrector_solves = 1;
    let stages = vec![
        step_one_summary,
        stage_summary(&hs, Stage::Lambda1, t2 - t1),
        stage_summary(&hs, Stage::Lambda2, t3 - t2),
    ];
    let total_corrector_solves = stages[1].corrector_solves + stages[2].corrector_solves;
    let report = RunReport {
        scenario: scenario.name.clone(),
        m0: scenario.vehicle.m0,
        shortcut_target: scenario.shortcut_target,
        x_tilde_f: one.x_tilde_f,
        step_one_newton_iterations: one.simplified.newton.iterations,
        guess_source: one.guess_source,
        guess_residual: one.guess_residual,
        stages,
        history: hs.history.clone(),
        total_corrector_solves,
        final_residual,
        v_tf,
        t_f: hs.unknowns.t_f,
        max_abs_u: trajectory.max_abs_u_components(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(OptimalSolution {
        trajectory,
        unknowns: hs.unknowns,
        v_tf,
        t_f: hs.unknowns.t_f,
        report,
    })
}
