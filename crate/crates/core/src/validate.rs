//! Invariant checks on an emitted trajectory.

use serde::Serialize;

use crate::continuation::step_one_target;
use crate::error::Result;
use crate::full_ocp::{extract_controls, full_hamiltonian};
use crate::scenario::Scenario;
use crate::simplified::{
    extremal_control, simplified_hamiltonian, SimplifiedCostate, SimplifiedState,
};
use crate::trajectory::{Domain, Trajectory};
use crate::vehicle::{AlphaModel, ControlTB};

/// Stored and recomputed Hamiltonians must agree to this.
pub const HAMILTONIAN_TOLERANCE: f64 = 1e-10;
pub const CONTROL_TOLERANCE: f64 = 1e-10;
/// Scaled terminal mismatch (radius over planet radius, angles in rad).
pub const TERMINAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub domain: Domain,
    pub samples: usize,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn sample_invariants(traj: &Trajectory, scenario: &Scenario, lambda1: f64) -> Result<(f64, f64)> {
    let p = &scenario.vehicle;
    let mut h_err: f64 = 0.0;
    let mut c_err: f64 = 0.0;
    for s in traj.samples() {
        let (h, c) = match traj.domain {
            Domain::Time => {
                let c = extract_controls(&s.state, &s.costate, lambda1, s.grid, p)?;
                let h = full_hamiltonian(
                    s.grid,
                    &s.state,
                    &s.costate,
                    c,
                    lambda1,
                    p,
                    AlphaModel::FirstOrder,
                )?;
                (h, c)
            }
            Domain::Abscissa => {
                let x = &s.state;
                let y = SimplifiedState::from_array([x.r, x.lat, x.lon, x.gamma, x.chi]);
                let q = &s.costate;
                let pc = SimplifiedCostate {
                    pr: q.pr,
                    p_lat: q.p_lat,
                    p_lon: q.p_lon,
                    p_gamma: q.p_gamma,
                    p_chi: q.p_chi,
                };
                let z = extremal_control(&pc, y.gamma, p)?;
                (simplified_hamiltonian(&y, &pc, z, p)?, z.to_tb())
            }
        };
        h_err = h_err.max((h - s.hamiltonian).abs());
        c_err = c_err.max(control_gap(c, s.control));
    }
    Ok((h_err, c_err))
}

fn control_gap(a: ControlTB, b: ControlTB) -> f64 {
    let (a1, a2) = a.components();
    let (b1, b2) = b.components();
    (a1 - b1).abs().max((a2 - b2).abs())
}

/// Re-derives `H` and the controls at every sample from the stored states
/// and costates, and checks the endpoints against the scenario. Time-domain
/// files are read as full-problem solutions at `lambda1`; abscissa-domain
/// files as simplified solutions toward the first-step target.
pub fn validate_trajectory(
    traj: &Trajectory,
    scenario: &Scenario,
    lambda1: f64,
) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let (Some(first), Some(last)) = (traj.first(), traj.last()) else {
        return Err(crate::Error::validation("trajectory", "no samples"));
    };
    let (h_err, c_err) = sample_invariants(traj, scenario, lambda1)?;
    checks.push(Check::at_most(
        "hamiltonian_recomputed",
        h_err,
        HAMILTONIAN_TOLERANCE,
    ));
    checks.push(Check::at_most(
        "controls_extremal",
        c_err,
        CONTROL_TOLERANCE,
    ));
    checks.push(Check::at_most(
        "controls_bounded",
        traj.max_abs_u_components(),
        1.0,
    ));

    let target = match traj.domain {
        Domain::Time => scenario.yf,
        Domain::Abscissa => step_one_target(scenario)?,
    };
    let rt = scenario.vehicle.r_earth;
    let mismatch = |x: &crate::FullState, y: &SimplifiedState| {
        ((x.r - y.r) / rt)
            .abs()
            .max((x.lat - y.lat).abs())
            .max((x.lon - y.lon).abs())
            .max((x.gamma - y.gamma).abs())
            .max((x.chi - y.chi).abs())
    };
    let w0 = scenario.v0.ln();
    checks.push(Check::at_most(
        "initial_state",
        mismatch(&first.state, &scenario.y0).max((first.state.w - w0).abs()),
        TERMINAL_TOLERANCE,
    ));
    checks.push(Check::at_most(
        "terminal_state",
        mismatch(&last.state, &target),
        TERMINAL_TOLERANCE,
    ));
    Ok(ValidationReport {
        domain: traj.domain,
        samples: traj.len(),
        checks,
    })
}
