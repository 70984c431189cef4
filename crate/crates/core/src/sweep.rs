//! Solving scenarios across a grid of initial masses.

use rayon::prelude::*;
use serde::Serialize;

use crate::continuation::solve;
use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub scenario: String,
    pub m0: f64,
    pub v_tf: Option<f64>,
    pub t_f: Option<f64>,
    pub corrector_solves: Option<usize>,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn solved(&self) -> bool {
        self.error.is_none()
    }
}

/// `n` masses spaced geometrically over `[lo, hi]`.
pub fn m0_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::validation("m0", format!("bad range [{lo}, {hi}]")));
    }
    if n == 0 {
        return Err(Error::validation("m0", "grid needs at least one point"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| lo * (ratio * i as f64).exp()).collect();
    grid[n - 1] = hi;
    Ok(grid)
}

/// Solves every scenario at every mass. Solves run concurrently; the output
/// is ordered by scenario, then by mass.
pub fn sweep_m0(scenarios: &[Scenario], grid: &[f64]) -> Vec<SweepPoint> {
    let jobs: Vec<(&Scenario, f64)> = scenarios
        .iter()
        .flat_map(|s| grid.iter().map(move |&m| (s, m)))
        .collect();
    jobs.par_iter()
        .map(|&(s, m0)| {
            let mut s = s.clone();
            s.vehicle.m0 = m0;
            match solve(&s) {
                Ok(sol) => SweepPoint {
                    scenario: s.name,
                    m0,
                    v_tf: Some(sol.v_tf),
                    t_f: Some(sol.t_f),
                    corrector_solves: Some(sol.report.total_corrector_solves),
                    error: None,
                },
                Err(e) => SweepPoint {
                    scenario: s.name,
                    m0,
                    v_tf: None,
                    t_f: None,
                    corrector_solves: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
