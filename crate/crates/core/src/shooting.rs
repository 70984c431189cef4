//! Shooting functions of the simplified (abscissa) and full (time) problems.
//!
//! Unknowns are the initial costate plus the free horizon. Newton works on
//! scaled unknowns and residuals so that every component is of order one:
//! `p_r` by `d0`, `p_L` and `p_l` by `r0 d0`, the horizon by its nominal
//! value; positions by the planet radius, angles raw, the Hamiltonian by the
//! drag coefficient at the initial altitude (times `v0` in time domain).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::full_ocp::{extract_controls, extremal_rates, full_hamiltonian, FullCostate};
use crate::guidance::los_between;
use crate::integrator::{integrate_nodes, OdeSolution};
use crate::newton::{newton_solve, NewtonOptions, NewtonReport};
use crate::simplified::{
    extremal_control, running_cost, simplified_adjoint, simplified_dynamics,
    simplified_hamiltonian, SimplifiedCostate, SimplifiedState,
};
use crate::trajectory::{Domain, Trajectory, TrajectorySample};
use crate::vehicle::{AlphaModel, ControlTB, FullState, VehicleParams};

/// Layout of the simplified extremal flow: state, costate, then the
/// passengers `w`, `t` and accumulated cost.
pub mod simplified_layout {
    pub const STATE: usize = 0;
    pub const COSTATE: usize = 5;
    pub const W: usize = 10;
    pub const T: usize = 11;
    pub const COST: usize = 12;
    pub const DIM: usize = 13;
}

/// Layout of the full extremal flow: state then costate.
pub mod full_layout {
    pub const STATE: usize = 0;
    pub const COSTATE: usize = 6;
    pub const DIM: usize = 12;
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / n as f64;
    (0..=n)
        .map(|i| if i == n { b } else { a + h * i as f64 })
        .collect()
}

fn split5(y: &[f64]) -> [f64; 5] {
    [y[0], y[1], y[2], y[3], y[4]]
}

fn split6(y: &[f64]) -> [f64; 6] {
    [y[0], y[1], y[2], y[3], y[4], y[5]]
}

fn terminal_mismatch(end: [f64; 5], target: &SimplifiedState, r_scale: f64) -> [f64; 5] {
    let t = target.to_array();
    [
        (end[0] - t[0]) / r_scale,
        end[1] - t[1],
        end[2] - t[2],
        end[3] - t[3],
        end[4] - t[4],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplifiedSolution {
    pub costate0: SimplifiedCostate,
    pub s_f: f64,
    /// Time of flight recovered from `dt = ds / v`.
    pub t_f: f64,
    pub cost: f64,
    /// Unscaled terminal state of the extremal.
    pub endpoint: FullState,
    pub newton: NewtonReport,
}

/// Simplified two-point boundary value problem from `y0` to `target`.
#[derive(Debug, Clone)]
pub struct SimplifiedProblem {
    pub y0: SimplifiedState,
    pub target: SimplifiedState,
    pub v0: f64,
    pub params: VehicleParams,
    pub steps: usize,
    scale: [f64; 6],
    h_scale: f64,
}

impl SimplifiedProblem {
    pub fn new(
        y0: SimplifiedState,
        target: SimplifiedState,
        v0: f64,
        params: VehicleParams,
        steps: usize,
    ) -> Result<Self> {
        let range = los_between(&y0, &target)?.range;
        let d = params.d0;
        Ok(Self {
            y0,
            target,
            v0,
            params,
            steps,
            scale: [d, y0.r * d, y0.r * d, 1.0, 1.0, range],
            h_scale: params.drag(y0.r),
        })
    }

    pub fn encode(&self, c: &SimplifiedCostate, s_f: f64) -> Vec<f64> {
        let a = c.to_array();
        (0..5)
            .map(|i| a[i] / self.scale[i])
            .chain(std::iter::once(s_f / self.scale[5]))
            .collect()
    }

    pub fn decode(&self, z: &[f64]) -> (SimplifiedCostate, f64) {
        let c = SimplifiedCostate::from_array(std::array::from_fn(|i| z[i] * self.scale[i]));
        (c, z[5] * self.scale[5])
    }

    /// Integrates state, costate and passengers over `[0, s_f]`.
    pub fn flow(&self, c: &SimplifiedCostate, s_f: f64) -> Result<OdeSolution> {
        use simplified_layout as L;
        if !(s_f > 0.0) {
            return Err(Error::validation(
                "s_f",
                format!("horizon must be positive, got {s_f}"),
            ));
        }
        let p = &self.params;
        let mut y0 = vec![0.0; L::DIM];
        y0[L::STATE..L::STATE + 5].copy_from_slice(&self.y0.to_array());
        y0[L::COSTATE..L::COSTATE + 5].copy_from_slice(&c.to_array());
        y0[L::W] = self.v0.ln();
        let rates = |_: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            let st = SimplifiedState::from_array(split5(&y[L::STATE..]));
            let pc = SimplifiedCostate::from_array(split5(&y[L::COSTATE..]));
            let z = extremal_control(&pc, st.gamma, p)?;
            let f = simplified_dynamics(&st, z, p)?;
            let g = simplified_adjoint(&st, &pc, z, p)?;
            dy[L::STATE..L::STATE + 5].copy_from_slice(&f.to_array());
            dy[L::COSTATE..L::COSTATE + 5].copy_from_slice(&g.to_array());
            let running = running_cost(st.r, z, p);
            dy[L::W] = -(p.drag(st.r) + p.eta * p.cm(st.r) * z.norm_sq());
            dy[L::T] = (-y[L::W]).exp();
            dy[L::COST] = running;
            Ok(())
        };
        integrate_nodes(rates, &y0, linspace(0.0, s_f, self.steps))
    }

    /// Unscaled-input residual: terminal mismatch and `H(0)`.
    pub fn residual_of(&self, c: &SimplifiedCostate, s_f: f64) -> Result<Vec<f64>> {
        let sol = self.flow(c, s_f)?;
        let end = sol.last();
        let mut out = terminal_mismatch(split5(end), &self.target, self.params.r_earth).to_vec();
        let z = extremal_control(c, self.y0.gamma, &self.params)?;
        out.push(simplified_hamiltonian(&self.y0, c, z, &self.params)? / self.h_scale);
        Ok(out)
    }

    /// Scaled shooting function.
    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (c, s_f) = self.decode(z);
        self.residual_of(&c, s_f)
    }

    pub fn solve(
        &self,
        guess: &SimplifiedCostate,
        s_f: f64,
        opts: &NewtonOptions,
    ) -> Result<SimplifiedSolution> {
        let report = newton_solve(|z| self.residual(z), &self.encode(guess, s_f), opts)?;
        let (costate0, s_f) = self.decode(&report.solution);
        let sol = self.flow(&costate0, s_f)?;
        let end = sol.last();
        use simplified_layout as L;
        let s = split5(&end[L::STATE..]);
        Ok(SimplifiedSolution {
            costate0,
            s_f,
            t_f: end[L::T],
            cost: end[L::COST],
            endpoint: FullState {
                r: s[0],
                lat: s[1],
                lon: s[2],
                w: end[L::W],
                gamma: s[3],
                chi: s[4],
            },
            newton: report,
        })
    }

    /// Node samples of the extremal, in the abscissa domain. `pw` is zero
    /// and `w` is the log-speed passenger.
    pub fn trajectory(&self, c: &SimplifiedCostate, s_f: f64) -> Result<Trajectory> {
        use simplified_layout as L;
        let sol = self.flow(c, s_f)?;
        let p = &self.params;
        let samples = sol
            .iter()
            .map(|(s, y)| {
                let st = SimplifiedState::from_array(split5(&y[L::STATE..]));
                let pc = SimplifiedCostate::from_array(split5(&y[L::COSTATE..]));
                let z = extremal_control(&pc, st.gamma, p)?;
                Ok(TrajectorySample {
                    grid: s,
                    state: FullState {
                        r: st.r,
                        lat: st.lat,
                        lon: st.lon,
                        w: y[L::W],
                        gamma: st.gamma,
                        chi: st.chi,
                    },
                    costate: FullCostate {
                        pr: pc.pr,
                        p_lat: pc.p_lat,
                        p_lon: pc.p_lon,
                        pw: 0.0,
                        p_gamma: pc.p_gamma,
                        p_chi: pc.p_chi,
                    },
                    control: z.to_tb(),
                    hamiltonian: simplified_hamiltonian(&st, &pc, z, p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(Domain::Abscissa, samples)
    }
}

/// Unknowns of the full problem in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullUnknowns {
    pub costate0: FullCostate,
    pub t_f: f64,
    /// Share of the cutoff jump in `H` counted as passed: 0 before the
    /// cutoff, 1 after, in between when `t_f` sits on it.
    #[serde(default)]
    pub cutoff_blend: f64,
}

/// Width of the horizon-coordinate band that maps onto `t_f = t_sw`.
pub fn cutoff_band(t_sw: f64) -> f64 {
    0.05 * t_sw
}

impl FullUnknowns {
    pub fn new(costate0: FullCostate, t_f: f64) -> Self {
        Self {
            costate0,
            t_f,
            cutoff_blend: 0.0,
        }
    }

    /// Horizon as a coordinate that is continuous through the cutoff: a
    /// band of width [`cutoff_band`] is spent at `t_f = t_sw` while the
    /// terminal Hamiltonian moves across its jump.
    pub fn horizon_coordinate(&self, t_sw: f64) -> f64 {
        let band = cutoff_band(t_sw);
        if self.t_f < t_sw || band <= 0.0 {
            self.t_f
        } else if self.t_f > t_sw {
            self.t_f + band
        } else {
            t_sw + self.cutoff_blend.clamp(0.0, 1.0) * band
        }
    }

    pub fn from_horizon_coordinate(costate0: FullCostate, tau: f64, t_sw: f64) -> Self {
        let band = cutoff_band(t_sw);
        let (t_f, cutoff_blend) = if band <= 0.0 {
            (tau, if tau > t_sw { 1.0 } else { 0.0 })
        } else if tau <= t_sw {
            (tau, 0.0)
        } else if tau < t_sw + band {
            (t_sw, (tau - t_sw) / band)
        } else {
            (tau - band, 1.0)
        };
        Self {
            costate0,
            t_f,
            cutoff_blend,
        }
    }

    /// The full problem at `lambda1 = 0` shares the simplified costate, with
    /// `p_w` identically zero.
    pub fn from_simplified(c: &SimplifiedCostate, t_f: f64) -> Self {
        Self {
            costate0: FullCostate {
                pr: c.pr,
                p_lat: c.p_lat,
                p_lon: c.p_lon,
                pw: 0.0,
                p_gamma: c.p_gamma,
                p_chi: c.p_chi,
            },
            t_f,
            cutoff_blend: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullSolution {
    pub unknowns: FullUnknowns,
    pub endpoint: FullState,
    pub newton: NewtonReport,
}

/// Full problem at fixed `lambda1` toward a fixed terminal point.
#[derive(Debug, Clone)]
pub struct FullProblem {
    pub x0: FullState,
    pub target: SimplifiedState,
    pub lambda1: f64,
    pub params: VehicleParams,
    pub steps: usize,
    /// Steps spent before the thrust cutoff, fixed from the reference
    /// horizon so the residual stays smooth in `t_f`.
    thrust_steps: usize,
    scale: [f64; 7],
    h_scale: f64,
}

impl FullProblem {
    pub fn new(
        x0: FullState,
        target: SimplifiedState,
        lambda1: f64,
        params: VehicleParams,
        steps: usize,
        t_f_reference: f64,
    ) -> Result<Self> {
        if steps < 2 {
            return Err(Error::validation("solver.steps", "must be >= 2"));
        }
        if !(t_f_reference > 0.0) {
            return Err(Error::validation(
                "t_f",
                "reference horizon must be positive",
            ));
        }
        let share = (params.t_sw / t_f_reference).clamp(0.0, 1.0);
        let thrust_steps = ((steps as f64 * share).round() as usize).clamp(1, steps - 1);
        let d = params.d0;
        Ok(Self {
            x0,
            target,
            lambda1,
            params,
            steps,
            thrust_steps,
            scale: [d, x0.r * d, x0.r * d, 1.0, 1.0, 1.0, t_f_reference],
            h_scale: params.drag(x0.r) * x0.speed(),
        })
    }

    pub fn encode(&self, u: &FullUnknowns) -> Vec<f64> {
        let a = u.costate0.to_array();
        let tau = u.horizon_coordinate(self.params.t_sw);
        (0..6)
            .map(|i| a[i] / self.scale[i])
            .chain(std::iter::once(tau / self.scale[6]))
            .collect()
    }

    pub fn decode(&self, z: &[f64]) -> FullUnknowns {
        FullUnknowns::from_horizon_coordinate(
            FullCostate::from_array(std::array::from_fn(|i| z[i] * self.scale[i])),
            z[6] * self.scale[6],
            self.params.t_sw,
        )
    }

    /// Time at which thrust terms are evaluated: right after the cutoff on
    /// the post-cutoff segment.
    fn post_cutoff_time(&self, t: f64) -> f64 {
        let t_sw = self.params.t_sw;
        if t <= t_sw {
            t_sw + 1e-9 * t_sw.max(1.0)
        } else {
            t
        }
    }

    fn rates_at(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        use full_layout as L;
        let x = FullState::from_array(split6(&y[L::STATE..]));
        let pc = FullCostate::from_array(split6(&y[L::COSTATE..]));
        let r = extremal_rates(t, &x, &pc, self.lambda1, &self.params)?;
        dy[L::STATE..L::STATE + 6].copy_from_slice(&r.state.to_array());
        dy[L::COSTATE..L::COSTATE + 6].copy_from_slice(&r.costate.to_array());
        Ok(())
    }

    /// Integrates the extremal flow over `[0, t_f]` with the thrust cutoff
    /// on a node.
    pub fn flow(&self, u: &FullUnknowns) -> Result<OdeSolution> {
        use full_layout as L;
        let t_f = u.t_f;
        if !(t_f > 0.0) {
            return Err(Error::validation(
                "t_f",
                format!("horizon must be positive, got {t_f}"),
            ));
        }
        let mut y0 = vec![0.0; L::DIM];
        y0[L::STATE..L::STATE + 6].copy_from_slice(&self.x0.to_array());
        y0[L::COSTATE..L::COSTATE + 6].copy_from_slice(&u.costate0.to_array());
        let t_sw = self.params.t_sw;
        if t_f <= t_sw {
            // same node count as the thrust segment, so the flow is
            // continuous as t_f crosses the cutoff
            return integrate_nodes(
                |t, y, dy| self.rates_at(t, y, dy),
                &y0,
                linspace(0.0, t_f, self.thrust_steps),
            );
        }
        let first = integrate_nodes(
            |t, y, dy| self.rates_at(t, y, dy),
            &y0,
            linspace(0.0, t_sw, self.thrust_steps),
        )?;
        let offset = first.len() - 1;
        let second = integrate_nodes(
            |t, y, dy| self.rates_at(self.post_cutoff_time(t), y, dy),
            first.last(),
            linspace(t_sw, t_f, self.steps - self.thrust_steps),
        )
        .map_err(|e| match e {
            Error::IntegrationFailed { node, source } => Error::IntegrationFailed {
                node: node + offset,
                source,
            },
            other => other,
        })?;
        Ok(OdeSolution::concat(first, second))
    }

    fn hamiltonian_at(&self, t: f64, x: &FullState, pc: &FullCostate) -> Result<(ControlTB, f64)> {
        let c = extract_controls(x, pc, self.lambda1, t, &self.params)?;
        let h = full_hamiltonian(
            t,
            x,
            pc,
            c,
            self.lambda1,
            &self.params,
            AlphaModel::FirstOrder,
        )?;
        Ok((c, h))
    }

    pub fn residual_of(&self, u: &FullUnknowns) -> Result<Vec<f64>> {
        use full_layout as L;
        let sol = self.flow(u)?;
        let end = sol.last();
        let x = FullState::from_array(split6(&end[L::STATE..]));
        let pc = FullCostate::from_array(split6(&end[L::COSTATE..]));
        let h = if u.t_f > self.params.t_sw {
            self.hamiltonian_at(self.post_cutoff_time(u.t_f), &x, &pc)?
                .1
        } else if u.t_f == self.params.t_sw && u.cutoff_blend > 0.0 {
            let before = self.hamiltonian_at(u.t_f, &x, &pc)?.1;
            let after = self
                .hamiltonian_at(self.post_cutoff_time(u.t_f), &x, &pc)?
                .1;
            before + u.cutoff_blend * (after - before)
        } else {
            self.hamiltonian_at(u.t_f, &x, &pc)?.1
        };
        let mut out = terminal_mismatch(
            [x.r, x.lat, x.lon, x.gamma, x.chi],
            &self.target,
            self.params.r_earth,
        )
        .to_vec();
        out.push(pc.pw);
        out.push(h / self.h_scale);
        Ok(out)
    }

    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.residual_of(&self.decode(z))
    }

    pub fn solve(&self, guess: &FullUnknowns, opts: &NewtonOptions) -> Result<FullSolution> {
        let report = newton_solve(|z| self.residual(z), &self.encode(guess), opts)?;
        let unknowns = self.decode(&report.solution);
        let sol = self.flow(&unknowns)?;
        Ok(FullSolution {
            unknowns,
            endpoint: FullState::from_array(split6(&sol.last()[full_layout::STATE..])),
            newton: report,
        })
    }

    pub fn trajectory(&self, u: &FullUnknowns) -> Result<Trajectory> {
        use full_layout as L;
        let sol = self.flow(u)?;
        let samples = sol
            .iter()
            .map(|(t, y)| {
                let x = FullState::from_array(split6(&y[L::STATE..]));
                let pc = FullCostate::from_array(split6(&y[L::COSTATE..]));
                let (control, hamiltonian) = self.hamiltonian_at(t, &x, &pc)?;
                Ok(TrajectorySample {
                    grid: t,
                    state: x,
                    costate: pc,
                    control,
                    hamiltonian,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(Domain::Time, samples)
    }
}
