//! Hamiltonian, adjoint and extremal controls of the homotopy-blended
//! time-domain problem. The cost integrand is `-dw/dt` (final log-speed is
//! maximized) and `p0 = -1`, so the Hamiltonian reads
//! `pr f_r + pL f_L + pl f_l + (pw + 1) f_w + pgamma f_gamma + pchi f_chi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::{
    check_chart, full_dynamics, AlphaModel, ControlTB, FullState, ThrustProjection, VehicleParams,
};

/// Below this `pw + 1` the u-stationary point is no longer a maximum.
pub const CONCAVITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FullCostate {
    pub pr: f64,
    pub p_lat: f64,
    pub p_lon: f64,
    pub pw: f64,
    pub p_gamma: f64,
    pub p_chi: f64,
}

impl FullCostate {
    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            pr: a[0],
            p_lat: a[1],
            p_lon: a[2],
            pw: a[3],
            p_gamma: a[4],
            p_chi: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.pr,
            self.p_lat,
            self.p_lon,
            self.pw,
            self.p_gamma,
            self.p_chi,
        ]
    }
}

pub fn full_hamiltonian(
    t: f64,
    x: &FullState,
    pc: &FullCostate,
    c: ControlTB,
    lambda1: f64,
    p: &VehicleParams,
    model: AlphaModel,
) -> Result<f64> {
    let f = full_dynamics(t, x, c, lambda1, p, model)?;
    Ok(pc.pr * f.r
        + pc.p_lat * f.lat
        + pc.p_lon * f.lon
        + (pc.pw + 1.0) * f.w
        + pc.p_gamma * f.gamma
        + pc.p_chi * f.chi)
}

/// Stationary point of the Hamiltonian in `(u, beta)` under the first-order
/// angle-of-attack model. `beta` is taken on the branch that makes the
/// coefficient of `u` non-negative, so `u >= 0`.
pub fn extract_controls(
    x: &FullState,
    pc: &FullCostate,
    lambda1: f64,
    t: f64,
    p: &VehicleParams,
) -> Result<ControlTB> {
    let (cg, _) = check_chart(x.gamma, x.lat)?;
    let margin = pc.pw + 1.0;
    if margin <= CONCAVITY_FLOOR {
        return Err(Error::ConcavityLost { margin });
    }
    let v = x.w.exp();
    let cm = p.cm(x.r);
    let tau = p.thrust_accel(t, lambda1)?;
    let gain = v * cm + tau * p.alpha_max / v;
    let denom = 2.0 * p.eta * cm * v * margin;
    let u1 = gain * pc.p_gamma / denom;
    let u2 = gain * pc.p_chi / (cg * denom);
    Ok(ControlTB {
        u: u1.hypot(u2),
        beta: (pc.p_chi / cg).atan2(pc.p_gamma),
    })
}

/// `-dH/dx` at fixed control.
pub fn full_adjoint(
    t: f64,
    x: &FullState,
    pc: &FullCostate,
    c: ControlTB,
    lambda1: f64,
    p: &VehicleParams,
    model: AlphaModel,
) -> Result<FullCostate> {
    let (cg, cl) = check_chart(x.gamma, x.lat)?;
    let sg = x.gamma.sin();
    let (sc, cc) = x.chi.sin_cos();
    let tl = x.lat.tan();
    let r = x.r;
    let v = x.w.exp();
    let cm = p.cm(r);
    let d = p.drag(r);
    let hr = p.hr;
    let grav = lambda1 * p.gravity(r);
    let tau = p.thrust_accel(t, lambda1)?;
    let proj = ThrustProjection::new(model, p.alpha_max, c);
    let (u1, u2) = c.components();
    let drag_total = d + p.eta * cm * c.u * c.u;
    let qw = pc.pw + 1.0;

    let f_lat = v * cg * cc / r;
    let f_lon = v * cg * sc / (r * cl);

    let dh_dr = -pc.p_lat * f_lat / r - pc.p_lon * f_lon / r
        + qw * (2.0 * grav * sg / (r * v) + drag_total * v / hr)
        + pc.p_gamma * (-v * cm * u1 / hr - lambda1 * v * cg / (r * r) + 2.0 * grav * cg / (r * v))
        + pc.p_chi * (-v * cm * u2 / (hr * cg) - lambda1 * v * cg * sc * tl / (r * r));

    let dh_dlat = pc.p_lon * f_lon * tl + pc.p_chi * lambda1 * v * cg * sc / (r * cl * cl);

    let dh_dw = pc.pr * v * sg
        + pc.p_lat * f_lat
        + pc.p_lon * f_lon
        + qw * (-tau * proj.along / v + grav * sg / v - drag_total * v)
        + pc.p_gamma
            * (v * cm * u1 + lambda1 * v * cg / r - tau * proj.lift_in / v + grav * cg / v)
        + pc.p_chi
            * (v * cm * u2 / cg + lambda1 * v * cg * sc * tl / r - tau * proj.lift_out / (v * cg));

    let dh_dgamma = pc.pr * v * cg
        - pc.p_lat * v * sg * cc / r
        - pc.p_lon * v * sg * sc / (r * cl)
        - qw * grav * cg / v
        + pc.p_gamma * (-lambda1 * v * sg / r + grav * sg / v)
        + pc.p_chi
            * ((v * cm * u2 + tau * proj.lift_out / v) * sg / (cg * cg)
                - lambda1 * v * sg * sc * tl / r);

    let dh_dchi = -pc.p_lat * v * cg * sc / r
        + pc.p_lon * v * cg * cc / (r * cl)
        + pc.p_chi * lambda1 * v * cg * cc * tl / r;

    let rates = FullCostate {
        pr: -dh_dr,
        p_lat: -dh_dlat,
        p_lon: 0.0,
        pw: -dh_dw,
        p_gamma: -dh_dgamma,
        p_chi: -dh_dchi,
    };
    if rates.to_array().iter().all(|r| r.is_finite()) {
        Ok(rates)
    } else {
        Err(Error::NonFinite {
            context: "full adjoint",
        })
    }
}

/// State and costate rates along the extremal flow, plus the extracted
/// control and the Hamiltonian value.
#[derive(Debug, Clone, Copy)]
pub struct ExtremalRates {
    pub state: FullState,
    pub costate: FullCostate,
    pub control: ControlTB,
}

pub fn extremal_rates(
    t: f64,
    x: &FullState,
    pc: &FullCostate,
    lambda1: f64,
    p: &VehicleParams,
) -> Result<ExtremalRates> {
    let control = extract_controls(x, pc, lambda1, t, p)?;
    let state = full_dynamics(t, x, control, lambda1, p, AlphaModel::FirstOrder)?;
    let costate = full_adjoint(t, x, pc, control, lambda1, p, AlphaModel::FirstOrder)?;
    Ok(ExtremalRates {
        state,
        costate,
        control,
    })
}
