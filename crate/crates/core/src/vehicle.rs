//! Physical model of the vehicle: exponential atmosphere, inverse-square
//! gravity, step thrust profile and the time-domain flight dynamics written
//! in log-speed `w = ln v`, blended by the homotopy parameter `lambda1`.
//!
//! At `lambda1 = 0` only the aerodynamic lift and drag act; at
//! `lambda1 = 1` thrust, gravity, and Earth-curvature terms are all present
//! and the system is the full three-dimensional point-mass model.

use serde::{Deserialize, Serialize};

use crate::error::{ChartAxis, Error, Result};

/// Below this, `cos(gamma)` or `cos(L)` is treated as a chart singularity.
pub const CHART_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Curvature coefficient at altitude zero [1/m].
    pub cm0: f64,
    /// Drag coefficient at altitude zero [1/m].
    pub d0: f64,
    /// Aerodynamic efficiency factor.
    pub eta: f64,
    /// Reference (scale) altitude of the atmosphere [m].
    pub hr: f64,
    /// Maximal angle of attack [rad].
    pub alpha_max: f64,
    /// Mass flow before cutoff [kg/s].
    pub q0: f64,
    /// Thrust cutoff time [s].
    pub t_sw: f64,
    /// Fuel injection velocity [m/s].
    pub ve: f64,
    /// Initial mass [kg].
    pub m0: f64,
    /// Planet radius [m].
    pub r_earth: f64,
    /// Surface gravity [m/s^2].
    pub g0: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            cm0: 0.00075,
            d0: 0.00005,
            eta: 0.442,
            hr: 7500.0,
            alpha_max: std::f64::consts::PI / 6.0,
            q0: 10.0,
            t_sw: 20.0,
            ve: 1500.0,
            m0: 1000.0,
            r_earth: 6_378_137.0,
            g0: 9.80665,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cm0", self.cm0),
            ("d0", self.d0),
            ("eta", self.eta),
            ("hr", self.hr),
            ("m0", self.m0),
            ("r_earth", self.r_earth),
            ("g0", self.g0),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(
                    format!("vehicle.{name}"),
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        if !(self.alpha_max > 0.0 && self.alpha_max < std::f64::consts::FRAC_PI_2) {
            return Err(Error::validation(
                "vehicle.alpha_max",
                format!("must lie in (0, pi/2), got {}", self.alpha_max),
            ));
        }
        let nonneg = [("q0", self.q0), ("t_sw", self.t_sw), ("ve", self.ve)];
        for (name, value) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::validation(
                    format!("vehicle.{name}"),
                    format!("must be finite and >= 0, got {value}"),
                ));
            }
        }
        if self.q0 * self.t_sw >= self.m0 {
            return Err(Error::validation(
                "vehicle.m0",
                format!(
                    "burnt fuel {} kg exceeds initial mass {} kg",
                    self.q0 * self.t_sw,
                    self.m0
                ),
            ));
        }
        Ok(())
    }

    /// `exp(-(r - rT) / hr)`.
    pub fn density_factor(&self, r: f64) -> f64 {
        (-(r - self.r_earth) / self.hr).exp()
    }

    /// Lift-curvature coefficient `c_m(r)` [1/m].
    pub fn cm(&self, r: f64) -> f64 {
        self.cm0 * self.density_factor(r)
    }

    /// Drag coefficient `d(r)` [1/m].
    pub fn drag(&self, r: f64) -> f64 {
        self.d0 * self.density_factor(r)
    }

    pub fn gravity(&self, r: f64) -> f64 {
        let ratio = self.r_earth / r;
        self.g0 * ratio * ratio
    }

    pub fn mass_flow(&self, t: f64) -> f64 {
        if t <= self.t_sw {
            self.q0
        } else {
            0.0
        }
    }

    pub fn thrust(&self, t: f64) -> f64 {
        self.ve * self.mass_flow(t)
    }

    /// Mass under the homotopy `m(t) = m0 - lambda1 * q0 * min(t, t_sw)`.
    pub fn mass(&self, t: f64, lambda1: f64) -> Result<f64> {
        let m = self.m0 - lambda1 * self.q0 * t.clamp(0.0, self.t_sw);
        if m > 0.0 {
            Ok(m)
        } else {
            Err(Error::MassDepleted { t, mass: m })
        }
    }

    /// Thrust acceleration `lambda1 * f_T / m`, the homotopy-weighted term
    /// appearing in every propulsive contribution.
    pub fn thrust_accel(&self, t: f64, lambda1: f64) -> Result<f64> {
        let thrust = self.thrust(t);
        if thrust == 0.0 || lambda1 == 0.0 {
            // still surface a depleted mass for misconfigured vehicles
            self.mass(t, lambda1)?;
            return Ok(0.0);
        }
        Ok(lambda1 * thrust / self.mass(t, lambda1)?)
    }
}

/// Time-domain state `(r, L, l, w, gamma, chi)` with `w = ln v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub r: f64,
    pub lat: f64,
    pub lon: f64,
    pub w: f64,
    pub gamma: f64,
    pub chi: f64,
}

impl FullState {
    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            r: a[0],
            lat: a[1],
            lon: a[2],
            w: a[3],
            gamma: a[4],
            chi: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.r, self.lat, self.lon, self.w, self.gamma, self.chi]
    }

    pub fn speed(&self) -> f64 {
        self.w.exp()
    }

    /// Sanity bound of the exponential atmosphere plus chart bounds.
    pub fn is_admissible(&self, p: &VehicleParams) -> bool {
        self.r > p.r_earth - p.hr
            && self.lat.abs() < std::f64::consts::FRAC_PI_2
            && self.gamma.abs() <= std::f64::consts::PI
    }
}

/// Normalized lift coefficient and bank angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlTB {
    pub u: f64,
    pub beta: f64,
}

impl ControlTB {
    /// In-plane and out-of-plane lift commands `(u cos beta, u sin beta)`.
    pub fn components(&self) -> (f64, f64) {
        (self.u * self.beta.cos(), self.u * self.beta.sin())
    }
}

/// Angle-of-attack model used for the thrust projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaModel {
    /// `cos(alpha)`, `sin(alpha)` evaluated exactly.
    Exact,
    /// `cos(alpha) = 1`, `sin(alpha) = alpha`; the model the extremal
    /// control extraction is derived under.
    #[default]
    FirstOrder,
}

/// Projections of the thrust direction: `(cos a, sin a cos b, sin a sin b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ThrustProjection {
    pub along: f64,
    pub lift_in: f64,
    pub lift_out: f64,
}

impl ThrustProjection {
    pub fn new(model: AlphaModel, alpha_max: f64, c: ControlTB) -> Self {
        let (u1, u2) = c.components();
        match model {
            AlphaModel::FirstOrder => Self {
                along: 1.0,
                lift_in: alpha_max * u1,
                lift_out: alpha_max * u2,
            },
            AlphaModel::Exact => {
                let alpha = alpha_max * c.u;
                Self {
                    along: alpha.cos(),
                    lift_in: alpha.sin() * c.beta.cos(),
                    lift_out: alpha.sin() * c.beta.sin(),
                }
            }
        }
    }
}

pub(crate) fn check_chart(gamma: f64, lat: f64) -> Result<(f64, f64)> {
    let cg = gamma.cos();
    if cg.abs() < CHART_TOLERANCE {
        return Err(Error::SingularChart {
            axis: ChartAxis::PathAngle,
            value: cg.abs(),
        });
    }
    let cl = lat.cos();
    if cl.abs() < CHART_TOLERANCE {
        return Err(Error::SingularChart {
            axis: ChartAxis::Latitude,
            value: cl.abs(),
        });
    }
    Ok((cg, cl))
}

/// Rates of the homotopy-blended flight dynamics.
pub fn full_dynamics(
    t: f64,
    x: &FullState,
    c: ControlTB,
    lambda1: f64,
    p: &VehicleParams,
    model: AlphaModel,
) -> Result<FullState> {
    let (cg, cl) = check_chart(x.gamma, x.lat)?;
    let sg = x.gamma.sin();
    let (sc, cc) = x.chi.sin_cos();
    let tan_l = x.lat.tan();

    let v = x.w.exp();
    let cm = p.cm(x.r);
    let d = p.drag(x.r);
    let grav = lambda1 * p.gravity(x.r);
    let tau = p.thrust_accel(t, lambda1)?;
    let proj = ThrustProjection::new(model, p.alpha_max, c);
    let (u1, u2) = c.components();
    let u_sq = c.u * c.u;

    let rates = FullState {
        r: v * sg,
        lat: v * cg * cc / x.r,
        lon: v * cg * sc / (x.r * cl),
        w: tau * proj.along / v - grav * sg / v - (d + p.eta * cm * u_sq) * v,
        gamma: v * cm * u1 + lambda1 * v * cg / x.r + tau * proj.lift_in / v - grav * cg / v,
        chi: v * cm * u2 / cg
            + lambda1 * v * cg * sc * tan_l / x.r
            + tau * proj.lift_out / (v * cg),
    };
    if rates.to_array().iter().all(|r| r.is_finite()) {
        Ok(rates)
    } else {
        Err(Error::NonFinite {
            context: "full dynamics",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Verbatim transcription of the physical model in speed `v`.
    fn physical_model(t: f64, x: [f64; 6], c: ControlTB, p: &VehicleParams) -> [f64; 6] {
        let [r, lat, _lon, v, gamma, chi] = x;
        let m = p.m0 - p.q0 * t.min(p.t_sw);
        let f_t = p.thrust(t);
        let alpha = p.alpha_max * c.u;
        let g = p.gravity(r);
        let cm = p.cm(r);
        let d = p.drag(r);
        [
            v * gamma.sin(),
            v / r * gamma.cos() * chi.cos(),
            v / r * gamma.cos() * chi.sin() / lat.cos(),
            f_t / m * alpha.cos() - (d + p.eta * cm * c.u * c.u) * v * v - g * gamma.sin(),
            f_t / (m * v) * alpha.sin() * c.beta.cos()
                + v * cm * c.u * c.beta.cos()
                + (v / r - g / v) * gamma.cos(),
            f_t / (m * v) * alpha.sin() / gamma.cos() * c.beta.sin()
                + v * cm / gamma.cos() * c.u * c.beta.sin()
                + v / r * gamma.cos() * chi.sin() * lat.tan(),
        ]
    }

    #[test]
    fn atmosphere_and_coefficients() {
        let p = VehicleParams::default();
        assert_eq!(p.density_factor(p.r_earth), 1.0);
        assert_relative_eq!(p.density_factor(p.r_earth + p.hr), (-1.0f64).exp());
        assert_relative_eq!(
            p.density_factor(p.r_earth + 7500.0),
            0.367879441171,
            epsilon = 1e-12
        );
        assert_eq!(p.cm(p.r_earth), 0.00075);
        assert_eq!(p.drag(p.r_earth), 0.00005);
        assert_relative_eq!(p.cm(p.r_earth + p.hr), 2.7591e-4, max_relative = 1e-4);
        for h in [-3000.0, 0.0, 4000.0, 12000.0, 30000.0] {
            let r = p.r_earth + h;
            assert_relative_eq!(p.cm(r) / p.drag(r), p.cm0 / p.d0, max_relative = 1e-14);
        }
    }

    #[test]
    fn gravity_inverse_square() {
        let p = VehicleParams::default();
        assert_eq!(p.gravity(p.r_earth), 9.80665);
        assert_relative_eq!(p.gravity(2.0 * p.r_earth), 9.80665 / 4.0);
        let expected = 9.80665 * (6378137.0f64 / 6390137.0).powi(2);
        assert_relative_eq!(
            p.gravity(p.r_earth + 12000.0),
            expected,
            max_relative = 1e-15
        );
        assert_relative_eq!(expected, 9.7699, epsilon = 1e-4);
    }

    #[test]
    fn propulsion_profile() {
        let p = VehicleParams::default();
        assert_eq!(p.mass_flow(10.0), 10.0);
        assert_eq!(p.mass_flow(20.0), 10.0);
        assert_eq!(p.mass_flow(25.0), 0.0);
        assert_eq!(p.thrust(10.0), 15000.0);
        assert_eq!(p.mass(30.0, 1.0).unwrap(), 800.0);
        assert_eq!(p.mass(30.0, 0.0).unwrap(), 1000.0);
        assert_eq!(p.mass(30.0, 0.5).unwrap(), 900.0);
        let light = VehicleParams { m0: 150.0, ..p };
        assert!(matches!(
            light.mass(20.0, 1.0),
            Err(Error::MassDepleted { .. })
        ));
        assert!(light.validate().is_err());
    }

    #[test]
    fn mass_is_monotone_and_affine_in_lambda() {
        let p = VehicleParams::default();
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let m = p.mass(i as f64 * 0.5, 1.0).unwrap();
            assert!(m <= prev);
            prev = m;
        }
        for t in [3.0, 17.0, 40.0] {
            let m0 = p.mass(t, 0.0).unwrap();
            let m1 = p.mass(t, 1.0).unwrap();
            let mh = p.mass(t, 0.3).unwrap();
            assert_relative_eq!(mh, m0 + 0.3 * (m1 - m0), max_relative = 1e-14);
        }
    }

    #[test]
    fn level_flight_without_control_only_drags() {
        let p = VehicleParams::default();
        let x = FullState {
            r: p.r_earth + 3000.0,
            lat: 0.8,
            lon: 0.01,
            w: 1000f64.ln(),
            gamma: 0.0,
            chi: 0.3,
        };
        let dx = full_dynamics(5.0, &x, ControlTB::default(), 0.0, &p, AlphaModel::Exact).unwrap();
        assert_eq!(dx.r, 0.0);
        assert_eq!(dx.gamma, 0.0);
        assert_eq!(dx.chi, 0.0);
        assert_relative_eq!(dx.w, -p.drag(x.r) * 1000.0, max_relative = 1e-12);
    }

    #[test]
    fn lambda_zero_log_speed_rate_is_pure_drag() {
        let p = VehicleParams::default();
        let x = FullState {
            r: p.r_earth + 5000.0,
            lat: 0.86,
            lon: 0.007,
            w: 800f64.ln(),
            gamma: 0.4,
            chi: -0.2,
        };
        let c = ControlTB { u: 0.3, beta: 0.7 };
        let dx = full_dynamics(3.0, &x, c, 0.0, &p, AlphaModel::Exact).unwrap();
        let expected = -(p.drag(x.r) + p.eta * p.cm(x.r) * 0.09) * 800.0;
        assert_relative_eq!(dx.w, expected, max_relative = 1e-12);
    }

    #[test]
    fn matches_physical_model_at_full_homotopy() {
        let p = VehicleParams::default();
        let states = [
            [p.r_earth + 3000.0, 0.855, 0.0072, 1000.0, -0.5, 0.0],
            [p.r_earth + 9000.0, 0.86, 0.006, 750.0, 0.7, -1.2],
            [p.r_earth + 500.0, -0.3, 1.2, 300.0, -1.1, 2.5],
        ];
        let controls = [
            ControlTB::default(),
            ControlTB { u: 0.4, beta: 0.9 },
            ControlTB {
                u: -0.8,
                beta: -2.0,
            },
        ];
        for t in [4.0, 21.0] {
            for s in states {
                for model_c in controls {
                    let x = FullState {
                        r: s[0],
                        lat: s[1],
                        lon: s[2],
                        w: s[3].ln(),
                        gamma: s[4],
                        chi: s[5],
                    };
                    let dx = full_dynamics(t, &x, model_c, 1.0, &p, AlphaModel::Exact).unwrap();
                    let oracle = physical_model(t, s, model_c, &p);
                    let v = s[3];
                    let got = [dx.r, dx.lat, dx.lon, dx.w * v, dx.gamma, dx.chi];
                    for (g, o) in got.iter().zip(oracle) {
                        assert!((g - o).abs() <= 1e-12 * o.abs().max(1e-12), "{g} vs {o}");
                    }
                }
            }
        }
    }

    #[test]
    fn first_order_alpha_agrees_without_lift() {
        let p = VehicleParams::default();
        let x = FullState {
            r: p.r_earth + 3000.0,
            lat: 0.855,
            lon: 0.0072,
            w: 1000f64.ln(),
            gamma: -0.5,
            chi: 0.1,
        };
        let a = full_dynamics(4.0, &x, ControlTB::default(), 1.0, &p, AlphaModel::Exact).unwrap();
        let b = full_dynamics(
            4.0,
            &x,
            ControlTB::default(),
            1.0,
            &p,
            AlphaModel::FirstOrder,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thrust_discontinuity_only_through_propulsion() {
        let p = VehicleParams::default();
        let x = FullState {
            r: p.r_earth + 6000.0,
            lat: 0.856,
            lon: 0.007,
            w: 900f64.ln(),
            gamma: 0.2,
            chi: 0.3,
        };
        let c = ControlTB { u: 0.2, beta: 0.4 };
        let before = full_dynamics(p.t_sw, &x, c, 1.0, &p, AlphaModel::FirstOrder).unwrap();
        let after = full_dynamics(p.t_sw + 1e-12, &x, c, 1.0, &p, AlphaModel::FirstOrder).unwrap();
        assert_eq!(before.r, after.r);
        assert_eq!(before.lat, after.lat);
        assert_eq!(before.lon, after.lon);
        assert!(before.w > after.w);
        let m = p.m0 - p.q0 * p.t_sw;
        let v = 900.0;
        assert_relative_eq!(
            before.w - after.w,
            p.thrust(0.0) / m / v,
            max_relative = 1e-9
        );
    }

    #[test]
    fn singular_chart_is_rejected() {
        let p = VehicleParams::default();
        let x = FullState {
            r: p.r_earth,
            lat: 0.1,
            lon: 0.0,
            w: 5.0,
            gamma: std::f64::consts::FRAC_PI_2,
            chi: 0.0,
        };
        let err = full_dynamics(0.0, &x, ControlTB::default(), 1.0, &p, AlphaModel::Exact);
        assert!(matches!(
            err,
            Err(Error::SingularChart {
                axis: ChartAxis::PathAngle,
                ..
            })
        ));
    }

    #[test]
    fn default_params_validate() {
        VehicleParams::default().validate().unwrap();
        let bad = VehicleParams {
            alpha_max: 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
