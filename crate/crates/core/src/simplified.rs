//! The simplified problem in curvilinear abscissa `s`: no gravity, thrust or
//! Earth curvature, speed eliminated. Cost `int (d + eta cm (u1^2 + u2^2)) ds`
//! with `p0 = -1`.

use nalgebra::{Matrix5, Matrix5x2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;
use crate::vehicle::{check_chart, ControlTB, VehicleParams, CHART_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedState {
    pub r: f64,
    pub lat: f64,
    pub lon: f64,
    pub gamma: f64,
    pub chi: f64,
}

impl SimplifiedState {
    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            r: a[0],
            lat: a[1],
            lon: a[2],
            gamma: a[3],
            chi: a[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.r, self.lat, self.lon, self.gamma, self.chi]
    }
}

/// Costate conjugate to [`SimplifiedState`]; the cost multiplier is fixed
/// to `p0 = -1`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimplifiedCostate {
    pub pr: f64,
    pub p_lat: f64,
    pub p_lon: f64,
    pub p_gamma: f64,
    pub p_chi: f64,
}

impl SimplifiedCostate {
    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            pr: a[0],
            p_lat: a[1],
            p_lon: a[2],
            p_gamma: a[3],
            p_chi: a[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.pr, self.p_lat, self.p_lon, self.p_gamma, self.p_chi]
    }
}

/// Lift commands `u1 = u cos(beta)` (in-plane), `u2 = u sin(beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlU12 {
    pub u1: f64,
    pub u2: f64,
}

impl ControlU12 {
    /// Polar form with `u >= 0`.
    pub fn to_tb(self) -> ControlTB {
        ControlTB {
            u: self.u1.hypot(self.u2),
            beta: self.u2.atan2(self.u1),
        }
    }

    pub fn from_tb(c: ControlTB) -> Self {
        let (u1, u2) = c.components();
        Self { u1, u2 }
    }

    pub fn norm_sq(&self) -> f64 {
        self.u1 * self.u1 + self.u2 * self.u2
    }
}

/// Running cost `d + eta cm (u1^2 + u2^2)`.
pub fn running_cost(r: f64, z: ControlU12, p: &VehicleParams) -> f64 {
    p.drag(r) + p.eta * p.cm(r) * z.norm_sq()
}

pub fn simplified_dynamics(
    y: &SimplifiedState,
    z: ControlU12,
    p: &VehicleParams,
) -> Result<SimplifiedState> {
    let (cg, cl) = check_chart(y.gamma, y.lat)?;
    let sg = y.gamma.sin();
    let (sc, cc) = y.chi.sin_cos();
    let cm = p.cm(y.r);
    Ok(SimplifiedState {
        r: sg,
        lat: cg * cc / y.r,
        lon: cg * sc / (y.r * cl),
        gamma: cm * z.u1,
        chi: cm * z.u2 / cg,
    })
}

pub fn simplified_hamiltonian(
    y: &SimplifiedState,
    pc: &SimplifiedCostate,
    z: ControlU12,
    p: &VehicleParams,
) -> Result<f64> {
    let f = simplified_dynamics(y, z, p)?;
    Ok(
        pc.pr * f.r + pc.p_lat * f.lat + pc.p_lon * f.lon + pc.p_gamma * f.gamma + pc.p_chi * f.chi
            - running_cost(y.r, z, p),
    )
}

/// Unconstrained maximizer of the Hamiltonian in `(u1, u2)`.
pub fn extremal_control(
    pc: &SimplifiedCostate,
    gamma: f64,
    p: &VehicleParams,
) -> Result<ControlU12> {
    let cg = gamma.cos();
    if cg.abs() < CHART_TOLERANCE {
        return Err(Error::SingularChart {
            axis: crate::error::ChartAxis::PathAngle,
            value: cg.abs(),
        });
    }
    Ok(ControlU12 {
        u1: pc.p_gamma / (2.0 * p.eta),
        u2: pc.p_chi / (2.0 * p.eta * cg),
    })
}

/// `-dH/dy` at fixed control. The `pr` rate is derived directly from the
/// Hamiltonian; along extremal controls it collapses to
/// `pL cg cchi/r^2 + pl cg schi/(r^2 cL) - (d - eta cm |z|^2)/hr`.
pub fn simplified_adjoint(
    y: &SimplifiedState,
    pc: &SimplifiedCostate,
    z: ControlU12,
    p: &VehicleParams,
) -> Result<SimplifiedCostate> {
    let (cg, cl) = check_chart(y.gamma, y.lat)?;
    let sg = y.gamma.sin();
    let (sc, cc) = y.chi.sin_cos();
    let r = y.r;
    let tan_l = y.lat.tan();
    let cm = p.cm(r);
    let hr = p.hr;

    let pr = pc.p_lat * cg * cc / (r * r)
        + pc.p_lon * cg * sc / (r * r * cl)
        + pc.p_gamma * cm * z.u1 / hr
        + pc.p_chi * cm * z.u2 / (hr * cg)
        - running_cost(r, z, p) / hr;
    let p_lat = -pc.p_lon * cg * sc * tan_l / (r * cl);
    let p_gamma = -pc.pr * cg + pc.p_lat * sg * cc / r + pc.p_lon * sg * sc / (r * cl)
        - pc.p_chi * cm * z.u2 * sg / (cg * cg);
    let p_chi = pc.p_lat * cg * sc / r - pc.p_lon * cg * cc / (r * cl);
    Ok(SimplifiedCostate {
        pr,
        p_lat,
        p_lon: 0.0,
        p_gamma,
        p_chi,
    })
}

/// Runtime check of the hypothesis that excludes abnormal extremals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityCertificate {
    pub normal: bool,
    /// `min |cos(gamma)|` over the grid.
    pub min_abs_cos_gamma: f64,
    /// Fraction of grid nodes with `|cos(gamma)|` above tolerance.
    pub fraction_regular: f64,
}

pub fn normality_certificate(traj: &Trajectory) -> NormalityCertificate {
    let n = traj.len();
    if n == 0 {
        return NormalityCertificate {
            normal: false,
            min_abs_cos_gamma: f64::NAN,
            fraction_regular: 0.0,
        };
    }
    let mut min_cos = f64::INFINITY;
    let mut regular = 0usize;
    for sample in traj.samples() {
        let c = sample.state.gamma.cos().abs();
        min_cos = min_cos.min(c);
        if c > CHART_TOLERANCE {
            regular += 1;
        }
    }
    let fraction = regular as f64 / n as f64;
    NormalityCertificate {
        normal: regular == n,
        min_abs_cos_gamma: min_cos,
        fraction_regular: fraction,
    }
}

/// Linearization `y' = A y + B z` about zero control at a frozen state.
pub fn linearization(y: &SimplifiedState, p: &VehicleParams) -> (Matrix5<f64>, Matrix5x2<f64>) {
    let (sg, cg) = y.gamma.sin_cos();
    let (sc, cc) = y.chi.sin_cos();
    let r = y.r;
    let cl = y.lat.cos();
    let tl = y.lat.tan();
    let cm = p.cm(r);

    #[rustfmt::skip]
    let a = Matrix5::new(
        0.0, 0.0, 0.0, cg, 0.0,
        -cg * cc / (r * r), 0.0, 0.0, -sg * cc / r, -cg * sc / r,
        -cg * sc / (r * r * cl), cg * sc * tl / (r * cl), 0.0, -sg * sc / (r * cl), cg * cc / (r * cl),
        0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0,
    );
    #[rustfmt::skip]
    let b = Matrix5x2::new(
        0.0, 0.0,
        0.0, 0.0,
        0.0, 0.0,
        cm, 0.0,
        0.0, cm / cg,
    );
    (a, b)
}

/// `det(B0 w1, B0 w2, B1 w1, B1 w2, B2 w1)` with `B_{i+1} = A B_i` (the
/// state is frozen, so `dB_i/ds` vanishes).
pub fn controllability_certificate(y: &SimplifiedState, p: &VehicleParams) -> f64 {
    let (a, b0) = linearization(y, p);
    let b1 = a * b0;
    let b2 = a * b1;
    let m = Matrix5::from_columns(&[
        b0.column(0).into_owned(),
        b0.column(1).into_owned(),
        b1.column(0).into_owned(),
        b1.column(1).into_owned(),
        b2.column(0).into_owned(),
    ]);
    m.determinant()
}

/// `cm^5 / (r^3 cos L)`: the determinant in level flight.
pub fn controllability_level_flight(y: &SimplifiedState, p: &VehicleParams) -> f64 {
    p.cm(y.r).powi(5) / (y.r.powi(3) * y.lat.cos())
}

/// Closed form of [`controllability_certificate`] at any path angle:
/// `cm^5 cg (cg + sg cchi schi^2 tan L) / (r^3 cos L)`.
pub fn controllability_closed_form(y: &SimplifiedState, p: &VehicleParams) -> f64 {
    let (sg, cg) = y.gamma.sin_cos();
    let (sc, cc) = y.chi.sin_cos();
    controllability_level_flight(y, p) * cg * (cg + sg * cc * sc * sc * y.lat.tan())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    fn random_point(
        rng: &mut ChaCha8Rng,
        p: &VehicleParams,
    ) -> (SimplifiedState, SimplifiedCostate) {
        let y = SimplifiedState {
            r: p.r_earth + rng.gen_range(0.0..20000.0),
            lat: rng.gen_range(-1.2..1.2),
            lon: rng.gen_range(-3.0..3.0),
            gamma: rng.gen_range(-1.2..1.2),
            chi: rng.gen_range(-3.0..3.0),
        };
        let pc = SimplifiedCostate {
            pr: rng.gen_range(-1e-4..1e-4),
            p_lat: rng.gen_range(-300.0..300.0),
            p_lon: rng.gen_range(-300.0..300.0),
            p_gamma: rng.gen_range(-1.0..1.0),
            p_chi: rng.gen_range(-1.0..1.0),
        };
        (y, pc)
    }

    #[test]
    fn zero_control_level_flight() {
        let p = params();
        let y = SimplifiedState {
            r: p.r_earth + 1000.0,
            lat: 0.8,
            lon: 0.1,
            gamma: 0.0,
            chi: 0.4,
        };
        let f = simplified_dynamics(&y, ControlU12::default(), &p).unwrap();
        assert_eq!(f.r, 0.0);
        assert_eq!(f.gamma, 0.0);
        assert_eq!(f.chi, 0.0);
    }

    #[test]
    fn vertical_path_is_singular() {
        let p = params();
        let y = SimplifiedState {
            r: p.r_earth,
            lat: 0.0,
            lon: 0.0,
            gamma: std::f64::consts::FRAC_PI_2,
            chi: 0.0,
        };
        assert!(matches!(
            simplified_dynamics(&y, ControlU12::default(), &p),
            Err(Error::SingularChart { .. })
        ));
    }

    #[test]
    fn unit_lift_at_sea_level() {
        let p = params();
        let y = SimplifiedState {
            r: p.r_earth,
            lat: 0.3,
            lon: 0.0,
            gamma: 0.2,
            chi: 0.0,
        };
        let f = simplified_dynamics(&y, ControlU12 { u1: 1.0, u2: 0.0 }, &p).unwrap();
        assert_relative_eq!(f.gamma, 0.00075, max_relative = 1e-15);
    }

    #[test]
    fn hamiltonian_of_zero_costate_is_minus_drag() {
        let p = params();
        let y = SimplifiedState {
            r: p.r_earth + 4000.0,
            lat: 0.8,
            lon: 0.1,
            gamma: 0.3,
            chi: 0.4,
        };
        let h =
            simplified_hamiltonian(&y, &SimplifiedCostate::default(), ControlU12::default(), &p)
                .unwrap();
        assert_eq!(h, -p.drag(y.r));
    }

    #[test]
    fn extremal_control_values() {
        let p = params();
        let zero = extremal_control(&SimplifiedCostate::default(), 0.3, &p).unwrap();
        assert_eq!(zero, ControlU12::default());
        let pc = SimplifiedCostate {
            p_gamma: 2.0 * p.eta,
            ..Default::default()
        };
        assert_relative_eq!(extremal_control(&pc, 0.3, &p).unwrap().u1, 1.0);
        let pc = SimplifiedCostate {
            p_chi: 0.884,
            ..Default::default()
        };
        assert_relative_eq!(
            extremal_control(&pc, 0.0, &p).unwrap().u2,
            1.0,
            max_relative = 1e-15
        );
        assert!(extremal_control(&pc, std::f64::consts::FRAC_PI_2, &p).is_err());
    }

    #[test]
    fn extremal_control_maximizes_hamiltonian_on_grid() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (y, mut pc) = random_point(&mut rng, &p);
            // keep the maximizer inside the [-2, 2]^2 search box
            pc.p_gamma *= 0.8;
            pc.p_chi *= 0.8 * y.gamma.cos();
            let z = extremal_control(&pc, y.gamma, &p).unwrap();
            let h_star = simplified_hamiltonian(&y, &pc, z, &p).unwrap();
            for i in 0..21 {
                for j in 0..21 {
                    let cand = ControlU12 {
                        u1: -2.0 + 0.2 * i as f64,
                        u2: -2.0 + 0.2 * j as f64,
                    };
                    let h = simplified_hamiltonian(&y, &pc, cand, &p).unwrap();
                    assert!(h <= h_star + 1e-15 * h_star.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn adjoint_special_values() {
        let p = params();
        let y = SimplifiedState {
            r: p.r_earth + 2500.0,
            lat: 0.85,
            lon: 0.007,
            gamma: 0.1,
            chi: 0.2,
        };
        let dp = simplified_adjoint(&y, &SimplifiedCostate::default(), ControlU12::default(), &p)
            .unwrap();
        assert_relative_eq!(dp.pr, -p.drag(y.r) / p.hr, max_relative = 1e-14);
        assert_eq!(dp.p_lon, 0.0);
    }

    #[test]
    fn adjoint_matches_central_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (y, pc) = random_point(&mut rng, &p);
            let z = ControlU12 {
                u1: rng.gen_range(-1.0..1.0),
                u2: rng.gen_range(-1.0..1.0),
            };
            let dp = simplified_adjoint(&y, &pc, z, &p).unwrap().to_array();
            let base = y.to_array();
            let steps = [1.0, 1e-6, 1e-6, 1e-6, 1e-6];
            for k in 0..5 {
                let mut plus = base;
                let mut minus = base;
                plus[k] += steps[k];
                minus[k] -= steps[k];
                let hp =
                    simplified_hamiltonian(&SimplifiedState::from_array(plus), &pc, z, &p).unwrap();
                let hm = simplified_hamiltonian(&SimplifiedState::from_array(minus), &pc, z, &p)
                    .unwrap();
                let fd = -(hp - hm) / (2.0 * steps[k]);
                let floor = if k == 0 { 1e-10 } else { 1e-7 };
                assert!(
                    (fd - dp[k]).abs() <= 1e-6 * dp[k].abs().max(floor),
                    "component {k}: fd {fd} vs analytic {}",
                    dp[k]
                );
            }
        }
    }

    #[test]
    fn polar_roundtrip() {
        for (u1, u2) in [(0.3, 0.1), (-0.2, 0.5), (0.0, -0.7), (-0.4, -0.4)] {
            let z = ControlU12 { u1, u2 };
            let back = ControlU12::from_tb(z.to_tb());
            assert_relative_eq!(back.u1, u1, epsilon = 1e-15);
            assert_relative_eq!(back.u2, u2, epsilon = 1e-15);
            assert!(z.to_tb().u >= 0.0);
        }
    }

    #[test]
    fn controllability_sea_level_example() {
        let p = params();
        let y = SimplifiedState {
            r: p.r_earth,
            lat: 0.0,
            lon: 0.0,
            gamma: 0.0,
            chi: 0.3,
        };
        let det = controllability_certificate(&y, &p);
        assert_relative_eq!(det.abs(), 9.146e-37, max_relative = 1e-3);
        assert_relative_eq!(
            det,
            controllability_level_flight(&y, &p),
            max_relative = 1e-10
        );
    }

    #[test]
    fn controllability_matches_closed_forms() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (mut y, _) = random_point(&mut rng, &p);
            let det = controllability_certificate(&y, &p);
            assert_relative_eq!(
                det,
                controllability_closed_form(&y, &p),
                max_relative = 1e-10
            );
            y.gamma = 0.0;
            let det = controllability_certificate(&y, &p);
            assert_ne!(det, 0.0);
            assert_relative_eq!(
                det,
                controllability_level_flight(&y, &p),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn controllability_grows_toward_the_pole() {
        let p = params();
        let mut y = SimplifiedState {
            r: p.r_earth + 3000.0,
            lat: 0.0,
            lon: 0.0,
            gamma: 0.0,
            chi: 0.0,
        };
        let mut prev = controllability_certificate(&y, &p).abs();
        for lat in [0.5, 1.0, 1.4, 1.5, 1.57] {
            y.lat = lat;
            let det = controllability_certificate(&y, &p).abs();
            assert!(det > prev);
            prev = det;
        }
    }
}
