//! Line-of-sight geometry, the closed-form guidance law of the simplified
//! problem, and assembly of the costate guess that seeds the first shooting
//! solve.
//!
//! The law is a terminal-angle-constrained proportional navigation whose
//! gains depend on `bR` with `b = sqrt(cm d / (2 eta))`. As `bR -> 0` the
//! gains tend to the classical `(k1, k2) = (2, 4)`.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::midpoint_step;
use crate::simplified::{
    running_cost, simplified_adjoint, simplified_dynamics, simplified_hamiltonian, ControlU12,
    SimplifiedCostate, SimplifiedState,
};
use crate::vehicle::{check_chart, VehicleParams};

const MIN_RANGE: f64 = 1.0;

/// Range and Euler angles of the unit vector toward the target, expressed
/// in the local North-East-Down frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosGeometry {
    pub range: f64,
    /// Elevation: positive when the target is above the local horizon.
    pub lambda1: f64,
    /// Azimuth from north toward east.
    pub lambda2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// Coefficients held constant when the law is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrozenCoefficients {
    pub cm: f64,
    pub d: f64,
    pub cos_gamma: f64,
}

impl FrozenCoefficients {
    pub fn at(y: &SimplifiedState, p: &VehicleParams) -> Self {
        Self {
            cm: p.cm(y.r),
            d: p.drag(y.r),
            cos_gamma: y.gamma.cos(),
        }
    }

    pub fn b(&self, p: &VehicleParams) -> f64 {
        (self.cm * self.d / (2.0 * p.eta)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub s_f: f64,
    pub costate0: SimplifiedCostate,
    /// Guidance commands at the initial point.
    pub control0: ControlU12,
    /// Determinant of the linear system for `(pr, pL, pl)`.
    pub determinant: f64,
}

/// Earth-centered Cartesian position of `(r, L, l)`.
pub fn position(r: f64, lat: f64, lon: f64) -> Vector3<f64> {
    let (sl, cl) = lat.sin_cos();
    let (so, co) = lon.sin_cos();
    Vector3::new(r * cl * co, r * cl * so, r * sl)
}

/// `(e_L, e_l, e_r)` at a position: north, east, down.
pub fn ned_frame(xi: &Vector3<f64>) -> [Vector3<f64>; 3] {
    let r = xi.norm();
    let lat = (xi.z / r).asin();
    let lon = xi.y.atan2(xi.x);
    let (sl, cl) = lat.sin_cos();
    let (so, co) = lon.sin_cos();
    [
        Vector3::new(-sl * co, -sl * so, cl),
        Vector3::new(-so, co, 0.0),
        Vector3::new(-cl * co, -cl * so, -sl),
    ]
}

pub fn los_from(xi: &Vector3<f64>, xi_f: &Vector3<f64>) -> Result<LosGeometry> {
    let delta = xi_f - xi;
    let range = delta.norm();
    if !(range >= MIN_RANGE) {
        return Err(Error::ZeroRange { range });
    }
    let n = delta / range;
    let [e_north, e_east, e_down] = ned_frame(xi);
    let lambda1 = -(n.dot(&e_down).clamp(-1.0, 1.0)).asin();
    let lambda2 = n.dot(&e_east).atan2(n.dot(&e_north));
    Ok(LosGeometry {
        range,
        lambda1,
        lambda2,
    })
}

/// Line of sight between two simplified states, with the azimuth unwrapped
/// so that `|chi - lambda2| <= pi`.
pub fn los_between(y: &SimplifiedState, target: &SimplifiedState) -> Result<LosGeometry> {
    let mut geom = los_from(
        &position(y.r, y.lat, y.lon),
        &position(target.r, target.lat, target.lon),
    )?;
    geom.lambda2 = unwrap_toward(geom.lambda2, y.chi);
    Ok(geom)
}

/// Shifts `angle` by multiples of `2 pi` to within `pi` of `reference`.
pub fn unwrap_toward(angle: f64, reference: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    angle + ((reference - angle) / tau).round() * tau
}

/// LOS angle rates under weak deviation from the LOS direction.
pub fn los_rates(geom: &LosGeometry, v: f64, gamma: f64, chi: f64) -> Result<(f64, f64)> {
    if !(geom.range >= MIN_RANGE) {
        return Err(Error::ZeroRange { range: geom.range });
    }
    let scale = v / geom.range;
    Ok((
        -scale * (gamma - geom.lambda1).sin(),
        -scale * (chi - geom.lambda2).sin(),
    ))
}

/// Below this `bR` the gains are summed from power series with positive
/// terms; above it the exponential closed form is used.
pub const GAIN_SERIES_THRESHOLD: f64 = 2.0;
const SERIES_TERMS: usize = 18;

/// Reduced series `a = (sinh x - x)/x^3`, `b = (x cosh x - sinh x)/x^3`,
/// `c = (2x sinh x - 4 cosh x + 4)/x^4` and their derivatives.
fn reduced_series(x: f64) -> ([f64; 3], [f64; 3]) {
    let x2 = x * x;
    let mut val = [0.0; 3];
    let mut der = [0.0; 3];
    // x^(2k-2)/(2k+1)! for a, b; x^(2k-4)/(2k)! for c
    let mut pow_ab = 1.0;
    let mut fact_ab = 6.0;
    for k in 1..=SERIES_TERMS {
        let kf = k as f64;
        let term = pow_ab / fact_ab;
        val[0] += term;
        val[1] += 2.0 * kf * term;
        if k >= 2 {
            let d = (2.0 * kf - 2.0) * term / x;
            der[0] += d;
            der[1] += 2.0 * kf * d;
        }
        pow_ab *= x2;
        fact_ab *= (2.0 * kf + 2.0) * (2.0 * kf + 3.0);
    }
    let mut pow_c = 1.0;
    let mut fact_c = 24.0;
    for k in 2..=SERIES_TERMS + 1 {
        let kf = k as f64;
        let term = (4.0 * kf - 4.0) * pow_c / fact_c;
        val[2] += term;
        if k >= 3 {
            der[2] += (2.0 * kf - 4.0) * term / x;
        }
        pow_c *= x2;
        fact_c *= (2.0 * kf + 1.0) * (2.0 * kf + 2.0);
    }
    (val, der)
}

pub fn gains(br: f64) -> GuidanceGains {
    let x = br.max(0.0);
    let (k1, k2) = if x < GAIN_SERIES_THRESHOLD {
        let ([a, b, c], _) = reduced_series(x);
        (2.0 * a / c, 2.0 * b / c)
    } else {
        // numerator and denominator divided by e^x
        let e = (-x).exp();
        let e2 = e * e;
        let den = 4.0 * e + (x - 2.0) - e2 * (x + 2.0);
        (
            x * (1.0 - e2 - 2.0 * x * e) / den,
            x * ((x - 1.0) + e2 * (x + 1.0)) / den,
        )
    };
    GuidanceGains {
        k1,
        k2,
        k3: 2.0 + k1 - k2,
    }
}

/// `(dk1/dx, dk2/dx)` at `x = bR`.
pub fn gain_derivatives(br: f64) -> (f64, f64) {
    let x = br.max(0.0);
    if x < GAIN_SERIES_THRESHOLD {
        if x == 0.0 {
            return (0.0, 0.0);
        }
        let ([a, b, c], [da, db, dc]) = reduced_series(x);
        return (
            2.0 * (da * c - a * dc) / (c * c),
            2.0 * (db * c - b * dc) / (c * c),
        );
    }
    let e = (-x).exp();
    let e2 = e * e;
    let den = 4.0 * e + (x - 2.0) - e2 * (x + 2.0);
    let den_d = 1.0 - 4.0 * e + e2 * (2.0 * x + 3.0);
    let n1 = 1.0 - e2 - 2.0 * x * e;
    let n1_d = 2.0 * e2 - 2.0 * e + 2.0 * x * e;
    let n2 = (x - 1.0) + e2 * (x + 1.0);
    let n2_d = 1.0 - e2 * (2.0 * x + 1.0);
    (
        (n1 + x * n1_d) / den - x * n1 * den_d / (den * den),
        (n2 + x * n2_d) / den - x * n2 * den_d / (den * den),
    )
}

/// In-plane command.
pub fn guidance_u1(
    geom: &LosGeometry,
    gamma: f64,
    gamma_f: f64,
    p: &VehicleParams,
    frozen: &FrozenCoefficients,
) -> Result<f64> {
    if !(geom.range >= MIN_RANGE) {
        return Err(Error::ZeroRange { range: geom.range });
    }
    let k = gains(frozen.b(p) * geom.range);
    let rc = geom.range * frozen.cm;
    Ok(-k.k1 * (gamma_f - geom.lambda1) / rc
        - k.k2 * (gamma - geom.lambda1).sin() / rc
        - k.k3 * frozen.cos_gamma / (2.0 * p.hr * frozen.cm))
}

/// Out-of-plane command.
pub fn guidance_u2(
    geom: &LosGeometry,
    chi: f64,
    chi_f: f64,
    p: &VehicleParams,
    frozen: &FrozenCoefficients,
) -> Result<f64> {
    if !(geom.range >= MIN_RANGE) {
        return Err(Error::ZeroRange { range: geom.range });
    }
    let k = gains(frozen.b(p) * geom.range);
    let rc = geom.range * frozen.cm;
    Ok(-frozen.cos_gamma
        * (k.k1 * (chi_f - geom.lambda2) / rc + k.k2 * (chi - geom.lambda2).sin() / rc))
}

/// Both commands, with the coefficients frozen at `y`.
pub fn guidance_control(
    y: &SimplifiedState,
    target: &SimplifiedState,
    p: &VehicleParams,
) -> Result<(ControlU12, LosGeometry)> {
    let geom = los_between(y, target)?;
    let frozen = FrozenCoefficients::at(y, p);
    let z = ControlU12 {
        u1: guidance_u1(&geom, y.gamma, target.gamma, p, &frozen)?,
        u2: guidance_u2(&geom, y.chi, target.chi, p, &frozen)?,
    };
    Ok((z, geom))
}

/// Initial horizon and costate from the guidance law: `s_f = R(0)`,
/// `(pgamma, pchi)` from the extremal-control relations, and
/// `(pr, pL, pl)` from `H = 0` together with the adjoint equations of
/// `pgamma`, `pchi` matched against the abscissa derivatives of the law.
pub fn assemble_guess(
    y0: &SimplifiedState,
    target: &SimplifiedState,
    p: &VehicleParams,
) -> Result<InitialGuess> {
    let (cg, cl) = check_chart(y0.gamma, y0.lat)?;
    let sg = y0.gamma.sin();
    let (sc, cc) = y0.chi.sin_cos();
    let r = y0.r;
    let eta = p.eta;

    let geom = los_between(y0, target)?;
    let frozen = FrozenCoefficients::at(y0, p);
    let cm = frozen.cm;
    let b = frozen.b(p);
    let range = geom.range;
    let k = gains(b * range);
    let (k1_d, k2_d) = gain_derivatives(b * range);

    let u1 = guidance_u1(&geom, y0.gamma, target.gamma, p, &frozen)?;
    let u2 = guidance_u2(&geom, y0.chi, target.chi, p, &frozen)?;
    let z = ControlU12 { u1, u2 };
    let p_gamma = 2.0 * eta * u1;
    let p_chi = 2.0 * eta * cg * u2;

    // abscissa derivatives along the law with R' = -1
    let dgamma = y0.gamma - geom.lambda1;
    let dchi = y0.chi - geom.lambda2;
    let lambda1_d = -dgamma.sin() / range;
    let lambda2_d = -dchi.sin() / range;
    let gamma_d = cm * u1;
    let chi_d = cm * u2 / cg;

    let n1 = k.k1 * (target.gamma - geom.lambda1) + k.k2 * dgamma.sin();
    let n1_d =
        -b * k1_d * (target.gamma - geom.lambda1) - k.k1 * lambda1_d - b * k2_d * dgamma.sin()
            + k.k2 * dgamma.cos() * (gamma_d - lambda1_d);
    let k3_d = k1_d - k2_d;
    let u1_d = -n1_d / (range * cm) - n1 / (range * range * cm)
        + b * k3_d * frozen.cos_gamma / (2.0 * p.hr * cm);

    let n2 = k.k1 * (target.chi - geom.lambda2) + k.k2 * dchi.sin();
    let n2_d = -b * k1_d * (target.chi - geom.lambda2) - k.k1 * lambda2_d - b * k2_d * dchi.sin()
        + k.k2 * dchi.cos() * (chi_d - lambda2_d);
    let u2_d = -frozen.cos_gamma * (n2_d / (range * cm) + n2 / (range * range * cm));

    #[rustfmt::skip]
    let a = Matrix3::new(
        sg, cg * cc / r, cg * sc / (r * cl),
        -cg, sg * cc / r, sg * sc / (r * cl),
        0.0, cg * sc / r, -cg * cc / (r * cl),
    );
    let rhs = Vector3::new(
        -p_gamma * cm * u1 - p_chi * cm * u2 / cg + running_cost(r, z, p),
        2.0 * eta * u1_d + p_chi * cm * u2 * sg / (cg * cg),
        2.0 * eta * (cg * u2_d - sg * gamma_d * u2),
    );
    let det = a.determinant();
    if !(det.abs() * r * r >= 1e-18) {
        return Err(Error::SingularGuess { det });
    }
    let sol = a.lu().solve(&rhs).ok_or(Error::SingularGuess { det })?;
    Ok(InitialGuess {
        s_f: range,
        costate0: SimplifiedCostate {
            pr: sol[0],
            p_lat: sol[1],
            p_lon: sol[2],
            p_gamma,
            p_chi,
        },
        control0: z,
        determinant: det,
    })
}

/// One node of a closed-loop guidance simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSample {
    pub s: f64,
    pub state: SimplifiedState,
    pub control: ControlU12,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoopResult {
    pub samples: Vec<GuidanceSample>,
    pub initial_range: f64,
    pub final_range: f64,
    pub gamma_error: f64,
    pub chi_error: f64,
}

impl ClosedLoopResult {
    /// Columns `s, r, lat, lon, gamma, chi, u1, u2, range`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let err = |e: csv::Error| Error::Parse(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "r", "lat", "lon", "gamma", "chi", "u1", "u2", "range"])
            .map_err(err)?;
        for smp in &self.samples {
            let y = smp.state;
            let row = [
                smp.s,
                y.r,
                y.lat,
                y.lon,
                y.gamma,
                y.chi,
                smp.control.u1,
                smp.control.u2,
                smp.range,
            ];
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Flies the simplified dynamics under the guidance law until the range
/// drops below `stop_fraction * R(0)` or stops decreasing. The step is
/// `R / steps_per_range`, capped at `R(0) / 400`.
pub fn simulate_closed_loop(
    y0: &SimplifiedState,
    target: &SimplifiedState,
    p: &VehicleParams,
    stop_fraction: f64,
) -> Result<ClosedLoopResult> {
    const STEPS_PER_RANGE: f64 = 100.0;
    const MAX_STEPS: usize = 200_000;
    let initial_range = los_between(y0, target)?.range;
    let h_max = initial_range / 400.0;
    let stop = (stop_fraction * initial_range).max(MIN_RANGE * 2.0);

    let rates = |_: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let st = SimplifiedState::from_array([y[0], y[1], y[2], y[3], y[4]]);
        let (z, _) = guidance_control(&st, target, p)?;
        let f = simplified_dynamics(&st, z, p)?;
        dy.copy_from_slice(&f.to_array());
        Ok(())
    };

    let mut y = y0.to_array().to_vec();
    let mut s = 0.0;
    let mut samples = Vec::new();
    let mut range = initial_range;
    for _ in 0..MAX_STEPS {
        let st = SimplifiedState::from_array([y[0], y[1], y[2], y[3], y[4]]);
        let (z, geom) = guidance_control(&st, target, p)?;
        range = geom.range;
        samples.push(GuidanceSample {
            s,
            state: st,
            control: z,
            range,
        });
        if range <= stop {
            break;
        }
        let h = (range / STEPS_PER_RANGE).min(h_max);
        let next = midpoint_step(rates, s, &y, h)?;
        let next_state = SimplifiedState::from_array([next[0], next[1], next[2], next[3], next[4]]);
        let next_range = los_between(&next_state, target)
            .map(|g| g.range)
            .unwrap_or(0.0);
        if next_range >= range {
            break;
        }
        y = next;
        s += h;
    }
    let last = samples.last().expect("at least one sample").state;
    Ok(ClosedLoopResult {
        samples,
        initial_range,
        final_range: range,
        gamma_error: last.gamma - target.gamma,
        chi_error: unwrap_toward(last.chi - target.chi, 0.0),
    })
}

/// Costate guess fitted to a closed-loop guidance flight.
///
/// With the state and control histories of the flight held fixed, the
/// costate dynamics are affine in the initial costate. The initial costate
/// is chosen by least squares so the extremal-control relations reproduce
/// the guidance commands along the flight (range above `cutoff * R(0)`),
/// with `H(0) = 0` as a heavily weighted extra row. `s_f` stays `R(0)`.
pub fn fitted_guess(
    y0: &SimplifiedState,
    flight: &ClosedLoopResult,
    p: &VehicleParams,
    cutoff: f64,
) -> Result<InitialGuess> {
    type M5 = SMatrix<f64, 5, 5>;
    type V5 = SVector<f64, 5>;
    let affine = |y: &SimplifiedState, z: ControlU12| -> Result<(M5, V5)> {
        let c0 = V5::from(simplified_adjoint(y, &SimplifiedCostate::default(), z, p)?.to_array());
        let mut m = M5::zeros();
        for j in 0..5 {
            let mut e = [0.0; 5];
            e[j] = 1.0;
            let cj = simplified_adjoint(y, &SimplifiedCostate::from_array(e), z, p)?.to_array();
            m.set_column(j, &(V5::from(cj) - c0));
        }
        Ok((m, c0))
    };
    let samples = &flight.samples;
    if samples.len() < 3 {
        return Err(Error::SingularGuess { det: 0.0 });
    }
    let scale = [p.d0, y0.r * p.d0, y0.r * p.d0, 1.0, 1.0];
    let eta = p.eta;

    // Heun propagation of p(s) = phi(s) p0 + q(s) over the flight nodes
    let mut phi = M5::identity();
    let mut q = V5::zeros();
    let mut rows: Vec<([f64; 5], f64)> = Vec::new();
    let mut here = affine(&samples[0].state, samples[0].control)?;
    for (i, smp) in samples.iter().enumerate() {
        if smp.range >= cutoff * flight.initial_range {
            let cg = smp.state.gamma.cos();
            for (k, target) in [
                (3, 2.0 * eta * smp.control.u1),
                (4, 2.0 * eta * cg * smp.control.u2),
            ] {
                let row = phi.row(k);
                rows.push((std::array::from_fn(|j| row[j] * scale[j]), target - q[k]));
            }
        }
        let Some(next) = samples.get(i + 1) else {
            break;
        };
        let h = next.s - smp.s;
        let there = affine(&next.state, next.control)?;
        let (ma, ca) = here;
        let (mb, cb) = there;
        let kphi = ma * phi;
        let kq = ma * q + ca;
        let phi_e = phi + kphi * h;
        let q_e = q + kq * h;
        phi += (kphi + mb * phi_e) * (h / 2.0);
        q += (kq + mb * q_e + cb) * (h / 2.0);
        here = there;
    }

    let z0 = samples[0].control;
    let h0 = simplified_hamiltonian(y0, &SimplifiedCostate::default(), z0, p)?;
    let weight = 1e3 / p.drag(y0.r);
    let m = rows.len() + 1;
    let mut a = DMatrix::zeros(m, 5);
    let mut b = DVector::zeros(m);
    for (i, (row, v)) in rows.iter().enumerate() {
        for j in 0..5 {
            a[(i, j)] = row[j];
        }
        b[i] = *v;
    }
    for j in 0..5 {
        let mut e = [0.0; 5];
        e[j] = 1.0;
        let hj = simplified_hamiltonian(y0, &SimplifiedCostate::from_array(e), z0, p)?;
        a[(m - 1, j)] = (hj - h0) * scale[j] * weight;
    }
    b[m - 1] = -h0 * weight;
    let svd = a.svd(true, true);
    let det = svd.singular_values.iter().product::<f64>();
    let sol = svd
        .solve(&b, 1e-14)
        .map_err(|_| Error::SingularGuess { det })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularGuess { det });
    }
    Ok(InitialGuess {
        s_f: flight.initial_range,
        costate0: SimplifiedCostate::from_array(std::array::from_fn(|j| sol[j] * scale[j])),
        control0: z0,
        determinant: det,
    })
}
