//! Independent oracles shared by integration tests.

use ascent_core::VehicleParams;

/// Grid for the vertical-plane dynamic-programming oracle.
#[derive(Debug, Clone, Copy)]
pub struct DpGrid {
    pub h_min: f64,
    pub h_max: f64,
    pub nh: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub ng: usize,
    pub stages: usize,
    pub du: f64,
    /// Terminal penalty `weight ((h - hf)/h_scale)^2 + weight ((gamma - gf)/gamma_scale)^2`.
    pub weight: f64,
    pub h_scale: f64,
    pub gamma_scale: f64,
}

/// Planar end point: radius, latitude, path angle.
#[derive(Debug, Clone, Copy)]
pub struct PlanarPoint {
    pub r: f64,
    pub lat: f64,
    pub gamma: f64,
}

/// Minimum of `int (d + eta cm u1^2) ds` for the vertical-plane reduction
/// (`chi = 0`), by backward dynamic programming over an (altitude, gamma)
/// grid with latitude as the stage variable and u1 on a uniform grid in
/// [-1, 1]. Values between nodes are bilinear; the terminal point is imposed
/// by a quadratic penalty.
pub fn planar_dp_cost(p: &VehicleParams, from: PlanarPoint, to: PlanarPoint, g: DpGrid) -> f64 {
    let dh = (g.h_max - g.h_min) / (g.nh - 1) as f64;
    let dg = (g.gamma_max - g.gamma_min) / (g.ng - 1) as f64;
    let n_u = (2.0 / g.du).round() as usize + 1;
    let controls: Vec<f64> = (0..n_u).map(|k| -1.0 + g.du * k as f64).collect();
    let dl = (to.lat - from.lat) / g.stages as f64;
    const OUTSIDE: f64 = 1e3;

    let idx = |i: usize, j: usize| i * g.ng + j;
    let h_f = to.r - p.r_earth;
    let mut value: Vec<f64> = (0..g.nh * g.ng)
        .map(|k| {
            let (i, j) = (k / g.ng, k % g.ng);
            let eh = (g.h_min + dh * i as f64 - h_f) / g.h_scale;
            let eg = (g.gamma_min + dg * j as f64 - to.gamma) / g.gamma_scale;
            g.weight * (eh * eh + eg * eg)
        })
        .collect();

    let interp = |v: &[f64], h: f64, gamma: f64| -> f64 {
        let x = (h - g.h_min) / dh;
        let y = (gamma - g.gamma_min) / dg;
        if x < 0.0 || y < 0.0 || x > (g.nh - 1) as f64 || y > (g.ng - 1) as f64 {
            return OUTSIDE;
        }
        let i = (x.floor() as usize).min(g.nh - 2);
        let j = (y.floor() as usize).min(g.ng - 2);
        let (fx, fy) = (x - i as f64, y - j as f64);
        (1.0 - fx) * ((1.0 - fy) * v[idx(i, j)] + fy * v[idx(i, j + 1)])
            + fx * ((1.0 - fy) * v[idx(i + 1, j)] + fy * v[idx(i + 1, j + 1)])
    };

    // rates per unit latitude of (r, gamma, cost)
    let rates = |r: f64, gamma: f64, u: f64| -> [f64; 3] {
        let rho = p.density_factor(r);
        let (sg, cg) = gamma.sin_cos();
        let ds = r / cg;
        [
            ds * sg,
            ds * p.cm0 * rho * u,
            ds * (p.d0 + p.eta * p.cm0 * u * u) * rho,
        ]
    };
    let step = |r: f64, gamma: f64, u: f64| -> (f64, f64, f64) {
        let k1 = rates(r, gamma, u);
        let k2 = rates(r + 0.5 * dl * k1[0], gamma + 0.5 * dl * k1[1], u);
        (r + dl * k2[0], gamma + dl * k2[1], dl * k2[2])
    };

    let mut next = vec![0.0; value.len()];
    for _ in 0..g.stages {
        for i in 0..g.nh {
            let r = p.r_earth + g.h_min + dh * i as f64;
            for j in 0..g.ng {
                let gamma = g.gamma_min + dg * j as f64;
                let mut best = f64::INFINITY;
                for &u in &controls {
                    let (r2, g2, c) = step(r, gamma, u);
                    best = best.min(c + interp(&value, r2 - p.r_earth, g2));
                }
                next[idx(i, j)] = best;
            }
        }
        std::mem::swap(&mut value, &mut next);
    }
    interp(&value, from.r - p.r_earth, from.gamma)
}
