//! Steering the noiseless transformed system between points of the right
//! half-plane.
//!
//! Any smooth positive `p` on `[0, 1]` defines a trajectory
//! `z₁ = p^{−1/3}`, `z₂ = p'/3` of the controlled system
//! `ż₁ = −z₁⁴z₂`, `ż₂ = δz₁ + 2z₁³z₂² − γz₁⁴z₂ + u`, with the control `u` read
//! off the second equation. Hermite data at both ends pin the endpoints.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::rk4_ode;
use crate::model::SdeParamsRef;

/// Cubic minima at or below this fall back to the exponential interpolant.
pub const POSITIVITY_MARGIN: f64 = 1e-8;
pub const DEFAULT_U_GRID: usize = 8192;
/// The quartic repair keeps `p` above this fraction of the smaller endpoint value.
pub const REPAIR_FLOOR_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub xi0: f64,
    pub eta0: f64,
    pub z1: f64,
    pub z2: f64,
}

impl Endpoints {
    pub fn new(xi0: f64, eta0: f64, z1: f64, z2: f64) -> Result<Self> {
        if !(xi0 > 0.0 && xi0.is_finite()) {
            return Err(Error::NonpositiveXi(xi0));
        }
        if !(z1 > 0.0 && z1.is_finite()) {
            return Err(Error::NonpositiveXi(z1));
        }
        if !(eta0.is_finite() && z2.is_finite()) {
            return Err(Error::config("endpoint velocities must be finite"));
        }
        Ok(Self { xi0, eta0, z1, z2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolantKind {
    CubicPolynomial,
    /// Cubic Hermite plus a nonnegative multiple of `t²(1 − t)²`.
    QuarticPolynomial,
    /// `p = exp(q)` with `q` a cubic.
    ExpCubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSolution {
    pub interpolant_kind: InterpolantKind,
    /// Monomial coefficients `c₀..c₄` of `p` (or of `ln p` for `exp_cubic`);
    /// `c₄ = 0` except for the quartic.
    pub p_data: [f64; 5],
    /// `u` at `k/(n − 1)`, `k = 0..n`; empty until synthesized.
    pub u_grid: Vec<f64>,
    /// Endpoint error of the verified trajectory, once verified.
    pub residual: Option<f64>,
    pub min_p: f64,
}

fn hermite_coefficients(f0: f64, f1: f64, d0: f64, d1: f64) -> [f64; 4] {
    [f0, d0, 3.0 * (f1 - f0) - 2.0 * d0 - d1, 2.0 * (f0 - f1) + d0 + d1]
}

fn cubic(c: &[f64; 4], t: f64) -> [f64; 3] {
    quartic(&[c[0], c[1], c[2], c[3], 0.0], t)
}

fn quartic(c: &[f64; 5], t: f64) -> [f64; 3] {
    [
        c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4]))),
        c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + 4.0 * t * c[4])),
        2.0 * c[2] + t * (6.0 * c[3] + 12.0 * t * c[4]),
    ]
}

/// Minimum of a quartic on `[0, 1]`: endpoints plus critical points located
/// by sign changes of `p'` on a fine grid and bisection.
fn quartic_min(c: &[f64; 5]) -> f64 {
    const N: usize = 512;
    let d = |t: f64| quartic(c, t)[1];
    let mut m = quartic(c, 0.0)[0].min(quartic(c, 1.0)[0]);
    let mut prev = (0.0, d(0.0));
    for k in 1..=N {
        let t = k as f64 / N as f64;
        let cur = (t, d(t));
        if prev.1 < 0.0 && cur.1 >= 0.0 {
            let (mut lo, mut hi) = (prev.0, cur.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if d(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            m = m.min(quartic(c, 0.5 * (lo + hi))[0]);
        }
        prev = cur;
    }
    m
}

/// Minimum of a cubic on `[0, 1]` (endpoints and interior critical points).
fn cubic_min(c: &[f64; 4]) -> f64 {
    let mut m = cubic(c, 0.0)[0].min(cubic(c, 1.0)[0]);
    // c1 + 2c2 t + 3c3 t² = 0
    let (a, b, cc) = (3.0 * c[3], 2.0 * c[2], c[1]);
    let mut roots = Vec::new();
    if a.abs() < 1e-300 {
        if b != 0.0 {
            roots.push(-cc / b);
        }
    } else {
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q != 0.0 {
                roots.push(q / a);
                roots.push(cc / q);
            } else {
                roots.push(0.0);
            }
        }
    }
    for r in roots {
        if (0.0..=1.0).contains(&r) {
            m = m.min(cubic(c, r)[0]);
        }
    }
    m
}

impl ControlSolution {
    /// `(p, p', p'')` at `t`.
    pub fn p_derivatives(&self, t: f64) -> [f64; 3] {
        let [q, dq, ddq] = quartic(&self.p_data, t);
        match self.interpolant_kind {
            InterpolantKind::CubicPolynomial | InterpolantKind::QuarticPolynomial => [q, dq, ddq],
            InterpolantKind::ExpCubic => {
                let e = q.exp();
                [e, dq * e, (ddq + dq * dq) * e]
            }
        }
    }

    /// The control at `t` from the analytic derivatives of `p`.
    pub fn control_at(&self, t: f64, p: &SdeParamsRef) -> f64 {
        let [v, d1, d2] = self.p_derivatives(t);
        let cbrt = v.cbrt();
        d2 / 3.0 - p.delta / cbrt - (2.0 / 9.0) * d1 * d1 / v + p.gamma / 3.0 * d1 / (v * cbrt)
    }

    /// `(z₁, z₂) = (p^{−1/3}, p'/3)` at `t`.
    pub fn trajectory(&self, t: f64) -> [f64; 2] {
        let [v, d1, _] = self.p_derivatives(t);
        [1.0 / v.cbrt(), d1 / 3.0]
    }

    /// Cubic (4-point Lagrange) interpolation of `u_grid` at `t ∈ [0, 1]`.
    pub fn interpolated_control(&self, t: f64) -> f64 {
        let n = self.u_grid.len();
        let h = 1.0 / (n - 1) as f64;
        let pos = (t / h).clamp(0.0, (n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        let start = k.saturating_sub(1).min(n.saturating_sub(4));
        let nodes = (start..(start + 4).min(n)).collect::<Vec<_>>();
        let mut sum = 0.0;
        for &i in &nodes {
            let mut w = 1.0;
            for &j in &nodes {
                if i != j {
                    w *= (pos - j as f64) / (i as f64 - j as f64);
                }
            }
            sum += w * self.u_grid[i];
        }
        sum
    }

    /// Rows `(t, p, u)` for the sampled grid.
    pub fn samples(&self) -> Vec<[f64; 3]> {
        let n = self.u_grid.len();
        (0..n)
            .map(|k| {
                let t = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                [t, self.p_derivatives(t)[0], self.u_grid[k]]
            })
            .collect()
    }
}

/// How a cubic Hermite interpolant that dips too low is repaired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityRepair {
    /// Triggered when the cubic falls below `REPAIR_FLOOR_FRACTION` of the
    /// smaller endpoint value; adds the least bump `c·t²(1 − t)²` that lifts it there.
    #[default]
    QuarticBump,
    /// Triggered when the cubic falls below `POSITIVITY_MARGIN`; replaces `p`
    /// by `exp` of the cubic Hermite interpolant of `ln p`.
    ExpCubic,
}

fn widen(c: [f64; 4]) -> [f64; 5] {
    [c[0], c[1], c[2], c[3], 0.0]
}

/// Positive interpolant with `p(0) = ξ₀⁻³`, `p(1) = z₁⁻³`, `p'(0) = 3η₀`,
/// `p'(1) = 3z₂`, using the default repair.
pub fn hermite_positive(e: &Endpoints) -> ControlSolution {
    hermite_positive_with(e, PositivityRepair::default())
}

/// The cubic Hermite polynomial if it passes the repair's trigger, otherwise the repaired interpolant.
pub fn hermite_positive_with(e: &Endpoints, repair: PositivityRepair) -> ControlSolution {
    let p0 = e.xi0.powi(-3);
    let p1 = e.z1.powi(-3);
    let c = hermite_coefficients(p0, p1, 3.0 * e.eta0, 3.0 * e.z2);
    let m = cubic_min(&c);
    let solution = |interpolant_kind, p_data, min_p| ControlSolution { interpolant_kind, p_data, u_grid: Vec::new(), residual: None, min_p };
    match repair {
        PositivityRepair::QuarticBump => {
            let floor = REPAIR_FLOOR_FRACTION * p0.min(p1);
            if m >= floor {
                return solution(InterpolantKind::CubicPolynomial, widen(c), m);
            }
            let bumped = |k: f64| [c[0], c[1], c[2] + k, c[3] - 2.0 * k, k];
            let mut hi = 1.0;
            while quartic_min(&bumped(hi)) < floor {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if quartic_min(&bumped(mid)) < floor {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-12 * hi {
                    break;
                }
            }
            let q = bumped(hi);
            solution(InterpolantKind::QuarticPolynomial, q, quartic_min(&q))
        }
        PositivityRepair::ExpCubic => {
            if m > POSITIVITY_MARGIN {
                return solution(InterpolantKind::CubicPolynomial, widen(c), m);
            }
            // (ln p)' = p'/p = 3η·ξ³ at each end
            let q = hermite_coefficients(p0.ln(), p1.ln(), 3.0 * e.eta0 * e.xi0.powi(3), 3.0 * e.z2 * e.z1.powi(3));
            solution(InterpolantKind::ExpCubic, widen(q), cubic_min(&q).exp())
        }
    }
}

/// Samples `u` on `n_grid ≥ 4` uniform points of `[0, 1]`.
pub fn synthesize_control(sol: &ControlSolution, p: &SdeParamsRef, n_grid: usize) -> Result<ControlSolution> {
    if n_grid < 4 {
        return Err(Error::config("the control grid needs at least four points"));
    }
    let mut out = sol.clone();
    out.u_grid = (0..n_grid).map(|k| sol.control_at(k as f64 / (n_grid - 1) as f64, p)).collect();
    Ok(out)
}

/// Largest defect of the controlled system along the analytic trajectory,
/// over `n` uniform points.
pub fn closed_loop_defect(sol: &ControlSolution, p: &SdeParamsRef, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let t = k as f64 / (n - 1).max(1) as f64;
        let [v, d1, d2] = sol.p_derivatives(t);
        let [z1, z2] = sol.trajectory(t);
        let dz1 = -d1 / (3.0 * v * v.cbrt());
        let dz2 = d2 / 3.0;
        let z13 = z1 * z1 * z1;
        let f1 = -z13 * z1 * z2;
        let terms = [p.delta * z1, 2.0 * z13 * z2 * z2, -p.gamma * z13 * z1 * z2, sol.control_at(t, p)];
        let f2: f64 = terms.iter().sum();
        // relative to the size of the terms that cancel
        let scale = 1.0 + terms.iter().map(|v| v.abs()).sum::<f64>().max(dz2.abs());
        worst = worst.max((dz1 - f1).abs() / (1.0 + f1.abs())).max((dz2 - f2).abs() / scale);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    pub endpoints: Endpoints,
    pub interpolant_kind: InterpolantKind,
    pub min_p: f64,
    pub residual_z1: f64,
    pub residual_z2: f64,
    pub min_z1: f64,
    pub dt: f64,
    pub solution: ControlSolution,
}

impl ReachabilityReport {
    pub fn residual(&self) -> f64 {
        self.residual_z1.max(self.residual_z2)
    }
}

/// Integrates the controlled system by RK4 with `u` interpolated from an
/// `n_grid`-point sample and reports the endpoint errors.
pub fn verify_reachability_with(e: &Endpoints, p: &SdeParamsRef, dt: f64, n_grid: usize) -> Result<ReachabilityReport> {
    verify_solution(e, &hermite_positive(e), p, dt, n_grid)
}

/// As [`verify_reachability_with`] for a given interpolant.
pub fn verify_solution(e: &Endpoints, interpolant: &ControlSolution, p: &SdeParamsRef, dt: f64, n_grid: usize) -> Result<ReachabilityReport> {
    if !(dt > 0.0 && dt <= 1e-3) {
        return Err(Error::config("verification needs 0 < dt <= 1e-3"));
    }
    let sol = synthesize_control(interpolant, p, n_grid)?;
    let field = |t: f64, z: [f64; 2]| {
        let z13 = z[0] * z[0] * z[0];
        let u = sol.interpolated_control(t);
        [-z13 * z[0] * z[1], p.delta * z[0] + 2.0 * z13 * z[1] * z[1] - p.gamma * z13 * z[0] * z[1] + u]
    };
    let path = rk4_ode(field, [e.xi0, e.eta0], 1.0, dt)?;
    let mut min_z1 = f64::INFINITY;
    for (t, s) in path.times.iter().zip(&path.states) {
        if !(s[0] > 0.0) {
            return Err(Error::PositivityViolated { time: *t, z1: s[0] });
        }
        min_z1 = min_z1.min(s[0]);
    }
    let end = path.states[path.states.len() - 1];
    let (r1, r2) = ((end[0] - e.z1).abs(), (end[1] - e.z2).abs());
    let mut solution = sol;
    solution.residual = Some(r1.max(r2));
    Ok(ReachabilityReport {
        endpoints: *e,
        interpolant_kind: solution.interpolant_kind,
        min_p: solution.min_p,
        residual_z1: r1,
        residual_z2: r2,
        min_z1,
        dt,
        solution,
    })
}

pub fn verify_reachability(e: &Endpoints, p: &SdeParamsRef, dt: f64) -> Result<ReachabilityReport> {
    verify_reachability_with(e, p, dt, DEFAULT_U_GRID)
}
