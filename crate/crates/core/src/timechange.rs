//! Weak solutions by random time change.
//!
//! Under the auxiliary measure the velocity `ŷ` is an Ornstein–Uhlenbeck
//! process in its own clock `s`, and the width is the explicit functional
//! `x̂(s) = (x₀⁻³ − 3∫₀ˢŷ)^{−1/3}`, which lives until the integral first reaches
//! `x₀⁻³/3` (time `τ`). Running the clock `T_s = ∫₀ˢ x̂⁴` and inverting it gives
//! `x₊(t) = x̂(A_t)`, `y₊(t) = ŷ(A_t)`, a positive path for every `t`.
//! The drift `δ/x³` is restored by a Girsanov weight
//! `ρ = exp(∫θ dB − ½∫θ² ds)` with `θ = δ·x̂/√(2D)` on `[0, A_h]`.
//!
//! The pair `(ŷ, ∫ŷ)` is jointly Gaussian with a closed-form transition, so
//! both are sampled exactly on any grid, and Gaussian bridges let the adaptive
//! sampler refine an interval after the fact without changing the law.

use alloc::string::ToString;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SdeParamsRef;
use crate::rng::NormalStream;

/// Stream domain of the first segment; segment `k` uses `DOMAIN + k`.
const DOMAIN: u64 = 0x7443_0000;

type M2 = [[f64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn transpose(a: &M2) -> M2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn apply(a: &M2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn inverse(a: &M2) -> M2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

/// Lower Cholesky factor of a (possibly singular) covariance.
fn cholesky(q: &M2) -> M2 {
    let l11 = q[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { q[1][0] / l11 } else { 0.0 };
    let l22 = (q[1][1] - l21 * l21).max(0.0).sqrt();
    [[l11, 0.0], [l21, l22]]
}

// (1 − e^{−a})/a
fn h1(a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else {
        -(-a).exp_m1() / a
    }
}

// (a − 2(1 − e^{−a}) + (1 − e^{−2a})/2)/a³
fn h3(a: f64) -> f64 {
    if a < 1e-2 {
        1.0 / 3.0 + a * (-0.25 + a * (7.0 / 60.0 + a * (-1.0 / 24.0 + a * 31.0 / 2520.0)))
    } else {
        (a + 2.0 * (-a).exp_m1() - 0.5 * (-2.0 * a).exp_m1()) / (a * a * a)
    }
}

/// Exact transition of `(ŷ, ∫ŷ)` over a step `r·L`, in units where `ŷ` is
/// scaled by `1/(σ√L)` and `∫ŷ` by `1/(σL^{3/2})`. Returns `(Φ, Q)`.
fn scaled_transition(gamma: f64, length: f64, r: f64) -> (M2, M2) {
    let a = gamma * r * length;
    let e = (-a).exp();
    let g1 = h1(a);
    let phi = [[e, 0.0], [r * g1, 1.0]];
    let cov = 0.5 * r * r * g1 * g1;
    let q = [[r * h1(2.0 * a), cov], [cov, r * r * r * h3(a)]];
    (phi, q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    s: f64,
    y: f64,
    /// `∫₀ˢ ŷ`
    i: f64,
}

/// Exact sampler for the OU pair, one Gaussian pair per draw.
struct OuPair {
    gamma: f64,
    sigma: f64,
    rng: NormalStream,
    counter: u64,
}

impl OuPair {
    fn draw(&mut self) -> [f64; 2] {
        let (a, b) = self.rng.pair(self.counter);
        self.counter += 1;
        [a, b]
    }

    fn forward(&mut self, a: Node, ds: f64) -> Node {
        let decay = (-self.gamma * ds).exp();
        let drift_i = ds * h1(self.gamma * ds) * a.y;
        if self.sigma == 0.0 {
            return Node { s: a.s + ds, y: decay * a.y, i: a.i + drift_i };
        }
        let (_, q) = scaled_transition(self.gamma, ds, 1.0);
        let l = cholesky(&q);
        let n = self.draw();
        let su = self.sigma * ds.sqrt();
        Node {
            s: a.s + ds,
            y: decay * a.y + su * l[0][0] * n[0],
            i: a.i + drift_i + su * ds * (l[1][0] * n[0] + l[1][1] * n[1]),
        }
    }

    /// Samples the pair at `s_a + r·(s_b − s_a)` given both endpoints.
    fn bridge(&mut self, a: Node, b: Node, r: f64) -> Node {
        let len = b.s - a.s;
        let s = if r == 0.5 { 0.5 * (a.s + b.s) } else { a.s + r * len };
        if self.sigma == 0.0 {
            return self.forward(a, s - a.s);
        }
        let su = self.sigma * len.sqrt();
        let sv = su * len;
        let za = [a.y / su, 0.0];
        let zb = [b.y / su, (b.i - a.i) / sv];
        let (p1, q1) = scaled_transition(self.gamma, len, r);
        let (p2, q2) = scaled_transition(self.gamma, len, 1.0 - r);
        let mu1 = apply(&p1, za);
        let p2t = transpose(&p2);
        let q1p2t = mul(&q1, &p2t);
        let mut sm = mul(&p2, &q1p2t);
        for i in 0..2 {
            for j in 0..2 {
                sm[i][j] += q2[i][j];
            }
        }
        let k = mul(&q1p2t, &inverse(&sm));
        let pred = apply(&p2, mu1);
        let innov = [zb[0] - pred[0], zb[1] - pred[1]];
        let shift = apply(&k, innov);
        let kp2q1 = mul(&mul(&k, &p2), &q1);
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = q1[i][j] - kp2q1[i][j];
            }
        }
        c[0][1] = 0.5 * (c[0][1] + c[1][0]);
        c[1][0] = c[0][1];
        let l = cholesky(&c);
        let n = self.draw();
        let u = mu1[0] + shift[0] + l[0][0] * n[0];
        let v = mu1[1] + shift[1] + l[1][0] * n[0] + l[1][1] * n[1];
        Node { s, y: u * su, i: a.i + v * sv }
    }

    /// Brownian increment recovered from `dŷ = −γŷ ds + σ dB`.
    fn db(&self, a: Node, b: Node) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            ((b.y - a.y) + self.gamma * (b.i - a.i)) / self.sigma
        }
    }
}

fn check_params(p: &SdeParamsRef) -> Result<()> {
    if !(p.gamma >= 0.0 && p.gamma.is_finite()) {
        return Err(Error::config("the auxiliary OU process needs gamma >= 0"));
    }
    if !(p.d >= 0.0 && p.d.is_finite()) {
        return Err(Error::config("the noise level D must be nonnegative"));
    }
    Ok(())
}

fn check_grid(s_grid: &[f64]) -> Result<()> {
    if s_grid.is_empty() || s_grid[0] < 0.0 || s_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("grid must be nonempty, start at a nonnegative value and increase strictly"));
    }
    Ok(())
}

/// OU samples with their running integral and the driving Brownian motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuSamples {
    pub s_grid: Vec<f64>,
    pub y: Vec<f64>,
    pub integral: Vec<f64>,
    pub b: Vec<f64>,
}

/// Exact OU samples `dŷ = −γŷ ds + √(2D) dB` on `s_grid` (whose first point
/// carries `y0`). Transition `j` consumes Gaussian pair `j` of the stream.
pub fn ou_exact(y0: f64, p: &SdeParamsRef, s_grid: &[f64], seed: u64, path_index: u64) -> Result<OuSamples> {
    check_params(p)?;
    check_grid(s_grid)?;
    let mut ou = OuPair { gamma: p.gamma, sigma: p.sigma(), rng: NormalStream::with_domain(seed, DOMAIN, path_index), counter: 0 };
    let n = s_grid.len();
    let mut out = OuSamples { s_grid: s_grid.to_vec(), y: Vec::with_capacity(n), integral: Vec::with_capacity(n), b: Vec::with_capacity(n) };
    let mut node = Node { s: s_grid[0], y: y0, i: 0.0 };
    let mut b = 0.0;
    out.y.push(node.y);
    out.integral.push(0.0);
    out.b.push(0.0);
    for &s in &s_grid[1..] {
        let next = ou.forward(node, s - node.s);
        let next = Node { s, ..next };
        b += ou.db(node, next);
        out.y.push(next.y);
        out.integral.push(next.i);
        out.b.push(b);
        node = next;
    }
    Ok(out)
}

/// The auxiliary objects on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryPath {
    pub x0: f64,
    pub s_grid: Vec<f64>,
    pub b: Vec<f64>,
    pub y_hat: Vec<f64>,
    /// Exact running integral `∫₀ˢ ŷ`.
    pub y_hat_integral: Vec<f64>,
    /// `(x₀⁻³ − 3∫ŷ)^{−1/3}`; NaN where the base is not positive.
    pub x_hat: Vec<f64>,
    /// Trapezoid `∫₀ˢ x̂⁴`; +∞ from the first node past `τ` on.
    pub clock_t: Vec<f64>,
    /// Interval of width ≤ 1e-12 (relative) containing `τ`, if the grid reaches it.
    pub tau_bracket: Option<(f64, f64)>,
}

impl AuxiliaryPath {
    pub fn tau(&self) -> Option<f64> {
        self.tau_bracket.map(|(lo, hi)| 0.5 * (lo + hi))
    }

    /// Clock value at auxiliary time `s` (linear between nodes).
    pub fn clock_at(&self, s: f64) -> f64 {
        let k = self.s_grid.partition_point(|&v| v <= s);
        if k == 0 {
            return self.clock_t[0];
        }
        if k >= self.s_grid.len() {
            return *self.clock_t.last().unwrap_or(&f64::NAN);
        }
        let (s0, s1) = (self.s_grid[k - 1], self.s_grid[k]);
        let (t0, t1) = (self.clock_t[k - 1], self.clock_t[k]);
        t0 + (t1 - t0) * (s - s0) / (s1 - s0)
    }
}

fn hermite(s0: f64, s1: f64, f0: f64, f1: f64, d0: f64, d1: f64, s: f64) -> f64 {
    let h = s1 - s0;
    let u = (s - s0) / h;
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * f0 + (u3 - 2.0 * u2 + u) * h * d0 + (-2.0 * u3 + 3.0 * u2) * f1 + (u3 - u2) * h * d1
}

/// Builds `ŷ, ∫ŷ, x̂, T` on `s_grid` and brackets `τ` inside the first grid
/// interval where `∫ŷ` reaches `x₀⁻³/3`, bisecting the cubic Hermite
/// interpolant of the integral (whose derivative `ŷ` is known at the nodes).
pub fn aux_path(x0: f64, y0: f64, p: &SdeParamsRef, s_grid: &[f64], seed: u64, path_index: u64) -> Result<AuxiliaryPath> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::NonpositiveWidth(x0));
    }
    let ou = ou_exact(y0, p, s_grid, seed, path_index)?;
    let g0 = x0.powi(-3);
    let n = s_grid.len();
    let mut x_hat = Vec::with_capacity(n);
    let mut clock_t = Vec::with_capacity(n);
    let mut tau_bracket = None;
    let mut alive = true;
    for k in 0..n {
        let g = g0 - 3.0 * ou.integral[k];
        let x = if g > 0.0 { g.powf(-1.0 / 3.0) } else { f64::NAN };
        x_hat.push(x);
        if k == 0 {
            clock_t.push(0.0);
            continue;
        }
        if alive && !(g > 0.0) {
            alive = false;
            let target = g0 / 3.0;
            let (s0, s1) = (s_grid[k - 1], s_grid[k]);
            let f = |s: f64| hermite(s0, s1, ou.integral[k - 1], ou.integral[k], ou.y[k - 1], ou.y[k], s) - target;
            let (mut lo, mut hi) = (s0, s1);
            for _ in 0..200 {
                if hi - lo <= 1e-12 * hi.max(1.0) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            tau_bracket = Some((lo, hi));
        }
        if alive {
            let xa = x_hat[k - 1];
            let prev = clock_t[k - 1];
            clock_t.push(prev + 0.5 * (s_grid[k] - s_grid[k - 1]) * (xa.powi(4) + x.powi(4)));
        } else {
            clock_t.push(f64::INFINITY);
        }
    }
    Ok(AuxiliaryPath { x0, s_grid: ou.s_grid, b: ou.b, y_hat: ou.y, y_hat_integral: ou.integral, x_hat, clock_t, tau_bracket })
}

/// `A_t = inf{s : T_s > t}` for each `t` by inverting the piecewise-linear clock.
pub fn time_change(aux: &AuxiliaryPath, t_grid: &[f64]) -> Result<Vec<f64>> {
    check_grid(t_grid)?;
    let reach = aux.clock_t.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    if t_grid[t_grid.len() - 1] > reach {
        return Err(Error::GridExhausted(alloc::format!(
            "the clock reaches only {reach} on this grid; requested {}",
            t_grid[t_grid.len() - 1]
        )));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let k = aux.clock_t.partition_point(|&v| v <= t);
        if k == 0 {
            out.push(aux.s_grid[0]);
            continue;
        }
        if k >= aux.clock_t.len() || !aux.clock_t[k].is_finite() {
            out.push(aux.s_grid[k - 1]);
            continue;
        }
        let (t0, t1) = (aux.clock_t[k - 1], aux.clock_t[k]);
        let (s0, s1) = (aux.s_grid[k - 1], aux.s_grid[k]);
        out.push(s0 + (s1 - s0) * (t - t0) / (t1 - t0));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GirsanovConstants {
    /// `θ = δ·x̂/√(2D)`: the shift that restores the `δ/x³` drift.
    #[default]
    Consistent,
    /// `θ = δ·√(2D)·x̂`, kept for comparison only.
    Printed,
}

/// Controls for the adaptive auxiliary grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeChangeConfig {
    /// Largest auxiliary step.
    pub ds_max: f64,
    /// Smallest auxiliary step before giving up with `GridExhausted`.
    pub step_floor: f64,
    /// Largest accepted `|ln(x̂_b⁴/x̂_a⁴)|` across one interval.
    pub log_width_tol: f64,
    /// Largest accepted clock increment as a fraction of the horizon.
    pub clock_fraction: f64,
    pub max_nodes: usize,
    pub girsanov: GirsanovConstants,
}

impl Default for TimeChangeConfig {
    fn default() -> Self {
        Self { ds_max: 0.05, step_floor: 1e-12, log_width_tol: 1e-3, clock_fraction: 5e-3, max_nodes: 20_000_000, girsanov: GirsanovConstants::Consistent }
    }
}

impl TimeChangeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ds_max > 0.0 && self.step_floor > 0.0 && self.step_floor < self.ds_max) {
            return Err(Error::config("need 0 < step_floor < ds_max"));
        }
        if !(self.log_width_tol > 0.0 && self.clock_fraction > 0.0 && self.clock_fraction <= 1.0) {
            return Err(Error::config("log_width_tol and clock_fraction must be positive (clock_fraction <= 1)"));
        }
        if self.max_nodes < 2 {
            return Err(Error::config("max_nodes must be at least 2"));
        }
        Ok(())
    }
}

/// One accepted node of the time-changed path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakNode {
    /// Target clock `t = T_s`.
    pub t: f64,
    /// Auxiliary clock `s = A_t`.
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub log_weight: f64,
    /// `W₊(t) = ∫₀^{A_t} x̂² dŴ₊` with `dŴ₊ = dB − θ ds`.
    pub w_plus: f64,
}

/// Runs the construction over `[0, horizon]` and hands every accepted node to
/// `visit`, in order. Returns the terminal node.
pub fn drive_weak(
    x0: f64,
    y0: f64,
    p: &SdeParamsRef,
    horizon: f64,
    cfg: &TimeChangeConfig,
    stream: NormalStream,
    mut visit: impl FnMut(&WeakNode),
) -> Result<WeakNode> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::NonpositiveWidth(x0));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config("horizon must be positive"));
    }
    check_params(p)?;
    cfg.validate()?;
    let sigma = p.sigma();
    let theta_scale = match cfg.girsanov {
        _ if p.delta == 0.0 => 0.0,
        GirsanovConstants::Consistent if sigma == 0.0 => {
            return Err(Error::config("the Girsanov weight is undefined for D = 0 and delta != 0"));
        }
        GirsanovConstants::Consistent => p.delta / sigma,
        GirsanovConstants::Printed => p.delta * sigma,
    };
    let mut ou = OuPair { gamma: p.gamma, sigma, rng: stream, counter: 0 };
    let g0 = x0.powi(-3);
    let width = |n: &Node| {
        let g = g0 - 3.0 * n.i;
        (g > 0.0).then(|| g.powf(-1.0 / 3.0))
    };
    let max_dt = cfg.clock_fraction * horizon;

    let mut a = Node { s: 0.0, y: y0, i: 0.0 };
    let mut cur = WeakNode { t: 0.0, s: 0.0, x: x0, y: y0, log_weight: 0.0, w_plus: 0.0 };
    visit(&cur);
    let mut count = 1usize;
    let mut last_ds = cfg.ds_max;
    let mut pending: Vec<Node> = Vec::new();

    let advance = |cur: &WeakNode, a: Node, b: Node, xb: f64, dt: f64, ou: &OuPair| -> WeakNode {
        let ds = b.s - a.s;
        let theta = theta_scale * cur.x;
        let db = ou.db(a, b);
        WeakNode {
            t: cur.t + dt,
            s: b.s,
            x: xb,
            y: b.y,
            log_weight: cur.log_weight + theta * db - 0.5 * theta * theta * ds,
            w_plus: cur.w_plus + cur.x * cur.x * (db - theta * ds),
        }
    };

    loop {
        let b = match pending.last() {
            Some(&n) => n,
            None => {
                let n = ou.forward(a, cfg.ds_max.min(2.0 * last_ds));
                pending.push(n);
                n
            }
        };
        let ds = b.s - a.s;
        let xa4 = cur.x.powi(4);
        let accepted = width(&b).and_then(|xb| {
            let xb4 = xb.powi(4);
            let dt = 0.5 * ds * (xa4 + xb4);
            ((xb4 / xa4).ln().abs() <= cfg.log_width_tol && dt <= max_dt).then_some((xb, dt))
        });
        let Some((xb, dt)) = accepted else {
            if 0.5 * ds < cfg.step_floor {
                return Err(Error::GridExhausted(alloc::format!(
                    "auxiliary step fell below {} at s = {}, t = {}",
                    cfg.step_floor,
                    a.s,
                    cur.t
                )));
            }
            let mid = ou.bridge(a, b, 0.5);
            pending.push(mid);
            continue;
        };
        if cur.t + dt < horizon {
            pending.pop();
            cur = advance(&cur, a, b, xb, dt, &ou);
            a = b;
            last_ds = ds;
            visit(&cur);
            count += 1;
            if count >= cfg.max_nodes {
                return Err(Error::GridExhausted(alloc::format!("node budget {} spent before t = {horizon}", cfg.max_nodes)));
            }
            continue;
        }
        // The horizon falls inside [a, b]: bridge at the clock-interpolated
        // point, keep whichever side contains it, and repeat until the
        // trapezoid clock meets the horizon.
        let (mut right, mut right_x, mut right_dt) = (b, xb, dt);
        for _ in 0..100 {
            let r = ((horizon - cur.t) / right_dt).clamp(1e-6, 1.0 - 1e-6);
            let m = ou.bridge(a, right, r);
            let xm = width(&m).ok_or_else(|| Error::GridExhausted("bridge point beyond the clock singularity".to_string()))?;
            let dtm = 0.5 * (m.s - a.s) * (xa4 + xm.powi(4));
            if (cur.t + dtm - horizon).abs() <= 1e-13 * horizon {
                let mut end = advance(&cur, a, m, xm, dtm, &ou);
                end.t = horizon;
                visit(&end);
                return Ok(end);
            }
            if cur.t + dtm < horizon {
                cur = advance(&cur, a, m, xm, dtm, &ou);
                a = m;
                visit(&cur);
                right_dt = 0.5 * (right.s - a.s) * (xm.powi(4) + right_x.powi(4));
            } else {
                right = m;
                right_x = xm;
                right_dt = dtm;
            }
            let _ = &right;
        }
        let rem = horizon - cur.t;
        let end = WeakNode { t: horizon, ..advance(&cur, a, right, right_x, rem, &ou) };
        visit(&end);
        return Ok(end);
    }
}

/// A time-changed path `(x₊, y₊)` on `[0, horizon]` with its running log-weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPath {
    pub times: Vec<f64>,
    /// `(x₊, y₊)` at each time.
    pub states: Vec<[f64; 2]>,
    pub log_weight: Vec<f64>,
    pub horizon: f64,
    /// Auxiliary clock `A_t` at each time, cumulative over segments.
    pub a_clock: Vec<f64>,
    /// `W₊(t)` at each time, cumulative over segments.
    pub w_plus: Vec<f64>,
    /// Number of unit constructions concatenated so far.
    pub segments: u64,
}

impl WeightedPath {
    pub fn terminal(&self) -> ([f64; 2], f64) {
        (self.states[self.states.len() - 1], self.log_weight[self.log_weight.len() - 1])
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, n: &WeakNode, offset: &WeakNode) {
        self.times.push(offset.t + n.t);
        self.states.push([n.x, n.y]);
        self.log_weight.push(offset.log_weight + n.log_weight);
        self.a_clock.push(offset.s + n.s);
        self.w_plus.push(offset.w_plus + n.w_plus);
    }
}

fn segment_stream(seed: u64, path_index: u64, segment: u64) -> NormalStream {
    NormalStream::with_domain(seed, DOMAIN + 1 + segment, path_index)
}

/// Weighted sample of the width SDE on `[0, horizon]`.
pub fn weak_sample(x0: f64, y0: f64, p: &SdeParamsRef, horizon: f64, cfg: &TimeChangeConfig, seed: u64, path_index: u64) -> Result<WeightedPath> {
    let mut path = WeightedPath {
        times: Vec::new(),
        states: Vec::new(),
        log_weight: Vec::new(),
        horizon,
        a_clock: Vec::new(),
        w_plus: Vec::new(),
        segments: 1,
    };
    let zero = WeakNode { t: 0.0, s: 0.0, x: x0, y: y0, log_weight: 0.0, w_plus: 0.0 };
    drive_weak(x0, y0, p, horizon, cfg, segment_stream(seed, path_index, 0), |n| path.push(n, &zero))?;
    Ok(path)
}

/// Terminal `(x₊, y₊, log ρ)` only, for ensembles.
pub fn weak_terminal(x0: f64, y0: f64, p: &SdeParamsRef, horizon: f64, cfg: &TimeChangeConfig, seed: u64, path_index: u64) -> Result<(f64, f64, f64)> {
    let end = drive_weak(x0, y0, p, horizon, cfg, segment_stream(seed, path_index, 0), |_| {})?;
    Ok((end.x, end.y, end.log_weight))
}

/// Appends a unit-horizon construction restarted from the terminal state with
/// a fresh stream (one per segment); log-weights add.
pub fn extend(path: &WeightedPath, p: &SdeParamsRef, cfg: &TimeChangeConfig, seed: u64, path_index: u64) -> Result<WeightedPath> {
    let Some(&[x, y]) = path.states.last() else {
        return Err(Error::config("cannot extend an empty path"));
    };
    let k = path.len() - 1;
    let offset = WeakNode { t: path.times[k], s: path.a_clock[k], x, y, log_weight: path.log_weight[k], w_plus: path.w_plus[k] };
    let mut out = path.clone();
    let mut first = true;
    drive_weak(x, y, p, 1.0, cfg, segment_stream(seed, path_index, path.segments), |n| {
        // the restart node duplicates the junction
        if !core::mem::take(&mut first) {
            out.push(n, &offset);
        }
    })?;
    out.horizon = path.horizon + 1.0;
    out.segments += 1;
    Ok(out)
}

/// Maximum relative error of `A_t = ∫₀ᵗ x₊⁻⁴ dt` (trapezoid in `t`) along the path.
pub fn clock_identity_error(path: &WeightedPath) -> f64 {
    let mut integral = 0.0;
    let mut worst: f64 = 0.0;
    for k in 1..path.len() {
        let (xa, xb) = (path.states[k - 1][0], path.states[k][0]);
        integral += 0.5 * (path.times[k] - path.times[k - 1]) * (xa.powi(-4) + xb.powi(-4));
        let a = path.a_clock[k];
        worst = worst.max((integral - a).abs() / a);
    }
    worst
}

/// Both sides of the pathwise identity
/// `√(2D)·W₊(t) = x₊²y₊ − x₀²y₀ − 2∫x₊y₊² − δ∫1_{[0,1]}/x₊ + γ∫y₊/x₊²`
/// at each stored time of a single-segment path (integrals by trapezoid in `t`).
pub fn wiener_identity(path: &WeightedPath, p: &SdeParamsRef) -> Vec<(f64, f64)> {
    let sigma = p.sigma();
    let [x0, y0] = path.states[0];
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(path.len());
    out.push((0.0, 0.0));
    let integrand = |t: f64, s: [f64; 2]| {
        let [x, y] = s;
        let ind = if t <= 1.0 { 1.0 } else { 0.0 };
        -2.0 * x * y * y - p.delta * ind / x + p.gamma * y / (x * x)
    };
    for k in 1..path.len() {
        let (ta, tb) = (path.times[k - 1], path.times[k]);
        let fa = integrand(ta, path.states[k - 1]);
        let fb = integrand(tb, path.states[k]);
        acc += 0.5 * (tb - ta) * (fa + fb);
        let [x, y] = path.states[k];
        out.push((sigma * path.w_plus[k], x * x * y - x0 * x0 * y0 + acc));
    }
    out
}
