//! Pathwise integration of both systems, RK4 for deterministic references,
//! and coupled-refinement strong-error studies.
//!
//! Gaussian increments come from [`NormalStream`] keyed by
//! `(seed, path_index, step)`, so a path is reproducible bit-for-bit and
//! independent of any other path.

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{drift_original_unchecked, drift_transformed, HalfPlaneState, SdeParamsRef, TransformedState};
use crate::rng::NormalStream;
use crate::stats::ls_slope;

/// States whose magnitude exceeds this bound abort the path.
pub const OVERFLOW_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    TamedEuler,
    /// Euler–Maruyama with `dt_k = clamp(dt·x_k⁴, dt_min, dt)`.
    AdaptiveEm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_x_floor")]
    pub x_floor: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path_index: u64,
    /// Store every `record_stride`-th node (the final node is always stored).
    #[serde(default = "default_stride")]
    pub record_stride: u64,
}

fn default_x_floor() -> f64 {
    1e-3
}
fn default_dt_min() -> f64 {
    1e-9
}
fn default_stride() -> u64 {
    1
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64) -> Self {
        Self {
            scheme,
            dt,
            t_end,
            x_floor: default_x_floor(),
            dt_min: default_dt_min().min(dt),
            seed: 0,
            path_index: 0,
            record_stride: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64, path_index: u64) -> Self {
        self.seed = seed;
        self.path_index = path_index;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(alloc::format!("dt = {} must be positive", self.dt)));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt) {
            return Err(Error::config(alloc::format!("need 0 < dt_min <= dt, got dt_min = {}", self.dt_min)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(alloc::format!("t_end = {} must be positive", self.t_end)));
        }
        if !(self.x_floor > 0.0) {
            return Err(Error::config(alloc::format!("x_floor = {} must be positive", self.x_floor)));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        Ok(())
    }

    /// Step taken from width `x`.
    pub fn step_from(&self, x: f64) -> f64 {
        match self.scheme {
            Scheme::AdaptiveEm => {
                let x2 = x * x;
                (self.dt * x2 * x2).clamp(self.dt_min, self.dt)
            }
            _ => self.dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateSystem {
    /// `(x, y)`
    Original,
    /// `(ξ, η)`
    Transformed,
    /// Deterministic reference paths with no particular coordinates.
    Plain,
}

impl CoordinateSystem {
    pub fn column_names(self) -> [&'static str; 2] {
        match self {
            Self::Original => ["x", "y"],
            Self::Transformed => ["xi", "eta"],
            Self::Plain => ["z1", "z2"],
        }
    }
}

/// A discretely sampled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    pub coordinate_system: CoordinateSystem,
    /// Minimum width along the path (`1/ξ` for transformed paths with ξ > 0).
    pub min_x: f64,
    pub hit_floor: bool,
    pub rng_fingerprint: u64,
}

impl PathSample {
    fn empty(cs: CoordinateSystem) -> Self {
        Self { times: Vec::new(), states: Vec::new(), coordinate_system: cs, min_x: f64::INFINITY, hit_floor: false, rng_fingerprint: 0 }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, [f64; 2])> {
        Some((*self.times.last()?, *self.states.last()?))
    }

    /// Width along the path, whichever coordinates are stored.
    pub fn widths(&self) -> Vec<f64> {
        match self.coordinate_system {
            CoordinateSystem::Transformed => self.states.iter().map(|s| 1.0 / s[0]).collect(),
            _ => self.states.iter().map(|s| s[0]).collect(),
        }
    }
}

/// How a driven path ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// The width crossed zero at this time (the offending state is not visited).
    BlowUp(f64),
    /// The state exceeded [`OVERFLOW_BOUND`] or became non-finite.
    Overflow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub min_x: f64,
    pub hit_floor: bool,
    pub fingerprint: u64,
    pub termination: Termination,
}

struct Clock {
    fixed: bool,
    dt: f64,
    t_end: f64,
    n_fixed: u64,
}

impl Clock {
    fn new(cfg: &IntegratorConfig) -> Self {
        let ratio = cfg.t_end / cfg.dt;
        let n_fixed = (ratio - 1e-9).ceil().max(1.0) as u64;
        Self { fixed: cfg.scheme != Scheme::AdaptiveEm, dt: cfg.dt, t_end: cfg.t_end, n_fixed }
    }

    fn time(&self, k: u64, t: f64) -> f64 {
        if self.fixed {
            if k >= self.n_fixed {
                self.t_end
            } else {
                k as f64 * self.dt
            }
        } else {
            t
        }
    }

    fn done(&self, k: u64, t: f64) -> bool {
        if self.fixed {
            k >= self.n_fixed
        } else {
            t >= self.t_end * (1.0 - 1e-14)
        }
    }

    fn step(&self, k: u64, t: f64, proposed: f64) -> f64 {
        if self.fixed {
            if k + 1 >= self.n_fixed {
                self.t_end - k as f64 * self.dt
            } else {
                self.dt
            }
        } else {
            proposed.min(self.t_end - t)
        }
    }
}

/// Steps the original system and calls `visit(t, dt_k, [x, y])` at each node,
/// where `dt_k` is the step about to be taken (0 at the final node).
pub fn drive_original(
    init: HalfPlaneState,
    p: &SdeParamsRef,
    cfg: &IntegratorConfig,
    mut visit: impl FnMut(f64, f64, [f64; 2]),
) -> Result<RunSummary> {
    cfg.validate()?;
    if !(init.x > 0.0) {
        return Err(Error::NonpositiveWidth(init.x));
    }
    let sigma = p.sigma();
    let clock = Clock::new(cfg);
    let mut rng = NormalStream::new(cfg.seed, cfg.path_index);
    let (mut x, mut y) = (init.x, init.y);
    let (mut t, mut k) = (0.0, 0u64);
    let mut min_x = x;
    let mut hit_floor = x < cfg.x_floor;
    let termination = loop {
        if clock.done(k, t) {
            visit(clock.time(k, t), 0.0, [x, y]);
            break Termination::Completed;
        }
        let h = clock.step(k, t, cfg.step_from(x));
        visit(t, h, [x, y]);
        let (_, mut b) = drift_original_unchecked(x, y, p);
        if cfg.scheme == Scheme::TamedEuler {
            b /= 1.0 + h * b.abs();
        }
        let dw = h.sqrt() * rng.normal(k);
        // x is noiseless: x_{k+1} = x_k + y_k·dt_k exactly.
        let x_next = x + y * h;
        let y_next = y + b * h + sigma / (x * x) * dw;
        k += 1;
        t = clock.time(k, t + h);
        if !(x_next > 0.0) {
            break Termination::BlowUp(t);
        }
        if !(x_next.is_finite() && y_next.is_finite()) || x_next.abs() > OVERFLOW_BOUND || y_next.abs() > OVERFLOW_BOUND {
            break Termination::Overflow(t);
        }
        x = x_next;
        y = y_next;
        min_x = min_x.min(x);
        hit_floor |= x < cfg.x_floor;
    };
    Ok(RunSummary { steps: k, min_x, hit_floor, fingerprint: rng.fingerprint(), termination })
}

/// Steps the transformed system (additive noise). `adaptive_em` is not
/// available here: the transformed coefficients are smooth on all of ℝ².
pub fn drive_transformed(
    init: TransformedState,
    p: &SdeParamsRef,
    cfg: &IntegratorConfig,
    mut visit: impl FnMut(f64, f64, [f64; 2]),
) -> Result<RunSummary> {
    cfg.validate()?;
    if cfg.scheme == Scheme::AdaptiveEm {
        return Err(Error::config("adaptive_em applies to the original system only"));
    }
    let sigma = p.sigma();
    let clock = Clock::new(cfg);
    let mut rng = NormalStream::new(cfg.seed, cfg.path_index);
    let (mut xi, mut eta) = (init.xi, init.eta);
    let (mut t, mut k) = (0.0, 0u64);
    let width = |xi: f64| if xi > 0.0 { 1.0 / xi } else { f64::INFINITY };
    let mut min_x = width(xi);
    let mut hit_floor = min_x < cfg.x_floor;
    let termination = loop {
        if clock.done(k, t) {
            visit(clock.time(k, t), 0.0, [xi, eta]);
            break Termination::Completed;
        }
        let h = clock.step(k, t, cfg.dt);
        visit(t, h, [xi, eta]);
        let (mut a, mut b) = drift_transformed(TransformedState { xi, eta }, p);
        if cfg.scheme == Scheme::TamedEuler {
            a /= 1.0 + h * a.abs();
            b /= 1.0 + h * b.abs();
        }
        let dw = h.sqrt() * rng.normal(k);
        // ξ = 0 is invariant; keep it exactly zero.
        let xi_next = if xi == 0.0 { 0.0 } else { xi + a * h };
        let eta_next = eta + b * h + sigma * dw;
        k += 1;
        t = clock.time(k, t + h);
        if !(xi_next.is_finite() && eta_next.is_finite()) || xi_next.abs() > OVERFLOW_BOUND || eta_next.abs() > OVERFLOW_BOUND {
            break Termination::Overflow(t);
        }
        xi = xi_next;
        eta = eta_next;
        let w = width(xi);
        min_x = min_x.min(w);
        hit_floor |= w < cfg.x_floor;
    };
    Ok(RunSummary { steps: k, min_x, hit_floor, fingerprint: rng.fingerprint(), termination })
}

fn collect(
    cs: CoordinateSystem,
    cfg: &IntegratorConfig,
    drive: impl FnOnce(&mut dyn FnMut(f64, f64, [f64; 2])) -> Result<RunSummary>,
) -> Result<PathSample> {
    let mut path = PathSample::empty(cs);
    let stride = cfg.record_stride;
    let mut k = 0u64;
    let summary = drive(&mut |t, h, s| {
        if k.is_multiple_of(stride) || h == 0.0 {
            path.times.push(t);
            path.states.push(s);
        }
        k += 1;
    })?;
    path.min_x = summary.min_x;
    path.hit_floor = summary.hit_floor;
    path.rng_fingerprint = summary.fingerprint;
    match summary.termination {
        Termination::Completed => Ok(path),
        Termination::BlowUp(time) => Err(Error::StepBlowUp { time, partial: Box::new(path) }),
        Termination::Overflow(time) => Err(Error::NumericalOverflow { time, partial: Some(Box::new(path)) }),
    }
}

pub fn simulate_original(init: HalfPlaneState, p: &SdeParamsRef, cfg: &IntegratorConfig) -> Result<PathSample> {
    collect(CoordinateSystem::Original, cfg, |v| drive_original(init, p, cfg, v))
}

pub fn simulate_transformed(init: TransformedState, p: &SdeParamsRef, cfg: &IntegratorConfig) -> Result<PathSample> {
    collect(CoordinateSystem::Transformed, cfg, |v| drive_transformed(init, p, cfg, v))
}

/// Classical fourth-order Runge–Kutta for a (possibly time-dependent) planar field.
pub fn rk4_ode(field: impl Fn(f64, [f64; 2]) -> [f64; 2], init: [f64; 2], t_end: f64, dt: f64) -> Result<PathSample> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::config("rk4 needs positive dt and t_end"));
    }
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let mut path = PathSample::empty(CoordinateSystem::Plain);
    path.times.reserve(n + 1);
    path.states.reserve(n + 1);
    let mut z = init;
    path.times.push(0.0);
    path.states.push(z);
    let axpy = |z: [f64; 2], k: [f64; 2], h: f64| [z[0] + h * k[0], z[1] + h * k[1]];
    for i in 0..n {
        let t = i as f64 * dt;
        let h = if i + 1 == n { t_end - t } else { dt };
        let k1 = field(t, z);
        let k2 = field(t + 0.5 * h, axpy(z, k1, 0.5 * h));
        let k3 = field(t + 0.5 * h, axpy(z, k2, 0.5 * h));
        let k4 = field(t + h, axpy(z, k3, h));
        for c in 0..2 {
            z[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        let t_next = if i + 1 == n { t_end } else { (i + 1) as f64 * dt };
        if !(z[0].is_finite() && z[1].is_finite()) || z[0].abs() > OVERFLOW_BOUND || z[1].abs() > OVERFLOW_BOUND {
            return Err(Error::NumericalOverflow { time: t_next, partial: Some(Box::new(path)) });
        }
        path.times.push(t_next);
        path.states.push(z);
    }
    path.min_x = path.states.iter().map(|s| s[0]).fold(f64::INFINITY, f64::min);
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Original,
    Transformed,
}

/// Result of a coupled-refinement strong-error study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongErrorStudy {
    pub system: System,
    /// `(dt, E|Z^dt(T) − Z^ref(T)|)`
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `ln error` against `ln dt`.
    pub slope: f64,
    pub n_paths: u64,
    /// Paths dropped because some resolution blew up or overflowed.
    pub failed_paths: u64,
    pub reference_dt: f64,
}

/// Validated refinement ladder shared by all paths of a study.
#[derive(Debug, Clone)]
pub struct RefinementPlan {
    pub dt_list: Vec<f64>,
    pub reference_dt: f64,
    pub t_end: f64,
    /// Reference steps per coarse step, one per entry of `dt_list`.
    ratios: Vec<u64>,
    n_reference: u64,
}

impl RefinementPlan {
    pub fn new(dt_list: &[f64], t_end: f64) -> Result<Self> {
        if dt_list.len() < 3 {
            return Err(Error::config("strong-error study needs at least three step sizes"));
        }
        if dt_list.windows(2).any(|w| !(w[1] < w[0])) || !(dt_list[dt_list.len() - 1] > 0.0) {
            return Err(Error::config("dt_list must be strictly decreasing and positive"));
        }
        let reference_dt = dt_list[dt_list.len() - 1] / 4.0;
        let as_int = |v: f64| -> Option<u64> {
            let r = v.round();
            ((v - r).abs() < 1e-9 * v.max(1.0) && r >= 1.0).then_some(r as u64)
        };
        for w in dt_list.windows(2) {
            if as_int(w[0] / w[1]).is_none() {
                return Err(Error::config(alloc::format!("{} does not divide {}", w[1], w[0])));
            }
        }
        let n_reference = as_int(t_end / reference_dt).ok_or_else(|| Error::config("t_end must be a multiple of every dt"))?;
        let mut ratios = Vec::with_capacity(dt_list.len());
        for &dt in dt_list {
            let r = as_int(dt / reference_dt).ok_or_else(|| Error::config("dt is not a multiple of the reference step"))?;
            if n_reference % r != 0 {
                return Err(Error::config(alloc::format!("t_end is not a multiple of dt = {dt}")));
            }
            ratios.push(r);
        }
        Ok(Self { dt_list: dt_list.to_vec(), reference_dt, t_end, ratios, n_reference })
    }
}

/// Fixed-step Euler–Maruyama driven by given Brownian increments.
fn em_with_increments(system: System, init: [f64; 2], p: &SdeParamsRef, dt: f64, increments: &[f64]) -> Option<[f64; 2]> {
    let sigma = p.sigma();
    let [mut u, mut v] = init;
    for &dw in increments {
        match system {
            System::Original => {
                let (_, b) = drift_original_unchecked(u, v, p);
                let u_next = u + v * dt;
                v += b * dt + sigma / (u * u) * dw;
                u = u_next;
                if !(u > 0.0) {
                    return None;
                }
            }
            System::Transformed => {
                let (a, b) = drift_transformed(TransformedState { xi: u, eta: v }, p);
                u += a * dt;
                v += b * dt + sigma * dw;
            }
        }
        if !(u.is_finite() && v.is_finite()) || u.abs() > OVERFLOW_BOUND || v.abs() > OVERFLOW_BOUND {
            return None;
        }
    }
    Some([u, v])
}

/// Per-resolution errors `|Z^dt(T) − Z^ref(T)|` of one path, or `None` if any
/// resolution failed.
pub fn strong_error_path(
    system: System,
    init: [f64; 2],
    p: &SdeParamsRef,
    plan: &RefinementPlan,
    seed: u64,
    path_index: u64,
) -> Option<Vec<f64>> {
    let mut rng = NormalStream::new(seed, path_index);
    let sq = plan.reference_dt.sqrt();
    let fine: Vec<f64> = (0..plan.n_reference).map(|j| sq * rng.normal(j)).collect();
    let reference = em_with_increments(system, init, p, plan.reference_dt, &fine)?;
    let mut errors = Vec::with_capacity(plan.dt_list.len());
    for (&dt, &r) in plan.dt_list.iter().zip(&plan.ratios) {
        let coarse: Vec<f64> = fine.chunks(r as usize).map(|c| c.iter().sum()).collect();
        let z = em_with_increments(system, init, p, dt, &coarse)?;
        errors.push((z[0] - reference[0]).hypot(z[1] - reference[1]));
    }
    Some(errors)
}

/// Folds per-path errors (in path order) into the study summary.
pub fn summarize_strong_errors(system: System, plan: &RefinementPlan, per_path: impl IntoIterator<Item = Option<Vec<f64>>>) -> Result<StrongErrorStudy> {
    let mut sums = alloc::vec![0.0; plan.dt_list.len()];
    let (mut ok, mut failed) = (0u64, 0u64);
    for errs in per_path {
        match errs {
            Some(e) => {
                ok += 1;
                for (s, v) in sums.iter_mut().zip(e) {
                    *s += v;
                }
            }
            None => failed += 1,
        }
    }
    if ok == 0 {
        return Err(Error::InsufficientData("every path of the strong-error study failed".into()));
    }
    let points: Vec<(f64, f64)> = plan.dt_list.iter().zip(&sums).map(|(&dt, &s)| (dt, s / ok as f64)).collect();
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    Ok(StrongErrorStudy { system, points, slope: ls_slope(&lx, &ly), n_paths: ok + failed, failed_paths: failed, reference_dt: plan.reference_dt })
}

/// Strong error of Euler–Maruyama against a reference at `dt_min/4`, with
/// shared Brownian increments across resolutions.
#[allow(clippy::too_many_arguments)]
pub fn strong_error_study(
    system: System,
    init: [f64; 2],
    p: &SdeParamsRef,
    dt_list: &[f64],
    n_paths: u64,
    seed: u64,
    t_end: f64,
) -> Result<StrongErrorStudy> {
    if n_paths == 0 {
        return Err(Error::config("n_paths must be positive"));
    }
    let plan = RefinementPlan::new(dt_list, t_end)?;
    summarize_strong_errors(system, &plan, (0..n_paths).map(|i| strong_error_path(system, init, p, &plan, seed, i)))
}
