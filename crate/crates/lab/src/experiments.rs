//! One driver per subcommand, plus the ensemble building blocks they share.

use std::f64::consts::PI;

use serde::Serialize;
use serde_json::{json, Map, Value};
use width_sde_core::control::{hermite_positive_with, verify_solution, Endpoints, InterpolantKind, PositivityRepair, ReachabilityReport};
use width_sde_core::ergodic::{compare_histograms, pushforward, uniform_edges, DecayAccumulator, DecayReport, OccupationAccumulator, OccupationHistogram};
use width_sde_core::integrate::{
    drive_original, drive_transformed, simulate_original, simulate_transformed, strong_error_path, summarize_strong_errors, CoordinateSystem,
    IntegratorConfig, PathSample, RefinementPlan, Scheme, StrongErrorStudy, System, Termination,
};
use width_sde_core::model::{to_transformed, HalfPlaneState, SdeParamsRef, TransformedState};
use width_sde_core::rng::NormalStream;
use width_sde_core::stats::{RunningMoments, WeightedMean};
use width_sde_core::timechange::{clock_identity_error, extend, weak_sample, weak_terminal, TimeChangeConfig, WeightedPath};
use width_sde_core::verify::{boundary_invariance, generator_crosscheck, lyapunov_ray_report, rank_map, VerificationReport};
use width_sde_core::Error;

use crate::config::{Claim, ExperimentConfig, InvariantSection, InvariantSystems, Subcommand};
use crate::error::{LabError, LabResult};
use crate::io::{self, Artifacts};
use crate::pool::ordered_map;

/// Tolerance on the total-variation distances of the invariant pipeline.
pub const TV_TOLERANCE: f64 = 0.05;
/// Accepted range of the empirical strong order.
pub const STRONG_ORDER_RANGE: (f64, f64) = (0.8, 1.2);

const CONTROL_DOMAIN: u64 = 0x6374_0000;

/// What a subcommand produced: a JSON summary and, for claim-bearing
/// subcommands, whether the claim held.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub claim_passed: Option<bool>,
    pub summary: Value,
}

pub struct RunContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub pool: &'a rayon::ThreadPool,
    pub artifacts: Artifacts,
}

fn model(cfg: &ExperimentConfig) -> LabResult<SdeParamsRef> {
    Ok(cfg.resolve_params()?.params.dynamics())
}

pub fn execute(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    match ctx.cfg.subcommand {
        Subcommand::Params => run_params(ctx),
        Subcommand::Simulate => run_simulate(ctx),
        Subcommand::Timechange => run_timechange(ctx),
        Subcommand::Invariant => run_invariant(ctx),
        Subcommand::Decay => run_decay(ctx),
        Subcommand::Control => run_control(ctx),
        Subcommand::Verify => run_verify(ctx),
        Subcommand::Convergence => run_convergence(ctx),
    }
}

/// Flat `c120 … c322, delta, gamma, d, amp` object.
pub fn params_json(cfg: &ExperimentConfig) -> LabResult<Value> {
    let r = cfg.resolve_params()?;
    let mut m = Map::new();
    if let Some(c) = &r.coefficients {
        for (k, v) in ["c120", "c320", "c102", "c140", "c322"].iter().zip(c.as_array()) {
            m.insert((*k).into(), json!(v));
        }
    }
    m.insert("delta".into(), json!(r.params.delta));
    m.insert("gamma".into(), json!(r.params.gamma));
    m.insert("d".into(), json!(r.params.d));
    m.insert("amp".into(), json!(r.params.amp));
    Ok(Value::Object(m))
}

fn run_params(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let v = params_json(ctx.cfg)?;
    io::write_json(&ctx.artifacts.file("params.json"), &v)?;
    Ok(Outcome { claim_passed: None, summary: v })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
struct PathSidecar {
    system: System,
    integrator: IntegratorConfig,
    termination: &'static str,
    termination_time: Option<f64>,
    min_x: f64,
    hit_floor: bool,
    rng_fingerprint: u64,
}

/// A simulated path and how it ended; blow-up and overflow keep the partial path.
pub fn simulate_one(system: System, init: HalfPlaneState, p: &SdeParamsRef, cfg: &IntegratorConfig) -> LabResult<(PathSample, Termination)> {
    let res = match system {
        System::Original => simulate_original(init, p, cfg),
        System::Transformed => simulate_transformed(to_transformed(init)?, p, cfg),
    };
    match res {
        Ok(path) => Ok((path, Termination::Completed)),
        Err(Error::StepBlowUp { time, partial }) => Ok((*partial, Termination::BlowUp(time))),
        Err(Error::NumericalOverflow { time, partial: Some(partial) }) => Ok((*partial, Termination::Overflow(time))),
        Err(e) => Err(e.into()),
    }
}

fn termination_fields(t: Termination) -> (&'static str, Option<f64>) {
    match t {
        Termination::Completed => ("completed", None),
        Termination::BlowUp(s) => ("blow_up", Some(s)),
        Termination::Overflow(s) => ("overflow", Some(s)),
    }
}

fn run_simulate(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let cfg = ctx.cfg;
    let p = model(cfg)?;
    let sec = cfg.simulate.unwrap_or_default();
    let base = cfg.integrator_or(IntegratorConfig::new(Scheme::EulerMaruyama, 1e-3, 1.0));
    let init = HalfPlaneState::new(sec.x0, sec.y0)?;
    let results = ordered_map(ctx.pool, sec.n_paths, |i| {
        let icfg = base.with_seed(cfg.seed, i);
        simulate_one(sec.system, init, &p, &icfg).map(|(path, term)| (icfg, path, term))
    });
    let mut counts = [0u64; 3];
    let (mut xs, mut ys) = (RunningMoments::default(), RunningMoments::default());
    for (i, r) in results.into_iter().enumerate() {
        let (icfg, path, term) = r?;
        let (label, time) = termination_fields(term);
        counts[match term {
            Termination::Completed => 0,
            Termination::BlowUp(_) => 1,
            Termination::Overflow(_) => 2,
        }] += 1;
        if let (Termination::Completed, Some((_, s))) = (term, path.last()) {
            let [x, y] = match sec.system {
                System::Original => s,
                System::Transformed => [1.0 / s[0], s[0] * s[0] * s[1]],
            };
            xs.push(x);
            ys.push(y);
        }
        if (i as u64) < sec.write_paths {
            io::write_path_csv(&ctx.artifacts.file(&format!("paths/path_{i:05}.csv")), &path)?;
            let side = PathSidecar {
                system: sec.system,
                integrator: icfg,
                termination: label,
                termination_time: time,
                min_x: path.min_x,
                hit_floor: path.hit_floor,
                rng_fingerprint: path.rng_fingerprint,
            };
            io::write_json(&ctx.artifacts.file(&format!("paths/path_{i:05}.json")), &side)?;
        }
    }
    let summary = json!({
        "system": sec.system,
        "n_paths": sec.n_paths,
        "completed": counts[0],
        "blow_up": counts[1],
        "overflow": counts[2],
        "terminal_x_mean": xs.mean(),
        "terminal_x_std_error": xs.std_error(),
        "terminal_y_mean": ys.mean(),
        "terminal_y_std_error": ys.std_error(),
    });
    io::write_json(&ctx.artifacts.file("summary.json"), &summary)?;
    Ok(Outcome { claim_passed: None, summary })
}

// -------------------------------------------------------------- timechange

/// Weighted ensemble of terminal states of the time-change sampler.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedSummary {
    pub n_paths: u64,
    pub failed_paths: u64,
    pub horizon: f64,
    pub x: WeightedMean,
    pub y: WeightedMean,
    /// Largest clock-identity error over the paths that were kept in full.
    pub max_clock_identity_error: f64,
}

impl WeightedSummary {
    pub fn to_json(&self) -> Value {
        json!({
            "n_paths": self.n_paths,
            "failed_paths": self.failed_paths,
            "horizon": self.horizon,
            "x_mean": self.x.mean(),
            "x_std_error": self.x.std_error(),
            "x_self_normalized": self.x.self_normalized_mean(),
            "y_mean": self.y.mean(),
            "y_std_error": self.y.std_error(),
            "weight_mean": self.x.weight_mean(),
            "weight_std_error": self.x.weight_std_error(),
            "effective_sample_size": self.x.effective_sample_size(),
            "max_clock_identity_error": self.max_clock_identity_error,
        })
    }
}

/// Horizon-`horizon` construction followed by `extensions` unit segments.
#[allow(clippy::too_many_arguments)]
pub fn weighted_path(
    x0: f64,
    y0: f64,
    p: &SdeParamsRef,
    horizon: f64,
    extensions: u64,
    cfg: &TimeChangeConfig,
    seed: u64,
    index: u64,
) -> Result<WeightedPath, Error> {
    let mut path = weak_sample(x0, y0, p, horizon, cfg, seed, index)?;
    for _ in 0..extensions {
        path = extend(&path, p, cfg, seed, index)?;
    }
    Ok(path)
}

/// Runs `n_paths` weighted paths; `keep(i)` selects those returned in full.
/// Paths that hit the step floor are counted, not averaged.
#[allow(clippy::too_many_arguments)]
pub fn weighted_ensemble(
    pool: &rayon::ThreadPool,
    x0: f64,
    y0: f64,
    p: &SdeParamsRef,
    horizon: f64,
    extensions: u64,
    cfg: &TimeChangeConfig,
    n_paths: u64,
    seed: u64,
    keep: impl Fn(u64) -> bool + Sync + Send,
) -> LabResult<(WeightedSummary, Vec<(u64, WeightedPath)>)> {
    cfg.validate()?;
    let results = ordered_map(pool, n_paths, |i| -> Result<(f64, f64, f64, Option<WeightedPath>), Error> {
        if extensions == 0 && !keep(i) {
            let (x, y, lw) = weak_terminal(x0, y0, p, horizon, cfg, seed, i)?;
            return Ok((x, y, lw, None));
        }
        let path = weighted_path(x0, y0, p, horizon, extensions, cfg, seed, i)?;
        let ([x, y], lw) = path.terminal();
        Ok((x, y, lw, keep(i).then_some(path)))
    });
    let mut summary = WeightedSummary {
        n_paths,
        failed_paths: 0,
        horizon: horizon + extensions as f64,
        x: WeightedMean::default(),
        y: WeightedMean::default(),
        max_clock_identity_error: 0.0,
    };
    let mut kept = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((x, y, lw, path)) => {
                let w = lw.exp();
                summary.x.push(w, x);
                summary.y.push(w, y);
                if let Some(path) = path {
                    summary.max_clock_identity_error = summary.max_clock_identity_error.max(clock_identity_error(&path));
                    kept.push((i as u64, path));
                }
            }
            Err(Error::GridExhausted(_)) => summary.failed_paths += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok((summary, kept))
}

fn run_timechange(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let cfg = ctx.cfg;
    let p = model(cfg)?;
    let sec = cfg.timechange.unwrap_or_default();
    let (summary, kept) =
        weighted_ensemble(ctx.pool, sec.x0, sec.y0, &p, sec.horizon, sec.extensions, &sec.sampler, sec.n_paths, cfg.seed, |i| i < sec.write_paths)?;
    for (i, path) in &kept {
        io::write_weighted_csv(&ctx.artifacts.file(&format!("paths/weighted_{i:05}.csv")), path)?;
    }
    let v = summary.to_json();
    io::write_json(&ctx.artifacts.file("summary.json"), &v)?;
    Ok(Outcome { claim_passed: None, summary: v })
}

// --------------------------------------------------------------- invariant

/// Histogram metadata written next to the cell CSV.
#[derive(Debug, Clone, Serialize)]
struct HistogramMeta<'a> {
    coordinate_system: CoordinateSystem,
    x_edges: &'a [f64],
    y_edges: &'a [f64],
    overflow: f64,
    total_time: f64,
    burn_in: f64,
    axis_mass: f64,
}

fn meta(h: &OccupationHistogram) -> HistogramMeta<'_> {
    HistogramMeta {
        coordinate_system: h.coordinate_system,
        x_edges: &h.x_edges,
        y_edges: &h.y_edges,
        overflow: h.overflow,
        total_time: h.total_time,
        burn_in: h.burn_in,
        axis_mass: h.axis_mass,
    }
}

fn ended_early(what: &str, t: Termination) -> LabError {
    LabError::Model(Error::InsufficientData(format!("{what} run ended early: {t:?}")))
}

/// Occupation histogram of one long original-system run.
pub fn original_occupation(p: &SdeParamsRef, sec: &InvariantSection, base: &IntegratorConfig, seed: u64) -> LabResult<OccupationHistogram> {
    let [a, b, c, d] = sec.window;
    let mut acc = OccupationAccumulator::new(CoordinateSystem::Original, uniform_edges(a, b, sec.bins[0]), uniform_edges(c, d, sec.bins[1]), sec.burn_in)?;
    let mut icfg = base.with_seed(seed, 0);
    icfg.t_end = sec.burn_in + sec.t_total;
    let run = drive_original(HalfPlaneState::new(sec.x0, sec.y0)?, p, &icfg, |t, dt, s| acc.visit(t, dt, s))?;
    if run.termination != Termination::Completed {
        return Err(ended_early("original", run.termination));
    }
    Ok(acc.finish(sec.t_total * (1.0 - 1e-9))?)
}

/// Fine `(ξ, η)` occupation histogram of one long transformed-system run.
pub fn transformed_occupation(p: &SdeParamsRef, sec: &InvariantSection, base: &IntegratorConfig, seed: u64) -> LabResult<OccupationHistogram> {
    let [a, b, c, d] = sec.transformed_window;
    let edges_x = uniform_edges(a, b, sec.transformed_bins[0]);
    let edges_y = uniform_edges(c, d, sec.transformed_bins[1]);
    let mut acc = OccupationAccumulator::new(CoordinateSystem::Transformed, edges_x, edges_y, sec.burn_in)?;
    let mut icfg = base.with_seed(seed, 1);
    icfg.scheme = sec.transformed_scheme;
    icfg.t_end = sec.burn_in + sec.t_total;
    let init: TransformedState = to_transformed(HalfPlaneState::new(sec.x0, sec.y0)?)?;
    let run = drive_transformed(init, p, &icfg, |t, dt, s| acc.visit(t, dt, s))?;
    if run.termination != Termination::Completed {
        return Err(ended_early("transformed", run.termination));
    }
    Ok(acc.finish(sec.t_total * (1.0 - 1e-9))?)
}

pub fn pushed_occupation(fine: &OccupationHistogram, sec: &InvariantSection) -> LabResult<OccupationHistogram> {
    let [a, b, c, d] = sec.window;
    Ok(pushforward(fine, uniform_edges(a, b, sec.bins[0]), uniform_edges(c, d, sec.bins[1]), sec.refinement)?)
}

/// Histograms of one seed: direct original run and pushforward of the transformed run.
#[derive(Debug, Clone)]
pub struct InvariantPair {
    pub original: Option<OccupationHistogram>,
    pub transformed: Option<OccupationHistogram>,
    pub pushed: Option<OccupationHistogram>,
}

pub fn invariant_pair(pool: &rayon::ThreadPool, p: &SdeParamsRef, sec: &InvariantSection, base: &IntegratorConfig, seed: u64) -> LabResult<InvariantPair> {
    let want_o = sec.systems != InvariantSystems::Transformed;
    let want_t = sec.systems != InvariantSystems::Original;
    let (o, t) = pool.install(|| {
        rayon::join(
            || want_o.then(|| original_occupation(p, sec, base, seed)).transpose(),
            || want_t.then(|| transformed_occupation(p, sec, base, seed)).transpose(),
        )
    });
    let (original, transformed) = (o?, t?);
    let pushed = transformed.as_ref().map(|h| pushed_occupation(h, sec)).transpose()?;
    Ok(InvariantPair { original, transformed, pushed })
}

fn tv(a: &Option<OccupationHistogram>, b: &Option<OccupationHistogram>) -> LabResult<Option<f64>> {
    match (a, b) {
        (Some(a), Some(b)) => Ok(Some(compare_histograms(a, b)?)),
        _ => Ok(None),
    }
}

fn run_invariant(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let cfg = ctx.cfg;
    let p = model(cfg)?;
    let sec = cfg.invariant.clone().unwrap_or_default();
    if sec.systems != InvariantSystems::Original && sec.transformed_scheme == Scheme::AdaptiveEm {
        return Err(LabError::config("transformed_scheme cannot be adaptive_em"));
    }
    let base = cfg.integrator_or(IntegratorConfig::new(Scheme::AdaptiveEm, 1e-3, 1.0));
    let pool = ctx.pool;
    let (first, second) = pool.install(|| {
        rayon::join(
            || invariant_pair(pool, &p, &sec, &base, cfg.seed),
            || sec.second_seed.map(|s| invariant_pair(pool, &p, &sec, &base, s)).transpose(),
        )
    });
    let (first, second) = (first?, second?);
    let tv_systems = tv(&first.original, &first.pushed)?;
    let mut seeds = Map::new();
    if let Some(second) = &second {
        if let Some(v) = tv(&first.original, &second.original)? {
            seeds.insert("original".into(), json!(v));
        }
        if let Some(v) = tv(&first.pushed, &second.pushed)? {
            seeds.insert("pushforward".into(), json!(v));
        }
    }
    let mut checks: Vec<f64> = tv_systems.into_iter().collect();
    checks.extend(seeds.values().filter_map(Value::as_f64));
    let pass = (!checks.is_empty()).then(|| checks.iter().all(|v| *v <= TV_TOLERANCE));
    for (tag, pair) in [("seed_a", Some(&first)), ("seed_b", second.as_ref())] {
        let Some(pair) = pair else { continue };
        for (name, h) in [("original", &pair.original), ("pushforward", &pair.pushed)] {
            if let Some(h) = h {
                io::write_histogram_csv(&ctx.artifacts.file(&format!("histogram_{name}_{tag}.csv")), h)?;
                io::write_json(&ctx.artifacts.file(&format!("histogram_{name}_{tag}.json")), &meta(h))?;
            }
        }
        if let Some(h) = &pair.transformed {
            io::write_json(&ctx.artifacts.file(&format!("histogram_transformed_{tag}.json")), &meta(h))?;
        }
    }
    let window_mass = |h: &Option<OccupationHistogram>| h.as_ref().map(|h| 1.0 - h.overflow);
    let summary = json!({
        "tv_original_vs_pushforward": tv_systems,
        "tv_between_seeds": seeds,
        "tolerance": TV_TOLERANCE,
        "window_mass_original": window_mass(&first.original),
        "window_mass_pushforward": window_mass(&first.pushed),
        "axis_mass_transformed": first.transformed.as_ref().map(|h| h.axis_mass),
        "pass": pass,
    });
    io::write_json(&ctx.artifacts.file("invariant.json"), &summary)?;
    Ok(Outcome { claim_passed: pass, summary })
}

// ------------------------------------------------------------------- decay

/// Decay audit of a single original-system path from `(x0, y0)` over `t_total`,
/// streamed node by node.
pub fn decay_run(p: &SdeParamsRef, x0: f64, y0: f64, t_total: f64, window_length: f64, base: &IntegratorConfig, seed: u64) -> LabResult<DecayReport> {
    let mut acc = DecayAccumulator::new(window_length)?;
    let mut icfg = base.with_seed(seed, 0);
    icfg.t_end = t_total;
    let run = drive_original(HalfPlaneState::new(x0, y0)?, p, &icfg, |t, _, s| acc.visit(t, s[0]))?;
    if run.termination != Termination::Completed {
        return Err(ended_early("decay", run.termination));
    }
    Ok(acc.finish()?)
}

pub fn ci_contains_zero(r: &DecayReport) -> bool {
    r.slope_ci.0 <= 0.0 && 0.0 <= r.slope_ci.1
}

pub fn decay_json(r: &DecayReport) -> Value {
    json!({
        "slope": r.slope,
        "ci_lo": r.slope_ci.0,
        "ci_hi": r.slope_ci.1,
        "windows": r.windows,
        "fraction_below_floor": r.fraction_below_floor,
        "slope_se": r.slope_se,
        "window_length": r.window_length,
        "ci_contains_zero": ci_contains_zero(r),
    })
}

fn run_decay(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let cfg = ctx.cfg;
    let sec = cfg.decay.clone().unwrap_or_default();
    let report = match &sec.input {
        Some(path) => width_sde_core::ergodic::decay_test(&io::read_path_csv(path)?, sec.window_length)?,
        None => {
            let p = model(cfg)?;
            let base = cfg.integrator_or(IntegratorConfig::new(Scheme::AdaptiveEm, 1e-3, 1.0));
            decay_run(&p, sec.x0, sec.y0, sec.t_total, sec.window_length, &base, cfg.seed)?
        }
    };
    let rows: Vec<(f64, f64)> = report.window_log_means.iter().enumerate().map(|(k, m)| ((k as f64 + 0.5) * report.window_length, *m)).collect();
    write_window_csv(&ctx.artifacts.file("decay_windows.csv"), &rows)?;
    let v = decay_json(&report);
    io::write_json(&ctx.artifacts.file("decay.json"), &v)?;
    Ok(Outcome { claim_passed: Some(ci_contains_zero(&report)), summary: v })
}

fn write_window_csv(path: &std::path::Path, rows: &[(f64, f64)]) -> LabResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|source| LabError::Csv { path: path.into(), source })?;
    let err = |source| LabError::Csv { path: path.into(), source };
    w.write_record(["t_mid", "mean_log_x"]).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|source| LabError::Io { path: path.into(), source })
}

// ----------------------------------------------------------------- control

/// `n` endpoint pairs uniform in `[0.2, 3]² × [−2, 2]²` (`ξ₀, z₁` and `η₀, z₂`).
pub fn random_endpoints(seed: u64, n: u64) -> Vec<[f64; 4]> {
    (0..n)
        .map(|k| {
            let mut s = NormalStream::with_domain(seed, CONTROL_DOMAIN, k);
            let (a, b) = s.uniforms(0);
            let (c, d) = s.uniforms(1);
            [0.2 + 2.8 * a, -2.0 + 4.0 * b, 0.2 + 2.8 * c, -2.0 + 4.0 * d]
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlRecord {
    pub index: usize,
    pub endpoints: [f64; 4],
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ReachabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn reachability_batch(
    pool: &rayon::ThreadPool,
    p: &SdeParamsRef,
    endpoints: &[[f64; 4]],
    dt: f64,
    n_grid: usize,
    tol: f64,
    repair: PositivityRepair,
) -> Vec<ControlRecord> {
    ordered_map(pool, endpoints.len() as u64, |k| {
        let e = endpoints[k as usize];
        let res = Endpoints::new(e[0], e[1], e[2], e[3]).and_then(|ep| verify_solution(&ep, &hermite_positive_with(&ep, repair), p, dt, n_grid));
        match res {
            Ok(r) => ControlRecord { index: k as usize, endpoints: e, pass: r.residual() < tol && r.min_z1 > 0.0, report: Some(r), error: None },
            Err(err) => ControlRecord { index: k as usize, endpoints: e, pass: false, report: None, error: Some(err.to_string()) },
        }
    })
}

fn run_control(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let cfg = ctx.cfg;
    let p = model(cfg)?;
    let sec = cfg.control.clone().unwrap_or_default();
    let mut endpoints = sec.endpoints.clone();
    endpoints.extend(random_endpoints(cfg.seed, sec.random_pairs));
    let records = reachability_batch(ctx.pool, &p, &endpoints, sec.dt, sec.n_grid, sec.residual_tol, sec.repair);
    let path = ctx.artifacts.file("control.jsonl");
    let _ = std::fs::remove_file(&path);
    let mut worst: f64 = 0.0;
    for r in &records {
        if let Some(rep) = &r.report {
            io::write_control_csv(&ctx.artifacts.file(&format!("control/control_{:04}.csv", r.index)), &rep.solution)?;
            worst = worst.max(rep.residual());
        }
    }
    // the u-grid is already in the CSV
    let lines: Vec<Value> = records
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("record serializes");
            if let Some(sol) = v.pointer_mut("/report/solution") {
                sol.as_object_mut().map(|o| o.remove("u_grid"));
            }
            v
        })
        .collect();
    io::append_jsonl(&path, &lines)?;
    let passed = records.iter().filter(|r| r.pass).count();
    let kind_count = |k: InterpolantKind| records.iter().filter(|r| r.report.as_ref().is_some_and(|x| x.interpolant_kind == k)).count();
    let summary = json!({
        "pairs": records.len(),
        "passed": passed,
        "max_residual": worst,
        "residual_tol": sec.residual_tol,
        "dt": sec.dt,
        "repair": sec.repair,
        "interpolants": {
            "cubic_polynomial": kind_count(InterpolantKind::CubicPolynomial),
            "quartic_polynomial": kind_count(InterpolantKind::QuarticPolynomial),
            "exp_cubic": kind_count(InterpolantKind::ExpCubic),
        },
    });
    io::write_json(&ctx.artifacts.file("control.json"), &summary)?;
    Ok(Outcome { claim_passed: Some(passed == records.len()), summary })
}

// ------------------------------------------------------------------ verify

/// `n` rays fanned over the open right half-plane.
pub fn fan_rays(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let a = -PI / 2.0 + PI * (k as f64 + 0.5) / n as f64;
            (a.cos(), a.sin())
        })
        .collect()
}

/// Evaluates one claim; the generator cross-check also returns its details.
pub fn evaluate_claim(claim: &Claim, p: &SdeParamsRef, seed: u64) -> LabResult<(VerificationReport, Option<Value>)> {
    Ok(match claim {
        Claim::RankMap { xi, eta, n, tol } => (rank_map(p, (xi[0], xi[1]), (eta[0], eta[1]), (n[0], n[1]), *tol), None),
        Claim::LyapunovRays { rays, n_rays, t_max } => {
            let rays: Vec<(f64, f64)> = if rays.is_empty() { fan_rays(*n_rays) } else { rays.iter().map(|r| (r[0], r[1])).collect() };
            (lyapunov_ray_report(p, &rays, *t_max), None)
        }
        Claim::BoundaryInvariance { eta0, n_paths, t_end, dt } => (boundary_invariance(p, *eta0, *n_paths, *t_end, *dt, seed)?, None),
        Claim::GeneratorCrosscheck { z, h, n_paths } => {
            let (r, check) = generator_crosscheck(TransformedState { xi: z[0], eta: z[1] }, p, h, *n_paths, seed)?;
            (r, Some(serde_json::to_value(check).expect("check serializes")))
        }
    })
}

fn run_verify(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let cfg = ctx.cfg;
    let p = model(cfg)?;
    let sec = cfg.verify.clone().unwrap_or_default();
    if sec.claims.is_empty() {
        return Err(LabError::config("verify: no claims listed"));
    }
    let claims = &sec.claims;
    let results = ordered_map(ctx.pool, claims.len() as u64, |k| evaluate_claim(&claims[k as usize], &p, cfg.seed));
    let mut reports = Vec::new();
    let mut details = Vec::new();
    for r in results {
        let (report, detail) = r?;
        if let Some(d) = detail {
            details.push(d);
        }
        reports.push(report);
    }
    let path = ctx.artifacts.file("reports.jsonl");
    let _ = std::fs::remove_file(&path);
    io::append_jsonl(&path, &reports)?;
    if !details.is_empty() {
        io::write_json(&ctx.artifacts.file("generator.json"), &details)?;
    }
    let pass = reports.iter().all(|r| r.pass);
    let summary = json!({
        "claims": reports.iter().map(|r| json!({"claim_id": r.claim_id, "pass": r.pass})).collect::<Vec<_>>(),
        "pass": pass,
    });
    Ok(Outcome { claim_passed: Some(pass), summary })
}

// ------------------------------------------------------------- convergence

/// Strong-error study with paths spread over the pool; `init` is `(x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    pool: &rayon::ThreadPool,
    system: System,
    init: HalfPlaneState,
    p: &SdeParamsRef,
    dt_list: &[f64],
    n_paths: u64,
    seed: u64,
    t_end: f64,
) -> LabResult<StrongErrorStudy> {
    if n_paths == 0 {
        return Err(LabError::config("n_paths must be positive"));
    }
    let plan = RefinementPlan::new(dt_list, t_end)?;
    let z = match system {
        System::Original => [init.x, init.y],
        System::Transformed => {
            let t = to_transformed(init)?;
            [t.xi, t.eta]
        }
    };
    let per_path = ordered_map(pool, n_paths, |i| strong_error_path(system, z, p, &plan, seed, i));
    Ok(summarize_strong_errors(system, &plan, per_path)?)
}

pub fn order_in_range(slope: f64) -> bool {
    (STRONG_ORDER_RANGE.0..=STRONG_ORDER_RANGE.1).contains(&slope)
}

fn run_convergence(ctx: &mut RunContext<'_>) -> LabResult<Outcome> {
    let cfg = ctx.cfg;
    let p = model(cfg)?;
    let sec = cfg.convergence.clone().unwrap_or_default();
    let init = HalfPlaneState::new(sec.x0, sec.y0)?;
    let mut studies = Vec::new();
    for &system in &sec.systems {
        studies.push(convergence_study(ctx.pool, system, init, &p, &sec.dt_list, sec.n_paths, cfg.seed, sec.t_end)?);
    }
    let rows: Vec<(System, f64, f64)> = studies.iter().flat_map(|s| s.points.iter().map(move |(dt, e)| (s.system, *dt, *e))).collect();
    let path = ctx.artifacts.file("convergence.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|source| LabError::Csv { path: path.clone(), source })?;
    w.write_record(["system", "dt", "error"]).map_err(|source| LabError::Csv { path: path.clone(), source })?;
    for r in &rows {
        w.serialize(r).map_err(|source| LabError::Csv { path: path.clone(), source })?;
    }
    w.flush().map_err(|source| LabError::Io { path: path.clone(), source })?;
    let pass = studies.iter().all(|s| order_in_range(s.slope));
    let summary = json!({ "studies": studies, "order_range": STRONG_ORDER_RANGE, "pass": pass });
    io::write_json(&ctx.artifacts.file("convergence.json"), &summary)?;
    Ok(Outcome { claim_passed: Some(pass), summary })
}
