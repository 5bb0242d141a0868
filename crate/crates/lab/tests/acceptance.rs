//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! lines always reach stdout.
//!
//! Two criteria are known to fail on the model itself rather than on the
//! numerics; they are listed in `KNOWN_FAILURES` together with the failure mode
//! the analysis predicts. The binary exits nonzero if any other criterion
//! fails, or if a known failure stops matching its predicted mode.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use width_sde_core::ergodic::decay_test;
use width_sde_core::integrate::{drive_original, CoordinateSystem, IntegratorConfig, PathSample, Scheme, System, Termination};
use width_sde_core::model::{from_transformed, to_transformed, transform_jacobian, HalfPlaneState, SdeParamsRef};
use width_sde_core::rng::NormalStream;
use width_sde_core::stats::RunningMoments;
use width_sde_core::timechange::{aux_path, clock_identity_error, ou_exact, weak_sample, TimeChangeConfig, WeightedPath};
use width_sde_lab::config::{Claim, InvariantSection};
use width_sde_lab::experiments::{
    ci_contains_zero, convergence_study, decay_run, evaluate_claim, fan_rays, invariant_pair, order_in_range, random_endpoints, reachability_batch,
    weighted_ensemble, TV_TOLERANCE,
};
use width_sde_lab::parse_config;
use width_sde_lab::pool::{build_pool, ordered_map, resolve_workers};

const P321: SdeParamsRef = SdeParamsRef { delta: 3.0, gamma: 2.0, d: 1.0 };

/// Criterion number and the predicted failure mode it must keep exhibiting.
const KNOWN_FAILURES: &[(u8, &str)] = &[
    (4, "tau fraction below 0.99 and confirmed by the independent Euler oracle"),
    (8, "slope CI excludes 0 with a positive slope (ballistic escape, not decay)"),
];

struct Verdict {
    pass: bool,
    detail: String,
    /// For known failures: whether the observed failure is the predicted one.
    predicted_mode: bool,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail, predicted_mode: false }
}

fn within(limit: Duration, t: Duration) -> (bool, String) {
    (t <= limit, format!("{:.2}s (limit {}s)", t.as_secs_f64(), limit.as_secs()))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn pool() -> rayon::ThreadPool {
    build_pool(resolve_workers(None, None).expect("worker count")).expect("pool")
}

// 1 ------------------------------------------------------------------------

fn c1() -> Verdict {
    let start = Instant::now();
    let cfg = parse_config(&format!(
        r#"{{"subcommand":"params","profile":"gaussian","physical":{{"lambda":1,"d_r":1,"mass":{}}}}}"#,
        PI.sqrt()
    ))
    .expect("config");
    let r = cfg.resolve_params().expect("params");
    // ∫₀^∞ r^k e^{−a r²} dr = Γ((k+1)/2) / (2 a^{(k+1)/2})
    let g = |k: f64, a: f64| gamma_half_integer(k + 1.0) / (2.0 * a.powf((k + 1.0) / 2.0));
    let oracle = [2.0 * PI * g(1.0, 1.0), 2.0 * PI * g(3.0, 1.0), 2.0 * PI * g(3.0, 1.0), 2.0 * PI * g(1.0, 2.0), 2.0 * PI * g(5.0, 2.0)];
    let c = r.coefficients.expect("coefficients").as_array();
    let coeff_err = c.iter().zip(&oracle).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    let (m2, lam, dr) = (PI, 1.0, 1.0);
    let [c120, c320, c102, c140, c322] = oracle;
    let expected = [
        4.0 / c320 * (c102 - m2 * c140 / (2.0 * c120)),
        8.0 * lam * m2 * c322 / (c120 * c320),
        32.0 * PI * PI * dr * c322 / (c320 * c320),
        m2.sqrt() / c120.sqrt(),
    ];
    let got = [r.params.delta, r.params.gamma, r.params.d, r.params.amp];
    let target = [3.0, 2.0, 8.0 * PI, 1.0];
    let oracle_consistent = expected.iter().zip(&target).all(|(a, b)| rel(*a, *b) < 1e-12);
    let err = got.iter().zip(&target).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    let (fast, t) = within(Duration::from_secs(1), start.elapsed());
    verdict(
        err < 1e-6 && oracle_consistent && fast,
        format!("(delta, gamma, D, amp) = ({:.9}, {:.9}, {:.9}, {:.9}), max rel err {err:.1e} (tol 1e-6), coefficient rel err {coeff_err:.1e}, {t}", got[0], got[1], got[2], got[3]),
    )
}

/// `Γ(n/2)` for positive integers `n`.
fn gamma_half_integer(n: f64) -> f64 {
    let n = n.round() as u32;
    let (mut v, mut k) = if n.is_multiple_of(2) { (1.0, 2) } else { (PI.sqrt(), 1) };
    while k < n {
        v *= k as f64 / 2.0;
        k += 2;
    }
    v
}

// 2 ------------------------------------------------------------------------

fn c2() -> Verdict {
    let start = Instant::now();
    let mut rng = NormalStream::new(2, 0);
    let (mut inv, mut det, mut prod): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..10_000u64 {
        let (u, v) = rng.uniforms(k);
        let x = 10f64.powf(-2.0 + 4.0 * u);
        let y = -10.0 + 20.0 * v;
        let s = HalfPlaneState::new(x, y).unwrap();
        let t = to_transformed(s).unwrap();
        let back = from_transformed(t).unwrap();
        inv = inv.max(rel(back.x, x)).max((back.y - y).abs() / y.abs().max(1.0));
        let j = transform_jacobian(s);
        det = det.max(((j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs() - 1.0).abs());
        // Jacobian of the inverse map at the image point, times J, is the identity
        let (xi, eta) = (t.xi, t.eta);
        let ji = [[-1.0 / (xi * xi), 0.0], [2.0 * xi * eta, xi * xi]];
        for (r, row) in ji.iter().enumerate() {
            #[allow(clippy::needless_range_loop)]
            for c in 0..2 {
                let e = row[0] * j[0][c] + row[1] * j[1][c];
                let id = if r == c { 1.0 } else { 0.0 };
                let scale = row[0].abs() * j[0][c].abs() + row[1].abs() * j[1][c].abs();
                prod = prod.max((e - id).abs() / scale.max(1.0));
            }
        }
    }
    let (fast, t) = within(Duration::from_secs(1), start.elapsed());
    let tol = 1e-12;
    verdict(
        inv < tol && det < tol && prod < tol && fast,
        format!("10^4 points: involution err {inv:.1e}, |det J| − 1 err {det:.1e}, J^-1 J − I err {prod:.1e} (tol 1e-12), {t}"),
    )
}

// 3 ------------------------------------------------------------------------

fn c3() -> Verdict {
    let start = Instant::now();
    let cases = [(2.0, 1.0, 0.1), (0.5, 2.0, 1.0), (5.0, 0.1, 0.01), (1.0, 1.0, 3.0), (10.0, 4.0, 0.5)];
    let n = 100_000u64;
    let y0 = 1.5;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (c, &(gamma, d, dt)) in cases.iter().enumerate() {
        let p = SdeParamsRef { delta: 0.0, gamma, d };
        let (mut y, mut i) = (RunningMoments::default(), RunningMoments::default());
        for k in 0..n {
            let s = ou_exact(y0, &p, &[0.0, dt], 3 + c as u64, k).unwrap();
            y.push(s.y[1]);
            i.push(s.integral[1]);
        }
        let e = (-gamma * dt).exp();
        let sig2 = 2.0 * d;
        let mean_y = y0 * e;
        let var_y = sig2 / (2.0 * gamma) * (1.0 - e * e);
        let mean_i = y0 * (1.0 - e) / gamma;
        let var_i = sig2 / (gamma * gamma) * (dt - 2.0 * (1.0 - e) / gamma + (1.0 - e * e) / (2.0 * gamma));
        let nf = n as f64;
        let z = [
            (y.mean() - mean_y).abs() / (var_y / nf).sqrt(),
            (y.variance() - var_y).abs() / (var_y * (2.0 / (nf - 1.0)).sqrt()),
            (i.mean() - mean_i).abs() / (var_i / nf).sqrt(),
            (i.variance() - var_i).abs() / (var_i * (2.0 / (nf - 1.0)).sqrt()),
        ];
        let m = z.iter().cloned().fold(0.0, f64::max);
        worst = worst.max(m);
        parts.push(format!("({gamma},{d},{dt}) max z {m:.2}"));
    }
    let (fast, t) = within(Duration::from_secs(10), start.elapsed());
    verdict(worst <= 3.0 && fast, format!("one-step mean/variance of y and of its integral at 1e5 samples: {}; {t}", parts.join(", ")))
}

// 4 ------------------------------------------------------------------------

/// Trapezoid in `s` of `x₊⁴` against `t`: the clock evaluated at `A_t`.
fn clock_roundtrip_error(path: &WeightedPath) -> f64 {
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for k in 1..path.len() {
        let (xa, xb) = (path.states[k - 1][0], path.states[k][0]);
        acc += 0.5 * (path.a_clock[k] - path.a_clock[k - 1]) * (xa.powi(4) + xb.powi(4));
        worst = worst.max(rel(acc, path.times[k]));
    }
    worst
}

/// Fraction of Euler-simulated OU integrals reaching `x0⁻³/3` before `s_max`.
fn euler_tau_fraction(p: &SdeParamsRef, n: u64, s_max: f64, ds: f64) -> f64 {
    let sigma = (2.0 * p.d).sqrt();
    let steps = (s_max / ds).round() as u64;
    let hits = (0..n)
        .filter(|&i| {
            let mut r = NormalStream::with_domain(44, 1, i);
            let (mut y, mut integral) = (0.0f64, 0.0f64);
            for k in 0..steps {
                let yn = y - p.gamma * y * ds + sigma * ds.sqrt() * r.normal(k);
                integral += 0.5 * (y + yn) * ds;
                y = yn;
                if integral >= 1.0 / 3.0 {
                    return true;
                }
            }
            false
        })
        .count();
    hits as f64 / n as f64
}

fn c4() -> Verdict {
    let start = Instant::now();
    let cfg = TimeChangeConfig::default();
    let (mut clock, mut roundtrip): (f64, f64) = (0.0, 0.0);
    for i in 0..100 {
        let path = weak_sample(1.0, 0.0, &P321, 1.0, &cfg, 4, i).expect("weighted path");
        clock = clock.max(clock_identity_error(&path));
        roundtrip = roundtrip.max(clock_roundtrip_error(&path));
    }
    let grid: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.05).collect();
    let n = 1000;
    let hits = (0..n).filter(|&i| aux_path(1.0, 0.0, &P321, &grid, 4, i).expect("aux path").tau().is_some()).count();
    let fraction = hits as f64 / n as f64;
    let euler = euler_tau_fraction(&P321, 1000, 200.0, 0.005);
    let (fast, t) = within(Duration::from_secs(60), start.elapsed());
    let identities = clock < 1e-6 && roundtrip < 1e-6;
    let pass = identities && fraction >= 0.99 && fast;
    // predicted: the identities hold, the fraction sits near the oracle's and below 0.99
    let se = (fraction * (1.0 - fraction) / n as f64).sqrt() + (euler * (1.0 - euler) / 1000.0).sqrt();
    let predicted_mode = identities && fraction < 0.99 && (fraction - euler).abs() <= 3.0 * se + 0.01;
    Verdict {
        pass,
        detail: format!(
            "A_t identity err {clock:.1e}, T(A_t) = t err {roundtrip:.1e} (tol 1e-6, 100 paths); tau before s = 200 on {:.1}% of {n} paths (need 99%), independent Euler oracle {:.1}%; {t}",
            100.0 * fraction,
            100.0 * euler
        ),
        predicted_mode,
    }
}

// 5 ------------------------------------------------------------------------

fn c5() -> Verdict {
    let start = Instant::now();
    let pool = pool();
    let n = 10_000;
    let (w, _) = weighted_ensemble(&pool, 1.0, 0.0, &P321, 1.0, 0, &TimeChangeConfig::default(), n, 5, |_| false).expect("weighted ensemble");
    let icfg = IntegratorConfig::new(Scheme::AdaptiveEm, 1e-4, 1.0);
    let init = HalfPlaneState::new(1.0, 0.0).unwrap();
    let finals = ordered_map(&pool, n, |i| {
        let mut last = [0.0; 2];
        let run = drive_original(init, &P321, &icfg.with_seed(55, i), |_, _, s| last = s).expect("direct path");
        (run.termination == Termination::Completed).then_some(last[0])
    });
    let direct: RunningMoments = finals.iter().flatten().copied().collect();
    let lost = finals.iter().filter(|v| v.is_none()).count();
    let (wm, ws) = (w.x.mean(), w.x.std_error());
    let (dm, ds) = (direct.mean(), direct.std_error());
    let overlap = (wm - 3.0 * ws) <= (dm + 3.0 * ds) && (dm - 3.0 * ds) <= (wm + 3.0 * ws);
    let (one, one_se) = (w.x.weight_mean(), w.x.weight_std_error());
    let unit = (one - 1.0).abs() <= 3.0 * one_se;
    let (fast, t) = within(Duration::from_secs(300), start.elapsed());
    verdict(
        overlap && unit && lost == 0 && w.failed_paths == 0 && fast,
        format!(
            "E[x(1)] weighted {wm:.4} ± {ws:.4} vs adaptive EM {dm:.4} ± {ds:.4} (3σ overlap: {overlap}); E[ρ] = {one:.4} ± {one_se:.4}; ESS {:.0}; {t}",
            w.x.effective_sample_size()
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn c6() -> Verdict {
    let start = Instant::now();
    let pool = pool();
    let dts: Vec<f64> = (4..=9).map(|k| 2f64.powi(-k)).collect();
    let init = HalfPlaneState::new(1.0, 0.0).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for system in [System::Original, System::Transformed] {
        let s = convergence_study(&pool, system, init, &P321, &dts, 2000, 6, 1.0).expect("study");
        ok &= order_in_range(s.slope) && s.failed_paths == 0;
        parts.push(format!("{system:?} slope {:.3} ({} failed)", s.slope, s.failed_paths));
    }
    let (fast, t) = within(Duration::from_secs(300), start.elapsed());
    verdict(ok && fast, format!("{} (range [0.8, 1.2], 2000 coupled paths); {t}", parts.join(", ")))
}

// 7 ------------------------------------------------------------------------

fn c7() -> Verdict {
    let start = Instant::now();
    let pool = pool();
    let sec = InvariantSection::default();
    let icfg = IntegratorConfig::new(Scheme::AdaptiveEm, 1e-3, 1.0);
    let a = invariant_pair(&pool, &P321, &sec, &icfg, 7).expect("seed a");
    let b = invariant_pair(&pool, &P321, &sec, &icfg, 8).expect("seed b");
    let tv = |x: &Option<_>, y: &Option<_>| match (x, y) {
        (Some(x), Some(y)) => width_sde_core::ergodic::compare_histograms(x, y).expect("same grid"),
        _ => f64::NAN,
    };
    let systems = tv(&a.original, &a.pushed);
    let seeds_o = tv(&a.original, &b.original);
    let seeds_p = tv(&a.pushed, &b.pushed);
    let window = a.original.as_ref().map_or(f64::NAN, |h| 1.0 - h.overflow);
    let (fast, t) = within(Duration::from_secs(900), start.elapsed());
    let pass = systems <= TV_TOLERANCE && seeds_o <= TV_TOLERANCE && seeds_p <= TV_TOLERANCE && fast;
    verdict(
        pass,
        format!(
            "TV original vs pushforward {systems:.4}, between seeds {seeds_o:.4} / {seeds_p:.4} (tol 0.05); occupation mass inside the window {window:.2e}, so the agreement is between two empty windows; {t}"
        ),
    )
}

// 8 ------------------------------------------------------------------------

fn synthetic(f: impl Fn(f64) -> f64) -> PathSample {
    let times: Vec<f64> = (0..=20_000).map(|k| k as f64 * 0.01).collect();
    let states = times.iter().map(|&t| [f(t), 0.0]).collect();
    PathSample { times, states, coordinate_system: CoordinateSystem::Original, min_x: 0.0, hit_floor: false, rng_fingerprint: 0 }
}

fn c8() -> Verdict {
    let start = Instant::now();
    let decaying = decay_test(&synthetic(|t: f64| (-t).exp()), 5.0).expect("synthetic decay");
    let flat = decay_test(&synthetic(|_| 1.7), 5.0).expect("synthetic constant");
    let controls = (decaying.slope + 1.0).abs() < 1e-12 && flat.slope.abs() < 1e-12;
    let icfg = IntegratorConfig::new(Scheme::AdaptiveEm, 1e-3, 1.0);
    let r = decay_run(&P321, 1.0, 0.0, 2e4, 50.0, &icfg, 8).expect("decay run");
    let contains = ci_contains_zero(&r);
    let (fast, t) = within(Duration::from_secs(900), start.elapsed());
    Verdict {
        pass: contains && controls && fast,
        detail: format!(
            "slope {:.3e} per unit time, 95% CI [{:.3e}, {:.3e}] over {} windows, contains 0: {contains}; controls e^-t {:.12} and constant {:.1e}; {t}",
            r.slope, r.slope_ci.0, r.slope_ci.1, r.windows, decaying.slope, flat.slope
        ),
        predicted_mode: controls && !contains && r.slope_ci.0 > 0.0,
    }
}

// 9 ------------------------------------------------------------------------

fn c9() -> Verdict {
    let start = Instant::now();
    let pool = pool();
    let ends = random_endpoints(9, 100);
    let records = reachability_batch(&pool, &P321, &ends, 1e-4, width_sde_core::control::DEFAULT_U_GRID, 1e-5, Default::default());
    let passed = records.iter().filter(|r| r.pass).count();
    let worst = records.iter().filter_map(|r| r.report.as_ref()).map(|r| r.residual()).fold(0.0, f64::max);
    let min_z1 = records.iter().filter_map(|r| r.report.as_ref()).map(|r| r.min_z1).fold(f64::INFINITY, f64::min);
    let (fast, t) = within(Duration::from_secs(60), start.elapsed());
    verdict(passed == 100 && fast, format!("{passed}/100 pairs with residual < 1e-5 and z1 > 0 (worst residual {worst:.1e}, min z1 {min_z1:.3}); {t}"))
}

// 10 -----------------------------------------------------------------------

fn c10() -> Verdict {
    let start = Instant::now();
    let rank = [
        Claim::RankMap { xi: [0.1, 3.0], eta: [-3.0, 3.0], n: [30, 30], tol: 1e-9 },
        Claim::RankMap { xi: [0.1, 3.0], eta: [-50.0, 50.0], n: [101, 41], tol: 1e-9 },
    ];
    let rank_ok = rank.iter().all(|c| evaluate_claim(c, &P321, 10).expect("rank map").0.pass);
    let rays: Vec<[f64; 2]> = fan_rays(16).into_iter().map(|(a, b)| [a, b]).collect();
    let all_off_axis = rays.iter().all(|r| r[0] > 0.0 && r[1] != 0.0);
    let (lyap, _) = evaluate_claim(&Claim::LyapunovRays { rays, n_rays: 16, t_max: 10.0 }, &P321, 10).expect("rays");
    let anomaly = lyap.notes.contains("eta = 0");
    let (gen, detail) = evaluate_claim(&Claim::GeneratorCrosscheck { z: [2.0, 1.0], h: vec![4e-4, 2e-4, 1e-4], n_paths: 100_000 }, &P321, 10).expect("generator");
    let detail = detail.expect("generator details");
    let discriminating = detail["discriminating"].as_bool() == Some(true);
    let (fast, t) = within(Duration::from_secs(300), start.elapsed());
    verdict(
        rank_ok && lyap.pass && all_off_axis && anomaly && gen.pass && discriminating && fast,
        format!(
            "rank_map {rank_ok}; lyapunov_rays on 16 off-axis rays {} with axis note {anomaly}; generator estimate {:.3} ± {:.3} vs derived {} / printed {}, discriminating {discriminating}, pass {}; {t}",
            lyap.pass,
            detail["estimate"].as_f64().unwrap_or(f64::NAN),
            detail["std_error"].as_f64().unwrap_or(f64::NAN),
            detail["derived"],
            detail["printed"],
            gen.pass
        ),
    )
}

type Criterion = (u8, &'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "parameter pipeline", c1),
        (2, "transform suite", c2),
        (3, "OU exactness", c3),
        (4, "time-change identities", c4),
        (5, "weak-solution consistency", c5),
        (6, "convergence orders", c6),
        (7, "ergodicity and coordinate consistency", c7),
        (8, "no-exponential-decay audit", c8),
        (9, "reachability", c9),
        (10, "claim reports", c10),
    ];
    let filter: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let v = run();
        let known = KNOWN_FAILURES.iter().find(|k| k.0 == id);
        let status = if v.pass { "PASS" } else { "FAIL" };
        let tag = match (v.pass, known) {
            (false, Some((_, mode))) if v.predicted_mode => format!(" [known failure: {mode}]"),
            (false, Some((_, mode))) => {
                unexpected += 1;
                format!(" [known failure, but not in its predicted mode: {mode}]")
            }
            (false, None) => {
                unexpected += 1;
                String::new()
            }
            (true, _) => String::new(),
        };
        println!("criterion {id:>2} {status} {name}: {}{tag}", v.detail);
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed outside the documented analysis");
        ExitCode::FAILURE
    }
}
