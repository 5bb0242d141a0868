//! Long-run occupation statistics and the decay audit.
//!
//! Histograms are time-weighted: a step of length `dt` starting at a state
//! deposits `dt` into that state's cell. Anything outside the window lands in
//! an explicit overflow bin, so masses always sum to one.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{CoordinateSystem, PathSample};
use crate::stats::ols_newey_west;

/// Default histogram window `(0, 4] × [−4, 4]` on a 40 × 40 grid.
pub const DEFAULT_WINDOW: (f64, f64, f64, f64) = (0.0, 4.0, -4.0, 4.0);
pub const DEFAULT_BINS: usize = 40;
/// Newey–West lag (in windows) for the decay regression.
pub const DECAY_HAC_LAG: usize = 5;
pub const MIN_DECAY_WINDOWS: usize = 20;
/// Width below which time counts toward `fraction_below_floor`.
pub const BOUNDARY_FLOOR: f64 = 0.01;

pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { hi } else { lo + (hi - lo) * k as f64 / n as f64 }).collect()
}

fn check_edges(edges: &[f64], what: &str) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::config(format!("{what} edges must be finite and strictly increasing, at least two")));
    }
    Ok(())
}

fn locate(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[n]) {
        return None;
    }
    let k = edges.partition_point(|&e| e <= v);
    Some(k.saturating_sub(1).min(n - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub coordinate_system: CoordinateSystem,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Cell masses, row-major in x: cell `(i, j)` is `mass[i * ny + j]`.
    pub mass: Vec<f64>,
    /// Mass outside the window.
    pub overflow: f64,
    /// Occupation time after burn-in.
    pub total_time: f64,
    pub burn_in: f64,
    /// Fraction of time spent exactly on `ξ = 0` (transformed runs only).
    pub axis_mass: f64,
}

impl OccupationHistogram {
    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.ny() + j]
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.overflow
    }

    /// Histogram estimate of the mass with first coordinate below `x_max`,
    /// prorating partially covered columns by length.
    pub fn strip_mass(&self, x_max: f64) -> f64 {
        let ny = self.ny();
        let mut m = 0.0;
        for i in 0..self.nx() {
            let (lo, hi) = (self.x_edges[i], self.x_edges[i + 1]);
            let cover = ((x_max.min(hi) - lo) / (hi - lo)).clamp(0.0, 1.0);
            if cover > 0.0 {
                m += cover * self.mass[i * ny..(i + 1) * ny].iter().sum::<f64>();
            }
        }
        m
    }

    /// Point-mass histogram on the given grid.
    pub fn point_mass(cs: CoordinateSystem, x_edges: Vec<f64>, y_edges: Vec<f64>, at: [f64; 2]) -> Result<Self> {
        let mut acc = OccupationAccumulator::new(cs, x_edges, y_edges, 0.0)?;
        acc.add(at, 1.0);
        acc.finish(0.0)
    }
}

/// Mergeable time-weighted accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationAccumulator {
    cs: CoordinateSystem,
    x_edges: Vec<f64>,
    y_edges: Vec<f64>,
    weights: Vec<f64>,
    overflow: f64,
    axis: f64,
    time: f64,
    burn_in: f64,
}

impl OccupationAccumulator {
    pub fn new(cs: CoordinateSystem, x_edges: Vec<f64>, y_edges: Vec<f64>, burn_in: f64) -> Result<Self> {
        check_edges(&x_edges, "x")?;
        check_edges(&y_edges, "y")?;
        if !(burn_in >= 0.0) {
            return Err(Error::config("burn_in must be nonnegative"));
        }
        let cells = (x_edges.len() - 1) * (y_edges.len() - 1);
        Ok(Self { cs, x_edges, y_edges, weights: alloc::vec![0.0; cells], overflow: 0.0, axis: 0.0, time: 0.0, burn_in })
    }

    /// Default 40 × 40 grid over `(0, 4] × [−4, 4]` in original coordinates.
    pub fn default_original(burn_in: f64) -> Self {
        let (x0, x1, y0, y1) = DEFAULT_WINDOW;
        Self::new(CoordinateSystem::Original, uniform_edges(x0, x1, DEFAULT_BINS), uniform_edges(y0, y1, DEFAULT_BINS), burn_in)
            .expect("default window is valid")
    }

    fn add(&mut self, s: [f64; 2], w: f64) {
        self.time += w;
        if self.cs == CoordinateSystem::Transformed && s[0] == 0.0 {
            self.axis += w;
        }
        // the window is (lo, hi] in the first coordinate
        let inside_x = s[0] > self.x_edges[0] || self.x_edges[0] != 0.0;
        match (inside_x.then(|| locate(&self.x_edges, s[0])).flatten(), locate(&self.y_edges, s[1])) {
            (Some(i), Some(j)) => self.weights[i * (self.y_edges.len() - 1) + j] += w,
            _ => self.overflow += w,
        }
    }

    /// Visitor form: the step `[t, t + dt)` is spent at `state`.
    pub fn visit(&mut self, t: f64, dt: f64, state: [f64; 2]) {
        let start = t.max(self.burn_in);
        let w = t + dt - start;
        if w > 0.0 {
            self.add(state, w);
        }
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.cs != other.cs || self.x_edges != other.x_edges || self.y_edges != other.y_edges {
            return Err(Error::WindowMismatch("accumulators over different grids".into()));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.axis += other.axis;
        self.time += other.time;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Normalizes; fails if less than `min_time` was recorded after burn-in.
    pub fn finish(self, min_time: f64) -> Result<OccupationHistogram> {
        if !(self.time > 0.0) || self.time < min_time {
            return Err(Error::InsufficientData(format!(
                "{} time units recorded after burn-in, need at least {}",
                self.time,
                min_time.max(f64::MIN_POSITIVE)
            )));
        }
        let z = self.time;
        Ok(OccupationHistogram {
            coordinate_system: self.cs,
            x_edges: self.x_edges,
            y_edges: self.y_edges,
            mass: self.weights.iter().map(|w| w / z).collect(),
            overflow: self.overflow / z,
            total_time: z,
            burn_in: self.burn_in,
            axis_mass: self.axis / z,
        })
    }
}

/// Occupation histogram of a stored path, requiring at least ten burn-in
/// lengths of post-burn-in time (and some time in any case).
pub fn occupation(path: &PathSample, x_edges: Vec<f64>, y_edges: Vec<f64>, burn_in: f64) -> Result<OccupationHistogram> {
    let mut acc = OccupationAccumulator::new(path.coordinate_system, x_edges, y_edges, burn_in)?;
    for k in 0..path.len().saturating_sub(1) {
        acc.visit(path.times[k], path.times[k + 1] - path.times[k], path.states[k]);
    }
    let duration = path.times.last().copied().unwrap_or(0.0);
    if duration < 10.0 * burn_in {
        return Err(Error::InsufficientData(format!("path of duration {duration} is shorter than ten burn-in lengths")));
    }
    acc.finish(0.0)
}

/// Transports a `(ξ, η)` histogram to `(x, y) = (1/ξ, ξ²η)` on the target grid.
///
/// Each source cell is split into `refinement²` subcells whose masses move
/// with their centres; the map has unit Jacobian, so no density correction is
/// applied. Subcells landing outside the target window, and the source
/// overflow, go to the target overflow.
pub fn pushforward(h: &OccupationHistogram, x_edges: Vec<f64>, y_edges: Vec<f64>, refinement: usize) -> Result<OccupationHistogram> {
    if h.coordinate_system != CoordinateSystem::Transformed {
        return Err(Error::WindowMismatch("pushforward needs a histogram over (xi, eta)".into()));
    }
    if !(h.x_edges[0] > 0.0) {
        return Err(Error::WindowMismatch(format!("the xi-window must be strictly positive, starts at {}", h.x_edges[0])));
    }
    if refinement == 0 {
        return Err(Error::config("refinement must be at least 1"));
    }
    let mut acc = OccupationAccumulator::new(CoordinateSystem::Original, x_edges, y_edges, 0.0)?;
    let ny = h.ny();
    let r = refinement as f64;
    for i in 0..h.nx() {
        let (x0, x1) = (h.x_edges[i], h.x_edges[i + 1]);
        for j in 0..ny {
            let m = h.mass[i * ny + j];
            if m == 0.0 {
                continue;
            }
            let (y0, y1) = (h.y_edges[j], h.y_edges[j + 1]);
            let w = m / (r * r);
            for a in 0..refinement {
                let xi = x0 + (x1 - x0) * (a as f64 + 0.5) / r;
                for b in 0..refinement {
                    let eta = y0 + (y1 - y0) * (b as f64 + 0.5) / r;
                    acc.add([1.0 / xi, xi * xi * eta], w);
                }
            }
        }
    }
    acc.overflow += h.overflow;
    acc.time += h.overflow;
    let mut out = acc.finish(0.0)?;
    out.total_time = h.total_time;
    out.burn_in = h.burn_in;
    out.axis_mass = 0.0;
    Ok(out)
}

/// Total-variation distance `½Σ|a − b|`, overflow included.
pub fn compare_histograms(a: &OccupationHistogram, b: &OccupationHistogram) -> Result<f64> {
    if a.coordinate_system != b.coordinate_system || a.x_edges != b.x_edges || a.y_edges != b.y_edges {
        return Err(Error::WindowMismatch("histograms over different grids or coordinates".into()));
    }
    let cells: f64 = a.mass.iter().zip(&b.mass).map(|(p, q)| (p - q).abs()).sum();
    Ok(0.5 * (cells + (a.overflow - b.overflow).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub window_length: f64,
    pub windows: usize,
    /// Time-averaged `ln x` per window.
    pub window_log_means: Vec<f64>,
    /// Per unit time.
    pub slope: f64,
    pub slope_se: f64,
    /// 95% interval `slope ± 1.96·se`.
    pub slope_ci: (f64, f64),
    /// Fraction of time with `x < BOUNDARY_FLOOR`.
    pub fraction_below_floor: f64,
}

/// Streaming window means of `ln x` (trapezoid in time, windows split exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct DecayAccumulator {
    window_length: f64,
    floor: f64,
    sums: Vec<f64>,
    prev: Option<(f64, f64, f64)>,
    below: f64,
    time: f64,
}

impl DecayAccumulator {
    pub fn new(window_length: f64) -> Result<Self> {
        if !(window_length > 0.0 && window_length.is_finite()) {
            return Err(Error::config("window_length must be positive"));
        }
        Ok(Self { window_length, floor: BOUNDARY_FLOOR, sums: Vec::new(), prev: None, below: 0.0, time: 0.0 })
    }

    fn deposit(&mut self, ta: f64, tb: f64, fa: f64, fb: f64) {
        let mut t0 = ta;
        while t0 < tb {
            let k = (t0 / self.window_length).floor() as usize;
            let end = ((k + 1) as f64 * self.window_length).min(tb);
            let at = |t: f64| fa + (fb - fa) * (t - ta) / (tb - ta);
            if self.sums.len() <= k {
                self.sums.resize(k + 1, 0.0);
            }
            self.sums[k] += 0.5 * (end - t0) * (at(t0) + at(end));
            if end <= t0 {
                break;
            }
            t0 = end;
        }
    }

    /// Node `(t, x)`; `x` must be positive.
    pub fn visit(&mut self, t: f64, x: f64) {
        let f = x.ln();
        if let Some((ta, fa, xa)) = self.prev {
            if t > ta {
                self.deposit(ta, t, fa, f);
                self.time += t - ta;
                if xa < self.floor {
                    self.below += t - ta;
                }
            }
        }
        self.prev = Some((t, f, x));
    }

    pub fn finish(self) -> Result<DecayReport> {
        let end = self.prev.map_or(0.0, |p| p.0);
        let complete = (end / self.window_length * (1.0 + 1e-12)).floor() as usize;
        if complete < MIN_DECAY_WINDOWS {
            return Err(Error::InsufficientData(format!(
                "{complete} complete windows of length {}, need {MIN_DECAY_WINDOWS}",
                self.window_length
            )));
        }
        let means: Vec<f64> = self.sums[..complete].iter().map(|s| s / self.window_length).collect();
        let mids: Vec<f64> = (0..complete).map(|k| (k as f64 + 0.5) * self.window_length).collect();
        let fit = ols_newey_west(&mids, &means, DECAY_HAC_LAG).ok_or_else(|| Error::InsufficientData("degenerate regression".into()))?;
        let half = 1.96 * fit.slope_se;
        Ok(DecayReport {
            window_length: self.window_length,
            windows: complete,
            window_log_means: means,
            slope: fit.slope,
            slope_se: fit.slope_se,
            slope_ci: (fit.slope - half, fit.slope + half),
            fraction_below_floor: if self.time > 0.0 { self.below / self.time } else { 0.0 },
        })
    }
}

/// Regresses window means of `ln x` on window midpoints.
pub fn decay_test(path: &PathSample, window_length: f64) -> Result<DecayReport> {
    let mut acc = DecayAccumulator::new(window_length)?;
    let widths = path.widths();
    if let Some(w) = widths.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::NonpositiveWidth(*w));
    }
    for (t, x) in path.times.iter().zip(widths) {
        acc.visit(*t, x);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn plain_path(times: Vec<f64>, states: Vec<[f64; 2]>) -> PathSample {
        PathSample { times, states, coordinate_system: CoordinateSystem::Original, min_x: 0.0, hit_floor: false, rng_fingerprint: 0 }
    }

    fn grid() -> (Vec<f64>, Vec<f64>) {
        (uniform_edges(0.0, 4.0, 40), uniform_edges(-4.0, 4.0, 40))
    }

    #[test]
    fn constant_path_is_a_point_mass() {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.1).collect();
        let path = plain_path(times, vec![[1.23, -0.51]; 1001]);
        let (xe, ye) = grid();
        let h = occupation(&path, xe, ye, 5.0).unwrap();
        assert!((h.cell(12, 17) - 1.0).abs() < 1e-12);
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
        assert!((h.total_time - 95.0).abs() < 1e-9);
    }

    #[test]
    fn outside_mass_goes_to_overflow() {
        let (xe, ye) = grid();
        let mut acc = OccupationAccumulator::new(CoordinateSystem::Original, xe, ye, 0.0).unwrap();
        acc.visit(0.0, 1.0, [1.0, 0.0]);
        acc.visit(1.0, 2.0, [5.0, 0.0]);
        acc.visit(3.0, 1.0, [0.0, 0.0]);
        acc.visit(4.0, 1.0, [1.0, 4.0]);
        let h = acc.finish(0.0).unwrap();
        assert!((h.overflow - 0.6).abs() < 1e-12);
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn burn_in_and_min_time() {
        let (xe, ye) = grid();
        let path = plain_path(vec![0.0, 1.0, 2.0], vec![[1.0, 0.0]; 3]);
        assert!(matches!(occupation(&path, xe.clone(), ye.clone(), 1.0), Err(Error::InsufficientData(_))));
        let acc = OccupationAccumulator::new(CoordinateSystem::Original, xe, ye, 10.0).unwrap();
        assert!(matches!(acc.finish(1.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn merge_is_order_independent() {
        let (xe, ye) = grid();
        let mk = |pts: &[[f64; 2]]| {
            let mut a = OccupationAccumulator::new(CoordinateSystem::Original, xe.clone(), ye.clone(), 0.0).unwrap();
            for (k, p) in pts.iter().enumerate() {
                a.visit(k as f64, 1.0, *p);
            }
            a
        };
        let a = mk(&[[1.0, 1.0], [2.0, 2.0]]);
        let b = mk(&[[3.0, -1.0], [9.0, 0.0]]);
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab.finish(0.0).unwrap(), ba.finish(0.0).unwrap());
    }

    #[test]
    fn tv_distance() {
        let (xe, ye) = grid();
        let a = OccupationHistogram::point_mass(CoordinateSystem::Original, xe.clone(), ye.clone(), [1.0, 1.0]).unwrap();
        let b = OccupationHistogram::point_mass(CoordinateSystem::Original, xe.clone(), ye.clone(), [2.0, 1.0]).unwrap();
        assert_eq!(compare_histograms(&a, &a).unwrap(), 0.0);
        assert_eq!(compare_histograms(&a, &b).unwrap(), 1.0);
        let c = OccupationHistogram::point_mass(CoordinateSystem::Original, xe, uniform_edges(-4.0, 4.0, 20), [1.0, 1.0]).unwrap();
        assert!(matches!(compare_histograms(&a, &c), Err(Error::WindowMismatch(_))));
    }

    #[test]
    fn pushforward_fixed_point_and_mass() {
        let xe = uniform_edges(0.5, 2.0, 300);
        let ye = uniform_edges(-1.0, 1.0, 400);
        let h = OccupationHistogram::point_mass(CoordinateSystem::Transformed, xe, ye, [1.0, 0.0]).unwrap();
        let (txe, tye) = grid();
        let out = pushforward(&h, txe, tye, 4).unwrap();
        assert!((out.total_mass() - 1.0).abs() < 1e-12);
        // (1, 0) sits on a bin corner of the target grid; the image stays within
        // the four cells around it
        let near: f64 = [(9, 19), (9, 20), (10, 19), (10, 20)].iter().map(|&(i, j)| out.cell(i, j)).sum();
        assert!((near - 1.0).abs() < 1e-12);

        let h = OccupationHistogram::point_mass(CoordinateSystem::Transformed, uniform_edges(0.5, 2.0, 300), uniform_edges(-1.0, 1.0, 400), [1.02, 0.01]).unwrap();
        let out = pushforward(&h, uniform_edges(0.0, 4.0, 40), uniform_edges(-4.0, 4.0, 40), 3).unwrap();
        assert!((out.cell(9, 20) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pushforward_window_checks() {
        let (xe, ye) = grid();
        let orig = OccupationHistogram::point_mass(CoordinateSystem::Original, xe.clone(), ye.clone(), [1.0, 0.0]).unwrap();
        assert!(matches!(pushforward(&orig, xe.clone(), ye.clone(), 2), Err(Error::WindowMismatch(_))));
        let tr = OccupationHistogram::point_mass(CoordinateSystem::Transformed, xe.clone(), ye.clone(), [1.0, 0.0]).unwrap();
        assert!(matches!(pushforward(&tr, xe, ye, 2), Err(Error::WindowMismatch(_))));
    }

    #[test]
    fn axis_mass_is_tracked() {
        let (xe, ye) = (uniform_edges(0.0, 4.0, 4), uniform_edges(-4.0, 4.0, 4));
        let mut acc = OccupationAccumulator::new(CoordinateSystem::Transformed, xe, ye, 0.0).unwrap();
        acc.visit(0.0, 1.0, [0.0, 0.0]);
        acc.visit(1.0, 3.0, [0.5, 0.0]);
        let h = acc.finish(0.0).unwrap();
        assert_eq!(h.axis_mass, 0.25);
    }

    #[test]
    fn synthetic_decay_controls() {
        let times: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.01).collect();
        let decaying = plain_path(times.clone(), times.iter().map(|t| [(-t).exp(), 0.0]).collect());
        let r = decay_test(&decaying, 1.0).unwrap();
        assert_eq!(r.windows, 40);
        assert!((r.slope + 1.0).abs() < 1e-12, "{}", r.slope);
        assert!(r.slope_se < 1e-10);
        assert!(r.slope_ci.0 <= r.slope && r.slope <= r.slope_ci.1);

        let flat = plain_path(times.clone(), vec![[0.7, 0.0]; times.len()]);
        let r = decay_test(&flat, 1.0).unwrap();
        assert!(r.slope.abs() < 1e-14);
        assert_eq!(r.fraction_below_floor, 0.0);

        let low = plain_path(times.clone(), vec![[0.005, 0.0]; times.len()]);
        assert_eq!(decay_test(&low, 1.0).unwrap().fraction_below_floor, 1.0);
    }

    #[test]
    fn decay_needs_twenty_windows() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let p = plain_path(times.clone(), vec![[1.0, 0.0]; times.len()]);
        assert!(matches!(decay_test(&p, 1.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn window_means_split_segments_exactly() {
        // coarse nodes straddling window boundaries
        let times: Vec<f64> = (0..=70).map(|k| k as f64 * 0.3).collect();
        let p = plain_path(times.clone(), times.iter().map(|t| [(2.0 * t).exp(), 0.0]).collect());
        let r = decay_test(&p, 1.0).unwrap();
        for (k, m) in r.window_log_means.iter().enumerate() {
            assert!((m - 2.0 * (k as f64 + 0.5)).abs() < 1e-10);
        }
    }
}
