//! Small statistics toolkit used by the diagnostics: running moments,
//! weighted-sample accumulation, OLS with Newey–West errors, and the
//! Kolmogorov–Smirnov / Jarque–Bera tests.

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Welford accumulator for mean and variance; mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for RunningMoments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Self::default();
        for v in iter {
            m.push(v);
        }
        m
    }
}

/// Importance-weighted estimator of `E_P[g] = E_Q[g·ρ]`.
///
/// Tracks both the plain estimator `Σ ρ g / n` (unbiased) and the
/// self-normalized one `Σ ρ g / Σ ρ`, together with the effective sample size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedMean {
    pub n: u64,
    pub sum_w: f64,
    pub sum_w2: f64,
    pub sum_wg: f64,
    pub sum_wg2: f64,
}

impl WeightedMean {
    pub fn push(&mut self, weight: f64, g: f64) {
        self.n += 1;
        self.sum_w += weight;
        self.sum_w2 += weight * weight;
        self.sum_wg += weight * g;
        self.sum_wg2 += weight * weight * g * g;
    }

    pub fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.sum_w += o.sum_w;
        self.sum_w2 += o.sum_w2;
        self.sum_wg += o.sum_wg;
        self.sum_wg2 += o.sum_wg2;
    }

    pub fn mean(&self) -> f64 {
        self.sum_wg / self.n as f64
    }

    pub fn std_error(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_wg2 / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    }

    /// Mean of the weights alone (estimates `E_Q[ρ] = 1`).
    pub fn weight_mean(&self) -> f64 {
        self.sum_w / self.n as f64
    }

    pub fn weight_std_error(&self) -> f64 {
        let n = self.n as f64;
        let m = self.weight_mean();
        ((self.sum_w2 / n - m * m).max(0.0) / (n - 1.0)).sqrt()
    }

    pub fn self_normalized_mean(&self) -> f64 {
        self.sum_wg / self.sum_w
    }

    /// `(Σw)² / Σw²`.
    pub fn effective_sample_size(&self) -> f64 {
        self.sum_w * self.sum_w / self.sum_w2
    }
}

/// Straight-line fit `y = a + b x` with a HAC (Newey–West, Bartlett kernel)
/// standard error on the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

pub fn ols_newey_west(x: &[f64], y: &[f64], lag: usize) -> Option<LineFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // With centred regressor the slope's sandwich reduces to a scalar:
    // Var(b) = Σ_l w_l Σ_t u_t u_{t-l} / sxx², u_t = (x_t − x̄) e_t.
    let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - intercept - slope * a)).collect();
    let mut s = u.iter().map(|v| v * v).sum::<f64>();
    for l in 1..=lag.min(n - 1) {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let g: f64 = (l..n).map(|t| u[t] * u[t - l]).sum();
        s += 2.0 * w * g;
    }
    let slope_se = (s.max(0.0)).sqrt() / sxx;
    Some(LineFit { intercept, slope, slope_se })
}

/// Plain least-squares slope of `y` on `x` (no error model).
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    ols_newey_west(x, y, 0).map_or(f64::NAN, |f| f.slope)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(|p, q| p.total_cmp(q));
    b.sort_by(|p, q| p.total_cmp(q));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < na && j < nb {
        let v = a[i].min(b[j]);
        while i < na && a[i] <= v {
            i += 1;
        }
        while j < nb && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Jarque–Bera statistic; asymptotically χ² with two degrees of freedom.
pub fn jarque_bera(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in sample {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    n / 6.0 * (skew * skew + (kurt - 3.0) * (kurt - 3.0) / 4.0)
}

/// p-value of a χ²₂ statistic.
pub fn chi2_2_sf(stat: f64) -> f64 {
    (-stat / 2.0).exp()
}
