//! Radial profiles, their moment integrals and the SDE parameters derived
//! from them.
//!
//! The shape coefficients are `c^{m,n,p} = 2π ∫₀^∞ r^m f(r)^n f'(r)^p dr`,
//! evaluated with composite Gauss–Legendre quadrature on `[0, r_max]`.

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SdeParamsRef;

/// Bound on `|f(r_max)|` and `|f'(r_max)|`.
pub const TRUNCATION_TOL: f64 = 1e-12;
/// Smallest admissible value of the divisor coefficients `c120`, `c320`.
pub const DIVISOR_TOL: f64 = 1e-14;
pub const MIN_QUAD_NODES: usize = 16;

/// A nonnegative, rapidly decreasing radial profile `f`.
pub trait RadialProfile {
    fn value(&self, r: f64) -> f64;

    /// `f'(r)`; central differences unless overridden.
    fn derivative(&self, r: f64) -> f64 {
        central_difference(|s| self.value(s), r)
    }
}

impl<P: RadialProfile + ?Sized> RadialProfile for &P {
    fn value(&self, r: f64) -> f64 {
        (**self).value(r)
    }
    fn derivative(&self, r: f64) -> f64 {
        (**self).derivative(r)
    }
}

/// Central difference with step `1e-6·max(1, |r|)`.
pub fn central_difference(f: impl Fn(f64) -> f64, r: f64) -> f64 {
    let h = 1e-6 * r.abs().max(1.0);
    (f(r + h) - f(r - h)) / (2.0 * h)
}

/// `a·exp(−r²/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub amplitude: f64,
}

impl Default for Gaussian {
    fn default() -> Self {
        Self { amplitude: 1.0 }
    }
}

impl RadialProfile for Gaussian {
    fn value(&self, r: f64) -> f64 {
        self.amplitude * (-0.5 * r * r).exp()
    }
    fn derivative(&self, r: f64) -> f64 {
        -r * self.value(r)
    }
}

/// `a·sech(r)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sech2 {
    pub amplitude: f64,
}

impl Default for Sech2 {
    fn default() -> Self {
        Self { amplitude: 1.0 }
    }
}

impl RadialProfile for Sech2 {
    fn value(&self, r: f64) -> f64 {
        let s = 1.0 / r.cosh();
        self.amplitude * s * s
    }
    fn derivative(&self, r: f64) -> f64 {
        -2.0 * r.tanh() * self.value(r)
    }
}

/// Profile from closures; without an explicit derivative, central differences are used.
pub struct FnProfile<F, G = fn(f64) -> f64> {
    f: F,
    df: Option<G>,
}

impl<F: Fn(f64) -> f64> FnProfile<F> {
    pub fn new(f: F) -> Self {
        Self { f, df: None }
    }
}

impl<F: Fn(f64) -> f64, G: Fn(f64) -> f64> FnProfile<F, G> {
    pub fn with_derivative(f: F, df: G) -> Self {
        Self { f, df: Some(df) }
    }
}

impl<F: Fn(f64) -> f64, G: Fn(f64) -> f64> RadialProfile for FnProfile<F, G> {
    fn value(&self, r: f64) -> f64 {
        (self.f)(r)
    }
    fn derivative(&self, r: f64) -> f64 {
        match &self.df {
            Some(df) => df(r),
            None => central_difference(&self.f, r),
        }
    }
}

/// Natural cubic spline through tabulated `(r, f(r))` pairs; zero past the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineProfile {
    r: Vec<f64>,
    f: Vec<f64>,
    second: Vec<f64>,
}

impl SplineProfile {
    pub fn new(r: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        let n = r.len();
        if n < 4 || f.len() != n {
            return Err(Error::InvalidProfile("spline needs at least four (r, f) pairs".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) || r[0] < 0.0 {
            return Err(Error::InvalidProfile("spline radii must be nonnegative and strictly increasing".into()));
        }
        // Thomas algorithm for the interior second derivatives, natural ends.
        let mut second = alloc::vec![0.0; n];
        let mut c_prime = alloc::vec![0.0; n];
        let mut d_prime = alloc::vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = r[i] - r[i - 1];
            let h1 = r[i + 1] - r[i];
            let a = h0 / 6.0;
            let b = (h0 + h1) / 3.0;
            let c = h1 / 6.0;
            let d = (f[i + 1] - f[i]) / h1 - (f[i] - f[i - 1]) / h0;
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (d - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            second[i] = d_prime[i] - c_prime[i] * second[i + 1];
        }
        Ok(Self { r, f, second })
    }

    pub fn last_radius(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    fn segment(&self, r: f64) -> usize {
        let k = self.r.partition_point(|&v| v <= r);
        k.clamp(1, self.r.len() - 1) - 1
    }

    fn eval(&self, r: f64) -> (f64, f64) {
        let i = self.segment(r);
        let h = self.r[i + 1] - self.r[i];
        let a = (self.r[i + 1] - r) / h;
        let b = (r - self.r[i]) / h;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let v = a * self.f[i] + b * self.f[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let dv = (self.f[i + 1] - self.f[i]) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        (v, dv)
    }
}

impl RadialProfile for SplineProfile {
    fn value(&self, r: f64) -> f64 {
        if r > self.last_radius() {
            0.0
        } else {
            self.eval(r).0
        }
    }
    fn derivative(&self, r: f64) -> f64 {
        if r > self.last_radius() {
            0.0
        } else {
            self.eval(r).1
        }
    }
}

/// Named built-in profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Gaussian,
    Sech2,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gaussian" => Some(Self::Gaussian),
            "sech2" => Some(Self::Sech2),
            _ => None,
        }
    }

    /// Truncation radius where the profile and its slope are below [`TRUNCATION_TOL`].
    pub fn default_r_max(self) -> f64 {
        match self {
            Self::Gaussian => 12.0,
            Self::Sech2 => 16.0,
        }
    }
}

impl RadialProfile for Builtin {
    fn value(&self, r: f64) -> f64 {
        match self {
            Self::Gaussian => Gaussian::default().value(r),
            Self::Sech2 => Sech2::default().value(r),
        }
    }
    fn derivative(&self, r: f64) -> f64 {
        match self {
            Self::Gaussian => Gaussian::default().derivative(r),
            Self::Sech2 => Sech2::default().derivative(r),
        }
    }
}

/// Profile plus quadrature settings.
#[derive(Debug, Clone)]
pub struct ProfileSpec<P> {
    pub profile: P,
    pub r_max: f64,
    pub quad_n: usize,
}

impl<P: RadialProfile> ProfileSpec<P> {
    /// Checks the admissibility invariants: `quad_n ≥ 16`, `f ≥ 0` on a sample
    /// grid, and `f`, `f'` negligible at the truncation radius.
    pub fn new(profile: P, r_max: f64, quad_n: usize) -> Result<Self> {
        if quad_n < MIN_QUAD_NODES {
            return Err(Error::InvalidProfile(alloc::format!("quad_n = {quad_n} is below {MIN_QUAD_NODES}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidProfile(alloc::format!("r_max = {r_max} must be positive")));
        }
        for i in 0..=256 {
            let r = r_max * i as f64 / 256.0;
            let v = profile.value(r);
            if !v.is_finite() || v < -TRUNCATION_TOL {
                return Err(Error::InvalidProfile(alloc::format!("f({r}) = {v} is negative or not finite")));
            }
        }
        let (f_end, df_end) = (profile.value(r_max), profile.derivative(r_max));
        if f_end.abs() > TRUNCATION_TOL || df_end.abs() > TRUNCATION_TOL {
            return Err(Error::InvalidProfile(alloc::format!(
                "profile not truncated at r_max = {r_max}: f = {f_end:e}, f' = {df_end:e}"
            )));
        }
        Ok(Self { profile, r_max, quad_n })
    }
}

const GL8_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL8_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// Composite 8-point Gauss–Legendre over `[a, b]` with `panels` panels.
/// Returns the integral and the sum of absolute contributions (for round-off bounds).
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> (f64, f64) {
    let h = (b - a) / panels as f64;
    let (mut sum, mut abs_sum) = (0.0, 0.0);
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            for s in [-1.0, 1.0] {
                let v = w * half * f(mid + s * x * half);
                sum += v;
                abs_sum += v.abs();
            }
        }
    }
    (sum, abs_sum)
}

/// Integral plus an error estimate from the half-resolution rule.
fn integrate_with_error(f: impl Fn(f64) -> f64, b: f64, quad_n: usize) -> (f64, f64) {
    let panels = quad_n.div_ceil(8).max(2);
    let (fine, abs_sum) = gauss_legendre(&f, 0.0, b, panels);
    let (coarse, _) = gauss_legendre(&f, 0.0, b, panels / 2);
    let roundoff = 64.0 * f64::EPSILON * abs_sum;
    (fine, (fine - coarse).abs().max(roundoff))
}

/// `c_f^{m,n,p}` moment integrals used by the parameter formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeCoefficients {
    pub c120: f64,
    pub c320: f64,
    pub c102: f64,
    pub c140: f64,
    pub c322: f64,
    /// Quadrature error estimates, same order as the coefficients.
    #[serde(default)]
    pub error: [f64; 5],
}

impl ShapeCoefficients {
    pub fn as_array(&self) -> [f64; 5] {
        [self.c120, self.c320, self.c102, self.c140, self.c322]
    }

    fn check_divisors(&self) -> Result<()> {
        for (name, value) in [("c120", self.c120), ("c320", self.c320)] {
            if !(value > DIVISOR_TOL) {
                return Err(Error::NonpositiveDivisorCoefficient { name, value });
            }
        }
        Ok(())
    }
}

/// `2π ∫₀^{r_max} r^m f^n f'^p dr` for one exponent triple.
pub fn moment<P: RadialProfile>(spec: &ProfileSpec<P>, m: i32, n: i32, p: i32) -> (f64, f64) {
    let f = &spec.profile;
    let (v, e) = integrate_with_error(|r| r.powi(m) * f.value(r).powi(n) * f.derivative(r).powi(p), spec.r_max, spec.quad_n);
    (2.0 * PI * v, 2.0 * PI * e)
}

pub fn shape_coefficients<P: RadialProfile>(spec: &ProfileSpec<P>) -> Result<ShapeCoefficients> {
    let (c120, e0) = moment(spec, 1, 2, 0);
    let (c320, e1) = moment(spec, 3, 2, 0);
    let (c102, e2) = moment(spec, 1, 0, 2);
    let (c140, e3) = moment(spec, 1, 4, 0);
    let (c322, e4) = moment(spec, 3, 2, 2);
    let c = ShapeCoefficients { c120, c320, c102, c140, c322, error: [e0, e1, e2, e3, e4] };
    c.check_divisors()?;
    Ok(c)
}

/// Damping `Λ`, noise strength `D_r` and initial mass `M = ‖ψ(·,0)‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalInputs {
    pub lambda: f64,
    pub d_r: f64,
    pub mass: f64,
}

impl PhysicalInputs {
    pub fn from_mass_squared(lambda: f64, d_r: f64, mass_sq: f64) -> Self {
        Self { lambda, d_r, mass: if mass_sq > 0.0 { mass_sq.sqrt() } else { mass_sq } }
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("d_r", self.d_r), ("mass", self.mass)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidPhysicalInput(alloc::format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

/// `(δ, γ, D)` of the width SDE plus the amplitude constant of the trial function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub delta: f64,
    pub gamma: f64,
    pub d: f64,
    pub amp: f64,
}

impl SdeParams {
    pub fn new(delta: f64, gamma: f64, d: f64, amp: f64) -> Result<Self> {
        let p = Self { delta, gamma, d, amp };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::InvalidPhysicalInput(alloc::format!("delta = {} is not finite", self.delta)));
        }
        for (name, v) in [("gamma", self.gamma), ("d", self.d), ("amp", self.amp)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidPhysicalInput(alloc::format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> SdeParamsRef {
        SdeParamsRef { delta: self.delta, gamma: self.gamma, d: self.d }
    }
}

pub fn derive_params(coeffs: &ShapeCoefficients, phys: &PhysicalInputs) -> Result<SdeParams> {
    coeffs.check_divisors()?;
    phys.check()?;
    let m2 = phys.mass * phys.mass;
    let ShapeCoefficients { c120, c320, c102, c140, c322, .. } = *coeffs;
    let delta = 4.0 / c320 * (c102 - m2 * c140 / (2.0 * c120));
    let gamma = 8.0 * phys.lambda * m2 * c322 / (c120 * c320);
    let d = 32.0 * PI * PI * phys.d_r * c322 / (c320 * c320);
    let amp = phys.mass / c120.sqrt();
    let p = SdeParams { delta, gamma, d, amp };
    p.validate()?;
    Ok(p)
}

/// A complex value `re + i·im`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveValue {
    pub re: f64,
    pub im: f64,
}

impl WaveValue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
    pub fn phase(&self) -> f64 {
        self.im.atan2(self.re)
    }
}

/// `(amp/x)·f(|u|/x)·exp(i·ẋ|u|²/(4x))`.
pub fn trial_wave<P: RadialProfile>(profile: &P, amp: f64, x: f64, xdot: f64, u_norm: f64) -> Result<WaveValue> {
    if !(x > 0.0) {
        return Err(Error::NonpositiveWidth(x));
    }
    let modulus = amp / x * profile.value(u_norm / x);
    let phase = xdot * u_norm * u_norm / (4.0 * x);
    if phase == 0.0 {
        return Ok(WaveValue { re: modulus, im: 0.0 });
    }
    let (s, c) = phase.sin_cos();
    Ok(WaveValue { re: modulus * c, im: modulus * s })
}

/// `‖ψ‖²_{L²} = 2π·amp²·∫ r f(r)² dr`.
pub fn l2_mass<P: RadialProfile>(spec: &ProfileSpec<P>, amp: f64) -> f64 {
    amp * amp * moment(spec, 1, 2, 0).0
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `∫₀^∞ r^k e^{−a r²} dr = Γ((k+1)/2) / (2 a^{(k+1)/2})`, for odd k a factorial.
    fn gamma_moment(k: u32, a: f64) -> f64 {
        assert!(k % 2 == 1);
        let j = (k - 1) / 2; // Γ(j+1) = j!
        let fact: f64 = (1..=j).map(f64::from).product();
        fact / (2.0 * a.powi(j as i32 + 1))
    }

    fn gaussian_spec(a: f64) -> ProfileSpec<Gaussian> {
        ProfileSpec::new(Gaussian { amplitude: a }, 12.0, 512).unwrap()
    }

    #[test]
    fn gaussian_coefficients_match_gamma_integrals() {
        let c = shape_coefficients(&gaussian_spec(1.0)).unwrap();
        // f = e^{-r²/2}, f' = -r f: integrands are r^k e^{-a r²}.
        let expected = [
            2.0 * PI * gamma_moment(1, 1.0),
            2.0 * PI * gamma_moment(3, 1.0),
            2.0 * PI * gamma_moment(3, 1.0),
            2.0 * PI * gamma_moment(1, 2.0),
            2.0 * PI * gamma_moment(5, 2.0),
        ];
        let closed = [PI, PI, PI, PI / 2.0, PI / 4.0];
        for ((got, want), lit) in c.as_array().iter().zip(expected).zip(closed) {
            assert!((want - lit).abs() < 1e-15);
            assert!((got - want).abs() / want < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn finite_difference_derivative_is_accurate_enough() {
        let spec = ProfileSpec::new(FnProfile::new(|r: f64| (-0.5 * r * r).exp()), 12.0, 512).unwrap();
        let c = shape_coefficients(&spec).unwrap();
        assert!((c.c102 - PI).abs() / PI < 1e-8);
        assert!((c.c322 - PI / 4.0).abs() / PI < 1e-8);
    }

    #[test]
    fn scaled_gaussian_is_homogeneous() {
        let base = shape_coefficients(&gaussian_spec(1.0)).unwrap();
        let scaled = shape_coefficients(&gaussian_spec(2.0)).unwrap();
        assert!((scaled.c120 - 4.0 * PI).abs() / (4.0 * PI) < 1e-10);
        let powers = [2, 2, 2, 4, 4];
        for ((s, b), k) in scaled.as_array().iter().zip(base.as_array()).zip(powers) {
            assert!((s - b * 2f64.powi(k)).abs() / s < 1e-10);
        }
    }

    #[test]
    fn zero_profile_is_rejected() {
        let spec = ProfileSpec::new(FnProfile::new(|_| 0.0), 12.0, 64).unwrap();
        assert!(matches!(shape_coefficients(&spec), Err(Error::NonpositiveDivisorCoefficient { name: "c120", .. })));
        assert_eq!(l2_mass(&spec, 1.0), 0.0);
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(ProfileSpec::new(Gaussian::default(), 12.0, 8).is_err());
        assert!(ProfileSpec::new(Gaussian::default(), 3.0, 64).is_err());
        assert!(ProfileSpec::new(FnProfile::new(|r: f64| -(-r * r).exp()), 12.0, 64).is_err());
        assert!(ProfileSpec::new(Sech2::default(), Builtin::Sech2.default_r_max(), 64).is_ok());
    }

    #[test]
    fn doubling_nodes_stays_within_error_estimate() {
        for quad_n in [32usize, 64, 128] {
            let a = shape_coefficients(&ProfileSpec::new(Sech2::default(), 16.0, quad_n).unwrap()).unwrap();
            let b = shape_coefficients(&ProfileSpec::new(Sech2::default(), 16.0, 2 * quad_n).unwrap()).unwrap();
            for i in 0..5 {
                assert!((a.as_array()[i] - b.as_array()[i]).abs() <= a.error[i], "quad_n={quad_n} i={i}");
            }
        }
    }

    #[test]
    fn gaussian_parameters() {
        let c = shape_coefficients(&gaussian_spec(1.0)).unwrap();
        let phys = PhysicalInputs::from_mass_squared(1.0, 1.0, PI);
        let p = derive_params(&c, &phys).unwrap();
        assert!((p.delta - 3.0).abs() < 1e-7);
        assert!((p.gamma - 2.0).abs() < 1e-7);
        assert!((p.d - 8.0 * PI).abs() < 1e-6);
        assert!((p.amp - 1.0).abs() < 1e-8);

        let doubled = derive_params(&c, &PhysicalInputs { d_r: 2.0, ..phys }).unwrap();
        assert!((doubled.d - 2.0 * p.d).abs() < 1e-12);
        assert_eq!((doubled.delta, doubled.gamma, doubled.amp), (p.delta, p.gamma, p.amp));

        let zero_mass = PhysicalInputs { mass: 0.0, ..phys };
        assert!(matches!(derive_params(&c, &zero_mass), Err(Error::InvalidPhysicalInput(_))));
        assert!(matches!(derive_params(&c, &PhysicalInputs { lambda: -1.0, ..phys }), Err(Error::InvalidPhysicalInput(_))));
    }

    #[test]
    fn trial_wave_values() {
        let g = Gaussian::default();
        let w = trial_wave(&g, 2.0, 0.5, 3.0, 0.0).unwrap();
        assert_eq!(w, WaveValue { re: 4.0, im: 0.0 });
        let w = trial_wave(&g, 1.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(w.im, 0.0);
        assert!((w.re - 0.5 * (-0.125f64).exp()).abs() < 1e-15);
        let w = trial_wave(&g, 1.0, 1.0, 4.0, 2f64.sqrt()).unwrap();
        let e = (-1f64).exp();
        assert!((w.re - e * 2f64.cos()).abs() < 1e-14);
        assert!((w.im - e * 2f64.sin()).abs() < 1e-14);
        assert!(matches!(trial_wave(&g, 1.0, 0.0, 0.0, 1.0), Err(Error::NonpositiveWidth(_))));
    }

    #[test]
    fn mass_is_conserved_across_widths() {
        let spec = gaussian_spec(1.0);
        assert!((l2_mass(&spec, 1.0) - PI).abs() < 1e-10);
        for (x, xdot) in [(0.3, -2.0), (1.0, 0.0), (4.5, 7.0)] {
            // 2D radial quadrature of |ψ|² over the plane.
            let (direct, _) = gauss_legendre(
                |u| {
                    let w = trial_wave(&spec.profile, 1.0, x, xdot, u).unwrap();
                    2.0 * PI * u * w.modulus() * w.modulus()
                },
                0.0,
                x * spec.r_max,
                128,
            );
            assert!((direct - PI).abs() < 1e-10, "x={x}: {direct}");
        }
    }

    #[test]
    fn spline_reproduces_gaussian() {
        let r: Vec<f64> = (0..=1200).map(|i| i as f64 * 0.01).collect();
        let f: Vec<f64> = r.iter().map(|v| (-0.5 * v * v).exp()).collect();
        let s = SplineProfile::new(r, f).unwrap();
        assert!((s.value(1.234) - (-0.5f64 * 1.234 * 1.234).exp()).abs() < 1e-8);
        let spec = ProfileSpec::new(s, 12.0, 512).unwrap();
        let c = shape_coefficients(&spec).unwrap();
        assert!((c.c120 - PI).abs() / PI < 1e-6);
        assert!((c.c102 - PI).abs() / PI < 1e-5);
    }
}
