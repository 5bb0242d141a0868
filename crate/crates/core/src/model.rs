//! State types, the coordinate transform `(x, y) ↦ (1/x, x²y)`, the drift
//! and diffusion fields of both systems, the Lyapunov function and the
//! Lie bracket used for the Hörmander rank check.
//!
//! Original system on `{x > 0}`:
//!
//! ```text
//! dx = y dt
//! dy = (δ/x³ − γy/x⁴) dt + √(2D)/x² dW
//! ```
//!
//! Transformed system on ℝ² (additive noise):
//!
//! ```text
//! dξ = −ξ⁴η dt
//! dη = (δξ + 2ξ³η² − γξ⁴η) dt + √(2D) dW
//! ```

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance on the bracket determinant `ξ⁴` (a ξ cutoff near 1.8e−3).
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// `(δ, γ, D)` as used by the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeParamsRef {
    pub delta: f64,
    pub gamma: f64,
    pub d: f64,
}

impl SdeParamsRef {
    /// `√(2D)`
    pub fn sigma(&self) -> f64 {
        (2.0 * self.d).sqrt()
    }
}

/// Width `x > 0` and width velocity `y = ẋ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlaneState {
    pub x: f64,
    pub y: f64,
}

impl HalfPlaneState {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x > 0.0) {
            return Err(Error::NonpositiveWidth(x));
        }
        Ok(Self { x, y })
    }
}

/// `(ξ, η) = (1/x, x²y)`; ξ may take any sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedState {
    pub xi: f64,
    pub eta: f64,
}

/// Components of a vector field on `∂_ξ`, `∂_η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorField2 {
    pub a: f64,
    pub b: f64,
}

pub fn to_transformed(s: HalfPlaneState) -> Result<TransformedState> {
    if !(s.x > 0.0) {
        return Err(Error::NonpositiveWidth(s.x));
    }
    Ok(TransformedState { xi: 1.0 / s.x, eta: s.x * s.x * s.y })
}

pub fn from_transformed(t: TransformedState) -> Result<HalfPlaneState> {
    if !(t.xi > 0.0) {
        return Err(Error::NonpositiveXi(t.xi));
    }
    Ok(HalfPlaneState { x: 1.0 / t.xi, y: t.xi * t.xi * t.eta })
}

/// Jacobian of `G₁` at `(x, y)`, row-major `[[∂ξ/∂x, ∂ξ/∂y], [∂η/∂x, ∂η/∂y]]`.
pub fn transform_jacobian(s: HalfPlaneState) -> [[f64; 2]; 2] {
    let x = s.x;
    [[-1.0 / (x * x), 0.0], [2.0 * x * s.y, x * x]]
}

pub fn drift_original(s: HalfPlaneState, p: &SdeParamsRef) -> Result<(f64, f64)> {
    if !(s.x > 0.0) {
        return Err(Error::NonpositiveWidth(s.x));
    }
    Ok(drift_original_unchecked(s.x, s.y, p))
}

#[inline]
pub(crate) fn drift_original_unchecked(x: f64, y: f64, p: &SdeParamsRef) -> (f64, f64) {
    let x2 = x * x;
    let x3 = x2 * x;
    (y, p.delta / x3 - p.gamma * y / (x3 * x))
}

pub fn diffusion_original(s: HalfPlaneState, p: &SdeParamsRef) -> Result<(f64, f64)> {
    if !(s.x > 0.0) {
        return Err(Error::NonpositiveWidth(s.x));
    }
    Ok((0.0, p.sigma() / (s.x * s.x)))
}

/// Drift of the transformed system. Its diffusion is the constant `(0, √(2D))`.
pub fn drift_transformed(t: TransformedState, p: &SdeParamsRef) -> (f64, f64) {
    let (xi, eta) = (t.xi, t.eta);
    if xi == 0.0 {
        return (0.0, 0.0);
    }
    let xi3 = xi * xi * xi;
    let xi4 = xi3 * xi;
    (-xi4 * eta, p.delta * xi + 2.0 * xi3 * eta * eta - p.gamma * xi4 * eta)
}

pub fn diffusion_transformed(p: &SdeParamsRef) -> (f64, f64) {
    (0.0, p.sigma())
}

/// `f_L(ξ, η) = ξ⁴η²/2`.
pub fn lyapunov(t: TransformedState) -> f64 {
    let xi2 = t.xi * t.xi;
    0.5 * xi2 * xi2 * t.eta * t.eta
}

/// `ℒf_L = δξ⁵η − γξ⁸η² + Dξ⁴`, obtained by applying
/// `ℒ = −ξ⁴η∂_ξ + (δξ + 2ξ³η² − γξ⁴η)∂_η + D∂²_η` to [`lyapunov`].
pub fn generator_lyapunov(t: TransformedState, p: &SdeParamsRef) -> f64 {
    let (xi, eta) = (t.xi, t.eta);
    let xi4 = xi * xi * xi * xi;
    p.delta * xi4 * xi * eta - p.gamma * xi4 * xi4 * eta * eta + p.d * xi4
}

/// The expression as printed alongside the operator, with `δξη` as its first
/// term. Kept only so the numerical cross-check can discriminate the two.
pub fn generator_lyapunov_printed(t: TransformedState, p: &SdeParamsRef) -> f64 {
    let (xi, eta) = (t.xi, t.eta);
    let xi4 = xi * xi * xi * xi;
    p.delta * xi * eta - p.gamma * xi4 * xi4 * eta * eta + p.d * xi4
}

/// `[X₀, X₁]` with `X₀` the transformed drift and `X₁ = ∂_η`.
pub fn bracket(t: TransformedState, p: &SdeParamsRef) -> VectorField2 {
    let (xi, eta) = (t.xi, t.eta);
    let xi3 = xi * xi * xi;
    let xi4 = xi3 * xi;
    VectorField2 { a: xi4, b: -(4.0 * xi3 * eta - p.gamma * xi4) }
}

/// Rank of `{X₁, [X₀, X₁]}`: the determinant of the pair is `−ξ⁴`.
pub fn hormander_rank(t: TransformedState, p: &SdeParamsRef, tol: f64) -> u8 {
    let br = bracket(t, p);
    // det [[0, a], [1, b]] = −a
    if br.a.abs() > tol {
        2
    } else {
        1
    }
}

/// Threshold beyond which `s ↦ ℒf_L(sξ₀, sη₀)` is strictly decreasing.
///
/// With `a = δξ₀⁵η₀`, `b = γξ₀⁸η₀²`, `c = Dξ₀⁴`, the derivative is
/// `s³(4c + 6as² − 10bs⁶)`, negative once `5bs⁶ ≥ 4c` and `5bs⁴ > 6|a|`.
/// Returns `None` when `b = 0` (the ray lies on an axis).
pub fn ray_decrease_threshold(xi0: f64, eta0: f64, p: &SdeParamsRef) -> Option<f64> {
    let xi4 = xi0.powi(4);
    let a = p.delta * xi4 * xi0 * eta0;
    let b = p.gamma * xi4 * xi4 * eta0 * eta0;
    let c = p.d * xi4;
    if !(b > 0.0) {
        return None;
    }
    let s1 = (4.0 * c / (5.0 * b)).powf(1.0 / 6.0);
    let s2 = (6.0 * a.abs() / (5.0 * b)).powf(0.25) * (1.0 + 1e-12);
    Some(s1.max(s2))
}
