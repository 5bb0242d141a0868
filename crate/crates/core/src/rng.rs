//! Counter-based Gaussian streams.
//!
//! Every Gaussian draw is a pure function of `(seed, domain, path_index, counter)`,
//! computed with the Philox4x32-10 block function. Paths never share generator
//! state, so ensembles give identical results for any worker count or order.

#[allow(unused_imports)] // inherent f64 methods shadow these when std is linked
use num_traits::Float;
use core::f64::consts::PI;


const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with ten rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Philox4x32 {
    key: [u32; 2],
}

impl Philox4x32 {
    pub fn new(key: u64) -> Self {
        Self { key: [key as u32, (key >> 32) as u32] }
    }

    pub fn block(&self, ctr: [u32; 4]) -> [u32; 4] {
        let mut c = ctr;
        let mut k = self.key;
        for round in 0..10 {
            if round > 0 {
                k[0] = k[0].wrapping_add(W0);
                k[1] = k[1].wrapping_add(W1);
            }
            let (hi0, lo0) = mulhilo(M0, c[0]);
            let (hi1, lo1) = mulhilo(M1, c[2]);
            c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        }
        c
    }
}

/// SplitMix64 finalizer, used to derive keys and fingerprints.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream key from a user seed and a domain tag.
///
/// Domain `0` keys the generator with the seed itself; other domains separate
/// independent uses of the same seed (segments of an extended path, MC checks).
pub fn derive_key(seed: u64, domain: u64) -> u64 {
    if domain == 0 {
        seed
    } else {
        mix64(seed ^ mix64(domain))
    }
}

#[inline]
fn unit_open(bits: u64) -> f64 {
    // (0, 1]
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn unit_closed_open(bits: u64) -> f64 {
    // [0, 1)
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draws addressed by a 64-bit counter within one path.
#[derive(Debug, Clone)]
pub struct NormalStream {
    gen: Philox4x32,
    key: u64,
    path: u64,
    cached: Option<(u64, [f64; 2])>,
    draws: u64,
}

impl NormalStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        Self::with_domain(seed, 0, path_index)
    }

    pub fn with_domain(seed: u64, domain: u64, path_index: u64) -> Self {
        let key = derive_key(seed, domain);
        Self { gen: Philox4x32::new(key), key, path: path_index, cached: None, draws: 0 }
    }

    fn raw(&self, counter: u64) -> [u32; 4] {
        self.gen.block([counter as u32, (counter >> 32) as u32, self.path as u32, (self.path >> 32) as u32])
    }

    /// Two independent uniforms, the first in `(0, 1]`, the second in `[0, 1)`.
    pub fn uniforms(&mut self, counter: u64) -> (f64, f64) {
        let b = self.raw(counter);
        self.draws += 1;
        let a = (u64::from(b[0]) << 32) | u64::from(b[1]);
        let c = (u64::from(b[2]) << 32) | u64::from(b[3]);
        (unit_open(a), unit_closed_open(c))
    }

    /// Two independent standard normals (Box–Muller on one Philox block).
    pub fn pair(&mut self, counter: u64) -> (f64, f64) {
        if let Some((c, v)) = self.cached {
            if c == counter {
                return (v[0], v[1]);
            }
        }
        let (u1, u2) = self.uniforms(counter);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        let v = [r * c, r * s];
        self.cached = Some((counter, v));
        (v[0], v[1])
    }

    /// The `index`-th normal of the stream: lane `index & 1` of block `index >> 1`.
    pub fn normal(&mut self, index: u64) -> f64 {
        let (a, b) = self.pair(index >> 1);
        if index & 1 == 0 {
            a
        } else {
            b
        }
    }

    /// Identifies the stream and how much of it was consumed.
    pub fn fingerprint(&self) -> u64 {
        mix64(self.key ^ mix64(self.path) ^ mix64(self.draws.wrapping_add(0x5EED)))
    }

    pub fn path_index(&self) -> u64 {
        self.path
    }
}
