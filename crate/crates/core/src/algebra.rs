//! SU(2) and U(1) group arithmetic and Haar sampling.
//!
//! SU(2) elements are unit quaternions `w + x i + y j + z k`. The quaternion
//! product agrees with the 2×2 matrix product under the standard embedding,
//! so holonomies compose in matrix order and `Tr U = 2w`.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Largest `|‖q‖² − 1|` accepted (and silently renormalized) on input.
pub const INPUT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("quaternion norm² {norm_sq} deviates from 1 by more than {INPUT_NORM_TOLERANCE}")]
    NotUnit { norm_sq: f64 },
    #[error("non-finite group coordinate")]
    NonFinite,
}

/// Minimal group interface shared by the two structure groups.
pub trait Group: Copy + fmt::Debug + Send + Sync + 'static {
    fn identity() -> Self;
    fn compose(&self, other: &Self) -> Self;
    fn inverse(&self) -> Self;
}

/// A unit quaternion representing an element of SU(2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SU2 {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl SU2 {
    pub const IDENTITY: SU2 = SU2 { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds an element from raw coordinates, renormalizing small drift.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, AlgebraError> {
        if ![w, x, y, z].iter().all(|c| c.is_finite()) {
            return Err(AlgebraError::NonFinite);
        }
        let norm_sq = w * w + x * x + y * y + z * z;
        if (norm_sq - 1.0).abs() > INPUT_NORM_TOLERANCE {
            return Err(AlgebraError::NotUnit { norm_sq });
        }
        Ok(Self::normalized(w, x, y, z))
    }

    fn normalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        SU2 { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    /// `exp(φ n·(i,j,k))` for a unit axis `n`; traces to `2 cos φ`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Result<Self, AlgebraError> {
        let len = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(len.is_finite() && len > 0.0 && angle.is_finite()) {
            return Err(AlgebraError::NonFinite);
        }
        let (s, c) = angle.sin_cos();
        Ok(Self::normalized(c, s * axis[0] / len, s * axis[1] / len, s * axis[2] / len))
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }
    pub fn coords(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm_sq(&self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    /// Full matrix trace `Tr U = 2w`.
    pub fn trace(&self) -> f64 {
        2.0 * self.w
    }

    /// The quaternion conjugate, which is the group inverse.
    pub fn inverse(&self) -> Self {
        SU2 { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// The 2×2 complex matrix `[[w + i x, y + i z], [−y + i z, w − i x]]`.
    pub fn to_matrix(&self) -> [[Complex64; 2]; 2] {
        [
            [Complex64::new(self.w, self.x), Complex64::new(self.y, self.z)],
            [Complex64::new(-self.y, self.z), Complex64::new(self.w, -self.x)],
        ]
    }

    pub fn distance(&self, other: &Self) -> f64 {
        let d = [self.w - other.w, self.x - other.x, self.y - other.y, self.z - other.z];
        d.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl Default for SU2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for SU2 {
    type Output = SU2;

    fn mul(self, rhs: SU2) -> SU2 {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        let (e, f, g, h) = (rhs.w, rhs.x, rhs.y, rhs.z);
        let raw = SU2 {
            w: a * e - b * f - c * g - d * h,
            x: a * f + b * e + c * h - d * g,
            y: a * g - b * h + c * e + d * f,
            z: a * h + b * g - c * f + d * e,
        };
        // renormalize only once drift is visible, so exact products stay exact
        if (raw.norm_sq() - 1.0).abs() > 8.0 * f64::EPSILON {
            SU2::normalized(raw.w, raw.x, raw.y, raw.z)
        } else {
            raw
        }
    }
}

impl Group for SU2 {
    fn identity() -> Self {
        Self::IDENTITY
    }
    fn compose(&self, other: &Self) -> Self {
        *self * *other
    }
    fn inverse(&self) -> Self {
        SU2::inverse(self)
    }
}

/// Free-function form of the quaternion product.
pub fn su2_mul(a: SU2, b: SU2) -> SU2 {
    a * b
}

pub fn su2_trace(u: SU2) -> f64 {
    u.trace()
}

/// An element of U(1), stored as its angle in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct U1 {
    theta: f64,
}

impl U1 {
    pub const IDENTITY: U1 = U1 { theta: 0.0 };

    pub fn from_angle(theta: f64) -> Self {
        U1 { theta: canonical_angle(theta) }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn inverse(&self) -> Self {
        U1::from_angle(-self.theta)
    }

    pub fn conj(&self) -> Self {
        self.inverse()
    }

    /// `e^{iθ}`; its modulus is one by construction of the representation.
    pub fn to_complex(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.theta)
    }

    /// Distance on the circle, in `[0, π]`.
    pub fn distance(&self, other: &Self) -> f64 {
        let d = (self.theta - other.theta).abs();
        d.min(TAU - d)
    }
}

impl Default for U1 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for U1 {
    type Output = U1;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: U1) -> U1 {
        U1::from_angle(self.theta + rhs.theta)
    }
}

impl Group for U1 {
    fn identity() -> Self {
        Self::IDENTITY
    }
    fn compose(&self, other: &Self) -> Self {
        *self * *other
    }
    fn inverse(&self) -> Self {
        U1::inverse(self)
    }
}

/// Reduces an angle to `[0, 2π)`.
pub fn canonical_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A holonomy value of either flavor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GroupElement {
    Su2(SU2),
    U1(U1),
}

impl GroupElement {
    pub fn flavor(&self) -> Flavor {
        match self {
            GroupElement::Su2(_) => Flavor::Su2,
            GroupElement::U1(_) => Flavor::U1,
        }
    }

    pub fn as_su2(&self) -> Option<SU2> {
        match self {
            GroupElement::Su2(u) => Some(*u),
            GroupElement::U1(_) => None,
        }
    }

    pub fn as_u1(&self) -> Option<U1> {
        match self {
            GroupElement::U1(u) => Some(*u),
            GroupElement::Su2(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    Su2,
    U1,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flavor::Su2 => f.write_str("su2"),
            Flavor::U1 => f.write_str("u1"),
        }
    }
}

/// Deterministic random stream addressed by `(seed, stream id)`.
///
/// Each worker owns its stream; derived streams are used to split work
/// without sharing state.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A fresh stream for sub-task `index`, independent of this stream's
    /// current position.
    pub fn derive(&self, index: u64) -> RngStream {
        let mixed = splitmix64(self.stream ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)));
        RngStream::new(self.seed, mixed)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Haar-distributed SU(2) element: a normalized 4-dimensional Gaussian.
pub fn haar_su2<R: Rng + ?Sized>(rng: &mut R) -> SU2 {
    loop {
        let g: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n2: f64 = g.iter().map(|c| c * c).sum();
        if n2 > 1e-24 {
            return SU2::normalized(g[0], g[1], g[2], g[3]);
        }
    }
}

/// Haar-distributed U(1) element.
pub fn haar_u1<R: Rng + ?Sized>(rng: &mut R) -> U1 {
    U1::from_angle(rng.random::<f64>() * TAU)
}
