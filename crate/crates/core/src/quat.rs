//! Quaternion algebra with basis `e_i e_j = -δ_ij + ε_ijk e_k`.
//!
//! Three types share the storage layout but not the contract: [`Quat`] is a
//! general quaternion, [`PureQuat`] has no scalar part (vectors, fields,
//! controls) and [`UnitQuat`] has modulus one (rotations). A rotation by
//! angle θ about `n̂` is `exp((θ/2) n̂)` acting as `p ↦ u p ū`.

use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuatError {
    #[error("logarithm of -1 has no defined axis; supply a convention axis")]
    AmbiguousAxis,
    #[error("cannot normalize a quaternion of modulus {0:e}")]
    Degenerate(f64),
}

/// General quaternion `w + x e1 + y e2 + z e3`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Quaternion with identically zero scalar part; behaves as a 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PureQuat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Modulus-one quaternion. Fields are private so the norm invariant holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quat {
    pub const ONE: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };
    pub const ZERO: Quat = Quat { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_parts(w: f64, v: PureQuat) -> Self {
        Quat { w, x: v.x, y: v.y, z: v.z }
    }

    pub fn scalar(&self) -> f64 {
        self.w
    }

    pub fn vector(&self) -> PureQuat {
        PureQuat::new(self.x, self.y, self.z)
    }

    pub fn conj(&self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `½(p q̄ + q p̄)`, which is the Euclidean dot product of the four components.
    pub fn dot(&self, other: &Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// `½(pq − qp)`. Only the vector parts contribute.
    pub fn wedge(&self, other: &Quat) -> Quat {
        Quat::from_parts(0.0, self.vector().cross(&other.vector()))
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn scale(&self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Largest componentwise difference.
    pub fn max_abs_diff(&self, other: &Quat) -> f64 {
        (self.w - other.w)
            .abs()
            .max((self.x - other.x).abs())
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, q: Quat) -> Quat {
        let p = self;
        Quat {
            w: p.w * q.w - p.x * q.x - p.y * q.y - p.z * q.z,
            x: p.w * q.x + p.x * q.w + p.y * q.z - p.z * q.y,
            y: p.w * q.y - p.x * q.z + p.y * q.w + p.z * q.x,
            z: p.w * q.z + p.x * q.y - p.y * q.x + p.z * q.w,
        }
    }
}

impl Add for Quat {
    type Output = Quat;
    fn add(self, q: Quat) -> Quat {
        Quat::new(self.w + q.w, self.x + q.x, self.y + q.y, self.z + q.z)
    }
}

impl Sub for Quat {
    type Output = Quat;
    fn sub(self, q: Quat) -> Quat {
        Quat::new(self.w - q.w, self.x - q.x, self.y - q.y, self.z - q.z)
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Quat {
    type Output = Quat;
    fn mul(self, s: f64) -> Quat {
        self.scale(s)
    }
}

impl From<PureQuat> for Quat {
    fn from(p: PureQuat) -> Quat {
        Quat::from_parts(0.0, p)
    }
}

impl From<UnitQuat> for Quat {
    fn from(u: UnitQuat) -> Quat {
        Quat::new(u.w, u.x, u.y, u.z)
    }
}

impl From<f64> for Quat {
    fn from(w: f64) -> Quat {
        Quat::new(w, 0.0, 0.0, 0.0)
    }
}

impl PureQuat {
    pub const ZERO: PureQuat = PureQuat { x: 0.0, y: 0.0, z: 0.0 };
    pub const E1: PureQuat = PureQuat { x: 1.0, y: 0.0, z: 0.0 };
    pub const E2: PureQuat = PureQuat { x: 0.0, y: 1.0, z: 0.0 };
    pub const E3: PureQuat = PureQuat { x: 0.0, y: 0.0, z: 1.0 };
    /// The static triad `e_1, e_2, e_3`.
    pub const BASIS: [PureQuat; 3] = [Self::E1, Self::E2, Self::E3];

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        PureQuat { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        PureQuat::new(a[0], a[1], a[2])
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(&self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("component index {i} out of range"),
        }
    }

    pub fn dot(&self, o: &PureQuat) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Wedge product of pure quaternions, i.e. the cross product.
    pub fn cross(&self, o: &PureQuat) -> PureQuat {
        PureQuat::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: f64) -> PureQuat {
        PureQuat::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector along `self`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<PureQuat> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for PureQuat {
    type Output = PureQuat;
    fn add(self, o: PureQuat) -> PureQuat {
        PureQuat::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for PureQuat {
    fn add_assign(&mut self, o: PureQuat) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for PureQuat {
    type Output = PureQuat;
    fn sub(self, o: PureQuat) -> PureQuat {
        PureQuat::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for PureQuat {
    fn sub_assign(&mut self, o: PureQuat) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl Neg for PureQuat {
    type Output = PureQuat;
    fn neg(self) -> PureQuat {
        PureQuat::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for PureQuat {
    type Output = PureQuat;
    fn mul(self, s: f64) -> PureQuat {
        self.scale(s)
    }
}

impl Mul<PureQuat> for f64 {
    type Output = PureQuat;
    fn mul(self, p: PureQuat) -> PureQuat {
        p.scale(self)
    }
}

/// Full quaternion product of two pure quaternions: `−p·q + p∧q`.
impl Mul for PureQuat {
    type Output = Quat;
    fn mul(self, o: PureQuat) -> Quat {
        Quat::from_parts(-self.dot(&o), self.cross(&o))
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes `q`; fails for (near) zero or non-finite input.
    pub fn normalize(q: Quat) -> Result<UnitQuat, QuatError> {
        let n = q.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(QuatError::Degenerate(n));
        }
        let q = q.scale(1.0 / n);
        Ok(UnitQuat { w: q.w, x: q.x, y: q.y, z: q.z })
    }

    /// Re-projects onto the unit sphere. Used after products to stop drift.
    pub fn renormalized(self) -> UnitQuat {
        let n = Quat::from(self).norm();
        UnitQuat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    /// Rotation by `angle` about `axis` (normalized internally).
    pub fn from_axis_angle(axis: PureQuat, angle: f64) -> Result<UnitQuat, QuatError> {
        let a = axis.normalized().ok_or(QuatError::Degenerate(axis.norm()))?;
        Ok(qexp(a.scale(angle / 2.0)))
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn scalar(&self) -> f64 {
        self.w
    }

    pub fn vector(&self) -> PureQuat {
        PureQuat::new(self.x, self.y, self.z)
    }

    pub fn conj(&self) -> UnitQuat {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn negate(&self) -> UnitQuat {
        UnitQuat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn as_quat(&self) -> Quat {
        Quat::from(*self)
    }

    /// Lower-level rotation `u p ū` without forming full quaternion products.
    pub fn rotate(&self, p: &PureQuat) -> PureQuat {
        let v = self.vector();
        let t = v.cross(p).scale(2.0);
        *p + t.scale(self.w) + v.cross(&t)
    }
}

impl<'de> Deserialize<'de> for UnitQuat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let q = Quat::deserialize(d)?;
        UnitQuat::normalize(q).map_err(serde::de::Error::custom)
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, o: UnitQuat) -> UnitQuat {
        let q = Quat::from(self) * Quat::from(o);
        UnitQuat { w: q.w, x: q.x, y: q.y, z: q.z }.renormalized()
    }
}

impl MulAssign for UnitQuat {
    fn mul_assign(&mut self, o: UnitQuat) {
        *self = *self * o;
    }
}

pub fn qmul(p: Quat, q: Quat) -> Quat {
    p * q
}

pub fn qconj(q: Quat) -> Quat {
    q.conj()
}

pub fn qdot(p: Quat, q: Quat) -> f64 {
    p.dot(&q)
}

pub fn qwedge(p: Quat, q: Quat) -> Quat {
    p.wedge(&q)
}

/// `exp(p) = cos|p| + p̂ sin|p|`.
pub fn qexp(p: PureQuat) -> UnitQuat {
    let a2 = p.norm_sqr();
    let a = a2.sqrt();
    let (c, sinc) = if a < 1e-6 {
        (1.0 - a2 / 2.0 + a2 * a2 / 24.0, 1.0 - a2 / 6.0 + a2 * a2 / 120.0)
    } else {
        (a.cos(), a.sin() / a)
    };
    UnitQuat { w: c, x: p.x * sinc, y: p.y * sinc, z: p.z * sinc }.renormalized()
}

/// Principal logarithm with `|log u| ≤ π`.
pub fn qlog(u: UnitQuat) -> Result<PureQuat, QuatError> {
    let v = u.vector();
    let s = v.norm();
    let angle = s.atan2(u.w);
    if s < 1e-15 {
        if u.w < 0.0 {
            return Err(QuatError::AmbiguousAxis);
        }
        return Ok(v);
    }
    Ok(v.scale(angle / s))
}

pub fn rotate(u: UnitQuat, p: PureQuat) -> PureQuat {
    u.rotate(&p)
}
