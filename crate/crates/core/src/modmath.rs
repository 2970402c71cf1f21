//! Exact arithmetic in Z_N and the `ax + b mod q` hash family used to index
//! the Bloom filter.
//!
//! Two layers are exposed. [`Field`] is a `Copy` handle on a prime modulus
//! that operates on raw `u64` residues; the bulk paths (sharing a whole
//! filter, summing share vectors) use it directly. [`FieldElement`] carries
//! its modulus alongside the value and checks that operands agree, which is
//! what the scalar APIs hand out.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest modulus accepted. Products of two residues are formed in `u128`,
/// so this is a representation limit, not an overflow one.
pub const MAX_MODULUS: u64 = 1 << 62;

/// 2^31 - 1.
pub const DEFAULT_MODULUS: u64 = 2_147_483_647;

/// A prime modulus together with the arithmetic on its residues.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Field {
    modulus: u64,
}

impl TryFrom<u64> for Field {
    type Error = Error;

    fn try_from(modulus: u64) -> Result<Self> {
        Field::new(modulus)
    }
}

impl From<Field> for u64 {
    fn from(f: Field) -> u64 {
        f.modulus
    }
}

impl Default for Field {
    fn default() -> Self {
        Field {
            modulus: DEFAULT_MODULUS,
        }
    }
}

impl Field {
    /// Builds a field, rejecting composite or out-of-range moduli.
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus > MAX_MODULUS {
            return Err(Error::Config(format!(
                "modulus {modulus} exceeds the supported limit 2^62"
            )));
        }
        if !is_prime(modulus) {
            return Err(Error::Config(format!("modulus {modulus} is not prime")));
        }
        Ok(Field { modulus })
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.modulus
    }

    /// ℓ = ceil(log2 N), the bit width used when counting traffic.
    pub fn bits(self) -> u32 {
        64 - (self.modulus - 1).leading_zeros()
    }

    #[inline]
    pub fn reduce(self, x: u64) -> u64 {
        x % self.modulus
    }

    #[inline]
    pub fn reduce_i128(self, x: i128) -> u64 {
        x.rem_euclid(self.modulus as i128) as u64
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.modulus && b < self.modulus);
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        debug_assert!(a < self.modulus && b < self.modulus);
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    pub fn inv(self, a: u64) -> Result<u64> {
        let a = self.reduce(a);
        if a == 0 {
            return Err(Error::Domain("zero has no multiplicative inverse".into()));
        }
        let (mut old_r, mut r) = (a as i128, self.modulus as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        debug_assert_eq!(old_r, 1);
        Ok(self.reduce_i128(old_s))
    }

    pub fn pow(self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.modulus;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Lifts a raw value into a checked element.
    pub fn element(self, value: u64) -> Result<FieldElement> {
        FieldElement::new(value, self)
    }

    /// Reduces first, so never fails.
    pub fn elem(self, value: u64) -> FieldElement {
        FieldElement {
            value: self.reduce(value),
            field: self,
        }
    }

    /// Horner evaluation of `coeffs[0] + coeffs[1] x + ...`.
    pub fn eval_poly(self, coeffs: &[u64], x: u64) -> u64 {
        let x = self.reduce(x);
        coeffs
            .iter()
            .rev()
            .fold(0, |acc, &c| self.add(self.mul(acc, x), c))
    }
}

/// A residue in `[0, N)` tagged with its modulus.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldElement {
    value: u64,
    field: Field,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.field.modulus)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl FieldElement {
    pub fn new(value: u64, field: Field) -> Result<Self> {
        if value >= field.modulus {
            return Err(Error::Domain(format!(
                "value {value} outside Z_{}",
                field.modulus
            )));
        }
        Ok(FieldElement { value, field })
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.value
    }

    #[inline]
    pub fn field(self) -> Field {
        self.field
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.field.modulus
    }

    pub fn zero(field: Field) -> Self {
        FieldElement { value: 0, field }
    }

    pub fn one(field: Field) -> Self {
        field.elem(1)
    }

    fn same_field(self, other: FieldElement) -> Result<Field> {
        if self.field != other.field {
            return Err(Error::Config(format!(
                "modulus mismatch: {} vs {}",
                self.field.modulus, other.field.modulus
            )));
        }
        Ok(self.field)
    }
}

pub fn mod_add(x: FieldElement, y: FieldElement) -> Result<FieldElement> {
    let f = x.same_field(y)?;
    Ok(FieldElement {
        value: f.add(x.value, y.value),
        field: f,
    })
}

pub fn mod_sub(x: FieldElement, y: FieldElement) -> Result<FieldElement> {
    let f = x.same_field(y)?;
    Ok(FieldElement {
        value: f.sub(x.value, y.value),
        field: f,
    })
}

pub fn mod_mul(x: FieldElement, y: FieldElement) -> Result<FieldElement> {
    let f = x.same_field(y)?;
    Ok(FieldElement {
        value: f.mul(x.value, y.value),
        field: f,
    })
}

pub fn mod_inv(x: FieldElement) -> Result<FieldElement> {
    Ok(FieldElement {
        value: x.field.inv(x.value)?,
        field: x.field,
    })
}

#[inline]
fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin. The first twelve primes as witnesses are
/// sufficient for every n < 2^64.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `>= n`. Callers wanting "strictly greater than β" pass β + 1.
pub fn smallest_prime_geq(n: u64) -> Result<u64> {
    if n > MAX_MODULUS {
        return Err(Error::Param(format!("{n} exceeds the supported range 2^62")));
    }
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    Ok(c)
}

/// One member of the `((a x + b) mod q) mod β` family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HashSpec {
    pub a: u64,
    pub b: u64,
    pub q: u64,
}

impl HashSpec {
    pub fn new(a: u64, b: u64, q: u64) -> Result<Self> {
        let h = HashSpec { a, b, q };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_prime(self.q) {
            return Err(Error::Param(format!("hash modulus {} is not prime", self.q)));
        }
        if !(1..self.q).contains(&self.a) || !(1..self.q).contains(&self.b) {
            return Err(Error::Param(format!(
                "hash coefficients ({}, {}) must lie in [1, {})",
                self.a, self.b, self.q
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn universal_hash(x: u64, h: &HashSpec, beta: u64) -> u64 {
    let v = (h.a as u128 * x as u128 + h.b as u128) % h.q as u128;
    (v % beta as u128) as u64
}
