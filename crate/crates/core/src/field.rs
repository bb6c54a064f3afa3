//! Arithmetic in GF(2^u) for u in {4, 8, 16}.
//!
//! Elements are stored as `u16` bit patterns: bit `i` is the coefficient of
//! `x^i` in the polynomial representation. Addition is XOR. Multiplication
//! goes through log/antilog tables built once per [`FieldSpec`]; the tables
//! are derived from [`clmul_reduce`], the carry-less multiply-and-reduce
//! reference, and must agree with it bit for bit.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("unsupported field degree {0} (expected 4, 8 or 16)")]
    UnsupportedDegree(u32),
    #[error("reduction polynomial {poly:#x} does not have degree {degree}")]
    WrongPolyDegree { degree: u32, poly: u32 },
    #[error("reduction polynomial {0:#x} is reducible over GF(2)")]
    Reducible(u32),
    #[error("value {value} is out of range for GF(2^{degree})")]
    OutOfRange { value: u32, degree: u32 },
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("unknown field name {0:?} (expected gf16, gf256 or gf65536)")]
    UnknownName(String),
}

/// Extension degree plus reduction polynomial (leading `x^u` term included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FieldSpec {
    degree: u32,
    poly: u32,
}

impl FieldSpec {
    /// x^4 + x + 1
    pub const GF16: FieldSpec = FieldSpec {
        degree: 4,
        poly: 0b1_0011,
    };
    /// x^8 + x^4 + x^3 + x^2 + 1
    pub const GF256: FieldSpec = FieldSpec { degree: 8, poly: 0x11d };
    /// x^16 + x^12 + x^3 + x + 1
    pub const GF65536: FieldSpec = FieldSpec {
        degree: 16,
        poly: 0x1100b,
    };

    pub fn new(degree: u32, poly: u32) -> Result<Self, FieldError> {
        if !matches!(degree, 4 | 8 | 16) {
            return Err(FieldError::UnsupportedDegree(degree));
        }
        if poly_degree(poly) != Some(degree) {
            return Err(FieldError::WrongPolyDegree { degree, poly });
        }
        if !is_irreducible(poly) {
            return Err(FieldError::Reducible(poly));
        }
        Ok(FieldSpec { degree, poly })
    }

    /// The default field of the given degree.
    pub fn standard(degree: u32) -> Result<Self, FieldError> {
        match degree {
            4 => Ok(Self::GF16),
            8 => Ok(Self::GF256),
            16 => Ok(Self::GF65536),
            d => Err(FieldError::UnsupportedDegree(d)),
        }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn reduction_poly(&self) -> u32 {
        self.poly
    }

    /// Number of elements, q = 2^u.
    pub fn order(&self) -> u32 {
        1 << self.degree
    }

    /// Bytes used to serialize one element: ceil(u / 8).
    pub fn symbol_bytes(&self) -> usize {
        self.degree.div_ceil(8) as usize
    }

    pub fn is_standard(&self) -> bool {
        Self::standard(self.degree).map(|s| s == *self).unwrap_or(false)
    }

    pub fn name(&self) -> String {
        format!("gf{}", self.order())
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_standard() {
            write!(f, "gf{}", self.order())
        } else {
            write!(f, "gf{}:{:#x}", self.order(), self.poly)
        }
    }
}

/// Accepts `gf16`, `gf256`, `gf65536`, optionally followed by `:<poly>` with
/// the polynomial in hex (`0x` prefix) or decimal.
impl FromStr for FieldSpec {
    type Err = FieldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, poly) = match lower.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (lower.as_str(), None),
        };
        let degree = match name {
            "gf16" => 4,
            "gf256" => 8,
            "gf65536" => 16,
            _ => return Err(FieldError::UnknownName(s.to_string())),
        };
        match poly {
            None => Self::standard(degree),
            Some(p) => {
                let parsed = if let Some(hex) = p.strip_prefix("0x") {
                    u32::from_str_radix(hex, 16)
                } else {
                    p.parse()
                };
                let poly = parsed.map_err(|_| FieldError::UnknownName(s.to_string()))?;
                Self::new(degree, poly)
            }
        }
    }
}

impl TryFrom<String> for FieldSpec {
    type Error = FieldError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FieldSpec> for String {
    fn from(spec: FieldSpec) -> String {
        spec.to_string()
    }
}

/// An element of GF(2^u); only meaningful together with its [`Field`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElement(pub u16);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn value(self) -> u16 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

fn poly_degree(p: u32) -> Option<u32> {
    (p != 0).then(|| 31 - p.leading_zeros())
}

/// Remainder of `a` divided by `m` as polynomials over GF(2).
fn poly_rem(mut a: u32, m: u32) -> u32 {
    let dm = poly_degree(m).expect("division by zero polynomial");
    while let Some(da) = poly_degree(a) {
        if da < dm {
            break;
        }
        a ^= m << (da - dm);
    }
    a
}

/// Exhaustive trial division by every polynomial of degree 1..=deg/2.
fn is_irreducible(poly: u32) -> bool {
    let Some(deg) = poly_degree(poly) else {
        return false;
    };
    if deg == 0 {
        return false;
    }
    for d in 1..=deg / 2 {
        for divisor in (1u32 << d)..(1u32 << (d + 1)) {
            if poly_rem(poly, divisor) == 0 {
                return false;
            }
        }
    }
    true
}

/// Reference multiplication: carry-less product of `a` and `b`, reduced
/// modulo the reduction polynomial of `spec`. Slow, table-free; used to build and check
/// the tables.
pub fn clmul_reduce(spec: &FieldSpec, a: u32, b: u32) -> u32 {
    let mut product = 0u64;
    for bit in 0..32 {
        if (b >> bit) & 1 == 1 {
            product ^= (a as u64) << bit;
        }
    }
    let m = spec.poly as u64;
    let dm = spec.degree;
    for bit in (dm..64).rev() {
        if (product >> bit) & 1 == 1 {
            product ^= m << (bit - dm);
        }
    }
    product as u32
}

fn prime_factors(mut n: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            out.push(p);
            while n.is_multiple_of(p) {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn reference_pow(spec: &FieldSpec, base: u32, mut e: u32) -> u32 {
    let mut acc = 1;
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc = clmul_reduce(spec, acc, b);
        }
        b = clmul_reduce(spec, b, b);
        e >>= 1;
    }
    acc
}

/// Smallest element of multiplicative order q - 1.
fn find_generator(spec: &FieldSpec) -> u32 {
    let group = spec.order() - 1;
    let factors = prime_factors(group);
    (2..spec.order())
        .find(|&g| factors.iter().all(|p| reference_pow(spec, g, group / p) != 1))
        .expect("multiplicative group of a finite field is cyclic")
}

/// GF(2^u) with precomputed log/antilog tables. Immutable after construction.
pub struct Field {
    spec: FieldSpec,
    /// exp[i] = g^i, doubled in length so exp[log a + log b] needs no reduction.
    exp: Vec<u16>,
    /// log[a] for a != 0; log[0] is unused.
    log: Vec<u16>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field").field("spec", &self.spec).finish()
    }
}

impl Field {
    pub fn new(spec: FieldSpec) -> Field {
        let q = spec.order() as usize;
        let generator = find_generator(&spec);
        let mut exp = vec![0u16; 2 * (q - 1)];
        let mut log = vec![0u16; q];
        let mut x = 1u32;
        for i in 0..q - 1 {
            exp[i] = x as u16;
            exp[i + q - 1] = x as u16;
            log[x as usize] = i as u16;
            x = clmul_reduce(&spec, x, generator);
        }
        debug_assert_eq!(x, 1);
        Field { spec, exp, log }
    }

    /// Process-wide shared instance; tables are built on first use.
    pub fn shared(spec: FieldSpec) -> Arc<Field> {
        static CACHE: OnceLock<Mutex<HashMap<FieldSpec, Arc<Field>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(spec).or_insert_with(|| Arc::new(Field::new(spec))).clone()
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn order(&self) -> u32 {
        self.spec.order()
    }

    /// Checked constructor for elements of this field.
    pub fn element(&self, value: u32) -> Result<FieldElement, FieldError> {
        if value < self.order() {
            Ok(FieldElement(value as u16))
        } else {
            Err(FieldError::OutOfRange {
                value,
                degree: self.spec.degree,
            })
        }
    }

    pub fn contains(&self, a: FieldElement) -> bool {
        (a.0 as u32) < self.order()
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 == 0 || b.0 == 0 {
            return FieldElement::ZERO;
        }
        let idx = self.log[a.0 as usize] as usize + self.log[b.0 as usize] as usize;
        FieldElement(self.exp[idx])
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        let group = self.order() as usize - 1;
        let l = self.log[a.0 as usize] as usize;
        Ok(FieldElement(self.exp[(group - l) % group]))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: FieldElement, mut e: u64) -> FieldElement {
        let mut acc = FieldElement::ONE;
        let mut base = a;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// `dst[t] += scale * src[t]` for every position.
    pub fn mul_add_slice(&self, dst: &mut [FieldElement], src: &[FieldElement], scale: FieldElement) {
        debug_assert_eq!(dst.len(), src.len());
        if scale.is_zero() {
            return;
        }
        if scale == FieldElement::ONE {
            for (d, s) in dst.iter_mut().zip(src) {
                d.0 ^= s.0;
            }
            return;
        }
        let ls = self.log[scale.0 as usize] as usize;
        for (d, s) in dst.iter_mut().zip(src) {
            if s.0 != 0 {
                d.0 ^= self.exp[ls + self.log[s.0 as usize] as usize];
            }
        }
    }

    /// `dst[t] = scale * dst[t]` for every position.
    pub fn scale_slice(&self, dst: &mut [FieldElement], scale: FieldElement) {
        if scale.is_zero() {
            dst.fill(FieldElement::ZERO);
            return;
        }
        let ls = self.log[scale.0 as usize] as usize;
        for d in dst.iter_mut() {
            if d.0 != 0 {
                d.0 = self.exp[ls + self.log[d.0 as usize] as usize];
            }
        }
    }

    /// Uniform element, over all of GF(q) or over GF(q) \ {0}.
    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R, nonzero: bool) -> FieldElement {
        let low = u32::from(nonzero);
        FieldElement(rng.gen_range(low..self.order()) as u16)
    }
}
