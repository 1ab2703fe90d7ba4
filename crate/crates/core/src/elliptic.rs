//! Complete elliptic integrals and Jacobi elliptic functions.
//!
//! Both are computed from the arithmetic-geometric mean of `1` and the
//! complementary modulus `k' = sqrt(1 - k^2)`:
//!
//! ```text
//! K(k) = pi / (2 a_N)
//! E(k) = K(k) * (1 - sum_{n>=0} 2^(n-1) c_n^2),   c_0 = k
//! ```
//!
//! The Jacobi functions use the descending Landen recurrence on the
//! amplitude, `phi_{n-1} = (phi_n + asin(c_n / a_n * sin phi_n)) / 2`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{CnoidalError, Result};

const AGM_REL_TOL: f64 = 1e-15;
const AGM_MAX_ITER: usize = 40;

/// Largest admissible `k^2`. Closer to 1 the waves approach the solitary
/// limit and `K(k)` loses digits, so such moduli are rejected.
pub const MAX_K_SQUARED: f64 = 1.0 - 1e-12;

/// Elliptic modulus `k`, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Modulus(f64);

impl Modulus {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() || k <= 0.0 || k >= 1.0 {
            return Err(CnoidalError::domain(format!(
                "elliptic modulus must lie in (0,1), got {k}"
            )));
        }
        if k * k > MAX_K_SQUARED {
            return Err(CnoidalError::domain(format!(
                "elliptic modulus {k} too close to 1 (k^2 > 1 - 1e-12)"
            )));
        }
        Ok(Modulus(k))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `k'^2 = 1 - k^2`.
    #[inline]
    pub fn complementary_squared(self) -> f64 {
        (1.0 - self.0) * (1.0 + self.0)
    }

    /// Complementary modulus `k' = sqrt(1 - k^2)`.
    #[inline]
    pub fn complementary(self) -> f64 {
        self.complementary_squared().sqrt()
    }
}

impl TryFrom<f64> for Modulus {
    type Error = CnoidalError;

    fn try_from(k: f64) -> Result<Self> {
        Modulus::new(k)
    }
}

/// `(K(k), E(k))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticPair {
    #[serde(rename = "K")]
    pub big_k: f64,
    #[serde(rename = "E")]
    pub big_e: f64,
}

/// Values of `sn`, `cn`, `dn` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiTriple {
    pub sn: f64,
    pub cn: f64,
    pub dn: f64,
}

/// Complete elliptic integrals of the first and second kind.
pub fn complete_elliptic(k: Modulus) -> EllipticPair {
    let kv = k.value();
    let mut a = 1.0_f64;
    let mut b = k.complementary();
    // 2^(n-1) c_n^2, starting from n = 0 with c_0 = k.
    let mut weight = 0.5_f64;
    let mut sum = weight * kv * kv;
    for _ in 0..AGM_MAX_ITER {
        if (a - b).abs() < AGM_REL_TOL * a {
            break;
        }
        let c = 0.5 * (a - b);
        let a_next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = a_next;
        weight *= 2.0;
        sum += weight * c * c;
    }
    let big_k = PI / (2.0 * a);
    EllipticPair {
        big_k,
        big_e: big_k * (1.0 - sum),
    }
}

/// `dK/dk = (E - k'^2 K) / (k k'^2)`.
pub fn d_big_k_dk(k: Modulus) -> f64 {
    let kv = k.value();
    if kv < 1e-3 {
        // Series of (pi/2)(1 + k^2/4 + 9k^4/64 + 25k^6/256 + ...), differentiated.
        let k2 = kv * kv;
        return FRAC_PI_2 * kv * (0.5 + k2 * (9.0 / 16.0 + k2 * 75.0 / 128.0));
    }
    let EllipticPair { big_k, big_e } = complete_elliptic(k);
    let kc2 = k.complementary_squared();
    (big_e - kc2 * big_k) / (kv * kc2)
}

/// `dE/dk = (E - K) / k`.
pub fn d_big_e_dk(k: Modulus) -> f64 {
    let kv = k.value();
    if kv < 1e-3 {
        // E = (pi/2)(1 - k^2/4 - 3k^4/64 - ...)
        let k2 = kv * kv;
        return -FRAC_PI_2 * kv * (0.5 + k2 * 3.0 / 16.0);
    }
    let EllipticPair { big_k, big_e } = complete_elliptic(k);
    (big_e - big_k) / kv
}

/// Jacobi elliptic functions `sn`, `cn`, `dn` at `u`.
pub fn jacobi(u: f64, k: Modulus) -> Result<JacobiTriple> {
    if !u.is_finite() {
        return Err(CnoidalError::domain(format!("jacobi argument must be finite, got {u}")));
    }
    Ok(JacobiSampler::new(k).eval(u))
}

/// Precomputed AGM ladder for repeated evaluation at a fixed modulus.
#[derive(Debug, Clone)]
pub struct JacobiSampler {
    k: Modulus,
    quarter_period: f64,
    a: Vec<f64>,
    c: Vec<f64>,
}

impl JacobiSampler {
    pub fn new(k: Modulus) -> Self {
        let mut a = vec![1.0];
        let mut c = vec![k.value()];
        let mut b = k.complementary();
        for _ in 0..AGM_MAX_ITER {
            let an = *a.last().unwrap();
            if (an - b).abs() < AGM_REL_TOL * an {
                break;
            }
            c.push(0.5 * (an - b));
            a.push(0.5 * (an + b));
            b = (an * b).sqrt();
        }
        let quarter_period = PI / (2.0 * a.last().unwrap());
        JacobiSampler {
            k,
            quarter_period,
            a,
            c,
        }
    }

    pub fn modulus(&self) -> Modulus {
        self.k
    }

    /// `K(k)`.
    pub fn quarter_period(&self) -> f64 {
        self.quarter_period
    }

    pub fn eval(&self, u: f64) -> JacobiTriple {
        // Reduce to one real period 4K.
        let period = 4.0 * self.quarter_period;
        let u = u - period * (u / period).round();

        let n = self.a.len() - 1;
        let mut phi = (1u64 << n) as f64 * self.a[n] * u;
        for j in (1..=n).rev() {
            phi = 0.5 * (phi + (self.c[j] / self.a[j] * phi.sin()).asin());
        }
        let (sn, cn) = phi.sin_cos();
        let k = self.k.value();
        // Pick the form of dn^2 that avoids cancellation.
        let dn = if sn.abs() < cn.abs() {
            (1.0 - k * k * sn * sn).sqrt()
        } else {
            (self.k.complementary_squared() + k * k * cn * cn).sqrt()
        };
        JacobiTriple { sn, cn, dn }
    }
}
