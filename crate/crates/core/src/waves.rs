//! Cnoidal wave families of the cubic Klein-Gordon (KG) and nonlinear
//! Schrödinger (NLS) equations, parametrized by the elliptic modulus.
//!
//! Both profiles have the form `phi(x) = A cn(b x; k)` with `b = 4 K(k) / L`:
//!
//! * KG, `-omega phi'' + phi - phi^3 = 0`, `omega = 1 - c^2`:
//!   `A = sqrt(2) k / sqrt(2k^2 - 1)`, `omega = L^2 / (16 K^2 (2k^2 - 1))`.
//! * NLS, `-phi'' + omega phi - phi^3 = 0`:
//!   `A = sqrt(2 omega) k / sqrt(2k^2 - 1)`, `omega = 16 K^2 (2k^2 - 1) / L^2`.
//!
//! Only `k` in `(1/sqrt 2, 1)` gives these sign-changing, zero-mean waves.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::elliptic::{complete_elliptic, JacobiSampler, Modulus, MAX_K_SQUARED};
use crate::error::{CnoidalError, Result};
use crate::roots::bisect;
use crate::spectral::{Grid, SpectralDiff};

/// Minimum number of samples accepted by [`sample`].
pub const MIN_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Kg,
    Nls,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Kg => "kg",
            Model::Nls => "nls",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = CnoidalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kg" => Ok(Model::Kg),
            "nls" => Ok(Model::Nls),
            other => Err(CnoidalError::domain(format!("unknown model '{other}'"))),
        }
    }
}

/// Full parameter record of one cnoidal wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveParams {
    pub model: Model,
    /// Spatial period `L`.
    pub period: f64,
    pub k: Modulus,
    /// KG: `1 - c^2`. NLS: standing-wave frequency.
    pub omega: f64,
    /// KG wave speed `c = sqrt(1 - omega)`; `None` for NLS, and for KG
    /// profiles built with `omega >= 1` (see [`kg_from_k_relaxed`]).
    pub speed: Option<f64>,
    pub amplitude: f64,
    /// `b = 4 K(k) / L`.
    pub scale: f64,
}

impl WaveParams {
    pub fn profile(&self, x: f64) -> f64 {
        self.sampler().value(x)
    }

    /// A reusable evaluator that keeps the AGM ladder for `k`.
    pub fn sampler(&self) -> ProfileSampler {
        ProfileSampler {
            params: *self,
            jacobi: JacobiSampler::new(self.k),
        }
    }

    /// Integration constant of the first integral, `A = beta_1^2 beta_2^2 / 4`.
    pub fn first_integral_constant(&self) -> f64 {
        let a2 = self.amplitude * self.amplitude;
        let beta1_sq = match self.model {
            Model::Kg => a2 - 2.0,
            Model::Nls => a2 - 2.0 * self.omega,
        };
        beta1_sq * a2 / 4.0
    }

    pub fn speed_or_zero(&self) -> f64 {
        self.speed.unwrap_or(0.0)
    }
}

/// Pointwise evaluation of `phi`, `phi'`, `phi''`.
#[derive(Debug, Clone)]
pub struct ProfileSampler {
    params: WaveParams,
    jacobi: JacobiSampler,
}

impl ProfileSampler {
    pub fn params(&self) -> &WaveParams {
        &self.params
    }

    pub fn value(&self, x: f64) -> f64 {
        self.params.amplitude * self.jacobi.eval(self.params.scale * x).cn
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let t = self.jacobi.eval(self.params.scale * x);
        -self.params.amplitude * self.params.scale * t.sn * t.dn
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let t = self.jacobi.eval(self.params.scale * x);
        let k2 = self.params.k.value().powi(2);
        let b2 = self.params.scale * self.params.scale;
        -self.params.amplitude * b2 * t.cn * (t.dn * t.dn - k2 * t.sn * t.sn)
    }

    pub fn values_on(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.value(x)).collect()
    }

    pub fn derivatives_on(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.derivative(x)).collect()
    }

    pub fn second_derivatives_on(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.second_derivative(x)).collect()
    }

    pub fn jacobi(&self) -> &JacobiSampler {
        &self.jacobi
    }
}

/// `phi` sampled on the uniform grid `x_j = j L / N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledProfile {
    pub params: WaveParams,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledProfile {
    pub fn grid(&self) -> Grid {
        Grid {
            period: self.params.period,
            n: self.xs.len(),
        }
    }
}

fn check_period(period: f64) -> Result<()> {
    if period.is_finite() && period > 0.0 {
        Ok(())
    } else {
        Err(CnoidalError::domain(format!("period L must be positive, got {period}")))
    }
}

fn check_cnoidal_modulus(k: Modulus) -> Result<()> {
    if k.value() <= FRAC_1_SQRT_2 {
        return Err(CnoidalError::domain(format!(
            "cnoidal waves need k in (1/sqrt 2, 1), got {}",
            k.value()
        )));
    }
    Ok(())
}

fn largest_modulus() -> f64 {
    MAX_K_SQUARED.sqrt()
}

fn smallest_modulus() -> f64 {
    FRAC_1_SQRT_2 * (1.0 + 1e-15)
}

/// `4 K(k) sqrt(2k^2 - 1)`: the KG wave at modulus `k` has `omega < 1`
/// exactly when `L` is below this value.
pub fn kg_admissibility_bound(k: Modulus) -> f64 {
    let kv = k.value();
    4.0 * complete_elliptic(k).big_k * (2.0 * kv * kv - 1.0).max(0.0).sqrt()
}

/// `omega(k) = L^2 / (16 K^2 (2k^2 - 1))` for KG.
pub fn kg_omega(period: f64, k: Modulus) -> f64 {
    let kv = k.value();
    let big_k = complete_elliptic(k).big_k;
    period * period / (16.0 * big_k * big_k * (2.0 * kv * kv - 1.0))
}

/// `omega(k) = 16 K^2 (2k^2 - 1) / L^2` for NLS.
pub fn nls_omega(period: f64, k: Modulus) -> f64 {
    let kv = k.value();
    let big_k = complete_elliptic(k).big_k;
    16.0 * big_k * big_k * (2.0 * kv * kv - 1.0) / (period * period)
}

/// The KG family at a fixed period, with the admissible lower modulus
/// `k_min(L)` (where `omega = 1`, `c = 0`) resolved once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgFamily {
    pub period: f64,
    pub k_min: f64,
}

impl KgFamily {
    pub fn new(period: f64) -> Result<Self> {
        check_period(period)?;
        let hi = largest_modulus();
        let bound = |k: f64| kg_admissibility_bound(Modulus::new(k).unwrap()) - period;
        if bound(hi) <= 0.0 {
            return Err(CnoidalError::domain(format!(
                "no admissible KG cnoidal wave for L = {period}: needs L < 4K(k)sqrt(2k^2-1) for some k^2 <= 1-1e-12"
            )));
        }
        let k_min = bisect(bound, smallest_modulus(), hi, 0.0)?;
        Ok(KgFamily { period, k_min })
    }

    pub fn from_k(&self, k: Modulus) -> Result<WaveParams> {
        check_cnoidal_modulus(k)?;
        let omega = kg_omega(self.period, k);
        if !(omega < 1.0) {
            return Err(CnoidalError::domain(format!(
                "inadmissible KG wave (L = {}, k = {}): omega = {omega} violates omega < 1, i.e. L < 4K(k)sqrt(2k^2-1); need k > {}",
                self.period,
                k.value(),
                self.k_min
            )));
        }
        Ok(kg_params(self.period, k, omega, Some((1.0 - omega).sqrt())))
    }

    pub fn speed(&self, k: f64) -> f64 {
        let omega = kg_omega(self.period, Modulus::new(k).unwrap());
        (1.0 - omega).max(0.0).sqrt()
    }

    /// Inverse of `k -> c`.
    pub fn k_from_speed(&self, c: f64) -> Result<Modulus> {
        if !(c.is_finite() && (0.0..1.0).contains(&c)) {
            return Err(CnoidalError::domain(format!("KG speed must lie in [0,1), got {c}")));
        }
        if c == 0.0 {
            return Modulus::new(self.k_min);
        }
        let hi = largest_modulus();
        let c_max = self.speed(hi);
        if c > c_max {
            return Err(CnoidalError::domain(format!(
                "speed {c} unattainable for L = {}: the admissible range is [0, {c_max}]",
                self.period
            )));
        }
        let k = bisect(|k| self.speed(k) - c, self.k_min, hi, 0.0)?;
        Modulus::new(k)
    }
}

fn kg_params(period: f64, k: Modulus, omega: f64, speed: Option<f64>) -> WaveParams {
    let kv = k.value();
    WaveParams {
        model: Model::Kg,
        period,
        k,
        omega,
        speed,
        amplitude: 2f64.sqrt() * kv / (2.0 * kv * kv - 1.0).sqrt(),
        scale: 4.0 * complete_elliptic(k).big_k / period,
    }
}

/// KG cnoidal wave at modulus `k`; rejects `(L, k)` with `omega >= 1`.
pub fn kg_from_k(period: f64, k: Modulus) -> Result<WaveParams> {
    KgFamily::new(period)?.from_k(k)
}

/// KG profile solving `-omega phi'' + phi - phi^3 = 0` for any `k` in
/// `(1/sqrt 2, 1)`. When `omega >= 1` no real speed exists and `speed` is
/// `None`; the profile and the scalar operator built from it remain
/// well defined.
pub fn kg_from_k_relaxed(period: f64, k: Modulus) -> Result<WaveParams> {
    check_period(period)?;
    check_cnoidal_modulus(k)?;
    let omega = kg_omega(period, k);
    let speed = (omega < 1.0).then(|| (1.0 - omega).sqrt());
    Ok(kg_params(period, k, omega, speed))
}

pub fn kg_k_from_c(period: f64, c: f64) -> Result<Modulus> {
    KgFamily::new(period)?.k_from_speed(c)
}

pub fn nls_from_k(period: f64, k: Modulus) -> Result<WaveParams> {
    check_period(period)?;
    check_cnoidal_modulus(k)?;
    let kv = k.value();
    let omega = nls_omega(period, k);
    Ok(WaveParams {
        model: Model::Nls,
        period,
        k,
        omega,
        speed: None,
        amplitude: (2.0 * omega).sqrt() * kv / (2.0 * kv * kv - 1.0).sqrt(),
        scale: 4.0 * complete_elliptic(k).big_k / period,
    })
}

/// Inverse of `k -> omega` for NLS, monotone increasing on `(1/sqrt 2, 1)`.
pub fn nls_k_from_omega(period: f64, omega: f64) -> Result<Modulus> {
    check_period(period)?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(CnoidalError::domain(format!("NLS frequency must be positive, got {omega}")));
    }
    let hi = largest_modulus();
    let omega_max = nls_omega(period, Modulus::new(hi)?);
    if omega > omega_max {
        return Err(CnoidalError::domain(format!(
            "omega = {omega} beyond the representable range (0, {omega_max}] for L = {period}"
        )));
    }
    let k = bisect(
        |k| nls_omega(period, Modulus::new(k).unwrap()) - omega,
        smallest_modulus(),
        hi,
        0.0,
    )?;
    Modulus::new(k)
}

/// Build params for either model from a modulus.
pub fn from_k(model: Model, period: f64, k: Modulus) -> Result<WaveParams> {
    match model {
        Model::Kg => kg_from_k(period, k),
        Model::Nls => nls_from_k(period, k),
    }
}

pub fn sample(params: &WaveParams, n: usize) -> Result<SampledProfile> {
    if n < MIN_SAMPLES || !n.is_multiple_of(2) {
        return Err(CnoidalError::domain(format!(
            "sample count must be even and >= {MIN_SAMPLES}, got {n}"
        )));
    }
    let grid = Grid::new(params.period, n)?;
    let xs = grid.points();
    let values = params.sampler().values_on(&xs);
    Ok(SampledProfile {
        params: *params,
        xs,
        values,
    })
}

/// Residuals of the profile equation and of its first integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeResidual {
    /// `max |-omega phi'' + phi - phi^3|` (KG) or `max |-phi'' + omega phi - phi^3|` (NLS).
    pub equation: f64,
    /// `max |(phi')^2 - Q(phi)|` with `Q` the quartic of the first integral.
    pub first_integral: f64,
}

impl OdeResidual {
    pub fn max(&self) -> f64 {
        self.equation.max(self.first_integral)
    }
}

pub fn ode_residuals(profile: &SampledProfile) -> Result<OdeResidual> {
    let n = profile.values.len();
    if n < 128 {
        return Err(CnoidalError::domain(format!("ode residual needs >= 128 samples, got {n}")));
    }
    let p = &profile.params;
    let sd = SpectralDiff::new(profile.grid());
    let phi = &profile.values;
    let d1 = sd.derivative(phi, 1);
    let d2 = sd.derivative(phi, 2);
    let a = p.first_integral_constant();
    let mut equation = 0.0f64;
    let mut first_integral = 0.0f64;
    for j in 0..n {
        let f = phi[j];
        let (eq, q) = match p.model {
            Model::Kg => (
                -p.omega * d2[j] + f - f * f * f,
                (2.0 * f * f - f.powi(4) + 4.0 * a) / (2.0 * p.omega),
            ),
            Model::Nls => (
                -d2[j] + p.omega * f - f * f * f,
                0.5 * (2.0 * p.omega * f * f - f.powi(4) + 4.0 * a),
            ),
        };
        equation = equation.max(eq.abs());
        first_integral = first_integral.max((d1[j] * d1[j] - q).abs());
    }
    Ok(OdeResidual {
        equation,
        first_integral,
    })
}

/// Largest of the two residuals in [`ode_residuals`].
pub fn ode_residual(profile: &SampledProfile) -> Result<f64> {
    ode_residuals(profile).map(|r| r.max())
}
