//! Stability functionals along the wave families and the resulting
//! verdicts: `d''(c)` for KG traveling waves, `d''(omega)` for NLS
//! standing waves, the potential-well level and the critical moduli.

use serde::Serialize;

use crate::elliptic::{complete_elliptic, d_big_e_dk, d_big_k_dk, Modulus};
use crate::error::{CnoidalError, Result};
use crate::index::{d_linear_solve, find_kstar, index_report, kernel_split, deflated_solve, IndexReport};
use crate::operators::{build, OperatorKind, ZeroTol};
use crate::roots::bisect;
use crate::spectral::Grid;
use crate::waves::{
    kg_from_k, kg_from_k_relaxed, kg_k_from_c, kg_omega, nls_from_k, nls_k_from_omega, nls_omega,
    KgFamily, Model, WaveParams,
};

/// Relative step of the central differences.
pub const FD_RELATIVE_STEP: f64 = 1e-4;
/// Required agreement of the two `d''(omega)` computations.
pub const DPP_OMEGA_AGREEMENT: f64 = 1e-4;
pub const DEFAULT_OPERATOR_SIZE: usize = 256;
const QUADRATURE_POINTS: usize = 2048;

fn admissible_kg(period: f64, k: Modulus) -> Result<WaveParams> {
    kg_from_k(period, k)
}

fn phi_prime_bracket(k: Modulus) -> f64 {
    let ek = complete_elliptic(k);
    let k2 = k.value().powi(2);
    (2.0 * k2 - 1.0) * ek.big_e + (1.0 - k2) * ek.big_k
}

/// `int_0^L (phi')^2` for the KG profile in closed form.
pub fn phi_prime_l2(period: f64, k: Modulus) -> Result<f64> {
    kg_from_k_relaxed(period, k)?;
    let k2 = k.value().powi(2);
    let big_k = complete_elliptic(k).big_k;
    Ok(32.0 * big_k / (3.0 * (2.0 * k2 - 1.0) * period) * phi_prime_bracket(k))
}

/// `G(k) = K ((2k^2 - 1) E + (1 - k^2) K) / (2k^2 - 1)`, so that
/// `int (phi')^2 = 32 G / (3 L)`.
fn g_and_derivative(k: Modulus) -> (f64, f64) {
    let kv = k.value();
    let k2 = kv * kv;
    let ek = complete_elliptic(k);
    let (kk, ee) = (ek.big_k, ek.big_e);
    let (dk, de) = (d_big_k_dk(k), d_big_e_dk(k));
    let s = 2.0 * k2 - 1.0;
    let g = kk * ee + (1.0 - k2) * kk * kk / s;
    let num = (1.0 - k2) * kk * kk;
    let dnum = -2.0 * kv * kk * kk + 2.0 * (1.0 - k2) * kk * dk;
    let dg = dk * ee + kk * de + (dnum * s - num * 4.0 * kv) / (s * s);
    (g, dg)
}

/// `d omega / dk` for the KG family at fixed `L`.
pub fn kg_domega_dk(period: f64, k: Modulus) -> f64 {
    let kv = k.value();
    let big_k = complete_elliptic(k).big_k;
    -kg_omega(period, k) * (2.0 * d_big_k_dk(k) / big_k + 4.0 * kv / (2.0 * kv * kv - 1.0))
}

/// `d''(c) = m(k) + n(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DppC {
    pub value: f64,
    pub m: f64,
    pub n: f64,
    /// `1 - omega < 1e-6`: the wave is nearly static and `c`-derivatives are
    /// badly conditioned.
    pub near_boundary: bool,
}

pub fn dpp_c(period: f64, k: Modulus) -> Result<DppC> {
    let p = admissible_kg(period, k)?;
    let (g, dg) = g_and_derivative(k);
    let m = -32.0 * g / (3.0 * period);
    let n = 64.0 * (1.0 - p.omega) / (3.0 * period) * dg / kg_domega_dk(period, k);
    Ok(DppC {
        value: m + n,
        m,
        n,
        near_boundary: 1.0 - p.omega < 1e-6,
    })
}

/// Central difference in `c` of `d'(c) = -F(phi, c phi') = -c int (phi')^2`.
pub fn dpp_c_finite_difference(period: f64, k: Modulus) -> Result<f64> {
    let p = admissible_kg(period, k)?;
    let c = p.speed_or_zero();
    if c <= 0.0 {
        return Err(CnoidalError::domain("finite differences in c need c > 0"));
    }
    let h = FD_RELATIVE_STEP * c;
    let d_prime = |c: f64| -> Result<f64> { Ok(-c * phi_prime_l2(period, kg_k_from_c(period, c)?)?) };
    Ok((d_prime(c + h)? - d_prime(c - h)?) / (2.0 * h))
}

/// Both computations of `d''(omega)` for the NLS family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DppOmega {
    pub omega: f64,
    pub k: Modulus,
    /// Central difference of `d'(omega) = (1/2) int phi^2`.
    pub finite_difference: f64,
    /// `-(chi, phi)` with `L2 chi = phi`.
    pub linear_solve: f64,
}

impl DppOmega {
    pub fn value(&self) -> f64 {
        self.linear_solve
    }

    pub fn relative_gap(&self) -> f64 {
        (self.finite_difference - self.linear_solve).abs() / self.linear_solve.abs()
    }
}

fn half_mass(period: f64, omega: f64) -> Result<f64> {
    let p = nls_from_k(period, nls_k_from_omega(period, omega)?)?;
    let grid = Grid::new(period, QUADRATURE_POINTS)?;
    let v = p.sampler().values_on(&grid.points());
    Ok(0.5 * grid.inner(&v, &v))
}

pub fn dpp_omega(period: f64, omega: f64) -> Result<DppOmega> {
    dpp_omega_with(period, omega, DEFAULT_OPERATOR_SIZE)
}

pub fn dpp_omega_with(period: f64, omega: f64, n: usize) -> Result<DppOmega> {
    let k = nls_k_from_omega(period, omega)?;
    let params = nls_from_k(period, k)?;
    let h = FD_RELATIVE_STEP * omega;
    let finite_difference = (half_mass(period, omega + h)? - half_mass(period, omega - h)?) / (2.0 * h);

    let m = build(OperatorKind::NlsL2, &params, n)?;
    let split = kernel_split(&m, ZeroTol::default())?;
    let phi = params.sampler().values_on(&m.grid().points());
    let chi = deflated_solve(&m, &split, &phi)?;
    let linear_solve = -m.grid().inner(&chi, &phi);

    let out = DppOmega {
        omega,
        k,
        finite_difference,
        linear_solve,
    };
    if !(out.relative_gap() <= DPP_OMEGA_AGREEMENT) {
        return Err(CnoidalError::consistency(format!(
            "d''(omega) at omega = {omega}: finite difference {finite_difference} vs linear solve {linear_solve}"
        )));
    }
    Ok(out)
}

/// Level of the potential well at the KG cnoidal profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialWellReport {
    /// Closed form `-L (K - 2) ((k^4 - 5k^2/3 + 2/3) K + (4k^2/3 - 2/3) E) / (K (2k^2 - 1)^2)`.
    pub p_value: f64,
    /// `d_omega`, equal to `p_value` through the Nehari characterization.
    pub d_level: f64,
    /// `P_omega(phi_omega)` evaluated on the sampled profile.
    pub functional_value: f64,
    /// `|P_omega(phi_omega) - sqrt(omega) P_1(phi_1)| / |P_omega(phi_omega)|`,
    /// both sides by quadrature, `phi_1` the `omega = 1` wave of period
    /// `L / sqrt(omega)`.
    pub scaling_check: f64,
}

pub fn potential_well_closed_form(period: f64, k: Modulus) -> f64 {
    let ek = complete_elliptic(k);
    let k2 = k.value().powi(2);
    let s = 2.0 * k2 - 1.0;
    let inner = (k2 * k2 - 5.0 / 3.0 * k2 + 2.0 / 3.0) * ek.big_k + ek.big_e * (4.0 / 3.0 * k2 - 2.0 / 3.0);
    -period * (ek.big_k - 2.0) * inner / (ek.big_k * s * s)
}

/// `(1/2) int (omega u_x^2 + u^2) - (1/4) int u^4` on a uniform grid.
pub fn potential_functional(params: &WaveParams, n: usize) -> Result<f64> {
    let grid = Grid::new(params.period, n)?;
    let s = params.sampler();
    let xs = grid.points();
    let (mut quad, mut quart) = (0.0, 0.0);
    for &x in &xs {
        let (u, du) = (s.value(x), s.derivative(x));
        quad += params.omega * du * du + u * u;
        quart += u.powi(4);
    }
    let h = grid.spacing();
    Ok(0.5 * h * quad - 0.25 * h * quart)
}

/// Accepts any `k` in `(1/sqrt 2, 1)`; only `omega > 0` enters.
pub fn potential_well(period: f64, k: Modulus) -> Result<PotentialWellReport> {
    let p = kg_from_k_relaxed(period, k)?;
    let p_value = potential_well_closed_form(period, k);
    let functional_value = potential_functional(&p, QUADRATURE_POINTS)?;
    let unit = kg_from_k_relaxed(period / p.omega.sqrt(), k)?;
    let unit_value = potential_functional(&unit, QUADRATURE_POINTS)?;
    let scaling_check = (functional_value - p.omega.sqrt() * unit_value).abs() / functional_value.abs();
    Ok(PotentialWellReport {
        p_value,
        d_level: p_value,
        functional_value,
        scaling_check,
    })
}

/// Root of `K(k) = 2` on `[0.75, 0.85]`.
pub fn find_k1() -> Modulus {
    let f = |k: f64| complete_elliptic(Modulus::new(k).expect("bracket inside (0, 1)")).big_k - 2.0;
    let k = bisect(f, 0.75, 0.85, 0.0).expect("K - 2 changes sign on [0.75, 0.85]");
    Modulus::new(k).expect("root inside (0, 1)")
}

/// Critical moduli and the parameter values they induce at period `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValues {
    pub period: f64,
    pub kstar: f64,
    pub k1: f64,
    /// Smallest admissible KG modulus at this period.
    pub kg_k_min: Option<f64>,
    /// `c(k*)`; `None` when `k*` is not KG-admissible.
    pub cstar: Option<f64>,
    /// `c(k1)`; `None` when the proven KG instability interval is empty.
    pub c_k1: Option<f64>,
    pub omegastar: f64,
}

pub fn critical_values(period: f64) -> Result<CriticalValues> {
    let kstar = find_kstar();
    let k1 = find_k1();
    let family = KgFamily::new(period).ok();
    let speed_at = |k: Modulus| {
        family
            .as_ref()
            .filter(|f| k.value() > f.k_min)
            .map(|f| f.speed(k.value()))
    };
    Ok(CriticalValues {
        period,
        kstar: kstar.value(),
        k1: k1.value(),
        kg_k_min: family.as_ref().map(|f| f.k_min),
        cstar: speed_at(kstar),
        c_k1: speed_at(k1),
        omegastar: nls_omega(period, kstar),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    OrbitallyUnstable,
    OrbitallyStable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub model: Model,
    pub period: f64,
    pub k: f64,
    pub c: Option<f64>,
    pub omega: f64,
    pub dpp: f64,
    /// Counts for the constrained block operator (KG block, or `L2` and
    /// `L3` together for NLS).
    pub constrained_n: usize,
    pub constrained_z: usize,
    /// Per-operator index reports: the KG block, or `L2` then `L3`.
    pub index: Vec<IndexReport>,
    pub verdict: Verdict,
    pub reason: String,
    pub bounds: CriticalValues,
}

/// KG traveling wave of speed `c >= 0`.
pub fn verdict_kg(period: f64, c: f64, n: usize) -> Result<StabilityVerdict> {
    if !(0.0..1.0).contains(&c) {
        return Err(CnoidalError::domain(format!("speed must lie in [0, 1), got {c}")));
    }
    let k = kg_k_from_c(period, c)?;
    let mut params = kg_from_k(period, k)?;
    params.speed = Some(c);
    let report = index_report(OperatorKind::KgBlock, &params, n)?;
    let dpp = dpp_c(period, k)?.value;
    let bounds = critical_values(period)?;
    let (verdict, reason) = match bounds.c_k1 {
        None => (
            Verdict::Inconclusive,
            format!(
                "k1 = {:.6} lies below the admissible range at L = {period}; the proven instability interval [0, c(k1)) is empty",
                bounds.k1
            ),
        ),
        Some(ck1) if c >= ck1 => (
            Verdict::Inconclusive,
            format!("d''<0 but global existence regime not established (c = {c} >= c(k1) = {ck1:.6})"),
        ),
        Some(_) if report.constrained_n == 1 && report.constrained_z == 1 && dpp < 0.0 => (
            Verdict::OrbitallyUnstable,
            "n(L_Pi) = 1, z(L_Pi) = 1, d''(c) < 0 and c in [0, c(k1))".to_string(),
        ),
        Some(_) => (
            Verdict::Inconclusive,
            format!(
                "hypotheses fail: n = {}, z = {}, d'' = {dpp}",
                report.constrained_n, report.constrained_z
            ),
        ),
    };
    Ok(StabilityVerdict {
        model: Model::Kg,
        period,
        k: k.value(),
        c: Some(c),
        omega: params.omega,
        dpp,
        constrained_n: report.constrained_n,
        constrained_z: report.constrained_z,
        index: vec![report],
        verdict,
        reason,
        bounds,
    })
}

/// NLS standing wave of frequency `omega > 0`.
pub fn verdict_nls(period: f64, omega: f64, n: usize) -> Result<StabilityVerdict> {
    let k = nls_k_from_omega(period, omega)?;
    let params = nls_from_k(period, k)?;
    let l2 = index_report(OperatorKind::NlsL2, &params, n)?;
    let l3 = index_report(OperatorKind::NlsL3, &params, n)?;
    let dpp = dpp_omega_with(period, omega, n)?.value();
    let bounds = critical_values(period)?;
    let (verdict, reason) = if omega >= bounds.omegastar {
        (
            Verdict::Inconclusive,
            format!("omega = {omega} >= omega* = {:.6}; outside the proven regime", bounds.omegastar),
        )
    } else if l2.constrained_n == 1 && l3.constrained_n == 0 && dpp > 0.0 {
        (
            Verdict::OrbitallyStable,
            "n(L2_Pi) = 1, n(L3_Pi) = 0, d''(omega) > 0 and omega in (0, omega*)".to_string(),
        )
    } else {
        (
            Verdict::Inconclusive,
            format!(
                "hypotheses fail: n(L2_Pi) = {}, n(L3_Pi) = {}, d'' = {dpp}",
                l2.constrained_n, l3.constrained_n
            ),
        )
    };
    Ok(StabilityVerdict {
        model: Model::Nls,
        period,
        k: k.value(),
        c: None,
        omega,
        dpp,
        constrained_n: l2.constrained_n + l3.constrained_n,
        constrained_z: l2.constrained_z + l3.constrained_z,
        index: vec![l2, l3],
        verdict,
        reason,
        bounds,
    })
}

/// `parameter` is `c` for KG and `omega` for NLS.
pub fn verdict(model: Model, period: f64, parameter: f64) -> Result<StabilityVerdict> {
    match model {
        Model::Kg => verdict_kg(period, parameter, DEFAULT_OPERATOR_SIZE),
        Model::Nls => verdict_nls(period, parameter, DEFAULT_OPERATOR_SIZE),
    }
}

/// `D_2` at the NLS wave of frequency `omega`, convenient for sweeps.
pub fn d2_at_omega(period: f64, omega: f64, n: usize) -> Result<f64> {
    let params = nls_from_k(period, nls_k_from_omega(period, omega)?)?;
    Ok(d_linear_solve(OperatorKind::NlsL2, &params, n)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SpectralDiff;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn m(k: f64) -> Modulus {
        Modulus::new(k).unwrap()
    }

    #[test]
    fn phi_prime_closed_form_vs_quadrature() {
        let p = kg_from_k(TAU, m(0.9)).unwrap();
        let grid = Grid::new(TAU, 512).unwrap();
        let v = p.sampler().values_on(&grid.points());
        let d = SpectralDiff::new(grid).derivative(&v, 1);
        let quad = grid.inner(&d, &d);
        let cf = phi_prime_l2(TAU, m(0.9)).unwrap();
        assert!(((quad - cf) / cf).abs() < 1e-8);
        assert!(cf > 0.0);
        assert!(phi_prime_l2(TAU, m(0.7072)).unwrap() > 1e3 * cf);
    }

    #[test]
    fn dpp_c_negative_and_matches_finite_difference() {
        let family = KgFamily::new(TAU).unwrap();
        for i in 1..=12 {
            let k = family.k_min + (0.99 - family.k_min) * i as f64 / 12.0;
            let a = dpp_c(TAU, m(k)).unwrap();
            let fd = dpp_c_finite_difference(TAU, m(k)).unwrap();
            assert!(a.value < 0.0, "k={k}");
            assert!(((a.value - fd) / a.value).abs() < 1e-5, "k={k}: {} vs {fd}", a.value);
        }
    }

    #[test]
    fn domega_dk_matches_difference() {
        let h = 1e-6;
        let k = 0.93;
        let fd = (kg_omega(TAU, m(k + h)) - kg_omega(TAU, m(k - h))) / (2.0 * h);
        assert!((kg_domega_dk(TAU, m(k)) - fd).abs() < 1e-7);
    }

    #[test]
    fn dpp_omega_positive_and_consistent() {
        for k in [0.75, 0.85, 0.9, 0.95] {
            let omega = nls_omega(TAU, m(k));
            let d = dpp_omega(TAU, omega).unwrap();
            assert!(d.finite_difference > 0.0 && d.linear_solve > 0.0, "k={k}");
            assert!(d.relative_gap() < 1e-4);
        }
    }

    #[test]
    fn critical_moduli() {
        let k1 = find_k1();
        assert!((0.800..=0.805).contains(&k1.value()));
        assert!((complete_elliptic(k1).big_k - 2.0).abs() < 1e-10);
        let cv = critical_values(TAU).unwrap();
        assert!(cv.c_k1.is_none());
        assert!(cv.cstar.is_some());
        let cv4 = critical_values(4.0).unwrap();
        assert!(cv4.c_k1.unwrap() > 0.1);
    }

    #[test]
    fn potential_well_identities() {
        let k1 = find_k1();
        assert!(potential_well_closed_form(TAU, k1).abs() < 1e-9);
        for k in [0.72, 0.76, 0.8, 0.85, 0.9, 0.95] {
            let r = potential_well(TAU, m(k)).unwrap();
            assert!(r.scaling_check < 1e-8, "k={k}");
            if k < k1.value() {
                assert!(r.p_value > 0.0);
            } else {
                assert!(r.p_value < 0.0);
            }
            // The closed form carries the prefactor -(K - 2) in front of the
            // true level (1/4) int phi^4.
            let big_k = complete_elliptic(m(k)).big_k;
            assert!((r.p_value + (big_k - 2.0) * r.functional_value).abs() < 1e-9 * r.functional_value);
        }
    }

    #[test]
    fn verdicts() {
        let v = verdict(Model::Kg, 4.0, 0.1).unwrap();
        assert_eq!(v.verdict, Verdict::OrbitallyUnstable, "{}", v.reason);
        let v = verdict(Model::Kg, TAU, 0.1).unwrap();
        assert_eq!(v.verdict, Verdict::Inconclusive);
        let cv = critical_values(TAU).unwrap();
        let v = verdict(Model::Nls, TAU, 0.8 * cv.omegastar).unwrap();
        assert_eq!(v.verdict, Verdict::OrbitallyStable, "{}", v.reason);
        assert_eq!((v.constrained_n, v.constrained_z), (1, 2));
        let v = verdict(Model::Nls, TAU, 1.2 * cv.omegastar).unwrap();
        assert_eq!(v.verdict, Verdict::Inconclusive);
        assert!(verdict(Model::Kg, TAU, 1.0).is_err());
    }
}
