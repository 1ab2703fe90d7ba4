//! Constrained index bookkeeping: the quantities `D_i = (L_i^{-1} 1, 1)`,
//! the index formula for the zero-mean restriction and its direct check by
//! projection.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::elliptic::{complete_elliptic, Modulus};
use crate::error::{CnoidalError, Result};
use crate::operators::{
    build, constrained_spectrum, eigen_decompose, OperatorKind, OperatorMatrix, SpectrumReport,
    ZeroTol,
};
use crate::roots::bisect;
use crate::waves::{kg_from_k_relaxed, Model, WaveParams};

/// Relative size of `|D|` (against `L`) below which `D` is treated as zero.
pub const D_TIE_TOL: f64 = 1e-8;
/// Largest admissible overlap between a right-hand side and the kernel.
pub const KERNEL_OVERLAP_TOL: f64 = 1e-8;
pub const DEFAULT_IVP_STEPS: usize = 100_000;
pub const MIN_IVP_STEPS: usize = 10_000;
/// Periodicity and Wronskian defects above this are reported as failures.
pub const IVP_DEFECT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DWhich {
    D1,
    D2,
    D3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DMethod {
    ClosedForm,
    LinearSolve,
    Ivp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DQuantity {
    pub which: DWhich,
    pub value: f64,
    pub method: DMethod,
}

/// `D_1 = -L (2k^2 - 1) (2E - K) / K`. Valid for every `k` in
/// `(1/sqrt 2, 1)`, including `omega >= 1` where no KG speed exists.
pub fn d1_closed_form(period: f64, k: Modulus) -> Result<DQuantity> {
    kg_from_k_relaxed(period, k)?;
    let ek = complete_elliptic(k);
    let k2 = k.value().powi(2);
    Ok(DQuantity {
        which: DWhich::D1,
        value: -period * (2.0 * k2 - 1.0) * (2.0 * ek.big_e - ek.big_k) / ek.big_k,
        method: DMethod::ClosedForm,
    })
}

/// Eigendecomposition of an operator matrix with its numerical kernel.
#[derive(Debug, Clone)]
pub struct KernelSplit {
    pub spectrum: SpectrumReport,
    /// Unit kernel vectors as columns.
    pub kernel: DMatrix<f64>,
}

pub fn kernel_split(m: &OperatorMatrix, tol: ZeroTol) -> Result<KernelSplit> {
    let (values, vectors) = eigen_decompose(&m.entries)?;
    let spectrum = SpectrumReport::from_eigenvalues(values, tol);
    let cols: Vec<usize> = spectrum
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= spectrum.zero_tol)
        .map(|(i, _)| i)
        .collect();
    let kernel = DMatrix::from_fn(m.dim(), cols.len(), |r, c| vectors[(r, cols[c])]);
    Ok(KernelSplit { spectrum, kernel })
}

/// Solve `M u = b` on the complement of the kernel: kernel components are
/// removed from `b` and `u`, and `M + V V^T` is factored in place of `M`.
pub fn deflated_solve(m: &OperatorMatrix, split: &KernelSplit, rhs: &[f64]) -> Result<Vec<f64>> {
    let b = DVector::from_column_slice(rhs);
    let v = &split.kernel;
    let overlap = v.transpose() * &b;
    let rel = overlap.norm() / b.norm();
    if rel > KERNEL_OVERLAP_TOL {
        return Err(CnoidalError::Singular(format!(
            "right-hand side overlaps the kernel of {} by {rel:.3e}",
            m.kind
        )));
    }
    let b = &b - v * overlap;
    let reg = &m.entries + v * v.transpose();
    let u = reg
        .lu()
        .solve(&b)
        .ok_or_else(|| CnoidalError::Singular(format!("regularized {} is singular", m.kind)))?;
    let u = &u - v * (v.transpose() * &u);
    Ok(u.as_slice().to_vec())
}

fn ones_rhs(m: &OperatorMatrix) -> Vec<f64> {
    match m.kind {
        OperatorKind::KgBlock => {
            let mut b = vec![1.0; m.n];
            b.extend(std::iter::repeat_n(0.0, m.n));
            b
        }
        _ => vec![1.0; m.dim()],
    }
}

fn pairing(m: &OperatorMatrix, a: &[f64], b: &[f64]) -> f64 {
    m.grid().spacing() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

fn d_which(kind: OperatorKind) -> Result<DWhich> {
    match kind {
        OperatorKind::KgL1 | OperatorKind::KgBlock => Ok(DWhich::D1),
        OperatorKind::NlsL2 => Ok(DWhich::D2),
        OperatorKind::NlsL3 => Ok(DWhich::D3),
        OperatorKind::NlsBlock => Err(CnoidalError::domain(
            "the NLS block has one constraint per component; use nls_block_index",
        )),
    }
}

fn d_from_matrix(m: &OperatorMatrix, tol: ZeroTol) -> Result<(DQuantity, KernelSplit)> {
    let which = d_which(m.kind)?;
    let split = kernel_split(m, tol)?;
    let rhs = ones_rhs(m);
    let u = deflated_solve(m, &split, &rhs)?;
    let q = DQuantity {
        which,
        value: pairing(m, &u, &rhs),
        method: DMethod::LinearSolve,
    };
    Ok((q, split))
}

/// `(M^{-1} 1, 1)` by deflated solve. For the KG block the right-hand side
/// is `(1, 0)`, which yields `D_1` again.
pub fn d_linear_solve(kind: OperatorKind, params: &WaveParams, n: usize) -> Result<DQuantity> {
    d_which(kind)?;
    let m = build(kind, params, n)?;
    Ok(d_from_matrix(&m, ZeroTol::default())?.0)
}

/// Solution of `-p'' + (omega - phi^2) p = 1` on `[0, L]` sampled at the
/// RK4 nodes, or its reconstruction from the auxiliary solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenSolve {
    pub xs: Vec<f64>,
    pub p: Vec<f64>,
    /// Floquet increment `y(x + L) = y(x) + theta phi(x)`, when computed.
    pub theta: Option<f64>,
    /// `max(|p(L) - p(0)|, |p'(L) - p'(0)|)`.
    pub periodicity_defect: f64,
}

/// `phi` at the RK4 half-step nodes `j h / 2`, `j = 0..=2 steps`, of one
/// period. `phi` is even and `L`-periodic, so any node `j` (possibly
/// negative or past one period) maps back into the table.
struct HalfStepTable {
    phi: Vec<f64>,
}

impl HalfStepTable {
    fn new(params: &WaveParams, steps: usize) -> Self {
        let s = params.sampler();
        let h2 = params.period / (2 * steps) as f64;
        HalfStepTable {
            phi: (0..=2 * steps).map(|j| s.value(j as f64 * h2)).collect(),
        }
    }

    fn at(&self, j: i64) -> f64 {
        let m = (self.phi.len() - 1) as i64;
        self.phi[j.unsigned_abs() as usize % m as usize]
    }
}

/// Classical RK4 over `steps` steps of size `h` (sign gives direction) from
/// half-node `j0`, recording every state.
fn rk4<const D: usize>(
    table: &HalfStepTable,
    j0: i64,
    h: f64,
    steps: usize,
    init: [f64; D],
    rhs: impl Fn(f64, &[f64; D]) -> [f64; D],
) -> Vec<[f64; D]> {
    let dir = if h > 0.0 { 1 } else { -1 };
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = init;
    out.push(s);
    let axpy = |s: &[f64; D], k: &[f64; D], a: f64| {
        let mut r = *s;
        for i in 0..D {
            r[i] += a * k[i];
        }
        r
    };
    for i in 0..steps as i64 {
        let j = j0 + dir * 2 * i;
        let (p0, pm, p1) = (table.at(j), table.at(j + dir), table.at(j + 2 * dir));
        let k1 = rhs(p0, &s);
        let k2 = rhs(pm, &axpy(&s, &k1, 0.5 * h));
        let k3 = rhs(pm, &axpy(&s, &k2, 0.5 * h));
        let k4 = rhs(p1, &axpy(&s, &k3, h));
        for d in 0..D {
            s[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        out.push(s);
    }
    out
}

fn check_nls_ivp(params: &WaveParams, steps: usize) -> Result<()> {
    if params.model != Model::Nls {
        return Err(CnoidalError::domain("the IVP route applies to NLS parameters"));
    }
    if steps < MIN_IVP_STEPS {
        return Err(CnoidalError::domain(format!("need at least {MIN_IVP_STEPS} steps, got {steps}")));
    }
    Ok(())
}

/// `D_3 = (p, 1)` with `p` from the initial-value problem `p(0) = p'(0) = 0`.
/// The integral is carried as a third RK4 component.
pub fn d3_via_ivp(params: &WaveParams, steps: usize) -> Result<(DQuantity, GreenSolve)> {
    check_nls_ivp(params, steps)?;
    let table = HalfStepTable::new(params, steps);
    let h = params.period / steps as f64;
    let omega = params.omega;
    let states = rk4(&table, 0, h, steps, [0.0; 3], |phi, s| {
        [s[1], (omega - phi * phi) * s[0] - 1.0, s[0]]
    });
    let last = states[steps];
    let defect = last[0].abs().max(last[1].abs());
    if !(defect <= IVP_DEFECT_TOL) {
        return Err(CnoidalError::consistency(format!(
            "p is not periodic to {IVP_DEFECT_TOL:e} (defect {defect:.3e}); increase steps"
        )));
    }
    let green = GreenSolve {
        xs: (0..=steps).map(|i| i as f64 * h).collect(),
        p: states.iter().map(|s| s[0]).collect(),
        theta: None,
        periodicity_defect: defect,
    };
    let q = DQuantity {
        which: DWhich::D3,
        value: last[2],
        method: DMethod::Ivp,
    };
    Ok((q, green))
}

/// The homogeneous solution `y`, `y(0) = 0`, `y'(0) = 1/phi(0)`, and what
/// follows from it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxiliarySolve {
    /// `p = (int_0^x y) phi - (int_0^x phi) y` on the RK4 nodes of `[0, L]`,
    /// with `theta` filled in.
    pub green: GreenSolve,
    /// `y` on the nodes of `[0, L]`.
    pub y: Vec<f64>,
    pub y_integral: f64,
    /// `max |y(x) + y(-x)|` over `[0, L]`.
    pub oddness_defect: f64,
    /// `max |phi y' - phi' y - 1|` over `[0, 2L]`.
    pub wronskian_defect: f64,
    /// Least-squares residual of `y(x + L) - y(x) - theta phi(x)`, max norm.
    pub floquet_residual: f64,
    /// `max |p_reconstructed - p_ivp|`.
    pub reconstruction_defect: f64,
}

pub fn auxiliary_y(params: &WaveParams, steps: usize) -> Result<AuxiliarySolve> {
    check_nls_ivp(params, steps)?;
    let table = HalfStepTable::new(params, steps);
    let phi0 = table.at(0);
    if phi0 == 0.0 {
        return Err(CnoidalError::domain("phi(0) = 0"));
    }
    let h = params.period / steps as f64;
    let omega = params.omega;
    let rhs = |phi: f64, s: &[f64; 4]| [s[1], (omega - phi * phi) * s[0], s[0], phi];
    let init = [0.0, 1.0 / phi0, 0.0, 0.0];
    let fwd = rk4(&table, 0, h, 2 * steps, init, rhs);
    let bwd = rk4(&table, 0, -h, steps, init, rhs);

    let sampler = params.sampler();
    let dphi: Vec<f64> = (0..=2 * steps).map(|i| sampler.derivative(i as f64 * h)).collect();
    let phi_node = |i: usize| table.at(2 * i as i64);

    let wronskian_defect = fwd
        .iter()
        .enumerate()
        .map(|(i, s)| (phi_node(i) * s[1] - dphi[i] * s[0] - 1.0).abs())
        .fold(0.0, f64::max);
    if !(wronskian_defect <= IVP_DEFECT_TOL) {
        return Err(CnoidalError::consistency(format!(
            "Wronskian drift {wronskian_defect:.3e} exceeds {IVP_DEFECT_TOL:e}"
        )));
    }
    let oddness_defect = (0..=steps)
        .map(|i| (fwd[i][0] + bwd[i][0]).abs())
        .fold(0.0, f64::max);

    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=steps {
        let jump = fwd[i + steps][0] - fwd[i][0];
        num += jump * phi_node(i);
        den += phi_node(i) * phi_node(i);
    }
    let theta = num / den;
    let floquet_residual = (0..=steps)
        .map(|i| (fwd[i + steps][0] - fwd[i][0] - theta * phi_node(i)).abs())
        .fold(0.0, f64::max);

    let p: Vec<f64> = (0..=steps)
        .map(|i| fwd[i][2] * phi_node(i) - fwd[i][3] * fwd[i][0])
        .collect();
    let dp_end = fwd[steps][2] * dphi[steps] - fwd[steps][3] * fwd[steps][1];
    let periodicity_defect = (p[steps] - p[0]).abs().max(dp_end.abs());

    let (_, ivp) = d3_via_ivp(params, steps)?;
    let reconstruction_defect = p
        .iter()
        .zip(&ivp.p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(AuxiliarySolve {
        green: GreenSolve {
            xs: ivp.xs,
            p,
            theta: Some(theta),
            periodicity_defect,
        },
        y: fwd[..=steps].iter().map(|s| s[0]).collect(),
        y_integral: fwd[steps][2],
        oddness_defect,
        wronskian_defect,
        floquet_residual,
        reconstruction_defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReport {
    pub kind: OperatorKind,
    pub unconstrained_n: usize,
    pub unconstrained_z: usize,
    pub d_value: f64,
    pub n0: usize,
    pub z0: usize,
    pub constrained_n: usize,
    pub constrained_z: usize,
}

/// `(n0, z0)` from the sign of `D`, with ties at `|D| <= D_TIE_TOL L`.
pub fn index_corrections(d: f64, period: f64) -> (usize, usize) {
    if d.abs() <= D_TIE_TOL * period {
        (0, 1)
    } else if d < 0.0 {
        (1, 0)
    } else {
        (0, 0)
    }
}

fn report_from(m: &OperatorMatrix, tol: ZeroTol) -> Result<IndexReport> {
    let (d, split) = d_from_matrix(m, tol)?;
    let (n0, z0) = index_corrections(d.value, m.params.period);
    let un = split.spectrum.n_neg;
    let uz = split.spectrum.z_dim;
    if n0 + z0 > un {
        return Err(CnoidalError::consistency(format!(
            "index formula gives a negative count for {} (n = {un}, n0 = {n0}, z0 = {z0})",
            m.kind
        )));
    }
    Ok(IndexReport {
        kind: m.kind,
        unconstrained_n: un,
        unconstrained_z: uz,
        d_value: d.value,
        n0,
        z0,
        constrained_n: un - n0 - z0,
        constrained_z: uz + z0,
    })
}

fn check_direct(kind: OperatorKind, predicted: (usize, usize), direct: &SpectrumReport) -> Result<()> {
    if predicted != (direct.n_neg, direct.z_dim) {
        return Err(CnoidalError::consistency(format!(
            "{kind}: index formula predicts (n, z) = {predicted:?} but the projected matrix has ({}, {})",
            direct.n_neg, direct.z_dim
        )));
    }
    Ok(())
}

/// Index-formula counts for the zero-mean restriction, verified against
/// the eigenvalues of the explicitly projected matrix.
pub fn index_report(kind: OperatorKind, params: &WaveParams, n: usize) -> Result<IndexReport> {
    index_report_with(kind, params, n, ZeroTol::default())
}

pub fn index_report_with(
    kind: OperatorKind,
    params: &WaveParams,
    n: usize,
    tol: ZeroTol,
) -> Result<IndexReport> {
    d_which(kind)?;
    let m = build(kind, params, n)?;
    let report = report_from(&m, tol)?;
    let direct = constrained_spectrum(&m, tol)?;
    check_direct(kind, (report.constrained_n, report.constrained_z), &direct)?;
    Ok(report)
}

/// Index reports for `L2` and `L3` and the combined counts of the NLS
/// block, the latter checked against the projected block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlsBlockIndex {
    pub l2: IndexReport,
    pub l3: IndexReport,
    pub constrained_n: usize,
    pub constrained_z: usize,
}

pub fn nls_block_index(params: &WaveParams, n: usize) -> Result<NlsBlockIndex> {
    let l2 = index_report(OperatorKind::NlsL2, params, n)?;
    let l3 = index_report(OperatorKind::NlsL3, params, n)?;
    let predicted = (l2.constrained_n + l3.constrained_n, l2.constrained_z + l3.constrained_z);
    let m = build(OperatorKind::NlsBlock, params, n)?;
    check_direct(OperatorKind::NlsBlock, predicted, &constrained_spectrum(&m, ZeroTol::default())?)?;
    Ok(NlsBlockIndex {
        l2,
        l3,
        constrained_n: predicted.0,
        constrained_z: predicted.1,
    })
}

/// Constraint matrix of the KG block for the directions `(1, 0)` and
/// `(0, 1)`.
pub fn kg_block_dmatrix(params: &WaveParams, n: usize) -> Result<[[f64; 2]; 2]> {
    let m = build(OperatorKind::KgBlock, params, n)?;
    let split = kernel_split(&m, ZeroTol::default())?;
    let mut e1 = vec![1.0; n];
    e1.extend(std::iter::repeat_n(0.0, n));
    let mut e2 = vec![0.0; n];
    e2.extend(std::iter::repeat_n(1.0, n));
    let u1 = deflated_solve(&m, &split, &e1)?;
    let u2 = deflated_solve(&m, &split, &e2)?;
    Ok([
        [pairing(&m, &u1, &e1), pairing(&m, &u1, &e2)],
        [pairing(&m, &u2, &e1), pairing(&m, &u2, &e2)],
    ])
}

/// Root of `2E(k) - K(k)` on `[0.85, 0.95]`.
pub fn find_kstar() -> Modulus {
    let f = |k: f64| {
        let ek = complete_elliptic(Modulus::new(k).expect("bracket inside (0, 1)"));
        2.0 * ek.big_e - ek.big_k
    };
    let k = bisect(f, 0.85, 0.95, 0.0).expect("2E - K changes sign on [0.85, 0.95]");
    Modulus::new(k).expect("root inside (0, 1)")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waves::{kg_from_k, nls_from_k, nls_omega};
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn m(k: f64) -> Modulus {
        Modulus::new(k).unwrap()
    }

    /// `D_1` from the Lame eigenpairs: `L_1^{-1} 1` is a combination of
    /// `f_0`, `f_4`, integrated by a fine midpoint rule.
    fn d1_from_lame(period: f64, k: f64) -> f64 {
        let p = kg_from_k_relaxed(period, m(k)).unwrap();
        let pairs = crate::operators::lame_eigenpairs(&p).unwrap();
        let (l0, l4) = (pairs[0].value, pairs[4].value);
        let r = (1.0 - k * k + k.powi(4)).sqrt();
        let n = 20_000;
        let h = period / n as f64;
        let (mut i0, mut i4) = (0.0, 0.0);
        for j in 0..n {
            let x = (j as f64 + 0.5) * h;
            i0 += h * pairs[0].eigenfunction.eval(x);
            i4 += h * pairs[4].eigenfunction.eval(x);
        }
        -1.5 * (l4 * i0 - l0 * i4) / (r * l0 * l4)
    }

    #[test]
    fn kstar_bracket_and_residual() {
        let ks = find_kstar();
        assert!((0.906..=0.911).contains(&ks.value()));
        assert!((ks.value() - 0.9089).abs() < 1e-4);
        let ek = complete_elliptic(ks);
        assert!((2.0 * ek.big_e - ek.big_k).abs() < 1e-10);
    }

    #[test]
    fn closed_form_reference_and_signs() {
        let d = d1_closed_form(TAU, m(0.9)).unwrap().value;
        let oracle = -TAU * 0.62 * (2.0 * 1.171697 - 2.280549) / 2.280549;
        assert!((d - oracle).abs() < 1e-5, "{d}");
        assert!((d + 0.10736).abs() < 1e-5);
        assert!(d1_closed_form(TAU, m(0.95)).unwrap().value > 0.0);
        assert!(d1_closed_form(TAU, find_kstar()).unwrap().value.abs() < 1e-9);
        for k in [0.75, 0.85, 0.93] {
            let lame = d1_from_lame(TAU, k);
            let cf = d1_closed_form(TAU, m(k)).unwrap().value;
            assert!((lame - cf).abs() < 1e-8 * cf.abs().max(1.0), "k={k}: {lame} vs {cf}");
        }
    }

    #[test]
    fn linear_solve_matches_closed_form() {
        let p = kg_from_k(TAU, m(0.9)).unwrap();
        let ls = d_linear_solve(OperatorKind::KgL1, &p, 512).unwrap().value;
        let cf = d1_closed_form(TAU, m(0.9)).unwrap().value;
        assert!(((ls - cf) / cf).abs() < 1e-6);
        let block = d_linear_solve(OperatorKind::KgBlock, &p, 256).unwrap().value;
        assert!(((block - cf) / cf).abs() < 1e-6);
    }

    #[test]
    fn d2_is_rescaled_d1() {
        for k in [0.8, 0.9, 0.95] {
            let p = nls_from_k(TAU, m(k)).unwrap();
            let d2 = d_linear_solve(OperatorKind::NlsL2, &p, 256).unwrap().value;
            let d1 = d1_closed_form(TAU, m(k)).unwrap().value;
            assert!((d2 - d1 / nls_omega(TAU, m(k))).abs() < 1e-7 * d2.abs().max(1e-3), "k={k}");
        }
    }

    #[test]
    fn d3_ivp_against_linear_solve() {
        for k in [0.75, 0.9, 0.97] {
            let p = nls_from_k(TAU, m(k)).unwrap();
            let (ivp, green) = d3_via_ivp(&p, DEFAULT_IVP_STEPS).unwrap();
            let ls = d_linear_solve(OperatorKind::NlsL3, &p, 512).unwrap().value;
            assert!(ivp.value < 0.0);
            assert!(((ivp.value - ls) / ls).abs() < 1e-6, "k={k}: {} vs {ls}", ivp.value);
            assert!(green.periodicity_defect < 1e-8);
        }
    }

    #[test]
    fn auxiliary_solution_properties() {
        let p = nls_from_k(TAU, m(0.9)).unwrap();
        let aux = auxiliary_y(&p, 20_000).unwrap();
        assert!(aux.y_integral.abs() < 1e-8);
        assert!(aux.oddness_defect < 1e-8);
        assert!(aux.wronskian_defect < 1e-6);
        assert!(aux.floquet_residual < 1e-8);
        assert!(aux.reconstruction_defect < 1e-6);
        assert!(aux.green.p[0].abs() < 1e-15);
        assert!(aux.green.p.last().unwrap().abs() < 1e-8);
        assert!(aux.green.theta.unwrap().is_finite());
    }

    #[test]
    fn index_reports() {
        let r = index_report(OperatorKind::KgL1, &kg_from_k(TAU, m(0.9)).unwrap(), 256).unwrap();
        assert_eq!((r.n0, r.z0, r.constrained_n, r.constrained_z), (1, 0, 1, 1));
        let r = index_report(OperatorKind::KgL1, &kg_from_k(TAU, m(0.95)).unwrap(), 256).unwrap();
        assert_eq!((r.n0, r.z0, r.constrained_n, r.constrained_z), (0, 0, 2, 1));
        for k in [0.8, 0.95] {
            let p = nls_from_k(TAU, m(k)).unwrap();
            let r = index_report(OperatorKind::NlsL3, &p, 256).unwrap();
            assert_eq!((r.constrained_n, r.constrained_z), (0, 1));
        }
        let b = nls_block_index(&nls_from_k(TAU, m(0.85)).unwrap(), 128).unwrap();
        assert_eq!((b.constrained_n, b.constrained_z), (1, 2));
        assert!(index_report(OperatorKind::NlsBlock, &nls_from_k(TAU, m(0.85)).unwrap(), 128).is_err());
    }

    #[test]
    fn corrections_follow_the_sign_of_d() {
        assert_eq!(index_corrections(-0.1, TAU), (1, 0));
        assert_eq!(index_corrections(0.1, TAU), (0, 0));
        assert_eq!(index_corrections(1e-9, TAU), (0, 1));
    }

    #[test]
    fn block_dmatrix_structure() {
        let p = kg_from_k(TAU, m(0.9)).unwrap();
        let d = kg_block_dmatrix(&p, 512).unwrap();
        let d1 = d1_closed_form(TAU, m(0.9)).unwrap().value;
        assert!(d[0][1].abs() < 1e-8 && d[1][0].abs() < 1e-8, "{d:?}");
        assert!((d[1][1] - TAU).abs() < 1e-8);
        assert!(((d[0][0] - d1) / d1).abs() < 1e-6);
    }

    #[test]
    fn ivp_rejects_bad_input() {
        let kg = kg_from_k(TAU, m(0.9)).unwrap();
        assert!(d3_via_ivp(&kg, DEFAULT_IVP_STEPS).is_err());
        let p = nls_from_k(TAU, m(0.9)).unwrap();
        assert!(d3_via_ivp(&p, 100).is_err());
    }
}
