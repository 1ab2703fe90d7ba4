//! Dense pseudospectral discretizations of the linearized operators and
//! their spectra.
//!
//! | kind       | operator                                   | size   |
//! |------------|--------------------------------------------|--------|
//! | `KgL1`     | `-omega d^2 - 3 phi^2 + 1`                 | N      |
//! | `NlsL2`    | `-d^2 + omega - 3 phi^2`                   | N      |
//! | `NlsL3`    | `-d^2 + omega - phi^2`                     | N      |
//! | `KgBlock`  | `[[-d^2 - 3 phi^2 + 1, c d], [-c d, 1]]`   | 2N     |
//! | `NlsBlock` | `diag(L2, L3)`                             | 2N     |

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::elliptic::JacobiSampler;
use crate::error::{CnoidalError, Result};
use crate::spectral::{first_derivative_matrix, second_derivative_matrix, Grid};
use crate::waves::{Model, WaveParams};

pub const MIN_OPERATOR_SIZE: usize = 64;
pub const DEFAULT_RELATIVE_ZERO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    KgL1,
    NlsL2,
    NlsL3,
    KgBlock,
    NlsBlock,
}

impl OperatorKind {
    pub fn model(self) -> Model {
        match self {
            OperatorKind::KgL1 | OperatorKind::KgBlock => Model::Kg,
            _ => Model::Nls,
        }
    }

    pub fn is_block(self) -> bool {
        matches!(self, OperatorKind::KgBlock | OperatorKind::NlsBlock)
    }

    /// Resolve the `(model, op)` pair used on the command line, where `op`
    /// is one of `L1`, `L2`, `L3`, `block`.
    pub fn from_model_op(model: Model, op: &str) -> Result<Self> {
        match (model, op.to_ascii_lowercase().as_str()) {
            (Model::Kg, "l1") => Ok(OperatorKind::KgL1),
            (Model::Kg, "block") => Ok(OperatorKind::KgBlock),
            (Model::Nls, "l2") => Ok(OperatorKind::NlsL2),
            (Model::Nls, "l3") => Ok(OperatorKind::NlsL3),
            (Model::Nls, "block") => Ok(OperatorKind::NlsBlock),
            (m, o) => Err(CnoidalError::domain(format!("operator '{o}' is not defined for model {m}"))),
        }
    }
}

impl std::fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// A discretized operator together with the wave it linearizes about.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub kind: OperatorKind,
    pub params: WaveParams,
    /// Grid size; the matrix is `n x n` or `2n x 2n` for block kinds.
    pub n: usize,
    pub entries: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn grid(&self) -> Grid {
        Grid {
            period: self.params.period,
            n: self.n,
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.entries * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }
}

pub fn build(kind: OperatorKind, params: &WaveParams, n: usize) -> Result<OperatorMatrix> {
    if n < MIN_OPERATOR_SIZE || !n.is_multiple_of(2) {
        return Err(CnoidalError::domain(format!(
            "operator size must be even and >= {MIN_OPERATOR_SIZE}, got {n}"
        )));
    }
    if kind.model() != params.model {
        return Err(CnoidalError::domain(format!(
            "operator {kind} needs {} parameters, got {}",
            kind.model(),
            params.model
        )));
    }
    let grid = Grid::new(params.period, n)?;
    let phi2: Vec<f64> = params
        .sampler()
        .values_on(&grid.points())
        .into_iter()
        .map(|p| p * p)
        .collect();
    let d2 = second_derivative_matrix(grid);
    let omega = params.omega;

    let scalar = |coef: f64, shift: f64, weight: f64| {
        let mut m = &d2 * (-coef);
        for j in 0..n {
            m[(j, j)] += shift - weight * phi2[j];
        }
        m
    };

    let entries = match kind {
        OperatorKind::KgL1 => scalar(omega, 1.0, 3.0),
        OperatorKind::NlsL2 => scalar(1.0, omega, 3.0),
        OperatorKind::NlsL3 => scalar(1.0, omega, 1.0),
        OperatorKind::KgBlock => {
            let c = params.speed.ok_or_else(|| {
                CnoidalError::domain(format!(
                    "KG block needs a real speed; omega = {omega} >= 1 at k = {}",
                    params.k.value()
                ))
            })?;
            let d1 = first_derivative_matrix(grid) * c;
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&scalar(1.0, 1.0, 3.0));
            m.view_mut((0, n), (n, n)).copy_from(&d1);
            m.view_mut((n, 0), (n, n)).copy_from(&(-d1));
            for j in n..2 * n {
                m[(j, j)] = 1.0;
            }
            m
        }
        OperatorKind::NlsBlock => {
            let mut m = DMatrix::zeros(2 * n, 2 * n);
            m.view_mut((0, 0), (n, n)).copy_from(&scalar(1.0, omega, 3.0));
            m.view_mut((n, n), (n, n)).copy_from(&scalar(1.0, omega, 1.0));
            m
        }
    };
    // The Fourier second-derivative matrix is symmetric only up to rounding.
    let entries = (&entries + entries.transpose()) * 0.5;
    Ok(OperatorMatrix {
        kind,
        params: *params,
        n,
        entries,
    })
}

/// Threshold separating zero from nonzero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ZeroTol {
    /// Multiple of the spectral radius.
    Relative(f64),
    Absolute(f64),
}

impl Default for ZeroTol {
    fn default() -> Self {
        ZeroTol::Relative(DEFAULT_RELATIVE_ZERO_TOL)
    }
}

impl ZeroTol {
    pub fn resolve(self, eigenvalues: &[f64]) -> f64 {
        match self {
            ZeroTol::Absolute(t) => t,
            ZeroTol::Relative(r) => r * eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub zero_tol: f64,
    pub n_neg: usize,
    pub z_dim: usize,
}

impl SpectrumReport {
    pub fn from_eigenvalues(eigenvalues: Vec<f64>, tol: ZeroTol) -> Self {
        let zero_tol = tol.resolve(&eigenvalues);
        let n_neg = eigenvalues.iter().filter(|&&v| v < -zero_tol).count();
        let z_dim = eigenvalues.iter().filter(|&&v| v.abs() <= zero_tol).count();
        SpectrumReport {
            eigenvalues,
            zero_tol,
            n_neg,
            z_dim,
        }
    }

    pub fn n_pos(&self) -> usize {
        self.eigenvalues.len() - self.n_neg - self.z_dim
    }
}

/// Eigenvalues (ascending) and matching unit eigenvectors as columns.
pub fn eigen_decompose(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 100 * dim.max(1))
        .ok_or(CnoidalError::EigenFailure(dim))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

pub fn symmetric_spectrum(m: &DMatrix<f64>, tol: ZeroTol) -> Result<SpectrumReport> {
    let (values, _) = eigen_decompose(m)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CnoidalError::EigenFailure(m.nrows()));
    }
    Ok(SpectrumReport::from_eigenvalues(values, tol))
}

pub fn spectrum(m: &OperatorMatrix, tol: ZeroTol) -> Result<SpectrumReport> {
    symmetric_spectrum(&m.entries, tol)
}

/// Columns form an orthonormal basis of the zero-mean subspace of `R^n`,
/// taken from a Householder reflector that swaps `e_1` and `1/sqrt(n)`.
pub fn zero_mean_basis(n: usize) -> DMatrix<f64> {
    let u = 1.0 / (n as f64).sqrt();
    let mut v = DVector::from_element(n, u);
    v[0] -= 1.0;
    let vv = v.norm_squared();
    DMatrix::from_fn(n, n - 1, |r, c| {
        let col = c + 1;
        let id = if r == col { 1.0 } else { 0.0 };
        id - 2.0 * v[r] * v[col] / vv
    })
}

/// Basis of the constrained space: zero mean on the first component for
/// the KG block, on every component for the scalar kinds and the NLS block.
pub fn constraint_basis(kind: OperatorKind, n: usize) -> DMatrix<f64> {
    let q = zero_mean_basis(n);
    match kind {
        OperatorKind::KgBlock => {
            let mut b = DMatrix::zeros(2 * n, 2 * n - 1);
            b.view_mut((0, 0), (n, n - 1)).copy_from(&q);
            for j in 0..n {
                b[(n + j, n - 1 + j)] = 1.0;
            }
            b
        }
        OperatorKind::NlsBlock => {
            let mut b = DMatrix::zeros(2 * n, 2 * n - 2);
            b.view_mut((0, 0), (n, n - 1)).copy_from(&q);
            b.view_mut((n, n - 1), (n, n - 1)).copy_from(&q);
            b
        }
        _ => q,
    }
}

/// `B^T M B` with `B` from [`constraint_basis`].
pub fn project_constrained(m: &OperatorMatrix) -> DMatrix<f64> {
    let b = constraint_basis(m.kind, m.n);
    let p = b.transpose() * &m.entries * &b;
    (&p + p.transpose()) * 0.5
}

pub fn constrained_spectrum(m: &OperatorMatrix, tol: ZeroTol) -> Result<SpectrumReport> {
    symmetric_spectrum(&project_constrained(m), tol)
}

/// `||M v - value v||_2 / ||v||_2`.
pub fn eigen_residual(m: &OperatorMatrix, value: f64, vector: &[f64]) -> Result<f64> {
    if vector.len() != m.dim() {
        return Err(CnoidalError::domain(format!(
            "vector length {} does not match operator dimension {}",
            vector.len(),
            m.dim()
        )));
    }
    let v = DVector::from_column_slice(vector);
    let norm = v.norm();
    if norm == 0.0 {
        return Err(CnoidalError::domain("eigen residual of the zero vector"));
    }
    Ok((&m.entries * &v - &v * value).norm() / norm)
}

/// The five explicit periodic eigenfunctions of `L1`, ordered by eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LameMode {
    /// `k^2 sn^2 - (1 + k^2 + r) / 3`, `r = sqrt(1 - k^2 + k^4)`.
    Ground,
    CnDn,
    /// `sn dn`, proportional to `phi'`.
    SnDn,
    SnCn,
    /// `k^2 sn^2 - (1 + k^2 - r) / 3`.
    Top,
}

#[derive(Debug, Clone)]
pub struct LameEigenfunction {
    mode: LameMode,
    jacobi: JacobiSampler,
    scale: f64,
    k2: f64,
    root: f64,
}

impl LameEigenfunction {
    pub fn mode(&self) -> LameMode {
        self.mode
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = self.jacobi.eval(self.scale * x);
        match self.mode {
            LameMode::Ground => self.k2 * t.sn * t.sn - (1.0 + self.k2 + self.root) / 3.0,
            LameMode::Top => self.k2 * t.sn * t.sn - (1.0 + self.k2 - self.root) / 3.0,
            LameMode::CnDn => t.cn * t.dn,
            LameMode::SnDn => t.sn * t.dn,
            LameMode::SnCn => t.sn * t.cn,
        }
    }

    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LameEigenpair {
    pub value: f64,
    pub eigenfunction: LameEigenfunction,
}

/// Closed-form eigenpairs `lambda_0 < ... < lambda_4` of `L1`. The values
/// depend on `k` only.
pub fn lame_eigenpairs(params: &WaveParams) -> Result<Vec<LameEigenpair>> {
    if params.model != Model::Kg {
        return Err(CnoidalError::domain("Lame eigenpairs are stated for the KG operator L1"));
    }
    let k2 = params.k.value().powi(2);
    let denom = 2.0 * k2 - 1.0;
    let root = (1.0 - k2 + k2 * k2).sqrt();
    let jacobi = JacobiSampler::new(params.k);
    let pair = |mode, value| LameEigenpair {
        value,
        eigenfunction: LameEigenfunction {
            mode,
            jacobi: jacobi.clone(),
            scale: params.scale,
            k2,
            root,
        },
    };
    Ok(vec![
        pair(LameMode::Ground, (1.0 - 2.0 * k2 - 2.0 * root) / denom),
        pair(LameMode::CnDn, -3.0 * k2 / denom),
        pair(LameMode::SnDn, 0.0),
        pair(LameMode::SnCn, 3.0 * (1.0 - k2) / denom),
        pair(LameMode::Top, (1.0 - 2.0 * k2 + 2.0 * root) / denom),
    ])
}
