//! Uniform periodic grids and Fourier pseudospectral differentiation.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{CnoidalError, Result};

/// Left-closed uniform grid `x_j = j L / N`, `j = 0..N`, with `N` even.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub period: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(period: f64, n: usize) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(CnoidalError::domain(format!("period must be positive, got {period}")));
        }
        if n < 4 || !n.is_multiple_of(2) {
            return Err(CnoidalError::domain(format!("grid size must be even and >= 4, got {n}")));
        }
        Ok(Grid { period, n })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|j| j as f64 * h).collect()
    }

    /// Signed wavenumbers `2 pi m / L` in FFT order; the Nyquist entry is
    /// `-pi N / L`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n as i64;
        let base = 2.0 * PI / self.period;
        (0..n)
            .map(|j| if j < n / 2 { j } else { j - n })
            .map(|m| base * m as f64)
            .collect()
    }

    /// Rectangle-rule `(f, g)_{L^2}`; exact for trigonometric polynomials
    /// of degree below `N / 2`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), g.len());
        self.spacing() * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.spacing() * f.iter().sum::<f64>()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

/// First-derivative Fourier matrix. Antisymmetric; the Nyquist mode is
/// annihilated.
pub fn first_derivative_matrix(grid: Grid) -> DMatrix<f64> {
    let n = grid.n;
    let h = 2.0 * PI / n as f64;
    let scale = 2.0 * PI / grid.period;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            let d = i as i64 - j as i64;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            scale * 0.5 * sign / (0.5 * d as f64 * h).tan()
        }
    })
}

/// Second-derivative Fourier matrix with symbol `-(2 pi m / L)^2`,
/// including the Nyquist mode. Symmetric.
pub fn second_derivative_matrix(grid: Grid) -> DMatrix<f64> {
    let n = grid.n;
    let h = 2.0 * PI / n as f64;
    let scale = (2.0 * PI / grid.period).powi(2);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            scale * (-PI * PI / (3.0 * h * h) - 1.0 / 6.0)
        } else {
            let d = i as i64 - j as i64;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let s = (0.5 * d as f64 * h).sin();
            scale * (-0.5 * sign / (s * s))
        }
    })
}

/// FFT-based spectral differentiation on a fixed grid.
#[derive(Clone)]
pub struct SpectralDiff {
    grid: Grid,
    kappa: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralDiff").field("grid", &self.grid).finish()
    }
}

impl SpectralDiff {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        SpectralDiff {
            grid,
            kappa: grid.wavenumbers(),
            forward: planner.plan_fft_forward(grid.n),
            inverse: planner.plan_fft_inverse(grid.n),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.kappa
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let s = 1.0 / self.grid.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
    }

    pub fn spectrum(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// `d^order f / dx^order` of a real sample vector. Odd orders drop the
    /// Nyquist mode, matching [`first_derivative_matrix`].
    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        let mut buf = self.spectrum(f);
        let nyq = self.grid.n / 2;
        for (j, z) in buf.iter_mut().enumerate() {
            if order % 2 == 1 && j == nyq {
                *z = Complex64::new(0.0, 0.0);
                continue;
            }
            *z *= Complex64::new(0.0, self.kappa[j]).powu(order);
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Complex-valued derivative, used by the Schrödinger solver.
    pub fn derivative_complex(&self, f: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        let nyq = self.grid.n / 2;
        for (j, z) in buf.iter_mut().enumerate() {
            if order % 2 == 1 && j == nyq {
                *z = Complex64::new(0.0, 0.0);
                continue;
            }
            *z *= Complex64::new(0.0, self.kappa[j]).powu(order);
        }
        self.inverse(&mut buf);
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig_poly(grid: Grid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let w = 2.0 * PI / grid.period;
        let xs = grid.points();
        let f = xs.iter().map(|&x| (w * x).sin() + 0.3 * (5.0 * w * x).cos()).collect();
        let d1 = xs
            .iter()
            .map(|&x| w * (w * x).cos() - 1.5 * w * (5.0 * w * x).sin())
            .collect();
        let d2 = xs
            .iter()
            .map(|&x| -w * w * (w * x).sin() - 7.5 * w * w * (5.0 * w * x).cos())
            .collect();
        (f, d1, d2)
    }

    #[test]
    fn matrices_differentiate_trig_polynomials() {
        let grid = Grid::new(3.7, 32).unwrap();
        let (f, d1, d2) = trig_poly(grid);
        let fv = nalgebra::DVector::from_vec(f);
        let a = first_derivative_matrix(grid) * &fv;
        let b = second_derivative_matrix(grid) * &fv;
        for j in 0..grid.n {
            assert!((a[j] - d1[j]).abs() < 1e-11);
            assert!((b[j] - d2[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn fft_derivative_matches_matrices() {
        let grid = Grid::new(2.0 * PI, 24).unwrap();
        let sd = SpectralDiff::new(grid);
        let f: Vec<f64> = grid.points().iter().map(|&x| (x.cos()).exp()).collect();
        let fv = nalgebra::DVector::from_vec(f.clone());
        let m1 = first_derivative_matrix(grid) * &fv;
        let m2 = second_derivative_matrix(grid) * &fv;
        let s1 = sd.derivative(&f, 1);
        let s2 = sd.derivative(&f, 2);
        for j in 0..grid.n {
            assert!((m1[j] - s1[j]).abs() < 1e-12);
            assert!((m2[j] - s2[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetry_structure() {
        let grid = Grid::new(1.0, 16).unwrap();
        let d1 = first_derivative_matrix(grid);
        let d2 = second_derivative_matrix(grid);
        assert!((&d1 + d1.transpose()).amax() < 1e-12);
        assert!((&d2 - d2.transpose()).amax() < 1e-9);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 7).is_err());
        assert!(Grid::new(0.0, 8).is_err());
        assert!(Grid::new(1.0, 8).is_ok());
    }
}
