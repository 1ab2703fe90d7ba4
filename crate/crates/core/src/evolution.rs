//! Time integration of the periodic KG and NLS equations, conserved
//! quantities and the orbital distance to the wave's symmetry orbit.
//!
//! * KG, `u_tt = u_xx - u + u^3`: Störmer-Verlet (kick-drift-kick) with a
//!   spectral Laplacian. Stable for `dt <= KG_DT_FACTOR * L / N`.
//! * NLS, `i u_t + u_xx + |u|^2 u = 0`: split-step Fourier, Strang or its
//!   fourth-order triple-jump composition.
//!
//! The KG state `(u, v) = (phi, c phi')` evolves as `u = phi(x + c t)`; the
//! NLS state `phi` evolves as `e^{i omega t} phi`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elliptic::Modulus;
use crate::error::{CnoidalError, Result};
use crate::operators::{build, OperatorKind};
use crate::spectral::{Grid, SpectralDiff};
use crate::waves::{from_k, Model, WaveParams};

/// `dt <= KG_DT_FACTOR * L / N` for the Störmer-Verlet step.
pub const KG_DT_FACTOR: f64 = 0.5;
/// Amplitude beyond which a trajectory is declared blown up.
pub const BLOW_UP_AMPLITUDE: f64 = 1e6;
/// Number of random Fourier modes in a zero-mean perturbation.
pub const PERTURBATION_MODES: usize = 8;

/// KG: `u`, `v = u_t`. NLS: `u = P + i Q` stored as `(P, Q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldState {
    pub model: Model,
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldState {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn from_complex(t: f64, z: &[Complex64]) -> Self {
        FieldState {
            model: Model::Nls,
            t,
            u: z.iter().map(|c| c.re).collect(),
            v: z.iter().map(|c| c.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.u.iter().zip(&self.v).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    pub fn means(&self) -> (f64, f64) {
        let n = self.n() as f64;
        (self.u.iter().sum::<f64>() / n, self.v.iter().sum::<f64>() / n)
    }

    pub fn project_zero_mean(&mut self) {
        let (mu, mv) = self.means();
        self.u.iter_mut().for_each(|x| *x -= mu);
        self.v.iter_mut().for_each(|x| *x -= mv);
    }

    /// `Err(BlowUp)` on non-finite entries or amplitude above the cap.
    pub fn check_bounded(&self) -> Result<()> {
        let mut peak = 0.0f64;
        for x in self.u.iter().chain(&self.v) {
            if !x.is_finite() {
                return Err(CnoidalError::BlowUp {
                    t: self.t,
                    reason: "non-finite value".into(),
                });
            }
            peak = peak.max(x.abs());
        }
        if peak > BLOW_UP_AMPLITUDE {
            return Err(CnoidalError::BlowUp {
                t: self.t,
                reason: format!("amplitude {peak:.3e} exceeds {BLOW_UP_AMPLITUDE:e}"),
            });
        }
        Ok(())
    }
}

/// The wave itself as a state: `(phi, c phi')` for KG, `phi` for NLS.
pub fn wave_state(params: &WaveParams, n: usize) -> Result<FieldState> {
    let grid = Grid::new(params.period, n)?;
    let xs = grid.points();
    let s = params.sampler();
    let u = s.values_on(&xs);
    let v = match params.model {
        Model::Kg => {
            let c = params.speed.ok_or_else(|| CnoidalError::domain("KG evolution needs a real speed"))?;
            s.derivatives_on(&xs).into_iter().map(|d| c * d).collect()
        }
        Model::Nls => vec![0.0; n],
    };
    Ok(FieldState {
        model: params.model,
        t: 0.0,
        u,
        v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservedPair {
    /// KG `E`, NLS `(1/2) int |u_x|^2 - |u|^4 / 2`.
    pub energy: f64,
    /// KG `F = int u_x v`, NLS `(1/2) int |u|^2`.
    pub momentum_or_mass: f64,
}

impl ConservedPair {
    /// Relative drifts against `reference`; absolute when the reference
    /// value vanishes.
    pub fn drift_from(&self, reference: &ConservedPair) -> (f64, f64) {
        let rel = |a: f64, b: f64| {
            let d = (a - b).abs();
            if b.abs() > 1e-12 {
                d / b.abs()
            } else {
                d
            }
        };
        (
            rel(self.energy, reference.energy),
            rel(self.momentum_or_mass, reference.momentum_or_mass),
        )
    }
}

pub fn conserved(state: &FieldState, diff: &SpectralDiff) -> ConservedPair {
    let grid = diff.grid();
    let h = grid.spacing();
    match state.model {
        Model::Kg => {
            let ux = diff.derivative(&state.u, 1);
            let mut e = 0.0;
            let mut f = 0.0;
            for j in 0..state.n() {
                let (u, v) = (state.u[j], state.v[j]);
                e += ux[j] * ux[j] + v * v + u * u * (1.0 - 0.5 * u * u);
                f += ux[j] * v;
            }
            ConservedPair {
                energy: 0.5 * h * e,
                momentum_or_mass: h * f,
            }
        }
        Model::Nls => {
            let z = state.to_complex();
            let zx = diff.derivative_complex(&z, 1);
            let mut e = 0.0;
            let mut mass = 0.0;
            for j in 0..state.n() {
                let a2 = z[j].norm_sqr();
                e += zx[j].norm_sqr() - 0.5 * a2 * a2;
                mass += a2;
            }
            ConservedPair {
                energy: 0.5 * h * e,
                momentum_or_mass: 0.5 * h * mass,
            }
        }
    }
}

/// Composition scheme of the NLS split-step integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    /// Second order: half rotation, full linear step, half rotation.
    Strang,
    /// Fourth order: Strang steps of sizes `w1 dt`, `w0 dt`, `w1 dt`
    /// (Yoshida triple jump).
    #[default]
    Yoshida4,
}

/// Split-step integrator for NLS: the nonlinear part is the exact phase
/// rotation `u e^{i |u|^2 tau}`, the linear part the exact multiplier
/// `e^{-i kappa^2 tau}`.
#[derive(Debug, Clone)]
pub struct NlsStepper {
    diff: SpectralDiff,
    dt: f64,
    /// `(substep, multiplier)` per Strang stage.
    stages: Vec<(f64, Vec<Complex64>)>,
}

impl NlsStepper {
    pub fn new(grid: Grid, dt: f64) -> Result<Self> {
        Self::with_scheme(grid, dt, SplitScheme::default())
    }

    pub fn with_scheme(grid: Grid, dt: f64, scheme: SplitScheme) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CnoidalError::domain(format!("time step must be positive, got {dt}")));
        }
        let diff = SpectralDiff::new(grid);
        let weights = match scheme {
            SplitScheme::Strang => vec![1.0],
            SplitScheme::Yoshida4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                vec![w1, -c * w1, w1]
            }
        };
        let stages = weights
            .into_iter()
            .map(|w| {
                let tau = w * dt;
                let mult = diff
                    .wavenumbers()
                    .iter()
                    .map(|&k| Complex64::from_polar(1.0, -k * k * tau))
                    .collect();
                (tau, mult)
            })
            .collect();
        Ok(NlsStepper { diff, dt, stages })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn rotate(z: &mut [Complex64], tau: f64) {
        for c in z.iter_mut() {
            *c *= Complex64::from_polar(1.0, c.norm_sqr() * tau);
        }
    }

    fn step_complex(&self, z: &mut [Complex64]) {
        for (tau, mult) in &self.stages {
            Self::rotate(z, 0.5 * tau);
            self.diff.forward(z);
            for (c, p) in z.iter_mut().zip(mult) {
                *c *= p;
            }
            self.diff.inverse(z);
            Self::rotate(z, 0.5 * tau);
        }
    }

    pub fn step(&self, state: &mut FieldState) -> Result<()> {
        self.advance(state, 1)
    }

    pub fn advance(&self, state: &mut FieldState, steps: usize) -> Result<()> {
        let mut z = state.to_complex();
        for _ in 0..steps {
            self.step_complex(&mut z);
        }
        *state = FieldState::from_complex(state.t + steps as f64 * self.dt, &z);
        state.check_bounded()
    }
}

/// One split step of size `dt` (default scheme) on a grid of period `period`.
pub fn step_nls(state: &FieldState, period: f64, dt: f64) -> Result<FieldState> {
    let mut next = state.clone();
    NlsStepper::new(Grid::new(period, state.n())?, dt)?.step(&mut next)?;
    Ok(next)
}

/// Störmer-Verlet integrator for KG.
#[derive(Debug, Clone)]
pub struct KgStepper {
    diff: SpectralDiff,
    dt: f64,
    project_zero_mean: bool,
}

impl KgStepper {
    pub fn new(grid: Grid, dt: f64, project_zero_mean: bool) -> Result<Self> {
        let bound = KG_DT_FACTOR * grid.spacing();
        if !(dt.is_finite() && dt > 0.0 && dt <= bound) {
            return Err(CnoidalError::domain(format!(
                "KG time step must lie in (0, {bound:.3e}] (= {KG_DT_FACTOR} L/N), got {dt}"
            )));
        }
        Ok(KgStepper {
            diff: SpectralDiff::new(grid),
            dt,
            project_zero_mean,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `u_xx - u + u^3`.
    pub fn acceleration(&self, u: &[f64]) -> Vec<f64> {
        let uxx = self.diff.derivative(u, 2);
        uxx.iter().zip(u).map(|(d, &x)| d - x + x * x * x).collect()
    }

    pub fn step(&self, state: &mut FieldState) -> Result<()> {
        self.advance(state, 1)
    }

    pub fn advance(&self, state: &mut FieldState, steps: usize) -> Result<()> {
        let half = 0.5 * self.dt;
        let mut acc = self.acceleration(&state.u);
        for _ in 0..steps {
            for (v, a) in state.v.iter_mut().zip(&acc) {
                *v += half * a;
            }
            for (u, v) in state.u.iter_mut().zip(&state.v) {
                *u += self.dt * v;
            }
            acc = self.acceleration(&state.u);
            for (v, a) in state.v.iter_mut().zip(&acc) {
                *v += half * a;
            }
            state.t += self.dt;
            if self.project_zero_mean {
                state.project_zero_mean();
                acc = self.acceleration(&state.u);
            }
        }
        state.check_bounded()
    }
}

/// One Störmer-Verlet step without projection.
pub fn step_kg(state: &FieldState, period: f64, dt: f64) -> Result<FieldState> {
    let mut next = state.clone();
    KgStepper::new(Grid::new(period, state.n())?, dt, false)?.step(&mut next)?;
    Ok(next)
}

/// Precomputed orbit of a wave, measuring `inf || U - g Phi ||` over the
/// symmetry group: translations for KG in `H^1 x L^2`, translations and
/// phase rotations for NLS in `H^1`.
#[derive(Debug, Clone)]
pub struct OrbitMetric {
    model: Model,
    diff: SpectralDiff,
    weight_u: Vec<f64>,
    weight_v: Vec<f64>,
    phi_hat: Vec<Complex64>,
    psi_hat: Vec<Complex64>,
    norm_sq: f64,
}

impl OrbitMetric {
    pub fn new(params: &WaveParams, n: usize) -> Result<Self> {
        let wave = wave_state(params, n)?;
        let diff = SpectralDiff::new(Grid::new(params.period, n)?);
        let sobolev: Vec<f64> = diff.wavenumbers().iter().map(|k| 1.0 + k * k).collect();
        let (weight_u, weight_v) = match params.model {
            Model::Kg => (sobolev, vec![1.0; n]),
            Model::Nls => (sobolev.clone(), sobolev),
        };
        let phi_hat = diff.spectrum(&wave.u);
        let psi_hat = diff.spectrum(&wave.v);
        let mut m = OrbitMetric {
            model: params.model,
            diff,
            weight_u,
            weight_v,
            phi_hat,
            psi_hat,
            norm_sq: 0.0,
        };
        m.norm_sq = m.spectral_norm_sq(&m.phi_hat.clone(), &m.psi_hat.clone());
        Ok(m)
    }

    fn scale(&self) -> f64 {
        let g = self.diff.grid();
        g.period / (g.n * g.n) as f64
    }

    fn spectral_norm_sq(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        let s: f64 = a
            .iter()
            .zip(&self.weight_u)
            .map(|(z, w)| w * z.norm_sqr())
            .chain(b.iter().zip(&self.weight_v).map(|(z, w)| w * z.norm_sqr()))
            .sum();
        self.scale() * s
    }

    /// Energy-space norm of a state.
    pub fn norm(&self, state: &FieldState) -> f64 {
        self.spectral_norm_sq(&self.diff.spectrum(&state.u), &self.diff.spectrum(&state.v))
            .sqrt()
    }

    /// Cross-spectrum `P_m` with `<U, T_s Phi> = scale * sum P_m e^{i k_m s}`
    /// (real part for KG, modulus for NLS after the optimal rotation).
    fn cross(&self, state: &FieldState) -> Vec<Complex64> {
        match self.model {
            Model::Kg => {
                let uh = self.diff.spectrum(&state.u);
                let vh = self.diff.spectrum(&state.v);
                (0..uh.len())
                    .map(|m| {
                        uh[m] * self.phi_hat[m].conj() * self.weight_u[m]
                            + vh[m] * self.psi_hat[m].conj() * self.weight_v[m]
                    })
                    .collect()
            }
            Model::Nls => {
                let mut zh = state.to_complex();
                self.diff.forward(&mut zh);
                (0..zh.len())
                    .map(|m| zh[m] * self.phi_hat[m].conj() * self.weight_u[m])
                    .collect()
            }
        }
    }

    /// Objective (to maximize) and its first two derivatives in the shift.
    fn objective(&self, p: &[Complex64], s: f64) -> (f64, f64, f64) {
        let kappa = self.diff.wavenumbers();
        let (mut c, mut c1, mut c2) = (Complex64::default(), Complex64::default(), Complex64::default());
        for (pm, &k) in p.iter().zip(kappa) {
            let t = pm * Complex64::from_polar(1.0, k * s);
            c += t;
            c1 += t * Complex64::new(0.0, k);
            c2 -= t * (k * k);
        }
        match self.model {
            Model::Kg => (c.re, c1.re, c2.re),
            Model::Nls => (
                c.norm_sqr(),
                2.0 * (c.conj() * c1).re,
                2.0 * (c1.norm_sqr() + (c.conj() * c2).re),
            ),
        }
    }

    /// Optimal translation `s` and (NLS) rotation `theta`.
    pub fn best_element(&self, state: &FieldState) -> (f64, f64) {
        let grid = self.diff.grid();
        let h = grid.spacing();
        let p = self.cross(state);
        let mut corr = p.clone();
        self.diff.inverse(&mut corr);
        let score = |z: Complex64| match self.model {
            Model::Kg => z.re,
            Model::Nls => z.norm_sqr(),
        };
        let j = (0..corr.len())
            .max_by(|&a, &b| score(corr[a]).total_cmp(&score(corr[b])))
            .unwrap_or(0);
        let (mut lo, mut hi) = ((j as f64 - 1.0) * h, (j as f64 + 1.0) * h);
        let f = |s: f64| self.objective(&p, s).0;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut fa, mut fb) = (f(a), f(b));
        for _ in 0..40 {
            if fa > fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - g * (hi - lo);
                fa = f(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + g * (hi - lo);
                fb = f(b);
            }
        }
        let mut s = 0.5 * (lo + hi);
        for _ in 0..5 {
            let (_, d1, d2) = self.objective(&p, s);
            if d2 >= 0.0 {
                break;
            }
            let next = s - d1 / d2;
            if !(next.is_finite() && (next - s).abs() < h) {
                break;
            }
            s = next;
        }
        let theta = match self.model {
            Model::Kg => 0.0,
            Model::Nls => {
                let kappa = self.diff.wavenumbers();
                let c: Complex64 = p.iter().zip(kappa).map(|(pm, &k)| pm * Complex64::from_polar(1.0, k * s)).sum();
                c.arg()
            }
        };
        (s.rem_euclid(grid.period), theta)
    }

    /// `|| U - e^{i theta} Phi(. - s) ||` in the model's energy norm.
    pub fn gap(&self, state: &FieldState, s: f64, theta: f64) -> f64 {
        let kappa = self.diff.wavenumbers();
        let shift: Vec<Complex64> = kappa.iter().map(|&k| Complex64::from_polar(1.0, -k * s)).collect();
        let sum: f64 = match self.model {
            Model::Kg => {
                let uh = self.diff.spectrum(&state.u);
                let vh = self.diff.spectrum(&state.v);
                (0..uh.len())
                    .map(|m| {
                        self.weight_u[m] * (uh[m] - self.phi_hat[m] * shift[m]).norm_sqr()
                            + self.weight_v[m] * (vh[m] - self.psi_hat[m] * shift[m]).norm_sqr()
                    })
                    .sum()
            }
            Model::Nls => {
                let mut zh = state.to_complex();
                self.diff.forward(&mut zh);
                let rot = Complex64::from_polar(1.0, theta);
                (0..zh.len())
                    .map(|m| self.weight_u[m] * (zh[m] - rot * self.phi_hat[m] * shift[m]).norm_sqr())
                    .sum()
            }
        };
        (self.scale() * sum).sqrt()
    }

    pub fn distance(&self, state: &FieldState) -> f64 {
        let (s, theta) = self.best_element(state);
        self.gap(state, s, theta)
    }

    pub fn wave_norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }
}

pub fn orbital_distance(state: &FieldState, params: &WaveParams) -> Result<f64> {
    if state.model != params.model {
        return Err(CnoidalError::domain("state and wave belong to different models"));
    }
    Ok(OrbitMetric::new(params, state.n())?.distance(state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "mode", rename_all = "kebab-case")]
pub enum Perturbation {
    None,
    /// Random combination of Fourier modes `1..=8`, mean removed.
    ZeroMeanRandom,
    /// `cos(2 pi m x / L)` in the first component.
    Mode(usize),
}

/// Perturbation `(du, dv)` of energy-space size `eps`.
pub fn perturbation(
    params: &WaveParams,
    n: usize,
    kind: Perturbation,
    eps: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = Grid::new(params.period, n)?;
    let xs = grid.points();
    let base = 2.0 * std::f64::consts::PI / params.period;
    let mut du = vec![0.0; n];
    let mut dv = vec![0.0; n];
    match kind {
        Perturbation::None => return Ok((du, dv)),
        Perturbation::Mode(m) => {
            if m == 0 || m >= n / 2 {
                return Err(CnoidalError::domain(format!("mode must lie in 1..{}, got {m}", n / 2)));
            }
            for (d, &x) in du.iter_mut().zip(&xs) {
                *d = (base * m as f64 * x).cos();
            }
        }
        Perturbation::ZeroMeanRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let components = if params.model == Model::Nls { 2 } else { 1 };
            for comp in 0..components {
                let target = if comp == 0 { &mut du } else { &mut dv };
                for m in 1..=PERTURBATION_MODES {
                    let a: f64 = rng.random_range(-1.0..1.0);
                    let b: f64 = rng.random_range(-1.0..1.0);
                    for (d, &x) in target.iter_mut().zip(&xs) {
                        let arg = base * m as f64 * x;
                        *d += a * arg.cos() + b * arg.sin();
                    }
                }
                let mean = target.iter().sum::<f64>() / n as f64;
                target.iter_mut().for_each(|d| *d -= mean);
            }
        }
    }
    let metric = OrbitMetric::new(params, n)?;
    let size = metric.norm(&FieldState {
        model: params.model,
        t: 0.0,
        u: du.clone(),
        v: dv.clone(),
    });
    if eps == 0.0 || size == 0.0 {
        return Ok((vec![0.0; n], vec![0.0; n]));
    }
    let s = eps / size;
    Ok((du.iter().map(|d| d * s).collect(), dv.iter().map(|d| d * s).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Model,
    pub period: f64,
    pub k: f64,
    pub perturbation: Perturbation,
    pub eps: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    /// Time between recorded samples.
    pub sample_interval: f64,
    /// Remove the mean of each component after every KG step.
    pub project_zero_mean: bool,
    pub nls_scheme: SplitScheme,
}

impl ExperimentConfig {
    /// Desk-scale defaults: `N = 256`, `dt = 1e-3` (NLS) or `1e-4` (KG).
    pub fn new(model: Model, period: f64, k: f64) -> Self {
        ExperimentConfig {
            model,
            period,
            k,
            perturbation: Perturbation::ZeroMeanRandom,
            eps: 1e-3,
            horizon: 10.0,
            dt: match model {
                Model::Kg => 1e-4,
                Model::Nls => 1e-3,
            },
            n: 256,
            seed: 0,
            sample_interval: 0.1,
            project_zero_mean: false,
            nls_scheme: SplitScheme::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitDistanceSeries {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowUpReport {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub params: WaveParams,
    pub series: OrbitDistanceSeries,
    pub energy_drift: Vec<f64>,
    pub second_invariant_drift: Vec<f64>,
    pub blow_up: Option<BlowUpReport>,
}

impl ExperimentResult {
    pub fn initial_distance(&self) -> f64 {
        self.series.distances[0]
    }

    pub fn max_distance(&self) -> f64 {
        self.series.distances.iter().cloned().fold(0.0, f64::max)
    }

    /// `max distance / initial distance`; infinite after a blow-up or when
    /// the initial distance vanishes.
    pub fn growth_factor(&self) -> f64 {
        if self.blow_up.is_some() {
            return f64::INFINITY;
        }
        self.max_distance() / self.initial_distance()
    }
}

enum Stepper {
    Kg(KgStepper),
    Nls(NlsStepper),
}

impl Stepper {
    fn advance(&self, state: &mut FieldState, steps: usize) -> Result<()> {
        match self {
            Stepper::Kg(s) => s.advance(state, steps),
            Stepper::Nls(s) => s.advance(state, steps),
        }
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if !(config.horizon >= 0.0 && config.sample_interval > 0.0) {
        return Err(CnoidalError::domain("horizon must be >= 0 and sample interval > 0"));
    }
    if !(config.eps >= 0.0) {
        return Err(CnoidalError::domain(format!("eps must be >= 0, got {}", config.eps)));
    }
    let params = from_k(config.model, config.period, Modulus::new(config.k)?)?;
    let grid = Grid::new(config.period, config.n)?;
    let stepper = match config.model {
        Model::Kg => Stepper::Kg(KgStepper::new(grid, config.dt, config.project_zero_mean)?),
        Model::Nls => Stepper::Nls(NlsStepper::with_scheme(grid, config.dt, config.nls_scheme)?),
    };
    let diff = SpectralDiff::new(grid);
    let metric = OrbitMetric::new(&params, config.n)?;
    let mut state = wave_state(&params, config.n)?;
    let (du, dv) = perturbation(&params, config.n, config.perturbation, config.eps, config.seed)?;
    state.u.iter_mut().zip(&du).for_each(|(a, b)| *a += b);
    state.v.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);

    let reference = conserved(&state, &diff);
    let per_sample = ((config.sample_interval / config.dt).round() as usize).max(1);
    let total = (config.horizon / config.dt).round() as usize;

    let mut series = OrbitDistanceSeries {
        times: vec![0.0],
        distances: vec![metric.distance(&state)],
    };
    let mut energy_drift = vec![0.0];
    let mut second_invariant_drift = vec![0.0];
    let mut blow_up = None;
    let mut done = 0;
    while done < total {
        let steps = per_sample.min(total - done);
        match stepper.advance(&mut state, steps) {
            Ok(()) => {}
            Err(CnoidalError::BlowUp { t, reason }) => {
                blow_up = Some(BlowUpReport { t, reason });
                break;
            }
            Err(e) => return Err(e),
        }
        done += steps;
        state.t = done as f64 * config.dt;
        let (de, df) = conserved(&state, &diff).drift_from(&reference);
        series.times.push(state.t);
        series.distances.push(metric.distance(&state));
        energy_drift.push(de);
        second_invariant_drift.push(df);
    }
    Ok(ExperimentResult {
        config: config.clone(),
        params,
        series,
        energy_drift,
        second_invariant_drift,
        blow_up,
    })
}

/// Largest real part among the eigenvalues of `J L` for the KG block or
/// the NLS block (`J = [[0, 1], [-1, 0]]`). Positive values signal a
/// linearly unstable direction.
pub fn linearized_growth_rate(params: &WaveParams, n: usize) -> Result<f64> {
    let kind = match params.model {
        Model::Kg => OperatorKind::KgBlock,
        Model::Nls => OperatorKind::NlsBlock,
    };
    let m = build(kind, params, n)?;
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    let jl = j * &m.entries;
    let eig = jl.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waves::{kg_from_k, nls_from_k};
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn m(k: f64) -> Modulus {
        Modulus::new(k).unwrap()
    }

    #[test]
    fn nls_standing_wave_is_reproduced() {
        let p = nls_from_k(TAU, m(0.9)).unwrap();
        let grid = Grid::new(TAU, 256).unwrap();
        let stepper = NlsStepper::new(grid, 1e-3).unwrap();
        let mut s = wave_state(&p, 256).unwrap();
        let phi = s.u.clone();
        let diff = SpectralDiff::new(grid);
        let c0 = conserved(&s, &diff);
        stepper.advance(&mut s, 10_000).unwrap();
        let rot = Complex64::from_polar(1.0, -p.omega * s.t);
        let err = s
            .to_complex()
            .iter()
            .zip(&phi)
            .map(|(z, f)| (z * rot - f).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "sup error {err:e}");
        let (de, dm) = conserved(&s, &diff).drift_from(&c0);
        assert!(dm < 1e-11 && de < 1e-8, "{de:e} {dm:e}");
    }

    #[test]
    fn strang_is_second_order_and_triple_jump_fourth() {
        let p = nls_from_k(TAU, m(0.9)).unwrap();
        let grid = Grid::new(TAU, 128).unwrap();
        let err = |scheme, dt: f64| {
            let mut s = wave_state(&p, 128).unwrap();
            let phi = s.u.clone();
            let steps = (1.0 / dt).round() as usize;
            NlsStepper::with_scheme(grid, dt, scheme).unwrap().advance(&mut s, steps).unwrap();
            let rot = Complex64::from_polar(1.0, -p.omega * s.t);
            s.to_complex().iter().zip(&phi).map(|(z, f)| (z * rot - f).norm()).fold(0.0, f64::max)
        };
        let r2 = err(SplitScheme::Strang, 0.02) / err(SplitScheme::Strang, 0.01);
        let r4 = err(SplitScheme::Yoshida4, 0.02) / err(SplitScheme::Yoshida4, 0.01);
        assert!((3.5..4.5).contains(&r2), "{r2}");
        assert!((13.0..19.0).contains(&r4), "{r4}");
    }

    #[test]
    fn zero_state_stays_zero() {
        let grid = Grid::new(TAU, 64).unwrap();
        let mut s = FieldState::from_complex(0.0, &vec![Complex64::default(); 64]);
        NlsStepper::new(grid, 1e-2).unwrap().advance(&mut s, 100).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|&x| x == 0.0));
    }

    #[test]
    fn kg_traveling_wave_is_reproduced() {
        let p = kg_from_k(TAU, m(0.9)).unwrap();
        let grid = Grid::new(TAU, 256).unwrap();
        let stepper = KgStepper::new(grid, 1e-4, false).unwrap();
        let diff = SpectralDiff::new(grid);
        let metric = OrbitMetric::new(&p, 256).unwrap();
        let mut s = wave_state(&p, 256).unwrap();
        let c0 = conserved(&s, &diff);
        stepper.advance(&mut s, 50_000).unwrap();
        let d = metric.distance(&s);
        assert!(d < 1e-4, "distance {d:e}");
        let (shift, _) = metric.best_element(&s);
        let expected = (-p.speed.unwrap() * s.t).rem_euclid(TAU);
        assert!((shift - expected).abs() < 1e-6, "{shift} vs {expected}");
        let (de, df) = conserved(&s, &diff).drift_from(&c0);
        assert!(de < 1e-8 && df < 1e-8, "{de:e} {df:e}");
    }

    #[test]
    fn kg_static_wave() {
        // omega = 1 exactly at this period, so the wave does not move.
        let k = m(0.9);
        let period = 4.0 * crate::elliptic::complete_elliptic(k).big_k * (2.0 * 0.81f64 - 1.0).sqrt();
        let mut p = crate::waves::kg_from_k_relaxed(period, k).unwrap();
        assert!((p.omega - 1.0).abs() < 1e-12);
        p.speed = Some(0.0);
        let mut s = wave_state(&p, 256).unwrap();
        let phi = s.u.clone();
        s = step_kg(&s, period, 1e-4).unwrap();
        KgStepper::new(Grid::new(period, 256).unwrap(), 1e-4, false)
            .unwrap()
            .advance(&mut s, 9_999)
            .unwrap();
        let err = s.u.iter().zip(&phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn kg_step_bound() {
        let grid = Grid::new(TAU, 256).unwrap();
        assert!(KgStepper::new(grid, 0.5 * TAU / 256.0, false).is_ok());
        assert!(KgStepper::new(grid, 0.6 * TAU / 256.0, false).is_err());
    }

    #[test]
    fn distance_is_group_invariant() {
        let p = nls_from_k(TAU, m(0.9)).unwrap();
        let metric = OrbitMetric::new(&p, 128).unwrap();
        let xs = Grid::new(TAU, 128).unwrap().points();
        let s0 = 0.37 * TAU;
        let z: Vec<Complex64> = xs
            .iter()
            .map(|&x| Complex64::from_polar(p.profile(x - s0), 1.1))
            .collect();
        let st = FieldState::from_complex(0.0, &z);
        assert!(metric.distance(&st) < 1e-8);

        let q = kg_from_k(TAU, m(0.9)).unwrap();
        let kg = OrbitMetric::new(&q, 128).unwrap();
        let sm = q.sampler();
        let c = q.speed.unwrap();
        let st = FieldState {
            model: Model::Kg,
            t: 0.0,
            u: xs.iter().map(|&x| sm.value(x - s0)).collect(),
            v: xs.iter().map(|&x| c * sm.derivative(x - s0)).collect(),
        };
        assert!(kg.distance(&st) < 1e-8);
    }

    #[test]
    fn distance_of_small_noise() {
        for model in [Model::Kg, Model::Nls] {
            let p = from_k(model, TAU, m(0.9)).unwrap();
            let (du, dv) = perturbation(&p, 256, Perturbation::ZeroMeanRandom, 1e-3, 7).unwrap();
            let mut s = wave_state(&p, 256).unwrap();
            s.u.iter_mut().zip(&du).for_each(|(a, b)| *a += b);
            s.v.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
            let d = orbital_distance(&s, &p).unwrap();
            assert!((5e-4..=2e-3).contains(&d), "{model}: {d:e}");
            // Shifting and rotating the perturbed state leaves the distance.
            let shift = 37;
            let mut t = s.clone();
            t.u.rotate_right(shift);
            t.v.rotate_right(shift);
            if model == Model::Nls {
                let z: Vec<Complex64> = t.to_complex().iter().map(|z| z * Complex64::from_polar(1.0, 0.4)).collect();
                t = FieldState::from_complex(0.0, &z);
            }
            assert!((orbital_distance(&t, &p).unwrap() - d).abs() < 1e-10);
        }
    }

    #[test]
    fn perturbation_is_deterministic_and_zero_mean() {
        let p = nls_from_k(TAU, m(0.9)).unwrap();
        let a = perturbation(&p, 128, Perturbation::ZeroMeanRandom, 1e-3, 3).unwrap();
        let b = perturbation(&p, 128, Perturbation::ZeroMeanRandom, 1e-3, 3).unwrap();
        let c = perturbation(&p, 128, Perturbation::ZeroMeanRandom, 1e-3, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.0.iter().sum::<f64>().abs() < 1e-12 && a.1.iter().sum::<f64>().abs() < 1e-12);
        assert!(perturbation(&p, 128, Perturbation::Mode(64), 1e-3, 0).is_err());
    }

    #[test]
    fn projection_keeps_momentum_for_zero_mean_data() {
        let p = kg_from_k(TAU, m(0.9)).unwrap();
        let grid = Grid::new(TAU, 128).unwrap();
        let diff = SpectralDiff::new(grid);
        let run = |project| {
            let mut s = wave_state(&p, 128).unwrap();
            KgStepper::new(grid, 1e-3, project).unwrap().advance(&mut s, 1000).unwrap();
            (conserved(&s, &diff).momentum_or_mass, s)
        };
        let (f_plain, _) = run(false);
        let (f_proj, s) = run(true);
        let f0 = conserved(&wave_state(&p, 128).unwrap(), &diff).momentum_or_mass;
        assert!(((f_plain - f0) - (f_proj - f0)).abs() < 1e-10);
        let (mu, mv) = s.means();
        assert!(mu.abs() < 1e-10 && mv.abs() < 1e-10);
    }

    #[test]
    fn unperturbed_experiments_stay_on_orbit() {
        for (model, k, horizon) in [(Model::Nls, 0.85, 5.0), (Model::Kg, 0.9, 1.0)] {
            let mut cfg = ExperimentConfig::new(model, TAU, k);
            cfg.perturbation = Perturbation::None;
            cfg.eps = 0.0;
            cfg.horizon = horizon;
            cfg.sample_interval = 0.5;
            let r = run_experiment(&cfg).unwrap();
            assert!(r.blow_up.is_none());
            assert!(r.max_distance() < 1e-5, "{model}: {:e}", r.max_distance());
            assert_eq!(r.series.times.len(), r.series.distances.len());
        }
    }
}
