//! `cnoidal` command-line entry point.

mod emit;

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use cnoidal::elliptic::{complete_elliptic, Modulus};
use cnoidal::evolution::{run_experiment, ExperimentConfig, Perturbation, SplitScheme};
use cnoidal::index::{
    d1_closed_form, d3_via_ivp, d_linear_solve, index_report, kg_block_dmatrix, nls_block_index,
    IndexReport, NlsBlockIndex, DEFAULT_IVP_STEPS,
};
use cnoidal::operators::{build, constrained_spectrum, spectrum, OperatorKind, ZeroTol};
use cnoidal::stability::{
    critical_values, dpp_c, dpp_omega, potential_well, verdict_kg, verdict_nls,
    DEFAULT_OPERATOR_SIZE,
};
use cnoidal::waves::{
    kg_from_k, kg_from_k_relaxed, kg_k_from_c, nls_from_k, nls_omega, sample, KgFamily, Model,
    WaveParams,
};
use cnoidal::CnoidalError;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

const TAU: f64 = std::f64::consts::TAU;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] CnoidalError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CnoidalError::Domain(_) | CnoidalError::BlowUp { .. }) => 1,
            CliError::Core(_) => 2,
            CliError::Io(_) => EXIT_IO,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cnoidal", version, about = "Cnoidal waves of the cubic Klein-Gordon and Schrodinger equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Kg,
    Nls,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Model {
        match m {
            ModelArg::Kg => Model::Kg,
            ModelArg::Nls => Model::Nls,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Quantity {
    /// Closed-form `(L1^{-1} 1, 1)`; header `k,D1`.
    D1,
    /// Deflated-solve `(L2^{-1} 1, 1)`; header `k,D2`.
    D2,
    /// `(L3^{-1} 1, 1)` through the periodic Green solve; header `k,D3`.
    D3,
    /// `d''(c)` along the KG family; header `k,dpp`.
    Dpp,
    /// `d''(omega)` along the NLS family; header `k,dpp_omega`.
    DppOmega,
    /// Potential-well functional at the KG wave; header `k,P`.
    Well,
}

impl Quantity {
    fn header(self) -> &'static str {
        match self {
            Quantity::D1 => "D1",
            Quantity::D2 => "D2",
            Quantity::D3 => "D3",
            Quantity::Dpp => "dpp",
            Quantity::DppOmega => "dpp_omega",
            Quantity::Well => "P",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PerturbationArg {
    /// Random zero-mean combination of low Fourier modes.
    Random,
    /// Single cosine mode in the first component, selected by `--mode`.
    Mode,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Strang,
    Yoshida4,
}

#[derive(Debug, Args)]
struct Period {
    /// Spatial period.
    #[arg(long = "L", default_value_t = TAU)]
    period: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Complete elliptic integrals K(k), E(k).
    Elliptic {
        #[arg(long)]
        k: f64,
    },
    /// Sampled wave profile as CSV `x,phi`.
    Wave {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 256)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leading eigenvalues and (n, z) counts of a linearized operator.
    Spectrum {
        #[arg(long, value_enum)]
        model: ModelArg,
        /// One of L1 (kg), L2, L3 (nls) or block.
        #[arg(long)]
        op: String,
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        k: f64,
        #[arg(long = "N", default_value_t = DEFAULT_OPERATOR_SIZE)]
        n: usize,
        /// Restrict to the zero-mean class.
        #[arg(long)]
        constrained: bool,
    },
    /// Index reports for every operator of a model.
    Index {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        k: f64,
        #[arg(long = "N", default_value_t = DEFAULT_OPERATOR_SIZE)]
        n: usize,
    },
    /// Critical moduli and the induced speed and frequency.
    Critical {
        #[command(flatten)]
        period: Period,
    },
    /// Orbital stability verdict.
    #[command(group(ArgGroup::new("parameter").required(true).args(["k", "c", "omega"])))]
    Verdict {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long = "N", default_value_t = DEFAULT_OPERATOR_SIZE)]
        n: usize,
    },
    /// Tabulate a scalar quantity over a uniform k-grid.
    Sweep {
        #[arg(long, value_enum)]
        quantity: Quantity,
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        kmin: f64,
        #[arg(long)]
        kmax: f64,
        #[arg(long)]
        steps: usize,
        /// Operator size for solve-based quantities.
        #[arg(long = "N", default_value_t = 512)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturbed time evolution with orbital-distance tracking.
    #[command(group(ArgGroup::new("parameter").required(true).args(["k", "c"])))]
    Evolve {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[command(flatten)]
        period: Period,
        #[arg(long)]
        k: Option<f64>,
        /// KG speed; converted to the modulus of the family.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long = "T", default_value_t = 10.0)]
        horizon: f64,
        /// Defaults to 1e-4 (kg) or 1e-3 (nls).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "N", default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PerturbationArg::Random)]
        perturbation: PerturbationArg,
        #[arg(long, default_value_t = 1)]
        mode: usize,
        /// Time between CSV rows.
        #[arg(long, default_value_t = 0.1)]
        sample: f64,
        /// Remove the mean after every KG step.
        #[arg(long)]
        project: bool,
        #[arg(long, value_enum, default_value_t = SchemeArg::Yoshida4)]
        scheme: SchemeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn modulus(k: f64) -> CliResult<Modulus> {
    Ok(Modulus::new(k)?)
}

fn params_for(kind: OperatorKind, period: f64, k: f64) -> CliResult<WaveParams> {
    let k = modulus(k)?;
    Ok(match kind {
        // The Lame operator makes sense for every modulus; only the speed
        // needs an admissible k.
        OperatorKind::KgL1 => kg_from_k_relaxed(period, k)?,
        OperatorKind::KgBlock => kg_from_k(period, k)?,
        _ => nls_from_k(period, k)?,
    })
}

#[derive(Serialize)]
struct EllipticOut {
    #[serde(rename = "K")]
    big_k: f64,
    #[serde(rename = "E")]
    big_e: f64,
}

#[derive(Serialize)]
struct SpectrumOut {
    kind: OperatorKind,
    constrained: bool,
    eigenvalues: Vec<f64>,
    n: usize,
    z: usize,
    zero_tol: f64,
}

#[derive(Serialize)]
struct IndexOut {
    model: Model,
    period: f64,
    k: f64,
    reports: Vec<IndexReport>,
    /// KG only: pairings of the block inverse against `(1,0)` and `(0,1)`.
    d_matrix: Option<[[f64; 2]; 2]>,
    /// NLS only: counts for the full 2x2 block.
    block: Option<NlsBlockIndex>,
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Elliptic { k } => {
            let e = complete_elliptic(modulus(k)?);
            let out = EllipticOut { big_k: e.big_k, big_e: e.big_e };
            emit::write_text(&emit::json(&out)?, None)?;
        }
        Command::Wave { model, period, k, samples, out } => {
            let params = match model {
                ModelArg::Kg => kg_from_k(period.period, modulus(k)?)?,
                ModelArg::Nls => nls_from_k(period.period, modulus(k)?)?,
            };
            let s = sample(&params, samples)?;
            let rows: Vec<Vec<String>> =
                s.xs.iter().zip(&s.values).map(|(x, v)| vec![emit::float(*x), emit::float(*v)]).collect();
            emit::write_text(&emit::csv_text(&["x", "phi"], &rows)?, out.as_deref())?;
        }
        Command::Spectrum { model, op, period, k, n, constrained } => {
            let kind = OperatorKind::from_model_op(model.into(), &op.to_ascii_lowercase())
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let params = params_for(kind, period.period, k)?;
            let m = build(kind, &params, n)?;
            let tol = ZeroTol::default();
            let r = if constrained { constrained_spectrum(&m, tol)? } else { spectrum(&m, tol)? };
            let out = SpectrumOut {
                kind,
                constrained,
                eigenvalues: r.eigenvalues.iter().take(10).cloned().collect(),
                n: r.n_neg,
                z: r.z_dim,
                zero_tol: r.zero_tol,
            };
            emit::write_text(&emit::json(&out)?, None)?;
        }
        Command::Index { model, period, k, n } => {
            let period = period.period;
            let out = match model {
                ModelArg::Kg => {
                    let mut reports =
                        vec![index_report(OperatorKind::KgL1, &params_for(OperatorKind::KgL1, period, k)?, n)?];
                    // The block needs a real speed; below the admissible range only L1 exists.
                    let d_matrix = match kg_from_k(period, modulus(k)?) {
                        Ok(p) => {
                            reports.push(index_report(OperatorKind::KgBlock, &p, n)?);
                            Some(kg_block_dmatrix(&p, n)?)
                        }
                        Err(CnoidalError::Domain(_)) => None,
                        Err(e) => return Err(e.into()),
                    };
                    IndexOut { model: Model::Kg, period, k, reports, d_matrix, block: None }
                }
                ModelArg::Nls => {
                    let p = nls_from_k(period, modulus(k)?)?;
                    let reports = vec![
                        index_report(OperatorKind::NlsL2, &p, n)?,
                        index_report(OperatorKind::NlsL3, &p, n)?,
                    ];
                    let block = Some(nls_block_index(&p, n)?);
                    IndexOut { model: Model::Nls, period, k, reports, d_matrix: None, block }
                }
            };
            emit::write_text(&emit::json(&out)?, None)?;
        }
        Command::Critical { period } => {
            emit::write_text(&emit::json(&critical_values(period.period)?)?, None)?;
        }
        Command::Verdict { model, period, k, c, omega, n } => {
            let period = period.period;
            let v = match model {
                ModelArg::Kg => {
                    let c = match (k, c, omega) {
                        (_, Some(c), _) => c,
                        (Some(k), ..) => KgFamily::new(period)?.from_k(modulus(k)?)?.speed_or_zero(),
                        _ => return Err(CliError::Usage("kg verdict takes --c or --k".into())),
                    };
                    verdict_kg(period, c, n)?
                }
                ModelArg::Nls => {
                    let omega = match (k, c, omega) {
                        (_, _, Some(w)) => w,
                        (Some(k), ..) => nls_omega(period, modulus(k)?),
                        _ => return Err(CliError::Usage("nls verdict takes --omega or --k".into())),
                    };
                    verdict_nls(period, omega, n)?
                }
            };
            emit::write_text(&emit::json(&v)?, None)?;
        }
        Command::Sweep { quantity, period, kmin, kmax, steps, n, out } => {
            sweep(quantity, period.period, kmin, kmax, steps, n, out.as_deref())?;
        }
        Command::Evolve {
            model,
            period,
            k,
            c,
            eps,
            horizon,
            dt,
            n,
            seed,
            perturbation,
            mode,
            sample,
            project,
            scheme,
            out,
        } => {
            let model: Model = model.into();
            let period = period.period;
            let k = match (k, c) {
                (Some(k), _) => k,
                (None, Some(c)) if model == Model::Kg => kg_k_from_c(period, c)?.value(),
                _ => return Err(CliError::Usage("--c applies to the kg model only".into())),
            };
            let mut cfg = ExperimentConfig::new(model, period, k);
            cfg.eps = eps;
            cfg.horizon = horizon;
            cfg.dt = dt.unwrap_or(cfg.dt);
            cfg.n = n;
            cfg.seed = seed;
            cfg.sample_interval = sample;
            cfg.project_zero_mean = project;
            cfg.perturbation = match perturbation {
                PerturbationArg::Random => Perturbation::ZeroMeanRandom,
                PerturbationArg::Mode => Perturbation::Mode(mode),
                PerturbationArg::None => Perturbation::None,
            };
            cfg.nls_scheme = match scheme {
                SchemeArg::Strang => SplitScheme::Strang,
                SchemeArg::Yoshida4 => SplitScheme::Yoshida4,
            };
            let r = run_experiment(&cfg)?;
            let rows: Vec<Vec<String>> = (0..r.series.times.len())
                .map(|i| {
                    vec![
                        emit::float(r.series.times[i]),
                        emit::float(r.series.distances[i]),
                        emit::float(r.energy_drift[i]),
                        emit::float(r.second_invariant_drift[i]),
                    ]
                })
                .collect();
            let header = ["t", "distance", "energy_drift", "second_invariant_drift"];
            emit::write_text(&emit::csv_text(&header, &rows)?, out.as_deref())?;
            if let Some(b) = &r.blow_up {
                eprintln!("blow-up at t = {}: {}", b.t, b.reason);
            }
        }
    }
    Ok(())
}

fn sweep_value(quantity: Quantity, period: f64, k: f64, n: usize) -> Result<f64, CnoidalError> {
    let m = Modulus::new(k)?;
    Ok(match quantity {
        Quantity::D1 => d1_closed_form(period, m)?.value,
        Quantity::D2 => d_linear_solve(OperatorKind::NlsL2, &nls_from_k(period, m)?, n)?.value,
        Quantity::D3 => d3_via_ivp(&nls_from_k(period, m)?, DEFAULT_IVP_STEPS)?.0.value,
        Quantity::Dpp => dpp_c(period, m)?.value,
        Quantity::DppOmega => dpp_omega(period, nls_omega(period, m))?.value(),
        Quantity::Well => potential_well(period, m)?.functional_value,
    })
}

fn sweep(
    quantity: Quantity,
    period: f64,
    kmin: f64,
    kmax: f64,
    steps: usize,
    n: usize,
    out: Option<&Path>,
) -> CliResult<()> {
    if steps < 2 || !(kmin < kmax) {
        return Err(CnoidalError::Domain(format!(
            "sweep needs kmin < kmax and at least 2 steps, got [{kmin}, {kmax}] with {steps}"
        ))
        .into());
    }
    let ks: Vec<f64> =
        (0..steps).map(|i| kmin + (kmax - kmin) * i as f64 / (steps - 1) as f64).collect();
    let compute = || -> Vec<Result<f64, CnoidalError>> {
        ks.par_iter().map(|&k| sweep_value(quantity, period, k, n)).collect()
    };
    let threads = std::env::var("CNOIDAL_THREADS").ok().and_then(|s| s.parse::<usize>().ok());
    let results = match threads {
        Some(t) if t > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| io::Error::other(e.to_string()))?
            .install(compute),
        _ => compute(),
    };

    let mut rows = Vec::new();
    let mut failures = String::new();
    for (k, r) in ks.iter().zip(results) {
        match r {
            Ok(v) if v.is_finite() => rows.push(vec![emit::float(*k), emit::float(v)]),
            Ok(v) => failures.push_str(&format!("k={}: non-finite value {v}\n", emit::float(*k))),
            Err(e) => failures.push_str(&format!("k={}: {e}\n", emit::float(*k))),
        }
    }
    emit::write_text(&emit::csv_text(&["k", quantity.header()], &rows)?, out)?;
    match out {
        Some(path) => {
            let mut log = path.as_os_str().to_owned();
            log.push(".log");
            std::fs::write(PathBuf::from(log), failures)?;
        }
        None => eprint!("{failures}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cnoidal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
