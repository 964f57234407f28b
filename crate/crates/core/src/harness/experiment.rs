//! Seeded randomized sweeps and their reports.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, ExperimentConfig, OutputFormat};
use crate::entanglement::OptConfig;
use crate::error::Error;
use crate::protocol::{
    run_locc_protocol, run_mixed_protocol, run_noisy_protocol, run_pure_protocol, Margin, MarginKind, ProtocolTrace,
};
use crate::seeding::derive_seed;
use crate::states::{PureEnsemble, StateVector};
use crate::tensor_core::SubsystemLayout;
use crate::unitaries_channels::{haar_unitary, LoccMixture, LoccTerm, UnitaryOp};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trial {trial}: {source}")]
    Trial { trial: usize, source: Error },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot encode report: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// `[E₁, E₂, E₃, E₄]`.
    pub e: [f64; 4],
    pub margins: Vec<Margin>,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub min_margin: f64,
    pub max_e2: f64,
    pub max_e4: f64,
    /// Trials with at least one margin below its slack.
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub aggregate: Aggregate,
    pub wall_time_secs: f64,
}

/// Runs `cfg.trials` independent protocol executions. Trial `i` draws all
/// its randomness from `derive_seed(cfg.seed, i)`, so the report does not
/// depend on scheduling or on `cfg.jobs`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let start = Instant::now();
    let trials = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let seed = derive_seed(cfg.seed, trial as u64);
                let trace = run_trial(cfg, seed).map_err(|source| ExperimentError::Trial { trial, source })?;
                let violated = !trace.holds(cfg.tol, cfg.eps_var);
                Ok(TrialRecord { trial, seed, e: trace.e(), margins: trace.margins, violated })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;
    let aggregate = Aggregate {
        min_margin: trials.iter().flat_map(|t| &t.margins).map(|m| m.value).fold(f64::INFINITY, f64::min),
        max_e2: trials.iter().map(|t| t.e[1]).fold(f64::NEG_INFINITY, f64::max),
        max_e4: trials.iter().map(|t| t.e[3]).fold(f64::NEG_INFINITY, f64::max),
        violations: trials.iter().filter(|t| t.violated).count(),
    };
    Ok(ExperimentReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        trials,
        aggregate,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// One protocol run of the configured theorem with randomness from `seed`.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> crate::Result<ProtocolTrace> {
    let layout = SubsystemLayout::abcd();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unitary = |targets: &[&str], rng: &mut ChaCha8Rng| {
        if cfg.identity {
            UnitaryOp::identity(targets, &layout)
        } else {
            UnitaryOp::haar(targets, &layout, rng)
        }
    };
    let prep = unitary(&["A", "B", "C", "D"], &mut rng)?;
    let opt = OptConfig { seed: derive_seed(seed, cfg.opt.seed), ..cfg.opt.clone() };
    match cfg.theorem {
        1 => {
            let u_abc = unitary(&["A", "B", "C"], &mut rng)?;
            let u_d = unitary(&["D"], &mut rng)?;
            run_pure_protocol(&prep, &u_abc, &u_d)
        }
        2 => {
            let probs = dirichlet(cfg.ensemble_size(), &mut rng);
            let members = probs
                .into_iter()
                .map(|p| Ok((p, random_pure(&layout, &mut rng)?)))
                .collect::<crate::Result<Vec<_>>>()?;
            let ens = PureEnsemble::new(members)?;
            let u_abc = unitary(&["A", "B", "C"], &mut rng)?;
            let u_d = unitary(&["D"], &mut rng)?;
            Ok(run_mixed_protocol(&ens, &prep, &u_abc, &u_d, &opt)?.0)
        }
        3 | 4 => {
            let spec = cfg.channel_spec.as_ref().ok_or_else(|| Error::BadParam("missing channel".into()))?;
            let ch_d = spec.build(derive_seed(seed, u64::MAX - 1))?;
            let ch_c = spec.build(derive_seed(seed, u64::MAX - 2))?;
            let rho0 = StateVector::zero(layout.clone()).to_density();
            if cfg.theorem == 3 {
                let u_abc = unitary(&["A", "B", "C"], &mut rng)?;
                let u_d = unitary(&["D"], &mut rng)?;
                run_noisy_protocol(&rho0, &prep, &u_abc, &u_d, &ch_d, &ch_c, &opt)
            } else {
                let probs = dirichlet(cfg.ensemble_size(), &mut rng);
                let terms = probs
                    .into_iter()
                    .map(|prob| {
                        Ok(LoccTerm { prob, alice: unitary(&["A", "B", "C"], &mut rng)?, bob: unitary(&["D"], &mut rng)? })
                    })
                    .collect::<crate::Result<Vec<_>>>()?;
                run_locc_protocol(&rho0, &prep, &LoccMixture::new(terms)?, &ch_d, &ch_c, &opt)
            }
        }
        t => Err(Error::BadParam(format!("no protocol for theorem {t}"))),
    }
}

/// Uniform point of the probability simplex.
fn dirichlet(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1) + f64::MIN_POSITIVE).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_pure(layout: &SubsystemLayout, rng: &mut ChaCha8Rng) -> crate::Result<StateVector> {
    let u = haar_unitary(layout.total_dim(), rng);
    StateVector::normalized(layout.clone(), u.column(0).into_owned())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    trial: usize,
    seed: u64,
    e1: f64,
    e2: f64,
    e3: f64,
    e4: f64,
    margin: &'a str,
    kind: MarginKind,
    value: f64,
}

impl ExperimentReport {
    /// JSON: the whole report. CSV: one row per trial and margin.
    pub fn write<W: Write>(&self, format: OutputFormat, mut out: W) -> Result<(), ExperimentError> {
        match format {
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut out, self).map_err(|e| ExperimentError::Encode(e.to_string()))?;
                writeln!(out).map_err(|source| ExperimentError::Io { path: "<output>".into(), source })
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                for t in &self.trials {
                    for m in &t.margins {
                        w.serialize(CsvRow {
                            trial: t.trial,
                            seed: t.seed,
                            e1: t.e[0],
                            e2: t.e[1],
                            e3: t.e[2],
                            e4: t.e[3],
                            margin: &m.name,
                            kind: m.kind,
                            value: m.value,
                        })
                        .map_err(|e| ExperimentError::Encode(e.to_string()))?;
                    }
                }
                w.flush().map_err(|source| ExperimentError::Io { path: "<output>".into(), source })
            }
        }
    }

    pub fn save(&self, format: OutputFormat, path: &Path) -> Result<(), ExperimentError> {
        let io = |source| ExperimentError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut buf = std::io::BufWriter::new(file);
        self.write(format, &mut buf)?;
        buf.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_run_is_unentangled() {
        let cfg = ExperimentConfig { trials: 1, identity: true, ..ExperimentConfig::default() };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.trials[0].e, [0.0; 4]);
        assert_eq!(r.aggregate.violations, 0);
    }

    #[test]
    fn repeatable_across_thread_counts() {
        let cfg = ExperimentConfig { trials: 20, seed: 11, ..ExperimentConfig::default() };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&ExperimentConfig { jobs: 4, ..cfg }).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn rejects_invalid_config() {
        let cfg = ExperimentConfig { trials: 0, ..ExperimentConfig::default() };
        assert!(matches!(run_experiment(&cfg), Err(ExperimentError::Config(e)) if e.field == "trials"));
    }

    #[test]
    fn csv_rows_match_json_margins() {
        let cfg = ExperimentConfig { trials: 3, seed: 2, ..ExperimentConfig::default() };
        let r = run_experiment(&cfg).unwrap();
        let mut buf = Vec::new();
        r.write(OutputFormat::Csv, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let values: Vec<f64> = rdr.records().map(|rec| rec.unwrap()[8].parse().unwrap()).collect();
        let expected: Vec<f64> = r.trials.iter().flat_map(|t| t.margins.iter().map(|m| m.value)).collect();
        assert_eq!(values, expected);
    }

    #[test]
    fn every_theorem_runs() {
        for (theorem, spec) in [(2, None), (3, Some("depolarizing:0.2")), (4, Some("random:env_dim=2"))] {
            let cfg = ExperimentConfig {
                theorem,
                trials: 2,
                seed: 5,
                channel_spec: spec.map(|s| s.parse().unwrap()),
                opt: OptConfig { restarts: 1, max_ensemble: Some(16), ..OptConfig::default() },
                ..ExperimentConfig::default()
            };
            let r = run_experiment(&cfg).unwrap();
            assert_eq!(r.aggregate.violations, 0, "theorem {theorem}: {:?}", r.trials);
        }
    }
}
