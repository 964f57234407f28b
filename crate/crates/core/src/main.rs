use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ebitflow::entanglement::{eof_two_qubit, eof_variational, von_neumann_entropy, EofResult, OptConfig, SearchMethod};
use ebitflow::harness::io::{load_state, LoadError, LoadedState};
use ebitflow::harness::{run_experiment, ExperimentConfig, ExperimentError, OutputFormat};
use ebitflow::protocol::equality_witness;
use ebitflow::states::schmidt_decompose;
use ebitflow::tensor_core::Bipartition;
use ebitflow::unitaries_channels::ChannelSpec;

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_VIOLATION: u8 = 4;
const EXIT_PARSE: u8 = 5;

/// Entanglement bookkeeping for qubit transmission protocols.
#[derive(Parser)]
#[command(name = "ebitflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded randomized sweep of one theorem's protocol.
    Verify(VerifyArgs),
    /// Von Neumann entropy of a marginal of a state file.
    Entropy {
        file: PathBuf,
        /// Comma-separated subsystems to keep; defaults to the first one, or
        /// the whole register if it has a single subsystem.
        #[arg(long)]
        of: Option<String>,
    },
    /// Schmidt decomposition of a pure state across a cut.
    Schmidt {
        file: PathBuf,
        /// Cut such as `AB|CD`, or the left side alone.
        #[arg(long)]
        cut: String,
    },
    /// Entanglement of formation across a cut.
    Eof {
        file: PathBuf,
        #[arg(long)]
        cut: String,
        #[arg(long, value_enum, default_value_t = EofChoice::Both)]
        method: EofChoice,
        /// Include the optimal decomposition found by the variational search.
        #[arg(long)]
        decomposition: bool,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Trace of the two-Bell-pair run that saturates the bound.
    Witness,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    theorem: u8,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, env = "EBITFLOW_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps_var: f64,
    /// `kind:param` or `random:env_dim=k[:seed=s]`; theorems 3 and 4 only.
    #[arg(long)]
    channel: Option<ChannelSpec>,
    /// Ensemble members (theorem 2) or mixture terms (theorem 4).
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Identity preparation and local unitaries.
    #[arg(long)]
    identity: bool,
    #[command(flatten)]
    opt: OptArgs,
}

#[derive(Args)]
struct OptArgs {
    /// Random restarts of the variational search.
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// Decomposition size (default rank²).
    #[arg(long)]
    max_ensemble: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    opt_tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    opt_seed: u64,
    #[arg(long, value_enum, default_value_t = Search::Cg)]
    search: Search,
}

impl OptArgs {
    fn config(&self) -> OptConfig {
        OptConfig {
            max_ensemble: self.max_ensemble,
            restarts: self.restarts,
            tol: self.opt_tol,
            max_iters: self.max_iters,
            seed: self.opt_seed,
            method: match self.search {
                Search::Cg => SearchMethod::ConjugateGradient,
                Search::Givens => SearchMethod::Givens,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Search {
    Cg,
    Givens,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EofChoice {
    Closed,
    Variational,
    Both,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self { code, message: message.to_string() }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        let code = match e {
            LoadError::Io { .. } => EXIT_IO,
            LoadError::Parse(_) => EXIT_PARSE,
            LoadError::Invalid(_) => EXIT_VALIDATION,
        };
        Failure::new(code, e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(args) => verify(args),
        Command::Entropy { file, of } => entropy(&file, of.as_deref()),
        Command::Schmidt { file, cut } => schmidt(&file, &cut),
        Command::Eof { file, cut, method, decomposition, opt } => eof(&file, &cut, method, decomposition, &opt),
        Command::Witness => witness(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<u8, Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(EXIT_IO, e))?;
    println!("{text}");
    Ok(0)
}

fn verify(args: VerifyArgs) -> Result<u8, Failure> {
    let format = match args.format {
        Format::Json => OutputFormat::Json,
        Format::Csv => OutputFormat::Csv,
    };
    let cfg = ExperimentConfig {
        theorem: args.theorem,
        trials: args.trials,
        seed: args.seed,
        tol: args.tol,
        eps_var: args.eps_var,
        channel_spec: args.channel,
        ensemble_size: args.ensemble_size,
        opt: args.opt.config(),
        output_format: format,
        output_path: args.out.clone(),
        jobs: args.jobs,
        identity: args.identity,
    };
    let report = run_experiment(&cfg).map_err(|e| match e {
        ExperimentError::Config(_) => Failure::new(EXIT_CONFIG, e),
        ExperimentError::Trial { .. } => Failure::new(EXIT_VALIDATION, e),
        _ => Failure::new(EXIT_IO, e),
    })?;
    match &args.out {
        Some(path) => report.save(format, path),
        None => report.write(format, std::io::stdout().lock()),
    }
    .map_err(|e| Failure::new(EXIT_IO, e))?;
    let agg = &report.aggregate;
    eprintln!(
        "theorem {}: {} trials, {} with violations, min margin {:e}, max E2 {}, max E4 {}",
        cfg.theorem, cfg.trials, agg.violations, agg.min_margin, agg.max_e2, agg.max_e4
    );
    Ok(if agg.violations > 0 { EXIT_VIOLATION } else { 0 })
}

fn parse_cut(state: &LoadedState, cut: &str) -> Result<Bipartition, Failure> {
    Bipartition::parse(state.layout(), cut).map_err(|e| Failure::new(EXIT_CONFIG, e))
}

fn entropy(file: &Path, of: Option<&str>) -> Result<u8, Failure> {
    let state = load_state(file)?;
    let labels: Vec<String> = match of {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None if state.layout().len() == 1 => state.layout().labels().to_vec(),
        None => state.layout().labels()[..1].to_vec(),
    };
    let rho = state.to_density();
    let marginal = if labels.len() == rho.layout().len() {
        rho.permute(&labels).map_err(|e| Failure::new(EXIT_CONFIG, e))?
    } else {
        rho.partial_trace(&labels).map_err(|e| Failure::new(EXIT_CONFIG, e))?
    };
    print_json(&json!({ "subsystems": marginal.layout().labels(), "entropy": von_neumann_entropy(&marginal) }))
}

fn schmidt(file: &Path, cut: &str) -> Result<u8, Failure> {
    let state = load_state(file)?;
    let cut = parse_cut(&state, cut)?;
    let LoadedState::Pure(psi) = &state else {
        return Err(Failure::new(EXIT_VALIDATION, "Schmidt decomposition needs a pure state"));
    };
    let form = schmidt_decompose(psi, &cut).map_err(|e| Failure::new(EXIT_VALIDATION, e))?;
    let basis = |vs: &[ebitflow::CVector]| vs.iter().map(|v| v.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>();
    print_json(&json!({
        "cut": cut.to_string(),
        "coefficients": form.coeffs,
        "left_basis": basis(&form.left_basis),
        "right_basis": basis(&form.right_basis),
    }))
}

fn eof(file: &Path, cut: &str, method: EofChoice, decomposition: bool, opt: &OptArgs) -> Result<u8, Failure> {
    let state = load_state(file)?;
    let cut = parse_cut(&state, cut)?;
    let rho = state.to_density();
    let strip = |mut r: EofResult| {
        if !decomposition {
            r.decomposition = None;
        }
        r
    };
    let closed = match method {
        EofChoice::Variational => None,
        _ => Some(eof_two_qubit(&rho).map_err(|e| Failure::new(EXIT_CONFIG, e))?),
    };
    let variational = match method {
        EofChoice::Closed => None,
        _ => Some(strip(eof_variational(&rho, &cut, &opt.config()).map_err(|e| Failure::new(EXIT_CONFIG, e))?)),
    };
    let mut out = json!({ "cut": cut.to_string(), "closed_form": closed, "variational": variational });
    if let (Some(c), Some(v)) = (&closed, &variational) {
        out["difference"] = json!(v.value - c.value);
    }
    print_json(&out)
}

fn witness() -> Result<u8, Failure> {
    let (trace, _) = equality_witness().map_err(|e| Failure::new(EXIT_VALIDATION, e))?;
    print_json(&trace)
}
