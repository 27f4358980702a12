//! `aisel` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! degeneracy, 1 anything else.

mod config;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aisel::marglik::EvidenceTrace;
use aisel::models::{glmm_initial_density, simulate_glmm, GaussianToy, GlmmData, GlmmModel, GlmmProposal, GlmmSpec, SvModel};
use aisel::particle_filter::{read_returns, simulate_sv, SvParams};
use aisel::runner::{tnv_sweep, write_sweep_csv, BatchOptions};
use aisel::theory::{ess_ratio_table, theory_toy, write_ess_ratio_csv};
use aisel::tuning::{estimate_gamma_bar2, fit_timing, measure_timing, TuningEstimates};
use aisel::{aisel_run, AiselError, AnnealingSchedule, InitialDensity, Model, RunOutput};
use clap::{Parser, Subcommand, ValueEnum};
use config::{Config, Overrides};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<AiselError> for CliError {
    fn from(e: AiselError) -> Self {
        let code = match e {
            AiselError::InvalidArgument(_) | AiselError::Parse(_) | AiselError::Io(_) => 2,
            AiselError::TotalDegeneracy(_) | AiselError::DegenerateTemperature { .. } | AiselError::InitRetriesExhausted(_) => 3,
            AiselError::ContractViolation(_) => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "aisel", version, about = "Annealed importance sampling with estimated likelihoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Glmm,
    Sv,
    Svl,
    Toy,
}

#[derive(Debug, clap::Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Data file: GLMM CSV, one return per line for SV, one value per line for the toy.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a data set at fixed parameter values.
    SimulateData {
        #[arg(long, value_enum)]
        model: ModelKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Observations for SV and toy data.
        #[arg(long)]
        n_obs: Option<usize>,
        /// Leverage correlation for `svl`.
        #[arg(long, default_value_t = -0.3)]
        rho: f64,
    },
    /// Estimate timing constants and gamma^2, and report sigma^2_opt and N_opt.
    Tune {
        #[command(flatten)]
        args: ModelArgs,
        /// Draws from the initial density used for gamma^2.
        #[arg(long, default_value_t = 20)]
        draws: usize,
        /// Inner samples per gamma^2 estimate.
        #[arg(long, default_value_t = 50)]
        n0: usize,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50")]
        timing_n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        timing_reps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One sampler run; writes report.kv, posterior.csv, trace.csv and evidence.csv.
    Run {
        #[command(flatten)]
        args: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Log marginal likelihood from a fresh run or from a saved evidence trace.
    Evidence {
        #[arg(long, value_enum, required_unless_present = "from_trace")]
        model: Option<ModelKind>,
        #[arg(long, required_unless_present = "from_trace")]
        data: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// An evidence.csv written by `run` or `evidence`.
        #[arg(long, conflicts_with_all = ["model", "data"])]
        from_trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time normalized variance for each N over independent batches; writes sweep.csv.
    TnvSweep {
        #[command(flatten)]
        args: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,7,10,20,50")]
        n_list: Vec<usize>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perfect-mixing ESS ratio against exp(-tau sigma^2); writes theorem1.csv.
    ValidateTheory {
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        sigma2_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "linear:5,linear:20,power3:15")]
        ladders: Vec<String>,
        #[arg(long, default_value_t = 100_000)]
        particles: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::SimulateData { model, out, seed, n_obs, rho } => simulate(model, &out, seed, n_obs, rho),
        Command::Tune { args, draws, n0, timing_n, timing_reps, out } => {
            let cfg = Config::load(&args.overrides)?;
            let job = TuneJob { cfg: &cfg, draws, n0, timing_n: &timing_n, timing_reps };
            let est = with_model(args.model, &args.data, &cfg, job)?;
            emit(out.as_deref(), "tuning.kv", &est.to_kv())
        }
        Command::Run { args, out } => {
            let cfg = Config::load(&args.overrides)?;
            let run = with_model(args.model, &args.data, &cfg, RunJob { cfg: &cfg })?;
            write_run(&out, &run)
        }
        Command::Evidence { model, data, overrides, from_trace, out } => {
            let trace = match from_trace {
                Some(p) => EvidenceTrace::read_csv(BufReader::new(File::open(&p)?))?,
                None => {
                    let cfg = Config::load(&overrides)?;
                    let (model, data) = (model.expect("required by clap"), data.expect("required by clap"));
                    with_model(model, &data, &cfg, RunJob { cfg: &cfg })?.report.evidence
                }
            };
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                trace.write_csv(BufWriter::new(File::create(dir.join("evidence.csv"))?))?;
            }
            println!("log_ml = {:?}", trace.log_ml);
            Ok(())
        }
        Command::TnvSweep { args, n_list, batches, out } => {
            let cfg = Config::load(&args.overrides)?;
            let job = SweepJob { cfg: &cfg, n_list: &n_list, batches: batches.unwrap_or(cfg.batches) };
            let rows = with_model(args.model, &args.data, &cfg, job)?;
            std::fs::create_dir_all(&out)?;
            write_sweep_csv(&rows, BufWriter::new(File::create(out.join("sweep.csv"))?))?;
            for r in &rows {
                println!("N = {:4}  tnv = {:.6e}  var = {:.6e}  seconds = {:.2}", r.n, r.tnv, r.variance, r.seconds);
                if r.failures > 0 {
                    eprintln!("warning: N = {}: {} batch(es) failed and were excluded", r.n, r.failures);
                }
            }
            Ok(())
        }
        Command::ValidateTheory { sigma2_list, ladders, particles, seed, out } => {
            let ladders = ladders
                .iter()
                .map(|l| Ok((l.clone(), AnnealingSchedule::parse(l)?)))
                .collect::<Result<Vec<_>>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let toy = theory_toy(&mut rng)?;
            let rows = ess_ratio_table(&toy, &ladders, &sigma2_list, particles, &mut rng)?;
            std::fs::create_dir_all(&out)?;
            write_ess_ratio_csv(&rows, BufWriter::new(File::create(out.join("theorem1.csv"))?))?;
            for r in &rows {
                println!(
                    "{:12} sigma2 = {:<5} measured = {:.4}  predicted = {:.4}",
                    r.ladder, r.sigma2, r.ess_ratio_measured, r.ess_ratio_theory
                );
            }
            Ok(())
        }
    }
}

fn simulate(model: ModelKind, out: &Path, seed: u64, n_obs: Option<usize>, rho: f64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = BufWriter::new(File::create(out)?);
    match model {
        ModelKind::Glmm => simulate_glmm(&GlmmSpec::default(), &mut rng).write_csv(&mut w)?,
        ModelKind::Sv | ModelKind::Svl => {
            let rho = (model == ModelKind::Svl).then_some(rho);
            let theta = SvParams { mu: -0.6, phi: 0.98, sigma_eta: 0.16, rho };
            let (ys, _) = simulate_sv(&theta, n_obs.unwrap_or(945), &mut rng)?;
            for y in ys {
                writeln!(w, "{y}")?;
            }
        }
        ModelKind::Toy => {
            let toy = GaussianToy::simulate(n_obs.unwrap_or(20), 0.5, 1.0, 0.0, 1.0, &mut rng)?;
            for y in toy.y {
                writeln!(w, "{y}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Work that needs a concrete model and initial density.
trait Job {
    type Output;
    fn go<M: Model, P: InitialDensity>(self, model: &M, pi0: &P) -> Result<Self::Output>;
}

fn with_model<J: Job>(kind: ModelKind, data: &Path, cfg: &Config, job: J) -> Result<J::Output> {
    let reader = || -> Result<BufReader<File>> {
        File::open(data).map(BufReader::new).map_err(|e| CliError::config(format!("{}: {e}", data.display())))
    };
    match kind {
        ModelKind::Glmm => {
            let proposal = match cfg.glmm_proposal.as_str() {
                "prior" => GlmmProposal::Prior,
                "laplace" => GlmmProposal::Laplace,
                other => return Err(CliError::config(format!("unknown GLMM proposal `{other}`"))),
            };
            let model = GlmmModel::new(GlmmData::read_csv(reader()?)?).with_proposal(proposal);
            job.go(&model, &glmm_initial_density())
        }
        ModelKind::Sv | ModelKind::Svl => {
            let model = SvModel::new(read_returns(reader()?, cfg.center_returns)?, kind == ModelKind::Svl)?;
            job.go(&model, &model.prior_density())
        }
        ModelKind::Toy => {
            let y = read_returns(reader()?, false)?;
            let model = GaussianToy::new(y, cfg.toy_obs_var, cfg.toy_prior_mean, cfg.toy_prior_var)?.with_noise(cfg.toy_noise)?;
            job.go(&model, &model.prior_density())
        }
    }
}

struct RunJob<'a> {
    cfg: &'a Config,
}

impl Job for RunJob<'_> {
    type Output = RunOutput;
    fn go<M: Model, P: InitialDensity>(self, model: &M, pi0: &P) -> Result<RunOutput> {
        let config = self.cfg.sampler()?;
        Ok(aisel_run(model, pi0, &config, &mut ChaCha8Rng::seed_from_u64(self.cfg.seed))?)
    }
}

struct TuneJob<'a> {
    cfg: &'a Config,
    draws: usize,
    n0: usize,
    timing_n: &'a [usize],
    timing_reps: usize,
}

impl Job for TuneJob<'_> {
    type Output = TuningEstimates;
    fn go<M: Model, P: InitialDensity>(self, model: &M, pi0: &P) -> Result<TuningEstimates> {
        let tau = self.cfg.schedule()?.tau();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let gamma_bar2 = estimate_gamma_bar2(model, pi0, self.draws, self.n0, &mut rng)?;
        // Time the estimator at an in-support draw from the initial density.
        let theta = (0..10_000)
            .map(|_| pi0.sample(&mut rng))
            .find(|x| model.layout().contains(x))
            .ok_or(AiselError::InitRetriesExhausted(10_000))?;
        let samples = measure_timing(model, &theta, self.timing_n, self.timing_reps, &mut rng)?;
        Ok(TuningEstimates::compute(tau, fit_timing(&samples)?, gamma_bar2)?)
    }
}

struct SweepJob<'a> {
    cfg: &'a Config,
    n_list: &'a [usize],
    batches: usize,
}

impl Job for SweepJob<'_> {
    type Output = Vec<aisel::runner::SweepRow>;
    fn go<M: Model, P: InitialDensity>(self, model: &M, pi0: &P) -> Result<Self::Output> {
        let options = BatchOptions { batches: self.batches, root_seed: self.cfg.seed, parallel_batches: self.cfg.parallel_batches };
        Ok(tnv_sweep(model, pi0, &self.cfg.sampler()?, self.n_list, &options)?)
    }
}

fn write_run(dir: &Path, run: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let r = &run.report;
    let mut kv = String::new();
    let _ = writeln!(kv, "params = {}", r.param_names.join(","));
    for (name, (m, s)) in r.param_names.iter().zip(r.posterior_mean.iter().zip(&r.posterior_sd)) {
        let _ = writeln!(kv, "mean.{name} = {m:?}");
        let _ = writeln!(kv, "sd.{name} = {s:?}");
    }
    let _ = writeln!(kv, "log_ml = {:?}", r.log_ml);
    let _ = writeln!(kv, "estimator_calls = {}", r.estimator_calls);
    let _ = writeln!(kv, "proposals = {}", r.proposals);
    let _ = writeln!(kv, "proposals_evaluated = {}", r.proposals_evaluated);
    let _ = writeln!(kv, "resample_count = {}", r.resample_count);
    let _ = writeln!(kv, "final_ess = {:?}", r.final_ess);
    if let Some(g) = r.gamma_bar2 {
        let _ = writeln!(kv, "gamma_bar2 = {g:?}");
    }
    let _ = writeln!(kv, "seconds = {}", r.seconds);
    std::fs::write(dir.join("report.kv"), kv)?;

    let mut post = String::from("param,mean,sd\n");
    for (name, (m, s)) in r.param_names.iter().zip(r.posterior_mean.iter().zip(&r.posterior_sd)) {
        let _ = writeln!(post, "{name},{m},{s}");
    }
    std::fs::write(dir.join("posterior.csv"), post)?;
    run.trace.write_csv(BufWriter::new(File::create(dir.join("trace.csv"))?))?;
    r.evidence.write_csv(BufWriter::new(File::create(dir.join("evidence.csv"))?))?;
    println!("log_ml = {:?}", r.log_ml);
    Ok(())
}

fn emit(dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), text)?;
    }
    print!("{text}");
    Ok(())
}
