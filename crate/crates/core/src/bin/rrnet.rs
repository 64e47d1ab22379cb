use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rrnet::abc::AbcSpec;
use rrnet::harness::verify::{verify, Suite};
use rrnet::harness::{self, ExperimentConfig};
use rrnet::metrics::to_csv_string;
use rrnet::Error;

#[derive(Parser)]
#[command(name = "rrnet", version, about = "Decentralized random-reshuffling optimizers over simulated networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method with one seed and write its CSV.
    Run(Common),
    /// Run every method x seed pair and write per-run and aggregate CSVs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Upper bound on concurrent runs.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run a verification suite.
    Verify {
        /// abc | shuffle | spectral | gradcheck | all
        #[arg(default_value = "all")]
        suite: String,
        /// gtrr | edrr | custom:<a-coeffs>/<b2-coeffs>/<c-coeffs>
        #[arg(long)]
        abc: Option<String>,
    },
    /// Same as `verify abc`.
    VerifyAbc {
        #[arg(long)]
        abc: Option<String>,
    },
    /// Print theory constants for the configured topology and first method.
    Constants(Common),
    /// Print the spectrum of the configured mixing matrix.
    Spectrum(Common),
}

#[derive(Args, Default)]
struct Common {
    /// Config file (key = value, [section] headers); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ring | grid:RxC | complete | star | custom:<edge-file>
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    agents: Option<String>,
    /// Laziness: W <- tau I + (1 - tau) W.
    #[arg(long)]
    tau: Option<String>,
    /// quadratic | logistic | ncvx-logistic
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    /// Components per agent.
    #[arg(long)]
    m: Option<String>,
    /// Agent heterogeneity (quadratic spread; label-sorted split when > 0).
    #[arg(long)]
    hetero: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    /// Directory with CIFAR-10 binary batches.
    #[arg(long)]
    cifar10: Option<String>,
    #[arg(long)]
    condition: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    /// crr | dsgd | drr | dsgt | gtrr | ed | edrr | edrr-pd (comma-separated for sweeps)
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// same | random
    #[arg(long)]
    init: Option<String>,
    /// Reset the exact-diffusion correction at every epoch start.
    #[arg(long)]
    strict_alg2: bool,
    /// Seed list `0,1,2` or range `0..10`.
    #[arg(long, alias = "seeds")]
    seed: Option<String>,
    /// rr | once | iid
    #[arg(long)]
    sampling: Option<String>,
    /// const:A | dec:THETA,K | harmonic:A,B | plateau:L1,L2,... | auto
    #[arg(long)]
    stepsize: Option<String>,
    /// Shorthand for --stepsize auto.
    #[arg(long)]
    auto_stepsize: bool,
    /// ncvx | pl-const | pl-decreasing
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    worst_case_constants: bool,
    #[arg(long)]
    inner_metrics: bool,
    /// Fill the wall_ns column (breaks byte-for-byte reproducibility).
    #[arg(long)]
    timing: bool,
    /// Output file (run) or directory (sweep).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let pairs: [(&str, &Option<String>); 22] = [
            ("topology.graph", &self.graph),
            ("topology.agents", &self.agents),
            ("topology.tau", &self.tau),
            ("objective.kind", &self.objective),
            ("objective.rho", &self.rho),
            ("objective.eta", &self.eta),
            ("objective.dim", &self.dim),
            ("objective.m", &self.m),
            ("objective.hetero", &self.hetero),
            ("objective.data_seed", &self.data_seed),
            ("objective.cifar10", &self.cifar10),
            ("objective.condition", &self.condition),
            ("objective.noise", &self.noise),
            ("run.methods", &self.method),
            ("run.epochs", &self.epochs),
            ("run.init", &self.init),
            ("run.seeds", &self.seed),
            ("run.sampling", &self.sampling),
            ("schedule.stepsize", &self.stepsize),
            ("schedule.regime", &self.regime),
            ("schedule.theta", &self.theta),
            ("schedule.patience", &self.patience),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        let flags = [
            ("run.strict_alg2", self.strict_alg2),
            ("schedule.worst_case_constants", self.worst_case_constants),
            ("run.inner_metrics", self.inner_metrics),
            ("run.timing", self.timing),
        ];
        for (key, on) in flags {
            if on {
                cfg.set(key, "true")?;
            }
        }
        if self.auto_stepsize {
            cfg.set("schedule.stepsize", "auto")?;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

const EXIT_VERIFY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn print_checks(suite: &str, abc: Option<&str>) -> ExitCode {
    let suite: Suite = match suite.parse() {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let abc = match abc.map(str::parse::<AbcSpec>).transpose() {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let checks = verify(suite, abc.as_ref());
    for c in &checks {
        println!("{c}");
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Command::Run(common) => {
            let cfg = match common.config() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            if cfg.methods.len() != 1 || cfg.seeds.len() != 1 {
                return fail(Error::Config("run takes exactly one method and one seed; use sweep for more".into()));
            }
            let result = harness::prepare(&cfg).and_then(|prepared| {
                let runs = harness::run_all(&cfg, &prepared, 1)?;
                let (method, seed, out) = &runs[0];
                let meta = harness::run_metadata(&cfg, &prepared, *method, *seed, out);
                Ok((to_csv_string(&meta, &out.records), out.diverged))
            });
            match result {
                Ok((csv, diverged)) => {
                    match &common.out {
                        Some(path) => {
                            if let Err(e) = std::fs::write(path, csv) {
                                eprintln!("error: cannot write {}: {e}", path.display());
                                return ExitCode::from(EXIT_CONFIG);
                            }
                        }
                        None => print!("{csv}"),
                    }
                    if diverged {
                        ExitCode::from(EXIT_DIVERGED)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { common, workers } => {
            let cfg = match common.config() {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            match harness::run_sweep(&cfg, workers) {
                Ok(res) => {
                    for f in &res.files {
                        println!("{}", f.display());
                    }
                    if res.all_diverged() {
                        eprintln!("every run diverged");
                        ExitCode::from(EXIT_DIVERGED)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Verify { suite, abc } => print_checks(&suite, abc.as_deref()),
        Command::VerifyAbc { abc } => print_checks("abc", abc.as_deref()),
        Command::Constants(common) => {
            let lines = common
                .config()
                .and_then(|cfg| harness::describe_constants(&cfg, cfg.methods[0]));
            match lines {
                Ok(lines) => {
                    for l in lines {
                        println!("{l}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Spectrum(common) => match common.config().and_then(|cfg| harness::describe_spectrum(&cfg)) {
            Ok(lines) => {
                for l in lines {
                    println!("{l}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
