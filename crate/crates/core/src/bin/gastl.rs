use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gastl::dataset::{make_synthetic_transfer, write_csv_matrix, SyntheticSpec};
use gastl::l21solver::IrlsOptions;
use gastl::lbfgs::LbfgsOptions;
use gastl::pipeline::{
    default_p_schedule, gamma_ablation_on_bundle, grid_search_on_bundle, run_on_bundle, DataOrigin,
    ExperimentConfig, GridSpec, SampleCount,
};
use gastl::relevance::{write_relevance_csv, LabelMode, Scheme};
use gastl::transfer::TransferHyperParams;
use gastl::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "gastl",
    version,
    about = "Source sample selection for transfer learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its JSON report.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-source weights, transferability and pseudo-labels as CSV.
        #[arg(long)]
        relevance_out: Option<PathBuf>,
        /// Fitted transfer model as JSON.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Sweep hidden size, lambda, gamma and p.
    Grid {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Compare the best gamma = 0 cell with the best cell overall.
    AblateGamma {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Write a synthetic source/target dataset as three CSV files.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    synth_d: usize,
    #[arg(long, default_value_t = 3)]
    synth_clusters: usize,
    #[arg(long, default_value_t = 20)]
    synth_src_per_cluster: usize,
    #[arg(long, default_value_t = 15)]
    synth_trg_per_class: usize,
    #[arg(long, default_value_t = 20)]
    synth_test_per_class: usize,
    #[arg(long, default_value_t = 2)]
    synth_relevant: usize,
    #[arg(long, default_value_t = 0.05)]
    synth_noise: f64,
    #[arg(long, default_value_t = 0)]
    synth_seed: u64,
}

impl SynthArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            d: self.synth_d,
            clusters: self.synth_clusters,
            n_src_per_cluster: self.synth_src_per_cluster,
            n_trg_per_class: self.synth_trg_per_class,
            n_test_per_class: self.synth_test_per_class,
            relevant_clusters: self.synth_relevant,
            noise_sd: self.synth_noise,
            seed: self.synth_seed,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, requires_all = ["target_train", "target_test"])]
    source: Option<PathBuf>,
    #[arg(long)]
    target_train: Option<PathBuf>,
    #[arg(long)]
    target_test: Option<PathBuf>,
    /// Header name of the label column in the target files.
    #[arg(long)]
    label_column: Option<String>,
    /// Use generated data instead of CSV files.
    #[arg(long, conflicts_with = "source")]
    synthetic: bool,
    #[command(flatten)]
    synth: SynthArgs,

    #[arg(long, default_value_t = 10)]
    hidden_size: usize,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    gamma: f64,
    #[arg(long, default_value_t = 5)]
    knn: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    /// Number of source samples to transfer, `all` or `none`.
    #[arg(long, default_value = "all")]
    p: SampleCount,
    #[arg(long, default_value = "A")]
    scheme: Scheme,
    #[arg(long, default_value = "soft")]
    mode: LabelMode,
    #[arg(long, default_value_t = 10)]
    max_outer: usize,
    #[arg(long, default_value_t = 1e-4)]
    outer_tol: f64,
    #[arg(long, default_value_t = 400)]
    lbfgs_iters: usize,
    #[arg(long, default_value_t = 100)]
    lbfgs_memory: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let data = match (&self.source, self.synthetic) {
            (Some(source), _) => DataOrigin::Files {
                source: source.clone(),
                target_train: self.target_train.clone().expect("required with --source"),
                target_test: self.target_test.clone().expect("required with --source"),
                label_column: self.label_column.clone(),
            },
            (None, true) => DataOrigin::Synthetic(self.synth.spec()),
            (None, false) => {
                return Err(Error::InvalidInput(
                    "give --source/--target-train/--target-test or --synthetic".into(),
                ))
            }
        };
        let hyper = TransferHyperParams {
            hidden_size: self.hidden_size,
            mu: self.mu,
            lambda: self.lambda,
            gamma: self.gamma,
            knn: self.knn,
            max_outer: self.max_outer,
            outer_tol: self.outer_tol,
            irls: IrlsOptions {
                epsilon: self.epsilon,
                ..IrlsOptions::default()
            },
            lbfgs: LbfgsOptions {
                max_iterations: self.lbfgs_iters,
                memory: self.lbfgs_memory,
                ..LbfgsOptions::default()
            },
            seed: self.seed,
        };
        let cfg = ExperimentConfig {
            data,
            hyper,
            p: self.p,
            scheme: self.scheme,
            mode: self.mode,
            sigma2: self.sigma2,
            output: self.out.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated hidden sizes.
    #[arg(long, value_delimiter = ',')]
    hidden_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Comma-separated counts, `all` or `none`; defaults to a schedule
    /// clipped to the number of source samples.
    #[arg(long, value_delimiter = ',')]
    ps: Option<Vec<SampleCount>>,
    /// Per-cell results as CSV.
    #[arg(long)]
    table: Option<PathBuf>,
}

impl GridArgs {
    fn spec(&self, n_src: usize) -> GridSpec {
        GridSpec {
            hidden_sizes: self
                .hidden_sizes
                .clone()
                .unwrap_or_else(|| TransferHyperParams::HIDDEN_GRID.to_vec()),
            lambdas: self
                .lambdas
                .clone()
                .unwrap_or_else(|| TransferHyperParams::LAMBDA_GRID.to_vec()),
            gammas: self
                .gammas
                .clone()
                .unwrap_or_else(|| TransferHyperParams::GAMMA_GRID.to_vec()),
            ps: self.ps.clone().unwrap_or_else(|| default_p_schedule(n_src)),
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}").and_then(|()| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                }),
                _ => Ok(()),
            }
        }
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run {
            common,
            relevance_out,
            model_out,
        } => {
            let cfg = common.config()?;
            let bundle = cfg.data.load()?;
            let run = run_on_bundle(&bundle, &cfg)?;
            if let Some(t) = &run.transfer {
                if let Some(path) = &relevance_out {
                    write_relevance_csv(
                        path,
                        &t.weights,
                        &t.transferability,
                        &t.pseudo_labels,
                        &run.report.selected_sources,
                    )?;
                }
                if let Some(path) = &model_out {
                    t.model.write_json(path)?;
                }
            } else if relevance_out.is_some() || model_out.is_some() {
                eprintln!("p = none: no transfer model, skipping --relevance-out/--model-out");
            }
            write_out(cfg.output.as_deref(), &run.report.to_json())
        }
        Command::Grid { common, grid } => {
            let cfg = common.config()?;
            let bundle = cfg.data.load()?;
            let spec = grid.spec(bundle.n_src());
            let outcome = grid_search_on_bundle(&bundle, &cfg, &spec)?;
            if let Some(path) = &grid.table {
                write_out(Some(path), &outcome.to_csv())?;
            }
            write_out(cfg.output.as_deref(), &outcome.to_json())
        }
        Command::AblateGamma { common, grid } => {
            let cfg = common.config()?;
            let bundle = cfg.data.load()?;
            let spec = grid.spec(bundle.n_src());
            let ablation = gamma_ablation_on_bundle(&bundle, &cfg, &spec)?;
            if let Some(path) = &grid.table {
                write_out(Some(path), &ablation.grid.to_csv())?;
            }
            write_out(cfg.output.as_deref(), &ablation.to_json())
        }
        Command::Synth { synth, out_dir } => {
            let s = make_synthetic_transfer(&synth.spec())?;
            std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
                path: out_dir.clone(),
                source,
            })?;
            let b = &s.bundle;
            write_csv_matrix(out_dir.join("source.csv"), &b.x_src, None)?;
            write_csv_matrix(out_dir.join("target_train.csv"), &b.x_trg, Some(&b.y_trg))?;
            write_csv_matrix(out_dir.join("target_test.csv"), &b.x_test, Some(&b.y_test))?;
            let relevant = s.relevant.iter().filter(|&&r| r).count();
            eprintln!(
                "wrote {} source ({relevant} relevant), {} target train, {} target test samples to {}",
                b.n_src(),
                b.n_trg(),
                b.x_test.ncols(),
                out_dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::InvalidConfig => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}
