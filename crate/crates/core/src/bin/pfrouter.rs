//! Command-line front end: one subcommand per pipeline stage plus `run`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use prefill_router::evaluation::{evaluate_router, EvalOptions, HeadroomPoint, OraclePoints};
use prefill_router::features::{fit_pca, FeatureMatrix, DEFAULT_PCA_DIM};
use prefill_router::geometry::render_diagnostics;
use prefill_router::ingest::{
    load_activation_store, load_labels, load_pool, stratified_split, MatrixKey, Pooling,
    SplitAssignment, SplitFractions,
};
use prefill_router::pipeline::{correctness, predict_with_costs, run_pipeline, RunConfig};
use prefill_router::predictors::{train_shared_trunk, TrunkNetConfig, TrunkNetEnsemble};
use prefill_router::report::report_render;
use prefill_router::routing::{route, sweep_lambda, write_decisions};
use prefill_router::synth::{generate, SynthSpec};
use prefill_router::{geometry, Error, Result};

#[derive(Parser)]
#[command(name = "pfrouter", version, about = "Cost-aware LLM routing from prefill activations")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with a planted signal and a run config.
    Synth {
        /// TOML synth spec; defaults to the planted three-target spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        strength: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_queries: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Layer diagnostics (d_eff, anisotropy, Fisher J) over the upper half.
    Probe {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        activations: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
        pca_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reuse an existing split instead of drawing an 85/15 one.
        #[arg(long)]
        split: Option<PathBuf>,
        /// JSON diagnostics output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a PCA model on one (layer, pooling) matrix.
    FitPca {
        #[arg(long)]
        activations: PathBuf,
        #[arg(long)]
        layer: u16,
        #[arg(long, default_value = "last_token")]
        pooling: Pooling,
        #[arg(long, default_value_t = DEFAULT_PCA_DIM)]
        pca_dim: usize,
        /// Fit on the training ids of this split; all rows otherwise.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a SharedTrunkNet ensemble on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// TOML file with trunk settings; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Route every query of a feature file at one λ.
    Route {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        lambda: f64,
        /// Line-delimited JSON decisions; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Operating points over the λ grid.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1e-2)]
        grid_step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full evaluation report for a feature file.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1e-2)]
        grid_step: f64,
        #[arg(long, default_value = "lambda_one")]
        headroom_point: String,
        /// Points the oracle distance averages over: distinct or raw.
        #[arg(long, default_value = "distinct")]
        oracle_points: OraclePoints,
        /// Directory for report.json, report.txt and operating_points.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// The whole pipeline from a run config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    pool: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    ensemble: PathBuf,
    /// Features of the queries to route.
    #[arg(long)]
    features: PathBuf,
    /// Training features; their queries anchor the cost normalization.
    #[arg(long)]
    train_features: PathBuf,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            spec,
            strength,
            seed,
            n_queries,
            out,
        } => {
            let mut s = match spec {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => SynthSpec::default(),
            };
            if let Some(v) = strength {
                s.targets.iter_mut().for_each(|t| t.strength = v);
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = n_queries {
                s.n_queries = v;
            }
            let ds = generate(&s)?;
            ds.write(&out)?;
            let encoders: BTreeMap<String, PathBuf> = ds
                .stores
                .iter()
                .map(|st| {
                    let id = st.encoder_id().to_string();
                    let path = PathBuf::from("activations").join(&id);
                    (id, path)
                })
                .collect();
            let mut cfg = RunConfig::new("run", "labels.csv", "pool.toml", encoders);
            if s.num_encoders > 1 {
                cfg.encoder_mode = prefill_router::pipeline::EncoderMode::Auto;
            }
            let cfg_path = out.join("run.toml");
            fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| Error::Io { path: cfg_path.clone(), source: e })?;
            for t in &ds.metadata.targets {
                println!(
                    "{:<12} base_rate {:.4} bias {:+.4} bayes_auc {:.4}",
                    t.model_id, t.realized_base_rate, t.bias, t.bayes_auc
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Probe {
            data,
            activations,
            pca_dim,
            seed,
            split,
            out,
        } => {
            let pool = load_pool(&data.pool)?;
            let labels = load_labels(&data.labels)?.select_models(&pool.model_ids())?;
            let store = load_activation_store(&activations)?;
            let split = match split {
                Some(p) => SplitAssignment::read_json(&p)?,
                None => stratified_split(&labels, SplitFractions::default(), seed)?,
            };
            let dim = prefill_router::pipeline::effective_pca_dim(pca_dim, split.train_ids.len(), store.hidden_dim());
            let diags = geometry::probe_layers(&store, &labels, &pool, &split, dim)?;
            print!("{}", render_diagnostics(&diags));
            if let Some(p) = out {
                write_or_print(Some(&p), &serde_json::to_string_pretty(&diags)?)?;
            }
        }
        Command::FitPca {
            activations,
            layer,
            pooling,
            pca_dim,
            split,
            seed,
            out,
        } => {
            let store = load_activation_store(&activations)?;
            let ids = match split {
                Some(p) => SplitAssignment::read_json(&p)?.train_ids,
                None => store.query_ids().to_vec(),
            };
            let x = store.rows(MatrixKey::new(layer, pooling), &ids)?;
            let pca = fit_pca(x.view(), pca_dim, seed)?;
            pca.write(&out)?;
            let total: f64 = pca.explained_variance().sum();
            println!("{} components, explained variance {total:.6}", pca.n_components());
        }
        Command::Train {
            features,
            data,
            config,
            seed,
            out,
        } => {
            let pool = load_pool(&data.pool)?;
            let labels = load_labels(&data.labels)?;
            let x = FeatureMatrix::read(&features)?;
            let cfg: TrunkNetConfig = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => TrunkNetConfig::default(),
            };
            let targets = pool.model_ids();
            let y = correctness(&labels, &pool, &x.query_ids)?;
            let ens = train_shared_trunk(x.data.view(), y.view(), &targets, &cfg, seed)?;
            ens.write(&out)?;
            for &i in &ens.selected {
                let m = &ens.members[i];
                println!("seed {:>20} val_loss {:.6} best_epoch {}", m.seed, m.val_loss, m.best_epoch);
            }
        }
        Command::Route { model, lambda, out } => {
            let (p_hat, costs, _) = load_model(&model)?;
            let decisions = route(&p_hat, &costs, lambda)?;
            match out {
                Some(p) => write_decisions(&decisions, &p)?,
                None => {
                    for d in &decisions {
                        println!("{}", serde_json::to_string(d)?);
                    }
                }
            }
        }
        Command::Sweep { model, grid_step, out } => {
            let (p_hat, costs, correct) = load_model(&model)?;
            let sweep = sweep_lambda(p_hat.probs.view(), &costs, correct.view(), grid_step)?;
            let mut text = String::from("lambda,mean_cost,accuracy\n");
            for p in &sweep.points {
                text.push_str(&format!("{},{:e},{:e}\n", p.lambda, p.mean_cost, p.accuracy));
            }
            eprintln!("{} grid points, {} distinct operating points", sweep.raw_points, sweep.points.len());
            write_or_print(out.as_deref(), &text)?;
        }
        Command::Evaluate {
            model,
            grid_step,
            headroom_point,
            oracle_points,
            out,
        } => {
            let point: HeadroomPoint = serde_json::from_value(serde_json::Value::String(headroom_point))
                .map_err(|e| Error::Config(format!("headroom point: {e}")))?;
            let (p_hat, costs, correct) = load_model(&model)?;
            let report = evaluate_router(
                &p_hat,
                &costs,
                correct.view(),
                &EvalOptions {
                    grid_step,
                    headroom_point: point,
                    oracle_points,
                },
            )?;
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            report.write_json(&out.join("report.json"))?;
            report.write_operating_points(&out.join("operating_points.csv"))?;
            let text = report_render(&report);
            write_or_print(Some(&out.join("report.txt")), &text)?;
            print!("{text}");
        }
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let output = run_pipeline(&cfg)?;
            print!("{}", report_render(&output.report));
            println!("artifacts in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

type Loaded = (
    prefill_router::predictors::PredictionMatrix,
    prefill_router::routing::CostMatrix,
    ndarray::Array2<f64>,
);

fn load_model(args: &ModelArgs) -> Result<Loaded> {
    let pool = load_pool(&args.data.pool)?;
    let labels = load_labels(&args.data.labels)?;
    let ens = TrunkNetEnsemble::read(&args.ensemble)?;
    let features = FeatureMatrix::read(&args.features)?;
    let train = FeatureMatrix::read(&args.train_features)?;
    let (p_hat, costs) = predict_with_costs(&ens, &features, &train, &pool, &labels)?;
    let correct = correctness(&labels, &pool, &features.query_ids)?;
    Ok((p_hat, costs, correct))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
