//! Command-line front end.
//!
//! Exit codes: 0 success, 1 fatal error, 2 usage error, 3 batch finished with
//! at least one failed basin.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use exqr::eval::Method;
use exqr::model::{deserialize_model, fit_extremal, serialize_model};
use exqr::pipeline::{
    evaluate, load_series, parse_levels, parse_methods, predict_rows, read_manifest, run_batch,
    run_postprocess, split_rows, training_dataset, write_batch, write_report, write_run, DateRange,
    KSetting, PredictionTable, RunConfig,
};
use exqr::synth::{generate, to_series, SynthSpec};
use exqr::{Error, Result};

const EXIT_FATAL: u8 = 1;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "exqr", version, about = "Extremal quantile regression post-processing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on the train slice and write model.json
    Fit(SeriesArgs),
    /// Predict the test slice with a saved model
    Predict {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Score a predictions CSV against observations
    Evaluate {
        #[command(flatten)]
        series: SeriesArgs,
        #[arg(long)]
        predictions: PathBuf,
        /// Adds the model summary and per-point EVI spread to the report
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit, predict and evaluate one basin
    Run(SeriesArgs),
    /// Run every basin listed in a manifest CSV (`path,basin_id`)
    Batch {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Write a synthetic series with a known conditional tail
    Synth(SynthArgs),
    /// Print extremal over conventional log ratios from a predictions CSV
    Compare {
        #[arg(long)]
        predictions: PathBuf,
    },
}

#[derive(Args)]
struct SeriesArgs {
    /// Series CSV with header `date,obs,sim`
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the input file stem
    #[arg(long)]
    basin_id: Option<String>,
    #[command(flatten)]
    opts: ConfigArgs,
}

/// Flags override values from `--config`. Rows dated before the train range
/// (model warm-up or calibration periods) are accepted and ignored.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// START:END, inclusive ISO dates
    #[arg(long)]
    train: Option<DateRange>,
    #[arg(long)]
    test: Option<DateRange>,
    /// Comma-separated, e.g. 0.97,0.999,0.9999
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    nu: Option<f64>,
    /// Integer or `auto`
    #[arg(long)]
    k: Option<KSetting>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of conventional,extremal
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Also write SVG charts
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1462)]
    n: usize,
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    #[arg(long, default_value_t = 1.0)]
    a1: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synth")]
    basin_id: String,
    #[arg(long, default_value = "2000-01-01")]
    start: NaiveDate,
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

impl ConfigArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if self.train.is_some() {
            cfg.train = self.train;
        }
        if self.test.is_some() {
            cfg.test = self.test;
        }
        if let Some(levels) = &self.levels {
            cfg.levels = parse_levels(levels)?;
        }
        if let Some(nu) = self.nu {
            cfg.nu = nu;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(methods) = &self.methods {
            cfg.methods = parse_methods(methods)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SeriesArgs {
    fn basin_id(&self) -> String {
        self.basin_id.clone().unwrap_or_else(|| {
            self.input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "basin".into())
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(EXIT_FATAL)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Fit(args) => {
            let cfg = args.opts.config()?;
            let series = load_series(&args.input, &args.basin_id())?;
            let (train, _) = split_rows(&series, &cfg);
            let data = training_dataset(&train)?;
            let model = fit_extremal(&data, cfg.k.into(), cfg.nu, &cfg.sorted_levels())?;
            fs::create_dir_all(&args.opts.output_dir)?;
            let path = args.opts.output_dir.join("model.json");
            fs::write(&path, serialize_model(&model))?;
            println!(
                "fitted {} rows: k = {}, gamma_pool = {:.4}, wrote {}",
                data.n(),
                model.cfg.k,
                model.gamma_pool,
                path.display()
            );
        }
        Command::Predict { series: args, model } => {
            let cfg = args.opts.config()?;
            let model = deserialize_model(&fs::read(&model)?)?;
            let series = load_series(&args.input, &args.basin_id())?;
            let (_, test) = split_rows(&series, &cfg);
            let table = predict_rows(&model, &test, &cfg)?;
            fs::create_dir_all(&args.opts.output_dir)?;
            let path = args.opts.output_dir.join("predictions.csv");
            table.write_csv(fs::File::create(&path)?)?;
            println!("wrote {} series of {} values to {}", table.series.len(), table.dates.len(), path.display());
        }
        Command::Evaluate {
            series: args,
            predictions,
            model,
        } => {
            let model = model.map(|p| fs::read(p).map_err(Error::from).and_then(|b| deserialize_model(&b))).transpose()?;
            let series = load_series(&args.input, &args.basin_id())?;
            let table = PredictionTable::read_csv(fs::File::open(&predictions)?)?;
            let mut observed = Vec::with_capacity(table.dates.len());
            let mut sims = Vec::with_capacity(table.dates.len());
            for date in &table.dates {
                let row = series
                    .rows
                    .binary_search_by_key(date, |r| r.date)
                    .map(|i| &series.rows[i])
                    .map_err(|_| Error::InvalidInput(format!("no observation for predicted date {date}")))?;
                observed.push(row.obs);
                sims.push(row.sim);
            }
            let report = evaluate(&series.basin_id, &observed, &sims, &table, model.as_ref())?;
            write_report(&args.opts.output_dir, &report)?;
            print_comparisons(&table);
        }
        Command::Run(args) => {
            let cfg = args.opts.config()?;
            let series = load_series(&args.input, &args.basin_id())?;
            let out = run_postprocess(&series, &cfg)?;
            let (_, test) = split_rows(&series, &cfg);
            let observed: Vec<f64> = test.iter().map(|r| r.obs).collect();
            write_run(&args.opts.output_dir, &out, &observed, args.opts.plots)?;
            println!(
                "{}: {} train rows, {} test rows, k = {}, gamma_pool = {:.4}",
                series.basin_id,
                out.n_train,
                test.len(),
                out.model.cfg.k,
                out.model.gamma_pool
            );
            print_comparisons(&out.predictions);
        }
        Command::Batch { manifest, opts } => {
            let cfg = opts.config()?;
            let entries = read_manifest(&manifest)?;
            let out = run_batch(&entries, &cfg)?;
            write_batch(&opts.output_dir, &out, opts.plots)?;
            let s = &out.summary;
            println!("{} of {} basins succeeded", s.n_succeeded, s.n_basins);
            for f in &s.failures {
                eprintln!("failed {}: {}", f.basin_id, f.error);
            }
            if s.n_failed > 0 {
                return Ok(EXIT_PARTIAL);
            }
        }
        Command::Synth(a) => {
            let spec = SynthSpec {
                n: a.n,
                gamma: a.gamma,
                a0: a.a0,
                a1: a.a1,
                seed: a.seed,
            };
            let sample = generate(&spec)?;
            let series = to_series(&sample, &a.basin_id, a.start);
            fs::create_dir_all(&a.output_dir)?;
            let csv_path = a.output_dir.join(format!("{}.csv", a.basin_id));
            exqr::pipeline::write_series(&series, fs::File::create(&csv_path)?)?;
            let mut spec_json = serde_json::to_vec_pretty(&spec)?;
            spec_json.push(b'\n');
            fs::write(sidecar(&csv_path), spec_json)?;
            println!("wrote {} rows to {}", spec.n, csv_path.display());
        }
        Command::Compare { predictions } => {
            let table = PredictionTable::read_csv(fs::File::open(&predictions)?)?;
            print_comparisons(&table);
        }
    }
    Ok(0)
}

fn sidecar(csv: &Path) -> PathBuf {
    csv.with_extension("spec.json")
}

fn print_comparisons(table: &PredictionTable) {
    let mut printed = false;
    for s in table.series.iter().filter(|s| s.method == Method::Extremal) {
        let Some(conv) = table.get(Method::Conventional, s.level) else {
            continue;
        };
        match exqr::eval::log_quantile_ratio(&s.values, &conv.values) {
            Ok(r) => {
                if !printed {
                    println!("level\tmean_log_ratio\tmedian_log_ratio\tdropped");
                    printed = true;
                }
                println!("{}\t{:.4}\t{:.4}\t{}", s.level, r.mean, r.median, r.dropped);
            }
            Err(e) => eprintln!("level {}: {e}", s.level),
        }
    }
}
