use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vbcgcd::config::load_config;
use vbcgcd::features::{read_features, write_features, FeatureFormat};
use vbcgcd::report::{det_traces_to_csv, load_report, render_table, report_to_csv, report_to_json};
use vbcgcd::runner::run_protocol;
use vbcgcd::split::{build_split, SessionSplit, SplitManifest};
use vbcgcd::synth::{generate_synthetic, SynthParams};
use vbcgcd::vbgm::{load_store, save_store};
use vbcgcd::{IoError, Result};
use vbcgcd_core::cluster::estimate_num_classes;
use vbcgcd_core::eval::{align_new_labels, session_accuracies};
use vbcgcd_core::{predict, PipelineConfig};

#[derive(Parser, Debug)]
#[command(name = "vbcgcd", version, about = "Continual category discovery with variational Gaussian class models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Random seed; overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

impl Common {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(p) => load_config(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        Ok(config)
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| IoError::Io {
            path: self.out_dir.clone(),
            source: e,
        })?;
        Ok(self.out_dir.join(name))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled Gaussian blob corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 8.0)]
        separation: f64,
        #[arg(long, default_value_t = 2.0)]
        cov_spread: f64,
        /// Write CSV instead of FVB1.
        #[arg(long)]
        csv: bool,
    },
    /// Partition a labeled corpus into offline, online and test subsets.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
    },
    /// Run the offline session and every online session, then score.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        /// Split manifest; built from the config layout when omitted.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write per-step log-determinant traces.
        #[arg(long)]
        det_traces: bool,
    },
    /// Classify a feature file with a saved model.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Ids below this are scored as-is; the rest are matched to labels.
        #[arg(long, default_value_t = 0)]
        old_count: u32,
    },
    /// Estimate the number of classes in a feature file.
    EstimateK {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Print a metrics report as a table.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        report: PathBuf,
    },
}

fn read(path: &Path) -> Result<vbcgcd_core::FeatureMatrix> {
    read_features(path, FeatureFormat::from_path(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            classes,
            dim,
            samples,
            separation,
            cov_spread,
            csv,
        } => {
            let config = common.pipeline_config()?;
            let params = SynthParams {
                num_classes: classes,
                dim,
                samples_per_class: samples,
                separation,
                cov_spread,
                seed: config.seed,
            };
            let corpus = generate_synthetic(&params)?;
            let (name, format) = if csv {
                ("features.csv", FeatureFormat::Csv)
            } else {
                ("features.fvb1", FeatureFormat::Fvb1)
            };
            let path = common.output(name)?;
            write_features(&corpus.data, &path, format)?;
            let truth = serde_json::json!({ "params": corpus.params, "classes": corpus.classes });
            write_text(&common.output("truth.json")?, &serde_json::to_string_pretty(&truth).unwrap())?;
            println!("{}", path.display());
        }
        Command::Split { common, features } => {
            let config = common.pipeline_config()?;
            let data = read(&features)?;
            let (_, manifest) = build_split(&data, &config.layout, config.seed)?;
            let path = common.output("manifest.json")?;
            write_text(&path, &serde_json::to_string_pretty(&manifest).unwrap())?;
            println!("{}", path.display());
        }
        Command::Run {
            common,
            features,
            manifest,
            det_traces,
        } => {
            let Some(config_path) = &common.config else {
                return Err(IoError::Config("run needs --config".into()));
            };
            let mut config = load_config(config_path)?;
            if let Some(s) = common.seed {
                config.seed = s;
            }
            let data = read(&features)?;
            let split = match manifest {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| IoError::Io { path: p.clone(), source: e })?;
                    let m: SplitManifest = serde_json::from_str(&text).map_err(|e| IoError::Format {
                        format: "manifest JSON",
                        offset: 0,
                        message: e.to_string(),
                    })?;
                    SessionSplit::from_manifest(&data, &m)?
                }
                None => build_split(&data, &config.layout, config.seed)?.0,
            };
            let result = run_protocol(&split, &config, det_traces)?;
            save_store(&result.store, &common.output("store.vbgm")?)?;
            write_text(&common.output("report.json")?, &report_to_json(&result.report))?;
            write_text(&common.output("report.csv")?, &report_to_csv(&result.report))?;
            if det_traces {
                write_text(&common.output("det_traces.csv")?, &det_traces_to_csv(&result.det_traces))?;
            }
            print!("{}", render_table(&result.report));
        }
        Command::Eval {
            common,
            store,
            features,
            old_count,
        } => {
            let config = common.pipeline_config()?;
            let store = load_store(&store)?;
            let data = read(&features)?;
            let pred = predict(&store, &data, config.distance)?;
            let mut csv = String::from("row,predicted,label\n");
            for (i, p) in pred.iter().enumerate() {
                csv.push_str(&format!("{i},{p},{}\n", data.label(i)));
            }
            write_text(&common.output("predictions.csv")?, &csv)?;
            if data.fully_labeled() && !data.is_empty() {
                let truth: Vec<u32> = data.labels().iter().map(|&l| l as u32).collect();
                let alignment = align_new_labels(&pred, &truth, old_count)?;
                let acc = session_accuracies(&alignment.apply(&pred), &truth, old_count)?;
                println!("accuracy {:.4}", acc.acc_all);
            }
        }
        Command::EstimateK {
            common,
            features,
            k_min,
            k_max,
        } => {
            let config = common.pipeline_config()?;
            let data = read(&features)?;
            let k = estimate_num_classes(
                &data,
                k_min.unwrap_or(config.k_min),
                k_max.unwrap_or(config.k_max),
                config.seed,
            )?;
            println!("{k}");
        }
        Command::Report { common, report } => {
            let report = load_report(&report)?;
            if common.out_dir != Path::new(".") {
                write_text(&common.output("report.csv")?, &report_to_csv(&report))?;
            }
            print!("{}", render_table(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
