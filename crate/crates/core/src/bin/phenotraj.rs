use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phenotraj::data::Gender;
use phenotraj::pipeline::{
    self, export_scatter, read_assignments, read_matrix, read_report, write_report,
    ExperimentConfig, Overlay, SourceKind,
};
use phenotraj::synth::{default_phenotypes, generate_corpus, read_labels};
use phenotraj::trainer::save_history;
use phenotraj::{Error, Result};

#[derive(Parser)]
#[command(name = "phenotraj", version, about = "Vital-sign trajectory encoding and clustering")]
struct Cli {
    /// TOML experiment file, or `default` for built-in settings.
    #[arg(long, global = true, default_value = "default")]
    config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Directory holding observations.csv (and optionally demographics.csv,
    /// labels.csv); replaces the configured data source.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus into --out.
    Synth,
    /// Validate and preprocess a corpus and print the series-length summary.
    Ingest {
        /// Corpus directory or observations file.
        path: Option<PathBuf>,
    },
    /// Train the encoder; writes params.bin and loss_history.csv.
    Train,
    /// Encode every series; writes encodings.csv.
    Encode {
        /// Saved encoder (defaults to encoder.params from the config).
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Cluster the rows of a `series_id,...` CSV with the configured methods.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        /// `series_id,phenotype` ground truth for ARI.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Descriptor baseline: descriptors, reduction, clustering, report.
    Baseline,
    /// Run the pipeline selected in the config end to end.
    Run,
    /// Merge report CSVs into one.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Write a scatter CSV and SVG with an overlay colouring.
    ExportScatter {
        #[arg(long)]
        embeddings: PathBuf,
        /// cluster, gender or phenotype.
        #[arg(long)]
        overlay: String,
        /// Required for the cluster overlay.
        #[arg(long)]
        assignments: Option<PathBuf>,
        /// Phenotype labels (defaults to the data source's labels).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

fn use_data_dir(cfg: &mut ExperimentConfig, dir: &Path) {
    let (obs, dir) = if dir.is_file() {
        (dir.to_path_buf(), dir.parent().unwrap_or(Path::new(".")).to_path_buf())
    } else {
        (dir.join("observations.csv"), dir.to_path_buf())
    };
    cfg.data.source = SourceKind::Files;
    cfg.data.observations = Some(obs);
    let demo = dir.join("demographics.csv");
    cfg.data.demographics = demo.exists().then_some(demo);
    let labels = dir.join("labels.csv");
    cfg.data.labels = labels.exists().then_some(labels);
}

fn print_report(run: &pipeline::RunOutput) -> Result<()> {
    write_report(std::io::stdout().lock(), std::slice::from_ref(&run.report))
}

fn label_map(labels: &[(String, String)]) -> HashMap<String, i64> {
    let mut names: Vec<&str> = Vec::new();
    labels
        .iter()
        .map(|(id, p)| {
            let code = names.iter().position(|n| *n == p).unwrap_or_else(|| {
                names.push(p);
                names.len() - 1
            });
            (id.clone(), code as i64)
        })
        .collect()
}

fn execute(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(dir) = &cli.data {
        use_data_dir(&mut cfg, dir);
    }
    cfg.validate()?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Synth => {
            let corpus = generate_corpus(&cfg.synth, &default_phenotypes())?;
            corpus.write_to_dir(out)?;
            println!(
                "wrote {} series from {} patients to {}",
                corpus.labels.len(),
                corpus.patients.len(),
                out.display()
            );
        }
        Command::Ingest { path } => {
            if let Some(p) = path {
                use_data_dir(&mut cfg, &p);
            }
            let data = pipeline::load_data(&cfg)?;
            println!("{}", data.summary);
        }
        Command::Train => {
            let data = pipeline::load_data(&cfg)?;
            cfg.encoder.train = true;
            let (enc, history) = pipeline::obtain_encoder(&cfg, &data.dataset)?;
            std::fs::create_dir_all(out)?;
            enc.save(&out.join("params.bin"))?;
            save_history(&out.join("loss_history.csv"), &history)?;
            if let Some(last) = history.last() {
                println!(
                    "{} epochs, final train loss {:.6}, val loss {:.6}",
                    last.epoch, last.train_loss, last.val_loss
                );
            }
        }
        Command::Encode { params } => {
            if let Some(p) = params {
                cfg.encoder.params = Some(p);
                cfg.encoder.train = false;
            }
            if cfg.encoder.params.is_none() {
                return Err(Error::Config("encode needs --params or encoder.params".into()));
            }
            cfg.encoder.train = false;
            let data = pipeline::load_data(&cfg)?;
            let (enc, _) = pipeline::obtain_encoder(&cfg, &data.dataset)?;
            let rows = pipeline::encode_all(&enc, &data.dataset)?;
            let ids: Vec<String> = data.dataset.series.iter().map(|s| s.id.clone()).collect();
            std::fs::create_dir_all(out)?;
            pipeline::write_matrix(
                BufWriter::new(File::create(out.join("encodings.csv"))?),
                "e",
                &ids,
                &rows,
            )?;
            println!("encoded {} series", ids.len());
        }
        Command::Cluster { input, labels } => {
            let (ids, rows) = read_matrix(&input)?;
            let truth = match labels.or(cfg.data.labels.clone()) {
                Some(p) => {
                    let map = label_map(&read_labels(&p)?);
                    ids.iter().map(|id| map.get(id).copied()).collect::<Option<Vec<_>>>()
                }
                None => None,
            };
            let points = pipeline::reduce_points(&rows, cfg.pipeline.reduction, &cfg)?;
            let model = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into());
            let (row, assignments) = pipeline::evaluate(model, &points, truth.as_deref(), &cfg)?;
            std::fs::create_dir_all(out)?;
            write_report(BufWriter::new(File::create(out.join("report.csv"))?), std::slice::from_ref(&row))?;
            for (m, a) in &assignments {
                pipeline::write_assignments(
                    BufWriter::new(File::create(out.join(format!("assignments_{}.csv", m.name())))?),
                    &ids,
                    &a.labels,
                )?;
            }
            write_report(std::io::stdout().lock(), &[row])?;
        }
        Command::Baseline => print_report(&pipeline::run_baseline(&cfg, out)?)?,
        Command::Run => print_report(&pipeline::run(&cfg, out)?)?,
        Command::Report { inputs } => {
            let mut rows = Vec::new();
            for p in &inputs {
                rows.extend(read_report(File::open(p)?)?);
            }
            std::fs::create_dir_all(out)?;
            write_report(BufWriter::new(File::create(out.join("report.csv"))?), &rows)?;
            write_report(std::io::stdout().lock(), &rows)?;
        }
        Command::ExportScatter {
            embeddings,
            overlay,
            assignments,
            labels,
        } => {
            let overlay: Overlay = overlay.parse()?;
            let (ids, coords) = read_matrix(&embeddings)?;
            let lookup: HashMap<String, i64> = match overlay {
                Overlay::Cluster => {
                    let p = assignments
                        .ok_or_else(|| Error::Config("the cluster overlay needs --assignments".into()))?;
                    read_assignments(&p)?.into_iter().collect()
                }
                Overlay::Phenotype => {
                    let l = match labels.or(cfg.data.labels.clone()) {
                        Some(p) => read_labels(&p)?,
                        None if cfg.data.source == SourceKind::Synthetic => {
                            generate_corpus(&cfg.synth, &default_phenotypes())?.labels
                        }
                        None => {
                            return Err(Error::Config("the phenotype overlay needs --labels".into()))
                        }
                    };
                    label_map(&l)
                }
                Overlay::Gender => {
                    let data = pipeline::load_data(&cfg)?;
                    data.dataset
                        .series
                        .iter()
                        .map(|s| {
                            let male = s.demographics.gender == Some(Gender::Male);
                            (s.id.clone(), male as i64)
                        })
                        .collect()
                }
            };
            let values = ids
                .iter()
                .map(|id| {
                    lookup.get(id).copied().ok_or_else(|| {
                        Error::Schema(format!("no overlay value for series `{id}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let stem = format!("scatter_{}", match overlay {
                Overlay::Cluster => "cluster",
                Overlay::Gender => "gender",
                Overlay::Phenotype => "phenotype",
            });
            let (c, s) = export_scatter(out, &stem, &ids, &coords, &values, overlay)?;
            println!("wrote {} and {}", c.display(), s.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
