use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trackgpt::config::RunConfig;
use trackgpt::error::{Error, Result};
use trackgpt::formats::corpus::parse_corpus;
use trackgpt::formats::{checkpoint, read_text, write_atomic};
use trackgpt::ingest::{ingest, Aoi, IngestSummary, TimeFormat};
use trackgpt::pipeline::{self, Forecaster};
use trackgpt::protocol::ProtocolSpec;
use trackgpt::{geojson, plot, report};

/// Geohash-token GPT forecasting for vessel and aircraft tracks.
#[derive(Debug, Parser)]
#[command(name = "trackgpt", version)]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed for model init, batching and sampling.
    #[arg(long, global = true, env = "TRACKGPT_SEED")]
    seed: Option<u64>,
    /// Run everything on one thread so outputs are byte-reproducible.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Built-in protocol to use instead of the configured one.
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(trackgpt::protocol::BUILTIN_NAMES))]
    protocol: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Input CSV of position reports.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    id_col: Option<String>,
    #[arg(long)]
    time_col: Option<String>,
    #[arg(long)]
    lat_col: Option<String>,
    #[arg(long)]
    lon_col: Option<String>,
    #[arg(long)]
    alt_col: Option<String>,
    /// auto, epoch, iso8601, or a strftime pattern.
    #[arg(long)]
    time_format: Option<String>,
    /// Drop reports above this altitude (same units as the altitude column).
    #[arg(long)]
    max_altitude: Option<f64>,
    /// Keep reports inside LAT_MIN,LAT_MAX,LON_MIN,LON_MAX.
    #[arg(long, value_delimiter = ',', num_args = 4, conflicts_with = "radius")]
    bbox: Option<Vec<f64>>,
    /// Keep reports within KM of LAT,LON, given as LAT,LON,KM.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    radius: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    ConstVelocity,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest, groom and tokenize tracks; writes corpus.txt and codec.txt.
    Prep {
        #[command(flatten)]
        ingest: IngestArgs,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        /// Fixed resampling interval in seconds instead of the protocol's.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Train a model on a token corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint to write (and to continue with --resume).
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        save_every: Option<u64>,
        /// Appends "step loss lr" lines here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue from the checkpoint at --out if it exists.
        #[arg(long)]
        resume: bool,
        /// Stop once this step is reached; resume later with the same --steps.
        #[arg(long)]
        stop_at: Option<u64>,
    },
    /// Forecast each input track from its latest prompt window; writes GeoJSON.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        ingest: IngestArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score forecasts against held-out tracks; writes report.txt and report.csv.
    Eval {
        /// Model to score; omit with --baseline.
        #[arg(long, required_unless_present = "baseline")]
        checkpoint: Option<PathBuf>,
        /// Score a reference forecaster instead of a model.
        #[arg(long, value_enum, requires = "corpus")]
        baseline: Option<Baseline>,
        /// Corpus whose codec and dt the baseline uses.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        ingest: IngestArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render forecast GeoJSON or a report CSV to SVG.
    Plot {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_toml(&read_text(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &cli.protocol {
        cfg.protocol = ProtocolSpec::builtin(name).ok_or_else(|| Error::Config(format!("unknown protocol {name}")))?;
        cfg.sampler_seed_pinned = false;
    }
    let seed = cfg.resolved_seed(cli.seed);
    cfg.seed = Some(seed);
    cfg.apply_seed(seed);
    cfg.deterministic |= cli.deterministic;
    Ok(cfg)
}

fn read_tracks(a: &IngestArgs, cfg: &RunConfig) -> Result<Vec<trackgpt_core::trackprep::RawTrack>> {
    let mut spec = cfg.ingest.clone();
    let cols = &mut spec.columns;
    for (slot, flag) in [(&mut cols.entity_id, &a.id_col), (&mut cols.timestamp, &a.time_col), (&mut cols.lat, &a.lat_col), (&mut cols.lon, &a.lon_col)] {
        if let Some(v) = flag {
            slot.clone_from(v);
        }
    }
    if a.alt_col.is_some() {
        cols.altitude.clone_from(&a.alt_col);
    }
    if let Some(f) = &a.time_format {
        spec.time_format = match f.as_str() {
            "auto" => TimeFormat::Auto,
            "epoch" => TimeFormat::Epoch,
            "iso8601" => TimeFormat::Iso8601,
            p => TimeFormat::Pattern(p.to_string()),
        };
    }
    if a.max_altitude.is_some() {
        spec.max_altitude = a.max_altitude;
    }
    if let Some(b) = &a.bbox {
        spec.aoi = Some(Aoi::Bbox { lat_min: b[0], lat_max: b[1], lon_min: b[2], lon_max: b[3] });
    }
    if let Some(r) = &a.radius {
        spec.aoi = Some(Aoi::Radius { lat: r[0], lon: r[1], radius_km: r[2] });
    }
    let (tracks, s) = ingest(&a.input, &spec)?;
    print_ingest(&a.input, &s);
    Ok(tracks)
}

fn print_ingest(path: &Path, s: &IngestSummary) {
    println!(
        "ingested {}: {} rows, {} kept in {} tracks ({} malformed, {} duplicates, {} above altitude, {} outside area)",
        path.display(),
        s.rows,
        s.kept,
        s.tracks,
        s.malformed,
        s.duplicates,
        s.above_altitude,
        s.outside_aoi
    );
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let det = cfg.deterministic;
    let seed = cfg.seed.unwrap_or(trackgpt::config::DEFAULT_SEED);
    match cli.command {
        Command::Prep { ingest, out, dt } => {
            if let Some(dt) = dt {
                cfg.protocol.dt = trackgpt::protocol::DtSpec::Seconds(dt);
            }
            let tracks = pipeline::with_threads(det, || read_tracks(&ingest, &cfg))?;
            let block = cfg.model.block_size;
            let p = pipeline::with_threads(det, || pipeline::run_prep(&tracks, &cfg.protocol, block, &out))?;
            println!("{}", p.summary());
            println!("wrote {} and {}", out.join(pipeline::CORPUS_FILE).display(), out.join(pipeline::CODEC_FILE).display());
        }
        Command::Train { corpus, out, steps, batch_size, lr, save_every, log, resume, stop_at } => {
            let c = parse_corpus(&read_text(&corpus)?)?;
            let t = &mut cfg.train;
            t.steps = steps.unwrap_or(t.steps);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            if let Some(lr) = lr {
                t.min_lr = t.min_lr * lr / t.lr;
                t.lr = lr;
            }
            t.save_every = save_every.unwrap_or(t.save_every);
            let params = cfg.train.params(seed);
            let model_cfg = cfg.model.config(seed);
            let session = pipeline::TrainSession { checkpoint: &out, log: log.as_deref(), save_every: cfg.train.save_every, resume, stop_at };
            let r = pipeline::run_train(&c, &model_cfg, &params, &session)?;
            if let Some(last) = r.logs.last() {
                println!("trained steps {}..{}; final loss {:.4}", r.resumed_from, last.step + 1, last.loss);
            } else {
                println!("checkpoint already at step {}", r.resumed_from);
            }
            println!("wrote {}", r.checkpoint.display());
        }
        Command::Forecast { checkpoint: ck, ingest, out } => {
            let c = checkpoint::load(&ck)?;
            let summary = pipeline::with_threads(det, || {
                let tracks = read_tracks(&ingest, &cfg)?;
                pipeline::run_forecast(&c, &tracks, &cfg.protocol, &out)
            })?;
            print!("{summary}");
            println!("wrote {}", out.display());
        }
        Command::Eval { checkpoint: ck, baseline, corpus, ingest, out } => {
            let model = match (&baseline, &ck) {
                (None, Some(p)) => Some(checkpoint::load(p)?),
                _ => None,
            };
            let forecaster = match (&model, baseline, &corpus) {
                (Some(m), _, _) => Forecaster::Model(m),
                (None, Some(Baseline::ConstVelocity), Some(p)) => {
                    let c = parse_corpus(&read_text(p)?)?;
                    Forecaster::ConstVelocity { depth: c.codec.token_depth(), dt: c.dt }
                }
                _ => return Err(Error::Config("eval needs --checkpoint, or --baseline with --corpus".into())),
            };
            let run = pipeline::with_threads(det, || {
                let tracks = read_tracks(&ingest, &cfg)?;
                pipeline::run_eval_to_dir(forecaster, &tracks, &cfg.protocol, &out)
            })?;
            print!("{}", read_text(&out.join("report.txt"))?);
            println!("within 2 cells: {:.4}; wrote {} rows to {}", run.fraction_within(2), run.rows.len(), out.display());
        }
        Command::Plot { input, out } => {
            let text = read_text(&input)?;
            let svg = if text.trim_start().starts_with('{') {
                plot::tracks_svg(&geojson::parse_features(&text)?)
            } else {
                plot::curve_svg(&report::interval_curve(&text)?, trackgpt_core::metrics::DistanceUnit::from(cfg.protocol.eval.units).label())
            };
            write_atomic(&out, svg.as_bytes())?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
