use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use morphomap_cli::{exit, exit_code, Endpoint, PipelineConfig};
use morphomap_core::{Point, Situation};

/// Urban morphology maps and environment-aware path loss.
#[derive(Parser, Debug)]
#[command(name = "morphomap", version, about)]
struct Cli {
    /// Pipeline config (JSON). Flags below override its values.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true)]
    buildings: Option<PathBuf>,
    #[arg(long, global = true)]
    roads: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Path-loss coefficient table (JSON).
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    /// Forest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trees: Option<usize>,
    /// Grid spacing in metres.
    #[arg(long, global = true)]
    spacing: Option<f64>,
    /// Buffer radius in metres.
    #[arg(long, global = true)]
    buffer_radius: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate buildings and roads, write the projected dataset.
    Ingest,
    /// Extract labelled samples, evaluate a hold-out split and save the model.
    Train,
    /// Classify the whole city and write GeoJSON and SVG maps.
    Map,
    /// Two-feature decision boundary grid as CSV and SVG.
    Boundary {
        #[arg(long, default_value = "avg_height")]
        fx: String,
        #[arg(long, default_value = "building_count")]
        fy: String,
        /// Cells per axis.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Median path loss of a link using the environment of each endpoint.
    Pathloss {
        /// Transmitter as `lon,lat` (or `x,y` metres with --planar).
        #[arg(long, allow_hyphen_values = true)]
        tx: String,
        /// Receiver as `lon,lat` (or `x,y` metres with --planar).
        #[arg(long, allow_hyphen_values = true)]
        rx: String,
        /// Frequency in GHz.
        #[arg(long)]
        freq: f64,
        /// LoS or NLoS.
        #[arg(long, default_value = "NLoS")]
        situation: String,
        /// Endpoints are planar map coordinates in metres.
        #[arg(long)]
        planar: bool,
        /// Map GeoJSON (default: map.geojson in the output directory).
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Write the synthetic three-district city and a config for it.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        city_seed: u64,
    },
    /// Metrics from a CSV with `actual` and `predicted` columns.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

impl Cli {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let p = &mut cfg.paths;
        for (slot, flag) in [
            (&mut p.buildings, &self.buildings),
            (&mut p.roads, &self.roads),
            (&mut p.labels, &self.labels),
            (&mut p.model, &self.model),
            (&mut p.pathloss_params, &self.params),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        if let Some(d) = &self.out_dir {
            p.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.forest.seed = s;
        }
        if let Some(n) = self.trees {
            cfg.forest.n_trees = n;
        }
        if let Some(s) = self.spacing {
            cfg.grid.spacing = s;
        }
        if let Some(r) = self.buffer_radius {
            cfg.grid.buffer_radius = r;
        }
        Ok(cfg)
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts[..] else {
        bail!("expected two comma-separated numbers, got {s:?}");
    };
    Ok((
        a.parse().with_context(|| format!("bad number {a:?}"))?,
        b.parse().with_context(|| format!("bad number {b:?}"))?,
    ))
}

fn endpoint(s: &str, planar: bool) -> Result<Endpoint> {
    let (a, b) = parse_pair(s)?;
    Ok(if planar {
        Endpoint::Planar(Point::new(a, b))
    } else {
        Endpoint::LonLat(a, b)
    })
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest => print_json(&morphomap_cli::cmd_ingest(&cli.pipeline_config()?)?),
        Command::Train => {
            let out = morphomap_cli::cmd_train(&cli.pipeline_config()?)?;
            print_json(&out)
        }
        Command::Map => print_json(&morphomap_cli::cmd_map(&cli.pipeline_config()?)?),
        Command::Boundary { fx, fy, resolution } => {
            print_json(&morphomap_cli::cmd_boundary(&cli.pipeline_config()?, fx, fy, *resolution)?)
        }
        Command::Pathloss {
            tx,
            rx,
            freq,
            situation,
            planar,
            map,
        } => {
            let cfg = cli.pipeline_config()?;
            let situation: Situation = situation.parse()?;
            let out = morphomap_cli::cmd_pathloss(
                &cfg,
                map.as_deref(),
                endpoint(tx, *planar)?,
                endpoint(rx, *planar)?,
                *freq,
                situation,
            )?;
            print_json(&out)
        }
        Command::Synth { out, city_seed } => print_json(&morphomap_cli::cmd_synth(out, *city_seed)?),
        Command::Eval { predictions, report } => {
            let out = morphomap_cli::cmd_eval(predictions, report.as_deref())?;
            print!("{}", out.text);
            Ok(())
        }
    }
}

fn command_code(c: &Command) -> i32 {
    match c {
        Command::Ingest => exit::INGEST,
        Command::Train => exit::TRAIN,
        Command::Map => exit::MAP,
        Command::Boundary { .. } => exit::BOUNDARY,
        Command::Pathloss { .. } => exit::PATHLOSS,
        Command::Synth { .. } | Command::Eval { .. } => exit::OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("cannot set up {n} worker threads: {e}");
            return ExitCode::from(exit::OTHER as u8);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e, command_code(&cli.command)) as u8)
        }
    }
}
