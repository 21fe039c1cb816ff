use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use heralded_source::config::{Mode, RunConfig};
use heralded_source::estimate::{Estimate, Tally};
use heralded_source::fit::{fit_memory_decay, Weighting};
use heralded_source::harness::{self, evaluate, optimize_protocol, reproduce, Figure, ReproduceOptions};
use heralded_source::record::DetectionRecord;
use heralded_source::sim::run_campaign_to_writer;
use heralded_source::Error;

#[derive(Parser)]
#[command(name = "heralded", version, about = "Heralded single-photon source: model, oracle and Monte-Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides protocol.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides protocol.shots.
    #[arg(long)]
    shots: Option<u64>,
    /// Output directory; CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured evaluation mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the configured point.
    Analytic(Common),
    /// Run a Monte-Carlo campaign and write its detection record.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Worker threads (output does not depend on it).
        #[arg(long)]
        workers: Option<usize>,
        /// Also export the record as CSV.
        #[arg(long)]
        text: bool,
    },
    /// Evaluate the configured sweep axis.
    Sweep(Common),
    /// Fit the storage-time decay of g_si.
    Fit {
        /// CSV with columns storage_time_us,g_si[,std_error].
        #[arg(long)]
        data: PathBuf,
        /// Equal weights instead of 1/std_error^2.
        #[arg(long)]
        unweighted: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan N for the best efficiency under a g2 ceiling.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        g2_max: f64,
        #[arg(long, default_value_t = harness::DEFAULT_N_LIMIT)]
        n_limit: u32,
    },
    /// Regenerate the data behind a figure.
    Reproduce {
        #[arg(value_enum)]
        figure: FigureArg,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        /// Shots per Monte-Carlo point (0 skips the overlay).
        #[arg(long, default_value_t = 1_000_000)]
        shots: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    All,
    Fig2a,
    Fig2inset,
    Fig2b,
    Fig3a,
    Fig3b,
    Fig3c,
    Fig3d,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain { .. } => 2,
        Error::Infeasible { .. } => 3,
        Error::NonConvergence { .. } | Error::Degenerate(_) => 4,
        _ => 1,
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = common.seed {
        cfg.protocol.seed = s;
    }
    if let Some(n) = common.shots {
        cfg.protocol.shots = n;
    }
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    if common.out.is_some() {
        cfg.out.clone_from(&common.out);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Opens `<out>/<name>` or stdout.
fn sink(out: Option<&Path>, name: &str) -> Result<Box<dyn Write>, Error> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(Box::new(BufWriter::new(File::create(dir.join(name))?)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_estimates(w: &mut dyn Write, tally: &Tally) -> Result<(), Error> {
    let est = tally.estimates()?;
    writeln!(w, "observable,value,std_error,n_samples")?;
    for (o, e) in est.iter() {
        match e {
            Some(Estimate {
                value,
                std_error,
                n_samples,
            }) => writeln!(w, "{o},{value},{std_error},{n_samples}")?,
            None => writeln!(w, "{o},NaN,NaN,0")?,
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Analytic(common) => {
            let cfg = load(&common)?;
            let mode = if cfg.mode == Mode::Montecarlo { Mode::Analytic } else { cfg.mode };
            let pc = cfg.protocol_config()?;
            let row = evaluate(&pc, mode, f64::from(pc.n_trials))?;
            let table = harness::SweepTable {
                axis: "n_trials".into(),
                rows: vec![row],
            };
            let mut w = sink(cfg.out.as_deref(), "analytic.csv")?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Simulate { common, workers, text } => {
            let cfg = load(&common)?;
            let dir = cfg
                .out
                .clone()
                .ok_or_else(|| Error::Config("simulate needs --out".into()))?;
            std::fs::create_dir_all(&dir)?;
            let pc = cfg.protocol_config()?;
            let record_path = dir.join("record.phrc");
            let write = || -> Result<Tally, Error> {
                let f = BufWriter::new(File::create(&record_path)?);
                run_campaign_to_writer(&pc, f)
            };
            let tally = match workers {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?
                    .install(write)?,
                None => write()?,
            };
            let mut w = sink(Some(&dir), "estimates.csv")?;
            write_estimates(&mut w, &tally)?;
            w.flush()?;
            if text {
                let rec = DetectionRecord::read_from(&mut BufReader::new(File::open(&record_path)?))?;
                rec.write_csv(BufWriter::new(File::create(dir.join("record.csv"))?))?;
            }
        }
        Command::Sweep(common) => {
            let cfg = load(&common)?;
            let table = harness::sweep(&cfg)?;
            let mut w = sink(cfg.out.as_deref(), "sweep.csv")?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Fit { data, unweighted, out } => {
            let mut rdr = csv::Reader::from_path(&data).map_err(|e| Error::Config(e.to_string()))?;
            let mut pts = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
                let field = |k: usize| -> Result<f64, Error> {
                    rec.get(k)
                        .unwrap_or("0")
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("{}: row {}, column {}", data.display(), i + 2, k + 1)))
                };
                pts.push((
                    field(0)? * 1e-6,
                    Estimate {
                        value: field(1)?,
                        std_error: field(2)?,
                        n_samples: 0,
                    },
                ));
            }
            let weighting = if unweighted { Weighting::Uniform } else { Weighting::InverseVariance };
            let fit = fit_memory_decay(&pts, weighting)?;
            let (sb, st) = fit.std_errors();
            let mut w = sink(out.as_deref(), "fit.csv")?;
            writeln!(w, "B,B_se,tau_c_us,tau_c_us_se,residual_norm,iterations")?;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fit.b,
                sb,
                fit.tau_c * 1e6,
                st * 1e6,
                fit.residual_norm,
                fit.iterations
            )?;
            w.flush()?;
        }
        Command::Optimize {
            common,
            g2_max,
            n_limit,
        } => {
            let cfg = load(&common)?;
            let o = optimize_protocol(&cfg.source.params()?, g2_max, n_limit)?;
            let mut w = sink(cfg.out.as_deref(), "optimum.csv")?;
            writeln!(w, "n_star,eta_D,g2")?;
            writeln!(w, "{},{},{}", o.n_star, o.eta_d, o.g2)?;
            w.flush()?;
        }
        Command::Reproduce {
            figure,
            out,
            shots,
            seed,
        } => {
            let figures: Vec<Figure> = match figure {
                FigureArg::All => Figure::ALL.to_vec(),
                FigureArg::Fig2a => vec![Figure::Fig2a],
                FigureArg::Fig2inset => vec![Figure::Fig2inset],
                FigureArg::Fig2b => vec![Figure::Fig2b],
                FigureArg::Fig3a => vec![Figure::Fig3a],
                FigureArg::Fig3b => vec![Figure::Fig3b],
                FigureArg::Fig3c => vec![Figure::Fig3c],
                FigureArg::Fig3d => vec![Figure::Fig3d],
            };
            let opts = ReproduceOptions {
                out_dir: out,
                shots,
                seed,
            };
            for f in figures {
                for path in reproduce(f, &opts)?.files {
                    println!("{}", path.display());
                }
            }
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
            ExitCode::from(exit_code(&e))
        }
    }
}
