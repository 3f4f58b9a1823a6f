use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lpsift::bench::{run_bench, summary_table, write_csv, BenchSpec};
use lpsift::imaging::load_image;
use lpsift::mosaic::plan_and_stitch;
use lpsift::pipeline::{match_prepared, prepare, stitch_pair};
use lpsift::{Error, PipelineConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_REGISTRATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_CONFIG: u8 = 4;

/// Local-peak feature detection and rigid image stitching.
#[derive(Parser)]
#[command(name = "lpsift", version)]
struct Cli {
    #[command(flatten)]
    opts: PipelineFlags,
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings; each one overrides the `--config` file.
#[derive(Args)]
struct PipelineFlags {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    window_min: Option<String>,
    #[arg(long, global = true)]
    window_max: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta0: Option<String>,
    #[arg(long, global = true)]
    d: Option<String>,
    #[arg(long, global = true)]
    no_orientation: bool,
    #[arg(long, global = true, allow_hyphen_values = true)]
    delta_s: Option<String>,
    /// `nearest_neighbor` or `threshold_all`.
    #[arg(long, global = true)]
    match_strategy: Option<String>,
    #[arg(long, global = true)]
    ransac_iters: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    ransac_tol: Option<String>,
    #[arg(long, global = true)]
    min_inliers: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    threads: Option<String>,
    /// `feather` or `overwrite`.
    #[arg(long, global = true)]
    blend: Option<String>,
    /// `bilinear` or `nearest`.
    #[arg(long, global = true)]
    resample: Option<String>,
}

impl PipelineFlags {
    fn resolve(&self) -> lpsift::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let flags = [
            ("alpha", &self.alpha),
            ("window_min", &self.window_min),
            ("window_max", &self.window_max),
            ("beta0", &self.beta0),
            ("d", &self.d),
            ("delta_s", &self.delta_s),
            ("match_strategy", &self.match_strategy),
            ("ransac_iters", &self.ransac_iters),
            ("ransac_tol", &self.ransac_tol),
            ("min_inliers", &self.min_inliers),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("blend", &self.blend),
            ("resample", &self.resample),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.no_orientation {
            cfg.orientation_normalize = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dump detected features (and optionally descriptors) as JSON lines.
    Detect {
        image: PathBuf,
        #[arg(long)]
        descriptors: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Dump matches between a reference and a registered image as JSON lines.
    Match {
        reference: PathBuf,
        registered: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Register the second image onto the first and composite both.
    Stitch {
        reference: PathBuf,
        registered: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Stitch a directory or list of images without a known order.
    Mosaic {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        /// Plan and timing report (JSON).
        #[arg(long, visible_alias = "report")]
        plan: Option<PathBuf>,
    },
    /// Run a synthetic benchmark description.
    Bench {
        spec: PathBuf,
        /// Per-run CSV table.
        #[arg(short, long, default_value = "bench.csv")]
        output: PathBuf,
    },
}

enum Failure {
    Error(Error),
    Registration,
    Partial,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open_output(path: Option<&Path>) -> lpsift::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes JSON lines; a closed stdout pipe ends output quietly.
fn write_lines(path: Option<&Path>, lines: impl Iterator<Item = serde_json::Value>) -> lpsift::Result<()> {
    let shown = path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut out = open_output(path)?;
    let result = lines
        .map(|rec| writeln!(out, "{rec}"))
        .collect::<io::Result<()>>()
        .and_then(|()| out.flush());
    match result {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(io_err(&shown)),
    }
}

fn write_json(path: &Path, text: &str) -> lpsift::Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn collect_inputs(inputs: &[PathBuf]) -> lpsift::Result<Vec<PathBuf>> {
    if let [dir] = inputs {
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(io_err(dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().and_then(|e| e.to_str()).is_some_and(|e| {
                        matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "pgm" | "ppm" | "pnm")
                    })
                })
                .collect();
            files.sort();
            return Ok(files);
        }
    }
    Ok(inputs.to_vec())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = cli.opts.resolve()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Detect {
            image,
            descriptors,
            output,
        } => {
            let img = load_image(&image)?;
            let prepared = prepare(&img, &cfg)?;
            let records = prepared.features.iter().zip(&prepared.descriptors).map(|(fp, desc)| {
                let mut rec = json!({
                    "image_id": img.id(),
                    "row": fp.row,
                    "col": fp.col,
                    "scale": fp.scale,
                    "polarity": fp.polarity,
                    "value": fp.value,
                });
                if descriptors {
                    rec["descriptor"] = json!(desc.values);
                }
                rec
            });
            write_lines(output.as_deref(), records)?;
        }
        Command::Match {
            reference,
            registered,
            output,
        } => {
            let a = prepare(&load_image(&reference)?, &cfg)?;
            let b = prepare(&load_image(&registered)?, &cfg)?;
            let matches = match_prepared(&a, &b, &cfg)?;
            let records = matches.iter().map(|m| json!({ "p1": m.p1, "p2": m.p2, "delta": m.delta }));
            write_lines(output.as_deref(), records)?;
        }
        Command::Stitch {
            reference,
            registered,
            output,
            report,
        } => {
            let a = load_image(&reference)?;
            let b = load_image(&registered)?;
            let outcome = stitch_pair(&a, &b, &cfg)?;
            if let Some(path) = &report {
                write_json(path, &outcome.report.to_json())?;
            }
            let r = &outcome.report.registration;
            eprintln!(
                "matched {} pairs, {} inliers, theta {:.4} deg, t ({:.3}, {:.3}), {:.3} s",
                outcome.report.matched_pairs, r.inliers, r.theta_deg, r.t_x, r.t_y, outcome.report.total_time
            );
            match &outcome.canvas {
                Some(canvas) => canvas.to_image("stitched").save_png(&output)?,
                None => {
                    eprintln!("error: {}", outcome.report.error.as_deref().unwrap_or("registration failed"));
                    return Err(Failure::Registration);
                }
            }
        }
        Command::Mosaic { inputs, output, plan } => {
            let files = collect_inputs(&inputs)?;
            let images = files.iter().map(load_image).collect::<lpsift::Result<Vec<_>>>()?;
            let outcome = plan_and_stitch(&images, &cfg)?;
            if let Some(path) = &plan {
                let text = serde_json::to_string_pretty(&outcome.report).expect("plan serializes");
                write_json(path, &text)?;
            }
            outcome.canvas.to_image("mosaic").save_png(&output)?;
            eprintln!(
                "{} rounds, {} of {} images placed, canvas {}x{}, {:.3} s",
                outcome.plan.rounds.len(),
                images.len() - outcome.plan.final_unmatched.len(),
                images.len(),
                outcome.canvas.width(),
                outcome.canvas.height(),
                outcome.report.total_time
            );
            if outcome.is_partial() {
                let ids: Vec<&str> = outcome.plan.final_unmatched.iter().map(|&k| images[k].id()).collect();
                eprintln!("unmatched: {}", ids.join(", "));
                return Err(Failure::Partial);
            }
        }
        Command::Bench { spec, output } => {
            let spec = BenchSpec::load(&spec)?;
            let rows = run_bench(&spec, &cfg)?;
            let file = File::create(&output).map_err(io_err(&output))?;
            write_csv(&rows, BufWriter::new(file))?;
            print!("{}", summary_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Registration) => ExitCode::from(EXIT_REGISTRATION),
        Err(Failure::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::RegistrationFailure(_) => EXIT_REGISTRATION,
                _ => EXIT_FAILURE,
            })
        }
    }
}
