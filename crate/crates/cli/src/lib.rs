//! `arc` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use arc_core::counter::{sample_digest, BuildConfig, CountingIndex, SampleSpec, TreeSource};
use arc_core::generate::{dataset, generate_queries, resample_queries, with_random_weights, DatasetKind, QueryKind};
use arc_core::io::{read_points, read_queries, write_points, ModelFile, PointsFormat};
use arc_core::learned::{evaluate_visiting, QuerySample};
use arc_core::oracle::{exact_range_weight, exact_tq};
use arc_core::spantree::LightEdgeParams;
use arc_core::{EpsParams, Error, Seed, WeightedPointSet};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONTRACT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "arc", about = "Approximate spherical range counting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenKind {
    Uniform,
    Clusters,
    Grid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum QueryGenKind {
    Uniform,
    NearData,
    File,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Worstcase,
    Learned,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Binary,
}

impl From<Format> for PointsFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => PointsFormat::Text,
            Format::Binary => PointsFormat::Binary,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic point file.
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Draw weights uniformly from [0, 1) instead of using unit weights.
        #[arg(long)]
        random_weights: bool,
    },
    /// Generate a query file from a data file.
    GenQueries {
        #[arg(long, value_enum)]
        kind: QueryGenKind,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Data file; for `--kind file` the rows are resampled with replacement.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Build an index and save its model file.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Training queries for `--mode learned`; generated near the data when absent.
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        snap: bool,
        #[arg(long)]
        jl_dim: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Answer one query and print it as JSON.
    Query {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        verify: bool,
    },
    /// Evaluate a model on a query file against exact answers.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out_report: PathBuf,
        #[arg(long)]
        per_query: bool,
    },
    /// Exact range weights and ambiguity count for one query.
    Oracle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<S: AsRef<str>>(argv: &[S], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv.iter().map(AsRef::as_ref)) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Io(_) | Error::Json(_) => EXIT_INPUT,
        Error::Contract(_) | Error::DimensionMismatch { .. } | Error::GridInfeasible { .. } | Error::EmptyDistribution => {
            EXIT_CONTRACT
        }
    }
}

fn parse_query(text: &str) -> Result<Vec<f64>, Error> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Parse {
                location: "--q".into(),
                message: format!("bad number `{t}`"),
            }),
        })
        .collect()
}

fn emit(out: &mut dyn Write, v: &Value) -> Result<(), Error> {
    writeln!(out, "{}", serde_json::to_string(v)?)?;
    Ok(())
}

fn load_index(model: &Path, data: &Path) -> Result<(CountingIndex, WeightedPointSet, ModelFile), Error> {
    let pts = read_points(data)?;
    let m = ModelFile::load(model)?;
    let idx = m.rebuild(&pts)?;
    Ok((idx, pts, m))
}

fn source_name(s: &TreeSource) -> &'static str {
    match s {
        TreeSource::WorstCase { .. } => "worstcase",
        TreeSource::Learned { .. } => "learned",
        TreeSource::Random => "random",
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Error> {
    match cmd {
        Command::Gen {
            kind,
            n,
            d,
            seed,
            out: path,
            format,
            random_weights,
        } => {
            let kind = match kind {
                GenKind::Uniform => DatasetKind::Uniform,
                GenKind::Clusters => DatasetKind::Clusters,
                GenKind::Grid => DatasetKind::Grid,
            };
            let mut pts = dataset(kind, n, d, Seed(seed))?;
            if random_weights {
                pts = with_random_weights(&pts, Seed(seed).derive(1))?;
            }
            write_points(&path, &pts, format.into())?;
            emit(out, &json!({"out": path, "n": n, "d": d, "digest": pts.digest()}))
        }
        Command::GenQueries {
            kind,
            m,
            seed,
            out: path,
            data,
            radius,
            format,
        } => {
            let pts = read_points(&data)?;
            let qs = match kind {
                QueryGenKind::Uniform => generate_queries(&pts, QueryKind::Uniform { pad: radius }, m, Seed(seed))?,
                QueryGenKind::NearData => {
                    generate_queries(&pts, QueryKind::near_data_default(radius, pts.dim()), m, Seed(seed))?
                }
                QueryGenKind::File => {
                    let pool: Vec<Vec<f64>> = pts.points().map(<[f64]>::to_vec).collect();
                    resample_queries(&pool, m, Seed(seed))?
                }
            };
            write_points(&path, &WeightedPointSet::unit_weights(qs)?, format.into())?;
            emit(out, &json!({"out": path, "m": m, "d": pts.dim()}))
        }
        Command::Build {
            data,
            eps,
            radius,
            mode,
            queries,
            rho,
            reps,
            snap,
            jl_dim,
            seed,
            out_model,
        } => {
            let pts = read_points(&data)?;
            let seed = Seed(seed);
            let mut cfg = match mode {
                Mode::Worstcase => {
                    let mut c = BuildConfig::worst_case(eps, seed);
                    if let (Some(r), TreeSource::WorstCase { light_edge, .. }) = (rho, &mut c.tree_source) {
                        *light_edge = LightEdgeParams { rho: r, ..*light_edge };
                    }
                    c
                }
                Mode::Learned => BuildConfig::learned(eps, seed),
            };
            cfg.radius = radius;
            cfg.classifier_repetitions = reps;
            cfg.snap_queries = snap;
            cfg = cfg.with_auto_jl(pts.dim());
            if let Some(k) = jl_dim {
                cfg.jl_enabled = true;
                cfg.jl_target_dim = Some(k);
            }
            let sample = match (&queries, mode) {
                (Some(path), Mode::Learned) => {
                    let s = QuerySample::new(read_queries(path)?, path.display().to_string())?;
                    cfg.tree_source = TreeSource::Learned {
                        sample: SampleSpec::Provided {
                            m: s.len(),
                            digest: sample_digest(&s),
                        },
                    };
                    Some(s)
                }
                (Some(_), Mode::Worstcase) => {
                    return Err(Error::Contract("--queries applies only to --mode learned".into()));
                }
                (None, _) => None,
            };
            let t0 = Instant::now();
            let idx = CountingIndex::build(&pts, cfg, sample.as_ref())?;
            let secs = t0.elapsed().as_secs_f64();
            ModelFile::from_index(&idx, &pts).save(&out_model)?;
            emit(
                out,
                &json!({
                    "out_model": out_model,
                    "n": pts.len(),
                    "d": pts.dim(),
                    "tree_source": source_name(&idx.config().tree_source),
                    "depth": idx.tree().depth(),
                    "bucket_entries": idx.bucket_entries(),
                    "build_seconds": secs,
                }),
            )
        }
        Command::Query { model, data, q, verify } => {
            let (idx, _, _) = load_index(&model, &data)?;
            let q = parse_query(&q)?;
            let ans = idx.count(&q, verify)?;
            let mut v = serde_json::to_value(&ans)?;
            if let Some(r) = &ans.member_ranges {
                v["members"] = json!(idx.members_of(r));
            }
            emit(out, &v)
        }
        Command::Eval {
            model,
            data,
            queries,
            out_report,
            per_query,
        } => {
            let t0 = Instant::now();
            let (idx, pts, m) = load_index(&model, &data)?;
            let build_seconds = t0.elapsed().as_secs_f64();
            let holdout = QuerySample::new(read_queries(&queries)?, queries.display().to_string())?;
            let params = EpsParams::new(m.config.eps, m.config.radius)?;
            let report = evaluate_visiting(&idx, &holdout, &pts, &params)?;
            let mut micros = Vec::with_capacity(holdout.len());
            for q in holdout.queries() {
                let t = Instant::now();
                idx.count(q, false)?;
                micros.push(t.elapsed().as_secs_f64() * 1e6);
            }
            micros.sort_by(f64::total_cmp);
            let mut v = json!({
                "n": pts.len(),
                "d": pts.dim(),
                "eps": m.config.eps,
                "tree_source": source_name(&m.config.tree_source),
                "mean_visiting": report.mean_visiting,
                "mean_tq": report.mean_t_q,
                "sandwich_pass_rate": report.sandwich_pass_rate,
                "build_seconds": build_seconds,
                "query_microseconds_p50": percentile(&micros, 0.5),
                "query_microseconds_p90": percentile(&micros, 0.9),
            });
            if let Some(o) = report.holdout_overlaps_training {
                v["holdout_overlaps_training"] = json!(o);
            }
            if per_query {
                v["per_query"] = serde_json::to_value(&report.per_query)?;
            }
            std::fs::write(&out_report, serde_json::to_string_pretty(&v)?)?;
            emit(out, &v)
        }
        Command::Oracle { data, q, eps, radius } => {
            let pts = read_points(&data)?;
            let q = parse_query(&q)?;
            let params = EpsParams::new(eps, radius)?;
            pts.check_query(&q)?;
            emit(
                out,
                &json!({
                    "weight_r": exact_range_weight(&pts, &q, radius)?,
                    "weight_outer": exact_range_weight(&pts, &q, params.outer_radius())?,
                    "t_q": exact_tq(&pts, &q, &params)?,
                }),
            )
        }
    }
}
