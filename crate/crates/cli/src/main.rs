use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use stratify_core::clustering::ValidityIndex;
use stratify_core::dataset::{self, FeatureSchema, LabeledDataset};
use stratify_core::evaluation::cramers_v;
use stratify_core::explain;
use stratify_core::pipeline::{
    self, Arms, DataFormat, DataSource, ExplainConfig, PartitionSplit, RunConfig,
};
use stratify_core::synthcohort::{self, CohortSpec};

#[derive(Parser)]
#[command(
    name = "stratify",
    version,
    about = "Behavior-pattern clustering and per-pattern outcome prediction"
)]
struct Cli {
    /// Master seed. Overrides the seed in a run config when given.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "STRATIFY_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and encode a person-course CSV.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        /// Schema JSON; the ten-feature edX schema by default.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Use the raw export layout (YoB, final_cc_cname_DI, incomplete_flag).
        #[arg(long, conflicts_with = "schema")]
        export_layout: bool,
    },
    /// Choose K by index vote and assign patterns.
    Cluster {
        /// Cleaned dataset written by `ingest`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        /// Skip the vote and fit this K.
        #[arg(long)]
        k_fixed: Option<usize>,
        /// Comma-separated index names; all ten by default.
        #[arg(long, value_delimiter = ',')]
        indices: Vec<String>,
        /// Comma-separated features to cluster on; all by default.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Run the integration and/or direct arm from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the data path in the config (read as a cleaned dataset).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ArmArg::Both)]
        arm: ArmArg,
    },
    /// Gain importance and SHAP values for one pattern of a finished run.
    Explain {
        /// Run directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        pattern: usize,
        /// Comma-separated features; the seven behavior features by default.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        max_rows: usize,
        #[arg(long, default_value_t = explain::DEFAULT_BACKGROUND)]
        background: usize,
    },
    /// Generate a synthetic cohort.
    Synth {
        /// Cohort spec JSON.
        #[arg(
            long,
            conflicts_with = "reference",
            required_unless_present = "reference"
        )]
        spec: Option<PathBuf>,
        /// The built-in two-pattern spec.
        #[arg(long)]
        reference: bool,
        /// Number of rows; the spec's own size by default.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Cramér's V for a chi-square statistic.
    CramersV {
        #[arg(long)]
        chi2: f64,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 2)]
        rows: usize,
        #[arg(long, default_value_t = 2)]
        cols: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ArmArg {
    Integration,
    Direct,
    Both,
}

impl From<ArmArg> for Arms {
    fn from(a: ArmArg) -> Self {
        match a {
            ArmArg::Integration => Arms::Integration,
            ArmArg::Direct => Arms::Direct,
            ArmArg::Both => Arms::Both,
        }
    }
}

/// Exit status 3: the command finished but some statistic was degenerate.
struct Degenerate;

#[derive(Serialize)]
struct Artifact {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: u64,
    artifacts: Vec<Artifact>,
    started_at: String,
    finished_at: String,
    versions: serde_json::Value,
}

fn sha256_file(path: &Path) -> anyhow::Result<(String, u64)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: u64,
    files: &[PathBuf],
    started: chrono::DateTime<chrono::Utc>,
) -> anyhow::Result<()> {
    let artifacts = files
        .iter()
        .map(|p| {
            let (sha256, bytes) = sha256_file(p)?;
            let rel = p.strip_prefix(dir).unwrap_or(p);
            Ok(Artifact {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256,
                bytes,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let m = RunManifest {
        command: command.into(),
        config,
        seed,
        artifacts,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        versions: serde_json::json!({
            "stratify-core": stratify_core::VERSION,
            "stratify-cli": env!("CARGO_PKG_VERSION"),
        }),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn out_dir(cli_out: &Option<PathBuf>, default: &Path) -> anyhow::Result<PathBuf> {
    let d = cli_out.clone().unwrap_or_else(|| default.to_path_buf());
    std::fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn parse_index(s: &str) -> stratify_core::Result<ValidityIndex> {
    let quoted = format!("\"{s}\"");
    serde_json::from_str(&quoted)
        .or_else(|_| {
            ValidityIndex::ALL
                .into_iter()
                .find(|i| format!("{i:?}").eq_ignore_ascii_case(&s.replace(['-', '_'], "")))
                .ok_or(())
        })
        .map_err(|_| stratify_core::Error::Invalid(format!("unknown validity index '{s}'")))
}

fn cmd_ingest(
    cli: &Cli,
    data: &Path,
    schema: Option<&Path>,
    export_layout: bool,
) -> anyhow::Result<Option<Degenerate>> {
    let started = chrono::Utc::now();
    let schema = match schema {
        Some(p) => FeatureSchema::from_json_file(p)?,
        None if export_layout => FeatureSchema::edx_person_course_export(),
        None => FeatureSchema::edx(),
    };
    let (ds, side) = dataset::ingest(data, &schema)?;
    let dir = out_dir(&cli.out, Path::new("out"))?;
    let clean = dir.join("clean.csv");
    ds.write_csv(&clean)?;
    let pre = dir.join("preprocess.json");
    write_json(&pre, &side)?;
    let summary = dir.join("summary.json");
    write_json(
        &summary,
        &serde_json::json!({
            "kept": side.clean_report.kept,
            "dropped": side.clean_report.dropped,
            "positives": ds.positives(),
            "features": ds.feature_names,
        }),
    )?;
    eprintln!(
        "kept {} rows, dropped {}",
        side.clean_report.kept, side.clean_report.dropped
    );
    write_manifest(
        &dir,
        "ingest",
        serde_json::json!({"data": data, "schema": schema}),
        cli.seed.unwrap_or(0),
        &[clean, pre, summary],
        started,
    )?;
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn cmd_cluster(
    cli: &Cli,
    data: &Path,
    k_min: usize,
    k_max: usize,
    k_fixed: Option<usize>,
    indices: &[String],
    features: &[String],
) -> anyhow::Result<Option<Degenerate>> {
    let started = chrono::Utc::now();
    let ds = LabeledDataset::read_csv(data)?;
    let mut cfg = RunConfig {
        seed: cli.seed.unwrap_or(0),
        ..Default::default()
    };
    cfg.clustering.k_min = k_min;
    cfg.clustering.k_max = k_max;
    cfg.clustering.k_fixed = k_fixed;
    cfg.clustering.features = features.to_vec();
    if !indices.is_empty() {
        cfg.clustering.indices = indices
            .iter()
            .map(|s| parse_index(s))
            .collect::<Result<_, _>>()?;
    }
    cfg.validate()?;
    let disc = pipeline::discover_patterns(&cfg, &ds)?;
    let dir = out_dir(&cli.out, Path::new("out"))?;
    let patterns = dir.join("patterns.csv");
    pipeline::write_patterns_csv(&patterns, &disc.assignment.labels)?;
    let ks = dir.join("kselect.json");
    write_json(
        &ks,
        &serde_json::json!({
            "k": disc.assignment.k(),
            "sizes": disc.assignment.sizes,
            "features": disc.features,
            "selection": disc.kselect,
        }),
    )?;
    eprintln!(
        "K = {}, sizes {:?}",
        disc.assignment.k(),
        disc.assignment.sizes
    );
    write_manifest(
        &dir,
        "cluster",
        serde_json::json!({"data": data, "clustering": cfg.clustering}),
        cfg.seed,
        &[patterns, ks],
        started,
    )?;
    Ok(None)
}

fn cmd_run(
    cli: &Cli,
    config: &Path,
    data: Option<&Path>,
    arm: ArmArg,
) -> anyhow::Result<Option<Degenerate>> {
    let started = chrono::Utc::now();
    let mut cfg = RunConfig::from_json_file(config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = data {
        cfg.data = Some(DataSource {
            path: d.to_path_buf(),
            format: DataFormat::Clean,
            schema: None,
        });
    }
    let source = cfg.data.as_ref().ok_or_else(|| {
        stratify_core::Error::Invalid("run config has no data source; pass --data".into())
    })?;
    let ds = source.load()?;
    let dir = out_dir(&cli.out, Path::new("out"))?;
    let out = pipeline::run(&cfg, &ds, arm.into())?;
    let files = pipeline::write_artifacts(&dir, &cfg, &ds, &out)?;
    if let Some(i) = &out.integration {
        eprintln!(
            "patterns: K = {}, sizes {:?}",
            i.discovery.assignment.k(),
            i.discovery.assignment.sizes
        );
        for (a, r) in &i.pooled {
            eprintln!("integration {a}: accuracy {:.4}", r.metrics.accuracy);
        }
    }
    if let Some(d) = &out.direct {
        for r in &d.run.results {
            eprintln!(
                "direct {}: accuracy {:.4}",
                r.algorithm, r.report.metrics.accuracy
            );
        }
    }
    write_manifest(
        &dir,
        "run",
        serde_json::to_value(&cfg)?,
        cfg.seed,
        &files,
        started,
    )?;
    if out.is_degenerate() {
        eprintln!("warning: degenerate statistics flagged; see metrics.json");
        return Ok(Some(Degenerate));
    }
    Ok(None)
}

fn cmd_explain(
    cli: &Cli,
    run: &Path,
    pattern: usize,
    features: &[String],
    max_rows: usize,
    background: usize,
) -> anyhow::Result<Option<Degenerate>> {
    let started = chrono::Utc::now();
    let cfg = RunConfig::from_json_file(&run.join("run_config.json"))?;
    let source = cfg
        .data
        .as_ref()
        .ok_or_else(|| stratify_core::Error::Invalid("run config has no data source".into()))?;
    let ds = source.load()?;
    let splits: Vec<PartitionSplit> = serde_json::from_str(
        &std::fs::read_to_string(run.join("splits.json")).context("reading splits.json")?,
    )?;
    let part = splits
        .iter()
        .find(|s| s.arm == "integration" && s.partition == pattern)
        .ok_or_else(|| {
            stratify_core::Error::Invalid(format!("run has no integration pattern {pattern}"))
        })?;
    let mut ecfg = ExplainConfig {
        max_rows,
        background,
        ..Default::default()
    };
    if !features.is_empty() {
        ecfg.features = features.to_vec();
    }
    let ex = pipeline::explain_pattern(&cfg, &ecfg, &ds, pattern, &part.train, &part.test)?;
    let dir = out_dir(&cli.out, &run.join(format!("explain-pattern-{pattern}")))?;
    let imp = dir.join("importance.csv");
    explain::write_importance_csv(&imp, &ex.importance)?;
    let shap = dir.join("shap_values.csv");
    explain::write_shap_csv(&shap, &explain::beeswarm_export(&ex.shap))?;
    let base = dir.join("shap_base.json");
    write_json(
        &base,
        &serde_json::json!({"base": ex.shap.base, "rows": ex.shap.sample_ids.len()}),
    )?;
    write_manifest(
        &dir,
        "explain",
        serde_json::json!({"run": run, "pattern": pattern, "explain": ecfg}),
        cfg.seed,
        &[imp, shap, base],
        started,
    )?;
    Ok(None)
}

fn cmd_synth(
    cli: &Cli,
    spec: Option<&Path>,
    reference: bool,
    n: Option<usize>,
) -> anyhow::Result<Option<Degenerate>> {
    let started = chrono::Utc::now();
    let spec: CohortSpec = match spec {
        Some(p) if !reference => CohortSpec::from_json_file(p)?,
        _ => synthcohort::reference_spec(),
    };
    let seed = cli.seed.unwrap_or(spec.seed);
    let n = n.unwrap_or(spec.n);
    let cohort = synthcohort::generate(&spec, n, seed)?;
    let dir = out_dir(&cli.out, Path::new("out"))?;
    let csv = dir.join("synth_cohort.csv");
    cohort.write_csv(&csv)?;
    let spec_path = dir.join("cohort_spec.json");
    write_json(&spec_path, &spec)?;
    eprintln!("wrote {n} rows to {}", csv.display());
    write_manifest(
        &dir,
        "synth",
        serde_json::json!({"n": n, "spec": spec}),
        seed,
        &[csv, spec_path],
        started,
    )?;
    Ok(if cohort.empty_patterns.is_empty() {
        None
    } else {
        Some(Degenerate)
    })
}

fn dispatch(cli: &Cli) -> anyhow::Result<Option<Degenerate>> {
    match &cli.command {
        Command::Ingest {
            data,
            schema,
            export_layout,
        } => cmd_ingest(cli, data, schema.as_deref(), *export_layout),
        Command::Cluster {
            data,
            k_min,
            k_max,
            k_fixed,
            indices,
            features,
        } => cmd_cluster(cli, data, *k_min, *k_max, *k_fixed, indices, features),
        Command::Run { config, data, arm } => cmd_run(cli, config, data.as_deref(), *arm),
        Command::Explain {
            run,
            pattern,
            features,
            max_rows,
            background,
        } => cmd_explain(cli, run, *pattern, features, *max_rows, *background),
        Command::Synth { spec, reference, n } => cmd_synth(cli, spec.as_deref(), *reference, *n),
        Command::CramersV {
            chi2,
            n,
            rows,
            cols,
        } => {
            println!("{:.6}", cramers_v(*chi2, *n, *rows, *cols)?);
            Ok(None)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<stratify_core::Error>() {
        Some(stratify_core::Error::Degenerate(_)) => 3,
        Some(e) if e.is_validation() => 2,
        Some(stratify_core::Error::Io { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Degenerate)) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
