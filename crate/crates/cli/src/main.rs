use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use scab_core::baselines::{propagate_confound_labels, PropagationOptions};
use scab_core::datasets::{
    generate_rotated_glyphs, generate_two_factor_gaussians, load_bundle, mask_confound_labels,
    save_bundle, GlyphMode, RotatedGlyphs, TwoFactorGaussians,
};
use scab_core::harness::{evaluate, report, run_baseline, train_scab, Method, TrainConfig};

#[derive(Parser)]
#[command(name = "scab", version, about = "Confound-aware deep clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gaussians,
    Glyphs,
    GlyphsCon,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum BaselineMethod {
    Kmeans,
    RuvX,
    RuvZ,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum AblateArg {
    NoDis,
    NoClu,
    NoDisNoClu,
}

#[derive(clap::Args)]
struct TrainOverrides {
    /// Flat TOML file with config keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any other config key, as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset bundle.
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        /// Interest clusters (gaussians) or rotation angles (glyphs).
        #[arg(long)]
        k: Option<usize>,
        /// Confound categories (gaussians) or glyph count (glyphs).
        #[arg(long)]
        g: Option<usize>,
        #[arg(long)]
        n_per_cell: Option<usize>,
        /// Feature dimension of the Gaussian benchmark.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the confound-aware clustering model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        ablate: Option<AblateArg>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Run a comparison method.
    Baseline {
        #[arg(long, value_enum)]
        method: BaselineMethod,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Mask confound labels to a ratio and fill them back in with a classifier.
    Propagate {
        #[arg(long)]
        data: PathBuf,
        /// Fraction of confound labels kept; omit if the bundle is already masked.
        #[arg(long)]
        labeled_ratio: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute metrics from a run's assignments.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare runs side by side.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Recompute metrics against this dataset and color plots by confound.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Write the table as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn load_config(o: &TrainOverrides, ablate: Option<AblateArg>) -> Result<TrainConfig> {
    let base = match &o.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    let mut kv = BTreeMap::new();
    for item in &o.set {
        let (k, v) = item
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {item:?}"))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(v) = o.eta1 {
        kv.insert("eta1".into(), format!("{v:?}"));
    }
    if let Some(v) = o.eta2 {
        kv.insert("eta2".into(), format!("{v:?}"));
    }
    if let Some(v) = o.epochs {
        kv.insert("epochs".into(), v.to_string());
    }
    if let Some(v) = o.seed {
        kv.insert("seed".into(), v.to_string());
    }
    if let Some(a) = ablate {
        let name = match a {
            AblateArg::NoDis => "no_dis",
            AblateArg::NoClu => "no_clu",
            AblateArg::NoDisNoClu => "no_dis_no_clu",
        };
        kv.insert("ablation".into(), format!("\"{name}\""));
    }
    Ok(base.with_overrides(&kv)?)
}

fn print_metrics(label: &str, m: &scab_core::harness::PartitionMetrics) {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{label}: acc {} nmi {} ari {} leakage {} balance {}",
        f(m.acc),
        f(m.nmi),
        f(m.ari),
        f(m.leakage),
        f(m.balance)
    );
}

fn generate(
    kind: Kind,
    out: &Path,
    k: Option<usize>,
    g: Option<usize>,
    n: Option<usize>,
    dim: Option<usize>,
    seed: u64,
) -> Result<()> {
    let bundle = match kind {
        Kind::Gaussians => {
            let mut p = TwoFactorGaussians {
                seed,
                ..TwoFactorGaussians::default()
            };
            p.k_clusters = k.unwrap_or(p.k_clusters);
            p.g_categories = g.unwrap_or(p.g_categories);
            p.n_per_cell = n.unwrap_or(p.n_per_cell);
            p.dim = dim.unwrap_or(p.dim);
            generate_two_factor_gaussians(&p)?
        }
        Kind::Glyphs | Kind::GlyphsCon => {
            if dim.is_some() {
                bail!("--dim applies to the gaussian benchmark only");
            }
            let mut p = RotatedGlyphs {
                seed,
                ..RotatedGlyphs::default()
            };
            p.mode = match kind {
                Kind::Glyphs => GlyphMode::Discrete {
                    angles: k.unwrap_or(5),
                },
                _ => {
                    if k.is_some() {
                        bail!("glyphs-con clusters by glyph; use --g");
                    }
                    GlyphMode::Continuous
                }
            };
            p.glyphs = g.unwrap_or(p.glyphs);
            p.n_per_cell = n.unwrap_or(p.n_per_cell);
            generate_rotated_glyphs(&p)?
        }
    };
    save_bundle(&bundle, out)?;
    println!(
        "wrote {} samples x {} features (K={}) to {}",
        bundle.n(),
        bundle.meta.d_input,
        bundle.meta.k_clusters,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            kind,
            out,
            k,
            g,
            n_per_cell,
            dim,
            seed,
        } => generate(kind, &out, k, g, n_per_cell, dim, seed)?,
        Command::Train {
            data,
            out,
            ablate,
            overrides,
        } => {
            let cfg = load_config(&overrides, ablate)?;
            let bundle = load_bundle(&data)?;
            let record = train_scab(&bundle, &cfg, &out)?;
            info!("finished in {:.1}s", record.elapsed_seconds);
            print_metrics("scab", &record.metrics);
        }
        Command::Baseline {
            method,
            data,
            out,
            overrides,
        } => {
            let cfg = load_config(&overrides, None)?;
            let bundle = load_bundle(&data)?;
            let method = match method {
                BaselineMethod::Kmeans => Method::Kmeans,
                BaselineMethod::RuvX => Method::RuvX,
                BaselineMethod::RuvZ => Method::RuvZ,
            };
            let record = run_baseline(method, &bundle, &cfg, &out)?;
            print_metrics(method.name(), &record.metrics);
        }
        Command::Propagate {
            data,
            labeled_ratio,
            out,
            seed,
        } => {
            let bundle = load_bundle(&data)?;
            let masked = match (labeled_ratio, bundle.confound.is_fully_observed()) {
                (Some(r), true) => mask_confound_labels(&bundle, r, seed)?,
                (None, false) => bundle,
                (Some(_), false) => bail!(
                    "{} is already partially labeled; omit --labeled-ratio",
                    data.display()
                ),
                (None, true) => bail!("--labeled-ratio is required for a fully labeled bundle"),
            };
            let p = propagate_confound_labels(&masked, seed, &PropagationOptions::default())?;
            save_bundle(&p.bundle, &out)?;
            match p.validation_accuracy {
                Some(a) => println!(
                    "propagated {} labels; classifier accuracy {a:.4}",
                    p.predicted
                ),
                None => println!("propagated {} labels", p.predicted),
            }
        }
        Command::Eval { run, data } => {
            let bundle = load_bundle(&data)?;
            let row = evaluate(&run, &bundle)?;
            let r = report(&[run], Some(&bundle), None)?;
            debug_assert_eq!(r.rows[0], row);
            print!("{}", r.table);
        }
        Command::Report {
            runs,
            data,
            plot,
            json,
        } => {
            let bundle = data.as_deref().map(load_bundle).transpose()?;
            let r = report(&runs, bundle.as_ref(), plot.as_deref())?;
            print!("{}", r.table);
            if let Some(path) = json {
                std::fs::write(&path, r.to_json())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
