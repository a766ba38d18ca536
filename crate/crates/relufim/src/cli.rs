//! Command-line wiring: generate weights, build kernel matrices, extract
//! spectra, certify runs, and reproduce the reference figure data as CSV.
//!
//! Exit codes: 0 success (and all checks passing), 1 usage, 2 domain error,
//! 3 certification failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{certify_run, xi_of_d};
use crate::config::{MatrixSource, RunConfig};
use crate::decomposition::{
    assemble_approx, basis_geometry, build_basis, rayleigh_quotients, ApproxDecomposition,
    BasisFamily, RunStamp,
};
use crate::empirical::accumulate_sharded;
use crate::error::{Error, Result};
use crate::io;
use crate::kernel::{closed_form_kernel, series_kernel, KernelMatrix, SeriesSpec};
use crate::operator::ClosedFormOperator;
use crate::spectrum::{
    dense_spectrum, group_analysis, reference_lines, topk_spectrum, AngleReport, GroupAnalysis,
};
use crate::weights::{check_dense_cap, column_geometry_with_cap, generate_weights, WeightMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_CERTIFICATION: i32 = 3;

/// Environment variable supplying the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RELUFIM_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "relufim", version, about = "ReLU feature kernel toolkit")]
struct Cli {
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: $RELUFIM_OUTPUT_DIR or ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonParams {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the weight matrix and write it to a binary file.
    Generate {
        #[command(flatten)]
        common: CommonParams,
        /// Entry variance (default 1/p).
        #[arg(long)]
        scale: Option<f64>,
        /// Also dump a CSV copy (small matrices only).
        #[arg(long)]
        csv: bool,
    },
    /// Build a kernel matrix of the requested provenance.
    Build {
        #[command(flatten)]
        common: CommonParams,
        #[arg(long, value_enum)]
        source: Option<MatrixSource>,
        /// Samples for the empirical source.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long = "series-N")]
        series_n: Option<usize>,
        #[arg(long)]
        dense_cap: Option<usize>,
        /// Load weights from a file instead of regenerating from the seed.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Eigenvalues, grouping, and alignment reports.
    Spectrum {
        #[command(flatten)]
        common: CommonParams,
        /// Read a previously built kernel matrix instead of building one.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, value_enum)]
        source: Option<MatrixSource>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long = "series-N")]
        series_n: Option<usize>,
        #[arg(long)]
        dense_cap: Option<usize>,
        /// Iterative top-k instead of the dense decomposition.
        #[arg(long)]
        topk: Option<usize>,
        /// Include principal angles to the predicted subspaces.
        #[arg(long)]
        angles: bool,
    },
    /// Evaluate every deviation bound and quotient floor for one run.
    Certify {
        #[command(flatten)]
        common: CommonParams,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long = "C")]
        c: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Re-run a reference figure configuration and write its CSV data.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        /// Multiplies p (and n) for desk-scale runs; d is kept.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dense_cap: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful terminations.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DOMAIN
        }
    }
}

fn load_base_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn output_dir(cli_out: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    if let Some(out) = cli_out {
        return out.clone();
    }
    if let Ok(env) = std::env::var(OUTPUT_DIR_ENV) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    cfg.output_dir.clone()
}

fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
}

fn apply_common(cfg: &mut RunConfig, common: &CommonParams) {
    if let Some(d) = common.d {
        cfg.d = d;
    }
    if let Some(p) = common.p {
        cfg.p = p;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
}

fn generate(cfg: &RunConfig, scale: Option<f64>) -> Result<WeightMatrix> {
    generate_weights(cfg.d, cfg.p, cfg.seed, scale.unwrap_or_else(|| cfg.weight_scale()))
}

fn build_matrix(cfg: &RunConfig, weights: &WeightMatrix) -> Result<KernelMatrix> {
    match cfg.matrix_source {
        MatrixSource::Closed => {
            let geom = column_geometry_with_cap(weights, cfg.dense_cap)?;
            closed_form_kernel(&geom)
        }
        MatrixSource::Series => {
            let geom = column_geometry_with_cap(weights, cfg.dense_cap)?;
            series_kernel(
                &geom,
                &SeriesSpec {
                    truncation: cfg.series_n,
                    tail_tol: 1e-12,
                },
            )
        }
        MatrixSource::Empirical => {
            check_dense_cap(cfg.p, cfg.dense_cap)?;
            let workers = cfg.threads.unwrap_or_else(rayon::current_num_threads);
            let acc = accumulate_sharded(weights, cfg.seed, cfg.n, workers, false)?;
            acc.finalize_fim(cfg.sigma2)
        }
        MatrixSource::Approx => {
            check_dense_cap(cfg.p, cfg.dense_cap)?;
            assemble_approx(&build_basis(weights)?)
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    init_threads(cli.threads);
    let base = load_base_config(&cli.config)?;
    match cli.command {
        Command::Generate { common, scale, csv } => {
            let mut cfg = base;
            apply_common(&mut cfg, &common);
            cfg.validate()?;
            let dir = output_dir(&cli.out, &cfg);
            std::fs::create_dir_all(&dir)?;
            let w = generate(&cfg, scale)?;
            let path = dir.join(format!("weights_d{}_p{}_seed{}.mat", cfg.d, cfg.p, cfg.seed));
            io::save_weights(&path, &w)?;
            println!("wrote {}", path.display());
            if csv {
                if cfg.d * cfg.p > 1_000_000 {
                    return Err(Error::invalid("CSV dump is for small matrices (d·p <= 1e6)"));
                }
                let csv_path = path.with_extension("csv");
                io::write_matrix_csv(&csv_path, w.entries())?;
                println!("wrote {}", csv_path.display());
            }
            Ok(EXIT_OK)
        }
        Command::Build {
            common,
            source,
            n,
            sigma2,
            series_n,
            dense_cap,
            weights,
        } => {
            let mut cfg = base;
            apply_common(&mut cfg, &common);
            if let Some(s) = source {
                cfg.matrix_source = s;
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(s2) = sigma2 {
                cfg.sigma2 = s2;
            }
            if let Some(sn) = series_n {
                cfg.series_n = sn;
            }
            if let Some(cap) = dense_cap {
                cfg.dense_cap = cap;
            }
            cfg.threads = cli.threads.or(cfg.threads);
            cfg.validate()?;
            let w = match &weights {
                Some(path) => io::load_weights(path)?,
                None => generate(&cfg, None)?,
            };
            let matrix = build_matrix(&cfg, &w)?;
            let dir = output_dir(&cli.out, &cfg);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!(
                "kernel_{}_d{}_p{}_seed{}.mat",
                cfg.matrix_source, cfg.d, cfg.p, cfg.seed
            ));
            io::save_kernel(&path, &matrix)?;
            println!("wrote {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Spectrum {
            common,
            matrix,
            source,
            n,
            sigma2,
            series_n,
            dense_cap,
            topk,
            angles,
        } => {
            let mut cfg = base;
            apply_common(&mut cfg, &common);
            if let Some(s) = source {
                cfg.matrix_source = s;
            }
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(s2) = sigma2 {
                cfg.sigma2 = s2;
            }
            if let Some(sn) = series_n {
                cfg.series_n = sn;
            }
            if let Some(cap) = dense_cap {
                cfg.dense_cap = cap;
            }
            cfg.topk = topk.or(cfg.topk);
            cfg.validate()?;
            let dir = output_dir(&cli.out, &cfg);
            std::fs::create_dir_all(&dir)?;
            run_spectrum(&cfg, matrix.as_deref(), angles, &dir, "spectrum")?;
            Ok(EXIT_OK)
        }
        Command::Certify {
            common,
            delta,
            c,
            eta,
        } => {
            let mut cfg = base;
            apply_common(&mut cfg, &common);
            if let Some(delta) = delta {
                cfg.delta = Some(delta);
            }
            if let Some(c) = c {
                cfg.c = c;
            }
            if let Some(eta) = eta {
                cfg.eta = eta;
            }
            cfg.validate()?;
            let dir = output_dir(&cli.out, &cfg);
            std::fs::create_dir_all(&dir)?;
            let all_pass = run_certify(&cfg, &dir)?;
            Ok(if all_pass { EXIT_OK } else { EXIT_CERTIFICATION })
        }
        Command::Reproduce {
            figure,
            scale,
            seed,
            dense_cap,
        } => {
            let mut cfg = base;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(cap) = dense_cap {
                cfg.dense_cap = cap;
            }
            let scale = scale.unwrap_or(1.0);
            if !(scale > 0.0 && scale <= 1.0) {
                return Err(Error::invalid("--scale must lie in (0, 1]"));
            }
            let (d, p_full, n_full, source) = match figure {
                Figure::Fig1 => (10, 10_000, 100_000, MatrixSource::Empirical),
                Figure::Fig2 => (5, 10_000, 0, MatrixSource::Closed),
                Figure::Fig3 => (10, 10_000, 0, MatrixSource::Closed),
                Figure::Fig4 => (20, 10_000, 0, MatrixSource::Closed),
                Figure::Fig5 => (50, 10_000, 0, MatrixSource::Closed),
            };
            cfg.d = d;
            cfg.p = ((p_full as f64 * scale).round() as usize).max(1);
            cfg.n = ((n_full as f64 * scale).round() as usize).max(if n_full > 0 { 1 } else { 0 });
            cfg.matrix_source = source;
            if cfg.p < d * (d + 3) / 2 {
                return Err(Error::invalid(format!(
                    "scale {scale} leaves p = {} below the {} eigenvalues the grouping needs",
                    cfg.p,
                    d * (d + 3) / 2
                )));
            }
            cfg.validate()?;
            let dir = output_dir(&cli.out, &cfg);
            std::fs::create_dir_all(&dir)?;
            let name = format!("fig{}", figure as usize + 1);
            let meta = FigureMeta {
                figure: name.clone(),
                scale,
                n: cfg.n,
                source: cfg.matrix_source,
            };
            run_spectrum_with_meta(&cfg, None, false, &dir, &name, Some(meta))?;
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize, Clone)]
struct FigureMeta {
    figure: String,
    /// Fraction of the full-size run; p and n above reflect it.
    scale: f64,
    n: usize,
    source: MatrixSource,
}

#[derive(Serialize)]
struct SpectrumSummary {
    stamp: RunStamp,
    source: MatrixSource,
    topk: Option<usize>,
    reference_lines: [f64; 3],
    analysis: Option<GroupAnalysis>,
    principal_angles: Option<AngleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    figure: Option<FigureMeta>,
}

fn run_spectrum(
    cfg: &RunConfig,
    matrix_path: Option<&Path>,
    angles: bool,
    dir: &Path,
    name: &str,
) -> Result<()> {
    run_spectrum_with_meta(cfg, matrix_path, angles, dir, name, None)
}

fn run_spectrum_with_meta(
    cfg: &RunConfig,
    matrix_path: Option<&Path>,
    angles: bool,
    dir: &Path,
    name: &str,
    figure: Option<FigureMeta>,
) -> Result<()> {
    let loaded: Option<KernelMatrix> = matrix_path.map(io::load_kernel).transpose()?;
    let stamp;
    let d;
    let (eigenvalues, vectors): (Vec<f64>, Option<nalgebra::DMatrix<f64>>) = match &loaded {
        Some(k) => {
            d = k.meta().d;
            stamp = RunStamp {
                d,
                p: k.p(),
                seed: k.meta().seed,
            };
            match cfg.topk {
                None => {
                    let s = dense_spectrum(k)?;
                    (s.eigenvalues.iter().copied().collect(), Some(s.eigenvectors))
                }
                Some(k_top) => {
                    let t = topk_spectrum(k, k_top, 1e-9, cfg.seed)?;
                    (t.eigenvalues, Some(t.vectors))
                }
            }
        }
        None => {
            d = cfg.d;
            let w = generate(cfg, None)?;
            stamp = RunStamp::of_weights(&w);
            match (cfg.topk, cfg.matrix_source) {
                // Matrix-free paths avoid dense p×p storage entirely.
                (Some(k_top), MatrixSource::Closed) => {
                    let op = ClosedFormOperator::from_weights(&w)?;
                    let t = topk_spectrum(&op, k_top, 1e-9, cfg.seed)?;
                    (t.eigenvalues, Some(t.vectors))
                }
                (Some(k_top), MatrixSource::Approx) => {
                    let decomp = ApproxDecomposition::new(build_basis(&w)?);
                    let op = decomp.operator();
                    let t = topk_spectrum(&op, k_top, 1e-9, cfg.seed)?;
                    (t.eigenvalues, Some(t.vectors))
                }
                (Some(k_top), _) => {
                    let k = build_matrix(cfg, &w)?;
                    let t = topk_spectrum(&k, k_top, 1e-9, cfg.seed)?;
                    (t.eigenvalues, Some(t.vectors))
                }
                (None, _) => {
                    let k = build_matrix(cfg, &w)?;
                    let s = dense_spectrum(&k)?;
                    (s.eigenvalues.iter().copied().collect(), Some(s.eigenvectors))
                }
            }
        }
    };

    let csv_path = dir.join(format!("{name}.csv"));
    io::write_spectrum_csv(&csv_path, &eigenvalues, d)?;

    let analysis = group_analysis(&eigenvalues, d).ok();
    let principal = if angles {
        let w = match &loaded {
            Some(_) => generate_weights(stamp.d, stamp.p, stamp.seed, 1.0 / stamp.p as f64)?,
            None => generate(cfg, None)?,
        };
        let basis = build_basis(&w)?;
        vectors.as_ref().and_then(|q| {
            crate::spectrum::spectrum_report(&eigenvalues, d, Some(stamp), Some(q), Some(&basis))
                .ok()
                .and_then(|r| r.principal_angles)
        })
    } else {
        None
    };
    let summary = SpectrumSummary {
        stamp,
        source: cfg.matrix_source,
        topk: cfg.topk,
        reference_lines: reference_lines(d),
        analysis,
        principal_angles: principal,
        figure,
    };
    let json_path = dir.join(format!("{name}_summary.json"));
    io::write_json(&json_path, &summary)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

fn run_certify(cfg: &RunConfig, dir: &Path) -> Result<bool> {
    let xi = xi_of_d(cfg.d, cfg.eta)?;
    let w = generate(cfg, None)?;
    let basis = build_basis(&w)?;
    let geom = basis_geometry(&basis);
    let op = ClosedFormOperator::from_weights(&w)?;
    let quotients = rayleigh_quotients(&op, &basis)?;
    let report = certify_run(op.trace(), &geom, &quotients, &xi, cfg.delta, cfg.c)?;

    io::write_json(&dir.join("certificate.json"), &report)?;

    // Per-vector tables with the bounds actually applied.
    let delta = report.delta;
    let mut geometry_rows: Vec<(String, f64, f64, bool)> = Vec::new();
    for (k, id) in geom.ids().iter().enumerate() {
        let dev = (geom.norm_squared(k) - 1.0).abs();
        let bound = match id.family() {
            BasisFamily::NormProfile | BasisFamily::Row => delta,
            _ => delta + xi.value,
        };
        geometry_rows.push((format!("norm:{id}"), dev, bound, dev <= bound));
    }
    let mixed = geom.max_mixed_inner();
    geometry_rows.push(("max_cross_inner_products".into(), mixed, delta, mixed <= delta));
    let centered = geom.max_centered_offset();
    let centered_bound = delta + xi.value / (cfg.d as f64 - 1.0);
    geometry_rows.push((
        "max_centered_pair_offset".into(),
        centered,
        centered_bound,
        centered <= centered_bound,
    ));
    io::write_check_csv(&dir.join("geometry.csv"), &geometry_rows)?;

    let quotient_rows: Vec<(String, f64, f64, bool)> = quotients
        .entries
        .iter()
        .map(|(id, q)| {
            let floor = match id.family() {
                BasisFamily::NormProfile => {
                    (2.0 * cfg.d as f64 + 1.0) / (4.0 * std::f64::consts::PI) * (1.0 - delta)
                }
                BasisFamily::Row => 0.25 * (1.0 - delta),
                _ => (1.0 - delta - xi.value) / (2.0 * std::f64::consts::PI * cfg.d as f64),
            };
            (format!("quotient:{id}"), *q, floor, *q >= floor)
        })
        .collect();
    io::write_check_csv(&dir.join("quotients.csv"), &quotient_rows)?;
    io::append_sweep_csv(&dir.join("certify_sweep.csv"), &report)?;

    println!(
        "certificate: {} ({} of {} checks pass, delta = {:.6}, delta* = {:.6}, xi = {:.6})",
        if report.all_pass { "PASS" } else { "FAIL" },
        report.checks.iter().filter(|c| c.pass).count(),
        report.checks.len(),
        report.delta,
        report.delta_star,
        report.xi,
    );
    for check in report.failing() {
        println!(
            "  FAIL {}: lhs = {:.6e}, rhs = {:.6e}",
            check.claim, check.lhs, check.rhs
        );
    }
    println!("wrote {}", dir.join("certificate.json").display());
    Ok(report.all_pass)
}
