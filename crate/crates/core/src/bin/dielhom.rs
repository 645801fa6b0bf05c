use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use dielhom::config::{parse_config, EffectiveConfig, FoldyLaxConfig, LseConfig, SpectrumConfig, Validate};
use dielhom::effective::{coupling_xi, effective_tensors, p0_ball, tensor_t};
use dielhom::experiments::{
    run_convergence, run_counting, run_regime_map, run_resonance, ConvergeConfig, CountingConfig, ResonanceConfig,
};
use dielhom::foldylax::{cluster_far_field, solve_with, standard_directions, SolveOptions};
use dielhom::geometry::generate_cluster;
use dielhom::io::{
    convergence_plot, convergence_table, counting_plot, counting_table, far_field_table, regime_table, scan_plot,
    scan_table, spectrum_plot, spectrum_table, to_json, write_file, Format, PlotData, Table,
};
use dielhom::vie::{effective_far_field, magnetization_spectrum, solve_effective_lse, VolumeGrid};
use dielhom::Result;

#[derive(Parser)]
#[command(name = "dielhom", version, about = "Dielectric cluster homogenisation: Foldy-Lax, effective medium, LSE")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Override a config key, e.g. --set scales.a=0.02 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the Foldy-Lax system for one cluster and sample its far field.
    Foldylax(Common),
    /// Solve the effective Lippmann-Schwinger equation on a voxel grid.
    Lse(Common),
    /// Effective tensors at one coupling plus the (ξ, sign) regime map.
    Effective(Common),
    /// Homogenisation convergence study.
    Converge(Common),
    /// Plasmonic resonance amplification scan on the unit ball.
    Resonance(Common),
    /// Counting-law regressions.
    Counting(Common),
    /// Spectrum of the discrete Magnetization operator.
    Spectrum(Common),
}

struct Out {
    dir: PathBuf,
    format: Format,
}

impl Out {
    /// CSV: `<stem>.csv` plus `summary.json`; JSON: one `<stem>.json` with
    /// the summary and the full results.
    fn write<T: Serialize>(&self, stem: &str, table: &Table, summary: Value, results: &T) -> Result<()> {
        match self.format {
            Format::Csv => {
                write_file(&self.dir.join(format!("{stem}.csv")), &table.to_csv())?;
                write_file(&self.dir.join("summary.json"), &to_json(&summary)?)?;
            }
            Format::Json => {
                let mut doc = summary;
                doc["results"] = serde_json::to_value(results).unwrap_or(Value::Null);
                write_file(&self.dir.join(format!("{stem}.json")), &to_json(&doc)?)?;
            }
        }
        eprintln!("wrote {}", self.dir.display());
        Ok(())
    }

    /// Plot data is always CSV: (series, x, y).
    fn plot(&self, data: &PlotData) -> Result<()> {
        write_file(&self.dir.join("plot.csv"), &data.table().to_csv())
    }
}

fn load<T: serde::de::DeserializeOwned + Validate>(c: &Common) -> Result<T> {
    parse_config(Path::new(&c.config), &c.set)
}

/// Returns whether every row succeeded.
fn run(cmd: Cmd) -> Result<bool> {
    let common = match &cmd {
        Cmd::Foldylax(c)
        | Cmd::Lse(c)
        | Cmd::Effective(c)
        | Cmd::Converge(c)
        | Cmd::Resonance(c)
        | Cmd::Counting(c)
        | Cmd::Spectrum(c) => c.clone(),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| dielhom::Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let out = Out {
        dir: common.out.clone(),
        format: match common.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
    };
    match cmd {
        Cmd::Foldylax(c) => {
            let cfg: FoldyLaxConfig = load(&c)?;
            let scales = cfg.scales.resolve()?;
            let cluster = generate_cluster(&cfg.domain, scales.d)?;
            let wave = cfg.wave.at(scales.k)?;
            let opts = SolveOptions { solver: cfg.solver, ..Default::default() };
            let sol = solve_with(&cluster, &scales, &p0_ball(), &wave, cfg.variant, &opts)?;
            let q = if sol.variant == dielhom::foldylax::Variant::QForm {
                sol.clone()
            } else {
                let vectors = dielhom::foldylax::u_to_q(&sol.vectors, &scales, &p0_ball());
                dielhom::foldylax::FoldyLaxSolution { vectors, variant: dielhom::foldylax::Variant::QForm, ..sol.clone() }
            };
            let ff = cluster_far_field(&q, &cluster, &scales, &standard_directions())?;
            let summary = json!({
                "config": cfg, "scales": scales, "count": cluster.len(), "residual": sol.residual,
                "method": sol.method, "iterations": sol.iterations, "margin": sol.margin,
                "margin_warning": sol.margin_warning,
            });
            out.write("far_field", &far_field_table(&ff), summary, &json!({"vectors": sol.vectors, "far_field": ff}))?;
            Ok(true)
        }
        Cmd::Lse(c) => {
            let cfg: LseConfig = load(&c)?;
            let scales = cfg.scales.resolve()?;
            let wave = cfg.wave.at(scales.k)?;
            let xi = coupling_xi(scales.eta0, scales.k, scales.c0, scales.c_r);
            let t = tensor_t(xi, &p0_ball(), scales.sign)?;
            let grid = VolumeGrid::new(&cfg.domain, cfg.grid_n)?;
            let sol = solve_effective_lse(&grid, xi, &t, scales.k, &wave, scales.sign)?;
            let ff = effective_far_field(&sol.field, &grid, xi, &t, scales.k, scales.sign, &standard_directions())?;
            let summary = json!({
                "config": cfg, "scales": scales, "xi": xi, "t": t, "cells": grid.len(),
                "residual": sol.residual, "iterations": sol.iterations,
            });
            if out.format == Format::Csv {
                write_file(&out.dir.join("field.csv"), &sol.field.to_csv(&grid))?;
            }
            out.write("far_field", &far_field_table(&ff), summary, &json!({"field": sol.field, "far_field": ff}))?;
            Ok(true)
        }
        Cmd::Effective(c) => {
            let cfg: EffectiveConfig = load(&c)?;
            let tensors = effective_tensors(cfg.xi, &p0_ball(), cfg.sign)?;
            let rows = run_regime_map(&cfg.regime_map)?;
            let summary = json!({"config": cfg, "tensors": tensors});
            out.write("regime_map", &regime_table(&rows), summary, &rows)?;
            Ok(true)
        }
        Cmd::Converge(c) => {
            let cfg: ConvergeConfig = load(&c)?;
            let report = run_convergence(&cfg)?;
            for r in &report.rows {
                eprintln!("a = {:<6} N = {:<5} sup error {:.4e} ({:.1} s) {}", r.a, r.count, r.sup_error, r.seconds, r.status);
            }
            let ok = report.rows.iter().all(|r| r.status == "ok");
            if let Some(r) = &report.refinement {
                eprintln!("refinement n = {}: sup error {:.4e}, LSE change {:.3e} {}", r.grid_n, r.sup_error, r.lse_change, r.status);
            }
            let ok = ok && report.refinement.as_ref().map_or(true, |r| r.status == "ok");
            let summary = json!({"config": cfg, "slope": report.slope, "monotone": report.monotone, "refinement": report.refinement, "ok": ok});
            out.write("convergence", &convergence_table(&report), summary, &report)?;
            out.plot(&convergence_plot(&report))?;
            Ok(ok)
        }
        Cmd::Resonance(c) => {
            let cfg: ResonanceConfig = load(&c)?;
            let study = run_resonance(&cfg)?;
            let ok = study.scan.rows.iter().all(|r| r.ok());
            let summary = json!({
                "config": cfg, "lambda_target": study.lambda_target, "parity": study.parity,
                "cells": study.cells, "slope": study.scan.slope, "peak_alignment": study.scan.peak_alignment,
                "off_resonance_beta": study.off_resonance_beta, "ok": ok,
            });
            out.write("resonance", &scan_table(&study.scan), summary, &study)?;
            out.plot(&scan_plot(&study.scan))?;
            Ok(ok)
        }
        Cmd::Counting(c) => {
            let cfg: CountingConfig = load(&c)?;
            let report = run_counting(&cfg)?;
            let summary = json!({"config": cfg, "slopes": report.slopes, "boundary_slope": report.boundary_slope});
            out.write("counting", &counting_table(&report), summary, &report)?;
            out.plot(&counting_plot(&report))?;
            Ok(true)
        }
        Cmd::Spectrum(c) => {
            let cfg: SpectrumConfig = load(&c)?;
            let grid = VolumeGrid::new(&cfg.domain, cfg.grid_n)?;
            let report = magnetization_spectrum(&grid, cfg.count)?;
            let summary = json!({
                "config": cfg, "cells": report.cells, "method": report.method,
                "raw_min": report.raw_min, "raw_max": report.raw_max, "raw_count": report.raw_count,
                "reported": report.eigenvalues.len(), "max_degree": report.max_degree,
            });
            out.write("spectrum", &spectrum_table(&report), summary, &report)?;
            out.plot(&spectrum_plot(&report))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // dense factorisations run sequentially so that results do not depend
    // on --threads; the operator applies stay parallel (row-wise, exact)
    faer::set_global_parallelism(faer::Par::Seq);
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some rows failed; see the report");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
