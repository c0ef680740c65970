use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nestquad::Target;
use nestquad_cli::config::{parse_axis, Adaptive, RunConfig};
use nestquad_cli::presets::{preset, presets};
use nestquad_cli::run::{node_count_csv, node_count_report, run};

/// Quadrature rules on implicitly defined volumes, surfaces and lines.
#[derive(Parser, Debug)]
#[command(name = "nestquad", version)]
struct Args {
    /// TOML file with RunConfig keys; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment (see --list-presets).
    #[arg(long)]
    preset: Option<String>,
    /// Sheet distance for slanted-sheet and wavy-cylinder.
    #[arg(long)]
    l: Option<f64>,
    /// Cells per axis; a comma-separated list sweeps over c.
    #[arg(long, value_delimiter = ',')]
    c: Vec<usize>,
    /// Gauss points per axis; a list runs each order.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Uniform subdivisions per mapping domain; a list sweeps over s.
    #[arg(long, value_delimiter = ',')]
    s: Vec<usize>,
    /// Adaptive threshold, one value or one per order.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, value_parser = ["volume", "surface-alpha", "surface-beta", "line"])]
    target: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// Integrand expression.
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    #[arg(long, value_parser = ["x", "y", "z"])]
    split_axis: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    reference: Option<f64>,
    /// Directory for rule.csv and report.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Abort on the first cell that cannot be decomposed.
    #[arg(long)]
    strict: bool,
    /// Points of the trailing window used for the fitted order.
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// Print node totals of subdivision and contour splitting for these l.
    #[arg(long, value_delimiter = ',')]
    node_counts: Vec<f64>,
    #[arg(long)]
    list_presets: bool,
}

fn build_config(a: &Args) -> Result<RunConfig, String> {
    let mut cfg = match &a.preset {
        Some(name) => {
            let p = preset(name, a.l).map_err(|e| e.to_string())?;
            match &a.target {
                Some(t) => p.for_target(t.parse::<Target>().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?,
                None => p.config,
            }
        }
        None => RunConfig::default(),
    };
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg = RunConfig::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if !a.c.is_empty() {
        cfg.grid = a.c.clone();
    }
    if !a.n.is_empty() {
        cfg.order = a.n.clone();
    }
    if !a.s.is_empty() {
        cfg.refine = a.s.clone();
    }
    if !a.tau.is_empty() {
        cfg.adaptive = Some(Adaptive {
            tau: a.tau.clone(),
            max_depth: a.max_depth.unwrap_or(nestquad::AdaptiveConfig::default().max_depth),
        });
    } else if let (Some(d), Some(ad)) = (a.max_depth, cfg.adaptive.as_mut()) {
        ad.max_depth = d;
    }
    if let Some(t) = &a.target {
        cfg.target = t.clone();
    }
    if let Some(s) = &a.alpha {
        cfg.alpha = s.clone();
    }
    if let Some(s) = &a.beta {
        cfg.beta = Some(s.clone());
    }
    if let Some(s) = &a.g {
        cfg.integrand = s.clone();
    }
    if let Some(s) = &a.split_axis {
        cfg.contour_split = Some(s.clone());
    }
    if a.reference.is_some() {
        cfg.reference = a.reference;
    }
    if a.out.is_some() {
        cfg.output = a.out.clone();
    }
    if a.threads.is_some() {
        cfg.threads = a.threads;
    }
    cfg.strict |= a.strict;
    if cfg.alpha.is_empty() {
        return Err("no level set given: use --alpha, --preset or --config".into());
    }
    Ok(cfg)
}

fn execute(a: &Args, cfg: &RunConfig) -> Result<(), String> {
    if !a.node_counts.is_empty() {
        let name = a.preset.as_deref().ok_or("--node-counts needs --preset")?;
        let axis = match &cfg.contour_split {
            Some(s) => parse_axis(s).map_err(|e| e.to_string())?,
            None => preset(name, None)
                .map_err(|e| e.to_string())?
                .split_axis
                .ok_or("preset has no split axis; give --split-axis")?,
        };
        let base = cfg.clone();
        let make = |l: f64| {
            let p = preset(name, Some(l)).expect("parametrized preset");
            RunConfig {
                alpha: p.config.alpha,
                reference: p.config.reference,
                ..base.clone()
            }
        };
        let rows = node_count_report(make, &a.node_counts, axis).map_err(|e| e.to_string())?;
        print!("{}", node_count_csv(&rows));
        return Ok(());
    }
    let report = run(cfg).map_err(|e| e.to_string())?;
    for (c, cell, e) in &report.failures {
        eprintln!("warning: c={c}, cell {cell} skipped: {e}");
    }
    println!("{:>6} {:>3} {:>24} {:>24} {:>9} {:>9}", if report.sweeps_grid { "c" } else { "s" }, "n", "value", "error", "nodes", "seconds");
    for r in &report.rows {
        let e = r.error.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
        println!("{:>6} {:>3} {:>24.17} {:>24} {:>9} {:>9.3}", r.sweep, r.n, r.value, e, r.nodes, r.seconds);
    }
    let mut orders: Vec<usize> = report.rows.iter().map(|r| r.n).collect();
    orders.dedup();
    for n in orders {
        if let Some(o) = report.order(n, a.window) {
            println!("fitted order n={n}: {o:.2}");
        }
    }
    if let Some(dir) = &cfg.output {
        report.write(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_presets {
        for p in presets() {
            println!("{:<18} {}", p.name, p.summary);
        }
        return ExitCode::SUCCESS;
    }
    let result = build_config(&args).and_then(|cfg| {
        cfg.validate().map_err(|e| e.to_string())?;
        let threads = cfg.threads.unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| execute(&args, &cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
