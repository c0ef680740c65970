//! Convergence runs and node-count tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nestquad::expr::Expr;
use nestquad::quadrature::{build_charts, build_split_charts, integrate, to_csv, ChartSet};
use nestquad::{Axis, Error, GraphConfig, LevelSet, Problem, QuadratureRule, Result};

use crate::config::RunConfig;

/// Bisection budget used for the "unrestricted subdivision" strategy.
pub const UNRESTRICTED_SUBDIVISIONS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// `c` or `s`, depending on which one the run sweeps.
    pub sweep: usize,
    pub n: usize,
    pub value: f64,
    /// `|reference - value|` when a reference is known.
    pub error: Option<f64>,
    pub nodes: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub sweeps_grid: bool,
    pub rows: Vec<ReportRow>,
    /// Rule of the last row.
    pub rule: QuadratureRule,
    /// Cells that could not be decomposed, by grid size.
    pub failures: Vec<(usize, usize, Error)>,
}

/// Least-squares slope of `-log e` against `log sweep`.
pub fn fitted_order(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|&(s, e)| ((s as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

impl ConvergenceReport {
    pub fn rows_for(&self, n: usize) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.n == n)
    }

    /// Fitted order for order `n` over the last `window` sweep points.
    pub fn order(&self, n: usize, window: usize) -> Option<f64> {
        let pts: Vec<(usize, f64)> = self.rows_for(n).filter_map(|r| Some((r.sweep, r.error?))).collect();
        let from = pts.len().saturating_sub(window);
        fitted_order(&pts[from..])
    }

    pub fn max_error(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.error).reduce(f64::max)
    }

    /// `sweep,n,error,nodes,seconds`; the error column is empty without a reference.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sweep,n,error,nodes,seconds\n");
        for r in &self.rows {
            let e = r.error.map(|e| format!("{e:?}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{:?}", r.sweep, r.n, e, r.nodes, r.seconds);
        }
        s
    }

    /// Writes `rule.csv` (with provenance) and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rule.csv"), to_csv(&self.rule, true))?;
        std::fs::write(dir.join("report.csv"), self.to_csv())
    }
}

/// Compiled integrand.
pub fn integrand(source: &str) -> Result<impl Fn(&[f64; 3]) -> f64 + Sync> {
    let e = Expr::parse(source)?;
    Ok(move |x: &[f64; 3]| e.eval(x))
}

fn labelled<T>(what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => Error::InvalidConfig(format!("{what}: {e}")),
        other => other,
    })
}

pub fn problem(cfg: &RunConfig) -> Result<Problem> {
    let alpha = labelled("alpha", LevelSet::parse(&cfg.alpha))?;
    let beta = cfg
        .beta
        .as_deref()
        .map(|b| labelled("beta", LevelSet::parse(b)))
        .transpose()?;
    Ok(Problem::new(alpha, beta))
}

pub fn graph_config(cfg: &RunConfig) -> GraphConfig {
    GraphConfig {
        max_subdivisions: cfg.max_subdivisions,
        ..Default::default()
    }
}

/// Charts of the configured problem on a `c³` grid, contour-split if requested.
pub fn charts(cfg: &RunConfig, c: usize) -> Result<ChartSet> {
    let p = problem(cfg)?;
    let target = cfg.target()?;
    let k = cfg.domain.body();
    let gc = graph_config(cfg);
    match cfg.split_axis()? {
        Some(h) => build_split_charts(&p.alpha, h, target, &k, c, &gc, cfg.strict),
        None => build_charts(&p, target, &k, c, &gc, cfg.strict),
    }
}

pub fn run(cfg: &RunConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let g = labelled("integrand", integrand(&cfg.integrand))?;
    let mut report = ConvergenceReport {
        sweeps_grid: cfg.sweeps_grid(),
        rows: Vec::new(),
        rule: QuadratureRule::default(),
        failures: Vec::new(),
    };
    let mut cache: BTreeMap<usize, (ChartSet, f64)> = BTreeMap::new();
    for (i, &n) in cfg.order.iter().enumerate() {
        for &c in &cfg.grid {
            if !cache.contains_key(&c) {
                let t = Instant::now();
                let set = charts(cfg, c)?;
                for (cell, e) in &set.failures {
                    report.failures.push((c, *cell, e.clone()));
                }
                cache.insert(c, (set, t.elapsed().as_secs_f64()));
            }
            let (set, chart_seconds) = &cache[&c];
            for &s in &cfg.refine {
                let t = Instant::now();
                let rule = match cfg.adaptive_for(i) {
                    Some(a) => set.adaptive_rule(n, &g, &a)?,
                    None => set.rule(n, s)?,
                };
                let value = integrate(&rule, &g)?;
                let seconds = chart_seconds + t.elapsed().as_secs_f64();
                report.rows.push(ReportRow {
                    sweep: if report.sweeps_grid { c } else { s },
                    n,
                    value,
                    error: cfg.reference.map(|r| (r - value).abs()),
                    nodes: rule.nodes.len(),
                    seconds,
                });
                report.rule = rule;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Subdivision,
    ContourSplitting,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Subdivision => "subdivision",
            Strategy::ContourSplitting => "contour-splitting",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCountRow {
    pub l: f64,
    pub strategy: Strategy,
    pub nodes: usize,
    /// Nodes in the cells where subdivision bisects.
    pub affected_nodes: usize,
    pub affected_cells: usize,
    pub value: f64,
}

/// Node totals of both strategies for each sheet parameter `l`.
///
/// `make(l)` gives the configuration; its first grid, order and refine entries
/// are used. Subdivision runs with [`UNRESTRICTED_SUBDIVISIONS`].
pub fn node_count_report(make: impl Fn(f64) -> RunConfig, ls: &[f64], axis: Axis) -> Result<Vec<NodeCountRow>> {
    let mut rows = Vec::new();
    for &l in ls {
        let mut cfg = make(l);
        cfg.max_subdivisions = UNRESTRICTED_SUBDIVISIONS;
        cfg.contour_split = None;
        cfg.validate()?;
        let (c, n, s) = (cfg.grid[0], cfg.order[0], cfg.refine[0]);
        let g = integrand(&cfg.integrand)?;
        let sub = charts(&cfg, c)?;
        let affected: Vec<usize> = sub.cells.iter().filter(|cc| cc.bisections > 0).map(|cc| cc.cell).collect();
        cfg.contour_split = Some(axis.name().into());
        let split = charts(&cfg, c)?;
        for (strategy, set) in [(Strategy::Subdivision, &sub), (Strategy::ContourSplitting, &split)] {
            let rule = set.rule(n, s)?;
            rows.push(NodeCountRow {
                l,
                strategy,
                nodes: rule.nodes.len(),
                affected_nodes: rule.provenance.iter().filter(|p| affected.contains(&p.cell)).count(),
                affected_cells: affected.len(),
                value: integrate(&rule, &g)?,
            });
        }
    }
    Ok(rows)
}

pub fn node_count_csv(rows: &[NodeCountRow]) -> String {
    let mut s = String::from("l,strategy,nodes,affected_nodes,affected_cells,value\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:?},{},{},{},{},{:?}",
            r.l,
            r.strategy.name(),
            r.nodes,
            r.affected_nodes,
            r.affected_cells,
            r.value
        );
    }
    s
}
