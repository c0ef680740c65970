//! Volume, surface and line rules for one or two level sets.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bernstein::{body_sign, Sign};
use crate::decompose::{decompose, GraphConfig};
use crate::error::{Error, Result};
use crate::gauss::{tensor_gauss, BaseRule};
use crate::levelset::LevelSet;
use crate::mapping::{ChainElement, FaceEmbedding, MappingComposition, NestedMapping};
use crate::topology::{Axis, Body, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Volume,
    SurfaceAlpha,
    SurfaceBeta,
    Line,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Volume => "volume",
            Target::SurfaceAlpha => "surface-alpha",
            Target::SurfaceBeta => "surface-beta",
            Target::Line => "line",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Target::Volume => 3,
            Target::SurfaceAlpha | Target::SurfaceBeta => 2,
            Target::Line => 1,
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Target> {
        match s {
            "volume" => Ok(Target::Volume),
            "surface-alpha" => Ok(Target::SurfaceAlpha),
            "surface-beta" => Ok(Target::SurfaceBeta),
            "line" => Ok(Target::Line),
            _ => Err(Error::InvalidConfig(format!("unknown target '{s}'"))),
        }
    }
}

/// `Ω = {α ≤ 0} ∩ {β ≤ 0}` with the surfaces and intersection line of `α`, `β`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub alpha: LevelSet,
    pub beta: Option<LevelSet>,
}

impl Problem {
    pub fn new(alpha: LevelSet, beta: Option<LevelSet>) -> Problem {
        Problem { alpha, beta }
    }
}

/// One of the two halves of a contour split of `alpha` along `∂_h alpha`.
#[derive(Debug, Clone)]
pub struct SplitProblem {
    pub alpha: LevelSet,
    /// `±∂_h alpha`.
    pub beta: LevelSet,
}

impl SplitProblem {
    /// The splitting level set is decomposed first, so it takes the outer role.
    pub fn problem(&self) -> Problem {
        Problem::new(self.beta.clone(), Some(self.alpha.clone()))
    }

    /// Target of [`SplitProblem::problem`] equivalent to `target` on `alpha`.
    pub fn target(target: Target) -> Result<Target> {
        match target {
            Target::Volume => Ok(Target::Volume),
            Target::SurfaceAlpha => Ok(Target::SurfaceBeta),
            other => Err(Error::InvalidConfig(format!(
                "contour splitting supports volume and surface-alpha, not {}",
                other.name()
            ))),
        }
    }
}

/// Splits `Ω_α` along the zero set of `∂_h α`.
pub fn contour_split(alpha: &LevelSet, h: Axis) -> [SplitProblem; 2] {
    let d = alpha.derivative(h);
    [
        SplitProblem {
            alpha: alpha.clone(),
            beta: d.clone(),
        },
        SplitProblem {
            alpha: alpha.clone(),
            beta: d.negated(),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub cell: usize,
    pub tile: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

/// A mapping from a reference hypercube onto one piece of the domain.
#[derive(Debug, Clone)]
pub struct Chart {
    pub map: MappingComposition,
    pub cell: usize,
    pub tile: usize,
    pub fallback: bool,
}

/// Charts of one grid cell.
#[derive(Debug, Clone, Default)]
pub struct CellCharts {
    pub cell: usize,
    pub charts: Vec<Chart>,
    /// Bisections performed by the graph construction, summed over level sets.
    pub bisections: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub threshold: f64,
    pub max_depth: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            threshold: 1e-5,
            max_depth: 8,
        }
    }
}

pub type Integrand<'a> = &'a (dyn Fn(&Point) -> f64 + Sync);

/// Uniform cells of a box.
pub fn grid_cells(k: &Body, c: usize) -> Vec<Body> {
    let mut out = Vec::with_capacity(c.pow(3));
    let h: Point = std::array::from_fn(|i| (k.upper[i] - k.lower[i]) / c as f64);
    let axes: Vec<usize> = (0..3).filter(|&i| k.active[i]).collect();
    let total = c.pow(axes.len() as u32);
    for flat in 0..total {
        let mut cell = *k;
        let mut rem = flat;
        for &i in axes.iter().rev() {
            let j = rem % c;
            rem /= c;
            cell.lower[i] = k.lower[i] + h[i] * j as f64;
            cell.upper[i] = if j + 1 == c {
                k.upper[i]
            } else {
                k.lower[i] + h[i] * (j + 1) as f64
            };
        }
        out.push(cell);
    }
    out
}

fn chain(elements: Vec<ChainElement>) -> Result<MappingComposition> {
    MappingComposition::new(elements)
}

/// Charts covering the requested piece of the domain inside one cell.
pub fn cell_charts(problem: &Problem, target: Target, cell: &Body, cell_id: usize, cfg: &GraphConfig) -> Result<CellCharts> {
    let mut out = CellCharts {
        cell: cell_id,
        ..Default::default()
    };
    let mut beta = problem.beta.clone();
    if beta.is_none() && matches!(target, Target::SurfaceBeta | Target::Line) {
        return Err(Error::InvalidConfig(format!("target {} requires beta", target.name())));
    }
    if let Some(b) = &beta {
        match body_sign(|x| b.value(x), cell, &cfg.sign)? {
            Sign::Plus => return Ok(out),
            Sign::Minus | Sign::Zero => {
                if matches!(target, Target::SurfaceBeta | Target::Line) {
                    return Ok(out);
                }
                beta = None;
            }
            Sign::Indeterminate => {}
        }
    }
    let needs_alpha_faces = matches!(target, Target::SurfaceAlpha | Target::Line);
    let da = decompose(cell, &problem.alpha, cfg, needs_alpha_faces)?;
    out.bisections += da.bisections;
    out.fallback |= !da.fallback_cells.is_empty();
    let mut next_tile = 0;
    let mut push = |out: &mut CellCharts, map: MappingComposition, fallback: bool| {
        out.charts.push(Chart {
            map,
            cell: cell_id,
            tile: next_tile,
            fallback,
        });
        next_tile += 1;
    };
    for tile in da.with_sign(Sign::Minus) {
        let a = ChainElement::Nested(Arc::new(NestedMapping::from_tile(&tile.body)?));
        match target {
            Target::Volume | Target::SurfaceBeta => {
                let Some(b) = &beta else {
                    push(&mut out, chain(vec![a])?, tile.fallback);
                    continue;
                };
                let carrier = chain(vec![a.clone()])?;
                let with_faces = target == Target::SurfaceBeta;
                let db = decompose(&Body::cube(-1.0, 1.0, 3), &b.transformed(carrier), cfg, with_faces)?;
                out.bisections += db.bisections;
                out.fallback |= !db.fallback_cells.is_empty();
                for bt in db.with_sign(Sign::Minus) {
                    let bm = ChainElement::Nested(Arc::new(NestedMapping::from_tile(&bt.body)?));
                    let fb = tile.fallback || bt.fallback;
                    if target == Target::Volume {
                        push(&mut out, chain(vec![bm, a.clone()])?, fb);
                    } else {
                        for &(axis, side) in bt.body.surface_faces() {
                            let e = ChainElement::Embed(FaceEmbedding::new(3, axis, side));
                            push(&mut out, chain(vec![e, bm.clone(), a.clone()])?, fb);
                        }
                    }
                }
            }
            Target::SurfaceAlpha | Target::Line => {
                for &(axis, side) in tile.body.surface_faces() {
                    let ea = ChainElement::Embed(FaceEmbedding::new(3, axis, side));
                    let carrier = chain(vec![ea.clone(), a.clone()])?;
                    let Some(b) = &beta else {
                        push(&mut out, carrier, tile.fallback);
                        continue;
                    };
                    let with_faces = target == Target::Line;
                    let db = decompose(&Body::cube(-1.0, 1.0, 2), &b.transformed(carrier), cfg, with_faces)?;
                    out.bisections += db.bisections;
                    out.fallback |= !db.fallback_cells.is_empty();
                    for bt in db.with_sign(Sign::Minus) {
                        let bm = ChainElement::Nested(Arc::new(NestedMapping::from_tile(&bt.body)?));
                        let fb = tile.fallback || bt.fallback;
                        if target == Target::SurfaceAlpha {
                            push(&mut out, chain(vec![bm, ea.clone(), a.clone()])?, fb);
                        } else {
                            for &(axis_b, side_b) in bt.body.surface_faces() {
                                let eb = ChainElement::Embed(FaceEmbedding::new(2, axis_b, side_b));
                                push(
                                    &mut out,
                                    chain(vec![eb, bm.clone(), ea.clone(), a.clone()])?,
                                    fb,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Charts of all cells of a grid, with per-cell failures collected separately.
#[derive(Debug, Clone, Default)]
pub struct ChartSet {
    pub cells: Vec<CellCharts>,
    pub failures: Vec<(usize, Error)>,
}

/// Builds the charts for every cell of a `c³` grid over `k`.
///
/// With `strict`, the first failing cell aborts the construction.
pub fn build_charts(problem: &Problem, target: Target, k: &Body, c: usize, cfg: &GraphConfig, strict: bool) -> Result<ChartSet> {
    if c == 0 {
        return Err(Error::InvalidConfig("grid must have at least one cell".into()));
    }
    let cells = grid_cells(k, c);
    let results: Vec<Result<CellCharts>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| cell_charts(problem, target, cell, i, cfg))
        .collect();
    let mut set = ChartSet::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(cc) => set.cells.push(cc),
            Err(e) if strict => {
                return Err(Error::Cell {
                    cell: i,
                    source: Box::new(e),
                })
            }
            Err(e) => set.failures.push((i, e)),
        }
    }
    Ok(set)
}

/// Charts of both halves of a contour split of `alpha` along `h`, merged per cell.
///
/// `target` refers to `alpha` (volume or surface-alpha). Tiles of the second
/// half are numbered after those of the first within each cell.
pub fn build_split_charts(
    alpha: &LevelSet,
    h: Axis,
    target: Target,
    k: &Body,
    c: usize,
    cfg: &GraphConfig,
    strict: bool,
) -> Result<ChartSet> {
    let inner = SplitProblem::target(target)?;
    let halves = contour_split(alpha, h);
    let first = build_charts(&halves[0].problem(), inner, k, c, cfg, strict)?;
    let second = build_charts(&halves[1].problem(), inner, k, c, cfg, strict)?;
    let mut failures: Vec<(usize, Error)> = first.failures;
    failures.extend(second.failures);
    failures.sort_by_key(|(i, _)| *i);
    let failed = |i: usize| failures.iter().any(|(j, _)| *j == i);
    let mut rest = second.cells.into_iter().peekable();
    let mut cells = Vec::new();
    for mut cc in first.cells {
        while rest.peek().is_some_and(|o| o.cell < cc.cell) {
            rest.next();
        }
        let Some(other) = rest.next_if(|o| o.cell == cc.cell) else {
            continue;
        };
        if failed(cc.cell) {
            continue;
        }
        let offset = cc.charts.len();
        cc.charts.extend(other.charts.into_iter().map(|mut ch| {
            ch.tile += offset;
            ch
        }));
        cc.bisections += other.bisections;
        cc.fallback |= other.fallback;
        cells.push(cc);
    }
    Ok(ChartSet { cells, failures })
}

fn chart_nodes(chart: &Chart, base: &BaseRule, depth: usize, rule: &mut QuadratureRule) -> Result<()> {
    for (p, w) in base.nodes.iter().zip(&base.weights) {
        let (x, dens) = chart.map.density(p)?;
        let wt = dens * w;
        if !wt.is_finite() || x.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteEvaluation(x[0], x[1], x[2]));
        }
        rule.nodes.push(x);
        rule.weights.push(wt);
        rule.provenance.push(Provenance {
            cell: chart.cell,
            tile: chart.tile,
            depth,
        });
    }
    Ok(())
}

/// Gauss rule of order `n`, replicated on `s^k` sub-cubes, pushed through every chart.
pub fn charts_rule(charts: &[Chart], n: usize, s: usize) -> Result<QuadratureRule> {
    let mut rule = QuadratureRule::default();
    let mut bases: [Option<BaseRule>; 4] = Default::default();
    for chart in charts {
        let k = chart.map.input_dim();
        if bases[k].is_none() {
            bases[k] = Some(tensor_gauss(n, k)?.refined(s.max(1)));
        }
        chart_nodes(chart, bases[k].as_ref().unwrap(), 0, &mut rule)?;
    }
    Ok(rule)
}

fn concat(parts: Vec<QuadratureRule>) -> QuadratureRule {
    let mut rule = QuadratureRule::default();
    for p in parts {
        rule.nodes.extend(p.nodes);
        rule.weights.extend(p.weights);
        rule.provenance.extend(p.provenance);
    }
    rule
}

impl ChartSet {
    pub fn rule(&self, n: usize, s: usize) -> Result<QuadratureRule> {
        let parts: Result<Vec<QuadratureRule>> = self
            .cells
            .par_iter()
            .map(|cc| {
                charts_rule(&cc.charts, n, s).map_err(|e| Error::Cell {
                    cell: cc.cell,
                    source: Box::new(e),
                })
            })
            .collect();
        Ok(concat(parts?))
    }

    pub fn adaptive_rule(&self, n: usize, g: Integrand, cfg: &AdaptiveConfig) -> Result<QuadratureRule> {
        let parts: Result<Vec<QuadratureRule>> = self
            .cells
            .par_iter()
            .map(|cc| {
                let mut rule = QuadratureRule::default();
                for chart in &cc.charts {
                    adaptive_chart(chart, n, g, cfg, &mut rule).map_err(|e| Error::Cell {
                        cell: cc.cell,
                        source: Box::new(e),
                    })?;
                }
                Ok(rule)
            })
            .collect();
        Ok(concat(parts?))
    }

    pub fn chart_count(&self) -> usize {
        self.cells.iter().map(|c| c.charts.len()).sum()
    }
}

fn weighted_sum(rule: &QuadratureRule, g: Integrand) -> f64 {
    rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * g(x)).sum()
}

/// Adaptive refinement of one chart's reference domain.
pub fn adaptive_chart(chart: &Chart, n: usize, g: Integrand, cfg: &AdaptiveConfig, out: &mut QuadratureRule) -> Result<()> {
    let k = chart.map.input_dim();
    let base = tensor_gauss(n, k)?;
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..k {
        lo[a] = -1.0;
        hi[a] = 1.0;
    }
    adaptive_box(chart, &base, g, cfg, &lo, &hi, 0, out)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_box(
    chart: &Chart,
    base: &BaseRule,
    g: Integrand,
    cfg: &AdaptiveConfig,
    lo: &Point,
    hi: &Point,
    depth: usize,
    out: &mut QuadratureRule,
) -> Result<()> {
    let k = base.dim;
    let mut coarse = QuadratureRule::default();
    chart_nodes(chart, &base.on_box(lo, hi), depth, &mut coarse)?;
    if depth >= cfg.max_depth {
        append(out, coarse);
        return Ok(());
    }
    let subs = sub_boxes(lo, hi, k);
    let mut fine = QuadratureRule::default();
    for (slo, shi) in &subs {
        chart_nodes(chart, &base.on_box(slo, shi), depth + 1, &mut fine)?;
    }
    let q = weighted_sum(&coarse, g);
    let qf = weighted_sum(&fine, g);
    let err = if q.abs() < 1e-300 {
        (q - qf).abs()
    } else {
        ((q - qf) / q).abs()
    };
    if !err.is_finite() {
        return Err(Error::NonFiniteIntegrand {
            index: 0,
            cell: chart.cell,
            tile: chart.tile,
        });
    }
    if err <= cfg.threshold {
        append(out, coarse);
        return Ok(());
    }
    for (slo, shi) in &subs {
        adaptive_box(chart, base, g, cfg, slo, shi, depth + 1, out)?;
    }
    Ok(())
}

fn sub_boxes(lo: &Point, hi: &Point, k: usize) -> Vec<(Point, Point)> {
    let mid: Point = std::array::from_fn(|a| 0.5 * (lo[a] + hi[a]));
    (0..1usize << k)
        .map(|bits| {
            let mut a_lo = *lo;
            let mut a_hi = *hi;
            for a in 0..k {
                if bits >> (k - 1 - a) & 1 == 0 {
                    a_hi[a] = mid[a];
                } else {
                    a_lo[a] = mid[a];
                }
            }
            (a_lo, a_hi)
        })
        .collect()
}

fn append(out: &mut QuadratureRule, r: QuadratureRule) {
    out.nodes.extend(r.nodes);
    out.weights.extend(r.weights);
    out.provenance.extend(r.provenance);
}

fn pairwise(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise(&v[..n / 2]) + pairwise(&v[n / 2..]),
    }
}

/// `Σ w_i g(x_i)`: sequential sums per cell, then pairwise over cells in cell order.
pub fn integrate(rule: &QuadratureRule, g: Integrand) -> Result<f64> {
    let mut partial = Vec::new();
    let mut current: Option<usize> = None;
    for (i, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = g(x);
        let prov = rule.provenance.get(i).copied().unwrap_or_default();
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand {
                index: i,
                cell: prov.cell,
                tile: prov.tile,
            });
        }
        if current != Some(prov.cell) {
            partial.push(0.0);
            current = Some(prov.cell);
        }
        *partial.last_mut().unwrap() += w * v;
    }
    Ok(pairwise(&partial))
}

/// Single-cell volume rule on `k`.
pub fn volume_rule(alpha: &LevelSet, beta: Option<&LevelSet>, k: &Body, n: usize, s: usize) -> Result<QuadratureRule> {
    one_cell(Problem::new(alpha.clone(), beta.cloned()), Target::Volume, k, n, s)
}

/// Single-cell surface rule on `k` for `Γ_α ∩ Ω_β` or `Γ_β ∩ Ω_α`.
pub fn surface_rule(which: Target, alpha: &LevelSet, beta: Option<&LevelSet>, k: &Body, n: usize, s: usize) -> Result<QuadratureRule> {
    if !matches!(which, Target::SurfaceAlpha | Target::SurfaceBeta) {
        return Err(Error::InvalidConfig("surface_rule needs a surface target".into()));
    }
    one_cell(Problem::new(alpha.clone(), beta.cloned()), which, k, n, s)
}

/// Single-cell rule on the intersection line `Γ_α ∩ Γ_β`.
pub fn line_rule(alpha: &LevelSet, beta: &LevelSet, k: &Body, n: usize, s: usize) -> Result<QuadratureRule> {
    one_cell(Problem::new(alpha.clone(), Some(beta.clone())), Target::Line, k, n, s)
}

fn one_cell(problem: Problem, target: Target, k: &Body, n: usize, s: usize) -> Result<QuadratureRule> {
    let cc = cell_charts(&problem, target, k, 0, &GraphConfig::default())?;
    charts_rule(&cc.charts, n, s)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// CSV with header `x,y,z,w` (plus `cell,tile,depth` with provenance).
pub fn to_csv(rule: &QuadratureRule, provenance: bool) -> String {
    let mut s = String::new();
    s.push_str(if provenance { "x,y,z,w,cell,tile,depth\n" } else { "x,y,z,w\n" });
    for (i, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let _ = write!(s, "{},{},{},{}", fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(x[2]), fmt_f64(*w));
        if provenance {
            let p = rule.provenance[i];
            let _ = write!(s, ",{},{},{}", p.cell, p.tile, p.depth);
        }
        s.push('\n');
    }
    s
}

pub fn from_csv(text: &str) -> Result<QuadratureRule> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidConfig("empty rule file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let with_prov = match cols.as_slice() {
        ["x", "y", "z", "w"] => false,
        ["x", "y", "z", "w", "cell", "tile", "depth"] => true,
        _ => return Err(Error::InvalidConfig(format!("unexpected rule header '{header}'"))),
    };
    let mut rule = QuadratureRule::default();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::InvalidConfig(format!("malformed rule line {}", ln + 2));
        if f.len() != cols.len() {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        rule.nodes.push([num(0)?, num(1)?, num(2)?]);
        rule.weights.push(num(3)?);
        let prov = if with_prov {
            let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad());
            Provenance {
                cell: int(4)?,
                tile: int(5)?,
                depth: int(6)?,
            }
        } else {
            Provenance::default()
        };
        rule.provenance.push(prov);
    }
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(s: &str) -> LevelSet {
        LevelSet::parse(s).unwrap()
    }

    fn total(rule: &QuadratureRule) -> f64 {
        integrate(rule, &|_| 1.0).unwrap()
    }

    #[test]
    fn half_and_quarter_cube() {
        let k = Body::cube(-1.0, 1.0, 3);
        assert_eq!(total(&volume_rule(&ls("x"), None, &k, 1, 1).unwrap()), 4.0);
        assert_eq!(total(&volume_rule(&ls("x"), Some(&ls("y")), &k, 1, 1).unwrap()), 2.0);
        assert_eq!(total(&line_rule(&ls("x"), &ls("y"), &k, 1, 1).unwrap()), 2.0);
        let area = total(&surface_rule(Target::SurfaceAlpha, &ls("z"), None, &k, 1, 1).unwrap());
        assert_eq!(area, 4.0);
    }

    #[test]
    fn csv_round_trip() {
        let k = Body::cube(-1.0, 1.0, 3);
        let rule = volume_rule(&ls("x^2+y^2+z^2-0.5"), None, &k, 2, 1).unwrap();
        let back = from_csv(&to_csv(&rule, true)).unwrap();
        assert_eq!(back, rule);
        let plain = from_csv(&to_csv(&rule, false)).unwrap();
        assert_eq!(plain.nodes, rule.nodes);
        assert_eq!(plain.weights, rule.weights);
    }

    #[test]
    fn sub_boxes_cover_parent() {
        let b = sub_boxes(&[-1.0, -1.0, 0.0], &[1.0, 1.0, 0.0], 2);
        assert_eq!(b.len(), 4);
        let area: f64 = b.iter().map(|(l, h)| (h[0] - l[0]) * (h[1] - l[1])).sum();
        assert_eq!(area, 4.0);
    }
}
