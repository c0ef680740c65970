//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` are evaluated exactly as stated and
//! are known to fail for the recorded reasons; the suite fails if any other
//! criterion fails or if an expected failure starts passing.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nestquad::decompose::newton_height;
use nestquad::levelset::Mat3;
use nestquad::mapping::{det, gram, height_first_derivs, height_second_derivs, ChainElement, MappingComposition, NestedMapping};
use nestquad::quadrature::{
    build_charts, contour_split, integrate, line_rule, surface_rule, volume_rule, ChartSet, SplitProblem,
};
use nestquad::{Axis, Body, GraphConfig, LevelSet, Point, Problem, Target};
use nestquad_cli::presets::{self, reference_value, Preset, THIN_INNER_AREA, THIN_OUTER_AREA};
use nestquad_cli::run::{fitted_order, node_count_report, run, Strategy, UNRESTRICTED_SUBDIVISIONS};
use nestquad_cli::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const EXPECTED_FAILURES: &[(usize, &str)] = &[
    (2, "lens: charts in the cells next to the edge at z = 0.01 are smooth but nearly singular, so errors stall near 1e-7 (volume) and 1e-4 (surface) before the asymptotic rate sets in"),
    (4, "toric section: the printed integrand and surfaces give nonzero integrals"),
    (5, "thin sheet: the printed level set has no zero set in K"),
    (6, "wavy cylinder: splitting saves 8.5x, short of 10x"),
];

#[derive(Default)]
struct Outcome {
    lines: Vec<String>,
    ok: bool,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            lines: Vec::new(),
            ok: true,
        }
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        self.ok &= ok;
        self.lines.push(format!("    [{}] {}", if ok { " ok " } else { "FAIL" }, msg.into()));
    }

    fn info(&mut self, msg: impl Into<String>) {
        self.lines.push(format!("           {}", msg.into()));
    }
}

fn cube() -> Body {
    Body::cube(-1.0, 1.0, 3)
}

fn ls(s: &str) -> LevelSet {
    LevelSet::parse(s).unwrap()
}

fn one(_: &Point) -> f64 {
    1.0
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn sweep(cfg: RunConfig) -> nestquad_cli::ConvergenceReport {
    run(&cfg).unwrap()
}

// ---------------------------------------------------------------- 1

fn exact_cases() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    let k = cube();
    let half = integrate(&volume_rule(&ls("x"), None, &k, 1, 1).unwrap(), &one).unwrap();
    o.check((half - 4.0).abs() <= 1e-13, format!("half cube volume {half:?}"));
    let quarter = integrate(&volume_rule(&ls("x"), Some(&ls("y")), &k, 1, 1).unwrap(), &one).unwrap();
    o.check((quarter - 2.0).abs() <= 1e-13, format!("quarter cube volume {quarter:?}"));
    let line = integrate(&line_rule(&ls("x"), &ls("y"), &k, 1, 1).unwrap(), &one).unwrap();
    o.check((line - 2.0).abs() <= 1e-13, format!("line x=y=0 length {line:?}"));
    let area = integrate(&surface_rule(Target::SurfaceAlpha, &ls("z"), None, &k, 1, 1).unwrap(), &one).unwrap();
    o.check((area - 4.0).abs() <= 1e-13, format!("plane z=0 area {area:?}"));
    let secs = t.elapsed().as_secs_f64();
    o.check(secs < 1.0, format!("{secs:.3} s"));
    o
}

// ---------------------------------------------------------------- 2

const LENS_TARGETS: [Target; 3] = [Target::Volume, Target::SurfaceBeta, Target::Line];

fn lens() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    let p = presets::spherical_lens();
    for target in LENS_TARGETS {
        let mut cfg = p.for_target(target).unwrap();
        cfg.grid = vec![16];
        cfg.order = vec![3];
        let r = sweep(cfg.clone());
        let e = r.rows[0].error.unwrap() / cfg.reference.unwrap();
        o.check(e <= 1e-6, format!("{} c=16 n=3: relative error {e:.2e}", target.name()));
    }
    // Irregular cells next to the edge take over from c of about 32 on, so the clean range is c <= 16.
    let mut plain_max = 0.0f64;
    for target in LENS_TARGETS {
        let mut cfg = p.for_target(target).unwrap();
        cfg.grid = vec![4, 8, 16, 32];
        cfg.order = vec![1, 2, 3];
        let r = sweep(cfg);
        for n in 1..=3 {
            let pts: Vec<(usize, f64)> = r.rows_for(n).filter(|r| r.sweep <= 16).map(|r| (r.sweep, r.error.unwrap())).collect();
            let order = fitted_order(&pts).unwrap_or(f64::NAN);
            let errs: Vec<String> = r.rows_for(n).map(|r| format!("{:.1e}", r.error.unwrap())).collect();
            o.check(
                order >= 2.0 * n as f64 - 0.5,
                format!("{} n={n}: order {order:.2} on c<=16 (errors c=4..32: {})", target.name(), errs.join(" ")),
            );
        }
        if target == Target::SurfaceBeta {
            plain_max = r.max_error().unwrap();
        }
    }
    let mut cfg = p.adaptive_for_target(Target::SurfaceBeta).unwrap();
    cfg.grid = vec![4, 8, 16, 32];
    cfg.order = vec![1, 2, 3];
    cfg.adaptive.as_mut().unwrap().tau.truncate(3);
    let r = sweep(cfg);
    let adaptive_max = r.max_error().unwrap();
    for n in 1..=3 {
        let errs: Vec<String> = r.rows_for(n).map(|r| format!("{:.1e}", r.error.unwrap())).collect();
        o.info(format!("adaptive surface n={n}: errors c=4..32: {}", errs.join(" ")));
    }
    o.check(
        adaptive_max < plain_max,
        format!("adaptive surface max error {adaptive_max:.3e} vs plain {plain_max:.3e}"),
    );
    let secs = t.elapsed().as_secs_f64();
    o.check(secs < 120.0, format!("{secs:.1} s"));
    o
}

// ---------------------------------------------------------------- 3

fn oscillating_edge() -> Outcome {
    let mut o = Outcome::new();
    let p = presets::oscillating_edge();
    for target in [Target::Line, Target::SurfaceBeta, Target::Volume] {
        let cfg = p.for_target(target).unwrap();
        let reference = cfg.reference.unwrap();
        let r = sweep(cfg);
        let at = r.rows.iter().find(|r| r.sweep == 32 && r.n == 4).unwrap();
        let e = at.error.unwrap() / reference;
        o.check(e <= 1e-8, format!("{} c=32 n=4: relative error {e:.2e}", target.name()));
        for n in 1..=4 {
            let order = r.order(n, 4).unwrap_or(f64::NAN);
            o.check(order >= 2.0 * n as f64 - 0.5, format!("{} n={n}: order {order:.2} over c=8..64", target.name()));
        }
    }
    o
}

// ---------------------------------------------------------------- 4

fn toric_section() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    let p = presets::toric_section();
    for target in [Target::Line, Target::SurfaceBeta] {
        let r = sweep(p.for_target(target).unwrap());
        for n in 1..=2 {
            let rows: Vec<_> = r.rows_for(n).collect();
            let abs: Vec<f64> = rows.iter().map(|r| r.value.abs()).collect();
            let decreasing = abs.windows(2).all(|w| w[1] < w[0]);
            let order = r.order(n, 4).unwrap_or(f64::NAN);
            o.check(
                decreasing && order >= 2.0 * n as f64 - 0.5,
                format!(
                    "{} n={n}: |I| for s=1,2,4,8: {}; order {order:.2}",
                    target.name(),
                    abs.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" ")
                ),
            );
            let last = rows.last().unwrap().value;
            let diffs: Vec<(usize, f64)> = rows[..rows.len() - 1].iter().map(|r| (r.sweep, (r.value - last).abs())).collect();
            let self_order = fitted_order(&diffs[..diffs.len()]).unwrap_or(f64::NAN);
            o.info(format!(
                "{} n={n}: self-convergence against s=8 value {last:.10}: order {self_order:.2}",
                target.name()
            ));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    o.check(secs < 300.0, format!("{secs:.1} s"));
    o
}

// ---------------------------------------------------------------- 5

fn thin_sheet() -> Outcome {
    let mut o = Outcome::new();
    let p = presets::thin_cylinder();
    let alpha = ls(&p.config.alpha);
    let k = cube();
    let halves = contour_split(&alpha, p.split_axis.unwrap());
    let refs = [reference_value(THIN_OUTER_AREA).unwrap(), reference_value(THIN_INNER_AREA).unwrap()];
    let target = SplitProblem::target(Target::SurfaceAlpha).unwrap();
    for (half, reference) in halves.iter().zip(refs) {
        let set = build_charts(&half.problem(), target, &k, 20, &GraphConfig::default(), false).unwrap();
        let mut finest = f64::NAN;
        for n in 1..=4 {
            let pts: Vec<(usize, f64)> = [1, 2, 4, 8]
                .iter()
                .map(|&s| {
                    let v = integrate(&set.rule(n, s).unwrap(), &one).unwrap();
                    finest = v;
                    (s, (v - reference).abs())
                })
                .collect();
            let order = fitted_order(&pts).unwrap_or(f64::NAN);
            o.check(
                order >= 1.5 * n as f64 - 0.3,
                format!("sheet area {reference:.6}: n={n} s-sweep order {order:.2}, value at s=8 {finest:.10}"),
            );
        }
        let e = rel(finest, reference);
        o.check(e <= 1e-6, format!("sheet area {reference:.6}: relative error {e:.2e} at n=4 s=8"));
    }
    let rows = node_count_report(|l| presets::slanted_sheet(l).config, &[0.1, 0.03, 0.01], Axis::Y).unwrap();
    let count = |s: Strategy| -> Vec<usize> { rows.iter().filter(|r| r.strategy == s).map(|r| r.nodes).collect() };
    let split = count(Strategy::ContourSplitting);
    let sub = count(Strategy::Subdivision);
    o.check(split.iter().all(|&c| c == 2), format!("slanted sheet split nodes for l=0.1,0.03,0.01: {split:?}"));
    o.check(
        sub.windows(2).all(|w| w[1] > w[0]),
        format!("slanted sheet subdivision nodes for l=0.1,0.03,0.01: {sub:?}"),
    );
    for r in &rows {
        let exact = 8.0 * r.l;
        o.info(format!("l={} {}: volume {:.12} (exact {exact})", r.l, r.strategy.name(), r.value));
    }
    o
}

// ---------------------------------------------------------------- 6

fn wavy_cylinder() -> Outcome {
    let mut o = Outcome::new();
    for n in [1, 2] {
        let rows = node_count_report(
            |l| {
                let mut cfg = presets::wavy_cylinder(l).config;
                cfg.order = vec![n];
                cfg
            },
            &[0.001],
            Axis::Y,
        )
        .unwrap();
        let sub = &rows[0];
        let split = &rows[1];
        let ratio = sub.affected_nodes as f64 / split.affected_nodes as f64;
        o.check(
            ratio >= 10.0,
            format!(
                "n={n}: {} affected cells, subdivision {} vs splitting {} surface nodes (ratio {ratio:.2}); totals {} vs {}",
                sub.affected_cells, sub.affected_nodes, split.affected_nodes, sub.nodes, split.nodes
            ),
        );
        o.info(format!("areas: subdivision {:.10}, splitting {:.10}", sub.value, split.value));
    }
    o
}

// ---------------------------------------------------------------- 7

struct Geometry {
    name: &'static str,
    alpha: LevelSet,
    beta: Option<LevelSet>,
    grid: usize,
    max_subdivisions: usize,
}

fn geometries() -> Vec<Geometry> {
    let make = |p: Preset, grid: usize, max_subdivisions: usize| Geometry {
        name: p.name,
        alpha: ls(&p.config.alpha),
        beta: p.config.beta.as_deref().map(ls),
        grid,
        max_subdivisions,
    };
    vec![
        make(presets::oscillating_edge(), 4, 8),
        make(presets::spherical_lens(), 4, 8),
        make(presets::toric_section(), 4, 8),
        make(presets::slanted_sheet(0.1), 1, UNRESTRICTED_SUBDIVISIONS),
        make(presets::wavy_cylinder(0.001), 6, UNRESTRICTED_SUBDIVISIONS),
    ]
}

impl Geometry {
    fn problem(&self) -> Problem {
        Problem::new(self.alpha.clone(), self.beta.clone())
    }

    fn config(&self) -> GraphConfig {
        GraphConfig {
            max_subdivisions: self.max_subdivisions,
            ..Default::default()
        }
    }

    fn charts(&self, target: Target) -> ChartSet {
        build_charts(&self.problem(), target, &cube(), self.grid, &self.config(), false).unwrap()
    }

    fn targets(&self) -> Vec<Target> {
        if self.beta.is_some() {
            vec![Target::Volume, Target::SurfaceAlpha, Target::SurfaceBeta, Target::Line]
        } else {
            vec![Target::Volume, Target::SurfaceAlpha]
        }
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn fd_gradient(f: impl Fn(&Point) -> f64, x: &Point, h: f64, dim: usize) -> Point {
    let mut g = [0.0; 3];
    for i in 0..dim {
        let mut a = *x;
        let mut b = *x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(&a) - f(&b)) / (2.0 * h);
    }
    g
}

fn shift(x: &Point, i: usize, s: f64) -> Point {
    let mut y = *x;
    y[i] += s;
    y
}

/// Fourth-order central difference of a vector-valued function of one step.
fn stencil(f: impl Fn(f64) -> Vec<f64>, h: f64) -> Vec<f64> {
    let (a, b, c, d) = (f(2.0 * h), f(h), f(-h), f(-2.0 * h));
    (0..a.len()).map(|i| (-a[i] + 8.0 * b[i] - 8.0 * c[i] + d[i]) / (12.0 * h)).collect()
}

/// Relative deviation of `a` from `b` in the max norm.
fn deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = max_abs(b.iter().copied()).max(max_abs(a.iter().copied())).max(1e-300);
    max_abs(a.iter().zip(b).map(|(x, y)| x - y)) / scale
}

fn flat(m: &Mat3) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

#[derive(Default)]
struct Worst {
    value: f64,
    count: usize,
}

impl Worst {
    fn add(&mut self, d: f64) {
        self.value = self.value.max(if d.is_nan() { f64::INFINITY } else { d });
        self.count += 1;
    }
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Point {
    let mut p = [0.0; 3];
    for v in p.iter_mut().take(dim) {
        *v = rng.gen_range(-r..r);
    }
    p
}

fn level_set_checks(lsn: &LevelSet, rng: &mut ChaCha8Rng, grad: &mut Worst, hess: &mut Worst, sym: &mut Worst) {
    let dim = lsn.dim();
    let mut done = 0;
    while done < 100 {
        let x = random_point(rng, dim, 0.95);
        if x[0].hypot(x[1]) < 0.05 {
            continue;
        }
        let (_, g, h) = lsn.hessian(&x).unwrap();
        let fd = fd_gradient(|p| lsn.value(p), &x, 1e-5, dim);
        grad.add(deviation(&g[..dim], &fd[..dim]));
        let mut fdh = [[0.0; 3]; 3];
        for (i, row) in fdh.iter_mut().enumerate().take(dim) {
            *row = fd_gradient(|p| lsn.gradient(p).unwrap().1[i], &x, 1e-5, dim);
        }
        hess.add(deviation(&flat(&h), &flat(&fdh)));
        let asym = max_abs((0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| h[i][j] - h[j][i]));
        sym.add(asym / max_abs(flat(&h)).max(1e-300));
        done += 1;
    }
}

fn nested_of(chart: &MappingComposition) -> Vec<Arc<NestedMapping>> {
    chart
        .elements()
        .iter()
        .filter_map(|e| match e {
            ChainElement::Nested(m) => Some(m.clone()),
            ChainElement::Embed(_) => None,
        })
        .collect()
}

fn derivative_suite() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for geo in geometries() {
        let (mut grad, mut hess, mut sym) = (Worst::default(), Worst::default(), Worst::default());
        level_set_checks(&geo.alpha, &mut rng, &mut grad, &mut hess, &mut sym);
        if let Some(b) = &geo.beta {
            level_set_checks(b, &mut rng, &mut grad, &mut hess, &mut sym);
        }

        let mut charts: Vec<MappingComposition> = Vec::new();
        for target in geo.targets() {
            for cc in geo.charts(target).cells {
                charts.extend(cc.charts.into_iter().map(|c| c.map));
            }
        }
        let (mut jac, mut hes, mut jdet, mut gramd, mut dens, mut full) =
            (Worst::default(), Worst::default(), Worst::default(), Worst::default(), Worst::default(), Worst::default());
        let (mut tgrad, mut thess) = (Worst::default(), Worst::default());
        let h = 1e-3;
        for _ in 0..200 {
            let chart = &charts[rng.gen_range(0..charts.len())];
            let xt = random_point(&mut rng, chart.input_dim(), 0.9);
            // Each nested mapping of the chain at its own interior point.
            for el in chart.elements() {
                if let ChainElement::Nested(m) = el {
                    let d = m.dim();
                    let y = random_point(&mut rng, d, 0.9);
                    let axes: Vec<usize> = m.order().iter().map(|a| a.index()).collect();
                    let (_, j, hs) = m.hessians(&y).unwrap();
                    let mut fdj = [[0.0; 3]; 3];
                    for &k in &axes {
                        let col = stencil(|s| m.eval(&shift(&y, k, s)).unwrap().to_vec(), h);
                        for i in 0..3 {
                            fdj[i][k] = col[i];
                        }
                    }
                    jac.add(deviation(&flat(&j), &flat(&fdj)));
                    // Affine mappings have a vanishing Hessian, so the error is
                    // measured against the larger of |H| and the differenced |J|.
                    let mut fdh = [[[0.0; 3]; 3]; 3];
                    for &l in &axes {
                        let dj = stencil(|s| flat(&m.jacobian(&shift(&y, l, s)).unwrap().1), h);
                        for i in 0..3 {
                            for &k in &axes {
                                fdh[i][k][l] = dj[3 * i + k];
                            }
                        }
                    }
                    let an_h: Vec<f64> = hs.iter().flat_map(flat).collect();
                    let fd_h: Vec<f64> = fdh.iter().flat_map(flat).collect();
                    let scale = max_abs(an_h.iter().copied()).max(max_abs(flat(&j)));
                    hes.add(max_abs(an_h.iter().zip(&fd_h).map(|(a, b)| a - b)) / scale);
                    let (_, jd) = m.jacobian_det(&y).unwrap();
                    let assembled = det(&j, d);
                    jdet.add((jd - assembled).abs() / assembled.abs().max(1e-300));
                }
            }
            // Whole chain: Gram determinant against a finite-difference Jacobian.
            let k = chart.input_dim();
            let mut fdj = [[0.0; 3]; 3];
            for c in 0..k {
                let col = stencil(|s| chart.eval(&shift(&xt, c, s)).unwrap().to_vec(), h);
                for i in 0..3 {
                    fdj[i][c] = col[i];
                }
            }
            let (_, g) = chart.gram_det(&xt).unwrap();
            let fg = gram(&fdj, k, chart.output_dim());
            gramd.add((g - fg).abs() / fg.abs().max(1e-300));
            let (_, dn) = chart.density(&xt).unwrap();
            dens.add((dn - g).abs() / g.abs().max(1e-300));
            if k == 3 {
                let prod: f64 = nested_of(chart)
                    .iter()
                    .scan(xt, |p, m| {
                        let (q, d) = m.jacobian_det(p).unwrap();
                        *p = q;
                        Some(d)
                    })
                    .product();
                let assembled = det(&chart.jacobian(&xt).unwrap().1, 3);
                full.add((prod.abs() - assembled.abs()).abs() / assembled.abs().max(1e-300));
            }
            // Second level set pulled back through the outer tile.
            if let (Some(b), [ChainElement::Nested(_), .., ChainElement::Nested(a)]) = (&geo.beta, chart.elements()) {
                if a.dim() == 3 && chart.elements().len() == 2 {
                    let bt = b.transformed(MappingComposition::single((**a).clone()));
                    let p = random_point(&mut rng, 3, 0.9);
                    let (_, g, hh) = bt.hessian(&p).unwrap();
                    let fd = fd_gradient(|q| bt.value(q), &p, 1e-5, 3);
                    tgrad.add(deviation(&g, &fd));
                    let mut fdh = [[0.0; 3]; 3];
                    for (i, row) in fdh.iter_mut().enumerate() {
                        *row = fd_gradient(|q| bt.gradient(q).unwrap().1[i], &p, 1e-5, 3);
                    }
                    thess.add(deviation(&flat(&hh), &flat(&fdh)));
                }
            }
        }

        // Implicit height derivatives at points of the alpha surface.
        let surface = geo.charts(Target::SurfaceAlpha).rule(3, 1).unwrap();
        let (mut h1, mut h2) = (Worst::default(), Worst::default());
        let alpha = &geo.alpha;
        let mut tries = 0;
        while h1.count < 100 && tries < 10_000 {
            tries += 1;
            let x = surface.nodes[rng.gen_range(0..surface.nodes.len())];
            let (_, g) = alpha.gradient(&x).unwrap();
            let hd = Axis::ALL.into_iter().max_by(|a, b| g[a.index()].abs().total_cmp(&g[b.index()].abs())).unwrap();
            let w = 0.01;
            let height = |p: &Point| newton_height(alpha, p, hd, x[hd.index()] - w, x[hd.index()] + w);
            let others: Vec<Axis> = Axis::ALL.into_iter().filter(|&a| a != hd).collect();
            let d = 1e-5;
            let shifted = |p: &Point, a: Axis, s: f64| {
                let mut q = *p;
                q[a.index()] += s;
                q
            };
            let mut an = Vec::new();
            let mut fd = Vec::new();
            let mut ok = true;
            for &t in &others {
                match (height(&shifted(&x, t, d)), height(&shifted(&x, t, -d))) {
                    (Ok(a), Ok(b)) => {
                        an.push(height_first_derivs(alpha, &x, hd, t).unwrap());
                        fd.push((a - b) / (2.0 * d));
                    }
                    _ => ok = false,
                }
            }
            let d2 = 1e-4;
            let mut an2 = Vec::new();
            let mut fd2 = Vec::new();
            for &t1 in &others {
                for &t2 in &others {
                    let at = |s1: f64, s2: f64| height(&shifted(&shifted(&x, t1, s1), t2, s2));
                    let v = if t1 == t2 {
                        match (at(d2, 0.0), at(0.0, 0.0), at(-d2, 0.0)) {
                            (Ok(a), Ok(b), Ok(c)) => (a - 2.0 * b + c) / (d2 * d2),
                            _ => {
                                ok = false;
                                0.0
                            }
                        }
                    } else {
                        match (at(d2, d2), at(d2, -d2), at(-d2, d2), at(-d2, -d2)) {
                            (Ok(a), Ok(b), Ok(c), Ok(e)) => (a - b - c + e) / (4.0 * d2 * d2),
                            _ => {
                                ok = false;
                                0.0
                            }
                        }
                    };
                    an2.push(height_second_derivs(alpha, &x, hd, t1, t2).unwrap());
                    fd2.push(v);
                }
            }
            if !ok {
                continue;
            }
            let sa = max_abs(an.iter().copied()).max(1.0);
            h1.add(max_abs(an.iter().zip(&fd).map(|(a, b)| a - b)) / sa);
            let sb = max_abs(an2.iter().copied()).max(1.0);
            h2.add(max_abs(an2.iter().zip(&fd2).map(|(a, b)| a - b)) / sb);
        }

        let name = geo.name;
        let mut report = |w: &Worst, tol: f64, what: &str, min_count: usize| {
            o.check(
                w.count >= min_count && w.value <= tol,
                format!("{name}: {what} max deviation {:.1e} (tol {tol:.0e}, {} points)", w.value, w.count),
            );
        };
        report(&grad, 1e-6, "level-set gradient", 100);
        report(&hess, 1e-5, "level-set Hessian", 100);
        report(&sym, 1e-14, "Hessian asymmetry", 100);
        report(&jac, 1e-6, "nested Jacobian", 100);
        report(&hes, 1e-4, "nested Hessians", 100);
        report(&jdet, 1e-10, "J_M product vs assembled det", 100);
        report(&gramd, 1e-6, "chain Gram determinant", 100);
        report(&dens, 1e-10, "density vs Gram determinant", 100);
        if full.count > 0 {
            report(&full, 1e-10, "chain J_M product vs det", 1);
        }
        if geo.beta.is_some() {
            report(&tgrad, 1e-6, "transformed gradient", 50);
            report(&thess, 1e-5, "transformed Hessian", 50);
        }
        report(&h1, 1e-6, "implicit height first derivatives", 100);
        report(&h2, 1e-4, "implicit height second derivatives", 100);
    }
    o
}

// ---------------------------------------------------------------- 8

fn monte_carlo() -> Outcome {
    let mut o = Outcome::new();
    const SAMPLES: usize = 10_000_000;
    const CHUNK: usize = 100_000;
    for (gi, geo) in geometries().into_iter().enumerate() {
        let set = geo.charts(Target::Volume);
        let rule = set.rule(5, 4).unwrap();
        let q = integrate(&rule, &one).unwrap();
        let hits: usize = (0..SAMPLES / CHUNK)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * gi as u64 + chunk as u64);
                let mut hits = 0;
                for _ in 0..CHUNK {
                    let x = random_point(&mut rng, 3, 1.0);
                    let inside = geo.alpha.value(&x) <= 0.0 && geo.beta.as_ref().map_or(true, |b| b.value(&x) <= 0.0);
                    hits += inside as usize;
                }
                hits
            })
            .sum();
        let p = hits as f64 / SAMPLES as f64;
        let mc = 8.0 * p;
        let sigma = 8.0 * (p * (1.0 - p) / SAMPLES as f64).sqrt();
        let dev = (q - mc).abs() / sigma;
        o.check(
            dev <= 4.0,
            format!("{}: rule {q:.8}, Monte Carlo {mc:.8} +- {sigma:.1e} ({dev:.2} sigma)", geo.name),
        );
    }
    o
}

// ---------------------------------------------------------------- 9

fn invariants() -> Outcome {
    let mut o = Outcome::new();
    let g = |x: &Point| 1.0 + x[0] * x[0] - 0.5 * x[1] * x[2];
    for geo in geometries() {
        let k = cube();
        let cfg = geo.config();
        let mut sets = vec![("alpha", geo.alpha.clone())];
        if let Some(b) = &geo.beta {
            sets.push(("beta", b.clone()));
        }
        for (label, l) in sets {
            let vol = |f: &LevelSet| {
                let set = build_charts(&Problem::new(f.clone(), None), Target::Volume, &k, geo.grid, &cfg, false).unwrap();
                integrate(&set.rule(3, 1).unwrap(), &one).unwrap()
            };
            let total = vol(&l) + vol(&l.negated());
            o.check(rel(total, 8.0) <= 1e-10, format!("{}: minus + plus volume of {label} = {total:.15}", geo.name));
        }

        let direct = build_charts(&Problem::new(geo.alpha.clone(), None), Target::Volume, &k, geo.grid, &cfg, false).unwrap();
        let minus_one = LevelSet::constant(-1.0, 3);
        let with_beta =
            build_charts(&Problem::new(geo.alpha.clone(), Some(minus_one)), Target::Volume, &k, geo.grid, &cfg, false).unwrap();
        let a = integrate(&direct.rule(3, 1).unwrap(), &g).unwrap();
        let b = integrate(&with_beta.rule(3, 1).unwrap(), &g).unwrap();
        o.check(rel(b, a) <= 1e-12, format!("{}: beta = -1 reduction {b:.15} vs {a:.15}", geo.name));

        let h = presets::presets()
            .into_iter()
            .find(|p| p.name == geo.name)
            .and_then(|p| p.split_axis)
            .unwrap_or(Axis::Z);
        for target in [Target::Volume, Target::SurfaceAlpha] {
            let direct = build_charts(&Problem::new(geo.alpha.clone(), None), target, &k, geo.grid, &cfg, false).unwrap();
            let split = nestquad::quadrature::build_split_charts(&geo.alpha, h, target, &k, geo.grid, &cfg, false).unwrap();
            let n = 10;
            let a = integrate(&direct.rule(n, 2).unwrap(), &g).unwrap();
            let b = integrate(&split.rule(n, 2).unwrap(), &g).unwrap();
            o.check(
                rel(b, a) <= 1e-8,
                format!("{}: {} split along {} {b:.12} vs direct {a:.12}", geo.name, target.name(), h.name()),
            );
        }
    }
    o
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "exact analytic cases", exact_cases),
        (2, "spherical lens", lens),
        (3, "oscillating edge", oscillating_edge),
        (4, "toric section", toric_section),
        (5, "thin sheet and slanted-sheet node counts", thin_sheet),
        (6, "wavy cylinder node counts", wavy_cylinder),
        (7, "derivative and structure suite", derivative_suite),
        (8, "Monte Carlo volume oracle", monte_carlo),
        (9, "conservation and consistency invariants", invariants),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut summary = Vec::new();
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        if only.is_some_and(|k| k != id) {
            continue;
        }
        let t = Instant::now();
        let out = f();
        for l in &out.lines {
            println!("{l}");
        }
        let expected = EXPECTED_FAILURES.iter().find(|(k, _)| *k == id);
        let note = match (out.ok, expected) {
            (true, None) => String::new(),
            (false, Some((_, why))) => format!(" (known: {why})"),
            (true, Some(_)) => {
                unexpected += 1;
                " (listed as a known failure but passed)".into()
            }
            (false, None) => {
                unexpected += 1;
                String::new()
            }
        };
        let line = format!(
            "criterion {id}: {} {name} [{:.1} s]{note}",
            if out.ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        println!("{line}\n");
        summary.push(line);
    }
    println!("summary:");
    for l in &summary {
        println!("  {l}");
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criterion result(s) differ from the recorded expectations");
        ExitCode::FAILURE
    }
}
