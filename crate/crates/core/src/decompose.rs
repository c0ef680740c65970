//! Graph construction, tessellation and implicit height evaluation.

use crate::bernstein::{body_sign, Sign, SignConfig};
use crate::error::{Error, Result};
use crate::levelset::LevelSet;
use crate::topology::{Axis, Body, HeightFunction, NestedBody, Node, NodeId, Point, Side};

const NEWTON_MAX_ITER: usize = 50;

/// Root of `ls` on the segment through `x` along `h`, restricted to `[lo, hi]`.
///
/// Newton iteration, falling back to bisection whenever a step leaves the
/// current bracket or the derivative is tiny.
pub fn newton_height(ls: &LevelSet, x: &Point, h: Axis, lo: f64, hi: f64) -> Result<f64> {
    let i = h.index();
    let at = |t: f64| {
        let mut p = *x;
        p[i] = t;
        p
    };
    let flo = ls.value(&at(lo));
    let fhi = ls.value(&at(hi));
    if !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::NonFiniteEvaluation(x[0], x[1], x[2]));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    let tol = 1e-12 * (1.0 + flo.abs().max(fhi.abs()));
    if (flo < 0.0) == (fhi < 0.0) {
        if flo.abs() <= tol {
            return Ok(lo);
        }
        if fhi.abs() <= tol {
            return Ok(hi);
        }
        // A root on the bracket end computed from coordinates that are themselves
        // Newton roots carries their residual; accept it when the implied
        // distance along h is negligible.
        let (t, f) = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
        let df = ls.field().gradient(&at(t)).1[i];
        if f.abs() <= 1e-9 * df.abs() * (hi - lo).abs() {
            return Ok(t);
        }
        return Err(Error::BracketInvalid { lo, hi, flo, fhi });
    }
    // Invariant: f(neg) < 0 < f(pos).
    let (mut neg, mut pos) = if flo < 0.0 { (lo, hi) } else { (hi, lo) };
    let mut t = lo - flo * (hi - lo) / (fhi - flo);
    if !(t > lo.min(hi) && t < lo.max(hi)) {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..NEWTON_MAX_ITER {
        let p = at(t);
        let (f, g) = ls.field().gradient(&p);
        if !f.is_finite() {
            return Err(Error::NonFiniteEvaluation(p[0], p[1], p[2]));
        }
        if f.abs() <= tol {
            // One more step takes the root from the residual tolerance to
            // rounding level.
            let polished = t - f / g[i];
            let (a, b) = (neg.min(pos), neg.max(pos));
            return Ok(if g[i].abs() >= 1e-14 && polished >= a && polished <= b { polished } else { t });
        }
        if f < 0.0 {
            neg = t;
        } else {
            pos = t;
        }
        let width = (pos - neg).abs();
        if width <= 4.0 * f64::EPSILON * (1.0 + t.abs()) {
            return Ok(t);
        }
        let df = g[i];
        let mut next = t - f / df;
        let (a, b) = (neg.min(pos), neg.max(pos));
        if !(df.abs() >= 1e-14 && next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - t).abs() <= 2.0 * f64::EPSILON * (1.0 + t.abs()) {
            return Ok(next);
        }
        t = next;
    }
    Err(Error::NewtonDiverged(at(t)))
}

/// Axis maximizing the magnitude of the averaged projected gradient.
pub fn choose_height_direction(bodies: &[Body], ls: &LevelSet) -> Result<Axis> {
    let mut y = [0.0; 3];
    let mut common = [true; 3];
    for k in bodies {
        let (_, g) = ls.field().gradient(&k.center());
        for i in 0..3 {
            if k.active[i] {
                y[i] += g[i];
            } else {
                common[i] = false;
            }
        }
    }
    let mut best: Option<(Axis, f64)> = None;
    for a in Axis::ALL {
        let v = (y[a.index()] / bodies.len() as f64).abs();
        if common[a.index()] && v.is_finite() && best.map_or(true, |(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    match best {
        Some((a, v)) if v > 0.0 => Ok(a),
        _ => Err(Error::DirectionUndetermined),
    }
}

/// True if `∂_h ls` has a determined sign on `k`.
pub fn is_graph(ls: &LevelSet, k: &Body, h: Axis, cfg: &SignConfig) -> bool {
    let i = h.index();
    match body_sign(|x| ls.field().gradient(x).1[i], k, cfg) {
        Ok(s) => s.is_determined(),
        Err(_) => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    /// Maximum bisection depth per root box before the linear fallback.
    pub max_subdivisions: usize,
    pub sign: SignConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            max_subdivisions: 8,
            sign: SignConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum GraphPiece {
    Nested(NestedBody),
    Fallback(Body),
}

/// Output of [`build_graph`].
#[derive(Debug, Clone, Default)]
pub struct Graph {
    pub pieces: Vec<GraphPiece>,
    pub bisections: usize,
}

fn point_sign(ls: &LevelSet, k: &Body, cfg: &SignConfig) -> Result<Sign> {
    body_sign(|x| ls.value(x), k, cfg)
}

/// Builds nested bodies on `k` on which the isocontour of `ls` is a graph.
pub fn build_graph(k: &Body, ls: &LevelSet, cfg: &GraphConfig) -> Result<Graph> {
    let mut out = Graph::default();
    graph_rec(k, ls, cfg, 0, &mut out)?;
    Ok(out)
}

fn graph_rec(k: &Body, ls: &LevelSet, cfg: &GraphConfig, depth: usize, out: &mut Graph) -> Result<()> {
    match try_graph(k, ls, &cfg.sign)? {
        Some(body) => out.pieces.push(GraphPiece::Nested(body)),
        None if depth < cfg.max_subdivisions => {
            out.bisections += 1;
            let (a, b) = k.bisect();
            graph_rec(&a, ls, cfg, depth + 1, out)?;
            graph_rec(&b, ls, cfg, depth + 1, out)?;
        }
        None => out.pieces.push(GraphPiece::Fallback(*k)),
    }
    Ok(())
}

/// One pass of the level-by-level construction; `None` if `k` needs subdividing.
fn try_graph(k: &Body, ls: &LevelSet, cfg: &SignConfig) -> Result<Option<NestedBody>> {
    let root_sign = point_sign(ls, k, cfg)?;
    let mut body = NestedBody::new(*k, root_sign, Vec::new());
    let mut directions = Vec::new();
    let mut current: Vec<NodeId> = vec![0];
    loop {
        let pending: Vec<NodeId> = current
            .iter()
            .copied()
            .filter(|&id| body.node(id).sign == Sign::Indeterminate)
            .collect();
        if pending.is_empty() {
            break;
        }
        let supports: Vec<Body> = pending.iter().map(|&id| body.node(id).support).collect();
        let h = match choose_height_direction(&supports, ls) {
            Ok(h) => h,
            Err(Error::DirectionUndetermined) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !supports.iter().all(|s| is_graph(ls, s, h, cfg)) {
            return Ok(None);
        }
        directions.push(h);
        let level = directions.len();
        let mut next = Vec::with_capacity(2 * pending.len());
        for (&id, s) in pending.iter().zip(&supports) {
            let lo = s.face(h, Side::Down)?;
            let hi = s.face(h, Side::Up)?;
            let make = |f: Body| -> Result<Node> {
                Ok(Node {
                    level,
                    sign: point_sign(ls, &f, cfg)?,
                    children: None,
                    support: f,
                })
            };
            let ids = body.attach_children(id, make(lo)?, make(hi)?);
            next.extend(ids);
        }
        current = next;
    }
    for a in k.active_axes() {
        if !directions.contains(&a) {
            directions.push(a);
        }
    }
    body.set_directions(directions);
    Ok(Some(body))
}

/// Assigns signs bottom-up, splitting along the isocontour where children disagree.
///
/// Returns tiles whose roots carry a determined sign.
pub fn tessellate(g: NestedBody, ls: &LevelSet, cfg: &SignConfig) -> Result<Vec<NestedBody>> {
    let mut out = Vec::new();
    let mut stack = vec![g];
    while let Some(mut w) = stack.pop() {
        match resolve(&mut w, ls, cfg)? {
            None => out.push(w),
            Some((lower, upper)) => {
                stack.push(upper);
                stack.push(lower);
            }
        }
    }
    Ok(out)
}

fn resolve(w: &mut NestedBody, ls: &LevelSet, cfg: &SignConfig) -> Result<Option<(NestedBody, NestedBody)>> {
    let depth = w.depth();
    for level in (0..depth).rev() {
        for id in w.level_nodes(level) {
            let node = w.node(id);
            if node.sign != Sign::Indeterminate {
                continue;
            }
            let Some([lo, hi]) = node.children else {
                return Err(Error::StructuralInvariantViolation(
                    "indeterminate leaf body".into(),
                ));
            };
            let h = w.directions()[level];
            let (s0, s1) = (w.node(lo).sign, w.node(hi).sign);
            if s0 == Sign::Indeterminate || s1 == Sign::Indeterminate {
                return Err(Error::StructuralInvariantViolation(
                    "children unresolved while resolving parent".into(),
                ));
            }
            if s0 == s1 {
                w.set_sign(id, s0);
            } else if s0 == Sign::Zero || s1 == Sign::Zero {
                let (sign, zero_side) = if s0 == Sign::Zero {
                    (s1, Side::Down)
                } else {
                    (s0, Side::Up)
                };
                w.set_sign(id, sign);
                if level == 0 {
                    w.add_surface_face((h, zero_side));
                }
            } else {
                let a0 = inserted_height(ls, &node.support, h)?;
                let (mut lower, mut upper) = w.split(id, &a0, ls, cfg)?;
                if level == 0 {
                    lower.add_surface_face((h, Side::Up));
                    upper.add_surface_face((h, Side::Down));
                }
                return Ok(Some((lower, upper)));
            }
        }
    }
    Ok(None)
}

/// Height function of the isocontour across `support` in direction `h`.
fn inserted_height(ls: &LevelSet, support: &Body, h: Axis) -> Result<HeightFunction> {
    if support.dim() == 1 {
        let x = support.lower;
        let i = h.index();
        return Ok(HeightFunction::Constant(newton_height(
            ls,
            &x,
            h,
            support.lower[i],
            support.upper[i],
        )?));
    }
    Ok(HeightFunction::implicit(ls.clone(), h, *support))
}

#[derive(Debug, Clone)]
pub struct Tile {
    pub body: NestedBody,
    /// Built from the linearized level set.
    pub fallback: bool,
}

impl Tile {
    pub fn sign(&self) -> Sign {
        self.body.sign()
    }
}

#[derive(Debug, Clone, Default)]
pub struct DecompositionResult {
    /// Tiles with sign minus or plus.
    pub tiles: Vec<Tile>,
    pub zero_tiles: Vec<Tile>,
    pub fallback_cells: Vec<Body>,
    pub bisections: usize,
}

impl DecompositionResult {
    pub fn with_sign(&self, s: Sign) -> impl Iterator<Item = &Tile> {
        self.tiles.iter().filter(move |t| t.sign() == s)
    }
}

/// Graph construction followed by tessellation, with the linear fallback.
///
/// With `detect_faces`, box tiles of determined sign also record faces on
/// which the level set vanishes identically.
pub fn decompose(k: &Body, ls: &LevelSet, cfg: &GraphConfig, detect_faces: bool) -> Result<DecompositionResult> {
    let graph = build_graph(k, ls, cfg)?;
    let mut out = DecompositionResult {
        bisections: graph.bisections,
        ..Default::default()
    };
    for piece in graph.pieces {
        match piece {
            GraphPiece::Nested(body) => collect(&mut out, body, ls, cfg, false, detect_faces)?,
            GraphPiece::Fallback(cell) => {
                out.fallback_cells.push(cell);
                let lin = ls.linearized(&cell.center())?;
                let lin_cfg = GraphConfig {
                    max_subdivisions: 0,
                    ..*cfg
                };
                for p in build_graph(&cell, &lin, &lin_cfg)?.pieces {
                    match p {
                        GraphPiece::Nested(body) => collect(&mut out, body, &lin, cfg, true, detect_faces)?,
                        GraphPiece::Fallback(_) => {
                            return Err(Error::StructuralInvariantViolation(
                                "linearized level set is not a graph".into(),
                            ))
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn collect(
    out: &mut DecompositionResult,
    body: NestedBody,
    ls: &LevelSet,
    cfg: &GraphConfig,
    fallback: bool,
    detect_faces: bool,
) -> Result<()> {
    for mut t in tessellate(body, ls, &cfg.sign)? {
        if t.sign() == Sign::Zero {
            out.zero_tiles.push(Tile { body: t, fallback });
            continue;
        }
        if detect_faces && t.root().children.is_none() {
            let root = t.root().support;
            for a in root.active_axes() {
                for side in [Side::Down, Side::Up] {
                    let f = root.face(a, side)?;
                    if point_sign(ls, &f, &cfg.sign)? == Sign::Zero {
                        t.add_surface_face((a, side));
                    }
                }
            }
        }
        out.tiles.push(Tile { body: t, fallback });
    }
    Ok(())
}
