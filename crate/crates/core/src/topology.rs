//! Axis-aligned bodies, height functions and nested bodies.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::bernstein::{Sign, SignConfig};
use crate::decompose::newton_height;
use crate::error::{Error, Result};
use crate::levelset::{LevelSet, Mat3};
use crate::mapping::{implicit_first, implicit_second};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i]
    }

    pub fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Down,
    Up,
}

impl Side {
    pub fn unit(self) -> f64 {
        match self {
            Side::Down => -1.0,
            Side::Up => 1.0,
        }
    }
}

/// `Π_h(x)`: zeroes component `h`.
pub fn project(x: &Point, h: Axis) -> Point {
    let mut p = *x;
    p[h.index()] = 0.0;
    p
}

/// An axis-aligned box, face, edge or point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body {
    pub lower: Point,
    pub upper: Point,
    pub active: [bool; 3],
}

impl Body {
    /// Box spanning the first `dim` axes; remaining coordinates are pinned to 0.
    pub fn cube(lower: f64, upper: f64, dim: usize) -> Body {
        let mut b = Body {
            lower: [0.0; 3],
            upper: [0.0; 3],
            active: [false; 3],
        };
        for i in 0..dim {
            b.lower[i] = lower;
            b.upper[i] = upper;
            b.active[i] = true;
        }
        b
    }

    pub fn new(lower: Point, upper: Point, dim: usize) -> Body {
        let mut active = [false; 3];
        for a in active.iter_mut().take(dim) {
            *a = true;
        }
        Body {
            lower,
            upper,
            active,
        }
    }

    pub fn dim(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn active_axes(&self) -> impl Iterator<Item = Axis> + '_ {
        Axis::ALL.into_iter().filter(|a| self.active[a.index()])
    }

    pub fn is_active(&self, h: Axis) -> bool {
        self.active[h.index()]
    }

    pub fn center(&self) -> Point {
        std::array::from_fn(|i| 0.5 * (self.lower[i] + self.upper[i]))
    }

    pub fn extent(&self, h: Axis) -> f64 {
        self.upper[h.index()] - self.lower[h.index()]
    }

    pub fn measure(&self) -> f64 {
        self.active_axes().map(|a| self.extent(a)).product()
    }

    pub fn face(&self, h: Axis, side: Side) -> Result<Body> {
        if !self.is_active(h) {
            return Err(Error::AxisInactive(h));
        }
        let mut f = *self;
        let i = h.index();
        f.active[i] = false;
        match side {
            Side::Down => f.upper[i] = f.lower[i],
            Side::Up => f.lower[i] = f.upper[i],
        }
        Ok(f)
    }

    /// Halves along the active axis of largest extent, ties broken x < y < z.
    pub fn bisect(&self) -> (Body, Body) {
        let mut axis = None;
        let mut best = f64::NEG_INFINITY;
        for a in self.active_axes() {
            if self.extent(a) > best {
                best = self.extent(a);
                axis = Some(a);
            }
        }
        let i = axis.expect("bisect needs an active axis").index();
        let mid = 0.5 * (self.lower[i] + self.upper[i]);
        let mut lo = *self;
        let mut hi = *self;
        lo.upper[i] = mid;
        hi.lower[i] = mid;
        (lo, hi)
    }

    /// Maps reference coordinates in [-1, 1] to the body.
    pub fn from_reference(&self, xi: &Point) -> Point {
        std::array::from_fn(|i| {
            0.5 * (self.lower[i] + self.upper[i]) + 0.5 * (self.upper[i] - self.lower[i]) * xi[i]
        })
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        (0..3).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
    }
}

/// A height function `a(x)`: a constant or the root of a level set along an axis.
#[derive(Debug, Clone)]
pub enum HeightFunction {
    Constant(f64),
    Implicit(Arc<ImplicitHeight>),
}

/// Root of `level_set` along `axis` on the body `support`.
///
/// Coordinates that are inactive in `support` are pinned to its values; the
/// remaining coordinates other than `axis` are taken from the argument.
#[derive(Debug)]
pub struct ImplicitHeight {
    pub level_set: LevelSet,
    pub axis: Axis,
    pub support: Body,
}

impl ImplicitHeight {
    fn pinned(&self, x: &Point) -> Point {
        let mut p = *x;
        for i in 0..3 {
            if !self.support.active[i] {
                p[i] = self.support.lower[i];
            }
        }
        p
    }

    fn free(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&i| self.support.active[i] && i != self.axis.index())
    }

    /// Root point on the level set above `x`.
    pub fn root_point(&self, x: &Point) -> Result<Point> {
        let mut p = self.pinned(x);
        let h = self.axis.index();
        p[h] = newton_height(
            &self.level_set,
            &p,
            self.axis,
            self.support.lower[h],
            self.support.upper[h],
        )?;
        Ok(p)
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        Ok(self.root_point(x)?[self.axis.index()])
    }

    /// Value and gradient with respect to the ambient coordinates.
    pub fn eval_grad(&self, x: &Point) -> Result<(f64, Point)> {
        let p = self.root_point(x)?;
        let (_, g) = self.level_set.gradient(&p)?;
        let mut d = [0.0; 3];
        for t in self.free() {
            d[t] = implicit_first(&g, self.axis, Axis::from_index(t))?;
        }
        Ok((p[self.axis.index()], d))
    }

    /// Value, gradient and Hessian with respect to the ambient coordinates.
    pub fn eval_hess(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        let p = self.root_point(x)?;
        let (_, g, hs) = self.level_set.hessian(&p)?;
        let mut d = [0.0; 3];
        let mut dd = [[0.0; 3]; 3];
        let free: Vec<usize> = self.free().collect();
        for &t in &free {
            d[t] = implicit_first(&g, self.axis, Axis::from_index(t))?;
        }
        for &i in &free {
            for &j in &free {
                dd[i][j] = implicit_second(
                    &g,
                    &hs,
                    self.axis,
                    Axis::from_index(i),
                    Axis::from_index(j),
                )?;
            }
        }
        Ok((p[self.axis.index()], d, dd))
    }
}

impl HeightFunction {
    pub fn implicit(level_set: LevelSet, axis: Axis, support: Body) -> HeightFunction {
        HeightFunction::Implicit(Arc::new(ImplicitHeight {
            level_set,
            axis,
            support,
        }))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, HeightFunction::Constant(_))
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        match self {
            HeightFunction::Constant(c) => Ok(*c),
            HeightFunction::Implicit(f) => f.eval(x),
        }
    }

    pub fn eval_grad(&self, x: &Point) -> Result<(f64, Point)> {
        match self {
            HeightFunction::Constant(c) => Ok((*c, [0.0; 3])),
            HeightFunction::Implicit(f) => f.eval_grad(x),
        }
    }

    pub fn eval_hess(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        match self {
            HeightFunction::Constant(c) => Ok((*c, [0.0; 3], [[0.0; 3]; 3])),
            HeightFunction::Implicit(f) => f.eval_hess(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeightPair {
    pub lower: HeightFunction,
    pub upper: HeightFunction,
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct Node {
    pub level: usize,
    pub sign: Sign,
    pub children: Option<[NodeId; 2]>,
    /// The box or face this node was cut from.
    pub support: Body,
}

/// A rooted binary tree of bodies with one height direction and one pair of
/// height functions per level.
///
/// Level `l` holds bodies of dimension `d - l`; their children are the lower
/// and upper faces in direction `directions[l]`, bounded by `pairs[l]`.
#[derive(Debug, Clone)]
pub struct NestedBody {
    dim: usize,
    directions: Vec<Axis>,
    pairs: Vec<HeightPair>,
    nodes: Vec<Node>,
    /// Faces of the root on which the level set vanishes, recorded during tessellation.
    surface_faces: Vec<(Axis, Side)>,
}

impl NestedBody {
    /// A single-node body over `root` with constant pairs.
    ///
    /// `directions` must be a permutation of the root's active axes.
    pub fn new(root: Body, sign: Sign, directions: Vec<Axis>) -> NestedBody {
        let pairs = directions
            .iter()
            .map(|a| HeightPair {
                lower: HeightFunction::Constant(root.lower[a.index()]),
                upper: HeightFunction::Constant(root.upper[a.index()]),
            })
            .collect();
        NestedBody {
            dim: root.dim(),
            directions,
            pairs,
            nodes: vec![Node {
                level: 0,
                sign,
                children: None,
                support: root,
            }],
            surface_faces: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn sign(&self) -> Sign {
        self.nodes[0].sign
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn directions(&self) -> &[Axis] {
        &self.directions
    }

    pub fn pair(&self, level: usize) -> &HeightPair {
        &self.pairs[level]
    }

    pub fn surface_faces(&self) -> &[(Axis, Side)] {
        &self.surface_faces
    }

    pub(crate) fn add_surface_face(&mut self, face: (Axis, Side)) {
        if !self.surface_faces.contains(&face) {
            self.surface_faces.push(face);
        }
    }

    /// Replaces the level directions and resets all pairs to the root bounds.
    pub(crate) fn set_directions(&mut self, directions: Vec<Axis>) {
        let root = self.nodes[0].support;
        self.pairs = directions
            .iter()
            .map(|a| HeightPair {
                lower: HeightFunction::Constant(root.lower[a.index()]),
                upper: HeightFunction::Constant(root.upper[a.index()]),
            })
            .collect();
        self.directions = directions;
    }

    pub(crate) fn set_sign(&mut self, id: NodeId, sign: Sign) {
        self.nodes[id].sign = sign;
    }

    /// Appends children to `parent` and returns their ids.
    pub(crate) fn attach_children(&mut self, parent: NodeId, lower: Node, upper: Node) -> [NodeId; 2] {
        let a = self.nodes.len();
        self.nodes.push(lower);
        self.nodes.push(upper);
        self.nodes[parent].children = Some([a, a + 1]);
        [a, a + 1]
    }

    /// Node ids of `level` in left-to-right order.
    pub fn level_nodes(&self, level: usize) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let n = &self.nodes[id];
            if n.level == level {
                out.push(id);
            } else if let Some([lo, hi]) = n.children {
                stack.push(hi);
                stack.push(lo);
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// True if every reachable node has a determined sign.
    pub fn is_tessellated(&self) -> bool {
        self.nodes[0].sign.is_determined()
    }

    /// Sets the coordinates of levels `> level` to the midpoints of their pairs.
    pub fn fill_lower_midpoints(&self, level: usize, p: &mut Point) -> Result<()> {
        for m in (level + 1..self.dim).rev() {
            let a = self.directions[m].index();
            let lo = self.pairs[m].lower.eval(p)?;
            let hi = self.pairs[m].upper.eval(p)?;
            p[a] = 0.5 * (lo + hi);
        }
        Ok(())
    }

    /// Splits along `a0`, the height function of the isocontour through node `w`.
    ///
    /// Returns the part below and the part above `a0`.
    pub fn split(
        &self,
        w: NodeId,
        a0: &HeightFunction,
        level_set: &LevelSet,
        cfg: &SignConfig,
    ) -> Result<(NestedBody, NestedBody)> {
        let node = &self.nodes[w];
        let children = node.children.ok_or_else(|| {
            Error::StructuralInvariantViolation("split node has no children".into())
        })?;
        let cs = [self.nodes[children[0]].sign, self.nodes[children[1]].sign];
        let opposite = matches!(cs, [Sign::Minus, Sign::Plus] | [Sign::Plus, Sign::Minus]);
        if node.sign != Sign::Indeterminate || !opposite {
            return Err(Error::StructuralInvariantViolation(format!(
                "split requires an indeterminate node with opposite children, got {:?} / {:?}",
                node.sign, cs
            )));
        }
        Ok((
            self.rebuild(w, Side::Down, a0, level_set, cfg)?,
            self.rebuild(w, Side::Up, a0, level_set, cfg)?,
        ))
    }

    fn rebuild(
        &self,
        w: NodeId,
        keep: Side,
        a0: &HeightFunction,
        level_set: &LevelSet,
        cfg: &SignConfig,
    ) -> Result<NestedBody> {
        let level = self.nodes[w].level;
        let mut out = NestedBody {
            dim: self.dim,
            directions: self.directions.clone(),
            pairs: self.pairs.clone(),
            nodes: Vec::with_capacity(self.nodes.len()),
            surface_faces: self.surface_faces.clone(),
        };
        match keep {
            Side::Down => out.pairs[level].upper = a0.clone(),
            Side::Up => out.pairs[level].lower = a0.clone(),
        }
        // Point on the cut, shared by all mirrored pieces up to the pinned coordinates.
        let mut cut = self.nodes[w].support.center();
        out.fill_lower_midpoints(level, &mut cut)?;
        let h = self.directions[level].index();
        cut[h] = a0.eval(&cut)?;
        let ctx = RebuildCtx {
            w,
            keep,
            level,
            cut,
            level_set,
            cfg,
        };
        self.copy_node(0, &ctx, &mut out);
        Ok(out)
    }

    fn copy_node(&self, id: NodeId, ctx: &RebuildCtx, out: &mut NestedBody) -> NodeId {
        let node = &self.nodes[id];
        let new_id = out.nodes.len();
        out.nodes.push(Node {
            level: node.level,
            sign: node.sign,
            children: None,
            support: node.support,
        });
        let Some([lo, hi]) = node.children else {
            return new_id;
        };
        if node.level == ctx.level {
            if !(id == ctx.w || node.sign == Sign::Indeterminate) {
                return new_id;
            }
            let kept = match ctx.keep {
                Side::Down => lo,
                Side::Up => hi,
            };
            let kept_new = self.copy_node(kept, ctx, out);
            let h = self.directions[ctx.level];
            let sign = if id == ctx.w {
                Sign::Zero
            } else {
                let mut p = ctx.cut;
                for i in 0..3 {
                    if !node.support.active[i] {
                        p[i] = node.support.lower[i];
                    }
                }
                ctx.cfg.classify(ctx.level_set.value(&p))
            };
            let other = match ctx.keep {
                Side::Down => Side::Up,
                Side::Up => Side::Down,
            };
            let zero = out.nodes.len();
            out.nodes.push(Node {
                level: node.level + 1,
                sign,
                children: None,
                support: node.support.face(h, other).unwrap_or(node.support),
            });
            out.nodes[new_id].children = Some(match ctx.keep {
                Side::Down => [kept_new, zero],
                Side::Up => [zero, kept_new],
            });
            if id == ctx.w {
                out.nodes[new_id].sign = out.nodes[kept_new].sign;
            }
        } else {
            let a = self.copy_node(lo, ctx, out);
            let b = self.copy_node(hi, ctx, out);
            out.nodes[new_id].children = Some([a, b]);
        }
        new_id
    }

    /// Structured text dump: signs, level directions and bracket values at the root center.
    pub fn debug_text(&self) -> String {
        let mut s = String::new();
        let names: Vec<&str> = self.directions.iter().map(|a| a.name()).collect();
        let _ = writeln!(s, "{{");
        let _ = writeln!(s, "  \"dim\": {},", self.dim);
        let _ = writeln!(s, "  \"directions\": {:?},", names);
        let mut p = self.nodes[0].support.center();
        let mut brackets = Vec::new();
        for m in (0..self.dim).rev() {
            let a = self.directions[m].index();
            let lo = self.pairs[m].lower.eval(&p).unwrap_or(f64::NAN);
            let hi = self.pairs[m].upper.eval(&p).unwrap_or(f64::NAN);
            brackets.push(format!("[{lo:?}, {hi:?}]"));
            p[a] = 0.5 * (lo + hi);
        }
        brackets.reverse();
        let _ = writeln!(s, "  \"brackets\": [{}],", brackets.join(", "));
        let _ = writeln!(s, "  \"nodes\": [");
        let ids: Vec<NodeId> = (0..=self.depth()).flat_map(|l| self.level_nodes(l)).collect();
        for (k, id) in ids.iter().enumerate() {
            let n = &self.nodes[*id];
            let comma = if k + 1 == ids.len() { "" } else { "," };
            let _ = writeln!(
                s,
                "    {{\"id\": {}, \"level\": {}, \"sign\": \"{}\", \"children\": {}}}{}",
                id,
                n.level,
                n.sign.symbol(),
                match n.children {
                    Some([a, b]) => format!("[{a}, {b}]"),
                    None => "[]".into(),
                },
                comma
            );
        }
        let _ = writeln!(s, "  ]");
        let _ = write!(s, "}}");
        s
    }
}

struct RebuildCtx<'a> {
    w: NodeId,
    keep: Side,
    level: usize,
    cut: Point,
    level_set: &'a LevelSet,
    cfg: &'a SignConfig,
}
