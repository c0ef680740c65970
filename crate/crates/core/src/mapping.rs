//! Nested mappings from reference hypercubes onto tiles, face embeddings and
//! their compositions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::levelset::{LevelSet, Mat3};
use crate::topology::{Axis, Body, HeightPair, NestedBody, Point, Side};

const SINGULAR: f64 = 1e-14;

pub(crate) fn implicit_first(grad: &Point, h: Axis, t: Axis) -> Result<f64> {
    let gh = grad[h.index()];
    if !(gh.abs() >= SINGULAR) {
        return Err(Error::DerivativeSingular(gh.abs()));
    }
    Ok(-grad[t.index()] / gh)
}

pub(crate) fn implicit_second(grad: &Point, hess: &Mat3, h: Axis, t1: Axis, t2: Axis) -> Result<f64> {
    let (h, i, j) = (h.index(), t1.index(), t2.index());
    let gh = grad[h];
    if !(gh.abs() >= SINGULAR) {
        return Err(Error::DerivativeSingular(gh.abs()));
    }
    let ai = -grad[i] / gh;
    let aj = -grad[j] / gh;
    Ok(-(hess[i][j] + hess[i][h] * aj + hess[j][h] * ai + hess[h][h] * ai * aj) / gh)
}

/// `∂_t a` for the height function `a` of the isocontour through `x` in direction `h`.
pub fn height_first_derivs(ls: &LevelSet, x: &Point, h: Axis, t: Axis) -> Result<f64> {
    let (_, g) = ls.gradient(x)?;
    implicit_first(&g, h, t)
}

/// `∂_{t1 t2} a` for the height function `a` of the isocontour through `x` in direction `h`.
pub fn height_second_derivs(ls: &LevelSet, x: &Point, h: Axis, t1: Axis, t2: Axis) -> Result<f64> {
    let (_, g, hs) = ls.hessian(x)?;
    implicit_second(&g, &hs, h, t1, t2)
}

/// Recursive map from `[-1, 1]^d` onto a tile.
///
/// Coordinates are produced in `order`; the coordinate along `order[j]` is
/// interpolated affinely between the bounds of `pairs[j]`, which depend on the
/// coordinates already produced. Reference and ambient axes coincide.
#[derive(Debug, Clone)]
pub struct NestedMapping {
    order: Vec<Axis>,
    pairs: Vec<HeightPair>,
}

/// Jacobian `J[i][k] = ∂x_i/∂x̃_k`, zero-padded to 3×3.
pub type Jacobian = Mat3;

/// `H[i][k][l] = ∂²x_i/∂x̃_k∂x̃_l`.
pub type Hessians = [Mat3; 3];

impl NestedMapping {
    pub fn from_tile(tile: &NestedBody) -> Result<NestedMapping> {
        if !tile.is_tessellated() {
            return Err(Error::NotTessellated);
        }
        let d = tile.dim();
        Ok(NestedMapping {
            order: (0..d).rev().map(|l| tile.directions()[l]).collect(),
            pairs: (0..d).rev().map(|l| tile.pair(l).clone()).collect(),
        })
    }

    pub fn from_box(b: &Body) -> NestedMapping {
        let order: Vec<Axis> = b.active_axes().collect();
        let pairs = order
            .iter()
            .map(|a| HeightPair {
                lower: crate::topology::HeightFunction::Constant(b.lower[a.index()]),
                upper: crate::topology::HeightFunction::Constant(b.upper[a.index()]),
            })
            .collect();
        NestedMapping { order, pairs }
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    /// Axis of the outermost level (the root height direction).
    pub fn root_axis(&self) -> Axis {
        *self.order.last().expect("non-empty mapping")
    }

    pub fn order(&self) -> &[Axis] {
        &self.order
    }

    /// Bounds along each axis of [`order`](Self::order).
    pub fn pairs(&self) -> &[HeightPair] {
        &self.pairs
    }

    pub fn eval(&self, xt: &Point) -> Result<Point> {
        let mut x = [0.0; 3];
        for (a, pair) in self.order.iter().zip(&self.pairs) {
            let lo = pair.lower.eval(&x)?;
            let hi = pair.upper.eval(&x)?;
            let t = xt[a.index()];
            x[a.index()] = 0.5 * ((hi - lo) * t + (hi + lo));
        }
        Ok(x)
    }

    /// Image point and `J_M = Π ½(m↑ - m↓)`, without derivatives.
    pub fn jacobian_det(&self, xt: &Point) -> Result<(Point, f64)> {
        let mut x = [0.0; 3];
        let mut det = 1.0;
        for (a, pair) in self.order.iter().zip(&self.pairs) {
            let lo = pair.lower.eval(&x)?;
            let hi = pair.upper.eval(&x)?;
            let t = xt[a.index()];
            x[a.index()] = 0.5 * ((hi - lo) * t + (hi + lo));
            det *= 0.5 * (hi - lo);
        }
        Ok((x, det))
    }

    pub fn jacobian(&self, xt: &Point) -> Result<(Point, Jacobian)> {
        let mut x = [0.0; 3];
        let mut jac = [[0.0; 3]; 3];
        for (a, pair) in self.order.iter().zip(&self.pairs) {
            let (lo, glo) = pair.lower.eval_grad(&x)?;
            let (hi, ghi) = pair.upper.eval_grad(&x)?;
            let ai = a.index();
            let t = xt[ai];
            let mut row = [0.0; 3];
            for m in 0..3 {
                let phi_m = 0.5 * ((1.0 + t) * ghi[m] + (1.0 - t) * glo[m]);
                if phi_m != 0.0 {
                    for k in 0..3 {
                        row[k] += phi_m * jac[m][k];
                    }
                }
            }
            row[ai] += 0.5 * (hi - lo);
            jac[ai] = row;
            x[ai] = 0.5 * ((hi - lo) * t + (hi + lo));
        }
        Ok((x, jac))
    }

    pub fn hessians(&self, xt: &Point) -> Result<(Point, Jacobian, Hessians)> {
        let mut x = [0.0; 3];
        let mut jac = [[0.0; 3]; 3];
        let mut hes = [[[0.0; 3]; 3]; 3];
        for (a, pair) in self.order.iter().zip(&self.pairs) {
            let (lo, glo, hlo) = pair.lower.eval_hess(&x)?;
            let (hi, ghi, hhi) = pair.upper.eval_hess(&x)?;
            let ai = a.index();
            let t = xt[ai];
            let phi_m: Point = std::array::from_fn(|m| 0.5 * ((1.0 + t) * ghi[m] + (1.0 - t) * glo[m]));
            let phi_mt: Point = std::array::from_fn(|m| 0.5 * (ghi[m] - glo[m]));
            let mut row = [0.0; 3];
            let mut h = [[0.0; 3]; 3];
            for k in 0..3 {
                for m in 0..3 {
                    row[k] += phi_m[m] * jac[m][k];
                }
            }
            row[ai] += 0.5 * (hi - lo);
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for m in 0..3 {
                        for n in 0..3 {
                            let phi_mn = 0.5 * ((1.0 + t) * hhi[m][n] + (1.0 - t) * hlo[m][n]);
                            s += phi_mn * jac[m][k] * jac[n][l];
                        }
                        s += phi_m[m] * hes[m][k][l];
                        if l == ai {
                            s += phi_mt[m] * jac[m][k];
                        }
                        if k == ai {
                            s += phi_mt[m] * jac[m][l];
                        }
                    }
                    h[k][l] = s;
                }
            }
            jac[ai] = row;
            hes[ai] = h;
            x[ai] = 0.5 * ((hi - lo) * t + (hi + lo));
        }
        Ok((x, jac, hes))
    }
}

/// Map from `[-1, 1]^(k-1)` onto the face `x_axis = ±1` of `[-1, 1]^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceEmbedding {
    pub target_dim: usize,
    pub axis: Axis,
    pub side: Side,
}

impl FaceEmbedding {
    pub fn new(target_dim: usize, axis: Axis, side: Side) -> FaceEmbedding {
        assert!(axis.index() < target_dim, "pinned axis outside target");
        FaceEmbedding {
            target_dim,
            axis,
            side,
        }
    }

    /// Target index receiving input coordinate `j`.
    fn slot(&self, j: usize) -> usize {
        if j < self.axis.index() {
            j
        } else {
            j + 1
        }
    }

    pub fn eval(&self, u: &Point) -> Point {
        let mut x = [0.0; 3];
        for j in 0..self.target_dim - 1 {
            x[self.slot(j)] = u[j];
        }
        x[self.axis.index()] = self.side.unit();
        x
    }

    pub fn jacobian(&self) -> Jacobian {
        let mut jac = [[0.0; 3]; 3];
        for j in 0..self.target_dim - 1 {
            jac[self.slot(j)][j] = 1.0;
        }
        jac
    }
}

#[derive(Debug, Clone)]
pub enum ChainElement {
    Nested(Arc<NestedMapping>),
    Embed(FaceEmbedding),
}

impl ChainElement {
    fn input_dim(&self) -> usize {
        match self {
            ChainElement::Nested(m) => m.dim(),
            ChainElement::Embed(e) => e.target_dim - 1,
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            ChainElement::Nested(m) => m.dim(),
            ChainElement::Embed(e) => e.target_dim,
        }
    }
}

/// Chain of nested mappings and face embeddings, stored in application order
/// (the first element acts on the reference point).
#[derive(Debug, Clone)]
pub struct MappingComposition {
    chain: Vec<ChainElement>,
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|m| a[i][m] * b[m][j]).sum()))
}

impl MappingComposition {
    pub fn new(chain: Vec<ChainElement>) -> Result<MappingComposition> {
        if chain.is_empty() {
            return Err(Error::InvalidConfig("empty mapping chain".into()));
        }
        for w in chain.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::InvalidConfig(format!(
                    "chain dimensions {} -> {} do not match",
                    w[0].output_dim(),
                    w[1].input_dim()
                )));
            }
        }
        Ok(MappingComposition { chain })
    }

    pub fn single(m: NestedMapping) -> MappingComposition {
        MappingComposition {
            chain: vec![ChainElement::Nested(Arc::new(m))],
        }
    }

    /// `outer ∘ self`.
    pub fn then(&self, outer: &MappingComposition) -> Result<MappingComposition> {
        let mut chain = self.chain.clone();
        chain.extend(outer.chain.iter().cloned());
        MappingComposition::new(chain)
    }

    pub fn elements(&self) -> &[ChainElement] {
        &self.chain
    }

    pub fn input_dim(&self) -> usize {
        self.chain[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.chain.last().unwrap().output_dim()
    }

    pub fn eval(&self, xt: &Point) -> Result<Point> {
        let mut x = *xt;
        for el in &self.chain {
            x = match el {
                ChainElement::Nested(m) => m.eval(&x)?,
                ChainElement::Embed(e) => e.eval(&x),
            };
        }
        Ok(x)
    }

    pub fn jacobian(&self, xt: &Point) -> Result<(Point, Jacobian)> {
        let mut x = *xt;
        let mut jac: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }));
        for el in &self.chain {
            let (y, j) = match el {
                ChainElement::Nested(m) => m.jacobian(&x)?,
                ChainElement::Embed(e) => (e.eval(&x), e.jacobian()),
            };
            jac = matmul(&j, &jac);
            x = y;
        }
        Ok((x, jac))
    }

    /// Image point, Jacobian and component Hessians of the whole chain.
    pub fn hessians(&self, xt: &Point) -> Result<(Point, Jacobian, Hessians)> {
        let mut x = *xt;
        let mut jac: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }));
        let mut hes = [[[0.0; 3]; 3]; 3];
        for el in &self.chain {
            let (y, jg, hg) = match el {
                ChainElement::Nested(m) => m.hessians(&x)?,
                ChainElement::Embed(e) => (e.eval(&x), e.jacobian(), [[[0.0; 3]; 3]; 3]),
            };
            let mut next = [[[0.0; 3]; 3]; 3];
            for (i, ni) in next.iter_mut().enumerate() {
                for k in 0..3 {
                    for l in 0..3 {
                        let mut s = 0.0;
                        for m in 0..3 {
                            s += jg[i][m] * hes[m][k][l];
                            for n in 0..3 {
                                s += hg[i][m][n] * jac[m][k] * jac[n][l];
                            }
                        }
                        ni[k][l] = s;
                    }
                }
            }
            jac = matmul(&jg, &jac);
            hes = next;
            x = y;
        }
        Ok((x, jac, hes))
    }

    /// `sqrt(det(DTᵀ DT))` from the assembled chain Jacobian.
    pub fn gram_det(&self, xt: &Point) -> Result<(Point, f64)> {
        let (x, jac) = self.jacobian(xt)?;
        Ok((x, gram(&jac, self.input_dim(), self.output_dim())))
    }

    /// Image point and measure density.
    ///
    /// Leading square nested mappings contribute their derivative-free
    /// determinant; the remainder of the chain contributes a Gram determinant.
    pub fn density(&self, xt: &Point) -> Result<(Point, f64)> {
        let mut x = *xt;
        let mut factor = 1.0;
        let split = self
            .chain
            .iter()
            .position(|el| matches!(el, ChainElement::Embed(_)))
            .unwrap_or(self.chain.len());
        for el in &self.chain[..split] {
            let ChainElement::Nested(m) = el else { unreachable!() };
            let (y, d) = m.jacobian_det(&x)?;
            factor *= d;
            x = y;
        }
        if split == self.chain.len() {
            return Ok((x, factor.abs()));
        }
        let rest = MappingComposition {
            chain: self.chain[split..].to_vec(),
        };
        let (y, g) = rest.gram_det(&x)?;
        Ok((y, factor.abs() * g))
    }
}

/// Gram determinant of a `rows × cols` Jacobian.
pub fn gram(jac: &Mat3, cols: usize, rows: usize) -> f64 {
    let mut g = [[0.0; 3]; 3];
    for a in 0..cols {
        for b in 0..cols {
            g[a][b] = (0..rows).map(|i| jac[i][a] * jac[i][b]).sum();
        }
    }
    let det = match cols {
        0 => 1.0,
        1 => g[0][0],
        2 => g[0][0] * g[1][1] - g[0][1] * g[1][0],
        _ => {
            g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
                + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0])
        }
    };
    det.max(0.0).sqrt()
}

/// Determinant of the leading `k × k` block.
pub fn det(jac: &Mat3, k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => jac[0][0],
        2 => jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0],
        _ => {
            jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
                - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
                + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0])
        }
    }
}
