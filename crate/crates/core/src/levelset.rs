//! Level-set functions with first and second derivatives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mapping::MappingComposition;
use crate::topology::{Axis, Point};

pub type Mat3 = [[f64; 3]; 3];

/// A scalar field on the first `dim()` coordinates of a point.
///
/// Coordinates at indices `>= dim()` are ignored, and derivative entries for
/// them are zero.
pub trait Field: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Point) -> f64;
    fn gradient(&self, x: &Point) -> (f64, Point);
    fn hessian(&self, x: &Point) -> Result<(f64, Point, Mat3)>;
}

/// Shared handle to a level-set function.
#[derive(Clone)]
pub struct LevelSet(Arc<dyn Field>);

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn check(x: &Point, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteEvaluation(x[0], x[1], x[2]))
    }
}

impl LevelSet {
    pub fn from_field(field: impl Field + 'static) -> Self {
        LevelSet(Arc::new(field))
    }

    pub fn parse(source: &str) -> Result<Self> {
        Ok(Self::from_expr(Expr::parse(source)?))
    }

    pub fn from_expr(expr: Expr) -> Self {
        Self::from_field(ExprField { expr })
    }

    /// `n·x - offset`.
    pub fn plane(normal: Point, offset: f64) -> Self {
        Self::from_field(Affine {
            dim: 3,
            value: -offset,
            gradient: normal,
            center: [0.0; 3],
        })
    }

    /// `|x - c|² - r²`.
    pub fn sphere(center: Point, radius: f64) -> Self {
        Self::from_field(Sphere { center, radius })
    }

    /// `(sqrt(x² + y²) - R)² + z² - r²`, centered at the origin around the z axis.
    pub fn torus(major: f64, minor: f64) -> Self {
        let src = format!("(sqrt(x^2 + y^2) - {major:?})^2 + z^2 - {minor:?}^2");
        Self::parse(&src).expect("torus expression")
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::from_field(Affine {
            dim,
            value,
            gradient: [0.0; 3],
            center: [0.0; 3],
        })
    }

    /// First-order Taylor expansion of `self` at `center`.
    pub fn linearized(&self, center: &Point) -> Result<Self> {
        let (v, g) = self.gradient(center)?;
        Ok(Self::from_field(Affine {
            dim: self.dim(),
            value: v,
            gradient: g,
            center: *center,
        }))
    }

    /// The partial derivative `∂_h self`.
    pub fn derivative(&self, h: Axis) -> Self {
        Self::from_field(DerivativeField {
            base: self.clone(),
            axis: h,
        })
    }

    pub fn negated(&self) -> Self {
        Self::from_field(Negated { base: self.clone() })
    }

    /// `self ∘ carrier`, a level set on the carrier's reference domain.
    pub fn transformed(&self, carrier: MappingComposition) -> Self {
        Self::from_field(Transformed {
            base: self.clone(),
            carrier,
        })
    }

    pub fn field(&self) -> &dyn Field {
        &*self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Unchecked value, used on hot paths.
    #[inline]
    pub fn value(&self, x: &Point) -> f64 {
        self.0.value(x)
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        check(x, self.0.value(x))
    }

    pub fn gradient(&self, x: &Point) -> Result<(f64, Point)> {
        let (v, g) = self.0.gradient(x);
        check(x, v)?;
        for gi in g {
            check(x, gi)?;
        }
        Ok((v, g))
    }

    pub fn hessian(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        let (v, g, h) = self.0.hessian(x)?;
        check(x, v)?;
        for gi in g {
            check(x, gi)?;
        }
        for hij in h.iter().flatten() {
            check(x, *hij)?;
        }
        Ok((v, g, h))
    }
}

#[derive(Debug)]
struct ExprField {
    expr: Expr,
}

impl Field for ExprField {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, x: &Point) -> f64 {
        self.expr.eval(x)
    }
    fn gradient(&self, x: &Point) -> (f64, Point) {
        let d = self.expr.eval_gradient(x);
        (d.v, d.g)
    }
    fn hessian(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        let d = self.expr.eval_hessian(x);
        Ok((d.v, d.g, d.h))
    }
}

#[derive(Debug)]
struct Affine {
    dim: usize,
    value: f64,
    gradient: Point,
    center: Point,
}

impl Field for Affine {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Point) -> f64 {
        let mut v = self.value;
        for i in 0..self.dim {
            v += self.gradient[i] * (x[i] - self.center[i]);
        }
        v
    }
    fn gradient(&self, x: &Point) -> (f64, Point) {
        (self.value(x), self.gradient)
    }
    fn hessian(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        Ok((self.value(x), self.gradient, [[0.0; 3]; 3]))
    }
}

#[derive(Debug)]
struct Sphere {
    center: Point,
    radius: f64,
}

impl Field for Sphere {
    fn dim(&self) -> usize {
        3
    }
    fn value(&self, x: &Point) -> f64 {
        (0..3).map(|i| (x[i] - self.center[i]).powi(2)).sum::<f64>() - self.radius * self.radius
    }
    fn gradient(&self, x: &Point) -> (f64, Point) {
        (
            self.value(x),
            std::array::from_fn(|i| 2.0 * (x[i] - self.center[i])),
        )
    }
    fn hessian(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        let (v, g) = self.gradient(x);
        let mut h = [[0.0; 3]; 3];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 2.0;
        }
        Ok((v, g, h))
    }
}

#[derive(Debug)]
struct DerivativeField {
    base: LevelSet,
    axis: Axis,
}

impl Field for DerivativeField {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &Point) -> f64 {
        self.base.0.gradient(x).1[self.axis.index()]
    }
    fn gradient(&self, x: &Point) -> (f64, Point) {
        match self.base.0.hessian(x) {
            Ok((_, g, h)) => (g[self.axis.index()], h[self.axis.index()]),
            Err(_) => (f64::NAN, [f64::NAN; 3]),
        }
    }
    fn hessian(&self, _x: &Point) -> Result<(f64, Point, Mat3)> {
        Err(Error::CapabilityMissing("third derivatives"))
    }
}

#[derive(Debug)]
struct Negated {
    base: LevelSet,
}

impl Field for Negated {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &Point) -> f64 {
        -self.base.0.value(x)
    }
    fn gradient(&self, x: &Point) -> (f64, Point) {
        let (v, g) = self.base.0.gradient(x);
        (-v, g.map(|gi| -gi))
    }
    fn hessian(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        let (v, g, h) = self.base.0.hessian(x)?;
        Ok((-v, g.map(|gi| -gi), h.map(|r| r.map(|hij| -hij))))
    }
}

/// `β ∘ T` for a mapping composition `T` from a reference hypercube into ℝ³.
#[derive(Debug)]
struct Transformed {
    base: LevelSet,
    carrier: MappingComposition,
}

impl Field for Transformed {
    fn dim(&self) -> usize {
        self.carrier.input_dim()
    }
    fn value(&self, x: &Point) -> f64 {
        match self.carrier.eval(x) {
            Ok(p) => self.base.0.value(&p),
            Err(_) => f64::NAN,
        }
    }
    fn gradient(&self, x: &Point) -> (f64, Point) {
        let Ok((p, jac)) = self.carrier.jacobian(x) else {
            return (f64::NAN, [f64::NAN; 3]);
        };
        let (v, g) = self.base.0.gradient(&p);
        let k = self.dim();
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate().take(k) {
            *o = (0..3).map(|i| g[i] * jac[i][j]).sum();
        }
        (v, out)
    }
    fn hessian(&self, x: &Point) -> Result<(f64, Point, Mat3)> {
        let (p, jac, hs) = self.carrier.hessians(x)?;
        let (v, g, hb) = self.base.0.hessian(&p)?;
        let k = self.dim();
        let mut grad = [0.0; 3];
        let mut hess = [[0.0; 3]; 3];
        for a in 0..k {
            grad[a] = (0..3).map(|i| g[i] * jac[i][a]).sum();
            for b in 0..k {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += jac[i][a] * hb[i][j] * jac[j][b];
                    }
                    s += g[i] * hs[i][a][b];
                }
                hess[a][b] = s;
            }
        }
        Ok((v, grad, hess))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        let x = LevelSet::parse("x").unwrap();
        assert_eq!(x.eval(&[0.5, 0.0, 0.0]).unwrap(), 0.5);
        let s = LevelSet::parse("x^2+y^2+z^2-1").unwrap();
        assert_eq!(s.eval(&[0.0; 3]).unwrap(), -1.0);
        assert_eq!(LevelSet::sphere([0.0; 3], 1.0).eval(&[0.0; 3]).unwrap(), -1.0);
    }

    #[test]
    fn singular_expression_is_reported() {
        let f = LevelSet::parse("1/x").unwrap();
        assert!(matches!(
            f.eval(&[0.0; 3]),
            Err(Error::NonFiniteEvaluation(..))
        ));
    }

    #[test]
    fn derivative_is_gradient_component() {
        let a = LevelSet::parse("x*y + sin(z)").unwrap();
        let d = a.derivative(Axis::Z);
        let p = [0.3, -0.2, 0.7];
        assert_eq!(d.eval(&p).unwrap(), a.gradient(&p).unwrap().1[2]);
        let (_, g) = d.gradient(&p).unwrap();
        assert_eq!(g, [0.0, 0.0, -(0.7f64).sin()]);
        assert!(matches!(d.hessian(&p), Err(Error::CapabilityMissing(_))));
    }

    #[test]
    fn torus_and_plane() {
        let t = LevelSet::torus(0.6, 0.3);
        assert!(t.eval(&[0.6, 0.0, 0.0]).unwrap() < 0.0);
        assert!((t.eval(&[0.9, 0.0, 0.0]).unwrap()).abs() < 1e-15);
        let p = LevelSet::plane([0.0, 0.0, 1.0], 0.5);
        assert_eq!(p.eval(&[0.0, 0.0, 0.5]).unwrap(), 0.0);
    }
}
