//! Tensor Bézier interpolation and sign estimation on bodies.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::topology::{Axis, Body, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Minus,
    Zero,
    Plus,
    Indeterminate,
}

impl Sign {
    pub fn is_determined(self) -> bool {
        self != Sign::Indeterminate
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Minus => "-",
            Sign::Zero => "0",
            Sign::Plus => "+",
            Sign::Indeterminate => "±",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignConfig {
    /// Relative precision threshold: ε = epsilon · (1 + max |q_i|).
    pub epsilon: f64,
    pub degree: usize,
}

impl Default for SignConfig {
    fn default() -> Self {
        SignConfig {
            epsilon: 1e-10,
            degree: 3,
        }
    }
}

impl SignConfig {
    fn threshold(&self, scale: f64) -> f64 {
        self.epsilon * (1.0 + scale)
    }

    /// Sign of a single value.
    pub fn classify(&self, v: f64) -> Sign {
        if v.is_nan() {
            return Sign::Indeterminate;
        }
        let eps = self.threshold(v.abs());
        if v < -eps {
            Sign::Minus
        } else if v > eps {
            Sign::Plus
        } else {
            Sign::Zero
        }
    }
}

pub const MAX_DEGREE: usize = 5;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein_basis(n: usize, j: usize, t: f64) -> f64 {
    binomial(n, j) * t.powi(j as i32) * (1.0 - t).powi((n - j) as i32)
}

/// Inverse of the collocation matrix `C[i][j] = B_j^n(i/n)`, row-major.
fn inverse_collocation(n: usize) -> &'static [f64] {
    static CACHE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| (0..=MAX_DEGREE).map(invert_collocation).collect());
    &all[n]
}

fn invert_collocation(n: usize) -> Vec<f64> {
    let m = n + 1;
    let mut a = vec![0.0; m * m];
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        let t = if n == 0 { 0.0 } else { i as f64 / n as f64 };
        for j in 0..m {
            a[i * m + j] = bernstein_basis(n, j, t);
        }
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&r, &s| a[r * m + col].abs().total_cmp(&a[s * m + col].abs()))
            .unwrap();
        for k in 0..m {
            a.swap(col * m + k, piv * m + k);
            inv.swap(col * m + k, piv * m + k);
        }
        let d = a[col * m + col];
        for k in 0..m {
            a[col * m + k] /= d;
            inv[col * m + k] /= d;
        }
        for r in 0..m {
            if r != col {
                let f = a[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
    }
    inv
}

/// Tensor-product Bézier patch over the active axes of a body.
#[derive(Debug, Clone)]
pub struct BezierPatch {
    pub domain: Body,
    pub degree: usize,
    pub axes: Vec<Axis>,
    /// Control points, first axis varying slowest.
    pub control: Vec<f64>,
}

impl BezierPatch {
    pub fn min_control(&self) -> f64 {
        self.control.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_control(&self) -> f64 {
        self.control.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Evaluates the patch at an ambient point.
    pub fn eval(&self, x: &Point) -> f64 {
        let n = self.degree;
        let basis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| {
                let i = a.index();
                let t = (x[i] - self.domain.lower[i]) / (self.domain.upper[i] - self.domain.lower[i]);
                (0..=n).map(|j| bernstein_basis(n, j, t)).collect()
            })
            .collect();
        let mut sum = 0.0;
        for (flat, q) in self.control.iter().enumerate() {
            let mut w = 1.0;
            let mut rem = flat;
            for b in basis.iter().rev() {
                w *= b[rem % (n + 1)];
                rem /= n + 1;
            }
            sum += w * q;
        }
        sum
    }
}

/// Interpolates `f` at the equidistant `(n+1)^dim` grid of `k`, boundary included.
pub fn interpolate(f: impl Fn(&Point) -> f64, k: &Body, degree: usize) -> Result<BezierPatch> {
    if degree == 0 || degree > MAX_DEGREE {
        return Err(Error::InterpolationFailure(format!(
            "degree {degree} outside 1..={MAX_DEGREE}"
        )));
    }
    let axes: Vec<Axis> = k.active_axes().collect();
    let m = degree + 1;
    let total = m.pow(axes.len() as u32);
    let mut values = Vec::with_capacity(total);
    for flat in 0..total {
        let mut p = k.lower;
        let mut rem = flat;
        for a in axes.iter().rev() {
            let i = a.index();
            let t = (rem % m) as f64 / degree as f64;
            p[i] = k.lower[i] + t * (k.upper[i] - k.lower[i]);
            rem /= m;
        }
        let v = f(&p);
        if !v.is_finite() {
            return Err(Error::InterpolationFailure(format!(
                "non-finite sample {v} at {p:?}"
            )));
        }
        values.push(v);
    }
    let inv = inverse_collocation(degree);
    let mut buf = vec![0.0; m];
    for axis_pos in 0..axes.len() {
        let stride = m.pow((axes.len() - 1 - axis_pos) as u32);
        for start in 0..total {
            if (start / stride) % m != 0 {
                continue;
            }
            for (i, b) in buf.iter_mut().enumerate() {
                *b = (0..m).map(|j| inv[i * m + j] * values[start + j * stride]).sum();
            }
            for (i, b) in buf.iter().enumerate() {
                values[start + i * stride] = *b;
            }
        }
    }
    Ok(BezierPatch {
        domain: *k,
        degree,
        axes,
        control: values,
    })
}

/// Four-case sign rule on the control points.
pub fn estimate_sign(patch: &BezierPatch, cfg: &SignConfig) -> Sign {
    let lo = patch.min_control();
    let hi = patch.max_control();
    let eps = cfg.threshold(lo.abs().max(hi.abs()));
    match (lo < -eps, hi > eps) {
        (true, false) => Sign::Minus,
        (false, false) => Sign::Zero,
        (false, true) => Sign::Plus,
        (true, true) => Sign::Indeterminate,
    }
}

/// Sign of `f` on `k`; points are classified directly.
pub fn body_sign(f: impl Fn(&Point) -> f64, k: &Body, cfg: &SignConfig) -> Result<Sign> {
    if k.dim() == 0 {
        let v = f(&k.lower);
        if !v.is_finite() {
            return Err(Error::InterpolationFailure(format!(
                "non-finite sample {v} at {:?}",
                k.lower
            )));
        }
        return Ok(cfg.classify(v));
    }
    Ok(estimate_sign(&interpolate(f, k, cfg.degree)?, cfg))
}
