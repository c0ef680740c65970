//! Gauss–Legendre rules on `[-1, 1]^k`.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::topology::Point;

pub const MAX_ORDER: usize = 32;

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> Result<&'static (Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    if n == 0 || n > MAX_ORDER {
        return Err(Error::OrderUnsupported(n));
    }
    let all = CACHE.get_or_init(|| (0..=MAX_ORDER).map(compute).collect());
    Ok(&all[n])
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

fn compute(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Tensor-product rule on `[-1, 1]^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRule {
    pub dim: usize,
    pub order: usize,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

pub fn tensor_gauss(n: usize, k: usize) -> Result<BaseRule> {
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidConfig(format!("dimension {k} outside 1..=3")));
    }
    let (x, w) = gauss_legendre(n)?;
    let total = n.pow(k as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut p = [0.0; 3];
        let mut wt = 1.0;
        let mut rem = flat;
        for a in (0..k).rev() {
            p[a] = x[rem % n];
            wt *= w[rem % n];
            rem /= n;
        }
        nodes.push(p);
        weights.push(wt);
    }
    Ok(BaseRule {
        dim: k,
        order: n,
        nodes,
        weights,
    })
}

impl BaseRule {
    /// Copies of the rule on the `s^k` uniform sub-cubes of `[-1, 1]^k`.
    pub fn refined(&self, s: usize) -> BaseRule {
        if s <= 1 {
            return self.clone();
        }
        let k = self.dim;
        let h = 2.0 / s as f64;
        let scale = (h / 2.0).powi(k as i32);
        let cells = s.pow(k as u32);
        let mut nodes = Vec::with_capacity(cells * self.nodes.len());
        let mut weights = Vec::with_capacity(cells * self.nodes.len());
        for c in 0..cells {
            let mut lower = [0.0; 3];
            let mut rem = c;
            for a in (0..k).rev() {
                lower[a] = -1.0 + h * (rem % s) as f64;
                rem /= s;
            }
            for (p, w) in self.nodes.iter().zip(&self.weights) {
                let mut q = [0.0; 3];
                for a in 0..k {
                    q[a] = lower[a] + 0.5 * h * (p[a] + 1.0);
                }
                nodes.push(q);
                weights.push(w * scale);
            }
        }
        BaseRule {
            dim: k,
            order: self.order,
            nodes,
            weights,
        }
    }

    /// The rule mapped onto the box `[lo, hi]` of the reference cube.
    pub fn on_box(&self, lo: &Point, hi: &Point) -> BaseRule {
        let k = self.dim;
        let scale: f64 = (0..k).map(|a| 0.5 * (hi[a] - lo[a])).product();
        BaseRule {
            dim: k,
            order: self.order,
            nodes: self
                .nodes
                .iter()
                .map(|p| {
                    let mut q = [0.0; 3];
                    for a in 0..k {
                        q[a] = 0.5 * (lo[a] + hi[a]) + 0.5 * (hi[a] - lo[a]) * p[a];
                    }
                    q
                })
                .collect(),
            weights: self.weights.iter().map(|w| w * scale).collect(),
        }
    }
}
