//! Run configuration, loadable from TOML.

use std::path::PathBuf;

use nestquad::{AdaptiveConfig, Axis, Body, Error, Result, Target};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            lower: [-1.0; 3],
            upper: [1.0; 3],
        }
    }
}

impl Domain {
    pub fn body(&self) -> Body {
        Body::new(self.lower, self.upper, 3)
    }
}

/// Adaptive refinement settings. `tau` holds one threshold for all orders or
/// one per entry of [`RunConfig::order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adaptive {
    pub tau: Vec<f64>,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
}

fn default_max_depth() -> usize {
    AdaptiveConfig::default().max_depth
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: Domain,
    /// Cells per axis; more than one entry sweeps over `c`.
    pub grid: Vec<usize>,
    /// Gauss points per axis.
    pub order: Vec<usize>,
    /// Uniform subdivisions per axis of each mapping domain; more than one entry sweeps over `s`.
    pub refine: Vec<usize>,
    pub adaptive: Option<Adaptive>,
    pub alpha: String,
    pub beta: Option<String>,
    pub target: String,
    pub integrand: String,
    /// Axis name for contour splitting of `alpha`.
    pub contour_split: Option<String>,
    pub reference: Option<f64>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub strict: bool,
    /// Bisection budget of the graph construction before the linear fallback.
    pub max_subdivisions: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: Domain::default(),
            grid: vec![1],
            order: vec![1],
            refine: vec![1],
            adaptive: None,
            alpha: String::new(),
            beta: None,
            target: "volume".into(),
            integrand: "1".into(),
            contour_split: None,
            reference: None,
            output: None,
            threads: None,
            strict: false,
            max_subdivisions: nestquad::GraphConfig::default().max_subdivisions,
        }
    }
}

pub fn parse_axis(s: &str) -> Result<Axis> {
    match s {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        _ => Err(Error::InvalidConfig(format!("unknown axis '{s}'"))),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn target(&self) -> Result<Target> {
        self.target.parse()
    }

    pub fn split_axis(&self) -> Result<Option<Axis>> {
        self.contour_split.as_deref().map(parse_axis).transpose()
    }

    /// Threshold for the `i`-th order, if adaptive refinement is on.
    pub fn adaptive_for(&self, i: usize) -> Option<AdaptiveConfig> {
        let a = self.adaptive.as_ref()?;
        let tau = if a.tau.len() == 1 { a.tau[0] } else { a.tau[i] };
        Some(AdaptiveConfig {
            threshold: tau,
            max_depth: a.max_depth,
        })
    }

    /// True when the report sweeps over `c`, false when it sweeps over `s`.
    pub fn sweeps_grid(&self) -> bool {
        self.grid.len() > 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.grid.is_empty() || self.grid.contains(&0) {
            return bad("grid entries must be >= 1".into());
        }
        if self.order.is_empty() || self.order.contains(&0) {
            return bad("order entries must be >= 1".into());
        }
        if self.refine.is_empty() || self.refine.contains(&0) {
            return bad("refine entries must be >= 1".into());
        }
        if self.grid.len() > 1 && self.refine.len() > 1 {
            return bad("sweep either grid or refine, not both".into());
        }
        if (0..3).any(|i| self.domain.upper[i] <= self.domain.lower[i]) {
            return bad("domain must have positive extent on every axis".into());
        }
        let target = self.target()?;
        if matches!(target, Target::SurfaceBeta | Target::Line) && self.beta.is_none() {
            return bad(format!("target {} requires beta", target.name()));
        }
        if self.split_axis()?.is_some() {
            if self.beta.is_some() {
                return bad("contour splitting takes a single level set".into());
            }
            nestquad::quadrature::SplitProblem::target(target)?;
        }
        if let Some(a) = &self.adaptive {
            if a.tau.is_empty() || a.tau.iter().any(|t| !(*t > 0.0)) {
                return bad("adaptive thresholds must be positive".into());
            }
            if a.tau.len() != 1 && a.tau.len() != self.order.len() {
                return bad("give one adaptive threshold or one per order".into());
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        Ok(())
    }
}
