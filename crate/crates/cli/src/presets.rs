//! Built-in experiment configurations.

use nestquad::expr::Expr;
use nestquad::{Axis, Error, Result, Target};

use crate::config::{Adaptive, RunConfig};

/// Default sweep over cells per axis.
pub const DEFAULT_GRID: [usize; 5] = [4, 8, 16, 32, 64];

/// Surface areas of the outer and inner sheet of the thin cylinder.
pub const THIN_OUTER_AREA: &str = "6.775163182554902237379363684639";
pub const THIN_INNER_AREA: &str = "6.2377886792891965132267781181652";

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    /// Configuration for the first entry of `references` (or the default target).
    pub config: RunConfig,
    /// Reference values as expressions, keyed by target.
    pub references: Vec<(Target, String)>,
    /// Adaptive thresholds per order, keyed by target.
    pub thresholds: Vec<(Target, Vec<f64>)>,
    /// Axis along which contour splitting is applied, when the preset uses it.
    pub split_axis: Option<Axis>,
}

/// Evaluates a constant reference expression such as `23*pi/375`.
pub fn reference_value(text: &str) -> Result<f64> {
    let e = Expr::parse(text)?;
    if !e.is_constant() {
        return Err(Error::InvalidConfig(format!("reference '{text}' is not constant")));
    }
    Ok(e.eval(&[0.0; 3]))
}

impl Preset {
    pub fn reference(&self, target: Target) -> Option<&str> {
        self.references
            .iter()
            .find(|(t, _)| *t == target)
            .map(|(_, s)| s.as_str())
    }

    /// The preset configured for `target`, with its reference if one is known.
    pub fn for_target(&self, target: Target) -> Result<RunConfig> {
        let mut cfg = self.config.clone();
        cfg.target = target.name().into();
        cfg.reference = self.reference(target).map(reference_value).transpose()?;
        Ok(cfg)
    }

    /// [`Preset::for_target`] with the preset's adaptive thresholds switched on.
    pub fn adaptive_for_target(&self, target: Target) -> Result<RunConfig> {
        let mut cfg = self.for_target(target)?;
        let tau = self
            .thresholds
            .iter()
            .find(|(t, _)| *t == target)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::InvalidConfig(format!("{} has no thresholds for {}", self.name, target.name())))?;
        cfg.order.truncate(tau.len());
        let tau = tau[..cfg.order.len()].to_vec();
        cfg.adaptive = Some(Adaptive {
            tau,
            max_depth: nestquad::AdaptiveConfig::default().max_depth,
        });
        Ok(cfg)
    }
}

fn base(alpha: &str, beta: Option<&str>, target: Target) -> RunConfig {
    RunConfig {
        alpha: alpha.into(),
        beta: beta.map(Into::into),
        target: target.name().into(),
        grid: DEFAULT_GRID.to_vec(),
        order: vec![1, 2, 3, 4],
        ..Default::default()
    }
}

fn finish(mut p: Preset) -> Preset {
    let target = p.config.target().expect("preset target");
    p.config.reference = p.reference(target).map(|s| reference_value(s).expect("preset reference"));
    p
}

pub fn oscillating_edge() -> Preset {
    finish(Preset {
        name: "oscillating-edge",
        summary: "sharp edge of two sine sheets oscillating about the x-axis",
        config: base(
            "z - 1/5*sin(20*pi*x/11)",
            Some("y - 1/5*sin(20*pi*x/11)"),
            Target::Line,
        ),
        references: vec![
            (Target::Line, "2.9018098242473137628716230441128".into()),
            (Target::SurfaceBeta, "2.5048230500093248969863804012397".into()),
            (Target::Volume, "2.0431849934260147426243415665995".into()),
        ],
        thresholds: Vec::new(),
        split_axis: None,
    })
}

pub fn spherical_lens() -> Preset {
    let config = base(
        "(x+1)^2 + (y+1)^2 + (z+49/100)^2 - (9/10)^2",
        Some("(x+1)^2 + (y+1)^2 + (z-51/100)^2 - (9/10)^2"),
        Target::Volume,
    );
    finish(Preset {
        name: "spherical-lens",
        summary: "quarter lens cut from two intersecting spheres",
        config,
        references: vec![
            (Target::Volume, "23/375*pi".into()),
            (Target::SurfaceBeta, "9/50*pi".into()),
            (Target::Line, "sqrt(14)/10*pi".into()),
        ],
        thresholds: vec![
            (Target::Volume, vec![1.0, 0.05, 1e-3, 1e-4]),
            (Target::SurfaceBeta, vec![0.1, 1e-3, 1e-5, 1e-7]),
            (Target::Line, vec![0.002, 1e-5, 1e-8, 1e-11]),
        ],
        split_axis: None,
    })
}

const TORIC_G: &str = "1/5*sin(20*pi/11*x)*sin(35*pi/22*y + 10*pi/11*z)";

pub fn toric_section() -> Preset {
    let mut config = base(
        "(sqrt(x^2 + y^2) - 3/5)^2 + z^2 - (3/10)^2",
        Some(&format!("-1/2*y + 7/8*x - {TORIC_G}")),
        Target::Line,
    );
    config.integrand = TORIC_G.into();
    config.grid = vec![30];
    config.refine = vec![1, 2, 4, 8];
    config.order = vec![1, 2];
    finish(Preset {
        name: "toric-section",
        summary: "torus cut by a tilted wavy surface, trigonometric integrand",
        config,
        references: vec![(Target::Line, "0".into()), (Target::SurfaceBeta, "0".into())],
        thresholds: Vec::new(),
        split_axis: None,
    })
}

/// Two parallel planes at distance `l` about `(4/5)x - y = 0`.
pub fn slanted_sheet(l: f64) -> Preset {
    let mut config = base(&format!("(4/5*x - y)^2 - ({l:?})^2"), None, Target::Volume);
    config.grid = vec![1];
    config.order = vec![1];
    finish(Preset {
        name: "slanted-sheet",
        summary: "thin slab between two parallel slanted planes",
        config,
        // The slab stays inside K for l < 1/5, so its volume is 2l * 2 * 2.
        references: vec![(Target::Volume, format!("8*{l:?}"))],
        thresholds: Vec::new(),
        split_axis: Some(Axis::Y),
    })
}

/// Cylinder of radius `2/3 + l` about a sine-shaped axis.
pub fn wavy_cylinder(l: f64) -> Preset {
    let mut config = base(
        &format!("x^2 + (y + 1/5*sin(pi*z))^2 - (2/3 + {l:?})^2"),
        None,
        Target::SurfaceAlpha,
    );
    config.grid = vec![6];
    config.order = vec![1, 2];
    finish(Preset {
        name: "wavy-cylinder",
        summary: "wavy cylinder passing close to grid planes",
        config,
        references: Vec::new(),
        thresholds: Vec::new(),
        split_axis: Some(Axis::Y),
    })
}

/// Two concentric sheets `alpha~ = +-l` of `alpha = alpha~^2 - l^2`, split along `alpha~ = 0`.
pub fn thin_cylinder() -> Preset {
    let mut config = base(
        "(x^2 + y^2 + (z + 6/5)^(-2))^2 - (1/50)^2",
        None,
        Target::SurfaceAlpha,
    );
    config.grid = vec![20];
    config.refine = vec![1, 2, 4, 8];
    config.contour_split = Some("z".into());
    finish(Preset {
        name: "thin-cylinder",
        summary: "thin cylindrical sheet integrated by contour splitting",
        config,
        references: vec![(Target::SurfaceAlpha, format!("{THIN_OUTER_AREA} + {THIN_INNER_AREA}"))],
        thresholds: Vec::new(),
        split_axis: Some(Axis::Z),
    })
}

/// All built-in presets; parametrized ones at their default `l`.
pub fn presets() -> Vec<Preset> {
    vec![
        oscillating_edge(),
        spherical_lens(),
        toric_section(),
        slanted_sheet(0.1),
        wavy_cylinder(0.001),
        thin_cylinder(),
    ]
}

/// Looks up a preset by name, with `l` overriding the sheet distance where it applies.
pub fn preset(name: &str, l: Option<f64>) -> Result<Preset> {
    match (name, l) {
        ("slanted-sheet", Some(l)) => Ok(slanted_sheet(l)),
        ("wavy-cylinder", Some(l)) => Ok(wavy_cylinder(l)),
        (_, Some(_)) => Err(Error::InvalidConfig(format!("preset '{name}' has no parameter l"))),
        _ => presets()
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset '{name}'"))),
    }
}
