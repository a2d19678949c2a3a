//! JSON configuration documents and their conversion to sweep specs.

use std::path::Path;

use anyhow::{anyhow, bail, Context};
use ifsthermo_core::expr::parse_expr;
use ifsthermo_core::family::{bind, FamilySpec, Interval, Piecewise};
use ifsthermo_core::sweep::{preset, EngineConfig, Grid, Quantity, SweepParameter, SweepSpec};
use ifsthermo_core::Potential;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub system: SystemDoc,
    #[serde(default)]
    pub engine: EngineDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepDoc>,
    /// Default for `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    /// Map expressions in `x` and `p` (= lambda).
    pub maps: Vec<String>,
    /// Weight expressions in `x` and `p` (= theta).
    pub weights: Vec<PiecewiseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<RangeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<RangeDoc>,
}

/// A single expression, or pieces split at breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiecewiseDoc {
    Expr(String),
    Pieces { breakpoints: Vec<f64>, pieces: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeDoc {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolate: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDoc {
    /// `lambda`, `theta` or `tied`.
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// `integral`, `bowen_dimension`, `measure_dimension` or `pressure`.
    pub quantity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<PiecewiseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<f64>,
}

impl PiecewiseDoc {
    pub fn to_piecewise(&self) -> anyhow::Result<Piecewise> {
        match self {
            PiecewiseDoc::Expr(src) => Ok(Piecewise::single(parse(src)?)),
            PiecewiseDoc::Pieces { breakpoints, pieces } => {
                let pieces = pieces.iter().map(|s| parse(s)).collect::<anyhow::Result<Vec<_>>>()?;
                Ok(Piecewise::new(breakpoints.clone(), pieces)?)
            }
        }
    }

    pub fn from_piecewise(w: &Piecewise) -> Self {
        if w.is_single() {
            PiecewiseDoc::Expr(w.pieces()[0].to_string())
        } else {
            PiecewiseDoc::Pieces {
                breakpoints: w.breakpoints().to_vec(),
                pieces: w.pieces().iter().map(|e| e.to_string()).collect(),
            }
        }
    }
}

fn parse(src: &str) -> anyhow::Result<ifsthermo_core::Expr> {
    parse_expr(src).with_context(|| format!("in expression \"{src}\""))
}

fn with_default(name: &str, r: &RangeDoc) -> anyhow::Result<(Interval, f64)> {
    let range = Interval::new(r.lo, r.hi)?;
    let default = r.default.unwrap_or_else(|| range.midpoint());
    if !range.contains(default) {
        bail!("{name} default {default} outside [{}, {}]", r.lo, r.hi);
    }
    Ok((range, default))
}

impl ConfigDocument {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn family(&self) -> anyhow::Result<FamilySpec> {
        let maps = self.system.maps.iter().map(|s| parse(s)).collect::<anyhow::Result<Vec<_>>>()?;
        let weights = self
            .system
            .weights
            .iter()
            .map(PiecewiseDoc::to_piecewise)
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut family = FamilySpec::new(maps, weights)?;
        if let Some(r) = &self.system.lambda {
            let (range, default) = with_default("lambda", r)?;
            family = family.with_lambda(range, default);
        }
        if let Some(r) = &self.system.theta {
            let (range, default) = with_default("theta", r)?;
            family = family.with_theta(range, default);
        }
        let mid = |r: &Option<Interval>, d: f64| r.map_or(d, |r| r.midpoint());
        bind(
            &family,
            mid(&family.lambda_range, family.default_lambda),
            mid(&family.theta_range, family.default_theta),
        )
        .context("dry-run bind at the interval midpoints")?;
        Ok(family)
    }

    /// The sweep described by the document; without a `sweep` section, an
    /// 11-point integral of `x` over the declared `lambda` (else `theta`)
    /// interval.
    pub fn to_spec(&self) -> anyhow::Result<SweepSpec> {
        let family = self.family()?;
        let mut engine = EngineConfig::default();
        let e = &self.engine;
        if let Some(m) = &e.method {
            engine.engine = m.parse()?;
        }
        engine.depth = e.depth.unwrap_or(engine.depth);
        engine.samples = e.samples.unwrap_or(engine.samples);
        engine.burn_in = e.burn_in.unwrap_or(engine.burn_in);
        engine.seed = e.seed.unwrap_or(engine.seed);
        engine.tol = e.tol.unwrap_or(engine.tol);
        engine.x0 = e.x0.unwrap_or(engine.x0);
        engine.extrapolate = e.extrapolate.unwrap_or(engine.extrapolate);
        let (parameter, grid, quantity, probe) = match &self.sweep {
            Some(s) => {
                let quantity = match s.quantity.as_str() {
                    "integral" => Quantity::Integral(match &s.f {
                        Some(f) => f.to_piecewise()?,
                        None => Piecewise::single(parse("x")?),
                    }),
                    "bowen_dimension" => Quantity::BowenDimension,
                    "measure_dimension" => Quantity::MeasureDimension,
                    "pressure" => Quantity::Pressure(match &s.potential {
                        Some(p) => p.parse()?,
                        None => Potential::WeightLog,
                    }),
                    other => bail!("unknown quantity '{other}'"),
                };
                let grid = Grid {
                    lo: s.lo,
                    hi: s.hi,
                    points: s.points,
                };
                (s.parameter.parse()?, grid, quantity, s.probe)
            }
            None => {
                let (parameter, range) = match (family.lambda_range, family.theta_range) {
                    (Some(r), _) => (SweepParameter::Lambda, r),
                    (None, Some(r)) => (SweepParameter::Theta, r),
                    // Nothing depends on p; sweep a nominal lambda.
                    (None, None) => (SweepParameter::Lambda, Interval { lo: 0.0, hi: 1.0 }),
                };
                let grid = Grid {
                    lo: range.lo,
                    hi: range.hi,
                    points: 11,
                };
                (parameter, grid, Quantity::Integral(Piecewise::single(parse("x")?)), None)
            }
        };
        Ok(SweepSpec {
            lambda: family.default_lambda,
            theta: family.default_theta,
            family,
            parameter,
            grid,
            quantity,
            engine,
            probe,
        })
    }

    pub fn from_spec(spec: &SweepSpec) -> Self {
        let family = &spec.family;
        let range = |r: &Option<Interval>, d: f64| {
            r.map(|r| RangeDoc {
                lo: r.lo,
                hi: r.hi,
                default: Some(d),
            })
        };
        let (quantity, f, potential) = match &spec.quantity {
            Quantity::Integral(f) => ("integral", Some(PiecewiseDoc::from_piecewise(f)), None),
            Quantity::BowenDimension => ("bowen_dimension", None, None),
            Quantity::MeasureDimension => ("measure_dimension", None, None),
            Quantity::Pressure(phi) => ("pressure", None, Some(phi.to_string())),
        };
        let e = &spec.engine;
        ConfigDocument {
            system: SystemDoc {
                maps: family.maps.iter().map(|m| m.to_string()).collect(),
                weights: family.weights.iter().map(PiecewiseDoc::from_piecewise).collect(),
                lambda: range(&family.lambda_range, spec.lambda),
                theta: range(&family.theta_range, spec.theta),
            },
            engine: EngineDoc {
                method: Some(e.engine.name().to_string()),
                depth: Some(e.depth),
                samples: Some(e.samples),
                burn_in: Some(e.burn_in),
                seed: Some(e.seed),
                tol: Some(e.tol),
                x0: Some(e.x0),
                extrapolate: Some(e.extrapolate),
            },
            sweep: Some(SweepDoc {
                parameter: spec.parameter.name().to_string(),
                lo: spec.grid.lo,
                hi: spec.grid.hi,
                points: spec.grid.points,
                quantity: quantity.to_string(),
                f,
                potential,
                probe: spec.probe,
            }),
            output: None,
        }
    }
}

/// A preset or a config file.
pub fn resolve(preset_name: Option<&str>, config: Option<&Path>) -> anyhow::Result<(SweepSpec, Option<String>, String)> {
    match (preset_name, config) {
        (Some(name), None) => Ok((preset(name)?, None, format!("preset:{name}"))),
        (None, Some(path)) => {
            let doc = ConfigDocument::load(path)?;
            Ok((doc.to_spec()?, doc.output.clone(), format!("config:{}", path.display())))
        }
        (None, None) => Err(anyhow!("one of --preset or --config is required")),
        (Some(_), Some(_)) => Err(anyhow!("--preset and --config are mutually exclusive")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ifsthermo_core::sweep::PRESETS;

    #[test]
    fn presets_round_trip_through_json() {
        for name in PRESETS {
            let spec = preset(name).unwrap();
            let doc = ConfigDocument::from_spec(&spec);
            let text = serde_json::to_string_pretty(&doc).unwrap();
            let back: ConfigDocument = serde_json::from_str(&text).unwrap();
            assert_eq!(back, doc);
            let spec2 = back.to_spec().unwrap();
            assert_eq!(spec2.grid, spec.grid);
            assert_eq!(spec2.parameter, spec.parameter);
            assert_eq!(spec2.engine, spec.engine);
            let (a, b) = (spec.family.bind_default().unwrap(), spec2.family.bind_default().unwrap());
            for x in [0.0, 0.3, 0.5, 0.9] {
                for i in 0..2 {
                    assert_eq!(a.map(i, x).unwrap(), b.map(i, x).unwrap(), "{name}");
                    assert_eq!(a.weight(i, x).unwrap(), b.weight(i, x).unwrap(), "{name}");
                }
            }
        }
    }

    #[test]
    fn minimal_document() {
        let doc: ConfigDocument = serde_json::from_str(
            r#"{"system": {"maps": ["x/3", "x/3 + 2/3"], "weights": ["0.5", "0.5"], "theta": {"lo": 0.1, "hi": 0.9}}}"#,
        )
        .unwrap();
        let spec = doc.to_spec().unwrap();
        assert_eq!(spec.parameter, SweepParameter::Theta);
        assert_eq!(spec.grid.points, 11);
        assert_eq!(spec.theta, 0.5);
    }

    #[test]
    fn bad_documents() {
        let bad_expr = r#"{"system": {"maps": ["x/3 +", "x/3"], "weights": ["0.5", "0.5"]}}"#;
        let err = serde_json::from_str::<ConfigDocument>(bad_expr).unwrap().to_spec().unwrap_err();
        assert!(format!("{err:#}").contains("x/3 +"));
        let unknown = r#"{"system": {"maps": [], "weights": []}, "colour": 1}"#;
        assert!(serde_json::from_str::<ConfigDocument>(unknown).is_err());
        let bad_default = r#"{"system": {"maps": ["p*x", "p*x+0.5"], "weights": ["0.5", "0.5"], "lambda": {"lo": 0.1, "hi": 0.4, "default": 0.9}}}"#;
        let doc: ConfigDocument = serde_json::from_str(bad_default).unwrap();
        assert!(doc.to_spec().is_err());
    }
}
