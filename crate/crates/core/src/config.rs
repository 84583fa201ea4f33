//! Scenario configuration: built-in presets and TOML scenario files.
//!
//! A scenario file is a partial document layered over a preset (or over the
//! library defaults). Every table rejects unknown keys.
//!
//! ```toml
//! preset = "fig2a"
//! scenario = "fig2a-tight"
//!
//! [pulses]
//! peak_s4 = 65.0
//!
//! [sim]
//! gamma = 750.0
//! tolerance = 1e-10
//!
//! [sweep]
//! points = 30
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::log_grid;
use crate::model::{DephasingParams, Envelope, ModelError, PulseSet, SimConfig, Window};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown preset {0:?} (expected fig2a, fig2b or fig3)")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

/// Built-in pulse configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2a,
    Fig2b,
    Fig3,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig2a, Preset::Fig2b, Preset::Fig3];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig2a => "fig2a",
            Preset::Fig2b => "fig2b",
            Preset::Fig3 => "fig3",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ConfigError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))
    }

    pub fn pulses(self) -> PulseSet {
        match self {
            Preset::Fig2a => PulseSet::new(10.0, 30.0, 70.0, 30.0, 50.0),
            Preset::Fig2b => PulseSet::new(10.0, 60.0, 40.0, 30.0, 50.0),
            Preset::Fig3 => PulseSet::new(20.0, 50.0, 40.0, 15.0, 75.0),
        }
    }

    pub fn sim(self) -> SimConfig {
        let mut cfg = SimConfig::default();
        if self == Preset::Fig3 {
            cfg.dephasing.delta = 15.0;
            cfg.dephasing.tau = 0.02;
            cfg.dephasing.n_realizations = 1000;
        }
        cfg
    }

    pub fn scenario(self) -> Scenario {
        Scenario {
            name: self.name().to_string(),
            pulses: self.pulses(),
            config: self.sim(),
            sweep: SweepSpec::default(),
            study_gammas: vec![0.0, 3.0, 6.0, 9.0],
        }
    }
}

/// Gamma grid of a sweep: an explicit list, or `points` log-spaced values over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepSpec {
    List(Vec<f64>),
    Log { lo: f64, hi: f64, points: usize },
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec::Log {
            lo: 1.0,
            hi: 3000.0,
            points: 60,
        }
    }
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<f64> {
        match self {
            SweepSpec::List(g) => g.clone(),
            SweepSpec::Log { lo, hi, points } => log_grid(*lo, *hi, *points),
        }
    }
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub pulses: PulseSet,
    pub config: SimConfig,
    pub sweep: SweepSpec,
    /// Gamma values of the dephasing study.
    pub study_gammas: Vec<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.config.validate_for(&self.pulses)?;
        match &self.sweep {
            SweepSpec::Log { lo, hi, points } => {
                if !(*lo > 0.0 && lo < hi && hi.is_finite()) {
                    return Err(ConfigError::Invalid("sweep bounds must satisfy 0 < lo < hi".into()));
                }
                if *points == 0 {
                    return Err(ConfigError::Invalid("sweep points must be ≥ 1".into()));
                }
            }
            SweepSpec::List(g) => check_increasing("sweep gammas", g)?,
        }
        for g in &self.study_gammas {
            if !g.is_finite() || *g < 0.0 {
                return Err(ConfigError::Invalid("study gammas must be ≥ 0".into()));
            }
        }
        Ok(())
    }

    /// The scenario as a complete document; parsing it back gives `self`.
    pub fn to_document(&self) -> Document {
        let p = &self.pulses;
        let c = &self.config;
        let d = &c.dephasing;
        let sweep = match &self.sweep {
            SweepSpec::List(g) => SweepPatch {
                gammas: Some(g.clone()),
                ..SweepPatch::default()
            },
            SweepSpec::Log { lo, hi, points } => SweepPatch {
                gammas: None,
                lo: Some(*lo),
                hi: Some(*hi),
                points: Some(*points),
            },
        };
        Document {
            preset: None,
            scenario: Some(self.name.clone()),
            pulses: Some(PulsesPatch {
                peak_p: Some(p.peak_p),
                peak_s3: Some(p.peak_s3),
                peak_s4: Some(p.peak_s4),
                peak_b3: Some(p.peak_b3),
                peak_b4: Some(p.peak_b4),
                pump: Some(p.pump),
                stokes: Some(p.stokes),
                branch: Some(p.branch),
            }),
            sim: Some(SimPatch {
                gamma: Some(c.gamma),
                product_decay: Some(c.product_decay),
                window: Some(c.window),
                tolerance: Some(c.tolerance),
                max_step: Some(c.max_step),
                output_samples: Some(c.output_samples),
            }),
            dephasing: Some(DephasingPatch {
                delta: Some(d.delta),
                tau: Some(d.tau),
                n_realizations: Some(d.n_realizations),
                master_seed: Some(d.master_seed),
                refresh_fraction: Some(d.refresh_fraction),
            }),
            sweep: Some(sweep),
            study: Some(StudyPatch {
                gammas: Some(self.study_gammas.clone()),
            }),
            run: None,
        }
    }
}

fn check_increasing(what: &str, g: &[f64]) -> Result<(), ConfigError> {
    if g.is_empty() {
        return Err(ConfigError::Invalid(format!("{what} must be nonempty")));
    }
    for (i, x) in g.iter().enumerate() {
        if !x.is_finite() || *x < 0.0 || (i > 0 && *x <= g[i - 1]) {
            return Err(ConfigError::Invalid(format!(
                "{what} must be ≥ 0 and strictly increasing (entry {i}: {x})"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsesPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_s3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_s4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_b3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_b4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pump: Option<Envelope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stokes: Option<Envelope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<Envelope>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product_decay: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refresh_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
}

/// Provenance of a run, written into manifests. Ignored when resolving.
///
/// `subcommand` and `xi` are the only settings that live outside the scenario
/// itself, so together with the scenario they reproduce the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub subcommand: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default)]
    pub plot: bool,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub outputs: Vec<String>,
}

/// Scenario file contents, every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulses: Option<PulsesPatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimPatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<DephasingPatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepPatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyPatch>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunInfo>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Document {
    /// Layers the document over its preset, or over `base` when it names none.
    pub fn resolve(&self, base: Option<Preset>) -> Result<Scenario, ConfigError> {
        let preset = match &self.preset {
            Some(name) => Some(Preset::from_name(name)?),
            None => base,
        };
        let mut s = match preset {
            Some(p) => p.scenario(),
            None => Scenario {
                name: "custom".to_string(),
                pulses: PulseSet::new(0.0, 0.0, 0.0, 0.0, 0.0),
                config: SimConfig::default(),
                sweep: SweepSpec::default(),
                study_gammas: vec![0.0, 3.0, 6.0, 9.0],
            },
        };
        set(&mut s.name, self.scenario.clone());
        if let Some(p) = &self.pulses {
            let t = &mut s.pulses;
            set(&mut t.peak_p, p.peak_p);
            set(&mut t.peak_s3, p.peak_s3);
            set(&mut t.peak_s4, p.peak_s4);
            set(&mut t.peak_b3, p.peak_b3);
            set(&mut t.peak_b4, p.peak_b4);
            set(&mut t.pump, p.pump);
            set(&mut t.stokes, p.stokes);
            set(&mut t.branch, p.branch);
        } else if preset.is_none() {
            return Err(ConfigError::Invalid(
                "a [pulses] table is required when no preset is given".into(),
            ));
        }
        if let Some(p) = &self.sim {
            let t = &mut s.config;
            set(&mut t.gamma, p.gamma);
            set(&mut t.product_decay, p.product_decay);
            set(&mut t.window, p.window);
            set(&mut t.tolerance, p.tolerance);
            set(&mut t.max_step, p.max_step);
            set(&mut t.output_samples, p.output_samples);
        }
        if let Some(p) = &self.dephasing {
            let t: &mut DephasingParams = &mut s.config.dephasing;
            set(&mut t.delta, p.delta);
            set(&mut t.tau, p.tau);
            set(&mut t.n_realizations, p.n_realizations);
            set(&mut t.master_seed, p.master_seed);
            set(&mut t.refresh_fraction, p.refresh_fraction);
        }
        if let Some(p) = &self.sweep {
            s.sweep = match (&p.gammas, p.lo, p.hi, p.points) {
                (Some(_), Some(_), _, _) | (Some(_), _, Some(_), _) | (Some(_), _, _, Some(_)) => {
                    return Err(ConfigError::Invalid(
                        "sweep takes either gammas or lo/hi/points, not both".into(),
                    ))
                }
                (Some(g), ..) => SweepSpec::List(g.clone()),
                (None, lo, hi, points) => {
                    let SweepSpec::Log {
                        lo: l0,
                        hi: h0,
                        points: n0,
                    } = SweepSpec::default()
                    else {
                        unreachable!()
                    };
                    let (l, h, n) = match &s.sweep {
                        SweepSpec::Log { lo, hi, points } => (*lo, *hi, *points),
                        SweepSpec::List(_) => (l0, h0, n0),
                    };
                    SweepSpec::Log {
                        lo: lo.unwrap_or(l),
                        hi: hi.unwrap_or(h),
                        points: points.unwrap_or(n),
                    }
                }
            };
        }
        if let Some(p) = &self.study {
            set(&mut s.study_gammas, p.gammas.clone());
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("documents always serialize")
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses a scenario document; errors carry the 1-based line and column.
pub fn parse_document(text: &str) -> Result<Document, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })
}

/// Parses and resolves a scenario from text.
pub fn parse_config_str(text: &str, base: Option<Preset>) -> Result<Scenario, ConfigError> {
    parse_document(text)?.resolve(base)
}

/// Reads, parses and validates a scenario file.
pub fn parse_config(path: &Path) -> Result<(PulseSet, SimConfig, Scenario), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let s = parse_config_str(&text, None)?;
    Ok((s.pulses, s.config, s))
}
