//! Run configuration: a TOML file (or JSON when the extension is `.json`).
//!
//! Every section except `[mesh]` is optional and falls back to defaults.
//! Relative paths inside the file are resolved against the file's directory.
//!
//! ```toml
//! initial_guess = "random"     # or "homogeneous"
//!
//! [mesh]
//! l1 = 10.0
//! l2 = 5.0
//! h = 0.08                     # or nx = .., ny = ..
//!
//! [model]
//! eps = 0.08
//! sigma = 12.8
//! m = 0.0
//!
//! [guideposts]                 # omit for a neutral substrate
//! shape = "strip"
//! count = 4
//!
//! [design]
//! initial = [1.0, 3.7, 6.3, 9.0]
//!
//! [optimizer]
//! l_max = 0.2
//! [optimizer.penalty]
//! alpha = 1000.0
//!
//! [target]
//! kind = "strips"
//! spacing = 1.0
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::fem::{FemSpace, Mesh, NodalField};
use crate::guidepost::{DesignVariables, GuidepostConfig, GuidepostShape};
use crate::optimizer::OptimizerConfig;
use crate::random_field::{FieldSampler, FieldSamplerParams};
use crate::state::StateSolverOptions;
use crate::target::TargetSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub l1: f64,
    pub l2: f64,
    /// largest allowed cell size; ignored when `nx` and `ny` are given
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match (self.nx, self.ny, self.h) {
            (Some(nx), Some(ny), _) => Mesh::rectangle(self.l1, self.l2, nx, ny),
            (None, None, Some(h)) => Mesh::with_max_spacing(self.l1, self.l2, h),
            _ => Err(Error::Config {
                field: "mesh".into(),
                message: "give either h or both nx and ny".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialGuess {
    /// Gaussian random field from the sampler section
    #[default]
    Random,
    /// `u0 = m` everywhere
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    /// starting coordinates; drawn uniformly over the domain from the seed when absent
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessSection {
    pub samples: usize,
    /// design CSV to assess; usually written by `optimize`, so it is only
    /// required to exist when `assess` runs
    pub design: Option<PathBuf>,
}

impl Default for AssessSection {
    fn default() -> Self {
        Self {
            samples: 20,
            design: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// warm-start each state from the previous spacing's equilibrium
    #[default]
    Continuation,
    /// start every state solve from the same initial guess
    Fixed,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuation" => Ok(Self::Continuation),
            "fixed" => Ok(Self::Fixed),
            _ => Err(Error::invalid(format!(
                "unknown sweep mode '{s}' (continuation|fixed)"
            ))),
        }
    }
}

/// Spacing sweep over equally spaced strips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// position of the first strip
    pub leftmost: f64,
    pub mode: SweepMode,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            start: 1.6,
            stop: 3.4,
            step: 0.05,
            leftmost: 0.5,
            mode: SweepMode::Continuation,
        }
    }
}

impl SweepSection {
    /// Grid from `start` to `stop`; both endpoints appear exactly.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0
            && self.stop >= self.start
            && self.start.is_finite()
            && self.stop.is_finite())
        {
            return Err(Error::Config {
                field: "sweep".into(),
                message: format!("need step > 0 and stop >= start, got {self:?}"),
            });
        }
        let n = ((self.stop - self.start) / self.step).round() as usize;
        let mut out: Vec<f64> = (0..n).map(|i| self.start + i as f64 * self.step).collect();
        out.push(self.stop);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub guideposts: Option<GuidepostConfig>,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub state: StateSolverOptions,
    #[serde(default)]
    pub sampler: FieldSamplerParams,
    #[serde(default)]
    pub initial_guess: InitialGuess,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub assess: AssessSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn field_err(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidArgument(message) => Error::Config {
            field: field.into(),
            message,
        },
        other => other,
    }
}

impl RunConfig {
    /// Minimal configuration on an `l1 x l2` domain with cell size `h`.
    pub fn new(l1: f64, l2: f64, h: f64) -> Self {
        Self {
            mesh: MeshSpec {
                l1,
                l2,
                h: Some(h),
                nx: None,
                ny: None,
            },
            model: ModelParams::default(),
            guideposts: None,
            design: DesignSection::default(),
            optimizer: OptimizerConfig::default(),
            state: StateSolverOptions::default(),
            sampler: FieldSamplerParams::default(),
            initial_guess: InitialGuess::default(),
            target: None,
            assess: AssessSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            field: e.span().map_or_else(String::new, |s| {
                let line = text[..s.start].matches('\n').count() + 1;
                format!("line {line}")
            }),
            message: e.message().to_string(),
        })
    }

    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            field: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// Loads and validates a config file. Relative paths are rebased onto
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::parse_json(&text)
        } else {
            Self::parse_toml(&text)
        }
        .map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("{}: {field}", path.display()),
                message,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(TargetSpec::Raster { path }) = &mut self.target {
            fix(path);
        }
        if let Some(p) = &mut self.assess.design {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.build().map_err(field_err("mesh"))?;
        self.model.validate().map_err(field_err("model"))?;
        if let Some(g) = &self.guideposts {
            g.validate().map_err(field_err("guideposts"))?;
            if let Some(z) = &self.design.initial {
                if z.len() != g.count * g.shape.dim() {
                    return Err(Error::Config {
                        field: "design.initial".into(),
                        message: format!(
                            "{} {} guideposts need {} coordinates, got {}",
                            g.count,
                            g.shape,
                            g.count * g.shape.dim(),
                            z.len()
                        ),
                    });
                }
            }
        } else if self.design.initial.is_some() {
            return Err(Error::Config {
                field: "design.initial".into(),
                message: "a design needs a [guideposts] section".into(),
            });
        }
        self.optimizer.validate().map_err(field_err("optimizer"))?;
        self.sampler.validate().map_err(field_err("sampler"))?;
        if let Some(t) = &self.target {
            t.validate()?;
        }
        self.sweep.grid()?;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sampler.seed = seed;
        self
    }

    pub fn space(&self) -> Result<FemSpace> {
        FemSpace::new(self.mesh.build()?)
    }

    /// Optimizer settings with the run-wide state solver options filled in.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            state: self.state,
            ..self.optimizer
        }
    }

    pub fn guideposts(&self) -> Result<GuidepostConfig> {
        self.guideposts.ok_or_else(|| Error::Config {
            field: "guideposts".into(),
            message: "this command needs a [guideposts] section".into(),
        })
    }

    pub fn target(&self) -> Result<&TargetSpec> {
        self.target.as_ref().ok_or_else(|| Error::Config {
            field: "target".into(),
            message: "this command needs a [target] section".into(),
        })
    }

    pub fn initial_state(&self, space: &FemSpace) -> Result<NodalField> {
        match self.initial_guess {
            InitialGuess::Homogeneous => Ok(NodalField::constant(space.n(), self.model.m)),
            InitialGuess::Random => {
                FieldSampler::new(space, self.sampler)?.sample(self.model.m, self.sampler.seed)
            }
        }
    }

    /// The configured starting design, or a uniform draw over the domain
    /// (strips sorted left to right).
    pub fn initial_design(&self) -> Result<DesignVariables> {
        let g = self.guideposts()?;
        if let Some(z) = &self.design.initial {
            return DesignVariables::new(g.shape, z.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.sampler.seed);
        let (l1, l2) = (self.mesh.l1, self.mesh.l2);
        let z = match g.shape {
            GuidepostShape::Strip => {
                let mut z: Vec<f64> = (0..g.count).map(|_| rng.gen::<f64>() * l1).collect();
                z.sort_by(f64::total_cmp);
                z
            }
            GuidepostShape::Circle => (0..g.count)
                .flat_map(|_| [rng.gen::<f64>() * l1, rng.gen::<f64>() * l2])
                .collect(),
        };
        DesignVariables::new(g.shape, z)
    }
}
