//! Experiment configuration: preset defaults, overridden by a TOML file,
//! overridden by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use bridgelab::dynamics::TimeScaleKind;
use bridgelab::pde::BurgersFlux;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Smoke,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// `S(k) = k mod 2`.
    Flat,
    /// `k ∧ (2N-k)`.
    Maximal,
    Minimal,
    /// Exact draw from the invariant measure.
    Equilibrium,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    n: Option<usize>,
    alpha: Option<f64>,
    sigma: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnobsFile {
    eps: Option<f64>,
    grid_m: Option<usize>,
    tolerance: Option<f64>,
    level: Option<f64>,
    init: Option<InitKind>,
    burgers_flux: Option<BurgersFlux>,
    n_ladder: Option<Vec<usize>>,
    front_n: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: Option<String>,
    seed: Option<u64>,
    n_replicas: Option<usize>,
    scale: Option<TimeScaleKind>,
    t_grid: Option<Vec<f64>>,
    params: Option<ParamsFile>,
    knobs: Option<KnobsFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params {
    pub n: usize,
    pub alpha: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Knobs {
    /// Window margin `ε`.
    pub eps: f64,
    /// PDE grid intervals.
    pub grid_m: usize,
    /// Sup-norm tolerance for deterministic comparisons.
    pub tolerance: f64,
    /// Significance level of hypothesis tests.
    pub level: f64,
    pub init: InitKind,
    pub burgers_flux: BurgersFlux,
    pub n_ladder: Vec<usize>,
    /// System size of the front-position run.
    pub front_n: usize,
}

/// Fully resolved configuration; its TOML form is what gets hashed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub preset: Preset,
    pub seed: u64,
    pub n_replicas: usize,
    pub scale: TimeScaleKind,
    pub t_grid: Vec<f64>,
    pub params: Params,
    pub knobs: Knobs,
}

pub const DEFAULT_SEED: u64 = 20261016;

impl ExperimentConfig {
    /// Built-in defaults of `cmd` at `preset`.
    pub fn preset(cmd: Command, preset: Preset) -> Self {
        let full = preset == Preset::Full;
        let pick = |smoke: usize, big: usize| if full { big } else { smoke };
        let mut c = ExperimentConfig {
            name: cmd.name().to_string(),
            preset,
            seed: DEFAULT_SEED,
            n_replicas: 1,
            scale: TimeScaleKind::Hydrodynamic,
            t_grid: vec![],
            params: Params {
                n: 64,
                alpha: 1.0,
                sigma: 1.0,
            },
            knobs: Knobs {
                eps: 0.05,
                grid_m: 1024,
                tolerance: 0.05,
                level: 1e-3,
                init: InitKind::Flat,
                burgers_flux: BurgersFlux::WithSigma,
                n_ladder: vec![],
                front_n: 1 << 10,
            },
        };
        match cmd {
            Command::StaticClt => {
                c.params = Params {
                    n: pick(128, 1024),
                    alpha: 1.0,
                    sigma: 0.5,
                };
                c.n_replicas = pick(4000, 100_000);
                c.scale = TimeScaleKind::Microscopic;
            }
            Command::Partition => {
                c.params.alpha = 1.25;
                c.params.n = 256;
                c.knobs.n_ladder = if full {
                    vec![1 << 10, 1 << 11, 1 << 12, 1 << 13]
                } else {
                    vec![64, 128, 256, 512]
                };
            }
            Command::FluctEq => {
                c.params = Params {
                    n: pick(32, 128),
                    alpha: 1.0,
                    sigma: 0.5,
                };
                c.n_replicas = pick(400, 4000);
                c.scale = TimeScaleKind::Diffusive;
                c.t_grid = vec![0.0, 0.02, 0.05];
                c.knobs.init = InitKind::Equilibrium;
            }
            Command::Hydro => {
                c.params = Params {
                    n: pick(1 << 10, 1 << 12),
                    alpha: 0.5,
                    sigma: 1.0,
                };
                c.t_grid = vec![0.1, 0.3, 0.6];
            }
            Command::HydroFiner => {
                c.params = Params {
                    n: pick(1 << 9, 1 << 11),
                    alpha: 1.1,
                    sigma: 1.0,
                };
                c.n_replicas = pick(4, 8);
                c.scale = TimeScaleKind::Diffusive;
                c.t_grid = vec![0.02, 0.05];
            }
            Command::Kpz => {
                c.params = Params {
                    n: 64,
                    alpha: 1.0 / 3.0,
                    sigma: 1.0,
                };
                c.n_replicas = pick(500, 10_000);
                c.scale = TimeScaleKind::Kpz;
                c.t_grid = vec![0.1, 0.2, 0.4];
                c.knobs.eps = 0.1;
                c.knobs.front_n = pick(1 << 10, 1 << 12);
            }
            Command::KernelCheck => {
                c.params = Params {
                    n: 64,
                    alpha: 1.0 / 3.0,
                    sigma: 1.0,
                };
                c.scale = TimeScaleKind::Kpz;
                c.t_grid = vec![0.001, 0.01, 0.1];
                c.knobs.n_ladder = if full {
                    vec![16, 64, 128]
                } else {
                    vec![16, 32]
                };
            }
            Command::Oracle => {
                c.params = Params {
                    n: 3,
                    alpha: 1.0,
                    sigma: 1.0,
                };
                c.n_replicas = pick(20_000, 1_000_000);
                c.scale = TimeScaleKind::Microscopic;
                c.t_grid = vec![0.25, 1.0, 4.0];
            }
            Command::EmitPlots => {}
        }
        c
    }

    /// Applies a TOML document on top of `self`.
    fn apply(&mut self, file: ConfigFile) {
        if let Some(v) = file.name {
            self.name = v;
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.n_replicas {
            self.n_replicas = v;
        }
        if let Some(v) = file.scale {
            self.scale = v;
        }
        if let Some(v) = file.t_grid {
            self.t_grid = v;
        }
        if let Some(p) = file.params {
            if let Some(v) = p.n {
                self.params.n = v;
            }
            if let Some(v) = p.alpha {
                self.params.alpha = v;
            }
            if let Some(v) = p.sigma {
                self.params.sigma = v;
            }
        }
        if let Some(k) = file.knobs {
            let kn = &mut self.knobs;
            if let Some(v) = k.eps {
                kn.eps = v;
            }
            if let Some(v) = k.grid_m {
                kn.grid_m = v;
            }
            if let Some(v) = k.tolerance {
                kn.tolerance = v;
            }
            if let Some(v) = k.level {
                kn.level = v;
            }
            if let Some(v) = k.init {
                kn.init = v;
            }
            if let Some(v) = k.burgers_flux {
                kn.burgers_flux = v;
            }
            if let Some(v) = k.n_ladder {
                kn.n_ladder = v;
            }
            if let Some(v) = k.front_n {
                kn.front_n = v;
            }
        }
    }

    pub fn resolve(
        cmd: Command,
        preset: Preset,
        file: Option<&Path>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut c = Self::preset(cmd, preset);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let parsed: ConfigFile =
                toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            c.apply(parsed);
        }
        if let Some(s) = seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.n == 0 {
            bail!("params.n must be at least 1");
        }
        if !(p.alpha > 0.0) {
            bail!("params.alpha must be positive, got {}", p.alpha);
        }
        if !(p.sigma >= 0.0) {
            bail!("params.sigma must be non-negative, got {}", p.sigma);
        }
        if self.n_replicas == 0 {
            bail!("n_replicas must be at least 1");
        }
        if self.t_grid.iter().any(|t| !(*t >= 0.0)) || self.t_grid.windows(2).any(|w| w[1] < w[0]) {
            bail!(
                "t_grid must be non-negative and non-decreasing: {:?}",
                self.t_grid
            );
        }
        if !(self.knobs.eps > 0.0 && self.knobs.eps < 1.0) {
            bail!("knobs.eps must lie in (0,1), got {}", self.knobs.eps);
        }
        if self.knobs.grid_m < 2 {
            bail!("knobs.grid_m must be at least 2");
        }
        if !(self.knobs.level > 0.0 && self.knobs.level < 1.0) {
            bail!("knobs.level must lie in (0,1)");
        }
        if self.knobs.front_n == 0 {
            bail!("knobs.front_n must be positive");
        }
        if self.knobs.n_ladder.contains(&0) {
            bail!("knobs.n_ladder entries must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of `blob <len>\0<toml>`, the way git hashes content.
    pub fn content_hash(&self) -> String {
        let body = self.to_toml();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", body.len()).as_bytes());
        h.update(body.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
