//! Experiment configuration: TOML loading, the preset catalog, and the
//! refinement-ladder description.
//!
//! A config file maps directly onto [`SimConfig`]: sections `[kernel]`,
//! `[noise]`, `[sigma]`, `[grid]`, `[time]`, `[u0]` plus top-level scalars
//! (`seed`, `replicas`, `overflow_cap`). Enum-valued entries use the
//! variant-as-table form, e.g.
//!
//! ```toml
//! [sigma.PowerLaw]
//! exponent = 2.0
//! scale = 1.0
//! signed = false
//! weight = { AbsPow = { scale = 1.0, power = 1.0 } }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SheError};
use crate::kernel::KernelSpec;
use crate::noise::{preset_uniform, WeightFn, WeightSpec};
use crate::odes::{
    regime_classify, InitialClass, NoiseKind, Regime, SigmaClass,
};
use crate::sigma::SigmaSpec;
use crate::solver::{
    GridConfig, InitialCondition, NoiseConfig, SimConfig, TimeConfig, DEFAULT_OVERFLOW_CAP,
};

/// Version stamp written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// One rung of the refinement ladder.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RungSpec {
    pub dt: f64,
    pub nodes: usize,
    pub replicas: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderSpec {
    pub rungs: Vec<RungSpec>,
}

impl LadderSpec {
    /// Coarse-to-fine three-rung ladder anchored at the finest resolution.
    pub fn standard(dt: f64, nodes: usize, replicas: usize) -> Self {
        Self {
            rungs: vec![
                RungSpec {
                    dt: dt * 4.0,
                    nodes: nodes / 2 + 1,
                    replicas: replicas / 4,
                },
                RungSpec {
                    dt: dt * 2.0,
                    nodes: nodes * 3 / 4 + 1,
                    replicas: replicas / 2,
                },
                RungSpec {
                    dt,
                    nodes,
                    replicas,
                },
            ],
        }
    }
}

/// Optional local-existence probe attached to a preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub levels: Vec<f64>,
    pub horizon: f64,
}

/// A named, self-consistent experiment definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub config: SimConfig,
    pub ladder: LadderSpec,
    pub expected_regime: Regime,
    pub citation: String,
    pub probe: Option<ProbeSpec>,
}

impl ExperimentPreset {
    /// Classifier inputs read off the config.
    pub fn classification_inputs(&self) -> (f64, usize, f64, NoiseKind, InitialClass, SigmaClass) {
        let sigma_class = if self.config.sigma.is_superlinear() {
            SigmaClass::Superlinear
        } else {
            SigmaClass::Lipschitz
        };
        let u0_class = match &self.config.u0 {
            InitialCondition::Constant { c1 } if *c1 > 0.0 => InitialClass::BoundedBelow,
            InitialCondition::Bump { height, radius, .. } if *height > 0.0 && *radius > 0.0 => {
                InitialClass::PositiveMeasure
            }
            _ => InitialClass::Zero,
        };
        (
            self.config.kernel.alpha,
            self.config.kernel.d,
            self.config.sigma.exponent(),
            self.config.noise.kind,
            u0_class,
            sigma_class,
        )
    }

    /// Load-time gate: the declared regime must match the classifier, and the
    /// simulation config must validate.
    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        KernelSpec::new(self.config.kernel.alpha, self.config.kernel.d)?;
        let (a, d, e, n, u, s) = self.classification_inputs();
        let (got, _) = regime_classify(a, d, e, n, u, s);
        if got != self.expected_regime {
            return Err(SheError::Config(format!(
                "preset '{}' declares regime {} but the classifier says {}",
                self.name, self.expected_regime, got
            )));
        }
        if self.ladder.rungs.is_empty() {
            return Err(SheError::Config(format!("preset '{}' has an empty ladder", self.name)));
        }
        Ok(())
    }
}

/// SHA-256 of the resolved configuration, the identity used for
/// reproducibility claims.
pub fn config_hash(config: &SimConfig) -> String {
    let text = toml::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    format!("{:x}", hasher.finalize())
}

pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SheError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: SimConfig =
        toml::from_str(&text).map_err(|e| SheError::Config(format!("parse error: {e}")))?;
    config.validate()?;
    KernelSpec::new(config.kernel.alpha, config.kernel.d)?;
    Ok(config)
}

fn linear_weight() -> WeightFn {
    WeightFn::AbsPow {
        scale: 1.0,
        power: 1.0,
    }
}

fn uniform_weights() -> WeightSpec {
    // nu uniform on [1,2]: int h dnu = 3/2, int h^2 dnu = 7/3.
    WeightSpec {
        j: linear_weight(),
        j_bar: linear_weight(),
        big_k: 2.5,
        kappa: 1.0,
    }
}

/// Linear sigma, non-compensated, moments grow like a clean exponential.
pub fn preset_lipschitz_baseline() -> ExperimentPreset {
    ExperimentPreset {
        name: "lipschitz-baseline".into(),
        config: SimConfig {
            kernel: KernelSpec::new(2.0, 1).unwrap(),
            noise: NoiseConfig {
                kind: NoiseKind::NonCompensated,
                levy: preset_uniform(),
                weights: uniform_weights(),
                lambda: 1.0,
            },
            sigma: SigmaSpec::Linear {
                weight: linear_weight(),
                scale: 1.0,
            },
            u0: InitialCondition::Constant { c1: 1.0 },
            grid: GridConfig {
                half_width: 10.0,
                nodes: 129,
            },
            time: TimeConfig {
                dt: 1e-3,
                horizon: 0.5,
                snapshots: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
            },
            overflow_cap: DEFAULT_OVERFLOW_CAP,
            seed: 42,
            replicas: 400,
            moment_order: None,
        },
        ladder: LadderSpec::standard(1e-3, 129, 400),
        expected_regime: Regime::LipschitzExistence,
        citation: "globally Lipschitz sigma, first-moment framework".into(),
        probe: Some(ProbeSpec {
            levels: vec![50.0, 100.0, 200.0],
            horizon: 0.25,
        }),
    }
}

/// sigma(x, h) = h x^2, non-compensated, constant initial data: the
/// first-moment comparison bound explodes at t* = 1/(kappa lambda L c1).
///
/// The jump intensity is deliberately high and lambda small: pathwise
/// divergence comes from jump pile-ups on hot cells, and this corner is where
/// the observed cap-hitting median lands below the comparison bound's t*.
pub fn preset_noncompensated_superlinear() -> ExperimentPreset {
    ExperimentPreset {
        name: "noncompensated-superlinear".into(),
        config: SimConfig {
            kernel: KernelSpec::new(2.0, 1).unwrap(),
            noise: NoiseConfig {
                kind: NoiseKind::NonCompensated,
                levy: crate::noise::LevyMeasureSpec::new(
                    crate::noise::NuDensity::Uniform {
                        lo: 1.0,
                        hi: 2.0,
                        density: 48.0,
                    },
                    vec![1.0],
                )
                .unwrap(),
                // J matches sigma's weight exactly; the lower weight Jbar is
                // the constant 1 = inf h on the support, which keeps the
                // comparison constant kappa an honest lower bound.
                weights: WeightSpec {
                    j: linear_weight(),
                    j_bar: WeightFn::Const(1.0),
                    big_k: 120.0,
                    kappa: 40.0,
                },
                lambda: 0.025,
            },
            sigma: SigmaSpec::PowerLaw {
                weight: linear_weight(),
                exponent: 2.0,
                scale: 1.0,
                signed: false,
            },
            u0: InitialCondition::Constant { c1: 1.0 },
            grid: GridConfig {
                half_width: 10.0,
                nodes: 129,
            },
            time: TimeConfig {
                dt: 1e-3,
                horizon: 0.8,
                snapshots: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.7, 0.8],
            },
            overflow_cap: DEFAULT_OVERFLOW_CAP,
            seed: 42,
            replicas: 200,
            moment_order: None,
        },
        ladder: LadderSpec::standard(1e-3, 129, 200),
        expected_regime: Regime::NoGlobalSolution,
        citation: "non-compensated, superlinear sigma, u0 bounded below".into(),
        probe: None,
    }
}

/// sigma(x, h) = h x^1.5, compensated, second-moment framework.
pub fn preset_compensated_superlinear() -> ExperimentPreset {
    ExperimentPreset {
        name: "compensated-superlinear".into(),
        config: SimConfig {
            kernel: KernelSpec::new(2.0, 1).unwrap(),
            noise: NoiseConfig {
                kind: NoiseKind::Compensated,
                levy: preset_uniform(),
                weights: uniform_weights(),
                lambda: 2.0,
            },
            sigma: SigmaSpec::PowerLaw {
                weight: linear_weight(),
                exponent: 1.5,
                scale: 1.0,
                signed: true,
            },
            u0: InitialCondition::Constant { c1: 1.0 },
            grid: GridConfig {
                half_width: 10.0,
                nodes: 129,
            },
            time: TimeConfig {
                dt: 1e-3,
                horizon: 0.5,
                snapshots: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            },
            overflow_cap: DEFAULT_OVERFLOW_CAP,
            seed: 42,
            replicas: 200,
            moment_order: None,
        },
        ladder: LadderSpec::standard(1e-3, 129, 200),
        expected_regime: Regime::NoGlobalSolution,
        citation: "compensated, 1 < beta < alpha, d = 1".into(),
        probe: None,
    }
}

/// Bump initial data, non-compensated, 1 < gamma < 1 + alpha/d.
pub fn preset_bump_initial() -> ExperimentPreset {
    ExperimentPreset {
        name: "bump-initial".into(),
        config: SimConfig {
            kernel: KernelSpec::new(2.0, 1).unwrap(),
            noise: NoiseConfig {
                kind: NoiseKind::NonCompensated,
                levy: preset_uniform(),
                weights: uniform_weights(),
                lambda: 2.0,
            },
            sigma: SigmaSpec::PowerLaw {
                weight: linear_weight(),
                exponent: 1.5,
                scale: 1.0,
                signed: false,
            },
            u0: InitialCondition::Bump {
                center: 0.0,
                radius: 1.0,
                height: 1.0,
            },
            grid: GridConfig {
                half_width: 10.0,
                nodes: 129,
            },
            time: TimeConfig {
                dt: 1e-3,
                horizon: 0.5,
                snapshots: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            },
            overflow_cap: DEFAULT_OVERFLOW_CAP,
            seed: 42,
            replicas: 200,
            moment_order: None,
        },
        ladder: LadderSpec::standard(1e-3, 129, 200),
        expected_regime: Regime::NoGlobalSolution,
        citation: "non-compensated, u0 positive on a set of positive measure".into(),
        probe: None,
    }
}

pub const PRESET_NAMES: [&str; 4] = [
    "lipschitz-baseline",
    "compensated-superlinear",
    "noncompensated-superlinear",
    "bump-initial",
];

/// Look a preset up by name: `SHE_LAB_PRESET_DIR` TOML files first (file
/// `<name>.toml` deserializing to an [`ExperimentPreset`]), then built-ins.
pub fn load_preset(name: &str) -> Result<ExperimentPreset> {
    if let Ok(dir) = std::env::var("SHE_LAB_PRESET_DIR") {
        let candidate = Path::new(&dir).join(format!("{name}.toml"));
        if candidate.exists() {
            let text = std::fs::read_to_string(&candidate)
                .map_err(|e| SheError::Config(format!("cannot read {}: {e}", candidate.display())))?;
            let preset: ExperimentPreset = toml::from_str(&text)
                .map_err(|e| SheError::Config(format!("parse error in {}: {e}", candidate.display())))?;
            preset.check()?;
            return Ok(preset);
        }
    }
    let preset = match name {
        "lipschitz-baseline" => preset_lipschitz_baseline(),
        "compensated-superlinear" => preset_compensated_superlinear(),
        "noncompensated-superlinear" => preset_noncompensated_superlinear(),
        "bump-initial" => preset_bump_initial(),
        _ => {
            return Err(SheError::Config(format!(
                "unknown preset '{name}' (built-ins: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    preset.check()?;
    Ok(preset)
}
