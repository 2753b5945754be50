use serde::{Deserialize, Serialize};

use super::SimError;

/// Behaviour of the heads that are not reliable aligners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    /// Exactly uniform attention over the text.
    Uniform,
    /// Wide bump around a randomly displaced position.
    DiffuseGaussian,
    /// Broad bump parked on a random position, occasionally jumping to
    /// another one regardless of the true path.
    NonmonotonicDistractor,
    /// A fraction of the noisy heads uniform, the rest distractors.
    Mixed { uniform_fraction: f64 },
}

/// Natural speaking pace in semantic tokens per text token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PaceModel {
    pub mean: f64,
    /// Log-scale spread of the per-segment pace around `mean`.
    pub jitter: f64,
    /// Log-scale spread of the per-step pace.
    pub step_jitter: f64,
}

impl Default for PaceModel {
    fn default() -> Self {
        PaceModel {
            mean: 12.0,
            jitter: 0.12,
            step_jitter: 0.3,
        }
    }
}

/// Synthetic EOS logit before steering:
///
/// `base + slope * min(0, p - T) + drift * max(0, n / D - onset)`
///
/// with `p` the true text position, `n` the tokens generated and `D` the
/// planned total. Probabilities below `min_prob` are floored to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EosModel {
    pub base: f64,
    pub slope: f64,
    pub drift_onset: f64,
    pub drift: f64,
    pub min_prob: f64,
    /// Emit EOS exactly when the logit is positive instead of sampling.
    pub greedy: bool,
}

impl Default for EosModel {
    fn default() -> Self {
        EosModel {
            base: -3.5,
            slope: 2.0,
            drift_onset: 0.5,
            drift: 8.0,
            min_prob: 1e-4,
            greedy: false,
        }
    }
}

/// Share of each head's attention that lands on the text, by role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextMassModel {
    pub reliable: f64,
    pub uniform: f64,
    pub distractor: f64,
    /// Per-trace spread added to each head's base mass.
    pub head_spread: f64,
    /// Per-step multiplicative jitter.
    pub step_jitter: f64,
}

impl Default for TextMassModel {
    fn default() -> Self {
        TextMassModel {
            reliable: 0.35,
            uniform: 0.3,
            distractor: 0.45,
            head_spread: 0.15,
            step_jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub layers: usize,
    pub heads: usize,
    /// 1-based (layer, head) pairs that track the true position.
    pub reliable_heads: Vec<(usize, usize)>,
    /// Spread of the reliable heads' attention bump, in text positions.
    pub sigma_true: f64,
    pub noise_model: NoiseModel,
    /// Fraction of each reliable slice replaced by random noise.
    pub attention_noise: f64,
    pub tokens_per_text_token: PaceModel,
    /// Duration scaling factor applied to the plan's budgets.
    pub duration_scale: f64,
    /// How strongly the decoder follows its duration target, in [0, 1].
    pub duration_compliance: f64,
    pub eos: EosModel,
    pub text_mass: TextMassModel,
    /// Per-step switch probability of the random aligner; defaults to one
    /// switch per average segment budget.
    pub random_switch_prob: Option<f64>,
    /// Build the full mask every this many steps and compare it against
    /// the incremental row check (0 disables).
    pub full_mask_check_every: usize,
}

pub const DURATION_SCALES: [f64; 5] = [0.75, 0.875, 1.0, 1.125, 1.25];

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            layers: 4,
            heads: 4,
            reliable_heads: vec![(3, 2), (4, 1)],
            sigma_true: 1.0,
            noise_model: NoiseModel::Mixed {
                uniform_fraction: 0.75,
            },
            attention_noise: 0.3,
            tokens_per_text_token: PaceModel::default(),
            duration_scale: 1.0,
            duration_compliance: 0.5,
            eos: EosModel::default(),
            text_mass: TextMassModel::default(),
            random_switch_prob: None,
            full_mask_check_every: 0,
        }
    }
}

impl SimConfig {
    /// Same layout with every noise source switched off and greedy EOS.
    pub fn noise_free(&self) -> SimConfig {
        SimConfig {
            attention_noise: 0.0,
            tokens_per_text_token: PaceModel {
                jitter: 0.0,
                step_jitter: 0.0,
                ..self.tokens_per_text_token
            },
            text_mass: TextMassModel {
                head_spread: 0.0,
                step_jitter: 0.0,
                ..self.text_mass
            },
            eos: EosModel {
                greedy: true,
                ..self.eos
            },
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.layers == 0 || self.heads == 0 {
            return Err(SimError::Config("layers and heads must be >= 1".into()));
        }
        if self.reliable_heads.is_empty() {
            return Err(SimError::Config(
                "at least one reliable head is required".into(),
            ));
        }
        for &(l, h) in &self.reliable_heads {
            if l < 1 || l > self.layers || h < 1 || h > self.heads {
                return Err(SimError::Config(format!(
                    "reliable head ({l},{h}) out of range"
                )));
            }
        }
        let pace = &self.tokens_per_text_token;
        if !(pace.mean > 0.0) || pace.jitter < 0.0 || pace.step_jitter < 0.0 {
            return Err(SimError::Config(
                "pace mean must be > 0 and jitter >= 0".into(),
            ));
        }
        if !(self.sigma_true > 0.0) {
            return Err(SimError::Config("sigma_true must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.attention_noise) {
            return Err(SimError::Config(
                "attention_noise must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.duration_compliance) {
            return Err(SimError::Config(
                "duration_compliance must lie in [0, 1]".into(),
            ));
        }
        if !(self.duration_scale > 0.0) {
            return Err(SimError::Config("duration_scale must be positive".into()));
        }
        if let NoiseModel::Mixed { uniform_fraction } = self.noise_model {
            if !(0.0..=1.0).contains(&uniform_fraction) {
                return Err(SimError::Config(
                    "uniform_fraction must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Which steering controllers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SteeringFlags {
    pub local: bool,
    pub eos: bool,
}

impl SteeringFlags {
    pub const FULL: SteeringFlags = SteeringFlags {
        local: true,
        eos: true,
    };
    pub const NO_LOCAL: SteeringFlags = SteeringFlags {
        local: false,
        eos: true,
    };
    pub const NO_EOS: SteeringFlags = SteeringFlags {
        local: true,
        eos: false,
    };
    pub const NONE: SteeringFlags = SteeringFlags {
        local: false,
        eos: false,
    };
    pub const ALL: [SteeringFlags; 4] = [Self::FULL, Self::NO_LOCAL, Self::NO_EOS, Self::NONE];

    pub fn label(self) -> &'static str {
        match (self.local, self.eos) {
            (true, true) => "full",
            (false, true) => "no_local",
            (true, false) => "no_eos",
            (false, false) => "baseline",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.label() == s)
    }
}
