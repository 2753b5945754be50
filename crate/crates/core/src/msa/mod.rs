//! Monotonic stream alignment.
//!
//! A forward filter over text positions driven by decoder attention. Each
//! decode step runs
//!
//! * **predict**: push the previous posterior through a forward-only
//!   transition operator to get the prior;
//! * **select**: pick the attention head whose distribution scores best
//!   under the prior, `argmax_{l,h} prior · log A^(l,h)`;
//! * **update**: multiply the prior by the Gaussian-smoothed selected
//!   attention and renormalise.
//!
//! The expected aligned position of the posterior drives segment switching.
//! Positions are 1-based in the API; vectors are indexed from 0.

pub mod ablation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::SegmentPlan;

pub use ablation::{align_step_ablation, AblationState, AlignerVariant};

/// Normalisation tolerance for attention slices.
pub const SLICE_TOL: f64 = 1e-6;
/// Below this evidence mass the update keeps the prior.
pub const DEGENERATE_Z: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MsaError {
    #[error("text must contain at least one position")]
    EmptyText,
    #[error("attention tensor has {got} values, expected {layers}x{heads}x{text_len}")]
    Shape {
        layers: usize,
        heads: usize,
        text_len: usize,
        got: usize,
    },
    #[error("attention slice ({layer},{head}) sums to {sum}")]
    Unnormalized { layer: usize, head: usize, sum: f64 },
    #[error("attention contains a negative or non-finite value")]
    InvalidValue,
    #[error("belief has {belief} positions but observation has {obs}")]
    LengthMismatch { belief: usize, obs: usize },
    #[error("unknown aligner variant `{0}`")]
    BadVariant(String),
    #[error("aligner state does not match variant {0:?}")]
    StateMismatch(AlignerVariant),
    #[error("invalid MSA configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsaConfig {
    /// Probability mass moved one position forward per step.
    pub advance_prob: f64,
    pub smoothing_sigma: f64,
    /// Floor applied to attention values before taking the log.
    pub log_floor: f64,
    pub kernel_radius: usize,
    /// Number of heads averaged by the top-k greedy ablation.
    pub top_k: usize,
}

impl Default for MsaConfig {
    fn default() -> Self {
        let sigma = 1.2;
        MsaConfig {
            advance_prob: 0.1,
            smoothing_sigma: sigma,
            log_floor: 1e-8,
            kernel_radius: (3.0 * sigma).ceil() as usize,
            top_k: 4,
        }
    }
}

impl MsaConfig {
    pub fn validate(&self) -> Result<(), MsaError> {
        if !(self.advance_prob > 0.0 && self.advance_prob < 1.0) {
            return Err(MsaError::Config("advance_prob must lie in (0, 1)"));
        }
        if !(self.smoothing_sigma > 0.0) {
            return Err(MsaError::Config("smoothing_sigma must be positive"));
        }
        if !(self.log_floor > 0.0) {
            return Err(MsaError::Config("log_floor must be positive"));
        }
        if self.kernel_radius < 1 {
            return Err(MsaError::Config("kernel_radius must be >= 1"));
        }
        if self.top_k < 1 {
            return Err(MsaError::Config("top_k must be >= 1"));
        }
        Ok(())
    }
}

/// Attention from the current semantic token to the text, one normalised
/// distribution per (layer, head).
///
/// `text_mass` is the share of each head's total attention that fell on the
/// text before renormalisation; the raw attention is `text_mass * values`.
/// It defaults to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionObservation {
    layers: usize,
    heads: usize,
    text_len: usize,
    values: Vec<f64>,
    text_mass: Vec<f64>,
}

impl AttentionObservation {
    pub fn new(
        layers: usize,
        heads: usize,
        text_len: usize,
        values: Vec<f64>,
    ) -> Result<Self, MsaError> {
        Self::with_text_mass(layers, heads, text_len, values, vec![1.0; layers * heads])
    }

    pub fn with_text_mass(
        layers: usize,
        heads: usize,
        text_len: usize,
        values: Vec<f64>,
        text_mass: Vec<f64>,
    ) -> Result<Self, MsaError> {
        if text_len == 0 {
            return Err(MsaError::EmptyText);
        }
        if layers == 0 || heads == 0 || values.len() != layers * heads * text_len {
            return Err(MsaError::Shape {
                layers,
                heads,
                text_len,
                got: values.len(),
            });
        }
        if text_mass.len() != layers * heads {
            return Err(MsaError::Shape {
                layers,
                heads,
                text_len: 1,
                got: text_mass.len(),
            });
        }
        if values
            .iter()
            .chain(text_mass.iter())
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(MsaError::InvalidValue);
        }
        let obs = AttentionObservation {
            layers,
            heads,
            text_len,
            values,
            text_mass,
        };
        for l in 0..layers {
            for h in 0..heads {
                let sum: f64 = obs.slice(l, h).iter().sum();
                if (sum - 1.0).abs() > SLICE_TOL {
                    return Err(MsaError::Unnormalized {
                        layer: l + 1,
                        head: h + 1,
                        sum,
                    });
                }
            }
        }
        Ok(obs)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn text_len(&self) -> usize {
        self.text_len
    }

    /// Normalised attention of head `(layer, head)`, both 0-based.
    pub fn slice(&self, layer: usize, head: usize) -> &[f64] {
        let start = (layer * self.heads + head) * self.text_len;
        &self.values[start..start + self.text_len]
    }

    pub fn text_mass(&self, layer: usize, head: usize) -> f64 {
        self.text_mass[layer * self.heads + head]
    }

    /// Iterates `(layer, head)` pairs, 0-based, layer-major.
    pub fn head_indices(&self) -> impl Iterator<Item = (usize, usize)> {
        let heads = self.heads;
        (0..self.layers).flat_map(move |l| (0..heads).map(move |h| (l, h)))
    }
}

/// Prior and posterior over the `T` text positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentBelief {
    /// Empty until the first predict.
    pub prior: Vec<f64>,
    pub posterior: Vec<f64>,
}

impl AlignmentBelief {
    pub fn text_len(&self) -> usize {
        self.posterior.len()
    }

    pub fn one_hot(text_len: usize, position: usize) -> Self {
        let mut posterior = vec![0.0; text_len];
        posterior[position - 1] = 1.0;
        AlignmentBelief {
            prior: Vec::new(),
            posterior,
        }
    }
}

/// The head chosen as observation, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadChoice {
    pub layer: usize,
    pub head: usize,
    pub score: f64,
}

/// A forward-only stochastic transition over text positions.
pub trait TransitionOperator {
    fn propagate(&self, posterior: &[f64]) -> Vec<f64>;
}

/// Stay with probability `1 - p`, advance one position with probability `p`;
/// the final position absorbs its own forward mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTap {
    pub advance_prob: f64,
}

impl TransitionOperator for TwoTap {
    fn propagate(&self, posterior: &[f64]) -> Vec<f64> {
        let p = self.advance_prob;
        let n = posterior.len();
        let mut prior = vec![0.0; n];
        for (t, &mass) in posterior.iter().enumerate() {
            if t + 1 < n {
                prior[t] += (1.0 - p) * mass;
                prior[t + 1] += p * mass;
            } else {
                prior[t] += mass;
            }
        }
        prior
    }
}

/// Posterior one-hot at position 1.
pub fn init_belief(text_len: usize) -> Result<AlignmentBelief, MsaError> {
    if text_len == 0 {
        return Err(MsaError::EmptyText);
    }
    Ok(AlignmentBelief::one_hot(text_len, 1))
}

/// Fills the prior from the posterior with the two-tap operator.
pub fn predict(belief: &AlignmentBelief, cfg: &MsaConfig) -> AlignmentBelief {
    predict_with(
        belief,
        &TwoTap {
            advance_prob: cfg.advance_prob,
        },
    )
}

pub fn predict_with(belief: &AlignmentBelief, op: &dyn TransitionOperator) -> AlignmentBelief {
    AlignmentBelief {
        prior: op.propagate(&belief.posterior),
        posterior: belief.posterior.clone(),
    }
}

fn log_score(prior: &[f64], att: &[f64], floor: f64) -> f64 {
    prior
        .iter()
        .zip(att)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, a)| p * a.max(floor).ln())
        .sum()
}

/// Head maximising `prior · log(max(A, floor))`; ties go to the lowest
/// (layer, head).
pub fn select_head(
    prior: &[f64],
    obs: &AttentionObservation,
    cfg: &MsaConfig,
) -> Result<HeadChoice, MsaError> {
    if prior.len() != obs.text_len() {
        return Err(MsaError::LengthMismatch {
            belief: prior.len(),
            obs: obs.text_len(),
        });
    }
    let mut best: Option<HeadChoice> = None;
    for (l, h) in obs.head_indices() {
        let score = log_score(prior, obs.slice(l, h), cfg.log_floor);
        if best.is_none_or(|b| score > b.score) {
            best = Some(HeadChoice {
                layer: l + 1,
                head: h + 1,
                score,
            });
        }
    }
    Ok(best.expect("observation has at least one head"))
}

/// Truncated discrete Gaussian convolution. The kernel is renormalised over
/// the positions that exist at each output index, and the result is scaled
/// to sum to one (an all-zero input stays zero).
pub fn smooth(input: &[f64], cfg: &MsaConfig) -> Vec<f64> {
    let sigma = cfg.smoothing_sigma;
    let radius = cfg.kernel_radius as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let n = input.len() as isize;
    let mut out = vec![0.0; input.len()];
    for t in 0..n {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for k in -radius..=radius {
            let s = t + k;
            if s < 0 || s >= n {
                continue;
            }
            let w = kernel[(k + radius) as usize];
            acc += w * input[s as usize];
            wsum += w;
        }
        out[t as usize] = acc / wsum;
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// `posterior = prior ⊙ evidence / Z`, falling back to the prior when
/// `Z < 1e-12`.
pub fn fuse(prior: &[f64], evidence: &[f64]) -> Vec<f64> {
    let mut post: Vec<f64> = prior.iter().zip(evidence).map(|(p, e)| p * e).collect();
    let z: f64 = post.iter().sum();
    if z < DEGENERATE_Z {
        return prior.to_vec();
    }
    post.iter_mut().for_each(|v| *v /= z);
    post
}

/// Fuses the smoothed attention of the chosen head into the prior.
pub fn update(
    prior: &[f64],
    obs: &AttentionObservation,
    choice: &HeadChoice,
    cfg: &MsaConfig,
) -> Result<AlignmentBelief, MsaError> {
    if prior.len() != obs.text_len() {
        return Err(MsaError::LengthMismatch {
            belief: prior.len(),
            obs: obs.text_len(),
        });
    }
    let evidence = smooth(obs.slice(choice.layer - 1, choice.head - 1), cfg);
    Ok(AlignmentBelief {
        prior: prior.to_vec(),
        posterior: fuse(prior, &evidence),
    })
}

/// `sum_t t * posterior[t]` with 1-based positions.
pub fn expected_position(posterior: &[f64]) -> f64 {
    posterior
        .iter()
        .enumerate()
        .map(|(t, p)| (t + 1) as f64 * p)
        .sum()
}

/// Advances to the next segment once the expected aligned position passes
/// the current segment's boundary. Never moves more than one segment.
pub fn maybe_switch(m: usize, posterior: &[f64], plan: &SegmentPlan) -> usize {
    if m < plan.num_segments() && expected_position(posterior) > plan.boundaries()[m - 1] as f64 {
        m + 1
    } else {
        m
    }
}

/// One full predict/select/update step.
pub fn msa_step(
    belief: &AlignmentBelief,
    obs: &AttentionObservation,
    cfg: &MsaConfig,
) -> Result<(AlignmentBelief, HeadChoice), MsaError> {
    if belief.text_len() != obs.text_len() {
        return Err(MsaError::LengthMismatch {
            belief: belief.text_len(),
            obs: obs.text_len(),
        });
    }
    let predicted = predict(belief, cfg);
    let choice = select_head(&predicted.prior, obs, cfg)?;
    let updated = update(&predicted.prior, obs, &choice, cfg)?;
    Ok((updated, choice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::build_plan;
    use approx::assert_abs_diff_eq;

    fn obs2(heads: &[[f64; 2]]) -> AttentionObservation {
        let values = heads.iter().flat_map(|h| h.iter().copied()).collect();
        AttentionObservation::new(1, heads.len(), 2, values).unwrap()
    }

    #[test]
    fn init_examples() {
        assert_eq!(init_belief(4).unwrap().posterior, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(init_belief(1).unwrap().posterior, vec![1.0]);
        assert_eq!(init_belief(0), Err(MsaError::EmptyText));
    }

    #[test]
    fn predict_examples() {
        let cfg = MsaConfig::default();
        let b = AlignmentBelief::one_hot(4, 2);
        let prior = predict(&b, &cfg).prior;
        let expected = [0.0, 0.9, 0.1, 0.0];
        for (a, e) in prior.iter().zip(expected) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
        let b = AlignmentBelief::one_hot(4, 4);
        assert_eq!(predict(&b, &cfg).prior, vec![0.0, 0.0, 0.0, 1.0]);
        let b = AlignmentBelief {
            prior: vec![],
            posterior: vec![0.5, 0.5],
        };
        let prior = predict(&b, &cfg).prior;
        assert_abs_diff_eq!(prior[0], 0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(prior[1], 0.55, epsilon = 1e-15);
    }

    #[test]
    fn select_head_examples() {
        let cfg = MsaConfig::default();
        let obs = obs2(&[[0.1, 0.9], [0.9, 0.1]]);
        let choice = select_head(&[0.9, 0.1], &obs, &cfg).unwrap();
        assert_eq!((choice.layer, choice.head), (1, 2));
        let expected = 0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln();
        assert_abs_diff_eq!(choice.score, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(choice.score, -0.3251, epsilon = 1e-3);
        let other = log_score(&[0.9, 0.1], &[0.1, 0.9], cfg.log_floor);
        assert_abs_diff_eq!(other, -2.0831, epsilon = 1e-3);

        // delta prior picks the head with the most attention at that position
        let obs = obs2(&[[0.6, 0.4], [0.3, 0.7], [0.2, 0.8]]);
        let choice = select_head(&[0.0, 1.0], &obs, &cfg).unwrap();
        assert_eq!(choice.head, 3);

        let obs = obs2(&[[0.5, 0.5], [0.5, 0.5]]);
        let choice = select_head(&[0.3, 0.7], &obs, &cfg).unwrap();
        assert_eq!((choice.layer, choice.head), (1, 1));
    }

    #[test]
    fn smooth_examples() {
        let cfg = MsaConfig::default();
        let uniform = vec![0.2; 5];
        for v in smooth(&uniform, &cfg) {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
        }

        // one-hot in the middle of 17 positions: symmetric bump whose shape
        // is the truncated kernel (interior, so no boundary effects)
        let mut hot = vec![0.0; 17];
        hot[8] = 1.0;
        let out = smooth(&hot, &cfg);
        let w: Vec<f64> = (-4i32..=4)
            .map(|k| (-(k * k) as f64 / (2.0 * 1.2 * 1.2)).exp())
            .collect();
        let wsum: f64 = w.iter().sum();
        for k in -4i32..=4 {
            let idx = (8 + k) as usize;
            assert_abs_diff_eq!(out[idx], w[(k + 4) as usize] / wsum, epsilon = 1e-12);
        }
        assert_eq!(out[0], 0.0);
        for k in 1..=4 {
            assert_abs_diff_eq!(out[8 - k], out[8 + k], epsilon = 1e-15);
        }

        let tiny = MsaConfig {
            smoothing_sigma: 1e-6,
            ..cfg
        };
        let input = [0.1, 0.4, 0.3, 0.2];
        for (a, b) in smooth(&input, &tiny).iter().zip(input) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(fuse(&[0.5, 0.5], &[0.8, 0.2]), vec![0.8, 0.2]);
        let post = fuse(&[0.9, 0.1], &[0.1, 0.9]);
        assert_abs_diff_eq!(post[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(post[1], 0.5, epsilon = 1e-12);
        assert_eq!(
            fuse(&[0.0, 1.0, 0.0], &[0.2, 0.3, 0.5]),
            vec![0.0, 1.0, 0.0]
        );
        // no overlap between prior and evidence keeps the prior
        assert_eq!(fuse(&[1.0, 0.0], &[0.0, 1.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn expected_position_examples() {
        assert_eq!(expected_position(&[0.0, 0.0, 1.0]), 3.0);
        assert_eq!(expected_position(&[0.25; 4]), 2.5);
        assert_eq!(expected_position(&[0.25, 0.75]), 1.75);
    }

    #[test]
    fn switch_examples() {
        let plan = build_plan(8, &[4], 1, None).unwrap();
        let at = |t| AlignmentBelief::one_hot(8, t).posterior;
        assert_eq!(maybe_switch(1, &at(5), &plan), 2);
        assert_eq!(maybe_switch(1, &at(4), &plan), 1);
        assert_eq!(maybe_switch(2, &at(8), &plan), 2);
        // one segment at a time, even far past the next boundary
        let plan = build_plan(8, &[2, 4], 1, None).unwrap();
        assert_eq!(maybe_switch(1, &at(8), &plan), 2);
    }

    #[test]
    fn observation_validation() {
        assert!(matches!(
            AttentionObservation::new(1, 1, 2, vec![0.5, 0.4]),
            Err(MsaError::Unnormalized { .. })
        ));
        assert!(matches!(
            AttentionObservation::new(1, 2, 2, vec![0.5, 0.5]),
            Err(MsaError::Shape { .. })
        ));
        assert!(matches!(
            AttentionObservation::new(1, 1, 2, vec![1.5, -0.5]),
            Err(MsaError::InvalidValue)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(MsaConfig::default().validate().is_ok());
        assert_eq!(MsaConfig::default().kernel_radius, 4);
        let bad = MsaConfig {
            advance_prob: 1.0,
            ..MsaConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
