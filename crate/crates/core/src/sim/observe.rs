//! Synthetic multi-head attention.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::config::{NoiseModel, SimConfig};
use crate::msa::AttentionObservation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadRole {
    Reliable,
    Uniform,
    Diffuse,
    Distractor,
}

const DISTRACTOR_SIGMA: f64 = 2.5;
const DISTRACTOR_JUMP: f64 = 0.1;
const DIFFUSE_SIGMA: f64 = 4.0;
const DIFFUSE_OFFSET: f64 = 2.0;

/// Gaussian bump over positions `1..=T`, normalised.
pub fn bump(text_len: usize, center: f64, sigma: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=text_len)
        .map(|t| {
            let d = t as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        // center far outside the text: all mass on the nearest end
        v.iter_mut().for_each(|x| *x = 0.0);
        let idx = if center < 1.0 { 0 } else { text_len - 1 };
        v[idx] = 1.0;
    }
    v
}

fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// Per-trace head layout and the evolving state of the noisy heads.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    layers: usize,
    heads: usize,
    text_len: usize,
    roles: Vec<HeadRole>,
    base_mass: Vec<f64>,
    /// Position each distractor head is currently stuck on.
    anchors: Vec<f64>,
    sigma_true: f64,
    noise: f64,
    mass_jitter: f64,
}

impl ObservationModel {
    pub fn new(cfg: &SimConfig, text_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let n = cfg.layers * cfg.heads;
        let reliable: Vec<usize> = cfg
            .reliable_heads
            .iter()
            .map(|&(l, h)| (l - 1) * cfg.heads + (h - 1))
            .collect();
        let mut noisy: Vec<usize> = (0..n).filter(|i| !reliable.contains(i)).collect();
        noisy.shuffle(rng);
        let mut roles = vec![HeadRole::Uniform; n];
        for &i in &reliable {
            roles[i] = HeadRole::Reliable;
        }
        let n_uniform = match cfg.noise_model {
            NoiseModel::Uniform => noisy.len(),
            NoiseModel::Mixed { uniform_fraction } => {
                (uniform_fraction * noisy.len() as f64).round() as usize
            }
            NoiseModel::DiffuseGaussian | NoiseModel::NonmonotonicDistractor => 0,
        };
        let other = match cfg.noise_model {
            NoiseModel::DiffuseGaussian => HeadRole::Diffuse,
            _ => HeadRole::Distractor,
        };
        for (k, &i) in noisy.iter().enumerate() {
            roles[i] = if k < n_uniform {
                HeadRole::Uniform
            } else {
                other
            };
        }

        let tm = &cfg.text_mass;
        let base_mass = roles
            .iter()
            .map(|role| {
                let base = match role {
                    HeadRole::Reliable => tm.reliable,
                    HeadRole::Uniform | HeadRole::Diffuse => tm.uniform,
                    HeadRole::Distractor => tm.distractor,
                };
                let spread = if tm.head_spread > 0.0 {
                    rng.random_range(-tm.head_spread..tm.head_spread)
                } else {
                    0.0
                };
                (base + spread).clamp(0.02, 1.0)
            })
            .collect();
        let anchors = roles
            .iter()
            .map(|role| match role {
                HeadRole::Distractor => rng.random_range(1.0..=text_len as f64),
                _ => 0.0,
            })
            .collect();
        ObservationModel {
            layers: cfg.layers,
            heads: cfg.heads,
            text_len,
            roles,
            base_mass,
            anchors,
            sigma_true: cfg.sigma_true,
            noise: cfg.attention_noise,
            mass_jitter: tm.step_jitter,
        }
    }

    pub fn role(&self, layer: usize, head: usize) -> HeadRole {
        self.roles[layer * self.heads + head]
    }

    pub fn roles(&self) -> &[HeadRole] {
        &self.roles
    }

    fn noisy(&self, mut v: Vec<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.noise > 0.0 {
            let mut n: Vec<f64> = (0..self.text_len).map(|_| Exp1.sample(rng)).collect();
            renormalize(&mut n);
            for (a, b) in v.iter_mut().zip(n) {
                *a = (1.0 - self.noise) * *a + self.noise * b;
            }
            renormalize(&mut v);
        }
        v
    }

    /// Attention for a decoder whose true text position is `position`.
    pub fn sample(&mut self, position: f64, rng: &mut ChaCha8Rng) -> AttentionObservation {
        let t = self.text_len;
        let center = position.clamp(1.0, t as f64);
        let mut values = Vec::with_capacity(self.roles.len() * t);
        let mut mass = Vec::with_capacity(self.roles.len());
        for i in 0..self.roles.len() {
            let slice = match self.roles[i] {
                HeadRole::Reliable => self.noisy(bump(t, center, self.sigma_true), rng),
                HeadRole::Uniform => vec![1.0 / t as f64; t],
                HeadRole::Diffuse => {
                    let z: f64 = StandardNormal.sample(rng);
                    bump(t, center + DIFFUSE_OFFSET * z, DIFFUSE_SIGMA)
                }
                HeadRole::Distractor => {
                    if rng.random::<f64>() < DISTRACTOR_JUMP {
                        self.anchors[i] = rng.random_range(1.0..=t as f64);
                    }
                    self.noisy(bump(t, self.anchors[i], DISTRACTOR_SIGMA), rng)
                }
            };
            values.extend(slice);
            let jitter = if self.mass_jitter > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                (self.mass_jitter * z).exp()
            } else {
                1.0
            };
            mass.push((self.base_mass[i] * jitter).clamp(0.0, 1.0));
        }
        AttentionObservation::with_text_mass(self.layers, self.heads, t, values, mass)
            .expect("synthetic slices are normalised")
    }
}
