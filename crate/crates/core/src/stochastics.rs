//! Waiting-time distributions and reproducible sampling.
//!
//! The generator is SplitMix64 (Steele, Lea and Flood) with its published
//! constants, so a seed produces the same stream on every platform and in any
//! language that reimplements the few lines below:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! output z ^ (z >> 31)
//! uniform = (output >> 11) * 2^-53            in [0, 1)
//! child(seed, i) = mix(seed ^ mix(i + 0xD1B54A32D192ED03))
//! ```
//!
//! where `mix` is the output function applied to its argument (without the
//! state increment). Atom selection walks the atoms in declaration order and picks
//! the first whose cumulative probability exceeds the uniform draw.

use thiserror::Error;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_2: u64 = 0x94D0_49BB_1331_11EB;
const CHILD_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("distribution has no atoms")]
    Empty,
    #[error("interval {0} must be positive and finite")]
    NonPositiveInterval(f64),
    #[error("probability {0} must lie in (0, 1]")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("duplicate atom at mu = {0}")]
    DuplicateAtom(f64),
    #[error("no bimodal distribution with p1 = {p1}, mu1 = {mu1} has mean {mean}")]
    InfeasibleMean { p1: f64, mu1: f64, mean: f64 },
}

/// The SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_2);
    z ^ (z >> 31)
}

/// Seed for realisation `index` of a run seeded with `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(CHILD_STREAM)))
}

/// SplitMix64 stream. Single owner; derive children for parallel work.
#[derive(Debug, Clone)]
pub struct SeededSampler {
    seed: u64,
    state: u64,
}

impl SeededSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed, state: seed }
    }

    /// Independent stream for realisation `index`.
    pub fn child(seed: u64, index: u64) -> Self {
        Self::new(child_seed(seed, index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Discrete waiting-time density `p(mu)` as (interval in us, probability) atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDistribution {
    atoms: Vec<(f64, f64)>,
}

/// Moments of an interval distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// us
    pub mean: f64,
    /// us^2
    pub variance: f64,
    /// `variance / mean^2`
    pub kappa: f64,
    /// `<mu^3>` in us^3
    pub third_raw: f64,
}

impl IntervalDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, DistributionError> {
        if atoms.is_empty() {
            return Err(DistributionError::Empty);
        }
        for &(mu, p) in &atoms {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(DistributionError::NonPositiveInterval(mu));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(DistributionError::BadProbability(p));
            }
        }
        for (i, &(mu, _)) in atoms.iter().enumerate() {
            if atoms[..i].iter().any(|&(other, _)| other == mu) {
                return Err(DistributionError::DuplicateAtom(mu));
            }
        }
        let total: f64 = atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(DistributionError::NotNormalized(total));
        }
        Ok(Self { atoms })
    }

    /// Every interval equals `mu`.
    pub fn deterministic(mu: f64) -> Result<Self, DistributionError> {
        Self::new(vec![(mu, 1.0)])
    }

    /// Two atoms; collapses to a single atom when `mu1` and `mu2` agree to round-off.
    pub fn bimodal(mu1: f64, p1: f64, mu2: f64) -> Result<Self, DistributionError> {
        if (mu1 - mu2).abs() <= 1e-12 * mu1.abs().max(mu2.abs()) {
            return Self::deterministic(mu1);
        }
        if p1 == 1.0 {
            return Self::deterministic(mu1);
        }
        Self::new(vec![(mu1, p1), (mu2, 1.0 - p1)])
    }

    /// Bimodal with the second atom placed so that the mean equals `mean`.
    pub fn bimodal_with_mean(p1: f64, mu1: f64, mean: f64) -> Result<Self, DistributionError> {
        if p1 >= 1.0 {
            return if (mu1 - mean).abs() <= 1e-12 * mean {
                Self::deterministic(mean)
            } else {
                Err(DistributionError::InfeasibleMean { p1, mu1, mean })
            };
        }
        let mu2 = (mean - p1 * mu1) / (1.0 - p1);
        if mu2.is_nan() || mu2 <= 0.0 {
            return Err(DistributionError::InfeasibleMean { p1, mu1, mean });
        }
        // Snap round-off so kappa = 0 yields a single atom.
        if (mu2 - mu1).abs() <= 1e-12 * mean {
            return Self::deterministic(mu1);
        }
        Self::bimodal(mu1, p1, mu2)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn is_deterministic(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn moments(&self) -> Moments {
        let mean: f64 = self.atoms.iter().map(|&(mu, p)| p * mu).sum();
        let variance: f64 = if self.is_deterministic() {
            0.0
        } else {
            self.atoms.iter().map(|&(mu, p)| p * (mu - mean) * (mu - mean)).sum()
        };
        let third_raw = self.atoms.iter().map(|&(mu, p)| p * mu * mu * mu).sum();
        Moments { mean, variance, kappa: variance / (mean * mean), third_raw }
    }

    /// Index of the atom selected by a uniform draw `u` in `[0, 1)`.
    pub fn atom_for_uniform(&self, u: f64) -> usize {
        let mut cumulative = 0.0;
        for (i, &(_, p)) in self.atoms.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    pub fn sample_index(&self, sampler: &mut SeededSampler) -> usize {
        if self.is_deterministic() {
            // Still consume a draw so the stream position does not depend on the atom count.
            sampler.next_u64();
            return 0;
        }
        self.atom_for_uniform(sampler.next_f64())
    }
}

/// `m` i.i.d. intervals drawn from `d`.
pub fn sample_intervals(d: &IntervalDistribution, sampler: &mut SeededSampler, m: usize) -> Vec<f64> {
    sample_atom_indices(d, sampler, m).into_iter().map(|i| d.atoms[i].0).collect()
}

pub fn sample_atom_indices(d: &IntervalDistribution, sampler: &mut SeededSampler, m: usize) -> Vec<usize> {
    (0..m).map(|_| d.sample_index(sampler)).collect()
}

/// `m C <mu^3>`: how far the skewness condition is from failing. Small is good;
/// the caller decides what "small" means (0.1 is a reasonable reading).
pub fn weak_zeno_margin(d: &IntervalDistribution, m: usize, remainder_bound: f64) -> f64 {
    m as f64 * remainder_bound * d.moments().third_raw
}
