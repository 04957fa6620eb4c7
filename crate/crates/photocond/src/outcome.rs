//! The result of one conditional process: unnormalized outcome weights, the
//! event probability and the normalized post-selected distribution.

use crate::error::{Error, Result};
use crate::numerics::NeumaierSum;
use crate::states::PhotonNumberDistribution;

/// Probabilities below this are treated as an impossible outcome rather
/// than returned as a posterior of pure rounding noise.
pub(crate) const MIN_PROBABILITY: f64 = 1e-300;

/// Outcome of one (process, detector, parameters) evaluation.
///
/// `probability` is the sum of the unnormalized weights; for the exact maps
/// it lies in [0, 1], while the low-intensity ladder models are unbounded
/// and may report probabilities above 1.
#[derive(Debug, Clone)]
pub struct OutcomeRecord {
    weights: Vec<f64>,
    probability: f64,
    posterior: PhotonNumberDistribution,
    mean: f64,
    second_factorial: f64,
}

impl OutcomeRecord {
    /// Normalize a weight vector produced by one of the distribution-level
    /// maps. `input_tail` is the truncation bound of the input state and is
    /// propagated conservatively as `input_tail / probability`.
    pub(crate) fn from_weights(
        weights: Vec<f64>,
        input_tail: f64,
        context: &str,
    ) -> Result<Self> {
        let mut sum = NeumaierSum::new();
        for &w in &weights {
            sum.add(w);
        }
        let probability = sum.value();
        if !(probability >= MIN_PROBABILITY) {
            return Err(Error::ImpossibleOutcome(format!(
                "{context}: click probability is zero"
            )));
        }
        let probs: Vec<f64> = weights.iter().map(|w| (w / probability).max(0.0)).collect();
        let posterior = PhotonNumberDistribution::posterior(probs, input_tail / probability);
        let (mean, second_factorial) = posterior.factorial_moments();
        Ok(OutcomeRecord {
            weights,
            probability,
            posterior,
            mean,
            second_factorial,
        })
    }

    /// Assemble a record from closed-form pieces: the posterior vector and
    /// the literal probability/moment expressions.
    pub(crate) fn from_closed_form(
        posterior: PhotonNumberDistribution,
        probability: f64,
        mean: f64,
        second_factorial: f64,
    ) -> Self {
        let weights = posterior.probs().iter().map(|p| p * probability).collect();
        OutcomeRecord {
            weights,
            probability,
            posterior,
            mean,
            second_factorial,
        }
    }

    /// Unnormalized outcome weights, indexed by photon number.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Probability of the detector outcome.
    pub fn probability(&self) -> f64 {
        self.probability
    }

    /// Normalized post-selected distribution.
    pub fn posterior(&self) -> &PhotonNumberDistribution {
        &self.posterior
    }

    /// Mean photon number of the posterior.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Second factorial moment <n(n-1)> of the posterior.
    pub fn second_factorial(&self) -> f64 {
        self.second_factorial
    }
}

/// Probability and posterior moments without the posterior vector; the
/// streaming evaluators behind the sweep front end produce these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMoments {
    pub probability: f64,
    pub mean: f64,
    pub second_factorial: f64,
}

impl ProcessMoments {
    /// Build from unnormalized sums: probability P, first moment sum and
    /// second factorial moment sum of the weight vector.
    pub(crate) fn from_sums(probability: f64, m1: f64, m2: f64, context: &str) -> Result<Self> {
        if !(probability >= MIN_PROBABILITY) {
            return Err(Error::ImpossibleOutcome(format!(
                "{context}: click probability is zero"
            )));
        }
        Ok(ProcessMoments {
            probability,
            mean: m1 / probability,
            second_factorial: m2 / probability,
        })
    }
}

impl From<&OutcomeRecord> for ProcessMoments {
    fn from(record: &OutcomeRecord) -> Self {
        ProcessMoments {
            probability: record.probability(),
            mean: record.mean(),
            second_factorial: record.second_factorial(),
        }
    }
}
