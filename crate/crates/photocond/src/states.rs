//! Photon-number distributions for the supported input states.
//!
//! A [`PhotonNumberDistribution`] is a truncated vector p_0..p_N together
//! with an upper bound on the probability mass above the cutoff. The
//! constructors pick their cutoffs adaptively from the requested tolerance,
//! so sweeps that push n0*R to 10^2 do not need the caller to guess.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{LaguerreSequence, NeumaierSum};

/// Construction tolerance used when the caller does not supply one.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Hard ceiling on the mixed-light running sum; no closed tail bound exists
/// for that distribution.
const MIXED_LIGHT_TERM_CEILING: usize = 1_000_000;

/// Truncated photon-number distribution p_0..p_N.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl PhotonNumberDistribution {
    /// A normalized distribution: entries must be non-negative and sum,
    /// together with the tail bound, to 1 within 1e-12.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("distribution must have at least p_0".into()));
        }
        if !(0.0..=1.0).contains(&tail_bound) {
            return Err(Error::Domain(format!("tail bound {tail_bound} outside [0, 1]")));
        }
        for (n, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Domain(format!("p_{n} = {p} is not a probability")));
            }
        }
        let mut sum = NeumaierSum::new();
        for &p in &probs {
            sum.add(p);
        }
        let total = sum.value() + tail_bound;
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "probabilities plus tail bound sum to {total}, not 1"
            )));
        }
        Ok(PhotonNumberDistribution { probs, tail_bound })
    }

    /// Rescales a non-negative vector to unit sum. Used for explicit user
    /// vectors that carry harmless rounding.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("distribution must have at least p_0".into()));
        }
        let mut sum = NeumaierSum::new();
        for (n, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Domain(format!("weight w_{n} = {w} is negative or not finite")));
            }
            sum.add(w);
        }
        let total = sum.value();
        if total <= 0.0 {
            return Err(Error::Domain("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(PhotonNumberDistribution { probs, tail_bound: 0.0 })
    }

    /// Internal constructor for posteriors: the vector is normalized by
    /// construction but the propagated tail bound may be loose.
    pub(crate) fn posterior(probs: Vec<f64>, tail_bound: f64) -> Self {
        debug_assert!(probs.iter().all(|&p| p >= 0.0));
        PhotonNumberDistribution {
            probs,
            tail_bound: tail_bound.clamp(0.0, 1.0),
        }
    }

    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// p_n, zero above the cutoff.
    pub fn prob(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// First moment of the stored vector.
    pub fn mean(&self) -> f64 {
        let mut sum = NeumaierSum::new();
        for (n, &p) in self.probs.iter().enumerate() {
            sum.add(n as f64 * p);
        }
        sum.value()
    }

    /// Second factorial moment of the stored vector.
    pub fn second_factorial(&self) -> f64 {
        let mut sum = NeumaierSum::new();
        for (n, &p) in self.probs.iter().enumerate() {
            sum.add((n * n.saturating_sub(1)) as f64 * p);
        }
        sum.value()
    }

    /// Both lower factorial moments in one pass.
    pub fn factorial_moments(&self) -> (f64, f64) {
        (self.mean(), self.second_factorial())
    }

    /// Same state with the cutoff forced to `cutoff`: longer vectors are
    /// padded with zeros, shorter ones fold the removed mass into the tail
    /// bound.
    pub fn resized(&self, cutoff: usize) -> Self {
        let mut probs = self.probs.clone();
        let mut tail_bound = self.tail_bound;
        if cutoff + 1 < probs.len() {
            let mut cut = NeumaierSum::new();
            for &p in &probs[cutoff + 1..] {
                cut.add(p);
            }
            tail_bound = (tail_bound + cut.value()).clamp(0.0, 1.0);
            probs.truncate(cutoff + 1);
        } else {
            probs.resize(cutoff + 1, 0.0);
        }
        PhotonNumberDistribution { probs, tail_bound }
    }
}

/// Serialization shape used by the CLI: `{kind, params, cutoff, probs[]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub kind: String,
    pub params: serde_json::Value,
    pub cutoff: usize,
    pub probs: Vec<f64>,
}

impl DistributionRecord {
    pub fn new(kind: &str, params: serde_json::Value, dist: &PhotonNumberDistribution) -> Self {
        DistributionRecord {
            kind: kind.to_string(),
            params,
            cutoff: dist.cutoff(),
            probs: dist.probs().to_vec(),
        }
    }

    pub fn to_distribution(&self) -> Result<PhotonNumberDistribution> {
        PhotonNumberDistribution::from_unnormalized(self.probs.clone())
    }
}

/// Which input state to construct, with exactly the parameters that state
/// needs.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldStateSpec {
    /// Coherent state with mean photon number `mean`.
    Coherent { mean: f64 },
    /// Thermal state with mean photon number `mean`.
    Thermal { mean: f64 },
    /// Superposed coherent (mean `coherent_mean`) and thermal
    /// (mean `thermal_mean`) radiation; the total mean is their sum.
    MixedLight { coherent_mean: f64, thermal_mean: f64 },
    /// Number state |m>.
    Fock { m: u32 },
    /// Explicit probability vector.
    Custom { probs: Vec<f64> },
}

impl FieldStateSpec {
    /// Total mean photon number of the specified state.
    pub fn total_mean(&self) -> f64 {
        match self {
            FieldStateSpec::Coherent { mean } | FieldStateSpec::Thermal { mean } => *mean,
            FieldStateSpec::MixedLight { coherent_mean, thermal_mean } => {
                coherent_mean + thermal_mean
            }
            FieldStateSpec::Fock { m } => *m as f64,
            FieldStateSpec::Custom { probs } => {
                let mut sum = NeumaierSum::new();
                for (n, &p) in probs.iter().enumerate() {
                    sum.add(n as f64 * p);
                }
                sum.value()
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FieldStateSpec::Coherent { .. } => "coherent",
            FieldStateSpec::Thermal { .. } => "thermal",
            FieldStateSpec::MixedLight { .. } => "mixed_light",
            FieldStateSpec::Fock { .. } => "fock",
            FieldStateSpec::Custom { .. } => "custom",
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        match self {
            FieldStateSpec::Coherent { mean } | FieldStateSpec::Thermal { mean } => {
                serde_json::json!({ "n0": mean })
            }
            FieldStateSpec::MixedLight { coherent_mean, thermal_mean } => {
                serde_json::json!({ "n_c": coherent_mean, "n_t": thermal_mean })
            }
            FieldStateSpec::Fock { m } => serde_json::json!({ "m": m }),
            FieldStateSpec::Custom { probs } => serde_json::json!({ "len": probs.len() }),
        }
    }

    /// Construct the photon-number distribution at tolerance `epsilon`.
    pub fn build(&self, epsilon: f64) -> Result<PhotonNumberDistribution> {
        match self {
            FieldStateSpec::Coherent { mean } => coherent_distribution(*mean, epsilon),
            FieldStateSpec::Thermal { mean } => thermal_distribution(*mean, epsilon),
            FieldStateSpec::MixedLight { coherent_mean, thermal_mean } => {
                mixed_light_distribution(*coherent_mean, *thermal_mean, epsilon)
            }
            FieldStateSpec::Fock { m } => Ok(fock_distribution(*m)),
            FieldStateSpec::Custom { probs } => {
                PhotonNumberDistribution::from_unnormalized(probs.clone())
            }
        }
    }
}

impl std::str::FromStr for FieldStateSpec {
    type Err = Error;

    /// CLI spelling: `coherent:N0`, `thermal:N0`, `mixed:NC,NT`, `fock:M`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Domain(format!("state spec '{s}' needs KIND:ARGS")))?;
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Domain(format!("cannot parse '{v}' as a number")))
        };
        match kind {
            "coherent" => Ok(FieldStateSpec::Coherent { mean: parse_f64(args)? }),
            "thermal" => Ok(FieldStateSpec::Thermal { mean: parse_f64(args)? }),
            "mixed" => {
                let (nc, nt) = args.split_once(',').ok_or_else(|| {
                    Error::Domain(format!("mixed state spec '{args}' needs NC,NT"))
                })?;
                Ok(FieldStateSpec::MixedLight {
                    coherent_mean: parse_f64(nc)?,
                    thermal_mean: parse_f64(nt)?,
                })
            }
            "fock" => {
                let m = args
                    .parse::<u32>()
                    .map_err(|_| Error::Domain(format!("cannot parse '{args}' as an integer")))?;
                Ok(FieldStateSpec::Fock { m })
            }
            other => Err(Error::Domain(format!("unknown state kind '{other}'"))),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside (0, 1)")));
    }
    Ok(())
}

/// Rescale a vector of smooth relative accuracy so that it sums to the
/// analytically known retained mass `1 - tail`; this removes the
/// common-mode rounding that otherwise breaks the normalization invariant
/// at multi-million cutoffs.
fn rescale_to_retained_mass(probs: &mut [f64], tail: f64) {
    let mut sum = NeumaierSum::new();
    for &p in probs.iter() {
        sum.add(p);
    }
    let total = sum.value();
    if total > 0.0 {
        let factor = (1.0 - tail) / total;
        for p in probs.iter_mut() {
            *p *= factor;
        }
    }
}

/// Thermal state, p_n = n0^n / (n0+1)^(n+1), with the geometric tail
/// (n0/(n0+1))^(N+1) bounded by `epsilon`.
pub fn thermal_distribution(n0: f64, epsilon: f64) -> Result<PhotonNumberDistribution> {
    check_epsilon(epsilon)?;
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(Error::Domain(format!("thermal mean {n0} must be >= 0")));
    }
    if n0 == 0.0 {
        return Ok(fock_distribution(0));
    }
    let q = n0 / (n0 + 1.0);
    // ln q = -ln(1 + 1/n0), full relative precision even for q near 1.
    let ln_q = -(1.0 / n0).ln_1p();
    // Smallest N with q^(N+1) <= epsilon, then enlarged until the truncated
    // mean deficit q^(N+1) (N+1+n0) sits at half the 10 eps (1+n0) budget,
    // leaving room for summation rounding.
    let mut cutoff = ((epsilon.ln() / ln_q).ceil() as i64 - 1).max(0) as usize;
    loop {
        let tail = ((cutoff as f64 + 1.0) * ln_q).exp();
        let deficit = tail * (cutoff as f64 + 1.0 + n0);
        let budget = 5.0 * epsilon * (1.0 + n0);
        if deficit <= budget || tail == 0.0 {
            break;
        }
        let extra = ((deficit / budget).ln() / -ln_q).ceil().max(1.0);
        cutoff += extra as usize;
    }

    let mut probs = Vec::with_capacity(cutoff + 1);
    let p0 = 1.0 / (n0 + 1.0);
    let mut p = p0;
    for n in 0..=cutoff {
        // Refresh the geometric recurrence periodically so rounding drift
        // stays below one part in 1e-13 even for multi-million cutoffs.
        if n % 1024 == 0 {
            p = p0 * (n as f64 * ln_q).exp();
        }
        probs.push(p);
        p *= q;
    }
    let tail_bound = ((cutoff as f64 + 1.0) * ln_q).exp();
    rescale_to_retained_mass(&mut probs, tail_bound);
    PhotonNumberDistribution::new(probs, tail_bound)
}

/// Chernoff bound on the upper tail of Poisson(rate) above `n`.
fn poisson_chernoff_tail(rate: f64, n: f64) -> f64 {
    if n <= rate {
        return 1.0;
    }
    (-rate + n * (1.0 + (rate / n).ln())).exp()
}

/// Coherent state, Poissonian p_n = e^{-n0} n0^n / n!, cutoff chosen from
/// the Chernoff tail bound.
pub fn coherent_distribution(n0: f64, epsilon: f64) -> Result<PhotonNumberDistribution> {
    check_epsilon(epsilon)?;
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(Error::Domain(format!("coherent mean {n0} must be >= 0")));
    }
    if n0 == 0.0 {
        return Ok(fock_distribution(0));
    }
    let ln_eps = epsilon.ln();
    // Bernstein-style starting guess, then walk to the minimal N whose
    // Chernoff bound clears epsilon.
    let mut cutoff = (n0 + (2.0 * n0 * -ln_eps).sqrt() + -ln_eps).ceil() as usize;
    while cutoff > 1 && poisson_chernoff_tail(n0, cutoff as f64) <= epsilon {
        cutoff -= 1;
    }
    while poisson_chernoff_tail(n0, (cutoff + 1) as f64) > epsilon {
        cutoff += 1;
    }
    // A mean-accuracy guard mirroring the thermal constructor.
    while poisson_chernoff_tail(n0, (cutoff + 1) as f64) * (cutoff as f64 + 2.0 + n0)
        > 5.0 * epsilon * (1.0 + n0)
    {
        cutoff += 1;
    }

    let ln_n0 = n0.ln();
    let mut probs = Vec::with_capacity(cutoff + 1);
    for n in 0..=cutoff {
        let p = (-n0 + n as f64 * ln_n0 - crate::numerics::log_factorial(n as u64)).exp();
        probs.push(p);
    }
    // The true missing mass; the Chernoff bound only sizes the cutoff.
    let tail_bound = crate::numerics::poisson_upper_tail(cutoff as u64 + 1, n0).min(epsilon);
    rescale_to_retained_mass(&mut probs, tail_bound);
    PhotonNumberDistribution::new(probs, tail_bound)
}

/// Superposed coherent and thermal light,
/// p_n = exp(-n_c/(1+n_t)) n_t^n/(n_t+1)^(n+1) L_n[-n_c/(n_t(1+n_t))],
/// truncated once the running sum reaches 1 - epsilon.
pub fn mixed_light_distribution(
    n_c: f64,
    n_t: f64,
    epsilon: f64,
) -> Result<PhotonNumberDistribution> {
    check_epsilon(epsilon)?;
    if !(n_c >= 0.0) || !n_c.is_finite() {
        return Err(Error::Domain(format!("coherent part {n_c} must be >= 0")));
    }
    if !(n_t > 0.0) || !n_t.is_finite() {
        return Err(Error::Domain(format!("thermal part {n_t} must be > 0")));
    }
    let x = -n_c / (n_t * (1.0 + n_t));
    let prefactor = (-n_c / (1.0 + n_t)).exp() / (n_t + 1.0);
    let q = n_t / (n_t + 1.0);
    let ln_q = -(1.0 / n_t).ln_1p();

    let mut laguerre = LaguerreSequence::new(x);
    let mut probs: Vec<f64> = Vec::new();
    let mut cumulative = NeumaierSum::new();
    let mut envelope = 1.0;
    for n in 0..MIXED_LIGHT_TERM_CEILING {
        if n % 1024 == 0 {
            envelope = (n as f64 * ln_q).exp();
        }
        let p = prefactor * envelope * laguerre.next_value()?;
        probs.push(p);
        cumulative.add(p);
        envelope *= q;
        let missing = (1.0 - cumulative.value()).max(0.0);
        // The running sum saturates near one part in 1e-16, so the
        // mass-based exit is only meaningful for tolerances above that.
        if missing <= 0.5 * epsilon && epsilon >= 1e-13 {
            rescale_to_retained_mass(&mut probs, missing);
            return PhotonNumberDistribution::new(probs, missing);
        }
        // The running sum carries Laguerre recurrence drift, so it can
        // plateau just short of 1 - epsilon. The term ratio q L_{n+1}/L_n
        // decreases monotonically, so once it is below 1 the true
        // remaining mass is geometrically bounded; stop on that bound when
        // the plateau blocks the first condition.
        if n > 0 && p > 0.0 {
            let ratio = p / probs[n - 1];
            if ratio < 1.0 {
                let remaining = p * ratio / (1.0 - ratio);
                if remaining <= 0.25 * epsilon {
                    rescale_to_retained_mass(&mut probs, remaining);
                    return PhotonNumberDistribution::new(probs, remaining);
                }
            }
        }
    }
    Err(Error::Range(format!(
        "mixed light (n_c = {n_c}, n_t = {n_t}) did not reach 1 - {epsilon} within {MIXED_LIGHT_TERM_CEILING} terms"
    )))
}

/// Number state |m>.
pub fn fock_distribution(m: u32) -> PhotonNumberDistribution {
    let mut probs = vec![0.0; m as usize + 1];
    probs[m as usize] = 1.0;
    PhotonNumberDistribution { probs, tail_bound: 0.0 }
}

/// Accumulate a normalized posterior from a term recurrence.
///
/// Stops when the running sum reaches 1 - epsilon/2, or when the terms'
/// geometric tail bound clears the tolerance on its own; the second exit
/// covers closed forms whose literal expressions plateau on cancellation
/// noise. Term ratios decrease toward their geometric base for every
/// family routed through here, so the tail bound is rigorous once the
/// ratio drops below 1. The vector is rescaled to the retained mass.
pub(crate) fn posterior_from_terms(
    mut term: impl FnMut(usize) -> f64,
    epsilon: f64,
    ceiling: usize,
    context: &str,
) -> Result<PhotonNumberDistribution> {
    let mut probs: Vec<f64> = Vec::new();
    let mut cumulative = NeumaierSum::new();
    let mut prev = 0.0_f64;
    for n in 0..ceiling {
        let p = term(n).max(0.0);
        probs.push(p);
        cumulative.add(p);
        let missing = (1.0 - cumulative.value()).max(0.0);
        if missing <= 0.5 * epsilon {
            rescale_to_retained_mass(&mut probs, missing);
            return Ok(PhotonNumberDistribution::posterior(probs, missing));
        }
        if n > 0 && prev > 0.0 {
            let ratio = p / prev;
            if ratio < 1.0 {
                let remaining = p * ratio / (1.0 - ratio);
                if remaining <= 0.25 * epsilon {
                    rescale_to_retained_mass(&mut probs, remaining);
                    return Ok(PhotonNumberDistribution::posterior(probs, remaining));
                }
            }
        } else if n > 8 && p == 0.0 && prev == 0.0 {
            // Two consecutive exact zeros past the bulk: the expression has
            // decayed to the underflow floor and has no more mass to give.
            rescale_to_retained_mass(&mut probs, 0.0);
            return Ok(PhotonNumberDistribution::posterior(probs, 0.0));
        }
        prev = p;
    }
    Err(Error::Range(format!(
        "{context}: posterior did not accumulate to 1 within {ceiling} terms"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thermal_matches_the_defining_formula() {
        let d = thermal_distribution(1.0, 1e-14).unwrap();
        // p_n = 2^-(n+1) at n0 = 1.
        for n in 0..=10 {
            assert_relative_eq!(d.prob(n), 0.5_f64.powi(n as i32 + 1), max_relative = 1e-13);
        }
        assert_relative_eq!(d.mean(), 1.0, epsilon = 1e-10);
        assert!(d.tail_bound() <= 1e-14);
    }

    #[test]
    fn thermal_vacuum_limit() {
        let d = thermal_distribution(0.0, 1e-12).unwrap();
        assert_eq!(d.probs(), &[1.0]);
        assert_eq!(d.tail_bound(), 0.0);
    }

    #[test]
    fn thermal_rejects_negative_mean() {
        assert!(matches!(thermal_distribution(-0.5, 1e-12), Err(Error::Domain(_))));
    }

    #[test]
    fn coherent_moments() {
        let d = coherent_distribution(1.0, 1e-14).unwrap();
        assert_relative_eq!(d.prob(0), (-1.0_f64).exp(), max_relative = 1e-13);
        let d4 = coherent_distribution(4.0, 1e-14).unwrap();
        // Second factorial moment of Poisson(n0) is n0^2.
        assert!((d4.second_factorial() - 16.0).abs() <= 1e-9);
        assert!((d4.mean() - 4.0).abs() <= 1e-10);
    }

    #[test]
    fn mixed_light_normalizes_and_reproduces_the_mean() {
        let d = mixed_light_distribution(2.0, 0.5, 1e-13).unwrap();
        let total: f64 = d.probs().iter().sum();
        assert!((total - 1.0).abs() <= 1e-10);
        assert!((d.mean() - 2.5).abs() <= 1e-9);
    }

    #[test]
    fn mixed_light_reduces_to_thermal_without_coherent_part() {
        let mixed = mixed_light_distribution(0.0, 0.7, 1e-13).unwrap();
        let thermal = thermal_distribution(0.7, 1e-13).unwrap();
        let common = mixed.cutoff().min(thermal.cutoff());
        for n in 0..=common {
            assert!((mixed.prob(n) - thermal.prob(n)).abs() <= 1e-12, "n = {n}");
        }
    }

    #[test]
    fn mixed_light_approaches_coherent_as_the_thermal_part_vanishes() {
        let mixed = mixed_light_distribution(2.0, 1e-6, 1e-12).unwrap();
        let coherent = coherent_distribution(2.0, 1e-12).unwrap();
        for n in 0..=coherent.cutoff().min(mixed.cutoff()) {
            assert!(
                (mixed.prob(n) - coherent.prob(n)).abs() <= 1e-4,
                "n = {n}: {} vs {}",
                mixed.prob(n),
                coherent.prob(n)
            );
        }
    }

    #[test]
    fn mixed_light_requires_a_thermal_part() {
        assert!(matches!(
            mixed_light_distribution(1.0, 0.0, 1e-12),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fock_moments() {
        let d = fock_distribution(5);
        assert_eq!(d.mean(), 5.0);
        assert_eq!(d.second_factorial(), 20.0);
        assert_eq!(fock_distribution(0).probs(), &[1.0]);
        assert_eq!(fock_distribution(1).prob(1), 1.0);
    }

    #[test]
    fn constructors_reproduce_their_parameter() {
        for &n0 in &[0.1, 1.0, 7.3, 40.0, 300.0] {
            let eps = 1e-12;
            let t = thermal_distribution(n0, eps).unwrap();
            assert!((t.mean() - n0).abs() <= 10.0 * eps * (1.0 + n0), "thermal {n0}");
            let c = coherent_distribution(n0, eps).unwrap();
            assert!((c.mean() - n0).abs() <= 10.0 * eps * (1.0 + n0), "coherent {n0}");
        }
    }

    #[test]
    fn resizing_moves_mass_into_the_tail() {
        let d = thermal_distribution(1.0, 1e-12).unwrap();
        let shrunk = d.resized(3);
        assert_eq!(shrunk.cutoff(), 3);
        let kept: f64 = shrunk.probs().iter().sum();
        assert!((kept + shrunk.tail_bound() - 1.0).abs() <= 1e-12);
        let grown = d.resized(d.cutoff() + 5);
        assert_eq!(grown.prob(grown.cutoff()), 0.0);
    }

    #[test]
    fn spec_parsing_round_trip() {
        let spec: FieldStateSpec = "mixed:0.5,2.0".parse().unwrap();
        assert_eq!(
            spec,
            FieldStateSpec::MixedLight { coherent_mean: 0.5, thermal_mean: 2.0 }
        );
        assert_eq!(spec.total_mean(), 2.5);
        let spec: FieldStateSpec = "thermal:3".parse().unwrap();
        assert_eq!(spec, FieldStateSpec::Thermal { mean: 3.0 });
        assert!("squeezed:1".parse::<FieldStateSpec>().is_err());
        assert!("thermal".parse::<FieldStateSpec>().is_err());
    }

    #[test]
    fn record_serializes_and_round_trips() {
        let spec = FieldStateSpec::Thermal { mean: 1.0 };
        let dist = spec.build(1e-12).unwrap();
        let record = DistributionRecord::new(spec.kind_name(), spec.params_json(), &dist);
        let json = serde_json::to_string(&record).unwrap();
        let parsed: DistributionRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.cutoff, dist.cutoff());
        let rebuilt = parsed.to_distribution().unwrap();
        for n in 0..=dist.cutoff() {
            assert_relative_eq!(rebuilt.prob(n), dist.prob(n), max_relative = 1e-12);
        }
    }
}
