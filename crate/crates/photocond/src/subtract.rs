//! Photon subtraction: the exact conditional maps behind a beam splitter,
//! the approximate ladder models, sequential detection and the closed forms
//! for coherent, thermal and mixed light.
//!
//! The exact map takes a photon-number distribution p to the unnormalized
//! weights
//!
//! ```text
//! w_n = sum_{l >= k} Upsilon_l C(n+l, n) T^n R^l p_{n+l}
//! ```
//!
//! with click probability P = sum_n w_n and posterior w/P. Binomials and
//! powers are seeded in log space; neighbouring terms then follow by exact
//! ratio steps so the kernels stay inside f64 range at any intensity.

use crate::detectors::{DetectorFlavor, DetectorModel};
use crate::error::{Error, Result};
use crate::numerics::{log_binomial, poisson_upper_tail, NeumaierSum};
use crate::outcome::{OutcomeRecord, ProcessMoments};
use crate::states::{
    coherent_distribution, FieldStateSpec, PhotonNumberDistribution, DEFAULT_EPSILON,
};

/// Relative weight below which the kernel walks stop extending a sum.
const TERM_CUTOFF: f64 = 1e-17;

/// Ceiling for closed-form posterior cutoffs grown by running sums.
const POSTERIOR_TERM_CEILING: usize = 2_000_000;

/// Beam-splitter parameters: mixing angle theta with reflectivity
/// R = sin^2(theta) and transmittivity T = cos^2(theta).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitterParams {
    theta: f64,
    reflectivity: f64,
    transmittivity: f64,
}

impl BeamSplitterParams {
    pub fn from_theta(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Domain(format!(
                "beam-splitter angle {theta} outside (0, pi/2)"
            )));
        }
        let s = theta.sin();
        let c = theta.cos();
        Ok(BeamSplitterParams {
            theta,
            reflectivity: s * s,
            transmittivity: c * c,
        })
    }

    pub fn from_reflectivity(reflectivity: f64) -> Result<Self> {
        if !(reflectivity > 0.0 && reflectivity < 1.0) {
            return Err(Error::Domain(format!(
                "reflectivity {reflectivity} outside (0, 1)"
            )));
        }
        Ok(BeamSplitterParams {
            theta: reflectivity.sqrt().asin(),
            reflectivity,
            transmittivity: 1.0 - reflectivity,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn reflectivity(&self) -> f64 {
        self.reflectivity
    }

    pub fn transmittivity(&self) -> f64 {
        self.transmittivity
    }
}

/// max(p[m..]) for every m, with a trailing zero; used to bound the
/// neglected tail of a kernel walk against arbitrary input vectors.
pub(crate) fn suffix_max(probs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; probs.len() + 1];
    for m in (0..probs.len()).rev() {
        out[m] = probs[m].max(out[m + 1]);
    }
    out
}

/// One application of the nonresolving-k transform to an unnormalized
/// vector. For each output n the l-sum is seeded at the kernel peak and
/// extended by ratio steps in both directions; terms are re-ordered so the
/// accumulation still runs over ascending l.
fn nonresolving_weights(
    probs: &[f64],
    suffix: &[f64],
    bs: &BeamSplitterParams,
    k: u64,
) -> Vec<f64> {
    let cutoff = probs.len() - 1;
    if (cutoff as u64) < k {
        return Vec::new();
    }
    let r = bs.reflectivity();
    let t = bs.transmittivity();
    let (ln_r, ln_t) = (r.ln(), t.ln());
    let out_len = cutoff + 1 - k as usize;
    let mut weights = Vec::with_capacity(out_len);
    let mut below_peak = Vec::new();

    for n in 0..out_len {
        let l_hi = (cutoff - n) as u64;
        // Kernel C(n+l, n) T^n R^l peaks near l = (R(n+1) - 1)/T.
        let peak = ((r * (n as f64 + 1.0) - 1.0) / t).ceil().max(k as f64);
        let l_star = (peak as u64).min(l_hi).max(k);
        let ln_seed = log_binomial(n as u64 + l_star, n as u64).ln()
            + n as f64 * ln_t
            + l_star as f64 * ln_r;
        let seed = ln_seed.exp();

        below_peak.clear();
        let mut kernel = seed;
        let mut l = l_star;
        while l > k && kernel > 0.0 {
            // kernel_{l-1} = kernel_l (l) / (R (n + l))
            kernel *= l as f64 / (r * (n as f64 + l as f64));
            l -= 1;
            below_peak.push(kernel * probs[n + l as usize]);
        }

        let mut acc = NeumaierSum::new();
        for &term in below_peak.iter().rev() {
            acc.add(term);
        }
        kernel = seed;
        l = l_star;
        loop {
            acc.add(kernel * probs[n + l as usize]);
            if l == l_hi || kernel == 0.0 {
                break;
            }
            let ratio = r * (n as f64 + l as f64 + 1.0) / (l as f64 + 1.0);
            kernel *= ratio;
            l += 1;
            // Ratios decrease with l, so past the peak the remaining terms
            // are bounded by a geometric series against the largest
            // remaining input entry.
            if ratio < 1.0 {
                let bound = kernel * ratio / (1.0 - ratio) * suffix[n + l as usize + 1];
                if bound <= TERM_CUTOFF * acc.value() {
                    acc.add(kernel * probs[n + l as usize]);
                    break;
                }
            }
        }
        weights.push(acc.value());
    }
    weights
}

/// Single-l transform for the resolving-k detector.
fn resolving_weights(probs: &[f64], bs: &BeamSplitterParams, k: u64) -> Vec<f64> {
    let cutoff = probs.len() - 1;
    if (cutoff as u64) < k {
        return Vec::new();
    }
    let (ln_r, ln_t) = (bs.reflectivity().ln(), bs.transmittivity().ln());
    (0..=cutoff - k as usize)
        .map(|n| {
            let kernel =
                (log_binomial(n as u64 + k, n as u64).ln() + n as f64 * ln_t + k as f64 * ln_r)
                    .exp();
            kernel * probs[n + k as usize]
        })
        .collect()
}

fn detector_weights(
    probs: &[f64],
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Vec<f64> {
    match detector.flavor() {
        DetectorFlavor::Resolving => resolving_weights(probs, bs, detector.k() as u64),
        DetectorFlavor::Nonresolving => {
            let suffix = suffix_max(probs);
            nonresolving_weights(probs, &suffix, bs, detector.k() as u64)
        }
    }
}

/// Exact post-selected state and click probability for a k-photon detector
/// behind the beam splitter.
pub fn subtract_exact(
    p: &PhotonNumberDistribution,
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    let weights = detector_weights(p.probs(), bs, detector);
    OutcomeRecord::from_weights(
        weights,
        p.tail_bound(),
        &format!("subtraction with detector {detector}"),
    )
}

/// Low-intensity ladder model: w_n = (R^k / k!) (n+k)!/n! p_{n+k}.
/// Unbounded; the reported probability may exceed 1.
pub fn subtract_model_a(
    p: &PhotonNumberDistribution,
    bs: &BeamSplitterParams,
    k: u32,
) -> Result<OutcomeRecord> {
    check_k(k)?;
    let k = k as u64;
    let cutoff = p.cutoff() as u64;
    let ln_r = bs.reflectivity().ln();
    let weights: Vec<f64> = if cutoff < k {
        Vec::new()
    } else {
        (0..=cutoff - k)
            .map(|n| {
                let factor = (log_binomial(n + k, k).ln() + k as f64 * ln_r).exp();
                factor * p.prob((n + k) as usize)
            })
            .collect()
    };
    OutcomeRecord::from_weights(weights, p.tail_bound(), "A-model subtraction")
}

/// High-intensity shift model: the dressed lowering operator acts as an
/// exact number shift, so w_n = p_{n+k}.
pub fn subtract_model_e(p: &PhotonNumberDistribution, k: u32) -> Result<OutcomeRecord> {
    check_k(k)?;
    let weights: Vec<f64> = p.probs().iter().skip(k as usize).copied().collect();
    OutcomeRecord::from_weights(weights, p.tail_bound(), "E-model subtraction")
}

/// Sequential detection of k photons by an array of on/off detectors: the
/// unnormalized nonresolving-1 map composed k times, renormalized once at
/// the end.
pub fn subtract_sequential(
    p: &PhotonNumberDistribution,
    bs: &BeamSplitterParams,
    k: u32,
) -> Result<OutcomeRecord> {
    check_k(k)?;
    let mut weights = p.probs().to_vec();
    for _ in 0..k {
        if weights.is_empty() {
            break;
        }
        let suffix = suffix_max(&weights);
        weights = nonresolving_weights(&weights, &suffix, bs, 1);
    }
    OutcomeRecord::from_weights(
        weights,
        p.tail_bound(),
        &format!("sequential {k}-photon subtraction"),
    )
}

/// Lower factorial moments <n> and <n(n-1)> of a distribution.
pub fn factorial_moments(p: &PhotonNumberDistribution) -> (f64, f64) {
    p.factorial_moments()
}

fn check_k(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain("photon count k must be >= 1".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

fn posterior_from_terms(
    term: impl FnMut(usize) -> f64,
    epsilon: f64,
    context: &str,
) -> Result<PhotonNumberDistribution> {
    crate::states::posterior_from_terms(term, epsilon, POSTERIOR_TERM_CEILING, context)
}

fn closed_form_coherent(
    n0: f64,
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    let r = bs.reflectivity();
    let t = bs.transmittivity();
    let k = detector.k() as u64;
    let probability = match detector.flavor() {
        DetectorFlavor::Resolving => {
            (-n0 * r + k as f64 * (n0 * r).ln() - crate::numerics::log_factorial(k)).exp()
        }
        DetectorFlavor::Nonresolving => poisson_upper_tail(k, n0 * r),
    };
    if probability < crate::outcome::MIN_PROBABILITY {
        return Err(Error::ImpossibleOutcome(
            "coherent subtraction closed form: probability is zero".into(),
        ));
    }
    // The post-selected state is the attenuated coherent state for either
    // detector flavor and any k.
    let posterior = coherent_distribution(n0 * t, DEFAULT_EPSILON)?;
    let mean = n0 * t;
    let second = mean * mean;
    Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, second))
}

fn closed_form_thermal(
    n0: f64,
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    let r = bs.reflectivity();
    let t = bs.transmittivity();
    let k = detector.k() as f64;
    let x = n0 * r;
    let v = match detector.flavor() {
        DetectorFlavor::Nonresolving => 1.0,
        DetectorFlavor::Resolving => 0.0,
    };
    let probability = x.powf(k) / (1.0 + x).powf(k + 1.0 - v);
    if probability < crate::outcome::MIN_PROBABILITY {
        return Err(Error::ImpossibleOutcome(
            "thermal subtraction closed form: probability is zero".into(),
        ));
    }
    let mean = n0 * t * (1.0 + k + v * x) / (1.0 + x);
    let second = n0 * n0 * t * t * ((1.0 + k) * (2.0 + k) + 2.0 * v * x * (2.0 + k + x))
        / ((1.0 + x) * (1.0 + x));

    let posterior = match detector.flavor() {
        DetectorFlavor::Resolving => {
            // p'_n = C(n+k, n) a^(k+1) b^n
            let a = (1.0 + x) / (1.0 + n0);
            let b = n0 * t / (1.0 + n0);
            let ku = detector.k() as usize;
            let mut value = a.powi(ku as i32 + 1);
            posterior_from_terms(
                |n| {
                    let current = value;
                    value *= b * (n + ku + 1) as f64 / (n + 1) as f64;
                    current
                },
                DEFAULT_EPSILON,
                "thermal resolving subtraction",
            )?
        }
        DetectorFlavor::Nonresolving => {
            // p'_n = ((1+x)/x)^k [ (n0 T)^n/(1+n0 T)^(n+1)
            //        - sum_{l<k} C(n+l, n) (n0 R/(1+n0))^l (n0 T)^n/(1+n0)^(n+1) ]
            let ku = detector.k() as usize;
            let scale = ((1.0 + x) / x).powi(ku as i32);
            let d = x / (1.0 + n0);
            let mut g = 1.0 / (1.0 + n0 * t);
            let g_ratio = n0 * t / (1.0 + n0 * t);
            let mut h = 1.0 / (1.0 + n0);
            let h_ratio = n0 * t / (1.0 + n0);
            posterior_from_terms(
                |n| {
                    let mut inner = NeumaierSum::new();
                    let mut binom = 1.0;
                    let mut d_pow = 1.0;
                    for l in 0..ku {
                        if l > 0 {
                            binom *= (n + l) as f64 / l as f64;
                            d_pow *= d;
                        }
                        inner.add(binom * d_pow * h);
                    }
                    let value = scale * (g - inner.value());
                    g *= g_ratio;
                    h *= h_ratio;
                    value
                },
                DEFAULT_EPSILON,
                "thermal nonresolving subtraction",
            )?
        }
    };
    Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, second))
}

fn closed_form_mixed(
    n_c: f64,
    n_t: f64,
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    let r = bs.reflectivity();
    let t = bs.transmittivity();
    let n0 = n_c + n_t;
    let rnt = r * n_t;
    match detector.flavor() {
        DetectorFlavor::Nonresolving => {
            if detector.k() != 1 {
                return Err(Error::UnsupportedCombination(
                    "mixed-light nonresolving closed form is only available for k = 1".into(),
                ));
            }
            let x = r * n_c / (1.0 + rnt);
            // 1 - e^{-x}/(1+R n_t), written without cancellation.
            let probability = (rnt - (-x).exp_m1()) / (1.0 + rnt);
            let mean = t * (n0 - (-x).exp() * (n0 + rnt * n_t) / (1.0 + rnt).powi(3))
                / probability;
            let second = t
                * t
                * (n0 * n0 + n_t * (n0 + n_c)
                    - (-x).exp()
                        * (n0 * n0
                            + 2.0 * n_c * n_t
                            + n_t * n_t * (1.0 + 4.0 * r * n0 + 2.0 * r * r * n_t * n_t))
                        / (1.0 + rnt).powi(5))
                / probability;
            // This case has no closed-form posterior; fall back to the generic map.
            let input = crate::states::mixed_light_distribution(n_c, n_t, DEFAULT_EPSILON)?;
            let posterior = subtract_exact(&input, bs, detector)?.posterior().clone();
            Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, second))
        }
        DetectorFlavor::Resolving => {
            let k = detector.k();
            let x = r * n_c / (1.0 + rnt);
            let y = -n_c / (n_t * (1.0 + rnt));
            let z = 1.0 + 2.0 * k as f64 - y;
            let lk = crate::numerics::laguerre(k, y)?;
            let lk1 = crate::numerics::laguerre(k - 1, y)?;
            let probability =
                (-x).exp() * rnt.powi(k as i32) / (1.0 + rnt).powi(k as i32 + 1) * lk;
            if probability < crate::outcome::MIN_PROBABILITY {
                return Err(Error::ImpossibleOutcome(
                    "mixed-light resolving closed form: probability is zero".into(),
                ));
            }
            let front = n_t * t / (1.0 + rnt);
            let mean = front * (z - k as f64 * lk1 / lk);
            let second = {
                let curvature = if k >= 2 {
                    let lk2 = crate::numerics::laguerre(k - 2, y)?;
                    (k * (k - 1)) as f64 * lk2 / lk
                } else {
                    0.0
                };
                front * front * (z * (1.0 + z) - y - 2.0 * k as f64 * z * lk1 / lk + curvature)
            };
            let input = crate::states::mixed_light_distribution(n_c, n_t, DEFAULT_EPSILON)?;
            let posterior = subtract_exact(&input, bs, detector)?.posterior().clone();
            Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, second))
        }
    }
}

/// Literal closed-form probabilities, posteriors and moments for coherent,
/// thermal and mixed light; mixed light supports any k for the resolving
/// detector but only k = 1 nonresolving.
pub fn closed_form_subtraction(
    spec: &FieldStateSpec,
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    match spec {
        FieldStateSpec::Coherent { mean } => closed_form_coherent(*mean, bs, detector),
        FieldStateSpec::Thermal { mean } => closed_form_thermal(*mean, bs, detector),
        FieldStateSpec::MixedLight { coherent_mean, thermal_mean } => {
            closed_form_mixed(*coherent_mean, *thermal_mean, bs, detector)
        }
        other => Err(Error::UnsupportedCombination(format!(
            "no subtraction closed form for {} states",
            other.kind_name()
        ))),
    }
}

/// Closed forms for two sequential on/off detections (k = 2), coherent and
/// thermal input.
pub fn closed_form_sequential(
    spec: &FieldStateSpec,
    bs: &BeamSplitterParams,
    k: u32,
) -> Result<OutcomeRecord> {
    if k != 2 {
        return Err(Error::UnsupportedCombination(
            "sequential closed forms are only available for k = 2".into(),
        ));
    }
    let r = bs.reflectivity();
    let t = bs.transmittivity();
    match spec {
        FieldStateSpec::Coherent { mean: n0 } => {
            let probability =
                (-n0 * r * (1.0 + t)).exp() * (n0 * r * t).exp_m1() * (n0 * r).exp_m1();
            if probability < crate::outcome::MIN_PROBABILITY {
                return Err(Error::ImpossibleOutcome(
                    "sequential coherent closed form: probability is zero".into(),
                ));
            }
            let posterior = coherent_distribution(n0 * t * t, DEFAULT_EPSILON)?;
            let mean = n0 * t * t;
            Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, mean * mean))
        }
        FieldStateSpec::Thermal { mean: n0 } => {
            let g = |order: i32| sequential_g(*n0, r, t, order);
            let g1 = g(1);
            if g1 < crate::outcome::MIN_PROBABILITY {
                return Err(Error::ImpossibleOutcome(
                    "sequential thermal closed form: probability is zero".into(),
                ));
            }
            let mean = n0 * t * t * g(2) / g1;
            let second = 2.0 * (n0 * t * t).powi(2) * g(3) / g1;
            // Four geometric ladders sharing the numerator (n0 T^2)^n.
            let a = n0 * t * t;
            let denoms = [1.0 + a, 1.0 + n0 * t, 1.0 + n0 * (1.0 - r * t), 1.0 + n0];
            let signs = [1.0, -1.0, -1.0, 1.0];
            let mut values = [0.0; 4];
            for (v, d) in values.iter_mut().zip(denoms) {
                *v = 1.0 / d;
            }
            let posterior = posterior_from_terms(
                |_n| {
                    let mut term = 0.0;
                    for i in 0..4 {
                        term += signs[i] * values[i];
                    }
                    for i in 0..4 {
                        values[i] *= a / denoms[i];
                    }
                    term / g1
                },
                DEFAULT_EPSILON,
                "sequential thermal subtraction",
            )?;
            Ok(OutcomeRecord::from_closed_form(posterior, g1, mean, second))
        }
        other => Err(Error::UnsupportedCombination(format!(
            "no sequential closed form for {} states",
            other.kind_name()
        ))),
    }
}

/// g_n = 1 - (1+n0R)^-n - (1+n0RT)^-n + (1+n0R(1+T))^-n, evaluated without
/// the four-way cancellation that kills the literal form at small n0R.
fn sequential_g(n0: f64, r: f64, t: f64, order: i32) -> f64 {
    let n = order as f64;
    let x = n0 * r;
    let c = 1.0 + x * (1.0 + t);
    // 1 - (1+x)^-n
    let head = -(-n * x.ln_1p()).exp_m1();
    // (1+xT)^-n - (1+x(1+T))^-n
    let b = 1.0 + x * t;
    let tail = b.powi(-order) * -((n * (-x / c).ln_1p()).exp_m1());
    head - tail
}

// ---------------------------------------------------------------------------
// Partition over detector outcomes
// ---------------------------------------------------------------------------

/// Click probabilities of every resolving threshold k = 0..=cutoff,
/// including the internal no-click branch at k = 0. The entries sum to 1:
/// each input entry distributes binomially over the reflected count.
pub fn resolving_click_probabilities(
    p: &PhotonNumberDistribution,
    bs: &BeamSplitterParams,
) -> Vec<f64> {
    let r = bs.reflectivity();
    let t = bs.transmittivity();
    let cutoff = p.cutoff();
    let mut acc = vec![NeumaierSum::new(); cutoff + 1];
    for (m, &pm) in p.probs().iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let mut pmf = t.powi(m as i32);
        for l in 0..=m {
            acc[l].add(pm * pmf);
            pmf *= (m - l) as f64 / (l + 1) as f64 * r / t;
        }
    }
    acc.into_iter().map(|s| s.value()).collect()
}

// ---------------------------------------------------------------------------
// Streaming moment evaluators (sweep back end)
// ---------------------------------------------------------------------------

/// Pr[Bin(m, R) >= k]; series form when the tail is small, complement
/// otherwise.
fn binomial_upper_tail(m: u64, k: u64, r: f64, t: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > m {
        return 0.0;
    }
    let mf = m as f64;
    if mf * r < 0.5 {
        // Ascending all-positive series from l = k.
        let mut binom = 1.0;
        for i in 0..k {
            binom *= (m - i) as f64 / (i + 1) as f64;
        }
        let mut term = binom * r.powi(k as i32) * t.powi((m - k) as i32);
        let mut sum = NeumaierSum::new();
        let mut l = k;
        while term > 0.0 {
            sum.add(term);
            if l == m {
                break;
            }
            term *= (m - l) as f64 / (l + 1) as f64 * r / t;
            l += 1;
            if term <= 1e-18 * sum.value() {
                sum.add(term);
                break;
            }
        }
        sum.value()
    } else {
        let mut below = NeumaierSum::new();
        let mut term = t.powi(m as i32);
        for l in 0..k {
            if l > 0 {
                term *= (m - l + 1) as f64 / l as f64 * r / t;
            }
            below.add(term);
        }
        (1.0 - below.value()).max(0.0)
    }
}

/// Probability and posterior moments of the exact map without
/// materializing the posterior; the l-sums are folded analytically into
/// binomial tails, one pass over the input vector.
pub fn subtract_exact_moments(
    p: &PhotonNumberDistribution,
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Result<ProcessMoments> {
    match detector.flavor() {
        DetectorFlavor::Resolving => {
            let record_sums = resolving_weights(p.probs(), bs, detector.k() as u64);
            moments_from_weights(&record_sums, &format!("subtraction {detector}"))
        }
        DetectorFlavor::Nonresolving => {
            nonresolving_moments(p.probs(), bs, detector.k() as u64, "subtraction")
        }
    }
}

fn nonresolving_moments(
    probs: &[f64],
    bs: &BeamSplitterParams,
    k: u64,
    context: &str,
) -> Result<ProcessMoments> {
    let r = bs.reflectivity();
    let t = bs.transmittivity();
    let mut p_sum = NeumaierSum::new();
    let mut m1_sum = NeumaierSum::new();
    let mut m2_sum = NeumaierSum::new();
    for (m, &pm) in probs.iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let m = m as u64;
        let tail_k = binomial_upper_tail(m, k, r, t);
        p_sum.add(pm * tail_k);
        if m >= 1 {
            let shifted = binomial_upper_tail(m - 1, k - 1, r, t);
            let bracket = (m as f64 * tail_k - m as f64 * r * shifted).max(0.0);
            m1_sum.add(pm * bracket);
        }
        if m >= 2 {
            let tail2 = binomial_upper_tail(m - 2, k, r, t);
            m2_sum.add(pm * (m * (m - 1)) as f64 * t * t * tail2);
        }
    }
    ProcessMoments::from_sums(
        p_sum.value(),
        m1_sum.value(),
        m2_sum.value(),
        &format!("{context} (nonresolving {k})"),
    )
}

fn moments_from_weights(weights: &[f64], context: &str) -> Result<ProcessMoments> {
    let mut p_sum = NeumaierSum::new();
    let mut m1 = NeumaierSum::new();
    let mut m2 = NeumaierSum::new();
    for (n, &w) in weights.iter().enumerate() {
        p_sum.add(w);
        m1.add(n as f64 * w);
        m2.add((n * n.saturating_sub(1)) as f64 * w);
    }
    ProcessMoments::from_sums(p_sum.value(), m1.value(), m2.value(), context)
}

/// Moments of the A-model map in one pass.
pub fn subtract_model_a_moments(
    p: &PhotonNumberDistribution,
    bs: &BeamSplitterParams,
    k: u32,
) -> Result<ProcessMoments> {
    check_k(k)?;
    let k = k as u64;
    let mut log_k_factorial = 0.0;
    for i in 2..=k {
        log_k_factorial += (i as f64).ln();
    }
    let scale = (k as f64 * bs.reflectivity().ln() - log_k_factorial).exp();
    let mut p_sum = NeumaierSum::new();
    let mut m1 = NeumaierSum::new();
    let mut m2 = NeumaierSum::new();
    for (m, &pm) in p.probs().iter().enumerate() {
        let m = m as u64;
        if m < k || pm == 0.0 {
            continue;
        }
        let mut falling = 1.0;
        for i in 0..k {
            falling *= (m - i) as f64;
        }
        let w = scale * falling * pm;
        let n = (m - k) as f64;
        p_sum.add(w);
        m1.add(n * w);
        m2.add(n * (n - 1.0).max(0.0) * w);
    }
    ProcessMoments::from_sums(p_sum.value(), m1.value(), m2.value(), "A-model subtraction")
}

/// Moments of the E-model shift in one pass.
pub fn subtract_model_e_moments(p: &PhotonNumberDistribution, k: u32) -> Result<ProcessMoments> {
    check_k(k)?;
    let k = k as usize;
    let mut p_sum = NeumaierSum::new();
    let mut m1 = NeumaierSum::new();
    let mut m2 = NeumaierSum::new();
    for (m, &pm) in p.probs().iter().enumerate().skip(k) {
        let n = (m - k) as f64;
        p_sum.add(pm);
        m1.add(n * pm);
        m2.add(n * (n - 1.0).max(0.0) * pm);
    }
    ProcessMoments::from_sums(p_sum.value(), m1.value(), m2.value(), "E-model subtraction")
}

/// Moments of sequential detection: k - 1 kernel passes, with the final
/// application folded analytically.
pub fn subtract_sequential_moments(
    p: &PhotonNumberDistribution,
    bs: &BeamSplitterParams,
    k: u32,
) -> Result<ProcessMoments> {
    check_k(k)?;
    let mut weights = p.probs().to_vec();
    for _ in 0..k - 1 {
        if weights.is_empty() {
            break;
        }
        let suffix = suffix_max(&weights);
        weights = nonresolving_weights(&weights, &suffix, bs, 1);
    }
    if weights.is_empty() {
        return Err(Error::ImpossibleOutcome(format!(
            "sequential {k}-photon subtraction: click probability is zero"
        )));
    }
    nonresolving_moments(&weights, bs, 1, "sequential subtraction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{fock_distribution, mixed_light_distribution, thermal_distribution};
    use approx::assert_relative_eq;

    fn thermal(n0: f64) -> PhotonNumberDistribution {
        thermal_distribution(n0, 1e-14).unwrap()
    }

    fn coherent(n0: f64) -> PhotonNumberDistribution {
        coherent_distribution(n0, 1e-14).unwrap()
    }

    #[test]
    fn beam_splitter_parameter_identities() {
        let bs = BeamSplitterParams::from_reflectivity(0.04).unwrap();
        assert!((bs.reflectivity() + bs.transmittivity() - 1.0).abs() <= 1e-15);
        assert_relative_eq!(bs.theta().sin().powi(2), 0.04, max_relative = 1e-12);
        let bs = BeamSplitterParams::from_theta(0.3).unwrap();
        assert!((bs.reflectivity() + bs.transmittivity() - 1.0).abs() <= 1e-15);
        assert!(BeamSplitterParams::from_reflectivity(0.0).is_err());
        assert!(BeamSplitterParams::from_reflectivity(1.0).is_err());
        assert!(BeamSplitterParams::from_theta(2.0).is_err());
    }

    #[test]
    fn single_photon_either_reflects_or_transmits() {
        let bs = BeamSplitterParams::from_reflectivity(0.3).unwrap();
        let d = DetectorModel::resolving(1).unwrap();
        let record = subtract_exact(&fock_distribution(1), &bs, &d).unwrap();
        assert_relative_eq!(record.probability(), 0.3, max_relative = 1e-12);
        assert_eq!(record.posterior().probs(), &[1.0]);
    }

    #[test]
    fn vacuum_cannot_lose_a_photon() {
        let bs = BeamSplitterParams::from_reflectivity(0.3).unwrap();
        let d = DetectorModel::nonresolving(1).unwrap();
        let err = subtract_exact(&fock_distribution(0), &bs, &d).unwrap_err();
        assert!(matches!(err, Error::ImpossibleOutcome(_)));
    }

    #[test]
    fn thermal_resolving_click_probability() {
        // P = n0 R / (1 + n0 R)^2 for the resolving single-photon detector.
        let bs = BeamSplitterParams::from_reflectivity(0.01).unwrap();
        let d = DetectorModel::resolving(1).unwrap();
        let record = subtract_exact(&thermal(1.0), &bs, &d).unwrap();
        assert_relative_eq!(record.probability(), 0.01 / 1.01_f64.powi(2), max_relative = 1e-10);
    }

    #[test]
    fn model_a_doubles_the_thermal_mean() {
        let bs = BeamSplitterParams::from_reflectivity(0.01).unwrap();
        for &n0 in &[0.1, 1.0, 10.0] {
            let record = subtract_model_a(&thermal(n0), &bs, 1).unwrap();
            assert_relative_eq!(record.mean(), 2.0 * n0, max_relative = 1e-10);
        }
    }

    #[test]
    fn model_a_probability_can_reach_one() {
        let bs = BeamSplitterParams::from_reflectivity(0.5).unwrap();
        let record = subtract_model_a(&thermal(2.0), &bs, 1).unwrap();
        // P = R <n> for k = 1.
        assert_relative_eq!(record.probability(), 1.0, max_relative = 1e-10);
        let record = subtract_model_a(&thermal(4.0), &bs, 1).unwrap();
        assert!(record.probability() > 1.0);
    }

    #[test]
    fn model_a_leaves_coherent_states_unchanged() {
        let bs = BeamSplitterParams::from_reflectivity(0.2).unwrap();
        let input = coherent(2.0);
        let record = subtract_model_a(&input, &bs, 1).unwrap();
        for n in 0..=input.cutoff() - 2 {
            assert!(
                (record.posterior().prob(n) - input.prob(n)).abs() <= 1e-11,
                "n = {n}"
            );
        }
    }

    #[test]
    fn model_e_preserves_the_thermal_mean() {
        for &n0 in &[0.1, 1.0, 10.0] {
            let record = subtract_model_e(&thermal(n0), 1).unwrap();
            assert_relative_eq!(record.mean(), n0, max_relative = 1e-10);
        }
        let record = subtract_model_e(&thermal(1.0), 1).unwrap();
        assert_relative_eq!(record.probability(), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn model_e_shifts_number_states() {
        let record = subtract_model_e(&fock_distribution(3), 2).unwrap();
        assert_relative_eq!(record.probability(), 1.0, max_relative = 1e-14);
        assert_eq!(record.posterior().prob(1), 1.0);
    }

    #[test]
    fn sequential_single_click_matches_the_nonresolving_map() {
        let bs = BeamSplitterParams::from_reflectivity(0.05).unwrap();
        let d = DetectorModel::nonresolving(1).unwrap();
        let p = thermal(2.0);
        let seq = subtract_sequential(&p, &bs, 1).unwrap();
        let exact = subtract_exact(&p, &bs, &d).unwrap();
        assert_relative_eq!(seq.probability(), exact.probability(), max_relative = 1e-12);
        for n in 0..=exact.posterior().cutoff() {
            assert_relative_eq!(
                seq.posterior().prob(n),
                exact.posterior().prob(n),
                max_relative = 1e-10,
                epsilon = 1e-300
            );
        }
    }

    #[test]
    fn sequential_two_clicks_on_coherent_light() {
        let n0 = 2.0;
        let bs = BeamSplitterParams::from_reflectivity(0.04).unwrap();
        let (r, t) = (bs.reflectivity(), bs.transmittivity());
        let record = subtract_sequential(&coherent(n0), &bs, 2).unwrap();
        let expected_p =
            (-n0 * r * (1.0 + t)).exp() * ((n0 * r * t).exp() - 1.0) * ((n0 * r).exp() - 1.0);
        assert_relative_eq!(record.probability(), expected_p, max_relative = 1e-10);
        // Posterior is the twice-attenuated coherent state.
        let reference = coherent(n0 * t * t);
        for n in 0..=10 {
            assert!((record.posterior().prob(n) - reference.prob(n)).abs() <= 1e-10);
        }
    }

    #[test]
    fn sequential_two_clicks_on_thermal_light() {
        let n0 = 1.0;
        let bs = BeamSplitterParams::from_reflectivity(0.01).unwrap();
        let record = subtract_sequential(&thermal(n0), &bs, 2).unwrap();
        let g1 = sequential_g(n0, bs.reflectivity(), bs.transmittivity(), 1);
        assert_relative_eq!(record.probability(), g1, max_relative = 1e-9);
    }

    #[test]
    fn factorial_moments_of_reference_states() {
        assert_eq!(factorial_moments(&fock_distribution(0)), (0.0, 0.0));
        assert_eq!(factorial_moments(&fock_distribution(3)), (3.0, 6.0));
        let (mean, second) = factorial_moments(&thermal(2.0));
        assert_relative_eq!(mean, 2.0, max_relative = 1e-10);
        // <n(n-1)> = 2 n0^2 for thermal light.
        assert_relative_eq!(second, 8.0, max_relative = 1e-10);
    }

    #[test]
    fn resolving_outcomes_partition_unity() {
        let bs = BeamSplitterParams::from_reflectivity(0.3).unwrap();
        for p in [thermal(1.0), coherent(2.0), fock_distribution(5)] {
            let parts = resolving_click_probabilities(&p, &bs);
            let total: f64 = parts.iter().sum();
            assert!((total - 1.0).abs() <= 1e-10, "total = {total}");
        }
    }

    #[test]
    fn nonresolving_is_the_sum_of_resolving_outcomes() {
        let bs = BeamSplitterParams::from_reflectivity(0.2).unwrap();
        let p = mixed_light_distribution(1.0, 0.5, 1e-14).unwrap();
        for k in 1..=3u32 {
            let n = subtract_exact(&p, &bs, &DetectorModel::nonresolving(k).unwrap()).unwrap();
            let mut summed = vec![0.0; n.weights().len()];
            for j in k..=p.cutoff() as u32 {
                let rj = subtract_exact(&p, &bs, &DetectorModel::resolving(j).unwrap()).unwrap();
                for (slot, &w) in summed.iter_mut().zip(rj.weights()) {
                    *slot += w;
                }
            }
            for (n_idx, (&got, &want)) in n.weights().iter().zip(&summed).enumerate() {
                assert_relative_eq!(got, want, max_relative = 1e-12, epsilon = 1e-300);
                let _ = n_idx;
            }
        }
    }

    #[test]
    fn coherent_posterior_ignores_the_detector() {
        let n0 = 1.5;
        let bs = BeamSplitterParams::from_reflectivity(0.04).unwrap();
        let reference = coherent(n0 * bs.transmittivity());
        for k in 1..=3u32 {
            for d in [
                DetectorModel::resolving(k).unwrap(),
                DetectorModel::nonresolving(k).unwrap(),
            ] {
                let record = subtract_exact(&coherent(n0), &bs, &d).unwrap();
                for n in 0..=record.posterior().cutoff().min(reference.cutoff()) {
                    assert!(
                        (record.posterior().prob(n) - reference.prob(n)).abs() <= 1e-10,
                        "{d} at n = {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_forms_match_the_generic_map_for_thermal_light() {
        let bs = BeamSplitterParams::from_reflectivity(0.02).unwrap();
        let p = thermal(3.0);
        for k in 1..=3u32 {
            for d in [
                DetectorModel::resolving(k).unwrap(),
                DetectorModel::nonresolving(k).unwrap(),
            ] {
                let exact = subtract_exact(&p, &bs, &d).unwrap();
                let closed =
                    closed_form_subtraction(&FieldStateSpec::Thermal { mean: 3.0 }, &bs, &d)
                        .unwrap();
                assert_relative_eq!(
                    closed.probability(),
                    exact.probability(),
                    max_relative = 1e-9
                );
                assert_relative_eq!(closed.mean(), exact.mean(), max_relative = 1e-9);
                assert_relative_eq!(
                    closed.second_factorial(),
                    exact.second_factorial(),
                    max_relative = 1e-9
                );
                // Posterior agreement where a closed-form posterior exists.
                for n in 0..=20 {
                    assert!(
                        (closed.posterior().prob(n) - exact.posterior().prob(n)).abs() <= 1e-9,
                        "{d} posterior at n = {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_form_coherent_resolving_probability() {
        let bs = BeamSplitterParams::from_reflectivity(0.04).unwrap();
        let d = DetectorModel::resolving(1).unwrap();
        let closed = closed_form_subtraction(&FieldStateSpec::Coherent { mean: 1.0 }, &bs, &d)
            .unwrap();
        assert_relative_eq!(
            closed.probability(),
            (-0.04_f64).exp() * 0.04,
            max_relative = 1e-12
        );
        let exact = subtract_exact(&coherent(1.0), &bs, &d).unwrap();
        assert_relative_eq!(closed.probability(), exact.probability(), max_relative = 1e-10);
    }

    #[test]
    fn closed_form_thermal_mean_ratio() {
        // <n>/n0 = T (1 + k + n0 R)/(1 + n0 R) for the nonresolving detector.
        let n0 = 2.0;
        let bs = BeamSplitterParams::from_reflectivity(0.1).unwrap();
        for k in 1..=3u32 {
            let d = DetectorModel::nonresolving(k).unwrap();
            let closed =
                closed_form_subtraction(&FieldStateSpec::Thermal { mean: n0 }, &bs, &d).unwrap();
            let x = n0 * bs.reflectivity();
            let expected = bs.transmittivity() * (1.0 + k as f64 + x) / (1.0 + x);
            assert_relative_eq!(closed.mean() / n0, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn mixed_light_closed_form_reduces_to_thermal() {
        let bs = BeamSplitterParams::from_reflectivity(0.05).unwrap();
        for d in [
            DetectorModel::resolving(2).unwrap(),
            DetectorModel::nonresolving(1).unwrap(),
        ] {
            let mixed = closed_form_subtraction(
                &FieldStateSpec::MixedLight { coherent_mean: 0.0, thermal_mean: 1.5 },
                &bs,
                &d,
            )
            .unwrap();
            let thermal_record =
                closed_form_subtraction(&FieldStateSpec::Thermal { mean: 1.5 }, &bs, &d).unwrap();
            assert_relative_eq!(
                mixed.probability(),
                thermal_record.probability(),
                max_relative = 1e-10
            );
            assert_relative_eq!(mixed.mean(), thermal_record.mean(), max_relative = 1e-10);
            assert_relative_eq!(
                mixed.second_factorial(),
                thermal_record.second_factorial(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn mixed_nonresolving_closed_form_is_k1_only() {
        let bs = BeamSplitterParams::from_reflectivity(0.05).unwrap();
        let err = closed_form_subtraction(
            &FieldStateSpec::MixedLight { coherent_mean: 1.0, thermal_mean: 1.0 },
            &bs,
            &DetectorModel::nonresolving(2).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnsupportedCombination(_)));
    }

    #[test]
    fn streaming_moments_match_the_full_records() {
        let bs = BeamSplitterParams::from_reflectivity(0.07).unwrap();
        let states = [
            thermal(2.5),
            coherent(1.3),
            mixed_light_distribution(1.0, 2.0, 1e-14).unwrap(),
            fock_distribution(6),
        ];
        for p in &states {
            for k in 1..=3u32 {
                for d in [
                    DetectorModel::resolving(k).unwrap(),
                    DetectorModel::nonresolving(k).unwrap(),
                ] {
                    let full = subtract_exact(p, &bs, &d).unwrap();
                    let fast = subtract_exact_moments(p, &bs, &d).unwrap();
                    assert_relative_eq!(fast.probability, full.probability(), max_relative = 1e-10);
                    assert_relative_eq!(fast.mean, full.mean(), max_relative = 1e-9, epsilon = 1e-12);
                    assert_relative_eq!(
                        fast.second_factorial,
                        full.second_factorial(),
                        max_relative = 1e-9,
                        epsilon = 1e-12
                    );
                }
                let full = subtract_model_a(p, &bs, k).unwrap();
                let fast = subtract_model_a_moments(p, &bs, k).unwrap();
                assert_relative_eq!(fast.probability, full.probability(), max_relative = 1e-11);
                assert_relative_eq!(fast.mean, full.mean(), max_relative = 1e-10, epsilon = 1e-12);
                if let Ok(full) = subtract_model_e(p, k) {
                    let fast = subtract_model_e_moments(p, k).unwrap();
                    assert_relative_eq!(fast.probability, full.probability(), max_relative = 1e-11);
                    assert_relative_eq!(fast.mean, full.mean(), max_relative = 1e-10, epsilon = 1e-12);
                }
            }
            let full = subtract_sequential(p, &bs, 2).unwrap();
            let fast = subtract_sequential_moments(p, &bs, 2).unwrap();
            assert_relative_eq!(fast.probability, full.probability(), max_relative = 1e-10);
            assert_relative_eq!(fast.mean, full.mean(), max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(
                fast.second_factorial,
                full.second_factorial(),
                max_relative = 1e-9,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn sequential_closed_forms_match_the_composed_map() {
        let bs = BeamSplitterParams::from_reflectivity(0.03).unwrap();
        for (spec, p) in [
            (FieldStateSpec::Coherent { mean: 1.2 }, coherent(1.2)),
            (FieldStateSpec::Thermal { mean: 0.8 }, thermal(0.8)),
        ] {
            let closed = closed_form_sequential(&spec, &bs, 2).unwrap();
            let exact = subtract_sequential(&p, &bs, 2).unwrap();
            assert_relative_eq!(closed.probability(), exact.probability(), max_relative = 1e-9);
            assert_relative_eq!(closed.mean(), exact.mean(), max_relative = 1e-9);
            assert_relative_eq!(
                closed.second_factorial(),
                exact.second_factorial(),
                max_relative = 1e-9
            );
            for n in 0..=15 {
                assert!(
                    (closed.posterior().prob(n) - exact.posterior().prob(n)).abs() <= 1e-9,
                    "{} posterior at n = {n}",
                    spec.kind_name()
                );
            }
        }
        assert!(closed_form_sequential(&FieldStateSpec::Thermal { mean: 1.0 }, &bs, 3).is_err());
    }
}
