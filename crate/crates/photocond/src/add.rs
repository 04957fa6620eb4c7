//! Photon addition: the exact conditional maps behind a seeded
//! down-converter, the approximate ladder models and the closed forms for
//! coherent and thermal input.
//!
//! The exact map takes a photon-number distribution p to
//!
//! ```text
//! w_n = sum_{k <= l <= n} Upsilon_l C(n, l) t^(n+1) r^l p_{n-l}
//! ```
//!
//! with r = sinh^2(lambda) and t = cosh^-2(lambda). For nonresolving
//! detectors the output support extends past the input cutoff; it is grown
//! until the trailing weight drops below 1e-14 of the accumulated total.

use crate::detectors::{DetectorFlavor, DetectorModel};
use crate::error::{Error, Result};
use crate::numerics::{log_binomial, LaguerreSequence, NeumaierSum};
use crate::outcome::{OutcomeRecord, ProcessMoments};
use crate::states::{coherent_distribution, FieldStateSpec, PhotonNumberDistribution, DEFAULT_EPSILON};

/// Trailing-weight threshold for growing the nonresolving output cutoff.
const GROWTH_CUTOFF: f64 = 1e-14;

/// How far past the input cutoff the output may grow.
const GROWTH_CEILING: usize = 10_000;

/// Relative weight below which a kernel walk stops extending its l-sum.
const TERM_CUTOFF: f64 = 1e-17;

const POSTERIOR_TERM_CEILING: usize = 2_000_000;

/// Parametric down-conversion parameters: gain lambda with
/// r = sinh^2(lambda) and t = cosh^-2(lambda), so t (1 + r) = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdcParams {
    gain: f64,
    r: f64,
    t: f64,
}

impl PdcParams {
    pub fn from_gain(gain: f64) -> Result<Self> {
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::Domain(format!("down-conversion gain {gain} must be > 0")));
        }
        let sh = gain.sinh();
        let ch = gain.cosh();
        Ok(PdcParams {
            gain,
            r: sh * sh,
            t: 1.0 / (ch * ch),
        })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// sinh^2(lambda).
    pub fn r(&self) -> f64 {
        self.r
    }

    /// cosh^-2(lambda).
    pub fn t(&self) -> f64 {
        self.t
    }
}

/// max(p[0..=m]) for every m; bounds the neglected head of a kernel walk.
fn prefix_max(probs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; probs.len()];
    let mut running = 0.0_f64;
    for (m, &p) in probs.iter().enumerate() {
        running = running.max(p);
        out[m] = running;
    }
    out
}

/// Weights of the resolving-k map, w_n = C(n, k) t^(n+1) r^k p_{n-k} for
/// n = k..=cutoff+k, by ratio recurrence with periodic log-space refresh.
fn resolving_weights(probs: &[f64], pdc: &PdcParams, k: u64) -> Vec<f64> {
    let cutoff = probs.len() - 1;
    let (ln_r, ln_t) = (pdc.r.ln(), pdc.t.ln());
    let mut weights = vec![0.0; cutoff + k as usize + 1];
    let seed = |n: u64| (log_binomial(n, k).ln() + (n as f64 + 1.0) * ln_t + k as f64 * ln_r).exp();
    let mut kernel = seed(k);
    for n in k..=(cutoff as u64 + k) {
        if (n - k) % 1024 == 0 {
            kernel = seed(n);
        }
        weights[n as usize] = kernel * probs[(n - k) as usize];
        // kernel(n+1)/kernel(n) = t (n+1)/(n+1-k)
        kernel *= pdc.t * (n as f64 + 1.0) / ((n + 1 - k) as f64);
    }
    weights
}

/// The l-sum of the nonresolving-k map for a single output n, seeded at the
/// kernel peak and accumulated over ascending l.
fn nonresolving_weight_at(
    probs: &[f64],
    prefix: &[f64],
    pdc: &PdcParams,
    k: u64,
    n: u64,
) -> f64 {
    let cutoff = (probs.len() - 1) as u64;
    let l_lo = k.max(n.saturating_sub(cutoff));
    let l_hi = n;
    if l_lo > l_hi {
        return 0.0;
    }
    let (r, t) = (pdc.r, pdc.t);
    let (ln_r, ln_t) = (r.ln(), t.ln());
    // Kernel C(n, l) t^(n+1) r^l peaks near l = (r n - 1)/(1 + r).
    let peak = ((r * n as f64 - 1.0) / (1.0 + r)).ceil().max(l_lo as f64);
    let l_star = (peak as u64).clamp(l_lo, l_hi);
    let seed =
        (log_binomial(n, l_star).ln() + (n as f64 + 1.0) * ln_t + l_star as f64 * ln_r).exp();

    let mut below_peak = Vec::new();
    let mut kernel = seed;
    let mut l = l_star;
    while l > l_lo && kernel > 0.0 {
        // kernel_{l-1} = kernel_l l / (r (n - l + 1))
        kernel *= l as f64 / (r * (n as f64 - l as f64 + 1.0));
        l -= 1;
        below_peak.push(kernel * probs[(n - l) as usize]);
    }

    let mut acc = NeumaierSum::new();
    for &term in below_peak.iter().rev() {
        acc.add(term);
    }
    kernel = seed;
    l = l_star;
    loop {
        acc.add(kernel * probs[(n - l) as usize]);
        if l == l_hi || kernel == 0.0 {
            break;
        }
        let ratio = r * (n as f64 - l as f64) / (l as f64 + 1.0);
        kernel *= ratio;
        l += 1;
        if ratio < 1.0 && n > l {
            let bound = kernel * ratio / (1.0 - ratio) * prefix[(n - l - 1) as usize];
            if bound <= TERM_CUTOFF * acc.value() {
                acc.add(kernel * probs[(n - l) as usize]);
                break;
            }
        }
    }
    acc.value()
}

fn nonresolving_weights(probs: &[f64], pdc: &PdcParams, k: u64) -> Result<Vec<f64>> {
    let cutoff = probs.len() - 1;
    let prefix = prefix_max(probs);
    let mut weights = vec![0.0; k as usize];
    let mut total = NeumaierSum::new();
    let ceiling = cutoff + k as usize + GROWTH_CEILING;
    for n in k as usize..=ceiling {
        let w = nonresolving_weight_at(probs, &prefix, pdc, k, n as u64);
        weights.push(w);
        total.add(w);
        if n >= cutoff + k as usize && w <= GROWTH_CUTOFF * total.value() {
            return Ok(weights);
        }
    }
    Err(Error::Range(format!(
        "nonresolving addition output did not converge within {GROWTH_CEILING} entries past the input cutoff"
    )))
}

/// Exact photon-added state and click probability for a k-photon detector
/// on the trigger mode.
pub fn add_exact(
    p: &PhotonNumberDistribution,
    pdc: &PdcParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    let weights = match detector.flavor() {
        DetectorFlavor::Resolving => resolving_weights(p.probs(), pdc, detector.k() as u64),
        DetectorFlavor::Nonresolving => nonresolving_weights(p.probs(), pdc, detector.k() as u64)?,
    };
    OutcomeRecord::from_weights(
        weights,
        p.tail_bound(),
        &format!("addition with detector {detector}"),
    )
}

/// Low-intensity ladder model: w_n = (r^k / k!) n!/(n-k)! p_{n-k}.
/// Unbounded; the reported probability may exceed 1.
pub fn add_model_a(
    p: &PhotonNumberDistribution,
    pdc: &PdcParams,
    k: u32,
) -> Result<OutcomeRecord> {
    check_k(k)?;
    let k = k as u64;
    let ln_r = pdc.r.ln();
    let cutoff = p.cutoff() as u64;
    let mut weights = vec![0.0; k as usize];
    for n in k..=cutoff + k {
        let factor = (log_binomial(n, k).ln() + k as f64 * ln_r).exp();
        weights.push(factor * p.prob((n - k) as usize));
    }
    OutcomeRecord::from_weights(weights, p.tail_bound(), "A-model addition")
}

/// High-intensity shift model: w_n = p_{n-k}, probability 1.
pub fn add_model_e(p: &PhotonNumberDistribution, k: u32) -> Result<OutcomeRecord> {
    check_k(k)?;
    let mut weights = vec![0.0; k as usize];
    weights.extend_from_slice(p.probs());
    OutcomeRecord::from_weights(weights, p.tail_bound(), "E-model addition")
}

fn check_k(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain("photon count k must be >= 1".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Closed forms (k = 1)
// ---------------------------------------------------------------------------

fn posterior_from_terms(
    term: impl FnMut(usize) -> f64,
    epsilon: f64,
    context: &str,
) -> Result<PhotonNumberDistribution> {
    crate::states::posterior_from_terms(term, epsilon, POSTERIOR_TERM_CEILING, context)
}

fn closed_form_thermal_addition(
    n0: f64,
    pdc: &PdcParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    let (r, t) = (pdc.r, pdc.t);
    let rt = r * t;
    match detector.flavor() {
        DetectorFlavor::Nonresolving => {
            let probability = rt * (1.0 + n0) / (1.0 + n0 * rt);
            let m1 = n0 / t + r - n0 * (t / (n0 * rt + 1.0)).powi(2);
            let m2 = 2.0 * ((n0 / t + r).powi(2) - n0 * n0 * (t / (n0 * rt + 1.0)).powi(3));
            let mean = m1 / probability;
            let second = m2 / probability;
            // p'_n = t [ (rt + n0)^n - (n0 t)^n ] / (1 + n0)^(n+1) / P
            let base = 1.0 / (1.0 + n0);
            let (mut u, mut w) = (base, base);
            let (u_ratio, w_ratio) = ((rt + n0) * base, n0 * t * base);
            let posterior = posterior_from_terms(
                |_n| {
                    let value = t * (u - w) / probability;
                    u *= u_ratio;
                    w *= w_ratio;
                    value
                },
                DEFAULT_EPSILON,
                "thermal nonresolving addition",
            )?;
            Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, second))
        }
        DetectorFlavor::Resolving => {
            let denom = 1.0 + n0 * rt;
            let probability = r * t * t * (1.0 + n0) / (denom * denom);
            let mean = (n0 * (1.0 + t) + 1.0) / denom;
            let second = 2.0 * t * (n0 * n0 * (2.0 + t) + 2.0 * n0) / (denom * denom);
            // p'_n = (1 + n0 rt)^2 n (n0 t)^(n-1) / (1 + n0)^(n+1)
            let base = 1.0 / (1.0 + n0);
            let ratio = n0 * t * base;
            let mut power = denom * denom * base * base;
            let posterior = posterior_from_terms(
                |n| {
                    if n == 0 {
                        return 0.0;
                    }
                    let value = n as f64 * power;
                    power *= ratio;
                    value
                },
                DEFAULT_EPSILON,
                "thermal resolving addition",
            )?;
            Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, second))
        }
    }
}

fn closed_form_coherent_addition(
    n0: f64,
    pdc: &PdcParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    if detector.flavor() != DetectorFlavor::Nonresolving {
        return Err(Error::UnsupportedCombination(
            "coherent addition has a closed form for the nonresolving detector only".into(),
        ));
    }
    let (r, t) = (pdc.r, pdc.t);
    let rt = r * t;
    // P = 1 - t e^{-rt n0} = rt + t (1 - e^{-rt n0}), cancellation-free.
    let probability = rt + t * -(-rt * n0).exp_m1();
    let decay = (-rt * n0).exp();
    let m1 = n0 * (1.0 + r) + r - n0 * t * t * decay;
    let m2 = n0 * n0 / (t * t) + 4.0 * r * n0 / t + 2.0 * r * r - n0 * n0 * t * t * t * decay;
    let mean = m1 / probability;
    let second = m2 / probability;

    let posterior = match coherent_addition_posterior(n0, pdc, probability) {
        Ok(posterior) => posterior,
        Err(Error::Range(message)) => {
            // The Laguerre factor leaves f64 range for small gains; the
            // generic transform covers the same state.
            log::warn!(
                "coherent addition closed form: {message}; deferring the posterior to the generic map"
            );
            let input = coherent_distribution(n0, DEFAULT_EPSILON)?;
            add_exact(&input, pdc, detector)?.posterior().clone()
        }
        Err(other) => return Err(other),
    };
    Ok(OutcomeRecord::from_closed_form(posterior, probability, mean, second))
}

/// p'_n = t e^{-n0} [ (rt)^n L_n(-n0/r) - (n0 t)^n / n! ] / P, evaluated
/// while the Laguerre recurrence stays in range.
fn coherent_addition_posterior(
    n0: f64,
    pdc: &PdcParams,
    probability: f64,
) -> Result<PhotonNumberDistribution> {
    let (r, t) = (pdc.r, pdc.t);
    let rt = r * t;
    let mut laguerre = LaguerreSequence::new(-n0 / r);
    let mut rt_pow = 1.0;
    let mut poisson = (-n0).exp(); // (n0 t)^n / n! times e^{-n0}
    let scale = t / probability;
    let mut cumulative = NeumaierSum::new();
    let mut probs = Vec::new();
    for _n in 0..POSTERIOR_TERM_CEILING {
        let l = laguerre.next_value()?;
        let term = rt_pow * l * (-n0).exp();
        let value = (scale * (term - poisson)).max(0.0);
        probs.push(value);
        cumulative.add(value);
        if 1.0 - cumulative.value() <= DEFAULT_EPSILON {
            let tail = (1.0 - cumulative.value()).max(0.0);
            return Ok(PhotonNumberDistribution::posterior(probs, tail));
        }
        rt_pow *= rt;
        poisson *= n0 * t / (probs.len()) as f64;
        if !rt_pow.is_finite() {
            return Err(Error::Range("(rt)^n overflowed".into()));
        }
    }
    Err(Error::Range(
        "coherent addition posterior did not accumulate to 1".into(),
    ))
}

/// Literal closed-form probabilities, posteriors and moments for k = 1
/// addition on coherent (nonresolving) and thermal (both flavors) input.
pub fn closed_form_addition(
    spec: &FieldStateSpec,
    pdc: &PdcParams,
    detector: &DetectorModel,
) -> Result<OutcomeRecord> {
    if detector.k() != 1 {
        return Err(Error::UnsupportedCombination(
            "addition closed forms are only available for k = 1".into(),
        ));
    }
    match spec {
        FieldStateSpec::Thermal { mean } => closed_form_thermal_addition(*mean, pdc, detector),
        FieldStateSpec::Coherent { mean } => closed_form_coherent_addition(*mean, pdc, detector),
        other => Err(Error::UnsupportedCombination(format!(
            "no addition closed form for {} states",
            other.kind_name()
        ))),
    }
}

// ---------------------------------------------------------------------------
// Partition over detector outcomes
// ---------------------------------------------------------------------------

/// Click probabilities of the resolving thresholds k = 0..=max_k. Summed
/// over all k they resolve unity: each input entry spreads over the trigger
/// count with negative-binomial weights C(m+k, k) (rt)^k t^(m+1) that sum
/// to one because 1 - rt = t.
pub fn resolving_click_probabilities(
    p: &PhotonNumberDistribution,
    pdc: &PdcParams,
    max_k: usize,
) -> Vec<f64> {
    let rt = pdc.r * pdc.t;
    let mut acc = vec![NeumaierSum::new(); max_k + 1];
    for (m, &pm) in p.probs().iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let mut pmf = pdc.t.powi(m as i32 + 1);
        for (k, slot) in acc.iter_mut().enumerate() {
            slot.add(pm * pmf);
            pmf *= (m + k + 1) as f64 / (k + 1) as f64 * rt;
        }
    }
    acc.into_iter().map(|s| s.value()).collect()
}

// ---------------------------------------------------------------------------
// Streaming moment evaluators (sweep back end)
// ---------------------------------------------------------------------------

/// Probability and posterior moments of the exact map without
/// materializing the output vector: the l-sums fold into closed
/// negative-binomial tails, leaving one pass over the input.
pub fn add_exact_moments(
    p: &PhotonNumberDistribution,
    pdc: &PdcParams,
    detector: &DetectorModel,
) -> Result<ProcessMoments> {
    match detector.flavor() {
        DetectorFlavor::Resolving => {
            let weights = resolving_weights(p.probs(), pdc, detector.k() as u64);
            moments_from_weights(&weights, &format!("addition {detector}"))
        }
        DetectorFlavor::Nonresolving => nonresolving_moments(p, pdc, detector.k() as u64),
    }
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

fn nonresolving_moments(
    p: &PhotonNumberDistribution,
    pdc: &PdcParams,
    k: u64,
) -> Result<ProcessMoments> {
    let (r, t) = (pdc.r, pdc.t);
    let x = r * t;
    let ln_t = t.ln();
    let mut p_sum = NeumaierSum::new();
    let mut m1_sum = NeumaierSum::new();
    let mut m2_sum = NeumaierSum::new();
    let mut t_pow = t; // t^(m+1), refreshed periodically
    for (m, &pm) in p.probs().iter().enumerate() {
        if m % 1024 == 0 {
            t_pow = ((m as f64 + 1.0) * ln_t).exp();
        }
        let mf = m as f64;
        if pm > 0.0 {
            let (a0, a1, a2) = if (mf + 1.0) * x < 0.5 {
                // Small trigger tail: all-positive series from l = k.
                let mut binom = 1.0;
                for i in 1..=k {
                    binom *= (m as u64 + i) as f64 / i as f64;
                }
                let mut term = binom * x.powi(k as i32) * t_pow;
                let mut s0 = NeumaierSum::new();
                let mut s1 = NeumaierSum::new();
                let mut s2 = NeumaierSum::new();
                let mut l = k;
                loop {
                    let n = mf + l as f64;
                    s0.add(term);
                    s1.add(n * term);
                    s2.add(n * (n - 1.0) * term);
                    term *= x * (mf + l as f64 + 1.0) / (l as f64 + 1.0);
                    l += 1;
                    if term <= 1e-18 * s0.value() {
                        break;
                    }
                }
                (s0.value(), s1.value(), s2.value())
            } else {
                // Complement: subtract the l < k head from the full
                // negative-binomial sums, which collapse to polynomials
                // in r because t (1 + r) = 1.
                let mut s0 = 0.0;
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                let mut binom = 1.0;
                let mut x_pow = 1.0;
                for l in 0..k {
                    if l > 0 {
                        binom *= (m as u64 + l) as f64 / l as f64;
                        x_pow *= x;
                    }
                    let c = binom * x_pow;
                    let lf = l as f64;
                    s0 += c;
                    s1 += lf * c;
                    s2 += lf * (lf - 1.0) * c;
                }
                let a0 = 1.0 - t_pow * s0;
                let a1 = mf + (mf + 1.0) * r - t_pow * (mf * s0 + s1);
                let a2 = mf * (mf - 1.0) + 2.0 * mf * (mf + 1.0) * r
                    + (mf + 1.0) * (mf + 2.0) * r * r
                    - t_pow * (mf * (mf - 1.0) * s0 + 2.0 * mf * s1 + s2);
                (a0.max(0.0), a1.max(0.0), a2.max(0.0))
            };
            p_sum.add(pm * a0);
            m1_sum.add(pm * a1);
            m2_sum.add(pm * a2);
        }
        t_pow *= t;
    }
    ProcessMoments::from_sums(
        p_sum.value(),
        m1_sum.value(),
        m2_sum.value(),
        &format!("addition (nonresolving {k})"),
    )
}

/// Moments of the A-model map in one pass.
pub fn add_model_a_moments(
    p: &PhotonNumberDistribution,
    pdc: &PdcParams,
    k: u32,
) -> Result<ProcessMoments> {
    check_k(k)?;
    let k = k as u64;
    let mut log_k_factorial = 0.0;
    for i in 2..=k {
        log_k_factorial += (i as f64).ln();
    }
    let scale = (k as f64 * pdc.r.ln() - log_k_factorial).exp();
    let mut p_sum = NeumaierSum::new();
    let mut m1 = NeumaierSum::new();
    let mut m2 = NeumaierSum::new();
    for (m, &pm) in p.probs().iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let mut rising = 1.0;
        for i in 1..=k {
            rising *= (m as u64 + i) as f64;
        }
        let w = scale * rising * pm;
        let n = (m as u64 + k) as f64;
        p_sum.add(w);
        m1.add(n * w);
        m2.add(n * (n - 1.0) * w);
    }
    ProcessMoments::from_sums(p_sum.value(), m1.value(), m2.value(), "A-model addition")
}

/// Moments of the E-model shift in one pass.
pub fn add_model_e_moments(p: &PhotonNumberDistribution, k: u32) -> Result<ProcessMoments> {
    check_k(k)?;
    let kf = k as f64;
    let mut p_sum = NeumaierSum::new();
    let mut m1 = NeumaierSum::new();
    let mut m2 = NeumaierSum::new();
    for (m, &pm) in p.probs().iter().enumerate() {
        let n = m as f64 + kf;
        p_sum.add(pm);
        m1.add(n * pm);
        m2.add(n * (n - 1.0) * pm);
    }
    ProcessMoments::from_sums(p_sum.value(), m1.value(), m2.value(), "E-model addition")
}
