//! Combinatorial and special-function primitives shared by the conditional
//! maps.
//!
//! The detector transforms multiply binomial coefficients against high
//! powers of reflectivities, so products are assembled in log space and
//! exponentiated once. [`LogReal`] carries the natural log of a
//! non-negative quantity together with an explicit zero flag.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Cumulative log-factorial table; log-gamma takes over past the end.
const FACTORIAL_TABLE_LEN: usize = 2048;

/// A non-negative real number stored as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogReal {
    log_magnitude: f64,
    is_zero: bool,
}

impl LogReal {
    pub fn zero() -> Self {
        LogReal {
            log_magnitude: f64::NEG_INFINITY,
            is_zero: true,
        }
    }

    pub fn from_ln(log_magnitude: f64) -> Self {
        LogReal {
            log_magnitude,
            is_zero: false,
        }
    }

    pub fn from_value(value: f64) -> Result<Self> {
        if value < 0.0 || value.is_nan() {
            return Err(Error::Domain(format!(
                "LogReal requires a non-negative value, got {value}"
            )));
        }
        if value == 0.0 {
            Ok(Self::zero())
        } else {
            Ok(Self::from_ln(value.ln()))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    /// Natural log of the magnitude; -inf for zero.
    pub fn ln(&self) -> f64 {
        if self.is_zero {
            f64::NEG_INFINITY
        } else {
            self.log_magnitude
        }
    }

    /// The represented value. Underflows to 0 and overflows to +inf like
    /// `exp` itself.
    pub fn value(&self) -> f64 {
        if self.is_zero {
            0.0
        } else {
            self.log_magnitude.exp()
        }
    }

    /// Multiply by `e^{ln_factor}`.
    pub fn scaled(self, ln_factor: f64) -> Self {
        if self.is_zero {
            self
        } else {
            Self::from_ln(self.log_magnitude + ln_factor)
        }
    }
}

/// Kahan-Babuska (Neumaier) compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Error-free sum of two doubles (Knuth two-sum).
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn factorial_table() -> &'static [f64; FACTORIAL_TABLE_LEN] {
    static TABLE: OnceLock<Box<[f64; FACTORIAL_TABLE_LEN]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Box::new([0.0; FACTORIAL_TABLE_LEN]);
        // Double-double cumulative sum keeps every entry within ~1 ulp.
        let mut hi = 0.0_f64;
        let mut lo = 0.0_f64;
        for n in 1..FACTORIAL_TABLE_LEN {
            let (s, e) = two_sum(hi, (n as f64).ln());
            lo += e;
            let (s2, e2) = two_sum(s, lo);
            hi = s2;
            lo = e2;
            table[n] = hi + lo;
        }
        table
    })
}

/// ln(n!), from the cumulative table for small n and log-gamma beyond it.
pub fn log_factorial(n: u64) -> f64 {
    if (n as usize) < FACTORIAL_TABLE_LEN {
        factorial_table()[n as usize]
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// ln C(n, k); zero (not an error) when k > n.
pub fn log_binomial(n: u64, k: u64) -> LogReal {
    if k > n {
        return LogReal::zero();
    }
    let m = k.min(n - k);
    if m == 0 {
        return LogReal::from_ln(0.0);
    }
    if m <= 8 {
        // Short product; avoids cancellation between huge log-factorials.
        let mut acc = 0.0;
        for i in 0..m {
            acc += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        return LogReal::from_ln(acc);
    }
    LogReal::from_ln(log_factorial(n) - log_factorial(k) - log_factorial(n - k))
}

/// Streams L_0(x), L_1(x), ... by the three-term recurrence
/// (m+1) L_{m+1} = (2m+1-x) L_m - m L_{m-1}.
///
/// For x <= 0 every recurrence term reinforces, so the forward pass is
/// stable; the values grow without bound and the stream reports a range
/// error instead of returning infinity.
pub struct LaguerreSequence {
    x: f64,
    degree: i64,
    prev: f64,
    curr: f64,
}

impl LaguerreSequence {
    pub fn new(x: f64) -> Self {
        LaguerreSequence {
            x,
            degree: -1,
            prev: 0.0,
            curr: 0.0,
        }
    }

    /// Value of the next degree, starting from L_0.
    pub fn next_value(&mut self) -> Result<f64> {
        self.degree += 1;
        let value = match self.degree {
            0 => 1.0,
            1 => 1.0 - self.x,
            d => {
                let m = (d - 1) as f64;
                ((2.0 * m + 1.0 - self.x) * self.curr - m * self.prev) / (m + 1.0)
            }
        };
        if !value.is_finite() {
            return Err(Error::Range(format!(
                "Laguerre polynomial L_{}({}) overflows f64",
                self.degree, self.x
            )));
        }
        self.prev = self.curr;
        self.curr = value;
        Ok(value)
    }
}

/// Standard Laguerre polynomial L_n(x).
pub fn laguerre(n: u32, x: f64) -> Result<f64> {
    let mut seq = LaguerreSequence::new(x);
    let mut value = 1.0;
    for _ in 0..=n {
        value = seq.next_value()?;
    }
    Ok(value)
}

/// Pr[Poisson(rate) >= k], stable on both ends.
pub fn poisson_upper_tail(k: u64, rate: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if rate <= 0.0 {
        return 0.0;
    }
    if rate < k as f64 + 1.0 {
        // All-positive series: e^{-x} x^k / k! * (1 + x/(k+1) + ...)
        let mut term = 1.0;
        let mut sum = NeumaierSum::new();
        sum.add(1.0);
        let mut j = k + 1;
        loop {
            term *= rate / j as f64;
            if term < 1e-18 * sum.value() {
                break;
            }
            sum.add(term);
            j += 1;
        }
        let head = (-rate + k as f64 * rate.ln() - log_factorial(k)).exp();
        head * sum.value()
    } else {
        let mut below = NeumaierSum::new();
        let mut term = (-rate).exp();
        for l in 0..k {
            if l > 0 {
                term *= rate / l as f64;
            }
            below.add(term);
        }
        (1.0 - below.value()).max(0.0)
    }
}
