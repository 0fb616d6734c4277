//! Streaming moments and the small statistical utilities shared by the
//! estimators, the harness and the acceptance checks.

use crate::scalar::{c, Scalar};

/// Mergeable (count, mean, M2) accumulator.
///
/// `push` is Welford's update; `merge` is the pairwise combination rule, so
/// partial results from independent workers combine deterministically as long
/// as the merge order is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningStats<T> {
    n: u64,
    mean: T,
    m2: T,
}

impl<T: Scalar> Default for RunningStats<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> RunningStats<T> {
    pub fn new() -> Self {
        Self { n: 0, mean: T::zero(), m2: T::zero() }
    }

    pub fn push(&mut self, x: T) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean = self.mean + delta / c(self.n as f64);
        self.m2 = self.m2 + delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = c::<T>(other.n as f64) / c(n as f64);
        self.mean = self.mean + delta * w;
        self.m2 = self.m2
            + other.m2
            + delta * delta * c::<T>(self.n as f64) * c::<T>(other.n as f64) / c(n as f64);
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    /// Unbiased sample variance; infinite when fewer than two samples.
    pub fn sample_variance(&self) -> T {
        if self.n < 2 {
            return T::infinity();
        }
        self.m2 / c(self.n as f64 - 1.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> T {
        if self.n == 0 {
            return T::infinity();
        }
        (self.sample_variance() / c(self.n as f64)).sqrt()
    }
}

/// Regularized upper incomplete gamma function Q(a, x).
///
/// Series expansion for x < a+1, Lentz continued fraction otherwise; good to
/// roughly 1e-14 relative over the range used here.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - libm::lgamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c_ = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c_ = b + an / c_;
        if c_.abs() < TINY {
            c_ = TINY;
        }
        d = 1.0 / d;
        let del = d * c_;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - libm::lgamma(a)).exp() * h
}

/// Survival function of the chi-square distribution.
pub fn chi_square_survival(statistic: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, statistic / 2.0)
}

/// Result of a Pearson goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against expected category
/// probabilities. Categories must be aligned by the caller.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), expected_probs.len(), "category mismatch");
    assert!(observed.len() >= 2, "need at least two categories");
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut statistic = 0.0;
    for (&obs, &p) in observed.iter().zip(expected_probs) {
        let expect = n * p;
        assert!(expect > 0.0, "expected count must be positive");
        let d = obs as f64 - expect;
        statistic += d * d / expect;
    }
    let df = (observed.len() - 1) as f64;
    ChiSquare { statistic, df, p_value: chi_square_survival(statistic, df) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_survival_closed_forms() {
        // df = 2: Q(x) = exp(-x/2); df = 1: Q(x) = erfc(sqrt(x/2));
        // df = 4: Q(x) = exp(-x/2) (1 + x/2).
        for &x in &[0.1, 0.5, 1.0, 3.0, 7.0, 13.8155, 25.0] {
            let q2 = chi_square_survival(x, 2.0);
            assert!((q2 - (-x / 2.0).exp()).abs() < 1e-12, "df2 at {x}");
            let q1 = chi_square_survival(x, 1.0);
            assert!((q1 - libm::erfc((x / 2.0).sqrt())).abs() < 1e-12, "df1 at {x}");
            let q4 = chi_square_survival(x, 4.0);
            assert!((q4 - (-x / 2.0).exp() * (1.0 + x / 2.0)).abs() < 1e-12, "df4 at {x}");
        }
    }

    #[test]
    fn gof_statistic_by_hand() {
        // counts 30/70 against (0.5, 0.5) of n=100: chi2 = 16
        let t = chi_square_gof(&[30, 70], &[0.5, 0.5]);
        assert!((t.statistic - 16.0).abs() < 1e-12);
        assert!((t.p_value - libm::erfc((8.0f64).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.25 - 1.0).collect();
        let mut acc = RunningStats::new();
        for &x in &xs {
            acc.push(x);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((acc.mean() - mean).abs() < 1e-13);
        assert!((acc.sample_variance() - var).abs() < 1e-13);
    }

    #[test]
    fn merge_agrees_with_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut whole = RunningStats::new();
        for &x in &xs {
            whole.push(x);
        }
        // merge in several groupings
        for chunk in [1usize, 7, 100, 999] {
            let mut merged = RunningStats::new();
            for part in xs.chunks(chunk) {
                let mut local = RunningStats::new();
                for &x in part {
                    local.push(x);
                }
                merged.merge(&local);
            }
            assert_eq!(merged.count(), whole.count());
            assert!((merged.mean() - whole.mean()).abs() < 1e-13);
            assert!((merged.sample_variance() - whole.sample_variance()).abs() < 1e-13);
        }
    }

    #[test]
    fn degenerate_sizes() {
        let mut s: RunningStats<f64> = RunningStats::new();
        assert!(s.std_error().is_infinite());
        s.push(1.5);
        assert_eq!(s.mean(), 1.5);
        assert!(s.sample_variance().is_infinite());
        s.push(2.5);
        assert!((s.std_error() - 0.5).abs() < 1e-15);
    }
}
