//! Seeded Brownian path generation on a uniform grid, plus exact (pathless)
//! terminal sampling for interval-sequence rules.
//!
//! Streams are ChaCha8 keyed by (seed, stream_id); identical keys reproduce
//! identical paths bit for bit, distinct stream ids are independent, so a
//! harness can hand one stream per path to concurrent workers.

use std::io;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::scalar::{c, Scalar};
use crate::stopping::{Decision, Interval, RuleState, StoppingRule};

/// Deterministic random stream keyed by (seed, stream_id).
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
    stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { rng, seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Standard normal draw (ziggurat).
    pub fn standard_normal<T: Scalar>(&mut self) -> T {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        c(z)
    }

    /// Standard exponential draw.
    pub fn standard_exponential<T: Scalar>(&mut self) -> T {
        let e: f64 = Exp1.sample(&mut self.rng);
        c(e)
    }

    /// Uniform draw in [0, 1).
    pub fn uniform<T: Scalar>(&mut self) -> T {
        c(self.rng.random::<f64>())
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.random_range(0..n)
    }
}

/// How a simulated path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopStatus {
    /// The rule fired at this grid index.
    Stopped(usize),
    /// The engine cap elapsed before the rule fired. Reported, never folded
    /// silently into estimates.
    Capped,
}

/// One simulated Brownian path on a uniform grid, truncated at its stop.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid<T> {
    dt: T,
    values: Vec<T>,
    status: StopStatus,
}

impl<T: Scalar> PathGrid<T> {
    /// Fabricate a path from raw parts; estimator unit tests drive the
    /// documented arithmetic cases through this.
    #[cfg(test)]
    pub(crate) fn from_parts(dt: T, values: Vec<T>, status: StopStatus) -> Self {
        assert!(!values.is_empty());
        Self { dt, values, status }
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Grid samples from the start up to and including the stop (or cap).
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn status(&self) -> StopStatus {
        self.status
    }

    pub fn is_capped(&self) -> bool {
        self.status == StopStatus::Capped
    }

    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn terminal(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// Process time at the last sample.
    pub fn elapsed(&self) -> T {
        c::<T>(self.last_index() as f64) * self.dt
    }

    /// Dump as `t,value` CSV rows for debugging.
    pub fn write_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", c::<T>(k as f64) * self.dt, v)?;
        }
        Ok(())
    }
}

/// Evolve a path by Gaussian increments of variance `dt` until the rule fires
/// or `cap` process time elapses.
///
/// Boundary crossings are detected at grid points and the landing sample is
/// clamped to the boundary level, removing the first-order overshoot from
/// terminal laws; undetected sub-grid excursions remain, so exit times carry
/// an O(sqrt(dt)) bias that tolerance budgets must absorb.
pub fn simulate_path<T: Scalar>(
    rule: &StoppingRule<T>,
    dt: T,
    cap: T,
    rng: &mut RandomStream,
) -> PathGrid<T> {
    assert!(dt > T::zero(), "dt must be positive");
    assert!(cap >= dt, "cap must be at least one step");
    let sqrt_dt = dt.sqrt();
    let mut state = RuleState::new(rule);
    let mut values = vec![T::zero()];

    match state.initial() {
        Decision::StopAtLevel(level) => {
            values[0] = level;
            return PathGrid { dt, values, status: StopStatus::Stopped(0) };
        }
        Decision::StopNow => {
            return PathGrid { dt, values, status: StopStatus::Stopped(0) };
        }
        Decision::Continue | Decision::ContinueAtLevel(_) => {}
    }

    let max_steps = (cap / dt).ceil().to_usize().unwrap_or(usize::MAX);
    let mut v = T::zero();
    for k in 1..=max_steps {
        v = v + sqrt_dt * rng.standard_normal::<T>();
        let elapsed = c::<T>(k as f64) * dt;
        match state.step(elapsed, v) {
            Decision::Continue => values.push(v),
            Decision::ContinueAtLevel(level) => {
                values.push(level);
                v = level;
            }
            Decision::StopAtLevel(level) => {
                values.push(level);
                return PathGrid { dt, values, status: StopStatus::Stopped(k) };
            }
            Decision::StopNow => {
                values.push(v);
                return PathGrid { dt, values, status: StopStatus::Stopped(k) };
            }
        }
    }
    PathGrid { dt, values, status: StopStatus::Capped }
}

/// Draw the terminal value of an interval-sequence plan without simulating a
/// path: from position p strictly inside (a, b), the upper boundary is hit
/// with probability (p - a)/(b - a); positions outside an interval skip it.
pub fn sample_terminal_exact<T: Scalar>(steps: &[Interval<T>], rng: &mut RandomStream) -> T {
    let mut pos = T::zero();
    for iv in steps {
        if iv.contains_strict(pos) {
            let p_up = (pos - iv.lower()) / (iv.upper() - iv.lower());
            pos = if rng.uniform::<T>() < p_up { iv.upper() } else { iv.lower() };
        }
    }
    pos
}
