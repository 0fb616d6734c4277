//! Local-time measurement: the exact distribution-based evaluator and the two
//! Monte Carlo path estimators, with a deterministic parallel ensemble
//! driver.
//!
//! The exact evaluator is the designated ground truth; the path estimators
//! are validated against it, never the other way around.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::brownian::{simulate_path, PathGrid, RandomStream};
use crate::distributions::TerminalDistribution;
use crate::embedding::terminal_law_of_rule;
use crate::scalar::{c, Scalar};
use crate::stats::RunningStats;
use crate::stopping::StoppingRule;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LocalTimeError {
    #[error("the distribution formula needs a zero-mean law, got mean {mean:e}")]
    NonZeroMean { mean: f64 },
    #[error("all {n} paths hit the time cap; no estimate available")]
    AllPathsCapped { n: u64 },
    #[error("need at least 2 paths, got {n}")]
    TooFewPaths { n: u64 },
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Monte Carlo estimator selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Occupation-time window: time within epsilon of the level over 2 eps.
    Occupation,
    /// Upcrossing count of a one-sided epsilon window times 2 eps.
    Upcrossing,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Occupation => "occupation",
            Method::Upcrossing => "upcrossing",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "occupation" => Ok(Method::Occupation),
            "upcrossing" => Ok(Method::Upcrossing),
            other => Err(format!("unknown method `{other}` (occupation|upcrossing)")),
        }
    }
}

/// Provenance tag on a local-time figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    Occupation,
    Upcrossing,
    Exact,
}

/// A local-time figure with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTimeEstimate<T> {
    pub x: T,
    pub value: T,
    /// Sample standard deviation over sqrt(n); zero for exact values.
    pub std_error: T,
    pub n_paths: u64,
    pub method: EstimateKind,
    /// Window width; absent for exact values.
    pub epsilon: Option<T>,
    /// Fraction of paths that hit the cap and were excluded.
    pub capped_fraction: T,
}

impl<T: Scalar> LocalTimeEstimate<T> {
    /// Wrap an exactly evaluated figure in the estimate shape.
    pub fn exact(x: T, value: T) -> Self {
        Self {
            x,
            value,
            std_error: T::zero(),
            n_paths: 0,
            method: EstimateKind::Exact,
            epsilon: None,
            capped_fraction: T::zero(),
        }
    }
}

/// E[L_x(tau)] from the terminal law alone: 2 E[(X - x)^+] for x >= 0 and
/// 2 E[(X - x)^-] for x <= 0 (both branches agree at zero). Requires a
/// mean-zero law, which is where the identity starts.
pub fn exact_expected_local_time<T: Scalar>(
    dist: &TerminalDistribution<T>,
    x: T,
) -> Result<T, LocalTimeError> {
    let mean = dist.mean();
    if mean.abs() > T::mass_tol() {
        return Err(LocalTimeError::NonZeroMean { mean: mean.to_f64().unwrap_or(f64::NAN) });
    }
    let two = c::<T>(2.0);
    if x >= T::zero() {
        Ok(two * dist.expected_positive_part(x))
    } else {
        Ok(two * dist.expected_negative_part(x))
    }
}

/// Occupation-measure estimate from one path:
/// dt * #{samples within epsilon of x} / (2 epsilon).
pub fn estimate_occupation<T: Scalar>(path: &PathGrid<T>, x: T, epsilon: T) -> T {
    assert!(epsilon > T::zero(), "epsilon must be positive");
    let hits = path.values().iter().filter(|&&v| (v - x).abs() < epsilon).count();
    c::<T>(hits as f64) * path.dt() / (c::<T>(2.0) * epsilon)
}

/// Completed transitions from a sample at or below `lower` to a later sample
/// at or above `upper`, over the whole recorded path.
pub fn count_upcrossings<T: Scalar>(path: &PathGrid<T>, lower: T, upper: T) -> u64 {
    assert!(lower < upper, "need lower < upper");
    let mut count = 0;
    let mut armed = false;
    for &v in path.values() {
        if armed {
            if v >= upper {
                count += 1;
                armed = false;
            }
        } else if v <= lower {
            armed = true;
        }
    }
    count
}

/// Upcrossing estimate from one path: 2 epsilon times the number of
/// upcrossings of the one-sided window, (x, x + eps) for x >= 0 and
/// (x - eps, x) for x < 0.
pub fn estimate_via_upcrossings<T: Scalar>(path: &PathGrid<T>, x: T, epsilon: T) -> T {
    assert!(epsilon > T::zero(), "epsilon must be positive");
    let crossings = if x >= T::zero() {
        count_upcrossings(path, x, x + epsilon)
    } else {
        count_upcrossings(path, x - epsilon, x)
    };
    c::<T>(2.0) * epsilon * c(crossings as f64)
}

/// Default occupation window: wide enough to dominate the grid scale, small
/// enough to stay local. Bias is O(eps) + O(sqrt(dt)/eps).
pub fn default_epsilon<T: Scalar>(dt: T) -> T {
    (c::<T>(5.0) * dt.sqrt()).max(dt.powf(c(0.4)))
}

/// Default engine cap: 64 units of final variance when the rule has a known
/// law, otherwise 64 on the scale the rule exposes.
pub fn default_cap<T: Scalar>(rule: &StoppingRule<T>) -> T {
    let base = c::<T>(64.0);
    match terminal_law_of_rule(rule) {
        Some(law) => {
            let var = law.variance();
            if var > T::zero() {
                base * var
            } else {
                base
            }
        }
        None => match rule {
            StoppingRule::FirstHit { level } => base * (*level * *level).max(T::one()),
            _ => base,
        },
    }
}

/// Monte Carlo run configuration. Stream ids are path indices, fixed a
/// priori, so results do not depend on worker count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig<T> {
    pub n_paths: u64,
    pub dt: T,
    pub epsilon: T,
    pub seed: u64,
    pub cap: T,
}

impl<T: Scalar> McConfig<T> {
    /// Standard configuration with the default window and a cap sized to the
    /// rule's variance.
    pub fn for_rule(rule: &StoppingRule<T>, n_paths: u64, dt: T, seed: u64) -> Self {
        Self { n_paths, dt, epsilon: default_epsilon(dt), seed, cap: default_cap(rule) }
    }

    fn validate(&self) -> Result<(), LocalTimeError> {
        if self.n_paths < 2 {
            return Err(LocalTimeError::TooFewPaths { n: self.n_paths });
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(LocalTimeError::InvalidConfig("dt must be positive and finite"));
        }
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return Err(LocalTimeError::InvalidConfig("epsilon must be positive and finite"));
        }
        if !(self.cap >= self.dt && self.cap.is_finite()) {
            return Err(LocalTimeError::InvalidConfig("cap must be finite, at least one step"));
        }
        Ok(())
    }
}

/// Accumulated results of one path ensemble: one cell per (x, method), plus
/// stopping-time moments and exact terminal-value tallies.
#[derive(Debug, Clone)]
pub struct Ensemble<T> {
    xs: Vec<T>,
    methods: Vec<Method>,
    cells: Vec<RunningStats<T>>,
    pub tau: RunningStats<T>,
    /// Terminal value tallies (only for rules whose landings are clamped to
    /// finitely many levels).
    pub terminal_counts: Vec<(T, u64)>,
    pub n_paths: u64,
    pub n_capped: u64,
}

impl<T: Scalar> Ensemble<T> {
    pub fn stats(&self, x_index: usize, method: Method) -> &RunningStats<T> {
        let m = self.methods.iter().position(|&mm| mm == method).expect("method was requested");
        &self.cells[x_index * self.methods.len() + m]
    }

    pub fn capped_fraction(&self) -> T {
        c::<T>(self.n_capped as f64) / c(self.n_paths as f64)
    }

    pub fn estimate(&self, x_index: usize, method: Method, epsilon: T) -> LocalTimeEstimate<T> {
        let stats = self.stats(x_index, method);
        LocalTimeEstimate {
            x: self.xs[x_index],
            value: stats.mean(),
            std_error: stats.std_error(),
            n_paths: stats.count(),
            method: match method {
                Method::Occupation => EstimateKind::Occupation,
                Method::Upcrossing => EstimateKind::Upcrossing,
            },
            epsilon: Some(epsilon),
            capped_fraction: self.capped_fraction(),
        }
    }
}

// Fixed batch size: batches are the deterministic merge units.
const BATCH: u64 = 256;

struct BatchAcc<T> {
    cells: Vec<RunningStats<T>>,
    tau: RunningStats<T>,
    terminals: Vec<(T, u64)>,
    capped: u64,
}

/// Run an ensemble of paths under `rule`, estimating local time at every
/// requested level with every requested method on shared paths.
///
/// Capped paths are counted and excluded from every statistic. Deterministic:
/// path k always uses stream id k and batch results merge in index order.
pub fn estimate_ensemble<T: Scalar>(
    rule: &StoppingRule<T>,
    xs: &[T],
    methods: &[Method],
    cfg: &McConfig<T>,
) -> Result<Ensemble<T>, LocalTimeError> {
    cfg.validate()?;
    let tally_terminals = rule_lands_on_levels(rule);
    let n_cells = xs.len() * methods.len();
    let n_batches = cfg.n_paths.div_ceil(BATCH);

    let batches: Vec<BatchAcc<T>> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let first = batch * BATCH;
            let last = (first + BATCH).min(cfg.n_paths);
            let mut acc = BatchAcc {
                cells: vec![RunningStats::new(); n_cells],
                tau: RunningStats::new(),
                terminals: Vec::new(),
                capped: 0,
            };
            for path_index in first..last {
                let mut rng = RandomStream::new(cfg.seed, path_index);
                let path = simulate_path(rule, cfg.dt, cfg.cap, &mut rng);
                if path.is_capped() {
                    acc.capped += 1;
                    continue;
                }
                acc.tau.push(path.elapsed());
                for (i, &x) in xs.iter().enumerate() {
                    for (j, &method) in methods.iter().enumerate() {
                        let est = match method {
                            Method::Occupation => estimate_occupation(&path, x, cfg.epsilon),
                            Method::Upcrossing => estimate_via_upcrossings(&path, x, cfg.epsilon),
                        };
                        acc.cells[i * methods.len() + j].push(est);
                    }
                }
                if tally_terminals {
                    let t = path.terminal();
                    match acc.terminals.iter_mut().find(|(v, _)| *v == t) {
                        Some((_, n)) => *n += 1,
                        None => acc.terminals.push((t, 1)),
                    }
                }
            }
            acc
        })
        .collect();

    let mut out = Ensemble {
        xs: xs.to_vec(),
        methods: methods.to_vec(),
        cells: vec![RunningStats::new(); n_cells],
        tau: RunningStats::new(),
        terminal_counts: Vec::new(),
        n_paths: cfg.n_paths,
        n_capped: 0,
    };
    for batch in &batches {
        for (cell, part) in out.cells.iter_mut().zip(&batch.cells) {
            cell.merge(part);
        }
        out.tau.merge(&batch.tau);
        out.n_capped += batch.capped;
        for &(v, n) in &batch.terminals {
            match out.terminal_counts.iter_mut().find(|(w, _)| *w == v) {
                Some((_, total)) => *total += n,
                None => out.terminal_counts.push((v, n)),
            }
        }
    }
    out.terminal_counts
        .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite terminals"));

    if out.n_capped == cfg.n_paths {
        return Err(LocalTimeError::AllPathsCapped { n: cfg.n_paths });
    }
    Ok(out)
}

/// Paths under these rules always land exactly on one of finitely many
/// levels, so terminal tallies stay small.
fn rule_lands_on_levels<T: Scalar>(rule: &StoppingRule<T>) -> bool {
    match rule {
        StoppingRule::FirstExit(_)
        | StoppingRule::FirstHit { .. }
        | StoppingRule::TwoStage { .. }
        | StoppingRule::PlanSequence(_) => true,
        // a time-capped inner rule can stop at an arbitrary sample
        StoppingRule::TimeCap { .. } => false,
    }
}

/// Monte Carlo estimate of expected local time at one level.
pub fn mc_expected_local_time<T: Scalar>(
    rule: &StoppingRule<T>,
    x: T,
    method: Method,
    cfg: &McConfig<T>,
) -> Result<LocalTimeEstimate<T>, LocalTimeError> {
    let ensemble = estimate_ensemble(rule, &[x], &[method], cfg)?;
    Ok(ensemble.estimate(0, method, cfg.epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::StopStatus;

    type D = TerminalDistribution<f64>;

    fn fixture(dt: f64, values: &[f64]) -> PathGrid<f64> {
        PathGrid::from_parts(dt, values.to_vec(), StopStatus::Stopped(values.len() - 1))
    }

    #[test]
    fn exact_evaluator_closed_forms() {
        // dichotomous attainment value
        let d = D::two_point_optimal(0.75, 1.0).unwrap();
        assert_eq!(exact_expected_local_time(&d, 0.75).unwrap(), 0.5);

        // harmonic mean of the interval arms at the origin
        let d = D::first_exit(1.0, 1.0).unwrap();
        assert_eq!(exact_expected_local_time(&d, 0.0).unwrap(), 1.0);
        let d = D::first_exit(1.0, 2.0).unwrap();
        let v = exact_expected_local_time(&d, 1.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);

        // normal at the origin
        let d = D::normal(1.0).unwrap();
        let v = exact_expected_local_time(&d, 0.0).unwrap();
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);

        // shifted exponential at sigma = x = 1
        let d = D::shifted_exponential(1.0).unwrap();
        let v = exact_expected_local_time(&d, 1.0).unwrap();
        assert!((v - 2.0 * (-2.0f64).exp()).abs() < 1e-15);

        // zero-mean precondition
        let skew = D::finite(vec![(-1.0, 0.3), (1.0, 0.7)]).unwrap();
        assert!(matches!(
            exact_expected_local_time(&skew, 0.0),
            Err(LocalTimeError::NonZeroMean { .. })
        ));
    }

    #[test]
    fn exact_evaluator_negative_branch() {
        // three expressions of the same formula agree on both sides
        let d = D::finite(vec![(-1.5, 0.25), (0.5, 0.75)]).unwrap();
        if let D::FiniteSupport(law) = &d {
            for &x in &[-2.0, -1.0, -0.25, 0.0, 0.3, 1.2, 3.0] {
                let lhs = law.potential_at(x) - x.abs();
                let rhs = exact_expected_local_time(&d, x).unwrap();
                assert!((lhs - rhs).abs() < 1e-14, "at {x}: {lhs} vs {rhs}");
            }
        }

        // far tails die out on both sides
        assert!(exact_expected_local_time(&d, -40.0).unwrap().abs() < 1e-12);
        assert!(exact_expected_local_time(&d, 40.0).unwrap().abs() < 1e-12);

        // shifted exponential has no local time below -sigma
        let e = D::shifted_exponential(1.0).unwrap();
        assert_eq!(exact_expected_local_time(&e, -1.5).unwrap(), 0.0);
    }

    #[test]
    fn occupation_arithmetic() {
        // constant-zero two-step path, window far away: zero
        let path = fixture(1.0, &[0.0, 0.0]);
        assert_eq!(estimate_occupation(&path, 5.0, 0.1), 0.0);

        // both samples inside the unit window around 0: (1/(2*1)) * 1 * 2
        assert_eq!(estimate_occupation(&path, 0.0, 1.0), 1.0);

        // strict window: a sample exactly at distance epsilon does not count
        let path = fixture(1.0, &[0.0, 0.5]);
        assert_eq!(estimate_occupation(&path, 0.0, 0.5), 1.0);
    }

    #[test]
    fn upcrossing_counting() {
        let up = fixture(1.0, &[0.0, 1.0]);
        assert_eq!(count_upcrossings(&up, 0.2, 0.8), 1);

        let down = fixture(1.0, &[0.0, -0.5, -1.0, -1.5]);
        assert_eq!(count_upcrossings(&down, 0.2, 0.8), 0);

        let zigzag = fixture(1.0, &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(count_upcrossings(&zigzag, 0.2, 0.8), 2);

        // incomplete final transition does not count
        let partial = fixture(1.0, &[0.0, 1.0, 0.1]);
        assert_eq!(count_upcrossings(&partial, 0.2, 0.8), 1);
    }

    #[test]
    fn upcrossing_estimator_windows() {
        // positive level: window (x, x + eps)
        let path = fixture(1.0, &[0.0, 0.5, 0.62, 0.4, 0.7]);
        assert_eq!(count_upcrossings(&path, 0.5, 0.6), 2);
        assert_eq!(estimate_via_upcrossings(&path, 0.5, 0.1), 2.0 * 0.1 * 2.0);

        // negative level mirrors to (x - eps, x)
        let path = fixture(1.0, &[0.0, -0.62, -0.45, -0.8, -0.2]);
        assert_eq!(estimate_via_upcrossings(&path, -0.5, 0.1), 2.0 * 0.1 * 2.0);

        // never reaching the window
        let path = fixture(1.0, &[0.0, 0.1, 0.2]);
        assert_eq!(estimate_via_upcrossings(&path, 5.0, 0.1), 0.0);
    }

    #[test]
    fn mc_driver_small_run_is_deterministic() {
        let rule: StoppingRule<f64> = StoppingRule::first_exit_ab(1.0, 1.0).unwrap();
        let cfg = McConfig { n_paths: 300, dt: 1e-3, epsilon: 0.1, seed: 4, cap: 64.0 };
        let e1 = mc_expected_local_time(&rule, 0.0, Method::Occupation, &cfg).unwrap();
        let e2 = mc_expected_local_time(&rule, 0.0, Method::Occupation, &cfg).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(e1.n_paths, 300);
        assert_eq!(e1.capped_fraction, 0.0);
        assert!(e1.value > 0.0 && e1.std_error.is_finite());
    }

    #[test]
    fn mc_driver_rejects_degenerate_configs() {
        let rule: StoppingRule<f64> = StoppingRule::first_exit_ab(1.0, 1.0).unwrap();
        let cfg = McConfig { n_paths: 1, dt: 1e-3, epsilon: 0.1, seed: 4, cap: 64.0 };
        assert!(matches!(
            mc_expected_local_time(&rule, 0.0, Method::Occupation, &cfg),
            Err(LocalTimeError::TooFewPaths { n: 1 })
        ));

        // N = 2 is the smallest valid ensemble
        let cfg = McConfig { n_paths: 2, ..cfg };
        let est = mc_expected_local_time(&rule, 0.0, Method::Occupation, &cfg).unwrap();
        assert!(est.std_error.is_finite());
    }

    #[test]
    fn immediate_stop_rules_are_handled() {
        // an empty plan fires at the start sample; tau is zero, occupation
        // sees exactly one sample at the origin
        let rule: StoppingRule<f64> = StoppingRule::plan(vec![]);
        let cfg = McConfig { n_paths: 10, dt: 1e-2, epsilon: 0.5, seed: 1, cap: 1.0 };
        let ensemble = estimate_ensemble(&rule, &[0.0], &[Method::Occupation], &cfg).unwrap();
        assert_eq!(ensemble.tau.mean(), 0.0);
        let est = ensemble.stats(0, Method::Occupation);
        assert_eq!(est.mean(), 1e-2 / (2.0 * 0.5));
        assert_eq!(ensemble.terminal_counts, vec![(0.0, 10)]);
    }

    #[test]
    fn all_capped_is_an_error() {
        let rule: StoppingRule<f64> = StoppingRule::first_hit(100.0);
        let cfg = McConfig { n_paths: 8, dt: 1e-2, epsilon: 0.1, seed: 4, cap: 0.05 };
        assert!(matches!(
            estimate_ensemble(&rule, &[0.0], &[Method::Occupation], &cfg),
            Err(LocalTimeError::AllPathsCapped { n: 8 })
        ));
    }

    #[test]
    fn default_epsilon_formula() {
        let dt = 1e-4f64;
        let eps = default_epsilon(dt);
        assert!((eps - 0.05).abs() < 1e-15, "max(5 sqrt(dt), dt^0.4) at 1e-4");
        let dt = 1e-2f64;
        assert!((default_epsilon(dt) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_estimate_shape() {
        let d = D::first_exit(1.0, 1.0).unwrap();
        let est = LocalTimeEstimate::exact(0.0, exact_expected_local_time(&d, 0.0).unwrap());
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.method, EstimateKind::Exact);
        assert_eq!(est.epsilon, None);
    }

    #[test]
    fn default_cap_scales_with_variance() {
        let rule: StoppingRule<f64> = StoppingRule::first_exit_ab(1.0, 2.0).unwrap();
        assert_eq!(default_cap(&rule), 128.0);
        let hit: StoppingRule<f64> = StoppingRule::first_hit(3.0);
        assert_eq!(default_cap(&hit), 64.0 * 9.0);
    }
}
