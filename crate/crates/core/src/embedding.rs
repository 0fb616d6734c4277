//! Chacon-Walsh Skorokhod embedding: build an interval-sequence plan whose
//! iterated first-exit times embed a given finite-support mean-zero law.
//!
//! The construction works on the potential function E|X - x|. Starting from
//! |x| (the potential of the point mass at the origin), the supporting lines
//! of the target potential are folded in by increasing slope; each line,
//! intersected with the current envelope, yields one exit interval, and the
//! envelope equals the target potential when the last line is in.
//!
//! All geometry and probability propagation run in exact rational arithmetic
//! over the (dyadic) floating-point inputs, so plan round trips are exact up
//! to the final conversion back to the scalar type.

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::distributions::{FiniteLaw, TerminalDistribution};
use crate::scalar::{c, Scalar};
use crate::stopping::{Interval, StoppingRule};

type Q = BigRational;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding target must have zero mean, got mean {mean:e}")]
    NonZeroMean { mean: f64 },
    #[error("embedding target must be a finite-support law")]
    NonFiniteSupport,
    #[error("degenerate embedding step: {0}")]
    Degenerate(String),
}

/// An interval sequence embedding `target` from a start at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPlan<T> {
    steps: Vec<Interval<T>>,
    target: FiniteLaw<T>,
}

impl<T: Scalar> EmbeddingPlan<T> {
    pub fn steps(&self) -> &[Interval<T>] {
        &self.steps
    }

    pub fn target(&self) -> &FiniteLaw<T> {
        &self.target
    }

    /// The plan as a stopping rule for the path engine.
    pub fn as_rule(&self) -> StoppingRule<T> {
        StoppingRule::plan(self.steps.clone())
    }
}

/// Verification report for a plan; failures are reported, not thrown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanReport {
    /// Terminal law of the steps matches the target within the law gate.
    pub exact_match: bool,
    /// Largest cumulative-probability discrepancy between the propagated and
    /// target laws (their Kolmogorov distance).
    pub max_prob_gap: f64,
    /// Largest violation of convex-order monotonicity along the step chain
    /// (exactly zero for a monotone chain).
    pub potential_gap: f64,
}

fn to_q<T: Scalar>(v: T) -> Q {
    BigRational::from_float(v.to_f64().expect("scalar convertible to f64"))
        .expect("finite value convertible to rational")
}

fn q_to_f64(q: &Q) -> f64 {
    q.to_f64().expect("rational in f64 range")
}

/// Exact law of a point mass at the origin pushed through the steps, as
/// sorted (position, probability) rationals.
fn propagate(steps: &[(Q, Q)]) -> Vec<(Q, Q)> {
    let mut atoms: Vec<(Q, Q)> = vec![(Q::zero(), Q::from_integer(1.into()))];
    for (a, b) in steps {
        let width = b - a;
        let mut next: Vec<(Q, Q)> = Vec::with_capacity(atoms.len() + 1);
        let mut add = |pos: Q, p: Q| {
            if p.is_zero() {
                return;
            }
            match next.iter_mut().find(|(q, _)| *q == pos) {
                Some((_, existing)) => *existing += p,
                None => next.push((pos, p)),
            }
        };
        for (pos, p) in atoms {
            if &pos > a && &pos < b {
                let w_up = (&pos - a) / &width;
                add(b.clone(), &p * &w_up);
                add(a.clone(), &p * (Q::from_integer(1.into()) - &w_up));
            } else {
                add(pos, p);
            }
        }
        next.sort_by(|x, y| x.0.cmp(&y.0));
        atoms = next;
    }
    atoms
}

/// Exact finite-support law of the final position of an interval-sequence
/// plan started from a point mass at the origin.
pub fn terminal_law_of_plan<T: Scalar>(steps: &[Interval<T>]) -> TerminalDistribution<T> {
    let q_steps: Vec<(Q, Q)> =
        steps.iter().map(|iv| (to_q(iv.lower()), to_q(iv.upper()))).collect();
    let atoms = propagate(&q_steps);
    let atoms: Vec<(T, T)> =
        atoms.iter().map(|(v, p)| (c(q_to_f64(v)), c(q_to_f64(p)))).collect();
    TerminalDistribution::FiniteSupport(
        FiniteLaw::merging(atoms).expect("propagated law is a probability law"),
    )
}

/// Known terminal law of a stopping rule, when it has one in closed form.
///
/// Time caps defer to the law of the inner rule: the uncapped law is the
/// reference that capped runs are compared against, and capped paths are
/// reported separately by the estimators.
pub fn terminal_law_of_rule<T: Scalar>(rule: &StoppingRule<T>) -> Option<TerminalDistribution<T>> {
    match rule {
        StoppingRule::FirstExit(iv) => {
            Some(TerminalDistribution::first_exit(-iv.lower(), iv.upper()).expect("straddles 0"))
        }
        StoppingRule::FirstHit { .. } => None,
        StoppingRule::TwoStage { x, y, eta } => {
            let p_reach = -*y / (*x - *y);
            let half = p_reach / c::<T>(2.0);
            let law = FiniteLaw::merging(vec![
                (*y, T::one() - p_reach),
                (*x - *eta, half),
                (*x + *eta, half),
            ])
            .expect("two-stage law is a probability law");
            Some(TerminalDistribution::FiniteSupport(law))
        }
        StoppingRule::PlanSequence(steps) => Some(terminal_law_of_plan(steps)),
        StoppingRule::TimeCap { inner, .. } => terminal_law_of_rule(inner),
    }
}

/// Piecewise-linear convex envelope with slope -1 left of its first kink and
/// +1 right of its last kink, tracked exactly.
struct Envelope {
    kinks: Vec<(Q, Q)>,
}

impl Envelope {
    fn absolute_value() -> Self {
        Self { kinks: vec![(Q::zero(), Q::zero())] }
    }

    /// Fold in the line through (x0, y0) with the given slope in (-1, 1):
    /// the region where the line exceeds the envelope is an interval (a, b);
    /// replace the envelope there by the line and return (a, b). `None` when
    /// the line never exceeds the envelope.
    fn raise(&mut self, slope: &Q, x0: &Q, y0: &Q) -> Option<(Q, Q)> {
        let line = |x: &Q| y0 + slope * (x - x0);
        // gap g = line - envelope is concave piecewise linear; {g > 0} is an
        // open interval located by the sign pattern at the kinks
        let gaps: Vec<Q> = self.kinks.iter().map(|(x, y)| line(x) - y).collect();
        let first_pos = gaps.iter().position(|g| g.is_positive())?;
        let last_pos = gaps.iter().rposition(|g| g.is_positive()).expect("nonempty");

        let one = Q::from_integer(1.into());
        let a = if first_pos == 0 {
            // crossing on the left edge of slope -1:
            // y0 + slope (x - x0) = yk - (x - xk)
            let (xk, yk) = &self.kinks[0];
            (yk + xk - y0 + slope * x0) / (slope + &one)
        } else {
            let (x1, _) = &self.kinks[first_pos - 1];
            let (x2, _) = &self.kinks[first_pos];
            let (g1, g2) = (&gaps[first_pos - 1], &gaps[first_pos]);
            x1 - g1 * (x2 - x1) / (g2 - g1)
        };
        let b = if last_pos == self.kinks.len() - 1 {
            // crossing on the right edge of slope +1
            let (xk, yk) = &self.kinks[self.kinks.len() - 1];
            (y0 - slope * x0 - yk + xk) / (&one - slope)
        } else {
            let (x1, _) = &self.kinks[last_pos];
            let (x2, _) = &self.kinks[last_pos + 1];
            let (g1, g2) = (&gaps[last_pos], &gaps[last_pos + 1]);
            x1 - g1 * (x2 - x1) / (g2 - g1)
        };
        debug_assert!(a < b, "raise produced an empty interval");

        let mut kinks: Vec<(Q, Q)> = Vec::with_capacity(self.kinks.len() + 2);
        for (x, y) in &self.kinks {
            if *x < a {
                kinks.push((x.clone(), y.clone()));
            }
        }
        kinks.push((a.clone(), line(&a)));
        kinks.push((b.clone(), line(&b)));
        for (x, y) in &self.kinks {
            if *x > b {
                kinks.push((x.clone(), y.clone()));
            }
        }
        self.kinks = kinks;
        Some((a, b))
    }
}

/// Exact potential E|X - x| of rational atoms at each of the given points.
fn q_potential(atoms: &[(Q, Q)], x: &Q) -> Q {
    atoms.iter().map(|(v, p)| (v - x).abs() * p).sum()
}

/// Build the Chacon-Walsh plan for a mean-zero finite-support target.
///
/// At most n-1 intervals for an n-point target. The supporting lines are
/// processed in increasing slope order, which makes plans deterministic.
pub fn chacon_walsh_plan<T: Scalar>(
    target: &TerminalDistribution<T>,
) -> Result<EmbeddingPlan<T>, EmbeddingError> {
    let law = match target {
        TerminalDistribution::FiniteSupport(law) => law,
        _ => return Err(EmbeddingError::NonFiniteSupport),
    };
    let mean = law.mean();
    if mean.abs() > T::mass_tol() {
        return Err(EmbeddingError::NonZeroMean { mean: mean.to_f64().unwrap_or(f64::NAN) });
    }

    // exact renormalized atoms, recentred to exactly zero mean
    let mut probs: Vec<Q> = law.atoms().iter().map(|&(_, p)| to_q(p)).collect();
    let mass: Q = probs.iter().sum();
    for p in &mut probs {
        *p /= &mass;
    }
    let raw_values: Vec<Q> = law.atoms().iter().map(|&(v, _)| to_q(v)).collect();
    let q_mean: Q = raw_values.iter().zip(&probs).map(|(v, p)| v * p).sum();
    let values: Vec<Q> = raw_values.iter().map(|v| v - &q_mean).collect();

    let n = values.len();
    let mut envelope = Envelope::absolute_value();
    let mut steps = Vec::with_capacity(n.saturating_sub(1));
    let atoms: Vec<(Q, Q)> = values.iter().cloned().zip(probs.iter().cloned()).collect();
    let one = Q::from_integer(1.into());
    let two = Q::from_integer(2.into());

    let mut cumulative = Q::zero();
    for k in 0..n.saturating_sub(1) {
        cumulative += &probs[k];
        let slope = &two * &cumulative - &one;
        let anchor_y = q_potential(&atoms, &values[k]);
        if let Some((a, b)) = envelope.raise(&slope, &values[k], &anchor_y) {
            let lower: T = c(q_to_f64(&a));
            let upper: T = c(q_to_f64(&b));
            let interval = Interval::new(lower, upper).map_err(|_| {
                EmbeddingError::Degenerate(format!(
                    "step {k} collapsed to a point near {lower} in the scalar type"
                ))
            })?;
            steps.push(interval);
        }
    }

    Ok(EmbeddingPlan { steps, target: law.clone() })
}

/// Check a plan: the propagated terminal law must match the target, and the
/// step-by-step law sequence must be monotone in convex order.
pub fn verify_plan<T: Scalar>(plan: &EmbeddingPlan<T>) -> PlanReport {
    let q_steps: Vec<(Q, Q)> =
        plan.steps.iter().map(|iv| (to_q(iv.lower()), to_q(iv.upper()))).collect();

    // terminal law against the target
    let propagated = propagate(&q_steps);
    let target: Vec<(f64, f64)> = plan
        .target
        .atoms()
        .iter()
        .map(|&(v, p)| (v.to_f64().expect("finite"), p.to_f64().expect("finite")))
        .collect();
    let got: Vec<(f64, f64)> =
        propagated.iter().map(|(v, p)| (q_to_f64(v), q_to_f64(p))).collect();

    let tol = T::law_tol().to_f64().expect("tolerance");
    // Kolmogorov distance over the union of supports; atoms closer than the
    // gate to the evaluation point count as at-or-below it, so values that
    // only differ by conversion noise pair up.
    let cdf = |law: &[(f64, f64)], p: f64| -> f64 {
        law.iter().filter(|&&(v, _)| v <= p + tol).map(|&(_, q)| q).sum()
    };
    let mut points: Vec<f64> = got.iter().chain(target.iter()).map(|&(v, _)| v).collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut max_prob_gap = 0.0f64;
    for &p in &points {
        max_prob_gap = max_prob_gap.max((cdf(&got, p) - cdf(&target, p)).abs());
    }

    // convex-order monotonicity along the chain, exact in rationals
    let mut chain: Vec<Vec<(Q, Q)>> = Vec::with_capacity(q_steps.len() + 1);
    for k in 0..=q_steps.len() {
        chain.push(propagate(&q_steps[..k]));
    }
    let mut points: Vec<Q> = chain.iter().flatten().map(|(v, _)| v.clone()).collect();
    points.sort();
    points.dedup();
    let mut worst = Q::zero();
    for w in chain.windows(2) {
        for x in &points {
            let violation = q_potential(&w[0], x) - q_potential(&w[1], x);
            if violation > worst {
                worst = violation;
            }
        }
    }
    let potential_gap = q_to_f64(&worst);

    PlanReport { exact_match: max_prob_gap <= tol, max_prob_gap, potential_gap }
}
