//! Stopping-rule algebra and the optimal two-stage construction.
//!
//! Rules are immutable value objects interpreted by the path engine through
//! [`RuleState`]; per-path state never leaks between paths.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StoppingError {
    #[error("interval requires lower < upper, got ({lower}, {upper})")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("first-exit interval must straddle the start point 0")]
    DoesNotStraddleOrigin,
    #[error("two-stage rule requires y < 0 < x and eta > 0")]
    InvalidTwoStage,
    #[error("variance budget exhausted: sigma^2 + x*y = {budget:e} <= 0")]
    InfeasibleY { budget: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("cannot parse stopping rule `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

fn err_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Open interval (lower, upper).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    lower: T,
    upper: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lower: T, upper: T) -> Result<Self, StoppingError> {
        if lower.is_finite() && upper.is_finite() && lower < upper {
            Ok(Self { lower, upper })
        } else {
            Err(StoppingError::InvalidInterval { lower: err_f64(lower), upper: err_f64(upper) })
        }
    }

    pub fn lower(&self) -> T {
        self.lower
    }

    pub fn upper(&self) -> T {
        self.upper
    }

    pub fn contains_strict(&self, v: T) -> bool {
        self.lower < v && v < self.upper
    }
}

/// Composable description of the stopping time tau, all realized as interval
/// exits on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingRule<T> {
    /// First exit from an interval straddling the origin.
    FirstExit(Interval<T>),
    /// First visit to a fixed level. Not L2-bounded: the expected stopping
    /// time is infinite, so in practice this only fires under a cap.
    FirstHit { level: T },
    /// Exit (y, x) first; on reaching x, exit (x - eta, x + eta).
    TwoStage { x: T, y: T, eta: T },
    /// Iterated first exits; steps whose interval does not strictly contain
    /// the current position are skipped ("frozen mass").
    PlanSequence(Vec<Interval<T>>),
    /// Stop the inner rule unconditionally at process time `cap`.
    TimeCap { inner: Box<StoppingRule<T>>, cap: T },
}

impl<T: Scalar> StoppingRule<T> {
    pub fn first_exit(interval: Interval<T>) -> Result<Self, StoppingError> {
        if !interval.contains_strict(T::zero()) {
            return Err(StoppingError::DoesNotStraddleOrigin);
        }
        Ok(Self::FirstExit(interval))
    }

    /// First exit from (-a, b) with a, b > 0.
    pub fn first_exit_ab(a: T, b: T) -> Result<Self, StoppingError> {
        if !(a > T::zero()) {
            return Err(StoppingError::NonPositive { name: "a", value: err_f64(a) });
        }
        if !(b > T::zero()) {
            return Err(StoppingError::NonPositive { name: "b", value: err_f64(b) });
        }
        Ok(Self::FirstExit(Interval::new(-a, b)?))
    }

    pub fn first_hit(level: T) -> Self {
        Self::FirstHit { level }
    }

    pub fn two_stage(x: T, y: T, eta: T) -> Result<Self, StoppingError> {
        if !(y < T::zero() && T::zero() < x && eta > T::zero()) {
            return Err(StoppingError::InvalidTwoStage);
        }
        Ok(Self::TwoStage { x, y, eta })
    }

    pub fn plan(steps: Vec<Interval<T>>) -> Self {
        Self::PlanSequence(steps)
    }

    pub fn with_cap(self, cap: T) -> Result<Self, StoppingError> {
        if !(cap > T::zero()) {
            return Err(StoppingError::NonPositive { name: "cap", value: err_f64(cap) });
        }
        Ok(Self::TimeCap { inner: Box::new(self), cap })
    }
}

/// The interval whose first exit attains the sharp local-time bound at
/// `level`: (x - s, x + s) with s = sqrt(sigma^2 + x^2).
///
/// The near endpoint is computed in the rationalized form sigma^2 / (s + |x|)
/// so the interval strictly straddles the origin for any |x|.
pub fn optimal_interval<T: Scalar>(level: T, sigma: T) -> Result<Interval<T>, StoppingError> {
    if !(sigma > T::zero() && sigma.is_finite()) {
        return Err(StoppingError::NonPositive { name: "sigma", value: err_f64(sigma) });
    }
    let x = level;
    let s = (sigma * sigma + x * x).sqrt();
    let (lower, upper) = if x >= T::zero() {
        (-(sigma * sigma) / (s + x), x + s)
    } else {
        (x - s, sigma * sigma / (s - x))
    };
    Interval::new(lower, upper)
}

/// Expected local time at x of the two-stage rule with first interval (y, x):
/// sqrt(-(sigma^2 + x y) y / (x - y)).
pub fn two_stage_objective<T: Scalar>(y: T, x: T, sigma: T) -> Result<T, StoppingError> {
    if !(y < T::zero() && T::zero() < x) {
        return Err(StoppingError::InvalidTwoStage);
    }
    let budget = sigma * sigma + x * y;
    if !(budget > T::zero()) {
        return Err(StoppingError::InfeasibleY { budget: err_f64(budget) });
    }
    Ok((-(budget * y) / (x - y)).sqrt())
}

/// One step of rule evaluation against the latest grid sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision<T> {
    /// Keep simulating from the raw sample.
    Continue,
    /// Internal stage boundary hit: pin the sample to the level, keep going.
    ContinueAtLevel(T),
    /// The rule fired at a boundary: the final value is the level.
    StopAtLevel(T),
    /// The rule fired on its own clock (time cap): stop at the raw sample.
    StopNow,
}

/// Mutable evaluation state of one rule along one path.
#[derive(Debug, Clone)]
pub struct RuleState<'a, T> {
    kind: StateKind<'a, T>,
}

#[derive(Debug, Clone)]
enum StateKind<'a, T> {
    FirstExit { iv: Interval<T> },
    FirstHit { level: T },
    TwoStage { x: T, y: T, eta: T, second: bool },
    Plan { steps: &'a [Interval<T>], idx: usize },
    Capped { inner: Box<StateKind<'a, T>>, cap: T },
}

impl<'a, T: Scalar> RuleState<'a, T> {
    pub fn new(rule: &'a StoppingRule<T>) -> Self {
        Self { kind: StateKind::from_rule(rule) }
    }

    /// Decision at the start sample (t = 0, value 0). Degenerate rules
    /// (empty plans, first hit of the origin) fire immediately.
    pub fn initial(&mut self) -> Decision<T> {
        self.kind.initial()
    }

    /// Decision after the grid sample `value` at process time `elapsed`.
    pub fn step(&mut self, elapsed: T, value: T) -> Decision<T> {
        self.kind.step(elapsed, value)
    }
}

impl<'a, T: Scalar> StateKind<'a, T> {
    fn from_rule(rule: &'a StoppingRule<T>) -> Self {
        match rule {
            StoppingRule::FirstExit(iv) => Self::FirstExit { iv: *iv },
            StoppingRule::FirstHit { level } => Self::FirstHit { level: *level },
            StoppingRule::TwoStage { x, y, eta } => {
                Self::TwoStage { x: *x, y: *y, eta: *eta, second: false }
            }
            StoppingRule::PlanSequence(steps) => Self::Plan { steps, idx: 0 },
            StoppingRule::TimeCap { inner, cap } => {
                Self::Capped { inner: Box::new(Self::from_rule(inner)), cap: *cap }
            }
        }
    }

    fn initial(&mut self) -> Decision<T> {
        match self {
            Self::FirstExit { .. } | Self::TwoStage { .. } => Decision::Continue,
            Self::FirstHit { level } => {
                if *level == T::zero() {
                    Decision::StopAtLevel(T::zero())
                } else {
                    Decision::Continue
                }
            }
            Self::Plan { steps, idx } => {
                while *idx < steps.len() && !steps[*idx].contains_strict(T::zero()) {
                    *idx += 1;
                }
                if *idx == steps.len() {
                    Decision::StopAtLevel(T::zero())
                } else {
                    Decision::Continue
                }
            }
            Self::Capped { inner, .. } => inner.initial(),
        }
    }

    fn step(&mut self, elapsed: T, value: T) -> Decision<T> {
        match self {
            Self::FirstExit { iv } => exit_decision(*iv, value),
            Self::FirstHit { level } => {
                let l = *level;
                let hit = (l > T::zero() && value >= l) || (l < T::zero() && value <= l);
                if hit {
                    Decision::StopAtLevel(l)
                } else {
                    Decision::Continue
                }
            }
            Self::TwoStage { x, y, eta, second } => {
                if *second {
                    let iv = Interval { lower: *x - *eta, upper: *x + *eta };
                    exit_decision(iv, value)
                } else if value <= *y {
                    // "If at y, full stop."
                    Decision::StopAtLevel(*y)
                } else if value >= *x {
                    *second = true;
                    Decision::ContinueAtLevel(*x)
                } else {
                    Decision::Continue
                }
            }
            Self::Plan { steps, idx } => {
                let iv = steps[*idx];
                let landed = if value <= iv.lower {
                    iv.lower
                } else if value >= iv.upper {
                    iv.upper
                } else {
                    return Decision::Continue;
                };
                *idx += 1;
                while *idx < steps.len() && !steps[*idx].contains_strict(landed) {
                    *idx += 1;
                }
                if *idx == steps.len() {
                    Decision::StopAtLevel(landed)
                } else {
                    Decision::ContinueAtLevel(landed)
                }
            }
            Self::Capped { inner, cap } => match inner.step(elapsed, value) {
                Decision::Continue if elapsed >= *cap => Decision::StopNow,
                other => other,
            },
        }
    }
}

fn exit_decision<T: Scalar>(iv: Interval<T>, value: T) -> Decision<T> {
    if value <= iv.lower {
        Decision::StopAtLevel(iv.lower)
    } else if value >= iv.upper {
        Decision::StopAtLevel(iv.upper)
    } else {
        Decision::Continue
    }
}

// ---------------------------------------------------------------------------
// mini-grammar: firstexit:a=,b= | optimal:x=,sigma= | twostage:x=,y=,eta= |
//               plan:l,u;l,u;...   with optional `,cap=<r>` suffix
// ---------------------------------------------------------------------------

fn rule_parse_err<U>(text: &str, reason: impl Into<String>) -> Result<U, StoppingError> {
    Err(StoppingError::Parse { text: text.into(), reason: reason.into() })
}

fn parse_rule_fields(text: &str, body: &str, names: &[&str]) -> Result<Vec<f64>, StoppingError> {
    let mut out = vec![f64::NAN; names.len()];
    let mut seen = vec![false; names.len()];
    for piece in body.split(',') {
        let Some((key, value)) = piece.split_once('=') else {
            return rule_parse_err(text, format!("expected key=value, got `{piece}`"));
        };
        let Some(i) = names.iter().position(|&n| n == key) else {
            return rule_parse_err(text, format!("unknown field `{key}`"));
        };
        if seen[i] {
            return rule_parse_err(text, format!("duplicate field `{key}`"));
        }
        let Ok(v) = value.parse::<f64>() else {
            return rule_parse_err(text, format!("bad number `{value}` for `{key}`"));
        };
        seen[i] = true;
        out[i] = v;
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return rule_parse_err(text, format!("missing field `{}`", names[i]));
    }
    Ok(out)
}

impl<T: Scalar> FromStr for StoppingRule<T> {
    type Err = StoppingError;

    fn from_str(full: &str) -> Result<Self, StoppingError> {
        // optional trailing `,cap=<r>`
        let (text, cap) = match full.rfind(",cap=") {
            Some(pos) => {
                let cap_str = &full[pos + 5..];
                let Ok(cap) = cap_str.parse::<f64>() else {
                    return rule_parse_err(full, format!("bad cap `{cap_str}`"));
                };
                (&full[..pos], Some(cap))
            }
            None => (full, None),
        };
        let Some((kind, body)) = text.split_once(':') else {
            return rule_parse_err(full, "expected `<kind>:<parameters>`");
        };
        let rule = match kind {
            "firstexit" => {
                let f = parse_rule_fields(full, body, &["a", "b"])?;
                Self::first_exit_ab(c(f[0]), c(f[1]))?
            }
            "optimal" => {
                let f = parse_rule_fields(full, body, &["x", "sigma"])?;
                Self::first_exit(optimal_interval(c(f[0]), c(f[1]))?)?
            }
            "twostage" => {
                let f = parse_rule_fields(full, body, &["x", "y", "eta"])?;
                Self::two_stage(c(f[0]), c(f[1]), c(f[2]))?
            }
            "plan" => {
                let mut steps = Vec::new();
                if !body.is_empty() {
                    for piece in body.split(';') {
                        let Some((l, u)) = piece.split_once(',') else {
                            return rule_parse_err(full, format!("expected lower,upper in `{piece}`"));
                        };
                        let (Ok(l), Ok(u)) = (l.parse::<f64>(), u.parse::<f64>()) else {
                            return rule_parse_err(full, format!("bad interval `{piece}`"));
                        };
                        steps.push(Interval::new(c(l), c(u))?);
                    }
                }
                Self::plan(steps)
            }
            other => return rule_parse_err(full, format!("unknown rule kind `{other}`")),
        };
        match cap {
            Some(cap) => Ok(rule.with_cap(c(cap))?),
            None => Ok(rule),
        }
    }
}

impl<T: Scalar> fmt::Display for StoppingRule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FirstExit(iv) => write!(f, "firstexit:a={},b={}", -iv.lower(), iv.upper()),
            Self::FirstHit { level } => write!(f, "firsthit:level={level}"),
            Self::TwoStage { x, y, eta } => write!(f, "twostage:x={x},y={y},eta={eta}"),
            Self::PlanSequence(steps) => {
                write!(f, "plan:")?;
                for (i, iv) in steps.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{},{}", iv.lower(), iv.upper())?;
                }
                Ok(())
            }
            Self::TimeCap { inner, cap } => write!(f, "{inner},cap={cap}"),
        }
    }
}
