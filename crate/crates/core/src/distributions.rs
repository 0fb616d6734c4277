//! Terminal-distribution algebra for the stopped value X = B(tau).
//!
//! Every law here has mean zero by construction except general finite-support
//! laws, whose mean is whatever the atoms give. The module provides exact
//! moments, the partial expectation E[(X-x)^+], the piecewise-linear potential
//! function x -> E|X - x|, the convex-order (martingale dilation) test, and
//! seeded sampling.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::brownian::RandomStream;
use crate::scalar::{c, std_normal_pdf, std_normal_survival, Scalar};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DistError {
    #[error("finite-support law rejected: {0}")]
    InvalidSupport(String),
    #[error("{op} requires a finite-support law")]
    NonFiniteSupport { op: &'static str },
    #[error("means differ by {gap:e}, beyond the comparison gate")]
    MeanMismatch { gap: f64 },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("cannot parse distribution `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

/// Finite-support law: strictly increasing values carrying strictly positive
/// probabilities. Probabilities are validated to sum to one within
/// [`Scalar::mass_tol`] and then renormalized by their exact sum.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLaw<T> {
    atoms: Vec<(T, T)>,
}

impl<T: Scalar> FiniteLaw<T> {
    pub fn new(atoms: Vec<(T, T)>) -> Result<Self, DistError> {
        if atoms.is_empty() {
            return Err(DistError::InvalidSupport("no atoms".into()));
        }
        let mut mass = T::zero();
        for (i, &(v, p)) in atoms.iter().enumerate() {
            if !v.is_finite() {
                return Err(DistError::InvalidSupport(format!("value #{i} is not finite")));
            }
            if !(p > T::zero()) {
                return Err(DistError::InvalidSupport(format!(
                    "probability #{i} must be strictly positive"
                )));
            }
            if i > 0 && !(atoms[i - 1].0 < v) {
                return Err(DistError::InvalidSupport(
                    "values must be strictly increasing".into(),
                ));
            }
            mass = mass + p;
        }
        if (mass - T::one()).abs() > T::mass_tol() {
            return Err(DistError::InvalidSupport(format!(
                "probabilities sum to {mass}, not 1"
            )));
        }
        let atoms = atoms.into_iter().map(|(v, p)| (v, p / mass)).collect();
        Ok(Self { atoms })
    }

    /// Build from unordered atoms, merging duplicates. Used by the exact
    /// law-propagation machinery, which produces merges naturally.
    pub(crate) fn merging(mut atoms: Vec<(T, T)>) -> Result<Self, DistError> {
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
        let mut merged: Vec<(T, T)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 = last.1 + p,
                _ => merged.push((v, p)),
            }
        }
        merged.retain(|&(_, p)| p > T::zero());
        Self::new(merged)
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> T {
        self.atoms.iter().map(|&(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.atoms.iter().map(|&(v, p)| (v - m) * (v - m) * p).sum()
    }

    /// E|X - x| by direct summation.
    pub fn potential_at(&self, x: T) -> T {
        self.atoms.iter().map(|&(v, p)| (v - x).abs() * p).sum()
    }

    /// Law of -X.
    pub fn mirrored(&self) -> Self {
        let atoms = self.atoms.iter().rev().map(|&(v, p)| (-v, p)).collect();
        Self { atoms }
    }
}

/// Piecewise-linear convex representation of x -> E|X - x| for a
/// finite-support law. Slopes increase strictly from -1 left of the support
/// to +1 right of it.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFn<T> {
    breakpoints: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> PotentialFn<T> {
    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, x: T) -> T {
        let n = self.breakpoints.len();
        if x <= self.breakpoints[0] {
            return self.values[0] + (self.breakpoints[0] - x);
        }
        if x >= self.breakpoints[n - 1] {
            return self.values[n - 1] + (x - self.breakpoints[n - 1]);
        }
        let i = match self.breakpoints.partition_point(|&b| b <= x) {
            0 => unreachable!("x is above the first breakpoint"),
            i => i - 1,
        };
        let (x0, x1) = (self.breakpoints[i], self.breakpoints[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// The n+1 segment slopes, including the asymptotic -1 and +1 edges.
    pub fn slopes(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.breakpoints.len() + 1);
        out.push(-T::one());
        for i in 1..self.breakpoints.len() {
            out.push(
                (self.values[i] - self.values[i - 1])
                    / (self.breakpoints[i] - self.breakpoints[i - 1]),
            );
        }
        out.push(T::one());
        out
    }
}

/// A mean-zero-anchored terminal law for the stopped value.
///
/// `FiniteSupport` is the general workhorse; the named families carry the
/// closed forms used by the reference formulas.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalDistribution<T> {
    /// Arbitrary atoms; mean is whatever the atoms give.
    FiniteSupport(FiniteLaw<T>),
    /// Two atoms at x -+ sqrt(sigma^2 + x^2): the law attaining the sharp
    /// local-time bound at level x. Mean 0, variance sigma^2 by construction.
    TwoPointOptimal { x: T, sigma: T },
    /// Law of the first exit of Brownian motion from (-a, b): atoms at -a and
    /// b with P(b) = a/(a+b). Mean 0, variance a*b.
    FirstExit { a: T, b: T },
    /// Centered normal with standard deviation sigma.
    Normal { sigma: T },
    /// sigma * (Y - 1) for Y standard exponential. Mean 0, variance sigma^2.
    ShiftedExponential { sigma: T },
}

fn require_positive<T: Scalar>(name: &'static str, v: T) -> Result<(), DistError> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(DistError::NonPositive { name, value: v.to_f64().unwrap_or(f64::NAN) })
    }
}

impl<T: Scalar> TerminalDistribution<T> {
    pub fn finite(atoms: Vec<(T, T)>) -> Result<Self, DistError> {
        Ok(Self::FiniteSupport(FiniteLaw::new(atoms)?))
    }

    pub fn two_point_optimal(x: T, sigma: T) -> Result<Self, DistError> {
        require_positive("sigma", sigma)?;
        Ok(Self::TwoPointOptimal { x, sigma })
    }

    pub fn first_exit(a: T, b: T) -> Result<Self, DistError> {
        require_positive("a", a)?;
        require_positive("b", b)?;
        Ok(Self::FirstExit { a, b })
    }

    pub fn normal(sigma: T) -> Result<Self, DistError> {
        require_positive("sigma", sigma)?;
        Ok(Self::Normal { sigma })
    }

    pub fn shifted_exponential(sigma: T) -> Result<Self, DistError> {
        require_positive("sigma", sigma)?;
        Ok(Self::ShiftedExponential { sigma })
    }

    /// Exact mean and variance.
    pub fn moments(&self) -> (T, T) {
        match self {
            Self::FiniteSupport(law) => (law.mean(), law.variance()),
            Self::TwoPointOptimal { sigma, .. } => (T::zero(), *sigma * *sigma),
            Self::FirstExit { a, b } => (T::zero(), *a * *b),
            Self::Normal { sigma } => (T::zero(), *sigma * *sigma),
            Self::ShiftedExponential { sigma } => (T::zero(), *sigma * *sigma),
        }
    }

    pub fn mean(&self) -> T {
        self.moments().0
    }

    pub fn variance(&self) -> T {
        self.moments().1
    }

    /// Materialize the atoms of the finitely-supported variants, named
    /// two-point families included. `None` for the continuous families.
    pub fn as_finite(&self) -> Option<FiniteLaw<T>> {
        match self {
            Self::FiniteSupport(law) => Some(law.clone()),
            Self::TwoPointOptimal { x, sigma } => {
                let (lo, hi, p_hi) = two_point_optimal_atoms(*x, *sigma);
                Some(FiniteLaw { atoms: vec![(lo, T::one() - p_hi), (hi, p_hi)] })
            }
            Self::FirstExit { a, b } => {
                let p_hi = *a / (*a + *b);
                Some(FiniteLaw { atoms: vec![(-*a, T::one() - p_hi), (*b, p_hi)] })
            }
            _ => None,
        }
    }

    /// E[(X - x)^+], exact per variant.
    pub fn expected_positive_part(&self, x: T) -> T {
        match self {
            Self::FiniteSupport(law) => law
                .atoms
                .iter()
                .map(|&(v, p)| if v > x { (v - x) * p } else { T::zero() })
                .sum(),
            Self::TwoPointOptimal { x: x0, sigma } => {
                let (lo, hi, p_hi) = two_point_optimal_atoms(*x0, *sigma);
                (hi - x).max(T::zero()) * p_hi + (lo - x).max(T::zero()) * (T::one() - p_hi)
            }
            Self::FirstExit { a, b } => {
                let p_hi = *a / (*a + *b);
                (*b - x).max(T::zero()) * p_hi + (-*a - x).max(T::zero()) * (T::one() - p_hi)
            }
            Self::Normal { sigma } => {
                let u = x / *sigma;
                *sigma * std_normal_pdf(u) - x * std_normal_survival(u)
            }
            Self::ShiftedExponential { sigma } => {
                if x >= -*sigma {
                    *sigma * (-(T::one() + x / *sigma)).exp()
                } else {
                    -x
                }
            }
        }
    }

    /// E[(X - x)^-] = E[(x - X)^+], computed directly per variant so the far
    /// negative tail does not suffer cancellation.
    pub(crate) fn expected_negative_part(&self, x: T) -> T {
        match self {
            Self::FiniteSupport(law) => law
                .atoms
                .iter()
                .map(|&(v, p)| if v < x { (x - v) * p } else { T::zero() })
                .sum(),
            Self::TwoPointOptimal { x: x0, sigma } => {
                let (lo, hi, p_hi) = two_point_optimal_atoms(*x0, *sigma);
                (x - hi).max(T::zero()) * p_hi + (x - lo).max(T::zero()) * (T::one() - p_hi)
            }
            Self::FirstExit { a, b } => {
                let p_hi = *a / (*a + *b);
                (x - *b).max(T::zero()) * p_hi + (x + *a).max(T::zero()) * (T::one() - p_hi)
            }
            Self::Normal { .. } => {
                // symmetric law
                self.expected_positive_part(-x)
            }
            Self::ShiftedExponential { sigma } => {
                let t = T::one() + x / *sigma;
                if t <= T::zero() {
                    T::zero()
                } else {
                    *sigma * (t - T::one() + (-t).exp())
                }
            }
        }
    }

    /// Exact piecewise-linear potential E|X - x|, breakpoints at the support.
    /// Named families are rejected, continuous or not.
    pub fn potential(&self) -> Result<PotentialFn<T>, DistError> {
        let law = match self {
            Self::FiniteSupport(law) => law,
            _ => return Err(DistError::NonFiniteSupport { op: "potential" }),
        };
        let breakpoints: Vec<T> = law.atoms.iter().map(|&(v, _)| v).collect();
        let values = breakpoints.iter().map(|&b| law.potential_at(b)).collect();
        Ok(PotentialFn { breakpoints, values })
    }

    /// One draw from the law; deterministic given the stream state.
    pub fn sample(&self, rng: &mut RandomStream) -> T {
        match self {
            Self::FiniteSupport(law) => {
                let u: T = rng.uniform();
                let mut acc = T::zero();
                for &(v, p) in &law.atoms {
                    acc = acc + p;
                    if u < acc {
                        return v;
                    }
                }
                law.atoms[law.atoms.len() - 1].0
            }
            Self::TwoPointOptimal { x, sigma } => {
                let (lo, hi, p_hi) = two_point_optimal_atoms(*x, *sigma);
                if rng.uniform::<T>() < p_hi {
                    hi
                } else {
                    lo
                }
            }
            Self::FirstExit { a, b } => {
                let p_hi = *a / (*a + *b);
                if rng.uniform::<T>() < p_hi {
                    *b
                } else {
                    -*a
                }
            }
            Self::Normal { sigma } => *sigma * rng.standard_normal::<T>(),
            Self::ShiftedExponential { sigma } => {
                *sigma * (rng.standard_exponential::<T>() - T::one())
            }
        }
    }
}

/// Support and upper-atom probability of the two-point optimal law:
/// atoms x -+ s with s = sqrt(sigma^2 + x^2), P(x + s) = (s - x) / (2 s).
///
/// The lower atom is computed in the rationalized form -sigma^2 / (s + x)
/// when x > 0 (mirrored otherwise), which keeps the product of the atoms at
/// exactly -sigma^2 instead of losing the cancellation for |x| >> sigma.
fn two_point_optimal_atoms<T: Scalar>(x: T, sigma: T) -> (T, T, T) {
    let s = (sigma * sigma + x * x).sqrt();
    let (lo, hi) = if x >= T::zero() {
        (-(sigma * sigma) / (s + x), x + s)
    } else {
        (x - s, sigma * sigma / (s - x))
    };
    let p_hi = (s - x) / (c::<T>(2.0) * s);
    (lo, hi, p_hi)
}

/// Martingale-dilation (convex order) test: does `g` dilate `f`?
///
/// True iff E|Y - x| >= E|X - x| pointwise for Y ~ g, X ~ f. Both laws must
/// be finite-support with equal means; the pointwise comparison is then exact
/// at the union of the two supports.
pub fn is_dilation<T: Scalar>(
    f: &TerminalDistribution<T>,
    g: &TerminalDistribution<T>,
) -> Result<bool, DistError> {
    let (fl, gl) = match (f, g) {
        (TerminalDistribution::FiniteSupport(fl), TerminalDistribution::FiniteSupport(gl)) => {
            (fl, gl)
        }
        _ => return Err(DistError::NonFiniteSupport { op: "is_dilation" }),
    };
    let gap = (fl.mean() - gl.mean()).abs();
    if gap > T::mass_tol() {
        return Err(DistError::MeanMismatch { gap: gap.to_f64().unwrap_or(f64::NAN) });
    }
    let mut points: Vec<T> = fl
        .atoms
        .iter()
        .chain(gl.atoms.iter())
        .map(|&(v, _)| v)
        .collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(points.iter().all(|&x| gl.potential_at(x) >= fl.potential_at(x)))
}

/// Random mean-zero finite-support law on a dyadic lattice.
///
/// Values are multiples of 1/32 shifted by the (dyadic) mean, probabilities
/// are multiples of 1/4096, so the law is exact in both `f32` and `f64` and
/// its mean is exactly zero. At most `max_atoms` atoms; variance at most ~3.5.
pub fn random_mean_zero_law<T: Scalar>(rng: &mut RandomStream, max_atoms: usize) -> FiniteLaw<T> {
    assert!(max_atoms >= 1);
    let n = 1 + rng.below(max_atoms as u64) as usize;
    if n == 1 {
        return FiniteLaw::new(vec![(T::zero(), T::one())]).expect("point mass");
    }
    // distinct lattice values in [-60/32, 60/32]
    let mut ks: Vec<i64> = Vec::with_capacity(n);
    while ks.len() < n {
        let k = rng.below(121) as i64 - 60;
        if !ks.contains(&k) {
            ks.push(k);
        }
    }
    ks.sort_unstable();
    // composition of 4096 into n positive parts
    let mut cuts: Vec<u64> = Vec::with_capacity(n - 1);
    while cuts.len() < n - 1 {
        let cut = 1 + rng.below(4095);
        if !cuts.contains(&cut) {
            cuts.push(cut);
        }
    }
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(n);
    let mut prev = 0;
    for &cut in &cuts {
        parts.push(cut - prev);
        prev = cut;
    }
    parts.push(4096 - prev);

    let values: Vec<f64> = ks.iter().map(|&k| k as f64 / 32.0).collect();
    let probs: Vec<f64> = parts.iter().map(|&w| w as f64 / 4096.0).collect();
    let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
    let atoms = values
        .iter()
        .zip(&probs)
        .map(|(&v, &p)| (c::<T>(v - mean), c::<T>(p)))
        .collect();
    FiniteLaw::new(atoms).expect("lattice law is valid")
}

// ---------------------------------------------------------------------------
// mini-grammar: finite:v=p,... | twopoint-opt:x=,sigma= | firstexit:a=,b= |
//               normal:sigma= | exp:sigma=
// ---------------------------------------------------------------------------

fn parse_err<T>(text: &str, reason: impl Into<String>) -> Result<T, DistError> {
    Err(DistError::Parse { text: text.into(), reason: reason.into() })
}

fn parse_fields(text: &str, body: &str, names: &[&str]) -> Result<Vec<f64>, DistError> {
    let mut out = vec![f64::NAN; names.len()];
    let mut seen = vec![false; names.len()];
    for piece in body.split(',') {
        let Some((key, value)) = piece.split_once('=') else {
            return parse_err(text, format!("expected key=value, got `{piece}`"));
        };
        let Some(idx) = names.iter().position(|&n| n == key) else {
            return parse_err(text, format!("unknown field `{key}`"));
        };
        if seen[idx] {
            return parse_err(text, format!("duplicate field `{key}`"));
        }
        let Ok(v) = value.parse::<f64>() else {
            return parse_err(text, format!("bad number `{value}` for `{key}`"));
        };
        seen[idx] = true;
        out[idx] = v;
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return parse_err(text, format!("missing field `{}`", names[i]));
    }
    Ok(out)
}

impl<T: Scalar> FromStr for TerminalDistribution<T> {
    type Err = DistError;

    fn from_str(text: &str) -> Result<Self, DistError> {
        let Some((kind, body)) = text.split_once(':') else {
            return parse_err(text, "expected `<kind>:<parameters>`");
        };
        match kind {
            "finite" => {
                let mut atoms = Vec::new();
                for piece in body.split(',') {
                    let Some((v, p)) = piece.split_once('=') else {
                        return parse_err(text, format!("expected value=prob, got `{piece}`"));
                    };
                    let (Ok(v), Ok(p)) = (v.parse::<f64>(), p.parse::<f64>()) else {
                        return parse_err(text, format!("bad atom `{piece}`"));
                    };
                    atoms.push((c::<T>(v), c::<T>(p)));
                }
                atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
                Self::finite(atoms)
            }
            "twopoint-opt" => {
                let f = parse_fields(text, body, &["x", "sigma"])?;
                Self::two_point_optimal(c(f[0]), c(f[1]))
            }
            "firstexit" => {
                let f = parse_fields(text, body, &["a", "b"])?;
                Self::first_exit(c(f[0]), c(f[1]))
            }
            "normal" => {
                let f = parse_fields(text, body, &["sigma"])?;
                Self::normal(c(f[0]))
            }
            "exp" => {
                let f = parse_fields(text, body, &["sigma"])?;
                Self::shifted_exponential(c(f[0]))
            }
            other => parse_err(text, format!("unknown distribution kind `{other}`")),
        }
    }
}

impl<T: Scalar> fmt::Display for TerminalDistribution<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FiniteSupport(law) => {
                write!(f, "finite:")?;
                for (i, (v, p)) in law.atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}={p}")?;
                }
                Ok(())
            }
            Self::TwoPointOptimal { x, sigma } => write!(f, "twopoint-opt:x={x},sigma={sigma}"),
            Self::FirstExit { a, b } => write!(f, "firstexit:a={a},b={b}"),
            Self::Normal { sigma } => write!(f, "normal:sigma={sigma}"),
            Self::ShiftedExponential { sigma } => write!(f, "exp:sigma={sigma}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D = TerminalDistribution<f64>;

    fn three_point() -> D {
        D::finite(vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]).unwrap()
    }

    #[test]
    fn moments_examples() {
        assert_eq!(D::two_point_optimal(1.0, 1.0).unwrap().moments(), (0.0, 1.0));
        assert_eq!(D::first_exit(1.0, 4.0).unwrap().moments(), (0.0, 4.0));
        let (m, v) = three_point().moments();
        assert_eq!(m, 0.0);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn finite_law_validation() {
        assert!(matches!(
            D::finite(vec![(0.0, 0.5), (0.0, 0.5)]),
            Err(DistError::InvalidSupport(_))
        ));
        assert!(matches!(
            D::finite(vec![(0.0, 0.5), (1.0, 0.4)]),
            Err(DistError::InvalidSupport(_))
        ));
        assert!(matches!(
            D::finite(vec![(0.0, -0.5), (1.0, 1.5)]),
            Err(DistError::InvalidSupport(_))
        ));
        // within gate: renormalized exactly
        let law = D::finite(vec![(0.0, 0.5 + 4e-13), (1.0, 0.5)]).unwrap();
        if let D::FiniteSupport(l) = law {
            let mass: f64 = l.atoms().iter().map(|&(_, p)| p).sum();
            assert!((mass - 1.0).abs() < 1e-15);
        } else {
            unreachable!();
        }
        assert!(matches!(D::normal(0.0), Err(DistError::NonPositive { .. })));
    }

    #[test]
    fn expected_positive_part_examples() {
        // dichotomous illustration: (s - x)/2 at the level itself
        let d = D::two_point_optimal(0.75, 1.0).unwrap();
        assert_eq!(d.expected_positive_part(0.75), 0.25);

        // saturation: E[(X-x)^+] -> mean - x as x -> -inf
        for d in [
            three_point(),
            D::first_exit(1.0, 4.0).unwrap(),
            D::normal(2.0).unwrap(),
            D::shifted_exponential(1.0).unwrap(),
            D::two_point_optimal(-0.3, 0.7).unwrap(),
        ] {
            let x = -1e8;
            let gap = d.expected_positive_part(x) - (d.mean() - x);
            assert!(gap.abs() < 1e-6, "saturation gap {gap:e}");
        }

        // standard normal at 0: 1/sqrt(2 pi)
        let n = D::normal(1.0).unwrap();
        assert!((n.expected_positive_part(0.0) - 0.3989422804014327).abs() < 1e-15);
    }

    #[test]
    fn two_point_atoms_product_is_minus_variance() {
        for &(x, sigma) in &[(0.75, 1.0), (0.0, 2.0), (-0.75, 1.0), (100.0, 1.0), (3.5, 0.25)] {
            let (lo, hi, p_hi) = two_point_optimal_atoms::<f64>(x, sigma);
            assert!(lo < 0.0 && hi > 0.0);
            let rel = (lo * hi + sigma * sigma).abs() / (sigma * sigma);
            assert!(rel < 1e-15, "product off by {rel:e} at ({x},{sigma})");
            // mean zero within rounding
            let mean = lo * (1.0 - p_hi) + hi * p_hi;
            assert!(mean.abs() < 1e-15 * (hi - lo));
        }
        // exact on arithmetically nice inputs
        let (lo, hi, _) = two_point_optimal_atoms::<f64>(0.75, 1.0);
        assert_eq!((lo, hi), (-0.5, 2.0));
    }

    #[test]
    fn potential_examples() {
        // point mass at zero -> |x|
        let delta = D::finite(vec![(0.0, 1.0)]).unwrap();
        let pot = delta.potential().unwrap();
        assert_eq!(pot.value(0.0), 0.0);
        assert_eq!(pot.value(-3.0), 3.0);
        assert_eq!(pot.value(2.5), 2.5);

        // symmetric two-point law
        let two = D::finite(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let pot = two.potential().unwrap();
        assert_eq!(pot.breakpoints(), &[-1.0, 1.0]);
        assert_eq!(pot.values(), &[1.0, 1.0]);
        assert_eq!(pot.slopes(), vec![-1.0, 0.0, 1.0]);

        // hand-summed three-point potential
        let pot = three_point().potential().unwrap();
        assert_eq!(pot.value(0.0), 0.5);
        assert_eq!(pot.slopes(), vec![-1.0, -0.5, 0.5, 1.0]);

        // named families rejected
        assert!(matches!(
            D::normal(1.0).unwrap().potential(),
            Err(DistError::NonFiniteSupport { .. })
        ));
        assert!(matches!(
            D::two_point_optimal(0.5, 1.0).unwrap().potential(),
            Err(DistError::NonFiniteSupport { .. })
        ));
    }

    #[test]
    fn dilation_examples() {
        let delta = D::finite(vec![(0.0, 1.0)]).unwrap();
        let wide = D::finite(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let narrow = D::finite(vec![(-0.5, 0.5), (0.5, 0.5)]).unwrap();
        assert!(is_dilation(&delta, &wide).unwrap());
        assert!(is_dilation(&delta, &three_point()).unwrap());
        assert!(!is_dilation(&wide, &narrow).unwrap());
        assert!(is_dilation(&three_point(), &wide).unwrap());

        // reflexivity
        for d in [&delta, &wide, &narrow] {
            assert!(is_dilation(d, d).unwrap());
        }

        let shifted = D::finite(vec![(-0.5, 0.5), (1.5, 0.5)]).unwrap();
        assert!(matches!(
            is_dilation(&wide, &shifted),
            Err(DistError::MeanMismatch { .. })
        ));
        assert!(matches!(
            is_dilation(&wide, &D::normal(1.0).unwrap()),
            Err(DistError::NonFiniteSupport { .. })
        ));
    }

    #[test]
    fn sampling_point_mass_and_determinism() {
        let delta = D::finite(vec![(0.0, 1.0)]).unwrap();
        let mut rng = RandomStream::new(7, 0);
        for _ in 0..100 {
            assert_eq!(delta.sample(&mut rng), 0.0);
        }
        let d = D::normal(2.0).unwrap();
        let mut r1 = RandomStream::new(42, 3);
        let mut r2 = RandomStream::new(42, 3);
        for _ in 0..32 {
            assert_eq!(d.sample(&mut r1), d.sample(&mut r2));
        }
    }

    #[test]
    fn random_law_generator_is_exactly_centered() {
        let mut rng = RandomStream::new(99, 0);
        for _ in 0..200 {
            let law: FiniteLaw<f64> = random_mean_zero_law(&mut rng, 8);
            assert!(law.len() <= 8);
            assert_eq!(law.mean(), 0.0, "dyadic construction must be exact");
            assert!(law.variance() <= 4.0);
            let mass: f64 = law.atoms().iter().map(|&(_, p)| p).sum();
            assert_eq!(mass, 1.0);
        }
    }

    #[test]
    fn grammar_round_trip() {
        for text in [
            "finite:-1=0.25,0=0.5,1=0.25",
            "twopoint-opt:x=0.75,sigma=1",
            "firstexit:a=1,b=4",
            "normal:sigma=1",
            "exp:sigma=0.5",
        ] {
            let d: D = text.parse().unwrap();
            let shown = d.to_string();
            let again: D = shown.parse().unwrap();
            assert_eq!(d, again, "{text} -> {shown}");
        }
        assert!(matches!("bogus:x=1".parse::<D>(), Err(DistError::Parse { .. })));
        assert!(matches!("normal:sigma=zero".parse::<D>(), Err(DistError::Parse { .. })));
        assert!(matches!("normal:sigma=-1".parse::<D>(), Err(DistError::NonPositive { .. })));
        assert!(matches!("firstexit:a=1".parse::<D>(), Err(DistError::Parse { .. })));
    }
}
