//! Acceptance suite: one check per shipping criterion, each validating a
//! closed form or estimator against its independent oracle at a pinned
//! tolerance. `run_all` is what `localtime verify` executes; the integration
//! test target runs the same checks one by one.

use crate::bounds::sharp_bound;
use crate::brownian::RandomStream;
use crate::distributions::{random_mean_zero_law, FiniteLaw, TerminalDistribution};
use crate::embedding::{chacon_walsh_plan, verify_plan};
use crate::harness::{parse_spec, run_experiment};
use crate::localtime::{
    estimate_ensemble, exact_expected_local_time, McConfig, Method,
};
use crate::stats::chi_square_gof;
use crate::stopping::{optimal_interval, two_stage_objective, StoppingRule};
use crate::{Law, Real, Rule};

/// Suite configuration. `quick` shrinks the Monte Carlo path counts so the
/// whole suite runs in seconds; statistical tolerances widen with the larger
/// standard errors, so quick runs stay sound.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptanceConfig {
    pub quick: bool,
    pub seed: u64,
}

impl AcceptanceConfig {
    fn paths(&self, full: u64) -> u64 {
        if self.quick {
            (full / 10).max(2_000)
        } else {
            full
        }
    }
}

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    /// The one-line pass/fail report.
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] criterion {}: {} — {}", self.id, self.name, self.detail)
    }
}

/// A small check ledger: collects named sub-checks and renders the summary.
struct Checks {
    entries: Vec<(String, bool)>,
}

impl Checks {
    fn new() -> Self {
        Self { entries: Vec::new() }
    }

    fn push(&mut self, label: impl Into<String>, ok: bool) {
        self.entries.push((label.into(), ok));
    }

    fn passed(&self) -> bool {
        self.entries.iter().all(|(_, ok)| *ok)
    }

    fn detail(&self) -> String {
        let failed = self.entries.iter().filter(|(_, ok)| !ok).count();
        let labels: Vec<String> = self
            .entries
            .iter()
            .map(|(label, ok)| if *ok { label.clone() } else { format!("FAILED {label}") })
            .collect();
        if failed == 0 {
            labels.join("; ")
        } else {
            format!("{failed} of {} checks failed: {}", self.entries.len(), labels.join("; "))
        }
    }

    fn result(self, id: u8, name: &'static str) -> CriterionResult {
        CriterionResult { id, name, passed: self.passed(), detail: self.detail() }
    }
}

/// Run every criterion in order.
pub fn run_all(cfg: &AcceptanceConfig) -> Vec<CriterionResult> {
    vec![
        criterion_1_exact_formulas(cfg),
        criterion_2_attainment(cfg),
        criterion_3_sharpness(cfg),
        criterion_4_two_stage_optimality(cfg),
        criterion_5_stopping_time_identity(cfg),
        criterion_6_estimator_cross_validation(cfg),
        criterion_7_embedding_round_trip(cfg),
        criterion_8_unimodality_and_asymptote(cfg),
        criterion_9_determinism(cfg),
    ]
}

const EXACT_GATE: Real = 1e-12;

/// 1. The exact evaluator agrees with every closed form within 1e-12.
pub fn criterion_1_exact_formulas(_cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();
    let mut worst: Real = 0.0;

    // first-exit law on a 100-point (a, b, x) grid
    for i in 0..5 {
        let a = 0.3 + 0.35 * i as Real;
        for j in 0..5 {
            let b = 0.5 + 0.45 * j as Real;
            let law = Law::first_exit(a, b).unwrap();
            for k in 0..4 {
                let x = -a + (k as Real + 0.5) * (a + b) / 4.0;
                let exact = exact_expected_local_time(&law, x).unwrap();
                let closed = crate::bounds::closed_form_first_exit(a, b, x).unwrap();
                worst = worst.max((exact - closed).abs());
            }
        }
    }
    checks.push(format!("first-exit grid max gap {worst:.2e}"), worst <= EXACT_GATE);

    // harmonic mean at the origin
    let law = Law::first_exit(1.0, 4.0).unwrap();
    let gap = (exact_expected_local_time(&law, 0.0).unwrap() - 1.6).abs();
    checks.push(format!("harmonic mean gap {gap:.2e}"), gap <= EXACT_GATE);
    let law = Law::first_exit(1.0, 1.0).unwrap();
    let gap = (exact_expected_local_time(&law, 0.0).unwrap() - 1.0).abs();
    checks.push(format!("unit harmonic mean gap {gap:.2e}"), gap <= EXACT_GATE);

    // normal at the origin: sigma sqrt(2/pi)
    let mut worst: Real = 0.0;
    for &sigma in &[0.5, 1.0, 2.0] {
        let law = Law::normal(sigma).unwrap();
        let exact = exact_expected_local_time(&law, 0.0).unwrap();
        worst = worst.max((exact - sigma * (2.0 / std::f64::consts::PI).sqrt()).abs());
    }
    checks.push(format!("normal origin max gap {worst:.2e}"), worst <= EXACT_GATE);

    // shifted exponential at the origin: sigma 2/e
    let mut worst: Real = 0.0;
    for &sigma in &[0.5, 1.0, 2.0] {
        let law = Law::shifted_exponential(sigma).unwrap();
        let exact = exact_expected_local_time(&law, 0.0).unwrap();
        worst = worst.max((exact - sigma * 2.0 / std::f64::consts::E).abs());
    }
    checks.push(format!("exponential origin max gap {worst:.2e}"), worst <= EXACT_GATE);

    // dichotomous law on a 50-point (x, sigma) grid
    let mut worst: Real = 0.0;
    for i in 0..10 {
        let x = -2.0 + 0.5 * i as Real;
        for j in 0..5 {
            let sigma = 0.4 + 0.4 * j as Real;
            let law = Law::two_point_optimal(x, sigma).unwrap();
            let exact = exact_expected_local_time(&law, x).unwrap();
            let closed = (sigma * sigma + x * x).sqrt() - x.abs();
            worst = worst.max((exact - closed).abs());
        }
    }
    checks.push(format!("dichotomous grid max gap {worst:.2e}"), worst <= EXACT_GATE);

    checks.result(1, "exact-formula suite")
}

fn mc_line(label: &str, value: Real, se: Real, target: Real, tol: Real) -> (String, bool) {
    let gap = (value - target).abs();
    let ok = gap < tol;
    (
        format!("{label}: {value:.4}±{se:.4} vs {target} (|Δ|={gap:.4}, tol {tol:.4})"),
        ok,
    )
}

/// 2. The optimal rule attains its bound under the occupation estimator.
pub fn criterion_2_attainment(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();
    let n_paths = cfg.paths(50_000);
    for &(x, sigma) in &[(0.75, 1.0), (0.0, 1.0)] {
        let rule = StoppingRule::first_exit(optimal_interval(x, sigma).unwrap()).unwrap();
        let mc = McConfig {
            n_paths,
            dt: 1e-4,
            epsilon: 0.02,
            seed: cfg.seed,
            cap: 64.0 * sigma * sigma,
        };
        let ensemble = estimate_ensemble(&rule, &[x], &[Method::Occupation], &mc).unwrap();
        let stats = ensemble.stats(0, Method::Occupation);
        let bound = sharp_bound(x, sigma).unwrap();
        let tol = 3.0 * stats.std_error() + 0.03;
        let (label, ok) =
            mc_line(&format!("occupation@x={x}"), stats.mean(), stats.std_error(), bound, tol);
        checks.push(label, ok);
    }
    checks.result(2, "attainment of the sharp bound")
}

/// 3. Dominance over randomized laws, with equality only for the two-point
///    optimal law.
pub fn criterion_3_sharpness(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();
    let mut rng = RandomStream::new(cfg.seed, 3_000_001);
    let mut worst_violation: Real = 0.0;
    let mut min_regular_gap = Real::INFINITY;
    let mut near_optimal_points = 0u64;
    let mut bad_equality = None;

    let n_laws = 500;
    let mut produced = 0;
    while produced < n_laws {
        let law: FiniteLaw<Real> = random_mean_zero_law(&mut rng, 8);
        let variance = law.variance();
        if variance < 1e-3 {
            continue; // the bound comparison needs a usable sigma scale
        }
        produced += 1;
        let sigma = variance.sqrt();
        let two_point = (law.len() == 2).then(|| {
            let atoms = law.atoms();
            (atoms[0].0 + atoms[1].0) / 2.0
        });
        let dist = TerminalDistribution::FiniteSupport(law);
        for k in 0..20 {
            let x = -2.375 + 0.25 * k as Real;
            let exact = exact_expected_local_time(&dist, x).unwrap();
            let bound = sharp_bound(x, sigma).unwrap();
            worst_violation = worst_violation.max(exact - bound);
            let gap = bound - exact;
            // equality is reserved for the two-point optimal law: near its
            // midpoint the bound curve touches the law's linear segment and
            // the gap is quadratically small
            let exempt = match two_point {
                Some(mid) => {
                    let s = (sigma * sigma + mid * mid).sqrt();
                    let predicted = 0.5 * sigma * sigma / s.powi(3) * (x - mid).powi(2);
                    predicted < 1e-8
                }
                None => false,
            };
            if exempt {
                near_optimal_points += 1;
            } else if gap <= 1e-9 {
                bad_equality = Some(format!(
                    "law #{produced} at x={x}: gap {gap:.3e} without being two-point optimal"
                ));
            } else {
                min_regular_gap = min_regular_gap.min(gap);
            }
        }
    }
    checks.push(
        format!("dominance over {n_laws} laws, worst violation {worst_violation:.2e}"),
        worst_violation <= EXACT_GATE,
    );
    checks.push(
        match &bad_equality {
            Some(msg) => format!("strict gap failed: {msg}"),
            None => format!(
                "strict gap elsewhere: min {min_regular_gap:.2e} ({near_optimal_points} near-optimal points exempt)"
            ),
        },
        bad_equality.is_none(),
    );

    // and the two-point optimal law does attain the bound
    let mut worst: Real = 0.0;
    for &(x, sigma) in &[(0.5, 1.0), (1.3, 0.7), (0.0, 2.0)] {
        let law = Law::two_point_optimal(x, sigma).unwrap();
        let exact = exact_expected_local_time(&law, x).unwrap();
        worst = worst.max((exact - sharp_bound(x, sigma).unwrap()).abs());
    }
    checks.push(format!("attainment equality gap {worst:.2e}"), worst <= EXACT_GATE);

    checks.result(3, "sharpness and dominance")
}

/// 4. Brute-force grid search confirms the optimal first-stage lower level.
pub fn criterion_4_two_stage_optimality(_cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();
    let pairs = [
        (0.25, 0.5),
        (0.25, 1.0),
        (0.5, 0.5),
        (0.5, 1.0),
        (0.75, 1.0),
        (1.0, 0.5),
        (1.0, 1.0),
        (1.5, 1.0),
        (2.0, 0.5),
        (3.0, 2.0),
    ];
    let grid = 1_000_000u64;
    let mut worst_arg: Real = 0.0;
    let mut worst_val: Real = 0.0;
    for &(x, sigma) in &pairs {
        let lo = -(sigma * sigma) / x;
        let step = -lo / grid as Real;
        let mut best = (Real::NEG_INFINITY, 0.0);
        for i in 0..grid {
            let y = lo + (i as Real + 0.5) * step;
            if let Ok(v) = two_stage_objective(y, x, sigma) {
                if v > best.0 {
                    best = (v, y);
                }
            }
        }
        let s = (sigma * sigma + x * x).sqrt();
        worst_arg = worst_arg.max((best.1 - (x - s)).abs());
        worst_val = worst_val.max((best.0 - (s - x)).abs());
    }
    checks.push(
        format!("argmax within {worst_arg:.2e} of x - sqrt(sigma^2+x^2)"),
        worst_arg <= 1e-4,
    );
    checks.push(format!("maximum within {worst_val:.2e} of the bound"), worst_val <= 1e-9);
    checks.result(4, "two-stage objective optimality")
}

/// 5. E of tau equals a*b for the first exit from (-1, 2).
pub fn criterion_5_stopping_time_identity(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();
    let dt = 1e-4;
    let rule: Rule = StoppingRule::first_exit_ab(1.0, 2.0).unwrap();
    let mc = McConfig {
        n_paths: cfg.paths(50_000),
        dt,
        epsilon: 0.02,
        seed: cfg.seed,
        cap: 128.0,
    };
    let ensemble = estimate_ensemble(&rule, &[], &[], &mc).unwrap();
    let tol = 3.0 * ensemble.tau.std_error() + 2.0 * dt;
    let (label, ok) = mc_line(
        "mean stopping time",
        ensemble.tau.mean(),
        ensemble.tau.std_error(),
        2.0,
        tol,
    );
    checks.push(label, ok);
    checks.push(
        format!("capped fraction {}", ensemble.capped_fraction()),
        ensemble.n_capped == 0,
    );
    checks.result(5, "stopping-time identity E[tau] = sigma^2")
}

/// 6. Occupation and upcrossing estimators against the exact values and each
///    other at the pinned grid resolution.
pub fn criterion_6_estimator_cross_validation(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();
    let rule: Rule = StoppingRule::first_exit_ab(1.0, 1.0).unwrap();
    let mc = McConfig {
        n_paths: cfg.paths(50_000),
        dt: 1e-4,
        epsilon: 0.02,
        seed: cfg.seed,
        cap: 64.0,
    };
    let xs = [0.0, 0.5];
    let exact = [1.0, 0.5];
    let ensemble =
        estimate_ensemble(&rule, &xs, &[Method::Occupation, Method::Upcrossing], &mc).unwrap();
    for (i, (&x, &target)) in xs.iter().zip(&exact).enumerate() {
        let occ = ensemble.stats(i, Method::Occupation);
        let up = ensemble.stats(i, Method::Upcrossing);
        let (label, ok) = mc_line(
            &format!("occupation@{x}"),
            occ.mean(),
            occ.std_error(),
            target,
            3.0 * occ.std_error() + 0.03,
        );
        checks.push(label, ok);
        let (label, ok) = mc_line(
            &format!("upcrossing@{x}"),
            up.mean(),
            up.std_error(),
            target,
            3.0 * up.std_error() + 0.05,
        );
        checks.push(label, ok);
        let combined = (occ.std_error().powi(2) + up.std_error().powi(2)).sqrt();
        let gap = (occ.mean() - up.mean()).abs();
        let tol = 3.0 * combined + 0.05;
        checks.push(
            format!("mutual@{x}: |occ-up|={gap:.4} (tol {tol:.4})"),
            gap <= tol,
        );
    }
    checks.result(6, "estimator cross-validation")
}

/// 7. Chacon-Walsh round trips, and path simulation of a plan reproduces both
///    the target law and its exact expected local time.
pub fn criterion_7_embedding_round_trip(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();

    // 200 randomized round trips, exact within 1e-10
    let mut rng = RandomStream::new(cfg.seed, 7_000_001);
    let mut worst_gap: Real = 0.0;
    let mut worst_len_ok = true;
    for _ in 0..200 {
        let law: FiniteLaw<Real> = random_mean_zero_law(&mut rng, 8);
        let n = law.len();
        let dist = TerminalDistribution::FiniteSupport(law);
        let plan = chacon_walsh_plan(&dist).unwrap();
        worst_len_ok &= plan.steps().len() <= n.saturating_sub(1);
        let report = verify_plan(&plan);
        worst_gap = worst_gap.max(report.max_prob_gap);
        if report.potential_gap > 0.0 {
            checks.push(format!("dilation chain violated by {:e}", report.potential_gap), false);
        }
    }
    checks.push(format!("round-trip worst gap {worst_gap:.2e}"), worst_gap <= 1e-10);
    checks.push("plan length at most n-1".to_string(), worst_len_ok);

    // the worked three-point example
    let target = Law::finite(vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]).unwrap();
    let plan = chacon_walsh_plan(&target).unwrap();
    let steps = plan.steps();
    let plan_ok = steps.len() == 2
        && (steps[0].lower() + 1.0).abs() <= 1e-12
        && (steps[0].upper() - 1.0 / 3.0).abs() <= 1e-12
        && steps[1].lower().abs() <= 1e-12
        && (steps[1].upper() - 1.0).abs() <= 1e-12;
    checks.push("three-point plan is ((-1, 1/3), (0, 1))".to_string(), plan_ok);

    // simulate the plan: chi-square on the terminal law, occupation at 0
    let mc = McConfig {
        n_paths: cfg.paths(50_000),
        dt: 1e-4,
        epsilon: 0.02,
        seed: cfg.seed,
        cap: 32.0,
    };
    let rule = plan.as_rule();
    let ensemble = estimate_ensemble(&rule, &[0.0], &[Method::Occupation], &mc).unwrap();

    let expected = [(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)];
    let mut counts = [0u64; 3];
    let mut unmatched = 0u64;
    for &(v, n) in &ensemble.terminal_counts {
        match expected.iter().position(|&(t, _)| (v - t).abs() < 1e-9) {
            Some(i) => counts[i] += n,
            None => unmatched += n,
        }
    }
    checks.push(format!("terminal support clamped ({unmatched} off-atom)"), unmatched == 0);
    let probs: Vec<Real> = expected.iter().map(|&(_, p)| p).collect();
    let gof = chi_square_gof(&counts, &probs);
    checks.push(
        format!("terminal-law chi-square p = {:.4} (stat {:.2})", gof.p_value, gof.statistic),
        gof.p_value > 1e-3,
    );

    let exact = exact_expected_local_time(&Law::FiniteSupport(plan.target().clone()), 0.0).unwrap();
    let stats = ensemble.stats(0, Method::Occupation);
    let (label, ok) = mc_line(
        "plan local time@0",
        stats.mean(),
        stats.std_error(),
        exact,
        3.0 * stats.std_error() + 0.03,
    );
    checks.push(label, ok);

    checks.result(7, "embedding round trip")
}

/// 8. Unimodality of the exact profile and the bound's shape and asymptote.
pub fn criterion_8_unimodality_and_asymptote(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();

    let mut laws: Vec<Law> = vec![
        Law::first_exit(1.0, 1.0).unwrap(),
        Law::first_exit(1.0, 4.0).unwrap(),
        Law::normal(1.0).unwrap(),
        Law::shifted_exponential(1.0).unwrap(),
        Law::two_point_optimal(0.75, 1.0).unwrap(),
    ];
    let mut rng = RandomStream::new(cfg.seed, 8_000_001);
    for _ in 0..50 {
        laws.push(Law::FiniteSupport(random_mean_zero_law(&mut rng, 8)));
    }

    let mut monotone_ok = true;
    for law in &laws {
        let profile = |x: Real| match law {
            // stay inside each law's domain of definition
            Law::FirstExit { a, b } => {
                if x < -*a || x > *b {
                    0.0
                } else {
                    exact_expected_local_time(law, x).unwrap()
                }
            }
            _ => exact_expected_local_time(law, x).unwrap(),
        };
        let mut prev = profile(0.0);
        for k in 1..=60 {
            let x = 0.05 * k as Real;
            let v = profile(x);
            monotone_ok &= v <= prev + EXACT_GATE;
            prev = v;
        }
        let mut prev = profile(0.0);
        for k in 1..=60 {
            let x = -0.05 * k as Real;
            let v = profile(x);
            monotone_ok &= v <= prev + EXACT_GATE;
            prev = v;
        }
    }
    checks.push(
        format!("profiles unimodal over {} laws (maximum at 0)", laws.len()),
        monotone_ok,
    );

    let mut strict = true;
    let mut prev = sharp_bound(0.0, 1.0).unwrap();
    for k in 1..=100 {
        let x = 0.1 * k as Real;
        let v = sharp_bound(x, 1.0).unwrap();
        strict &= v < prev;
        prev = v;
    }
    checks.push("sharp bound strictly decreasing in |x|".to_string(), strict);

    let tail: Real = 1e4 * sharp_bound(1e4, 1.0).unwrap();
    checks.push(
        format!("x·bound at x=1e4 is {tail:.9} (vs 1/2)"),
        (tail - 0.5).abs() <= 1e-4,
    );

    checks.result(8, "unimodality and asymptote")
}

/// 9. Identical experiment specs produce byte-identical CSV.
pub fn criterion_9_determinism(cfg: &AcceptanceConfig) -> CriterionResult {
    let mut checks = Checks::new();
    let text = format!(
        "rule=firstexit:a=1,b=1\nxs=0,0.5\npaths={}\ndt=1e-4\nepsilon=0.02\nmethods=occupation,upcrossing\nseed={}\n",
        cfg.paths(20_000),
        cfg.seed,
    );
    let spec = parse_spec(&text).unwrap();
    let first = run_experiment(&spec).unwrap().to_csv();
    let second = run_experiment(&spec).unwrap().to_csv();
    checks.push(
        format!("two runs, {} bytes each", first.len()),
        !first.is_empty() && first == second,
    );
    checks.result(9, "determinism of simulate")
}
