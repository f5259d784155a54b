//! The acceptance suite: one check per criterion, each with its tolerance
//! and a closed-form or independent oracle where one exists.

use std::cell::OnceCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{CurveOptions, Curves, ShockClass};
use crate::diagnostics::{norm_ratio, sample_interaction, wave_strength, SampleKind};
use crate::exec::{map_range, Execution};
use crate::experiment::{run_experiment, ManifestCheck, RunConfig, RunOptions, RunOutcome, SCHEMA_VERSION};
use crate::kinetics::{
    check_hypotheses, default_samples, mu_flat, phi_flat, phi_flat_zero, phi_sharp, H3Grid, KineticFunction,
};
use crate::model::{Cubic, Elasticity, FluxModel, State};
use crate::riemann::{RiemannSolver, WaveFan, WaveKind};
use crate::tracking::{BaseRight, InitialProfile, Tracker, TrackingOptions};

pub const NAMES: [&str; 13] = [
    "c01_cubic_closed_forms",
    "c02_involution_companions",
    "c03_entropy_admissibility",
    "c04_nucleation_threshold",
    "c05_split_additivity",
    "c06_norm_equivalence",
    "c07_glimm_estimate",
    "c08_lyapunov_monotone",
    "c09_finite_cycles",
    "c10_no_nucleation",
    "c11_conservation",
    "c12_classical_reduction",
    "c13_elasticity_riemann",
];

pub const DEFAULT_SEED: u64 = 20_240_601;

const BUNDLED: [(&str, &str); 3] = [
    ("cubic-baseline", include_str!("../configs/cubic-baseline.json")),
    (
        "cubic-no-nucleation",
        include_str!("../configs/cubic-no-nucleation.json"),
    ),
    ("cubic-cycling", include_str!("../configs/cubic-cycling.json")),
];

/// JSON text of a bundled configuration.
pub fn bundled_config(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AcceptanceOptions {
    pub exec: Execution,
    /// Seed of the random draws and of the run calibrations.
    pub seed: Option<u64>,
}

impl AcceptanceOptions {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} {} value={:.3e} tol={:.3e} ({:.1} s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub checks: Vec<ManifestCheck>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
}

impl AcceptanceReport {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn manifest(&self) -> AcceptanceManifest {
        AcceptanceManifest {
            schema_version: SCHEMA_VERSION,
            seed: self.seed,
            checks: self
                .criteria
                .iter()
                .map(|c| ManifestCheck {
                    name: c.name.clone(),
                    passed: c.passed,
                    value: c.value,
                    tolerance: c.tolerance,
                    detail: c.detail.clone(),
                })
                .collect(),
            passed: self.passed(),
        }
    }
}

struct Verdict {
    passed: bool,
    value: f64,
    tolerance: f64,
    detail: String,
}

fn verdict(passed: bool, value: f64, tolerance: f64, detail: String) -> Verdict {
    Verdict {
        passed,
        value,
        tolerance,
        detail,
    }
}

fn failure(tolerance: f64, detail: String) -> Verdict {
    verdict(false, f64::NAN, tolerance, detail)
}

type Timed = Result<(RunOutcome, f64), String>;

/// Shared state of one suite invocation; the tracking runs feed several
/// criteria and are executed once.
pub struct Suite {
    opts: AcceptanceOptions,
    baseline: OnceCell<Timed>,
    no_nucleation: OnceCell<Timed>,
}

impl Suite {
    pub fn new(opts: AcceptanceOptions) -> Self {
        Suite {
            opts,
            baseline: OnceCell::new(),
            no_nucleation: OnceCell::new(),
        }
    }

    fn bundled_run(&self, name: &str) -> Timed {
        let cfg = RunConfig::from_json(bundled_config(name).expect("bundled config")).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let run_opts = RunOptions {
            exec: self.opts.exec,
            seed: self.opts.seed,
            calibrate_only: false,
        };
        let out = run_experiment(&cfg, None, run_opts).map_err(|e| format!("{name}: {e}"))?;
        Ok((out, start.elapsed().as_secs_f64()))
    }

    fn baseline(&self) -> &Timed {
        self.baseline.get_or_init(|| self.bundled_run("cubic-baseline"))
    }

    fn no_nucleation(&self) -> &Timed {
        self.no_nucleation
            .get_or_init(|| self.bundled_run("cubic-no-nucleation"))
    }

    /// Runs criterion `id` (1-based).
    pub fn run(&self, id: usize) -> CriterionResult {
        let start = Instant::now();
        let v = match id {
            1 => c01_closed_forms(),
            2 => c02_involution(),
            3 => c03_admissibility(&self.opts),
            4 => c04_threshold(),
            5 => c05_additivity(),
            6 => c06_norm_equivalence(&self.opts),
            7 => c07_glimm(&self.opts),
            8 => self.c08_lyapunov(),
            9 => self.c09_cycles(),
            10 => self.c10_no_nucleation(),
            11 => self.c11_conservation(),
            12 => c12_classical_reduction(),
            13 => c13_elasticity(&self.opts),
            _ => failure(0.0, format!("no criterion {id}")),
        };
        CriterionResult {
            id,
            name: NAMES.get(id.wrapping_sub(1)).copied().unwrap_or("unknown").to_string(),
            passed: v.passed,
            value: v.value,
            tolerance: v.tolerance,
            detail: v.detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn c08_lyapunov(&self) -> Verdict {
        let tol = 1e-9;
        let (o, _) = match self.baseline() {
            Ok(r) => r,
            Err(e) => return failure(tol, e.clone()),
        };
        let s = o.lyapunov.as_ref().expect("tracking run");
        let pre = &o.manifest.preconditions;
        let passed = s.monotone() && pre.constraints_passed;
        let failed: Vec<String> = o
            .conformance
            .constraints
            .iter()
            .flat_map(|c| c.checks.iter())
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        verdict(
            passed,
            s.max_relative_delta,
            tol,
            format!(
                "{} events, {} above tolerance, max relative increase {:.3e}, W+KQ {:.6e} -> {:.6e}, K = {:.4}, weight constraints {}",
                s.points.len(),
                s.flagged,
                s.max_relative_delta,
                s.initial,
                s.last,
                o.weights.map_or(f64::NAN, |w| w.k),
                if failed.is_empty() { "passed".to_string() } else { format!("failed: {}", failed.join(", ")) }
            ),
        )
    }

    fn c09_cycles(&self) -> Verdict {
        let floor = 1e-3;
        let (o, secs) = match self.baseline() {
            Ok(r) => r,
            Err(e) => return failure(floor, e.clone()),
        };
        let a = o.cycles.as_ref().expect("tracking run");
        let n = a.cycles.len();
        let fitted = a.fitted_c.filter(|c| *c >= floor);
        let passed = a.passed && a.conditions_passed && fitted.is_some() && *secs <= 300.0;
        verdict(
            passed,
            a.fitted_c.unwrap_or(f64::NAN),
            floor,
            format!(
                "{n} completed cycles ({} splits, {} merges, open {}), eta {:.6}, fitted c {:?}, bound {:?}, conditions {}, {:.1} s{}",
                a.splits,
                a.merges,
                a.open.is_some(),
                a.eta,
                a.fitted_c,
                a.bound,
                if a.conditions_passed { "hold" } else { "violated" },
                secs,
                if n == 0 { "; c cannot be fitted without a completed cycle" } else { "" }
            ),
        )
    }

    fn c10_no_nucleation(&self) -> Verdict {
        let tol = 1e-12;
        let (base, _) = match self.baseline() {
            Ok(r) => r,
            Err(e) => return failure(tol, e.clone()),
        };
        let (o, _) = match self.no_nucleation() {
            Ok(r) => r,
            Err(e) => return failure(tol, e.clone()),
        };
        let a = o.cycles.as_ref().expect("tracking run");
        let b = base.cycles.as_ref().expect("tracking run");
        let passed = a.eta.abs() <= tol && a.cycles.len() >= b.cycles.len();
        verdict(
            passed,
            a.eta.abs(),
            tol,
            format!(
                "eta = {:e}; cycles {} at gamma = 0 against {} at gamma = 0.5 ({} and {} splits)",
                a.eta,
                a.cycles.len(),
                b.cycles.len(),
                a.splits,
                b.splits
            ),
        )
    }

    fn c11_conservation(&self) -> Verdict {
        let tol = 1e-8;
        let mut parts = Vec::new();
        let mut passed = true;
        let mut worst = 0.0f64;
        for (name, run) in [("baseline", self.baseline()), ("no-nucleation", self.no_nucleation())] {
            match run {
                Ok((o, _)) => {
                    let c = o.conservation.as_ref().expect("tracking run");
                    passed &= c.passed();
                    worst = worst.max(c.max_corrected());
                    parts.push(format!(
                        "{name}: corrected {:.2e}, raw {:.2e} against budget {:.2e}",
                        c.max_corrected(),
                        c.max_raw(),
                        c.budget()
                    ));
                }
                Err(e) => {
                    passed = false;
                    parts.push(e.clone());
                }
            }
        }
        verdict(passed, worst, tol, parts.join("; "))
    }
}

/// Runs every criterion in order.
pub fn run_suite(opts: &AcceptanceOptions) -> AcceptanceReport {
    run_suite_with(opts, |_| {})
}

/// Runs every criterion in order, reporting each result as it completes.
pub fn run_suite_with(opts: &AcceptanceOptions, mut report: impl FnMut(&CriterionResult)) -> AcceptanceReport {
    let suite = Suite::new(*opts);
    let criteria = (1..=NAMES.len())
        .map(|id| {
            let r = suite.run(id);
            report(&r);
            r
        })
        .collect();
    AcceptanceReport {
        seed: opts.seed(),
        criteria,
    }
}

fn u_grid() -> Vec<f64> {
    (0..50).map(|k| 0.1 + 1.3 * k as f64 / 49.0).collect()
}

fn generic_cubic() -> Cubic {
    Cubic::new(3.0, 3.0)
}

fn generic_curves(model: &dyn FluxModel) -> Curves<'_> {
    Curves::with_options(
        model,
        CurveOptions {
            exact_scalar: false,
            ..CurveOptions::default()
        },
    )
}

fn std_kinetics() -> KineticFunction {
    KineticFunction::theta(0.5, Some(0.5)).expect("valid kinetic function")
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn c01_closed_forms() -> Verdict {
    let tol = 1e-10;
    let model = generic_cubic();
    let curves = generic_curves(&model);
    let mut worst = 0.0f64;
    for u in u_grid() {
        let z = match curves.zero_maps(&State::scalar(u)) {
            Ok(z) => z,
            Err(e) => return failure(tol, format!("u = {u}: {e}")),
        };
        let Some(minus) = z.minus_natural else {
            return failure(tol, format!("u = {u}: no second tangency point"));
        };
        for err in [z.natural + u / 2.0, minus + 2.0 * u, z.flat_zero + u, z.sharp_zero] {
            worst = worst.max(err.abs());
        }
    }
    verdict(
        worst <= tol,
        worst,
        tol,
        "50 states on [0.1, 1.4], generic continuation path".into(),
    )
}

fn c02_involution() -> Verdict {
    let tol = 1e-10;
    let model = generic_cubic();
    let curves = generic_curves(&model);
    let kin = std_kinetics();
    let (mut inv, mut comp) = (0.0f64, 0.0f64);
    for u in u_grid() {
        let s = State::scalar(u);
        let r = (|| -> Result<(f64, f64), String> {
            let once = phi_flat_zero(&curves, &s).map_err(|e| e.to_string())?;
            let twice = phi_flat_zero(&curves, &once).map_err(|e| e.to_string())?;
            let flat = phi_flat(&curves, &kin, &s).map_err(|e| e.to_string())?;
            let sharp = phi_sharp(&curves, &kin, &s).map_err(|e| e.to_string())?;
            let a = curves.shock_speed(&s, &flat).map_err(|e| e.to_string())?;
            let b = curves.shock_speed(&s, &sharp).map_err(|e| e.to_string())?;
            Ok(((twice[0] - u).abs(), (a - b).abs()))
        })();
        match r {
            Ok((a, b)) => {
                inv = inv.max(a);
                comp = comp.max(b);
            }
            Err(e) => return failure(tol, format!("u = {u}: {e}")),
        }
    }
    let worst = inv.max(comp);
    verdict(
        worst <= tol,
        worst,
        tol,
        format!("involution {inv:.2e}, companion speed gap {comp:.2e}"),
    )
}

#[derive(Default)]
struct FanAudit {
    shocks: usize,
    nonclassical: usize,
    max_dissipation: f64,
    max_kinetic: f64,
    lax_nonclassical: usize,
    failures: Vec<String>,
}

impl FanAudit {
    fn merge(mut self, o: FanAudit) -> FanAudit {
        self.shocks += o.shocks;
        self.nonclassical += o.nonclassical;
        self.max_dissipation = self.max_dissipation.max(o.max_dissipation);
        self.max_kinetic = self.max_kinetic.max(o.max_kinetic);
        self.lax_nonclassical += o.lax_nonclassical;
        self.failures.extend(o.failures);
        self
    }
}

fn audit_fan(curves: &Curves<'_>, kin: &KineticFunction, fan: &WaveFan) -> FanAudit {
    let mut a = FanAudit {
        max_dissipation: f64::NEG_INFINITY,
        ..FanAudit::default()
    };
    for w in &fan.waves {
        if !w.is_shock() {
            continue;
        }
        a.shocks += 1;
        let s = w.speed.lo();
        a.max_dissipation = a.max_dissipation.max(curves.dissipation_at_speed(&w.left, &w.right, s));
        if w.kind == WaveKind::NonclassicalShock {
            a.nonclassical += 1;
            if !matches!(curves.classify_with_speed(&w.left, &w.right, w.family, s), Ok(c) if c != ShockClass::Lax) {
                a.lax_nonclassical += 1;
            }
            match mu_flat(curves, kin, &w.left) {
                Ok(m) => {
                    let r = curves.model.mu_family(w.family, &w.right) - m;
                    a.max_kinetic = a.max_kinetic.max(r.abs());
                }
                Err(e) => a.failures.push(e.to_string()),
            }
        }
    }
    a
}

fn random_pairs<R: Send>(
    opts: &AcceptanceOptions,
    stream: u64,
    n: usize,
    f: impl Fn(&mut ChaCha8Rng) -> R + Sync + Send,
) -> Vec<R> {
    let seed = opts.seed();
    map_range(opts.exec, n, |k| {
        let mut rng = rng_for(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15), k as u64);
        f(&mut rng)
    })
}

fn elasticity_state(rng: &mut ChaCha8Rng) -> State {
    let v = rng.gen_range(-0.5..=0.5);
    let w = rng.gen_range(0.2..=0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    State::new(vec![v, w])
}

fn c03_admissibility(opts: &AcceptanceOptions) -> Verdict {
    let tol = 1e-9;
    let kin = std_kinetics();
    let cubic = Cubic::default();
    let cc = Curves::new(&cubic);
    let solver = RiemannSolver::new(cc, &kin, true);
    let r = cubic.delta1();
    let cubic_audits = random_pairs(opts, 3, 10_000, |rng| {
        let ul = State::scalar(rng.gen_range(-r..=r));
        let ur = State::scalar(rng.gen_range(-r..=r));
        match solver.solve(&ul, &ur) {
            Ok(fan) => audit_fan(&cc, &kin, &fan),
            Err(e) => FanAudit {
                failures: vec![format!("{ul:?} -> {ur:?}: {e}")],
                ..FanAudit::default()
            },
        }
    });
    let el = Elasticity::default();
    let ec = Curves::new(&el);
    let esolver = RiemannSolver::new(ec, &kin, true);
    let el_audits = random_pairs(opts, 33, 1_000, |rng| {
        let ul = elasticity_state(rng);
        let ur = State::new(ul.iter().map(|x| x + rng.gen_range(-0.1..=0.1)).collect());
        match esolver.solve(&ul, &ur) {
            Ok(fan) => audit_fan(&ec, &kin, &fan),
            Err(e) => FanAudit {
                failures: vec![format!("{ul:?} -> {ur:?}: {e}")],
                ..FanAudit::default()
            },
        }
    });
    let fold = |v: Vec<FanAudit>| {
        v.into_iter().fold(
            FanAudit {
                max_dissipation: f64::NEG_INFINITY,
                ..FanAudit::default()
            },
            FanAudit::merge,
        )
    };
    let all = fold(cubic_audits).merge(fold(el_audits));
    let kin_tol = 1e-10;
    let passed = all.failures.is_empty()
        && all.max_dissipation <= tol
        && all.max_kinetic <= kin_tol
        && all.lax_nonclassical == 0;
    verdict(
        passed,
        all.max_dissipation,
        tol,
        format!(
            "{} shocks ({} nonclassical) over 10^4 cubic and 10^3 elasticity pairs; max E {:.2e}, kinetic residual {:.2e} (tol {kin_tol:e}), Lax-admissible nonclassical {}, solver failures {}{}",
            all.shocks,
            all.nonclassical,
            all.max_dissipation,
            all.max_kinetic,
            all.lax_nonclassical,
            all.failures.len(),
            all.failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn c04_threshold() -> Verdict {
    let tol = 1e-9;
    let kin = std_kinetics();
    let model = Cubic::default();
    let solver = RiemannSolver::new(Curves::new(&model), &kin, true);
    let ul = State::scalar(1.0);
    let kinds = |ur: f64| -> Result<Vec<WaveKind>, String> {
        solver
            .solve(&ul, &State::scalar(ur))
            .map(|f| f.waves.iter().map(|w| w.kind).collect())
            .map_err(|e| e.to_string())
    };
    let (a, b) = match (kinds(-0.3), kinds(-0.45)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return failure(tol, e),
    };
    let single = a == [WaveKind::ClassicalShock];
    let pair = b == [WaveKind::NonclassicalShock, WaveKind::ClassicalShock];
    let has_n = |ur: f64| {
        kinds(ur)
            .map(|k| k.contains(&WaveKind::NonclassicalShock))
            .unwrap_or(false)
    };
    let (mut lo, mut hi) = (-0.45, -0.3);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if has_n(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let switch = 0.5 * (lo + hi);
    let err = (switch + 0.375).abs();
    verdict(
        single && pair && err <= tol,
        err,
        tol,
        format!("u_r = -0.3 gives {a:?}, u_r = -0.45 gives {b:?}, switch at {switch:.12}"),
    )
}

fn c05_additivity() -> Verdict {
    let tol = 1e-10;
    let kin = std_kinetics();
    let model = Cubic::default();
    let curves = Curves::new(&model);
    let i = model.cc_index();
    let mut worst = 0.0f64;
    for u in u_grid() {
        let s = State::scalar(u);
        let r = (|| -> Result<f64, String> {
            let flat = phi_flat(&curves, &kin, &s).map_err(|e| e.to_string())?;
            let sharp = phi_sharp(&curves, &kin, &s).map_err(|e| e.to_string())?;
            let st = |a: &State, b: &State| wave_strength(&curves, a, b, i).map_err(|e| e.to_string());
            Ok(st(&s, &sharp)? - st(&s, &flat)? - st(&flat, &sharp)?)
        })();
        match r {
            Ok(d) => worst = worst.max(d.abs()),
            Err(e) => return failure(tol, format!("u = {u}: {e}")),
        }
    }
    verdict(worst <= tol, worst, tol, "50 states on [0.1, 1.4]".into())
}

fn c06_norm_equivalence(opts: &AcceptanceOptions) -> Verdict {
    let kin = std_kinetics();
    let model = Cubic::default();
    let curves = Curves::new(&model);
    let samples = default_samples(&curves, 48);
    let report = match check_hypotheses(&curves, &kin, &samples, H3Grid::default(), opts.exec) {
        Ok(r) => r,
        Err(e) => return failure(0.0, e.to_string()),
    };
    let lower = (1.0 - 0.75) / (1.0 + report.b_flat) - 1e-6;
    let solver = RiemannSolver::new(curves, &kin, true);
    let i = model.cc_index();
    let r = model.delta1();
    let ratios: Vec<Result<Vec<f64>, String>> = random_pairs(opts, 6, 10_000, |rng| {
        let ul = State::scalar(rng.gen_range(-r..=r));
        let ur = State::scalar(rng.gen_range(-r..=r));
        let fan = solver.solve(&ul, &ur).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        for w in fan.waves.iter().filter(|w| w.family == i) {
            if let Some(q) = norm_ratio(&curves, w).map_err(|e| e.to_string())? {
                out.push(q);
            }
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in ratios {
        match r {
            Ok(v) => all.extend(v),
            Err(e) => return failure(lower, e),
        }
    }
    let c = all.iter().copied().fold(f64::INFINITY, f64::min);
    let big_c = all.iter().copied().fold(0.0f64, f64::max);
    verdict(
        all.len() >= 10_000 && c >= lower && big_c.is_finite(),
        c,
        lower,
        format!(
            "{} waves, |sigma|/|dmu| in [{c:.6}, {big_c:.6}], measured B_flat {:.6}",
            all.len(),
            report.b_flat
        ),
    )
}

fn c07_glimm(opts: &AcceptanceOptions) -> Verdict {
    let tol = 1e-11;
    let kin = std_kinetics();
    let el = Elasticity::default();
    let esolver = RiemannSolver::new(Curves::new(&el), &kin, true);
    let cubic = Cubic::default();
    let csolver = RiemannSolver::new(Curves::new(&cubic), &kin, true);
    let draw =
        |solver: &RiemannSolver<'_>, rng: &mut ChaCha8Rng, center: State| -> Result<Option<(f64, f64)>, String> {
            for _ in 0..20 {
                let s =
                    sample_interaction(solver, SampleKind::WeakWeak, &center, 0.05, rng).map_err(|e| e.to_string())?;
                if let Some(s) = s {
                    if s.incoming.iter().all(|w| w.strength.abs() <= 0.05) {
                        return Ok(Some((s.glimm.residual, s.glimm.approaching_product)));
                    }
                }
            }
            Ok(None)
        };
    let el_draws = random_pairs(opts, 7, 10_000, |rng| {
        let c = elasticity_state(rng);
        draw(&esolver, rng, c)
    });
    let cu_draws = random_pairs(opts, 77, 2_000, |rng| {
        let u = rng.gen_range(0.2..1.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        draw(&csolver, rng, State::scalar(u))
    });
    let mut fit = 0.0f64;
    let mut zero = 0.0f64;
    let (mut n, mut missing, mut zero_n) = (0, 0, 0);
    for d in el_draws.into_iter().chain(cu_draws) {
        match d {
            Ok(Some((res, prod))) => {
                n += 1;
                if prod > 0.0 {
                    fit = fit.max(res.abs() / prod);
                } else {
                    zero_n += 1;
                    zero = zero.max(res.abs());
                }
            }
            Ok(None) => missing += 1,
            Err(e) => return failure(tol, e),
        }
    }
    verdict(
        zero <= tol && fit.is_finite() && n >= 10_000,
        zero,
        tol,
        format!(
            "{n} interactions ({missing} draws rejected), fitted C {fit:.4}, max zero-product residual {zero:.2e} over {zero_n}"
        ),
    )
}

/// Exact solution of the classical Riemann problem `1 -> -0.8` for the
/// cubic flux at `x / t = xi`: a shock to `-1/2` at speed `3/4` followed by
/// the fan `u = -sqrt(xi / 3)`.
fn classical_exact(xi: f64) -> f64 {
    if xi < 0.75 {
        1.0
    } else if xi < 3.0 * 0.64 {
        -(xi / 3.0).sqrt()
    } else {
        -0.8
    }
}

fn c12_classical_reduction() -> Verdict {
    let kin = match KineticFunction::theta(0.0, Some(0.0)) {
        Ok(k) => k,
        Err(e) => return failure(0.0, e.to_string()),
    };
    let model = Cubic::default();
    let t_final = 1.0;
    let mut rows = Vec::new();
    let mut passed = true;
    let mut worst = 0.0f64;
    for h in [0.02, 0.01, 0.005] {
        let solver = RiemannSolver::new(Curves::new(&model), &kin, false);
        let tracker = Tracker::new(
            solver,
            TrackingOptions {
                h,
                t_final,
                ..TrackingOptions::default()
            },
        );
        let profile = InitialProfile {
            u_star: vec![1.0],
            base_right: BaseRight::State(vec![-0.8]),
            jumps: Vec::new(),
        };
        let run = tracker.init(&profile).and_then(|(fs, _)| tracker.run(fs, |_, _| {}));
        let summary = match run {
            Ok(s) => s,
            Err(e) => return failure(5.0 * h, format!("h = {h}: {e}")),
        };
        let snap = summary.final_state.snapshot();
        let xs: Vec<f64> = snap.fronts.iter().map(|f| f.x).collect();
        let states: Vec<f64> = std::iter::once(1.0)
            .chain(snap.fronts.iter().map(|f| f.right[0]))
            .collect();
        let (a, b) = (0.0, 3.0);
        let cells = 300_000;
        let dx = (b - a) / cells as f64;
        let mut err = 0.0;
        for k in 0..cells {
            let x = a + (k as f64 + 0.5) * dx;
            let idx = xs.partition_point(|&p| p < x);
            err += (states[idx] - classical_exact(x / t_final)).abs() * dx;
        }
        passed &= err <= 5.0 * h;
        worst = worst.max(err / h);
        rows.push((h, err));
    }
    let rates: Vec<String> = rows.windows(2).map(|w| format!("{:.2}", w[0].1 / w[1].1)).collect();
    verdict(
        passed,
        worst,
        5.0,
        format!(
            "L1 errors {}; successive ratios {}",
            rows.iter()
                .map(|(h, e)| format!("h={h}: {e:.3e}"))
                .collect::<Vec<_>>()
                .join(", "),
            rates.join(", ")
        ),
    )
}

fn c13_elasticity(opts: &AcceptanceOptions) -> Verdict {
    let tol = 1e-11;
    let speed_tol = 1e-10;
    let start = Instant::now();
    let kin = std_kinetics();
    let el = Elasticity::default();
    let curves = Curves::new(&el);
    let solver = RiemannSolver::new(curves, &kin, true);
    let i = el.cc_index();
    let res = random_pairs(opts, 13, 1_000, |rng| -> Result<(f64, f64, usize), String> {
        let ul = elasticity_state(rng);
        let ur = State::new(ul.iter().map(|x| x + rng.gen_range(-0.05..=0.05)).collect());
        let fan = solver.solve(&ul, &ur).map_err(|e| format!("{ul:?} -> {ur:?}: {e}"))?;
        let mut resid = 0.0f64;
        let mut speed = 0.0f64;
        let mut shocks = 0;
        let mut prev = fan.left.clone();
        for w in &fan.waves {
            resid = resid.max(w.left.distance(&prev));
            prev = w.right.clone();
            if w.is_shock() || w.kind == WaveKind::Contact {
                let s = w.speed.lo();
                resid = resid.max(curves.rh_residual(&w.left, &w.right, s));
                if w.family == i && w.is_shock() {
                    shocks += 1;
                    let dw = w.right[1] - w.left[1];
                    let ratio = (Elasticity::sigma(w.right[1]) - Elasticity::sigma(w.left[1])) / dw;
                    speed = speed.max((s * s - ratio).abs());
                }
            }
        }
        resid = resid.max(prev.distance(&ur));
        Ok((resid, speed, shocks))
    });
    let (mut resid, mut speed, mut shocks) = (0.0f64, 0.0f64, 0);
    for r in res {
        match r {
            Ok((a, b, n)) => {
                resid = resid.max(a);
                speed = speed.max(b);
                shocks += n;
            }
            Err(e) => return failure(tol, e),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        resid <= tol && speed <= speed_tol && secs <= 120.0,
        resid,
        tol,
        format!("10^3 problems, {shocks} family-{i} shocks, speed identity residual {speed:.2e} (tol {speed_tol:e})"),
    )
}
