//! Experiment runner: configuration, the full diagnostic pipeline over one
//! tracking run, artifacts and parameter sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveError, Curves};
use crate::diagnostics::{
    calibrate, classify_case, cycle_audit, diagnose, event_glimm_residual, lyapunov_series, validate_constraints,
    wave_strength, Calibration, CalibrationOptions, Classification, ConstraintReport, CycleAudit, DiagnosticsSnapshot,
    GlimmResidual, LyapunovSeries, Weights,
};
use crate::exec::{self, Execution};
use crate::kinetics::{
    check_hypotheses, default_samples, phi_sharp, ConformanceReport, CriticalMaps, H3Grid, KineticError,
    KineticFunction, KineticLaw,
};
use crate::model::{build_model, verify_model, ModelError, ModelReport, State};
use crate::riemann::{RiemannError, RiemannSolver};
use crate::tracking::{InitialProfile, InteractionEvent, Snapshot, Tracker, TrackingError, TrackingOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// `Cff` at or above this value leaves no room for the weights.
pub const CFF_ABORT: f64 = 0.999;

pub const C07: &str = "c07_glimm_estimate";
pub const C08: &str = "c08_lyapunov_monotone";
pub const C09: &str = "c09_finite_cycles";
pub const C10: &str = "c10_no_nucleation";
pub const C11: &str = "c11_conservation";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Kinetic(#[from] KineticError),
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticSpec {
    pub law: KineticLaw,
    /// Nucleation weight; absent or null runs with `gamma = 0`.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "yes")]
    pub use_nucleation: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsSpec {
    /// Weights parametrized by `zeta` and the measured `Cff`; `k` defaults to
    /// the calibrated value.
    #[serde(alias = "lemma")]
    Zeta {
        zeta: f64,
        #[serde(default)]
        k: Option<f64>,
    },
    Explicit(Weights),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub q_weak_only: bool,
    pub lyapunov_rel_tol: f64,
    pub c_floor: f64,
    /// Sample states for the model and kinetic conformance checks.
    pub conformance_samples: usize,
    pub h3_grid: H3Grid,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            q_weak_only: false,
            lyapunov_rel_tol: 1e-9,
            c_floor: 1e-3,
            conformance_samples: 48,
            h3_grid: H3Grid::default(),
        }
    }
}

/// Smallness of the initial perturbation relative to the strong pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySpec {
    pub enabled: bool,
    pub kappa_star: f64,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        StabilitySpec {
            enabled: true,
            kappa_star: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Events between two trajectory snapshots.
    pub snapshot_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { snapshot_every: 25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: ModelSpec,
    pub kinetics: KineticSpec,
    #[serde(default)]
    pub tracking: TrackingOptions,
    pub initial: InitialProfile,
    pub weights: WeightsSpec,
    #[serde(default)]
    pub calibration: CalibrationOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub stability: StabilitySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let t = &self.tracking;
        if !(t.h > 0.0 && t.h.is_finite()) {
            return bad(format!("tracking.h must be positive, got {}", t.h));
        }
        if !(t.t_final > 0.0 && t.t_final.is_finite()) {
            return bad(format!("tracking.t_final must be positive, got {}", t.t_final));
        }
        if t.drop_factor < 0.0 {
            return bad("tracking.drop_factor must be nonnegative".into());
        }
        if let Some(g) = self.kinetics.gamma {
            if !(0.0..=1.0).contains(&g) {
                return bad(format!("kinetics.gamma must lie in [0, 1], got {g}"));
            }
        }
        match &self.weights {
            WeightsSpec::Zeta { zeta, k } => {
                if !zeta.is_finite() {
                    return bad("weights.zeta must be finite".into());
                }
                if k.is_some_and(|k| k.is_nan() || k < 0.0) {
                    return bad("weights.k must be nonnegative".into());
                }
            }
            WeightsSpec::Explicit(w) => {
                if w.k.is_nan() || w.k < 0.0 {
                    return bad("weights.k must be nonnegative".into());
                }
            }
        }
        if self.calibration.samples == 0 {
            return bad("calibration.samples must be positive".into());
        }
        let d = &self.diagnostics;
        if !(d.lyapunov_rel_tol >= 0.0 && d.c_floor >= 0.0) {
            return bad("diagnostics tolerances must be nonnegative".into());
        }
        if d.conformance_samples < 2 {
            return bad("diagnostics.conformance_samples must be at least 2".into());
        }
        if self.output.snapshot_every == 0 {
            return bad("output.snapshot_every must be positive".into());
        }
        self.kinetic_function()?;
        Ok(())
    }

    pub fn kinetic_function(&self) -> Result<KineticFunction, ExperimentError> {
        Ok(KineticFunction::new(
            self.kinetics.law.clone(),
            Some(self.kinetics.gamma.unwrap_or(0.0)),
        )?)
    }
}

/// Knobs that are not part of the configuration file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub exec: Execution,
    /// Overrides `calibration.seed`.
    pub seed: Option<u64>,
    /// Stop after conformance and calibration.
    pub calibrate_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preconditions {
    pub model_verified: bool,
    pub conformance_passed: bool,
    pub constraints_passed: bool,
    pub stability_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummaryRecord {
    pub events: usize,
    pub truncated: bool,
    pub final_fronts: usize,
    pub splits: usize,
    pub merges: usize,
    pub cycles: usize,
    pub eta: f64,
    pub cff: f64,
    pub k: f64,
    pub initial_eps: f64,
    pub max_eps: f64,
    pub initial_lyapunov: f64,
    pub final_lyapunov: f64,
    pub max_lyapunov_delta: f64,
    pub other_events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub parallel: bool,
    pub preconditions: Preconditions,
    pub summary: Option<RunSummaryRecord>,
    pub checks: Vec<ManifestCheck>,
    pub artifacts: Vec<String>,
    pub passed: bool,
}

impl Manifest {
    pub fn check(&self, name: &str) -> Option<&ManifestCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub radius: f64,
    /// `|mass(T) - mass(0) - T [f]|` per component.
    pub raw: Vec<f64>,
    pub ledger: Vec<f64>,
    /// `|raw - ledger|`, the part not explained by front defects.
    pub corrected: Vec<f64>,
    pub dropped_budget: f64,
    pub piece_budget: f64,
}

impl Conservation {
    pub fn max_raw(&self) -> f64 {
        self.raw.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    pub fn max_corrected(&self) -> f64 {
        self.corrected.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn budget(&self) -> f64 {
        self.dropped_budget + self.piece_budget
    }

    pub fn passed(&self) -> bool {
        self.max_corrected() <= 1e-8 && self.max_raw() <= self.budget() + 1e-12
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformanceArtifact {
    pub model: ModelReport,
    pub kinetics: ConformanceReport,
    pub constraints: Option<ConstraintReport>,
}

#[derive(Serialize)]
struct EventRecord<'a> {
    event: &'a InteractionEvent,
    classification: &'a Classification,
    glimm: GlimmResidual,
}

/// Everything a run produces, kept in memory for callers.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub conformance: ConformanceArtifact,
    pub calibration: Calibration,
    pub weights: Option<Weights>,
    pub diagnostics: Vec<DiagnosticsSnapshot>,
    pub classifications: Vec<Classification>,
    pub lyapunov: Option<LyapunovSeries>,
    pub cycles: Option<CycleAudit>,
    pub conservation: Option<Conservation>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dst = dir.join(name);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, &dst).map_err(io_err(&dst))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, ExperimentError> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn jsonl_bytes<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>, ExperimentError> {
    let mut b = Vec::new();
    for it in items {
        serde_json::to_writer(&mut b, &it)?;
        b.push(b'\n');
    }
    Ok(b)
}

fn functionals_csv(diags: &[DiagnosticsSnapshot]) -> Vec<u8> {
    let mut s = String::from("t,V_L,V_M,V_R,W,Q,eps,lyapunov\n");
    for d in diags {
        s.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            d.t, d.v_l, d.v_m, d.v_r, d.w, d.q, d.eps, d.lyapunov
        ));
    }
    s.into_bytes()
}

fn check(name: &str, passed: bool, value: f64, tolerance: f64, detail: String) -> ManifestCheck {
    ManifestCheck {
        name: name.into(),
        passed,
        value,
        tolerance,
        detail,
    }
}

fn glimm_check(cal: &Calibration) -> ManifestCheck {
    let zero = cal.glimm_zero_product_residual;
    let c = cal.glimm_constant;
    let passed = zero <= 1e-11 && c.is_some_and(|c| c.is_finite());
    check(
        C07,
        passed,
        zero,
        1e-11,
        format!("zero-product residual {zero:e}, fitted constant {c:?}"),
    )
}

fn conservation(
    curves: &Curves<'_>,
    initial: &Snapshot,
    mass0: &crate::model::Vector,
    summary: &crate::tracking::RunSummary,
    radius: f64,
    init_budget: f64,
) -> Conservation {
    let model = curves.model;
    let fs = &summary.final_state;
    let t = fs.time - initial.t;
    let mass_t = fs.mass(radius);
    let flux_gap = model.flux(&fs.left_state) - model.flux(&fs.right_state);
    let raw_v = &mass_t - mass0 - flux_gap * t;
    let raw: Vec<f64> = raw_v.iter().copied().collect();
    let corrected = raw
        .iter()
        .zip(&summary.mass_ledger)
        .map(|(r, l)| (r - l).abs())
        .collect();
    Conservation {
        radius,
        raw,
        ledger: summary.mass_ledger.clone(),
        corrected,
        dropped_budget: summary.dropped_budget + init_budget,
        piece_budget: summary.piece_budget,
    }
}

/// Runs the full pipeline for one configuration.  Artifacts are written to
/// `out` when given.
pub fn run_experiment(cfg: &RunConfig, out: Option<&Path>, opts: RunOptions) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    let exec = opts.exec;
    let mut cal_opts = cfg.calibration.clone();
    if let Some(seed) = opts.seed {
        cal_opts.seed = seed;
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut resolved = cfg.clone();
        resolved.calibration = cal_opts.clone();
        write_atomic(dir, "config.json", &json_bytes(&resolved)?)?;
    }
    let model = build_model(&cfg.model.name, &cfg.model.params)?;
    let curves = Curves::new(&*model);
    let samples = default_samples(&curves, cfg.diagnostics.conformance_samples);
    let model_report = verify_model(&*model, &samples)?;
    let model_ok = model_report.passed(1e-8);
    if !model_ok {
        return Err(ExperimentError::Aborted(format!(
            "model `{}` failed the structural checks: {model_report:?}",
            model.name()
        )));
    }
    let mut kin = cfg.kinetic_function()?;
    let conf = check_hypotheses(&curves, &kin, &samples, cfg.diagnostics.h3_grid, exec)?;
    if conf.cff >= CFF_ABORT {
        return Err(ExperimentError::Aborted(format!(
            "measured Cff = {} is not below {CFF_ABORT}",
            conf.cff
        )));
    }
    kin.measured_cff = Some(conf.cff);
    let solver = RiemannSolver::new(curves, &kin, cfg.kinetics.use_nucleation);
    let u_star = State::new(cfg.initial.u_star.clone());
    let cal = calibrate(&solver, &u_star, &cal_opts, exec)?;
    let mut artifacts = vec!["config.json".to_string()];
    let mut checks = vec![glimm_check(&cal)];
    let mut conformance = ConformanceArtifact {
        model: model_report,
        kinetics: conf,
        constraints: None,
    };
    let finish = |dir: &Path, manifest: &Manifest, conformance: &ConformanceArtifact, cal: &Calibration| {
        write_atomic(dir, "conformance.json", &json_bytes(conformance)?)?;
        write_atomic(dir, "calibration.json", &json_bytes(cal)?)?;
        write_atomic(dir, "MANIFEST.json", &json_bytes(manifest)?)
    };
    let cff = conformance.kinetics.cff;
    let base_manifest =
        |checks: Vec<ManifestCheck>, pre: Preconditions, summary: Option<RunSummaryRecord>, artifacts: Vec<String>| {
            let passed = checks.iter().all(|c| c.passed);
            Manifest {
                schema_version: SCHEMA_VERSION,
                name: cfg.name.clone(),
                seed: cal_opts.seed,
                parallel: exec.effective() == Execution::Parallel,
                preconditions: pre,
                summary,
                checks,
                artifacts,
                passed,
            }
        };
    if opts.calibrate_only {
        artifacts.extend(["conformance.json", "calibration.json"].map(String::from));
        let pre = Preconditions {
            model_verified: model_ok,
            conformance_passed: conformance.kinetics.passed(),
            constraints_passed: false,
            stability_margin: None,
        };
        let manifest = base_manifest(checks, pre, None, artifacts);
        if let Some(dir) = out {
            finish(dir, &manifest, &conformance, &cal)?;
        }
        return Ok(RunOutcome {
            manifest,
            conformance,
            calibration: cal,
            weights: None,
            diagnostics: Vec::new(),
            classifications: Vec::new(),
            lyapunov: None,
            cycles: None,
            conservation: None,
        });
    }

    let weights = match &cfg.weights {
        WeightsSpec::Zeta { zeta, k } => {
            let k = k.or(cal.k).ok_or_else(|| {
                ExperimentError::Aborted("calibration measured no interaction constant; set weights.k".into())
            })?;
            Weights::from_zeta(cff, *zeta, k)
        }
        WeightsSpec::Explicit(w) => *w,
    };
    let i = model.cc_index();
    let eps0 = cfg.initial.perturbation_tv();
    let stability_margin = if cfg.stability.enabled {
        let s = phi_sharp(&curves, &kin, &u_star)?;
        let strength = wave_strength(&curves, &u_star, &s, i)?.abs();
        let bound = cfg.stability.kappa_star * strength;
        if eps0 > bound {
            return Err(ExperimentError::Config(format!(
                "initial perturbation {eps0} exceeds kappa_star |sigma(u_star, sharp)| = {bound}"
            )));
        }
        Some(bound - eps0)
    } else {
        None
    };
    let eta = CriticalMaps::compute(&curves, &kin, &u_star)?.eta();

    let tracker = Tracker::new(solver, cfg.tracking.clone());
    let (fs, init_dropped) = tracker.init(&cfg.initial)?;
    let init_budget: f64 = init_dropped.iter().map(|d| d.budget).sum();
    let initial = fs.snapshot();
    let mass0_probe = |r: f64| fs.mass(r);
    let q_weak = cfg.diagnostics.q_weak_only;
    let every = cfg.output.snapshot_every;
    let mut diags = vec![diagnose(&initial, i, &weights, q_weak)];
    let mut events: Vec<InteractionEvent> = Vec::new();
    let mut trajectory = vec![initial.clone()];
    let init_extent = initial.fronts.iter().fold(0.0f64, |a, f| a.max(f.x.abs()));
    // Mass is measured on a window that contains every front at both ends.
    let reach = init_extent + 1.0 + cfg.tracking.t_final * 10.0 * model.delta0().powi(2).max(1.0);
    let mass0 = mass0_probe(reach);
    let fs0 = fs.clone();
    let summary = tracker.run(fs0, |fs, ev| {
        let snap = fs.snapshot();
        diags.push(diagnose(&snap, i, &weights, q_weak));
        if (ev.index + 1) % every == 0 {
            trajectory.push(snap);
        }
        events.push(ev.clone());
    })?;
    let final_snap = summary.final_state.snapshot();
    if trajectory.last().map(|s| s.t) != Some(final_snap.t) || trajectory.len() == 1 {
        trajectory.push(final_snap.clone());
    }
    let classes: Vec<Classification> = events.iter().map(|e| classify_case(e, i)).collect();
    let solver = &tracker.solver;
    let series = lyapunov_series(&diags, &classes, &weights, cff, cfg.diagnostics.lyapunov_rel_tol);
    let audit = cycle_audit(solver, &events, &diags, eta, cfg.diagnostics.c_floor)?;
    let max_eps = diags.iter().fold(0.0f64, |a, d| a.max(d.eps));
    let constraints = validate_constraints(&weights, cff, &cal, max_eps);
    let cons = conservation(&tracker.solver.curves, &initial, &mass0, &summary, reach, init_budget);
    let final_extent = final_snap.fronts.iter().fold(0.0f64, |a, f| a.max(f.x.abs()));
    if final_extent >= reach {
        return Err(ExperimentError::Aborted(format!(
            "fronts left the mass window |x| < {reach}"
        )));
    }

    checks.push(check(
        C08,
        series.monotone() && !summary.truncated,
        series.max_delta,
        cfg.diagnostics.lyapunov_rel_tol,
        format!(
            "{} flagged of {} events, initial {:e}, final {:e}, constraints {}",
            series.flagged,
            series.points.len(),
            series.initial,
            series.last,
            if constraints.passed() { "passed" } else { "failed" }
        ),
    ));
    checks.push(check(
        C09,
        audit.passed && !summary.truncated,
        audit.cycles.len() as f64,
        audit.bound.unwrap_or(f64::INFINITY),
        format!(
            "{} completed cycles, {} splits, {} merges, fitted c {:?}, bound {:?}",
            audit.cycles.len(),
            audit.splits,
            audit.merges,
            audit.fitted_c,
            audit.bound
        ),
    ));
    if kin.gamma_or_zero() == 0.0 {
        checks.push(check(
            C10,
            eta.abs() <= 1e-12,
            eta,
            1e-12,
            format!("eta = {eta:e}, {} completed cycles", audit.cycles.len()),
        ));
    }
    checks.push(check(
        C11,
        cons.passed(),
        cons.max_corrected(),
        1e-8,
        format!(
            "raw drift {:e} against budget {:e}, ledger-corrected {:e}",
            cons.max_raw(),
            cons.budget(),
            cons.max_corrected()
        ),
    ));

    let pre = Preconditions {
        model_verified: model_ok,
        conformance_passed: conformance.kinetics.passed(),
        constraints_passed: constraints.passed(),
        stability_margin,
    };
    conformance.constraints = Some(constraints);
    let record = RunSummaryRecord {
        events: summary.events,
        truncated: summary.truncated,
        final_fronts: final_snap.fronts.len(),
        splits: audit.splits,
        merges: audit.merges,
        cycles: audit.cycles.len(),
        eta,
        cff,
        k: weights.k,
        initial_eps: diags[0].eps,
        max_eps,
        initial_lyapunov: series.initial,
        final_lyapunov: series.last,
        max_lyapunov_delta: series.max_delta,
        other_events: classes.iter().filter(|c| c.dump.is_some()).count(),
    };
    artifacts.extend(
        [
            "trajectory.jsonl",
            "events.jsonl",
            "functionals.csv",
            "cycles.json",
            "conformance.json",
            "calibration.json",
        ]
        .map(String::from),
    );
    let manifest = base_manifest(checks, pre, Some(record), artifacts);
    if let Some(dir) = out {
        write_atomic(dir, "trajectory.jsonl", &jsonl_bytes(&trajectory)?)?;
        let fam = model.dim();
        let recs = events.iter().zip(&classes).map(|(e, c)| EventRecord {
            event: e,
            classification: c,
            glimm: event_glimm_residual(e, fam),
        });
        write_atomic(dir, "events.jsonl", &jsonl_bytes(recs)?)?;
        write_atomic(dir, "functionals.csv", &functionals_csv(&diags))?;
        write_atomic(dir, "cycles.json", &json_bytes(&audit)?)?;
        finish(dir, &manifest, &conformance, &cal)?;
    }
    Ok(RunOutcome {
        manifest,
        conformance,
        calibration: cal,
        weights: Some(weights),
        diagnostics: diags,
        classifications: classes,
        lyapunov: Some(series),
        cycles: Some(audit),
        conservation: Some(cons),
    })
}

/// Axes of a parameter sweep; empty axes keep the template value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub h: Vec<f64>,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub eps0: Vec<f64>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.h.is_empty() && self.theta.is_empty() && self.gamma.is_empty() && self.eps0.is_empty()
    }

    /// Cartesian product of the axes as `(h, theta, gamma, eps0)` overrides.
    pub fn points(&self) -> Vec<[Option<f64>; 4]> {
        if self.is_empty() {
            return Vec::new();
        }
        let axis = |v: &Vec<f64>| -> Vec<Option<f64>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        for h in axis(&self.h) {
            for th in axis(&self.theta) {
                for g in axis(&self.gamma) {
                    for e in axis(&self.eps0) {
                        out.push([h, th, g, e]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: f64,
    pub theta: Option<f64>,
    pub gamma: f64,
    pub eps0: f64,
    pub status: String,
    pub cycles: Option<usize>,
    pub min_cycle_drop: Option<f64>,
    pub fitted_c: Option<f64>,
    pub max_lyapunov_delta: Option<f64>,
    pub conservation_residual: Option<f64>,
}

pub const SWEEP_HEADER: &str =
    "h,theta,gamma,eps0,status,cycles,min_cycle_drop,fitted_c,max_lyapunov_delta,conservation_residual";

impl SweepRow {
    pub fn csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.h,
            opt(self.theta),
            self.gamma,
            self.eps0,
            self.status,
            opt(self.cycles),
            opt(self.min_cycle_drop),
            opt(self.fitted_c),
            opt(self.max_lyapunov_delta),
            opt(self.conservation_residual)
        )
    }
}

/// Applies one grid point to the template.
pub fn sweep_config(template: &RunConfig, point: [Option<f64>; 4], k: usize) -> Result<RunConfig, ExperimentError> {
    let mut cfg = template.clone();
    cfg.name = format!("{}-{k:03}", template.name);
    let [h, theta, gamma, eps0] = point;
    if let Some(h) = h {
        cfg.tracking.h = h;
    }
    if let Some(th) = theta {
        match &mut cfg.kinetics.law {
            KineticLaw::Theta { theta } => *theta = th,
            KineticLaw::Table { .. } => {
                return Err(ExperimentError::Config("a theta axis needs a theta kinetic law".into()))
            }
        }
    }
    if let Some(g) = gamma {
        cfg.kinetics.gamma = Some(g);
    }
    if let Some(e) = eps0 {
        let tv = cfg.initial.perturbation_tv();
        if tv <= 0.0 {
            return Err(ExperimentError::Config(
                "an eps0 axis needs a nonzero perturbation".into(),
            ));
        }
        let s = e / tv;
        for j in &mut cfg.initial.jumps {
            for d in &mut j.delta {
                *d *= s;
            }
        }
    }
    Ok(cfg)
}

/// Runs every grid point, in parallel under `Execution::Parallel`, and
/// writes `sweep.csv` plus one artifact directory per row.
pub fn sweep(
    template: &RunConfig,
    grid: &SweepGrid,
    out: Option<&Path>,
    opts: RunOptions,
) -> Result<Vec<SweepRow>, ExperimentError> {
    template.validate()?;
    let points = grid.points();
    let configs: Vec<Result<RunConfig, ExperimentError>> = points
        .iter()
        .enumerate()
        .map(|(k, p)| sweep_config(template, *p, k))
        .collect();
    let configs: Vec<RunConfig> = configs.into_iter().collect::<Result<_, _>>()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let rows: Vec<SweepRow> = exec::map_range(opts.exec, configs.len(), |k| {
        let cfg = &configs[k];
        let dir = out.map(|d| d.join(format!("row_{k:03}")));
        let theta = match cfg.kinetics.law {
            KineticLaw::Theta { theta } => Some(theta),
            KineticLaw::Table { .. } => None,
        };
        let mut row = SweepRow {
            h: cfg.tracking.h,
            theta,
            gamma: cfg.kinetics.gamma.unwrap_or(0.0),
            eps0: cfg.initial.perturbation_tv(),
            status: "ok".into(),
            cycles: None,
            min_cycle_drop: None,
            fitted_c: None,
            max_lyapunov_delta: None,
            conservation_residual: None,
        };
        match run_experiment(cfg, dir.as_deref(), opts) {
            Ok(o) => {
                if !o.manifest.passed {
                    row.status = "failed".into();
                }
                if let Some(a) = &o.cycles {
                    row.cycles = Some(a.cycles.len());
                    row.min_cycle_drop = a.cycles.iter().map(|c| c.lyapunov_drop).reduce(f64::min);
                    row.fitted_c = a.fitted_c;
                }
                row.max_lyapunov_delta = o.lyapunov.as_ref().map(|s| s.max_delta);
                row.conservation_residual = o.conservation.as_ref().map(|c| c.max_corrected());
            }
            Err(e) => {
                row.status = format!("error: {}", e.to_string().replace([',', '\n'], ";"));
            }
        }
        row
    });
    if let Some(dir) = out {
        let mut s = String::from(SWEEP_HEADER);
        s.push('\n');
        for r in &rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        write_atomic(dir, "sweep.csv", s.as_bytes())?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig::from_json(
            r#"{
              "schema_version": 1,
              "name": "small",
              "model": {"name": "cubic"},
              "kinetics": {"law": {"kind": "theta", "theta": 0.5}, "gamma": 0.5},
              "tracking": {"h": 0.02, "t_final": 1.0},
              "initial": {"u_star": [1.0], "base_right": "nucleation",
                          "jumps": [{"x": -0.5, "delta": [-0.01]}, {"x": 0.4, "delta": [-0.01]}]},
              "weights": {"zeta": {"zeta": 0.1}},
              "calibration": {"samples": 210},
              "diagnostics": {"conformance_samples": 12}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_rejects_unknown_fields_and_bad_values() {
        let good = serde_json::to_value(small_config()).unwrap();
        let mut bad = good.clone();
        bad["tracking"]["hh"] = 1.0.into();
        assert!(matches!(
            RunConfig::from_json(&bad.to_string()),
            Err(ExperimentError::Config(_))
        ));
        let mut bad = good.clone();
        bad["schema_version"] = 2.into();
        assert!(RunConfig::from_json(&bad.to_string()).is_err());
        let mut bad = good.clone();
        bad["tracking"]["h"] = (-1.0).into();
        assert!(RunConfig::from_json(&bad.to_string()).is_err());
        let mut bad = good;
        bad["kinetics"]["law"]["theta"] = 1.5.into();
        assert!(matches!(
            RunConfig::from_json(&bad.to_string()),
            Err(ExperimentError::Kinetic(KineticError::Invalid { hypothesis: "H1", .. }))
        ));
    }

    #[test]
    fn config_round_trips() {
        let cfg = small_config();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn small_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let o = run_experiment(&small_config(), Some(dir.path()), RunOptions::default()).unwrap();
        for a in &o.manifest.artifacts {
            assert!(dir.path().join(a).exists(), "{a}");
        }
        assert!(dir.path().join("MANIFEST.json").exists());
        let csv = fs::read_to_string(dir.path().join("functionals.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "t,V_L,V_M,V_R,W,Q,eps,lyapunov");
        assert_eq!(csv.lines().count(), o.diagnostics.len() + 1);
        let events = fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
        assert_eq!(events.lines().count(), o.classifications.len());
        let cons = o.conservation.unwrap();
        assert!(cons.passed(), "{cons:?}");
        assert!(o.manifest.check(C11).unwrap().passed);
        let tmp: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(tmp.is_empty());
    }

    #[test]
    fn runs_are_reproducible_across_execution_modes() {
        let cfg = small_config();
        let a = run_experiment(&cfg, None, RunOptions::default()).unwrap();
        let b = run_experiment(
            &cfg,
            None,
            RunOptions {
                exec: Execution::Sequential,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.manifest.checks, b.manifest.checks);
        assert_eq!(a.diagnostics, b.diagnostics);
        assert_eq!(a.calibration, b.calibration);
    }

    #[test]
    fn seed_override_changes_calibration_only() {
        let cfg = small_config();
        let opts = RunOptions {
            calibrate_only: true,
            ..Default::default()
        };
        let a = run_experiment(&cfg, None, opts).unwrap();
        let b = run_experiment(&cfg, None, RunOptions { seed: Some(7), ..opts }).unwrap();
        assert_eq!(b.manifest.seed, 7);
        assert_ne!(a.calibration.glimm_zero_product_residual.to_bits(), u64::MAX);
        assert_ne!(a.calibration.kinds, b.calibration.kinds);
        assert!(a.diagnostics.is_empty());
    }

    #[test]
    fn stability_check_rejects_large_perturbations() {
        let mut cfg = small_config();
        cfg.initial.jumps[0].delta = vec![-0.2];
        let err = run_experiment(&cfg, None, RunOptions::default()).unwrap_err();
        assert!(
            matches!(err, ExperimentError::Config(ref m) if m.contains("kappa_star")),
            "{err}"
        );
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let rows = sweep(
            &small_config(),
            &SweepGrid::default(),
            Some(dir.path()),
            RunOptions::default(),
        )
        .unwrap();
        assert!(rows.is_empty());
        let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(csv, format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn sweep_scales_perturbation_and_overrides() {
        let grid = SweepGrid {
            eps0: vec![0.01, 0.03],
            gamma: vec![0.0],
            ..Default::default()
        };
        let pts = grid.points();
        assert_eq!(pts.len(), 2);
        let cfg = sweep_config(&small_config(), pts[1], 1).unwrap();
        assert!((cfg.initial.perturbation_tv() - 0.03).abs() < 1e-15);
        assert_eq!(cfg.kinetics.gamma, Some(0.0));
        let rows = sweep(&small_config(), &grid, None, RunOptions::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.status != "error"), "{rows:?}");
    }
}
