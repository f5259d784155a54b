//! Kinetic function, its companion, the nucleation threshold and the
//! conformance checks (H1)-(H4).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveError, Curves, HugoniotTrace};
use crate::exec::{self, Execution};
use crate::model::{check_ball, mu, State};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("invalid kinetic function ({hypothesis}): {reason}")]
    Invalid { hypothesis: &'static str, reason: String },
    #[error("kinetic value {value} at {state:?} leaves the admissible band ({lo}, {hi}] (H1)")]
    Band {
        state: Vec<f64>,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("kinetic hypotheses failed: {}", failed_names(.0))]
    Hypotheses(Box<ConformanceReport>),
}

fn failed_names(r: &ConformanceReport) -> String {
    r.checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KineticLaw {
    /// `mu_flat = (1 - theta) mu_natural + theta mu_flat_zero`.
    Theta { theta: f64 },
    /// Piecewise-linear table `mu(u) -> mu_flat(u)`, sorted by the first entry.
    Table { points: Vec<[f64; 2]> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticFunction {
    pub law: KineticLaw,
    /// Nucleation weight; `None` disables nucleation.
    pub gamma: Option<f64>,
    pub measured_cff: Option<f64>,
}

impl KineticFunction {
    pub fn theta(theta: f64, gamma: Option<f64>) -> Result<Self, KineticError> {
        Self::new(KineticLaw::Theta { theta }, gamma)
    }

    pub fn new(law: KineticLaw, gamma: Option<f64>) -> Result<Self, KineticError> {
        match &law {
            KineticLaw::Theta { theta } => {
                if !(0.0..=1.0).contains(theta) {
                    return Err(KineticError::Invalid {
                        hypothesis: "H1",
                        reason: format!("theta = {theta} outside [0, 1]; mu_flat would leave the band"),
                    });
                }
            }
            KineticLaw::Table { points } => {
                if points.len() < 2 {
                    return Err(KineticError::Invalid {
                        hypothesis: "H2",
                        reason: "table needs at least two points".into(),
                    });
                }
                if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(KineticError::Invalid {
                        hypothesis: "H2",
                        reason: "table abscissae must increase strictly".into(),
                    });
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(KineticError::Invalid {
                        hypothesis: "H2",
                        reason: "table entries must be finite".into(),
                    });
                }
            }
        }
        if let Some(g) = gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(KineticError::Invalid {
                    hypothesis: "nucleation",
                    reason: format!("gamma = {g} outside [0, 1]"),
                });
            }
        }
        Ok(KineticFunction {
            law,
            gamma,
            measured_cff: None,
        })
    }

    pub fn gamma_or_zero(&self) -> f64 {
        self.gamma.unwrap_or(0.0)
    }

    /// `mu_flat` from the values of `mu`, `mu_natural` and `mu_flat_zero` at a state.
    pub fn mu_flat_from(&self, state: &State, m: f64, natural: f64, flat_zero: f64) -> Result<f64, KineticError> {
        match &self.law {
            KineticLaw::Theta { theta } => Ok((1.0 - theta) * natural + theta * flat_zero),
            KineticLaw::Table { points } => {
                let v = interpolate(points, m).ok_or_else(|| KineticError::Invalid {
                    hypothesis: "H2",
                    reason: format!("mu = {m} outside the table range"),
                })?;
                let (lo, hi) = (flat_zero.min(natural), flat_zero.max(natural));
                let inside = if m > 0.0 { v > lo && v <= hi } else { v >= lo && v < hi };
                if m != 0.0 && !inside {
                    return Err(KineticError::Band {
                        state: state.to_vec(),
                        value: v,
                        lo: flat_zero,
                        hi: natural,
                    });
                }
                Ok(v)
            }
        }
    }

    pub fn mu_nucleation_from(&self, natural: f64, sharp: f64) -> f64 {
        match self.gamma {
            Some(g) => (1.0 - g) * sharp + g * natural,
            None => sharp,
        }
    }
}

fn interpolate(points: &[[f64; 2]], x: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if x < first[0] || x > last[0] {
        return None;
    }
    let k = points.partition_point(|p| p[0] <= x).clamp(1, points.len() - 1);
    let (a, b) = (points[k - 1], points[k]);
    let t = (x - a[0]) / (b[0] - a[0]);
    Some(a[1] + t * (b[1] - a[1]))
}

/// All critical parameters of the CC family at one state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalMaps {
    pub mu: f64,
    pub natural: f64,
    pub minus_natural: Option<f64>,
    pub flat_zero: f64,
    pub sharp_zero: f64,
    pub flat: f64,
    pub sharp: f64,
    pub nucleation: f64,
    pub flat_state: State,
    pub sharp_state: State,
}

impl CriticalMaps {
    pub fn compute(curves: &Curves<'_>, kin: &KineticFunction, u: &State) -> Result<Self, KineticError> {
        let trace = curves.hugoniot_trace(u, curves.model.cc_index())?;
        Self::from_trace(&trace, kin)
    }

    pub fn from_trace(trace: &HugoniotTrace<'_>, kin: &KineticFunction) -> Result<Self, KineticError> {
        let u = trace.u_minus().clone();
        let m = trace.mu0();
        if m.abs() < 1e-14 {
            return Ok(CriticalMaps {
                mu: m,
                natural: m,
                minus_natural: Some(m),
                flat_zero: m,
                sharp_zero: m,
                flat: m,
                sharp: m,
                nucleation: m,
                flat_state: u.clone(),
                sharp_state: u,
            });
        }
        let z = trace.zero_maps()?;
        let flat = kin.mu_flat_from(&u, m, z.natural, z.flat_zero)?;
        let sharp = trace.companion(z.natural, flat)?;
        let flat_state = trace.point(flat)?.state;
        let sharp_state = trace.point(sharp)?.state;
        Ok(CriticalMaps {
            mu: m,
            natural: z.natural,
            minus_natural: z.minus_natural,
            flat_zero: z.flat_zero,
            sharp_zero: z.sharp_zero,
            flat,
            sharp,
            nucleation: kin.mu_nucleation_from(z.natural, sharp),
            flat_state,
            sharp_state,
        })
    }

    /// Nucleation gap `mu_sharp - mu_nucleation` in the orientation of `mu`.
    pub fn eta(&self) -> f64 {
        (self.sharp - self.nucleation) * self.mu.signum()
    }
}

pub fn mu_flat(curves: &Curves<'_>, kin: &KineticFunction, u: &State) -> Result<f64, KineticError> {
    Ok(CriticalMaps::compute(curves, kin, u)?.flat)
}

pub fn phi_flat(curves: &Curves<'_>, kin: &KineticFunction, u: &State) -> Result<State, KineticError> {
    Ok(CriticalMaps::compute(curves, kin, u)?.flat_state)
}

pub fn mu_sharp(curves: &Curves<'_>, kin: &KineticFunction, u: &State) -> Result<f64, KineticError> {
    Ok(CriticalMaps::compute(curves, kin, u)?.sharp)
}

pub fn phi_sharp(curves: &Curves<'_>, kin: &KineticFunction, u: &State) -> Result<State, KineticError> {
    Ok(CriticalMaps::compute(curves, kin, u)?.sharp_state)
}

pub fn mu_nucleation(curves: &Curves<'_>, kin: &KineticFunction, u: &State) -> Result<f64, KineticError> {
    Ok(CriticalMaps::compute(curves, kin, u)?.nucleation)
}

/// State on the Hugoniot locus of `u` with `mu = mu_flat_zero(u)`.
pub fn phi_flat_zero(curves: &Curves<'_>, u: &State) -> Result<State, CurveError> {
    let t = curves.hugoniot_trace(u, curves.model.cc_index())?;
    if t.mu0().abs() < 1e-14 {
        return Ok(u.clone());
    }
    let z = t.zero_maps()?;
    Ok(t.point(z.flat_zero)?.state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub samples: usize,
    pub checks: Vec<HypothesisCheck>,
    pub cff: f64,
    pub lipschitz: f64,
    pub injectivity: f64,
    pub b_flat: f64,
    pub h3_grid: H3Grid,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Grid used to certify the monotonicity clause of (H3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct H3Grid {
    pub arcs: usize,
    pub half_width: f64,
    pub points: usize,
}

impl Default for H3Grid {
    fn default() -> Self {
        H3Grid {
            arcs: 8,
            half_width: 0.25,
            points: 21,
        }
    }
}

struct Sample {
    u: State,
    maps: Option<CriticalMaps>,
    err: Option<String>,
    double_zero: Option<f64>,
    cff_ratio: Option<f64>,
}

/// Checks (H1)-(H4) on the given sample states.  Returns the report on
/// success and `KineticError::Hypotheses` carrying the report otherwise.
pub fn check_hypotheses(
    curves: &Curves<'_>,
    kin: &KineticFunction,
    samples: &[State],
    grid: H3Grid,
    exec: Execution,
) -> Result<ConformanceReport, KineticError> {
    let model = curves.model;
    let delta1 = model.delta1();
    for u in samples {
        check_ball(u, delta1).map_err(CurveError::from)?;
    }
    let evaluated: Vec<Sample> = exec::map(exec, samples, |u| {
        let mut s = Sample {
            u: u.clone(),
            maps: None,
            err: None,
            double_zero: None,
            cff_ratio: None,
        };
        match CriticalMaps::compute(curves, kin, u) {
            Ok(maps) => {
                if maps.mu.abs() >= 1e-3 {
                    if let Ok(z) = curves.zero_maps(&maps.flat_state) {
                        s.cff_ratio = Some(z.flat_zero.abs() / maps.mu.abs());
                    }
                    if let Ok(p) = phi_flat_zero(curves, u) {
                        if let Ok(z) = curves.zero_maps(&p) {
                            s.double_zero = Some((z.flat_zero - maps.mu).abs());
                        }
                    }
                }
                s.maps = Some(maps);
            }
            Err(e) => s.err = Some(e.to_string()),
        }
        s
    });

    let mut checks = Vec::new();

    // (H1) band membership.
    let mut h1 = HypothesisCheck {
        name: "H1".into(),
        passed: true,
        value: f64::INFINITY,
        witness: None,
        detail: "mu_flat_zero < mu_flat <= mu_natural (mirrored for mu < 0)".into(),
    };
    for s in &evaluated {
        match &s.maps {
            None => {
                h1.passed = false;
                h1.witness.get_or_insert(s.u.to_vec());
                h1.detail = s.err.clone().unwrap_or_default();
            }
            Some(c) if c.mu.abs() >= 1e-3 => {
                let sg = c.mu.signum();
                let margin = ((c.flat - c.flat_zero) * sg).min((c.natural - c.flat) * sg + 1e-12);
                let strict = (c.flat - c.flat_zero) * sg;
                if margin < h1.value {
                    h1.value = margin;
                }
                if strict <= 1e-12 || (c.natural - c.flat) * sg < -1e-12 {
                    if h1.passed {
                        h1.witness = Some(s.u.to_vec());
                    }
                    h1.passed = false;
                }
            }
            _ => {}
        }
    }
    checks.push(h1);

    // (H2) Lipschitz bound and injectivity on neighbouring samples.
    let mut ordered: Vec<&Sample> = evaluated.iter().filter(|s| s.maps.is_some()).collect();
    ordered.sort_by(|a, b| {
        let ma = a.maps.as_ref().map(|m| m.mu).unwrap_or(0.0);
        let mb = b.maps.as_ref().map(|m| m.mu).unwrap_or(0.0);
        ma.total_cmp(&mb)
    });
    let mut lipschitz: f64 = 0.0;
    let mut injectivity = f64::INFINITY;
    let mut inj_witness = None;
    for w in ordered.windows(2) {
        let (a, b) = (w[0], w[1]);
        let du = a.u.distance(&b.u);
        if du < 1e-9 {
            continue;
        }
        let (ma, mb) = (a.maps.as_ref().unwrap(), b.maps.as_ref().unwrap());
        let dphi = ma.flat_state.distance(&mb.flat_state);
        let ratio = dphi / du;
        lipschitz = lipschitz.max(ratio);
        if ratio < injectivity {
            injectivity = ratio;
            inj_witness = Some(a.u.to_vec());
        }
    }
    let b_flat = evaluated
        .iter()
        .filter_map(|s| s.maps.as_ref())
        .filter(|c| c.mu.abs() >= 1e-3)
        .map(|c| c.flat.abs() / c.mu.abs())
        .fold(0.0, f64::max);
    checks.push(HypothesisCheck {
        name: "H2".into(),
        passed: lipschitz.is_finite() && lipschitz < 1e6 && injectivity > 1e-6,
        value: lipschitz,
        witness: if injectivity > 1e-6 { None } else { inj_witness },
        detail: format!("Lipschitz estimate {lipschitz:.6}, injectivity ratio {injectivity:.6}, B_flat {b_flat:.6}"),
    });

    // (H3) identity on the inflection manifold and monotone decrease along
    // integral curves.
    let arcs: Vec<&Sample> = evaluated.iter().take(grid.arcs).collect();
    let h3: Vec<(f64, Option<Vec<f64>>)> = exec::map(exec, &arcs, |s| h3_arc(curves, kin, &s.u, grid));
    let mut identity_res: f64 = 0.0;
    let mut h3_passed = true;
    let mut h3_witness = None;
    for (res, wit) in h3 {
        identity_res = identity_res.max(res);
        if wit.is_some() && h3_passed {
            h3_passed = false;
            h3_witness = wit;
        }
    }
    if identity_res > 1e-10 {
        h3_passed = false;
    }
    checks.push(HypothesisCheck {
        name: "H3".into(),
        passed: h3_passed,
        value: identity_res,
        witness: h3_witness,
        detail: format!(
            "identity residual on the manifold; monotonicity on {} arcs of half-width {} with {} points",
            arcs.len(),
            grid.half_width,
            grid.points
        ),
    });

    // (H4) contraction of the composition Phi_flat_zero o Phi_flat.
    let mut cff: f64 = 0.0;
    let mut cff_witness = None;
    for s in &evaluated {
        if let Some(r) = s.cff_ratio {
            if r > cff {
                cff = r;
                cff_witness = Some(s.u.to_vec());
            }
        }
    }
    checks.push(HypothesisCheck {
        name: "H4".into(),
        passed: cff < 1.0,
        value: cff,
        witness: if cff < 1.0 { None } else { cff_witness },
        detail: "max |mu(Phi_flat_zero(Phi_flat(u)))| / |mu(u)|".into(),
    });

    let involution = evaluated.iter().filter_map(|s| s.double_zero).fold(0.0, f64::max);
    checks.push(HypothesisCheck {
        name: "involution".into(),
        passed: involution <= 1e-10,
        value: involution,
        witness: None,
        detail: "max |mu(Phi_flat_zero(Phi_flat_zero(u))) - mu(u)|".into(),
    });

    let report = ConformanceReport {
        samples: samples.len(),
        checks,
        cff,
        lipschitz,
        injectivity,
        b_flat,
        h3_grid: grid,
    };
    if report.passed() {
        Ok(report)
    } else {
        Err(KineticError::Hypotheses(Box::new(report)))
    }
}

fn h3_arc(curves: &Curves<'_>, kin: &KineticFunction, u: &State, grid: H3Grid) -> (f64, Option<Vec<f64>>) {
    let i = curves.model.cc_index();
    let delta1 = curves.model.delta1();
    let m0 = mu(curves.model, u);
    let mut identity = 0.0;
    if let Ok(p) = curves.rarefaction_point(u, i, 0.0) {
        if let Ok(c) = CriticalMaps::compute(curves, kin, &p.state) {
            identity = c.flat.abs() + c.flat_state.distance(&p.state);
        }
    }
    let n = grid.points.max(2);
    let mut prev: Option<f64> = None;
    for k in 0..n {
        let s = m0 - grid.half_width + 2.0 * grid.half_width * k as f64 / (n - 1) as f64;
        let Ok(p) = curves.rarefaction_point(u, i, s) else {
            prev = None;
            continue;
        };
        if check_ball(&p.state, delta1).is_err() {
            prev = None;
            continue;
        }
        let Ok(c) = CriticalMaps::compute(curves, kin, &p.state) else {
            prev = None;
            continue;
        };
        if let Some(q) = prev {
            if c.flat >= q {
                return (identity, Some(p.state.to_vec()));
            }
        }
        prev = Some(c.flat);
    }
    (identity, None)
}

/// Sample states for the conformance checks: a deterministic grid of the
/// designated family's parameter inside the ball.
pub fn default_samples(curves: &Curves<'_>, n: usize) -> Vec<State> {
    let model = curves.model;
    let r = model.delta1();
    let dim = model.dim();
    let reach = if dim == 1 { r } else { 0.6 * r / 2.0 };
    (0..n)
        .map(|k| {
            let t = -1.0 + 2.0 * (k as f64 + 0.5) / n as f64;
            let mut v = vec![0.0; dim];
            if dim == 1 {
                v[0] = t * reach * 0.999;
            } else {
                let base = State::new(vec![0.0; dim]);
                let m = t * reach;
                if let Ok(p) = curves.rarefaction_point(&base, model.cc_index(), m) {
                    return p.state;
                }
                v[dim - 1] = m;
            }
            State::new(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Cubic;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s(u: f64) -> State {
        State::scalar(u)
    }

    #[test]
    fn cubic_theta_half() {
        let m = Cubic::default();
        let c = Curves::new(&m);
        let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        let maps = CriticalMaps::compute(&c, &k, &s(1.0)).unwrap();
        assert_abs_diff_eq!(maps.flat, -0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(maps.sharp, -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(maps.nucleation, -0.375, epsilon = 1e-12);
        assert_abs_diff_eq!(maps.eta(), 0.125, epsilon = 1e-12);
        let maps = CriticalMaps::compute(&c, &k, &s(0.4)).unwrap();
        assert_abs_diff_eq!(maps.flat, -0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(maps.sharp, -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(
            c.shock_speed(&s(1.0), &s(-0.75)).unwrap(),
            c.shock_speed(&s(1.0), &s(-0.25)).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn no_nucleation_closes_the_gap() {
        let m = Cubic::default();
        let c = Curves::new(&m);
        for g in [None, Some(0.0)] {
            let k = KineticFunction::theta(0.5, g).unwrap();
            let maps = CriticalMaps::compute(&c, &k, &s(1.0)).unwrap();
            assert_abs_diff_eq!(maps.nucleation, -0.25, epsilon = 1e-12);
            assert_abs_diff_eq!(maps.eta(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn mirrored_branch() {
        let m = Cubic::default();
        let c = Curves::new(&m);
        let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        let maps = CriticalMaps::compute(&c, &k, &s(-1.0)).unwrap();
        assert_abs_diff_eq!(maps.flat, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(maps.sharp, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(maps.eta(), 0.125, epsilon = 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let e = KineticFunction::theta(1.2, None).unwrap_err();
        assert!(e.to_string().contains("H1"));
        assert!(KineticFunction::theta(0.5, Some(-0.1)).is_err());
        assert!(KineticFunction::new(
            KineticLaw::Table {
                points: vec![[0.0, 0.0]]
            },
            None
        )
        .is_err());
    }

    #[test]
    fn conformance_cubic() {
        let m = Cubic::default();
        let c = Curves::new(&m);
        let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        let samples = default_samples(&c, 200);
        let rep = check_hypotheses(&c, &k, &samples, H3Grid::default(), Execution::Parallel).unwrap();
        assert_abs_diff_eq!(rep.cff, 0.75, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.b_flat, 0.75, epsilon = 1e-10);
        assert!(rep.check("H3").unwrap().value < 1e-12);
    }

    #[test]
    fn theta_one_fails_h1() {
        let m = Cubic::default();
        let c = Curves::new(&m);
        let k = KineticFunction::theta(1.0, None).unwrap();
        let samples = default_samples(&c, 40);
        match check_hypotheses(&c, &k, &samples, H3Grid::default(), Execution::Sequential) {
            Err(KineticError::Hypotheses(rep)) => {
                let h1 = rep.check("H1").unwrap();
                assert!(!h1.passed);
                assert!(h1.witness.is_some());
            }
            other => panic!("expected H1 failure, got {other:?}"),
        }
    }

    #[test]
    fn table_law_matches_theta_law() {
        let m = Cubic::default();
        let c = Curves::new(&m);
        let table = KineticFunction::new(
            KineticLaw::Table {
                points: vec![[-2.0, 1.5], [2.0, -1.5]],
            },
            Some(0.5),
        )
        .unwrap();
        let theta = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        for u in [-1.2, -0.3, 0.4, 1.1] {
            let a = CriticalMaps::compute(&c, &table, &s(u)).unwrap();
            let b = CriticalMaps::compute(&c, &theta, &s(u)).unwrap();
            assert_abs_diff_eq!(a.flat, b.flat, epsilon = 1e-12);
            assert_abs_diff_eq!(a.sharp, b.sharp, epsilon = 1e-12);
        }
        let bad = KineticFunction::new(
            KineticLaw::Table {
                points: vec![[-2.0, 0.0], [2.0, 0.0]],
            },
            None,
        )
        .unwrap();
        assert!(matches!(
            CriticalMaps::compute(&c, &bad, &s(1.0)),
            Err(KineticError::Band { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn orderings_hold(u in 1e-3f64..1.5, theta in 0.05f64..0.95, gamma in 0.0f64..1.0) {
            let m = Cubic::default();
            let c = Curves::new(&m);
            let k = KineticFunction::theta(theta, Some(gamma)).unwrap();
            let maps = CriticalMaps::compute(&c, &k, &s(u)).unwrap();
            prop_assert!(maps.flat_zero < maps.flat && maps.flat <= maps.natural);
            prop_assert!(maps.natural <= maps.nucleation + 1e-15 && maps.nucleation <= maps.sharp + 1e-15);
            prop_assert!(maps.sharp < maps.sharp_zero);
            prop_assert!(maps.eta() >= -1e-15);
            // Closed forms: mu_flat = -(1 + theta) u / 2, mu_sharp = -u - mu_flat.
            prop_assert!((maps.flat + 0.5 * (1.0 + theta) * u).abs() < 1e-12);
            prop_assert!((maps.sharp + u - 0.5 * (1.0 + theta) * u).abs() < 1e-12);
        }
    }
}
