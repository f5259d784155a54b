//! Generalized wave strength, weighted variation functionals, interaction
//! potential, event classification, Glimm residuals, calibration of the
//! interaction constants and splitting-merging cycle audits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curves::{CurveError, Curves, ShockClass};
use crate::exec::{map_range, Execution};
use crate::kinetics::{mu_sharp, CriticalMaps, KineticError};
use crate::model::{check_ball, State};
use crate::riemann::{Branch, RiemannError, RiemannSolver, Wave, WaveKind, WaveSpeed};
use crate::tracking::{InteractionEvent, Snapshot, StrongIds};

/// `mu` folded through the zero-dissipation involution on the negative side.
pub fn folded_mu(curves: &Curves<'_>, u: &State) -> Result<f64, CurveError> {
    let i = curves.model.cc_index();
    let m = curves.model.mu_family(i, u);
    if m >= 0.0 || m.abs() < 1e-14 {
        return Ok(m);
    }
    curves.mu_flat_zero(u)
}

/// Signed generalized strength of a `family` wave from `a` to `b`.
pub fn wave_strength(curves: &Curves<'_>, a: &State, b: &State, family: usize) -> Result<f64, CurveError> {
    if a == b {
        return Ok(0.0);
    }
    let model = curves.model;
    if family != model.cc_index() {
        return Ok(model.mu_family(family, b) - model.mu_family(family, a));
    }
    Ok(folded_mu(curves, b)? - folded_mu(curves, a)?)
}

/// `|sigma| / |mu(b) - mu(a)|` for a wave of the designated family.
pub fn norm_ratio(curves: &Curves<'_>, w: &Wave) -> Result<Option<f64>, CurveError> {
    let i = curves.model.cc_index();
    let dm = curves.model.mu_family(i, &w.right) - curves.model.mu_family(i, &w.left);
    if dm.abs() < 1e-14 {
        return Ok(None);
    }
    Ok(Some(wave_strength(curves, &w.left, &w.right, i)?.abs() / dm.abs()))
}

/// The nine region/family weights and the weight `k` of the interaction potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub k_l: f64,
    pub k_m: f64,
    pub k_r: f64,
    pub k_l_less: f64,
    pub k_m_less: f64,
    pub k_r_less: f64,
    pub k_l_grt: f64,
    pub k_m_grt: f64,
    pub k_r_grt: f64,
    pub k: f64,
    pub zeta: f64,
}

impl Weights {
    /// The explicit choice parametrized by `zeta` and the constant `cff`.
    pub fn from_zeta(cff: f64, zeta: f64, k: f64) -> Self {
        Weights {
            k_l: 1.0 + cff + zeta,
            k_m: 1.0,
            k_r: 1.0,
            k_l_less: 1.0 - zeta,
            k_m_less: 1.0,
            k_r_less: 1.0 + zeta,
            k_l_grt: 1.0 + zeta,
            k_m_grt: 1.0,
            k_r_grt: 1.0 - zeta,
            k,
            zeta,
        }
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }
}

/// Identity of a wave with respect to the tracked strong waves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Weak,
    Y,
    Z,
}

/// What the functionals need to know about one wave, in left-to-right order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Item {
    pub family: usize,
    pub kind: WaveKind,
    pub speed: f64,
    pub strength: f64,
    pub role: Role,
}

fn role_of(id: u64, strong: StrongIds) -> Role {
    if strong.y == Some(id) {
        Role::Y
    } else if strong.z == Some(id) {
        Role::Z
    } else {
        Role::Weak
    }
}

fn wave_speed(s: WaveSpeed) -> f64 {
    match s {
        WaveSpeed::Single(v) => v,
        WaveSpeed::Fan(a, b) => 0.5 * (a + b),
    }
}

impl Item {
    pub fn from_wave(w: &Wave, strong: StrongIds) -> Self {
        Item {
            family: w.family,
            kind: w.kind,
            speed: wave_speed(w.speed),
            strength: w.strength,
            role: role_of(w.id, strong),
        }
    }
}

pub fn items_from_snapshot(s: &Snapshot) -> Vec<Item> {
    let strong = StrongIds { y: s.y, z: s.z };
    s.fronts
        .iter()
        .map(|f| Item {
            family: f.family,
            kind: f.kind,
            speed: f.speed,
            strength: f.strength,
            role: role_of(f.id, strong),
        })
        .collect()
}

pub fn items_from_waves(ws: &[Wave], strong: StrongIds) -> Vec<Item> {
    ws.iter().map(|w| Item::from_wave(w, strong)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub v_l: f64,
    pub v_m: f64,
    pub v_r: f64,
    pub w: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    L,
    M,
    R,
}

/// `V_L`, `V_M`, `V_R` and `W` over the weak waves; `family` is the
/// designated concave-convex index.
pub fn functionals(items: &[Item], weights: &Weights, family: usize) -> Functionals {
    let y = items.iter().position(|it| it.role == Role::Y);
    let z = items.iter().position(|it| it.role == Role::Z).or(y);
    // Sums of |sigma| per region: (family i, families below, families above).
    let mut acc = [[0.0f64; 3]; 3];
    for (k, it) in items.iter().enumerate() {
        if it.role != Role::Weak {
            continue;
        }
        let region = match (y, z) {
            (None, _) => Region::L,
            (Some(y), _) if k < y => Region::L,
            (_, Some(z)) if k < z => Region::M,
            _ => Region::R,
        };
        let slot = match it.family.cmp(&family) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => 1,
            std::cmp::Ordering::Greater => 2,
        };
        let r = match region {
            Region::L => 0,
            Region::M => 1,
            Region::R => 2,
        };
        acc[r][slot] += it.strength.abs();
    }
    let w = weights;
    let v_l = w.k_l * acc[0][0] + w.k_l_less * acc[0][1] + w.k_l_grt * acc[0][2];
    let v_m = w.k_m * acc[1][0] + w.k_m_less * acc[1][1] + w.k_m_grt * acc[1][2];
    let v_r = w.k_r * acc[2][0] + w.k_r_less * acc[2][1] + w.k_r_grt * acc[2][2];
    Functionals {
        v_l,
        v_m,
        v_r,
        w: v_l + v_m + v_r,
    }
}

/// Approaching pair with `a` on the left of `b`.
pub fn approaching(a: &Item, b: &Item) -> bool {
    a.family > b.family || (a.family == b.family && (a.kind.is_shock() || b.kind.is_shock()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    /// Pairs with both families different from the designated one.
    pub q_other: f64,
    /// Speed-weighted pairs involving the designated family.
    pub q_family: f64,
    pub q: f64,
}

/// Quadratic interaction potential.  With `weak_only` strong waves are left
/// out of the speed-weighted sum.
pub fn interaction_potential(items: &[Item], family: usize, weak_only: bool) -> Potential {
    let mut q_other = 0.0;
    let mut q_family = 0.0;
    for (k, a) in items.iter().enumerate() {
        if a.strength == 0.0 {
            continue;
        }
        for b in &items[k + 1..] {
            if !approaching(a, b) {
                continue;
            }
            let p = (a.strength * b.strength).abs();
            if a.family != family && b.family != family {
                q_other += p;
            } else {
                if weak_only && (a.role != Role::Weak || b.role != Role::Weak) {
                    continue;
                }
                q_family += (a.speed - b.speed).max(0.0) * p;
            }
        }
    }
    Potential {
        q_other,
        q_family,
        q: q_other + q_family,
    }
}

/// Total strength of the weak waves.
pub fn perturbation(items: &[Item]) -> f64 {
    items
        .iter()
        .filter(|it| it.role == Role::Weak)
        .map(|it| it.strength.abs())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrongWaveState {
    pub u_l: Vec<f64>,
    pub u_m: Option<Vec<f64>>,
    pub u_r: Vec<f64>,
    pub strengths: Vec<f64>,
    pub speeds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSnapshot {
    pub t: f64,
    pub v_l: f64,
    pub v_m: f64,
    pub v_r: f64,
    pub w: f64,
    pub q: f64,
    pub eps: f64,
    pub lyapunov: f64,
    pub fronts: usize,
    pub strong: Option<StrongWaveState>,
}

pub fn diagnose(s: &Snapshot, family: usize, weights: &Weights, q_weak_only: bool) -> DiagnosticsSnapshot {
    let items = items_from_snapshot(s);
    let f = functionals(&items, weights, family);
    let q = interaction_potential(&items, family, q_weak_only).q;
    let y = s.y.and_then(|id| s.fronts.iter().find(|r| r.id == id));
    let z = s.z.and_then(|id| s.fronts.iter().find(|r| r.id == id));
    let strong = y.map(|y| match z {
        Some(z) => StrongWaveState {
            u_l: y.left.clone(),
            u_m: Some(y.right.clone()),
            u_r: z.right.clone(),
            strengths: vec![y.strength, z.strength],
            speeds: vec![y.speed, z.speed],
        },
        None => StrongWaveState {
            u_l: y.left.clone(),
            u_m: None,
            u_r: y.right.clone(),
            strengths: vec![y.strength],
            speeds: vec![y.speed],
        },
    });
    DiagnosticsSnapshot {
        t: s.t,
        v_l: f.v_l,
        v_m: f.v_m,
        v_r: f.v_r,
        w: f.w,
        q,
        eps: perturbation(&items),
        lyapunov: f.w + weights.k * q,
        fronts: s.fronts.len(),
        strong,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    Case6,
    Case7,
    WeakWeak,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Names of the splitting interactions of a weak wave with a classical shock.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitPattern {
    #[serde(rename = "RC-3")]
    Rc3,
    #[serde(rename = "CC-3")]
    Cc3,
    #[serde(rename = "CR-4")]
    Cr4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongKind {
    Nonclassical,
    ClassicalDown,
    ClassicalUp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub index: usize,
    pub time: f64,
    pub tag: CaseTag,
    pub side: Option<Side>,
    pub pattern: Option<SplitPattern>,
    pub strong: Option<StrongKind>,
    /// Label of the variation estimate that applies to the event.
    pub estimate: Option<String>,
    /// Total strength of the incoming weak waves.
    pub weak_strength: f64,
    pub dump: Option<String>,
}

fn dump_event(ev: &InteractionEvent) -> String {
    let fmt = |ws: &[Wave]| {
        ws.iter()
            .map(|w| format!("{}:{:?}#{}({:.6})", w.family, w.kind, w.id, w.strength))
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "in [{}] out [{}] strong {:?} -> {:?}",
        fmt(&ev.incoming),
        fmt(&ev.outgoing),
        ev.strong_before,
        ev.strong_after
    )
}

/// Pattern-matches an interaction against the cases of the
/// splitting-merging analysis.
pub fn classify_case(ev: &InteractionEvent, family: usize) -> Classification {
    let before = ev.strong_before;
    let strong_idx: Vec<usize> = ev
        .incoming
        .iter()
        .enumerate()
        .filter(|(_, w)| before.y == Some(w.id) || before.z == Some(w.id))
        .map(|(k, _)| k)
        .collect();
    let weak_idx: Vec<usize> = (0..ev.incoming.len()).filter(|k| !strong_idx.contains(k)).collect();
    let weak_strength = weak_idx.iter().map(|&k| ev.incoming[k].strength.abs()).sum();
    let mut out = Classification {
        index: ev.index,
        time: ev.time,
        tag: CaseTag::Other,
        side: None,
        pattern: None,
        strong: None,
        estimate: None,
        weak_strength,
        dump: None,
    };
    let other = |mut c: Classification| {
        c.tag = CaseTag::Other;
        c.dump = Some(dump_event(ev));
        c
    };
    if strong_idx.is_empty() {
        out.tag = CaseTag::WeakWeak;
        return out;
    }
    if strong_idx.len() == 2 {
        let has_n = strong_idx
            .iter()
            .any(|&k| ev.incoming[k].kind == WaveKind::NonclassicalShock);
        if has_n && weak_idx.is_empty() && ev.is_merge() {
            out.tag = CaseTag::Case2;
            out.strong = Some(StrongKind::Nonclassical);
            out.estimate = Some("merge".into());
            return out;
        }
        return other(out);
    }
    if weak_idx.len() != 1 {
        return other(out);
    }
    let (s, a) = (strong_idx[0], weak_idx[0]);
    let sw = &ev.incoming[s];
    let aw = &ev.incoming[a];
    let side = if a < s { Side::Left } else { Side::Right };
    out.side = Some(side);
    let same = aw.family == family;
    let left = side == Side::Left;
    if sw.kind == WaveKind::NonclassicalShock {
        out.strong = Some(StrongKind::Nonclassical);
        if ev.is_merge() {
            return other(out);
        }
        if same {
            out.tag = CaseTag::Case4;
            out.estimate = left.then(|| "nonclassical-same-left".into());
        } else {
            out.tag = CaseTag::Case6;
            out.estimate = Some(
                if left {
                    "nonclassical-other-left"
                } else {
                    "nonclassical-other-right"
                }
                .into(),
            );
        }
        return out;
    }
    if sw.family != family || !sw.kind.is_shock() {
        return other(out);
    }
    let up = before.z == Some(sw.id);
    out.strong = Some(if up {
        StrongKind::ClassicalUp
    } else {
        StrongKind::ClassicalDown
    });
    if ev.is_split() {
        if up {
            return other(out);
        }
        if same {
            out.tag = CaseTag::Case1;
            out.pattern = Some(match (left, aw.kind.is_shock()) {
                (false, _) => SplitPattern::Cr4,
                (true, true) => SplitPattern::Cc3,
                (true, false) => SplitPattern::Rc3,
            });
            out.estimate = Some(if left { "split-left" } else { "split-right" }.into());
        } else {
            out.tag = CaseTag::Case5;
            out.estimate = Some(if left { "split-other-left" } else { "split-other-right" }.into());
        }
        return out;
    }
    if same {
        out.tag = CaseTag::Case3;
        out.estimate = Some(
            match (up, left) {
                (false, true) => "down-same-left",
                (false, false) => "down-same-right",
                (true, true) => "up-same-left",
                (true, false) => "up-same-right",
            }
            .into(),
        );
    } else {
        out.tag = CaseTag::Case7;
        out.estimate = Some(
            match (up, left) {
                (false, true) => "down-other-left",
                (false, false) => "down-other-right",
                (true, true) => "up-other-left",
                (true, false) => "up-other-right",
            }
            .into(),
        );
    }
    out
}

/// Leading linear term of the named variation estimate for an incoming
/// weak wave of strength `a`.
pub fn linear_bound(estimate: &str, w: &Weights, cff: f64, a: f64) -> Option<f64> {
    let c = match estimate {
        "split-right" | "down-same-right" | "up-same-right" => -w.k_r,
        "split-left" | "down-same-left" => -w.k_l,
        "up-same-left" => -w.k_m,
        "merge" => 0.0,
        "nonclassical-same-left" => -w.k_l + cff * w.k_m,
        "split-other-left" | "down-other-left" => -w.k_l_grt + w.k_r_grt,
        "split-other-right" | "down-other-right" => -w.k_r_less + w.k_l_less,
        "nonclassical-other-left" => -w.k_l_grt + w.k_m_grt,
        "nonclassical-other-right" => -w.k_m_less + w.k_l_less,
        "up-other-left" => -w.k_m_grt + w.k_r_grt,
        "up-other-right" => -w.k_r_less + w.k_m_less,
        _ => return None,
    };
    Some(c * a)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GlimmResidual {
    pub residual: f64,
    pub approaching_product: f64,
}

/// `sum_k |gamma_k - alpha_k - beta_k|` and the approaching product of the
/// incoming waves.
pub fn glimm_residual(incoming: &[Wave], outgoing: &[Wave], families: usize) -> GlimmResidual {
    let mut bal = vec![0.0; families];
    for w in outgoing {
        bal[w.family] += w.strength;
    }
    for w in incoming {
        bal[w.family] -= w.strength;
    }
    let items = items_from_waves(incoming, StrongIds::default());
    let mut product = 0.0;
    for (k, a) in items.iter().enumerate() {
        for b in &items[k + 1..] {
            if approaching(a, b) {
                product += (a.strength * b.strength).abs();
            }
        }
    }
    GlimmResidual {
        residual: bal.iter().map(|x| x.abs()).sum(),
        approaching_product: product,
    }
}

pub fn event_glimm_residual(ev: &InteractionEvent, families: usize) -> GlimmResidual {
    glimm_residual(&ev.incoming, &ev.outgoing, families)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPoint {
    pub index: usize,
    pub t: f64,
    pub value: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub flagged: bool,
    pub tag: CaseTag,
    pub estimate: Option<String>,
    pub linear_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub initial: f64,
    pub last: f64,
    pub points: Vec<LyapunovPoint>,
    pub max_delta: f64,
    pub max_relative_delta: f64,
    pub flagged: usize,
}

impl LyapunovSeries {
    pub fn monotone(&self) -> bool {
        self.flagged == 0 && self.last <= self.initial * (1.0 + 1e-12) + 1e-15
    }
}

/// Per-event changes in `W + K Q`.  `diags[0]` is the initial state and
/// `diags[k + 1]` follows event `k`.
pub fn lyapunov_series(
    diags: &[DiagnosticsSnapshot],
    classes: &[Classification],
    weights: &Weights,
    cff: f64,
    rel_tol: f64,
) -> LyapunovSeries {
    let initial = diags.first().map_or(0.0, |d| d.lyapunov);
    let mut points = Vec::with_capacity(classes.len());
    let mut max_delta = f64::NEG_INFINITY;
    let mut max_rel = f64::NEG_INFINITY;
    let mut flagged = 0;
    for (k, c) in classes.iter().enumerate() {
        let (Some(pre), Some(post)) = (diags.get(k), diags.get(k + 1)) else {
            break;
        };
        let delta = post.lyapunov - pre.lyapunov;
        let tol = rel_tol * pre.lyapunov.abs();
        let flag = delta > tol;
        flagged += usize::from(flag);
        max_delta = max_delta.max(delta);
        if pre.lyapunov > 0.0 {
            max_rel = max_rel.max(delta / pre.lyapunov);
        }
        points.push(LyapunovPoint {
            index: c.index,
            t: post.t,
            value: post.lyapunov,
            delta,
            tolerance: tol,
            flagged: flag,
            tag: c.tag,
            estimate: c.estimate.clone(),
            linear_bound: c
                .estimate
                .as_deref()
                .and_then(|l| linear_bound(l, weights, cff, c.weak_strength)),
        });
    }
    LyapunovSeries {
        initial,
        last: diags.last().map_or(initial, |d| d.lyapunov),
        points,
        max_delta: if max_delta.is_finite() { max_delta } else { 0.0 },
        max_relative_delta: if max_rel.is_finite() { max_rel } else { 0.0 },
        flagged,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks the weight constraints, the bound on `K` and the perturbation
/// bounds instantiated with the calibrated constants.
pub fn validate_constraints(w: &Weights, cff: f64, cal: &Calibration, eps_max: f64) -> ConstraintReport {
    let check = |name: &str, margin: f64, detail: String| ConstraintCheck {
        name: name.into(),
        passed: margin > 0.0,
        margin,
        detail,
    };
    let mut checks = vec![
        check(
            "W1",
            w.k_l - (1.0 + cff) * w.k_m,
            format!("k_l = {} against (1 + {cff}) k_m = {}", w.k_l, (1.0 + cff) * w.k_m),
        ),
        check(
            "W2",
            (w.k_m_less - w.k_l_less).min(w.k_r_less - w.k_m_less),
            format!("{} < {} < {}", w.k_l_less, w.k_m_less, w.k_r_less),
        ),
        check(
            "W3",
            (w.k_l_grt - w.k_m_grt).min(w.k_m_grt - w.k_r_grt),
            format!("{} > {} > {}", w.k_l_grt, w.k_m_grt, w.k_r_grt),
        ),
        check(
            "zeta",
            w.zeta.min(0.5 - w.zeta),
            format!("zeta = {} must lie in (0, 0.5)", w.zeta),
        ),
    ];
    let mut q1 = match cal.k_floor {
        Some(floor) => check(
            "Q1",
            w.k - floor,
            format!("K = {} against floor {floor} (witness {:?})", w.k, cal.witness),
        ),
        None => check("Q1", f64::NEG_INFINITY, "no interaction constant measured".into()),
    };
    // K equal to the floor satisfies the bound.
    q1.passed = q1.margin >= 0.0;
    checks.push(q1);
    let p1 = cal.p1_bound.map_or(f64::NEG_INFINITY, |b| b - eps_max);
    checks.push(check("P1", p1, format!("eps = {eps_max} against {:?}", cal.p1_bound)));
    let p2 = cal.p2_bound.map_or(f64::INFINITY, |b| b - eps_max);
    checks.push(check("P2", p2, format!("eps = {eps_max} against {:?}", cal.p2_bound)));
    ConstraintReport { checks }
}

/// Kinds of calibration samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    WeakWeak,
    ClassicalDownLeft,
    ClassicalDownRight,
    NonclassicalLeft,
    NonclassicalRight,
    ClassicalUpLeft,
    ClassicalUpRight,
}

impl SampleKind {
    pub const ALL: [SampleKind; 7] = [
        SampleKind::WeakWeak,
        SampleKind::ClassicalDownLeft,
        SampleKind::ClassicalDownRight,
        SampleKind::NonclassicalLeft,
        SampleKind::NonclassicalRight,
        SampleKind::ClassicalUpLeft,
        SampleKind::ClassicalUpRight,
    ];

    fn strong(self) -> Option<StrongKind> {
        match self {
            SampleKind::WeakWeak => None,
            SampleKind::ClassicalDownLeft | SampleKind::ClassicalDownRight => Some(StrongKind::ClassicalDown),
            SampleKind::NonclassicalLeft | SampleKind::NonclassicalRight => Some(StrongKind::Nonclassical),
            SampleKind::ClassicalUpLeft | SampleKind::ClassicalUpRight => Some(StrongKind::ClassicalUp),
        }
    }

    fn weak_on_left(self) -> bool {
        matches!(
            self,
            SampleKind::WeakWeak
                | SampleKind::ClassicalDownLeft
                | SampleKind::NonclassicalLeft
                | SampleKind::ClassicalUpLeft
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub samples: usize,
    pub scales: Vec<f64>,
    pub seed: u64,
    pub attempts: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            samples: 10_000,
            scales: vec![0.005, 0.02, 0.05],
            seed: 20_240_601,
            attempts: 20,
        }
    }
}

/// One binary interaction: incoming waves, outgoing fan and derived numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySample {
    pub kind: SampleKind,
    pub scale: f64,
    pub incoming: Vec<Wave>,
    pub outgoing: Vec<Wave>,
    pub weak: f64,
    pub strong: f64,
    pub dq: f64,
    pub glimm: GlimmResidual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub kind: SampleKind,
    pub accepted: usize,
    pub rejected: usize,
    /// Extremes of `|[Q]| / (|alpha| |S|)` over strong samples.
    pub min_constant: Option<f64>,
    pub max_constant: Option<f64>,
    pub mean_strong: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub seed: u64,
    pub samples: usize,
    pub scales: Vec<f64>,
    pub kinds: Vec<KindStats>,
    /// Fitted Glimm constant `max residual / approaching product`.
    pub glimm_constant: Option<f64>,
    pub glimm_zero_product_residual: f64,
    pub min_constant: Option<f64>,
    pub witness: Option<SampleKind>,
    pub k_floor: Option<f64>,
    pub k: Option<f64>,
    pub p1_bound: Option<f64>,
    pub p2_bound: Option<f64>,
    pub pattern_strengths: Vec<f64>,
}

fn single_wave(frag: Vec<Wave>) -> Option<Wave> {
    if frag.len() == 1 {
        frag.into_iter().next()
    } else {
        None
    }
}

/// Replaces a rarefaction by one piece propagating at the family speed of
/// its endpoints.
fn as_piece(curves: &Curves<'_>, w: Wave) -> Result<Wave, CurveError> {
    if w.kind != WaveKind::Rarefaction {
        return Ok(w);
    }
    let s = curves.piece_speed(&w.left, &w.right, w.family)?;
    Ok(Wave {
        kind: WaveKind::RarefactionShockPiece,
        speed: WaveSpeed::Single(s),
        ..w
    })
}

fn random_weak(
    solver: &RiemannSolver<'_>,
    rng: &mut ChaCha8Rng,
    u: &State,
    scale: f64,
    family: Option<usize>,
) -> Result<Option<Wave>, RiemannError> {
    let model = solver.curves.model;
    let j = family.unwrap_or_else(|| rng.gen_range(0..model.dim()));
    let mut dm = rng.gen_range(0.05 * scale..=scale);
    if rng.gen_bool(0.5) {
        dm = -dm;
    }
    let m = model.mu_family(j, u) + dm;
    let frag = solver.wave_curve_point(u, j, m, Branch::Auto)?;
    match single_wave(frag.waves) {
        Some(w) => Ok(Some(as_piece(&solver.curves, w)?)),
        None => Ok(None),
    }
}

fn jitter(rng: &mut ChaCha8Rng, u: &State, scale: f64) -> State {
    State::new(u.iter().map(|x| x + rng.gen_range(-scale..=scale)).collect())
}

fn strong_wave(
    solver: &RiemannSolver<'_>,
    rng: &mut ChaCha8Rng,
    u: &State,
    kind: StrongKind,
    scale: f64,
    sharp_ref: f64,
) -> Result<Option<Wave>, RiemannError> {
    let curves = &solver.curves;
    let i = curves.model.cc_index();
    let trace = curves.hugoniot_trace(u, i)?;
    let shock = |p: crate::curves::CurvePoint| -> Result<Wave, RiemannError> {
        Ok(Wave {
            family: i,
            kind: WaveKind::ClassicalShock,
            left: u.clone(),
            right: p.state.clone(),
            speed: WaveSpeed::Single(p.speed.unwrap_or(0.0)),
            strength: wave_strength(curves, u, &p.state, i)?,
            id: 0,
        })
    };
    let wave = match kind {
        StrongKind::ClassicalDown => {
            let maps = CriticalMaps::from_trace(&trace, solver.kin)?;
            let threshold = if solver.use_nucleation {
                maps.nucleation
            } else {
                maps.sharp
            };
            let m = threshold + maps.mu.signum() * rng.gen_range(0.0..=2.0 * scale);
            shock(trace.point(m)?)?
        }
        StrongKind::Nonclassical => {
            let maps = CriticalMaps::from_trace(&trace, solver.kin)?;
            let frag = solver.wave_curve_point(u, i, maps.flat, Branch::Nonclassical)?;
            match single_wave(frag.waves) {
                Some(w) if w.kind == WaveKind::NonclassicalShock => w,
                _ => return Ok(None),
            }
        }
        StrongKind::ClassicalUp => {
            let mu0 = curves.model.mu_family(i, u);
            let r = rng.gen_range(0.2..=0.9);
            let p = trace.point(mu0 + r * (sharp_ref - mu0))?;
            let s = p.speed.unwrap_or(0.0);
            if curves.classify_with_speed(u, &p.state, i, s)? != ShockClass::Lax {
                return Ok(None);
            }
            shock(p)?
        }
    };
    Ok(Some(wave))
}

fn eval_pair(solver: &RiemannSolver<'_>, incoming: Vec<Wave>) -> Result<(Vec<Wave>, f64, GlimmResidual), RiemannError> {
    let curves = &solver.curves;
    let model = curves.model;
    let ul = incoming[0].left.clone();
    let ur = incoming[1].right.clone();
    let fan = solver.solve(&ul, &ur)?;
    let outgoing: Vec<Wave> = fan
        .waves
        .into_iter()
        .map(|w| as_piece(curves, w))
        .collect::<Result<_, _>>()?;
    let i = model.cc_index();
    let q_in = interaction_potential(&items_from_waves(&incoming, StrongIds::default()), i, false).q;
    let q_out = interaction_potential(&items_from_waves(&outgoing, StrongIds::default()), i, false).q;
    let g = glimm_residual(&incoming, &outgoing, model.dim());
    Ok((outgoing, q_out - q_in, g))
}

/// Random binary interaction of `kind` near `center`.
pub fn sample_interaction(
    solver: &RiemannSolver<'_>,
    kind: SampleKind,
    center: &State,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<BinarySample>, RiemannError> {
    let curves = &solver.curves;
    let model = curves.model;
    let maps = match kind.strong() {
        Some(_) => Some(CriticalMaps::compute(curves, solver.kin, center)?),
        None => None,
    };
    let sharp = maps.as_ref().map_or(0.0, |m| m.sharp);
    let base = match &maps {
        Some(m) if kind.strong() == Some(StrongKind::ClassicalUp) => &m.flat_state,
        _ => center,
    };
    let u0 = jitter(rng, base, scale);
    if check_ball(&u0, model.delta1()).is_err() {
        return Ok(None);
    }
    let (left, right, weak_first) = match kind.strong() {
        None => {
            let Some(a) = random_weak(solver, rng, &u0, scale, None)? else {
                return Ok(None);
            };
            let Some(b) = random_weak(solver, rng, &a.right, scale, None)? else {
                return Ok(None);
            };
            (a, b, true)
        }
        Some(sk) if kind.weak_on_left() => {
            let fam = if rng.gen_bool(0.5) {
                None
            } else {
                Some(model.cc_index())
            };
            let Some(a) = random_weak(solver, rng, &u0, scale, fam)? else {
                return Ok(None);
            };
            let Some(s) = strong_wave(solver, rng, &a.right, sk, scale, sharp)? else {
                return Ok(None);
            };
            (a, s, true)
        }
        Some(sk) => {
            let Some(s) = strong_wave(solver, rng, &u0, sk, scale, sharp)? else {
                return Ok(None);
            };
            let Some(b) = random_weak(solver, rng, &s.right, scale, None)? else {
                return Ok(None);
            };
            (s, b, false)
        }
    };
    let items = items_from_waves(&[left.clone(), right.clone()], StrongIds::default());
    if items[0].speed <= items[1].speed {
        return Ok(None);
    }
    let (weak, strong) = if weak_first {
        (left.strength.abs(), right.strength.abs())
    } else {
        (right.strength.abs(), left.strength.abs())
    };
    let incoming = vec![left, right];
    let (outgoing, dq, glimm) = eval_pair(solver, incoming.clone())?;
    Ok(Some(BinarySample {
        kind,
        scale,
        incoming,
        outgoing,
        weak,
        strong,
        dq,
        glimm,
    }))
}

fn sample_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Calibration sweep of random binary interactions around `center`, cycling
/// through the sample kinds and the strength scales.
pub fn calibrate(
    solver: &RiemannSolver<'_>,
    center: &State,
    opts: &CalibrationOptions,
    exec: Execution,
) -> Result<Calibration, KineticError> {
    let kinds = SampleKind::ALL;
    let scales = if opts.scales.is_empty() {
        vec![0.02]
    } else {
        opts.scales.clone()
    };
    let results: Vec<(SampleKind, Option<BinarySample>)> = map_range(exec, opts.samples, |k| {
        let kind = kinds[k % kinds.len()];
        let scale = scales[(k / kinds.len()) % scales.len()];
        let mut rng = sample_rng(opts.seed, k);
        for _ in 0..opts.attempts.max(1) {
            if let Ok(Some(s)) = sample_interaction(solver, kind, center, scale, &mut rng) {
                return (kind, Some(s));
            }
        }
        (kind, None)
    });
    let mut stats: Vec<KindStats> = kinds
        .iter()
        .map(|&kind| KindStats {
            kind,
            accepted: 0,
            rejected: 0,
            min_constant: None,
            max_constant: None,
            mean_strong: None,
        })
        .collect();
    let mut strong_sums = vec![0.0; kinds.len()];
    let mut glimm_c: Option<f64> = None;
    let mut zero_res: f64 = 0.0;
    for (kind, s) in &results {
        let idx = kinds.iter().position(|k| k == kind).unwrap();
        let st = &mut stats[idx];
        let Some(s) = s else {
            st.rejected += 1;
            continue;
        };
        st.accepted += 1;
        if kind.strong().is_none() {
            if s.glimm.approaching_product > 0.0 {
                let c = s.glimm.residual / s.glimm.approaching_product;
                glimm_c = Some(glimm_c.map_or(c, |g: f64| g.max(c)));
            } else {
                zero_res = zero_res.max(s.glimm.residual);
            }
            continue;
        }
        let denom = s.weak * s.strong;
        if denom <= 0.0 {
            continue;
        }
        let c = s.dq.abs() / denom;
        st.min_constant = Some(st.min_constant.map_or(c, |m: f64| m.min(c)));
        st.max_constant = Some(st.max_constant.map_or(c, |m: f64| m.max(c)));
        strong_sums[idx] += s.strong;
    }
    for (st, sum) in stats.iter_mut().zip(&strong_sums) {
        if st.min_constant.is_some() && st.accepted > 0 {
            st.mean_strong = Some(sum / st.accepted as f64);
        }
    }
    let mut min_constant: Option<f64> = None;
    let mut witness = None;
    for st in &stats {
        if let Some(c) = st.min_constant {
            if min_constant.is_none_or(|m| c < m) {
                min_constant = Some(c);
                witness = Some(st.kind);
            }
        }
    }
    let k_floor = min_constant.filter(|&c| c > 0.0).map(|c| 3.0 / c);
    let pattern = pattern_strengths(solver, center)?;
    let p1_bound = stats
        .iter()
        .filter_map(|st| {
            let c = st.min_constant?;
            let s = match st.kind.strong()? {
                StrongKind::ClassicalDown => pattern[0],
                StrongKind::Nonclassical => pattern[1],
                StrongKind::ClassicalUp => pattern[2],
            };
            Some(c * s)
        })
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
    Ok(Calibration {
        seed: opts.seed,
        samples: opts.samples,
        scales,
        kinds: stats,
        glimm_constant: glimm_c,
        glimm_zero_product_residual: zero_res,
        min_constant,
        witness,
        k_floor,
        k: k_floor.map(|f| 1.05 * f),
        p1_bound,
        p2_bound: glimm_c.filter(|&c| c > 0.0).map(|c| 1.0 / c),
        pattern_strengths: pattern.to_vec(),
    })
}

/// `|sigma|` of the classical shock to the nucleation state, the
/// nonclassical shock and the trailing classical shock of the pattern at `u`.
pub fn pattern_strengths(solver: &RiemannSolver<'_>, u: &State) -> Result<[f64; 3], KineticError> {
    let curves = &solver.curves;
    let i = curves.model.cc_index();
    let trace = curves.hugoniot_trace(u, i)?;
    let maps = CriticalMaps::from_trace(&trace, solver.kin)?;
    let threshold = if solver.use_nucleation {
        maps.nucleation
    } else {
        maps.sharp
    };
    let c_down = trace.point(threshold)?.state;
    Ok([
        wave_strength(curves, u, &c_down, i)?.abs(),
        wave_strength(curves, u, &maps.flat_state, i)?.abs(),
        wave_strength(curves, &maps.flat_state, &maps.sharp_state, i)?.abs(),
    ])
}

/// Strength sums of the waves crossing the strong shocks during one cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingLedger {
    /// Designated-family waves reaching the nonclassical shock from the left.
    pub alpha_l: f64,
    /// Designated-family waves reaching the trailing shock from the right.
    pub alpha_r: f64,
    /// Designated-family waves reaching the trailing shock from the left.
    pub alpha_r_tilde: f64,
    /// Other-family waves reaching the nonclassical shock from the left.
    pub beta_l: f64,
    /// Other-family waves reaching the nonclassical shock from the right.
    pub beta_l_tilde: f64,
    /// Other-family waves reaching the trailing shock from the right.
    pub beta_r: f64,
    /// Other-family waves reaching the trailing shock from the left.
    pub beta_r_tilde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub t0: f64,
    pub tf: f64,
    pub split_event: usize,
    pub merge_event: usize,
    pub ledger: CrossingLedger,
    pub eta: f64,
    pub signed_variation: f64,
    pub condition_passed: bool,
    pub lyapunov_start: f64,
    pub lyapunov_end: f64,
    pub lyapunov_drop: f64,
    pub max_eps: f64,
    /// The three crossing estimates, with `(1 + eps)` slack.
    pub crossing: [bool; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenCycle {
    pub t0: f64,
    pub split_event: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleAudit {
    pub cycles: Vec<CycleRecord>,
    pub open: Option<OpenCycle>,
    pub unpaired_merges: usize,
    pub splits: usize,
    pub merges: usize,
    pub eta: f64,
    pub fitted_c: Option<f64>,
    pub c_floor: f64,
    pub initial_lyapunov: f64,
    pub bound: Option<f64>,
    pub conditions_passed: bool,
    pub drops_nonnegative: bool,
    pub passed: bool,
}

struct Pending {
    t0: f64,
    split_event: usize,
    u_l: State,
    u_r: State,
    lyap: f64,
    ledger: CrossingLedger,
    max_eps: f64,
}

fn strong_right_state(ws: &[Wave], ids: StrongIds) -> Option<State> {
    let z = ids.z.and_then(|z| ws.iter().find(|w| w.id == z));
    let y = ids.y.and_then(|y| ws.iter().find(|w| w.id == y));
    z.or(y).map(|w| w.right.clone())
}

/// Pairs every split with the following merge and checks the nucleation
/// condition and the Lyapunov drop of each completed cycle.  `diags[0]` is
/// the initial state and `diags[k + 1]` follows event `k`; `eta` is the
/// nucleation gap of the unperturbed pattern.
pub fn cycle_audit(
    solver: &RiemannSolver<'_>,
    events: &[InteractionEvent],
    diags: &[DiagnosticsSnapshot],
    eta: f64,
    c_floor: f64,
) -> Result<CycleAudit, KineticError> {
    let curves = &solver.curves;
    let model = curves.model;
    let i = model.cc_index();
    let kin = solver.kin;
    let mut cycles = Vec::new();
    let mut pending: Option<Pending> = None;
    let mut unpaired = 0;
    let mut splits = 0;
    let mut merges = 0;
    for (k, ev) in events.iter().enumerate() {
        let lyap_pre = diags.get(k).map_or(0.0, |d| d.lyapunov);
        let lyap_post = diags.get(k + 1).map_or(lyap_pre, |d| d.lyapunov);
        let eps_post = diags.get(k + 1).map_or(0.0, |d| d.eps);
        let n_after = ev
            .strong_after
            .y
            .and_then(|y| ev.outgoing.iter().find(|w| w.id == y))
            .filter(|w| w.kind == WaveKind::NonclassicalShock);
        let n_before = ev
            .strong_before
            .y
            .and_then(|y| ev.incoming.iter().find(|w| w.id == y))
            .filter(|w| w.kind == WaveKind::NonclassicalShock);
        if let Some(n) = n_before.filter(|_| ev.is_merge()) {
            merges += 1;
            match pending.take() {
                Some(p) => {
                    let u_lf = n.left.clone();
                    let u_rf = strong_right_state(&ev.incoming, ev.strong_before)
                        .unwrap_or_else(|| ev.incoming.last().unwrap().right.clone());
                    let sgn = model.mu_family(i, &p.u_l).signum();
                    let signed = sgn
                        * (mu_sharp(curves, kin, &p.u_l)? - mu_sharp(curves, kin, &u_lf)? + model.mu_family(i, &u_rf)
                            - model.mu_family(i, &p.u_r));
                    let eta_c = CriticalMaps::compute(curves, kin, &p.u_l)?.eta();
                    let passed = if eta_c > 1e-12 {
                        signed > eta_c
                    } else {
                        signed >= -1e-12
                    };
                    let slack = 1.0 + p.max_eps;
                    let l = p.ledger;
                    let cff = kin.measured_cff.unwrap_or(1.0);
                    let crossing = [
                        l.alpha_r_tilde <= cff * l.alpha_l * slack + 1e-12,
                        l.beta_l_tilde <= l.beta_r * slack + 1e-12,
                        l.beta_r_tilde <= l.beta_l * slack + 1e-12,
                    ];
                    cycles.push(CycleRecord {
                        t0: p.t0,
                        tf: ev.time,
                        split_event: p.split_event,
                        merge_event: ev.index,
                        ledger: l,
                        eta: eta_c,
                        signed_variation: signed,
                        condition_passed: passed,
                        lyapunov_start: p.lyap,
                        lyapunov_end: lyap_pre,
                        lyapunov_drop: p.lyap - lyap_pre,
                        max_eps: p.max_eps,
                        crossing,
                    });
                }
                None => unpaired += 1,
            }
            continue;
        }
        if let Some(n) = n_after {
            if n_before.is_none() {
                splits += 1;
                let u_r = strong_right_state(&ev.outgoing, ev.strong_after).unwrap_or_else(|| n.right.clone());
                pending = Some(Pending {
                    t0: ev.time,
                    split_event: ev.index,
                    u_l: n.left.clone(),
                    u_r,
                    lyap: lyap_post,
                    ledger: CrossingLedger::default(),
                    max_eps: eps_post,
                });
                continue;
            }
        }
        let Some(p) = pending.as_mut() else { continue };
        p.max_eps = p.max_eps.max(eps_post);
        let before = ev.strong_before;
        let pos = |id: Option<u64>| id.and_then(|id| ev.incoming.iter().position(|w| w.id == id));
        let (py, pz) = (pos(before.y), pos(before.z));
        for (idx, w) in ev.incoming.iter().enumerate() {
            if Some(w.id) == before.y || Some(w.id) == before.z {
                continue;
            }
            let a = w.strength.abs();
            let same = w.family == i;
            if let Some(py) = py {
                let left = idx < py;
                match (same, left) {
                    (true, true) => p.ledger.alpha_l += a,
                    (false, true) => p.ledger.beta_l += a,
                    (false, false) => p.ledger.beta_l_tilde += a,
                    (true, false) => {}
                }
            } else if let Some(pz) = pz {
                let left = idx < pz;
                match (same, left) {
                    (true, true) => p.ledger.alpha_r_tilde += a,
                    (true, false) => p.ledger.alpha_r += a,
                    (false, true) => p.ledger.beta_r_tilde += a,
                    (false, false) => p.ledger.beta_r += a,
                }
            }
        }
    }
    let initial = diags.first().map_or(0.0, |d| d.lyapunov);
    let fitted_c = if eta > 1e-12 && !cycles.is_empty() {
        cycles
            .iter()
            .map(|c| c.lyapunov_drop / eta)
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))))
    } else {
        None
    };
    let bound = fitted_c.filter(|&c| c > 0.0).map(|c| initial / (c * eta));
    let conditions = cycles.iter().all(|c| c.condition_passed);
    let drops = cycles
        .iter()
        .all(|c| c.lyapunov_drop >= -1e-12 * (1.0 + c.lyapunov_start.abs()));
    let passed = conditions
        && drops
        && match (eta > 1e-12, fitted_c) {
            (false, _) => true,
            (true, None) => cycles.is_empty(),
            (true, Some(c)) => c >= c_floor && bound.is_some_and(|b| cycles.len() as f64 <= b * (1.0 + 1e-12)),
        };
    Ok(CycleAudit {
        cycles,
        open: pending.map(|p| OpenCycle {
            t0: p.t0,
            split_event: p.split_event,
        }),
        unpaired_merges: unpaired,
        splits,
        merges,
        eta,
        fitted_c,
        c_floor,
        initial_lyapunov: initial,
        bound,
        conditions_passed: conditions,
        drops_nonnegative: drops,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::KineticFunction;
    use crate::model::{Cubic, Elasticity};
    use crate::tracking::{FrontRecord, Tracker, TrackingOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s(u: f64) -> State {
        State::scalar(u)
    }

    fn kin() -> KineticFunction {
        KineticFunction::theta(0.5, Some(0.5)).unwrap()
    }

    fn item(family: usize, kind: WaveKind, speed: f64, strength: f64, role: Role) -> Item {
        Item {
            family,
            kind,
            speed,
            strength,
            role,
        }
    }

    fn wave(family: usize, kind: WaveKind, a: f64, b: f64, speed: f64, strength: f64, id: u64) -> Wave {
        Wave {
            family,
            kind,
            left: s(a),
            right: s(b),
            speed: WaveSpeed::Single(speed),
            strength,
            id,
        }
    }

    fn event(incoming: Vec<Wave>, outgoing: Vec<Wave>, before: StrongIds, after: StrongIds) -> InteractionEvent {
        InteractionEvent {
            index: 0,
            time: 1.0,
            position: 0.0,
            incoming,
            outgoing,
            strong_before: before,
            strong_after: after,
            dropped: Vec::new(),
        }
    }

    #[test]
    fn cubic_strengths() {
        let m = Cubic::default();
        let c = Curves::new(&m);
        assert_abs_diff_eq!(
            wave_strength(&c, &s(1.0), &s(-0.75), 0).unwrap(),
            -0.25,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            wave_strength(&c, &s(-0.75), &s(-0.45), 0).unwrap(),
            -0.3,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            wave_strength(&c, &s(1.0), &s(-0.45), 0).unwrap(),
            -0.55,
            epsilon = 1e-12
        );
        assert_eq!(wave_strength(&c, &s(0.3), &s(0.3), 0).unwrap(), 0.0);
    }

    #[test]
    fn functionals_by_region() {
        let w = Weights::from_zeta(0.75, 0.1, 1.0);
        let n = item(0, WaveKind::NonclassicalShock, 0.8, -0.25, Role::Y);
        let c = item(0, WaveKind::ClassicalShock, 1.1, -0.3, Role::Z);
        let a = item(0, WaveKind::ClassicalShock, 2.0, 0.01, Role::Weak);
        let f = functionals(&[a, n, c], &w, 0);
        assert_abs_diff_eq!(f.v_l, 0.0185, epsilon = 1e-15);
        assert_abs_diff_eq!(f.w, 0.0185, epsilon = 1e-15);
        let f = functionals(&[n, c, a], &w, 0);
        assert_abs_diff_eq!(f.v_r, 0.01, epsilon = 1e-15);
        assert_eq!(f.v_l, 0.0);
        let f = functionals(&[n, a, c], &w, 0);
        assert_abs_diff_eq!(f.v_m, 0.01, epsilon = 1e-15);
        assert_eq!(functionals(&[n, c], &w, 0), Functionals::default());
    }

    #[test]
    fn functionals_without_trailing_shock() {
        let w = Weights::from_zeta(0.75, 0.1, 1.0);
        let y = item(0, WaveKind::ClassicalShock, 0.8, -0.6, Role::Y);
        let a = item(0, WaveKind::ClassicalShock, 0.3, 0.02, Role::Weak);
        let f = functionals(&[y, a], &w, 0);
        assert_eq!(f.v_m, 0.0);
        assert_abs_diff_eq!(f.v_r, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn functionals_other_families() {
        let w = Weights::from_zeta(0.75, 0.1, 1.0);
        // Designated family 1 with families 0 and 2 on both sides of y.
        let lo = item(0, WaveKind::ClassicalShock, -1.0, 0.01, Role::Weak);
        let hi = item(2, WaveKind::ClassicalShock, 2.0, 0.02, Role::Weak);
        let y = item(1, WaveKind::ClassicalShock, 0.5, -0.5, Role::Y);
        let f = functionals(&[lo, hi, y, lo, hi], &w, 1);
        assert_abs_diff_eq!(f.v_l, 0.9 * 0.01 + 1.1 * 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(f.v_r, 1.1 * 0.01 + 0.9 * 0.02, epsilon = 1e-15);
    }

    #[test]
    fn potential_examples() {
        let a = item(0, WaveKind::ClassicalShock, 0.9, -0.01, Role::Weak);
        let b = item(0, WaveKind::ClassicalShock, 0.5, -0.02, Role::Weak);
        assert_abs_diff_eq!(interaction_potential(&[a, b], 0, false).q, 8e-5, epsilon = 1e-18);
        let p = item(0, WaveKind::RarefactionShockPiece, 0.9, 0.01, Role::Weak);
        let r = item(0, WaveKind::RarefactionShockPiece, 0.5, 0.02, Role::Weak);
        assert_eq!(interaction_potential(&[p, r], 0, false).q, 0.0);
        // 2-wave left of a 1-wave, both away from the designated family.
        let f2 = item(1, WaveKind::ClassicalShock, 1.0, 0.01, Role::Weak);
        let f1 = item(0, WaveKind::ClassicalShock, -1.0, 0.01, Role::Weak);
        assert_abs_diff_eq!(interaction_potential(&[f2, f1], 2, false).q, 1e-4, epsilon = 1e-18);
        // With the second family designated the pair is speed-weighted.
        assert_abs_diff_eq!(interaction_potential(&[f2, f1], 1, false).q, 2e-4, epsilon = 1e-18);
        // A 1-wave left of a 2-wave does not approach.
        assert_eq!(interaction_potential(&[f1, f2], 2, false).q, 0.0);
    }

    #[test]
    fn potential_weak_only_flag() {
        let y = item(0, WaveKind::NonclassicalShock, 0.9, -0.25, Role::Y);
        let a = item(0, WaveKind::ClassicalShock, 0.5, -0.02, Role::Weak);
        assert!(interaction_potential(&[y, a], 0, false).q > 0.0);
        assert_eq!(interaction_potential(&[y, a], 0, true).q, 0.0);
    }

    #[test]
    fn perturbation_sums_weak_waves() {
        let y = item(0, WaveKind::NonclassicalShock, 0.8, -0.25, Role::Y);
        let z = item(0, WaveKind::ClassicalShock, 1.1, -0.3, Role::Z);
        assert_eq!(perturbation(&[y, z]), 0.0);
        let a = item(0, WaveKind::ClassicalShock, 2.0, -0.01, Role::Weak);
        let b = item(0, WaveKind::RarefactionShockPiece, 0.1, 0.02, Role::Weak);
        assert_abs_diff_eq!(perturbation(&[a, y, z, b]), 0.03, epsilon = 1e-15);
    }

    #[test]
    fn classify_split_from_left_rarefaction() {
        let strong = StrongIds { y: Some(1), z: None };
        let a = wave(0, WaveKind::RarefactionShockPiece, 0.99, 1.0, 2.9, 0.01, 5);
        let c = wave(0, WaveKind::ClassicalShock, 1.0, -0.375, 0.765625, -0.625, 1);
        let n = wave(0, WaveKind::NonclassicalShock, 0.99, -0.7425, 0.8, -0.25, 6);
        let cu = wave(0, WaveKind::ClassicalShock, -0.7425, -0.375, 0.9, -0.37, 7);
        let ev = event(vec![a, c], vec![n, cu], strong, StrongIds { y: Some(6), z: Some(7) });
        let cl = classify_case(&ev, 0);
        assert_eq!(cl.tag, CaseTag::Case1);
        assert_eq!(cl.pattern, Some(SplitPattern::Rc3));
        assert_eq!(cl.side, Some(Side::Left));
        assert_eq!(cl.estimate.as_deref(), Some("split-left"));
    }

    #[test]
    fn classify_split_from_right_and_merge() {
        let strong = StrongIds { y: Some(1), z: None };
        let c = wave(0, WaveKind::ClassicalShock, 1.0, -0.375, 0.765625, -0.625, 1);
        let a = wave(0, WaveKind::RarefactionShockPiece, -0.375, -0.45, 0.5, -0.075, 2);
        let n = wave(0, WaveKind::NonclassicalShock, 1.0, -0.75, 0.8125, -0.25, 3);
        let cu = wave(0, WaveKind::ClassicalShock, -0.75, -0.45, 1.1025, -0.3, 4);
        let after = StrongIds { y: Some(3), z: Some(4) };
        let ev = event(vec![c, a], vec![n.clone(), cu.clone()], strong, after);
        let cl = classify_case(&ev, 0);
        assert_eq!((cl.tag, cl.pattern), (CaseTag::Case1, Some(SplitPattern::Cr4)));
        let merged = wave(0, WaveKind::ClassicalShock, 1.0, -0.2, 0.84, -0.8, 9);
        let ev = event(vec![n, cu], vec![merged], after, StrongIds { y: Some(9), z: None });
        assert_eq!(classify_case(&ev, 0).tag, CaseTag::Case2);
    }

    #[test]
    fn classify_other_family_crossing_nonclassical() {
        let strong = StrongIds { y: Some(1), z: Some(2) };
        let mut b = wave(2, WaveKind::ClassicalShock, 0.0, 0.0, 3.0, -0.01, 7);
        b.left = State::new(vec![0.0, 0.0, 0.0]);
        b.right = State::new(vec![0.0, 0.0, -0.01]);
        let mut n = wave(1, WaveKind::NonclassicalShock, 0.0, 0.0, 0.5, -0.3, 1);
        n.left = b.right.clone();
        n.right = State::new(vec![0.0, -0.5, -0.01]);
        let ev = event(vec![b.clone(), n.clone()], vec![n, b], strong, strong);
        let cl = classify_case(&ev, 1);
        assert_eq!(cl.tag, CaseTag::Case6);
        assert_eq!(cl.estimate.as_deref(), Some("nonclassical-other-left"));
    }

    #[test]
    fn classify_unmatched_is_dumped() {
        let strong = StrongIds { y: Some(1), z: None };
        let c = wave(0, WaveKind::ClassicalShock, 1.0, 0.5, 1.75, -0.5, 1);
        let a = wave(0, WaveKind::ClassicalShock, 0.5, 0.45, 0.7, -0.05, 2);
        let b = wave(0, WaveKind::ClassicalShock, 0.45, 0.4, 0.6, -0.05, 3);
        let ev = event(vec![c.clone(), a, b], vec![c], strong, strong);
        let cl = classify_case(&ev, 0);
        assert_eq!(cl.tag, CaseTag::Other);
        assert!(cl.dump.unwrap().contains("#2"));
    }

    #[test]
    fn glimm_identity_and_weak_shocks() {
        let m = Cubic::default();
        let k = kin();
        let r = RiemannSolver::new(Curves::new(&m), &k, true);
        let fan = r.solve(&s(1.0), &s(0.95)).unwrap();
        let g = glimm_residual(&fan.waves, &r.solve(&s(1.0), &s(0.95)).unwrap().waves, 1);
        assert!(g.residual <= 1e-11);
        let a = r.solve(&s(1.0), &s(0.95)).unwrap().waves;
        let b = r.solve(&s(0.95), &s(0.92)).unwrap().waves;
        let out = r.solve(&s(1.0), &s(0.92)).unwrap().waves;
        let inc: Vec<Wave> = a.into_iter().chain(b).collect();
        let g = glimm_residual(&inc, &out, 1);
        assert_abs_diff_eq!(g.approaching_product, 0.05 * 0.03, epsilon = 1e-12);
        assert!(g.residual <= 1e-12);
    }

    #[test]
    fn glimm_merge_of_exact_pattern() {
        let m = Cubic::default();
        let k = kin();
        let r = RiemannSolver::new(Curves::new(&m), &k, false);
        let pat = r.solve(&s(1.0), &s(-0.25 - 1e-9)).unwrap();
        assert_eq!(pat.waves.len(), 2);
        let merged = r.solve(&s(1.0), &s(-0.25)).unwrap();
        let g = glimm_residual(&pat.waves, &merged.waves, 1);
        assert!(g.residual <= 1e-8, "{}", g.residual);
        let speeds: Vec<f64> = pat.waves.iter().map(|w| w.speed.lo()).collect();
        assert_abs_diff_eq!(speeds[0], speeds[1], epsilon = 1e-8);
    }

    #[test]
    fn zeta_weights_pass_constraints() {
        let cal = Calibration {
            seed: 0,
            samples: 0,
            scales: vec![],
            kinds: vec![],
            glimm_constant: Some(2.0),
            glimm_zero_product_residual: 0.0,
            min_constant: Some(0.3),
            witness: Some(SampleKind::ClassicalDownRight),
            k_floor: Some(10.0),
            k: Some(10.5),
            p1_bound: Some(0.05),
            p2_bound: Some(0.5),
            pattern_strengths: vec![],
        };
        let w = Weights::from_zeta(0.75, 0.1, 10.5);
        assert_abs_diff_eq!(w.k_l, 1.85, epsilon = 1e-15);
        let rep = validate_constraints(&w, 0.75, &cal, 0.02);
        assert!(rep.passed(), "{rep:?}");
        assert_abs_diff_eq!(rep.check("W1").unwrap().margin, 0.1, epsilon = 1e-12);
        let w = Weights::from_zeta(0.75, 0.6, 10.5);
        let rep = validate_constraints(&w, 0.75, &cal, 0.02);
        assert!(rep.check("W1").unwrap().passed);
        assert!(rep.check("W2").unwrap().passed);
        assert!(rep.check("W3").unwrap().passed);
        assert!(!rep.check("zeta").unwrap().passed);
        let w = Weights::from_zeta(0.75, 0.1, 5.0);
        let rep = validate_constraints(&w, 0.75, &cal, 0.02);
        let q1 = rep.check("Q1").unwrap();
        assert!(!q1.passed);
        assert!(q1.detail.contains("ClassicalDownRight"));
    }

    #[test]
    fn lyapunov_series_flags_increase() {
        let d = |t: f64, l: f64| DiagnosticsSnapshot {
            t,
            v_l: l,
            v_m: 0.0,
            v_r: 0.0,
            w: l,
            q: 0.0,
            eps: l,
            lyapunov: l,
            fronts: 1,
            strong: None,
        };
        let cls = |index| Classification {
            index,
            time: 0.0,
            tag: CaseTag::Case3,
            side: Some(Side::Left),
            pattern: None,
            strong: Some(StrongKind::ClassicalDown),
            estimate: Some("down-same-left".into()),
            weak_strength: 0.01,
            dump: None,
        };
        let w = Weights::from_zeta(0.75, 0.1, 1.0);
        let series = lyapunov_series(
            &[d(0.0, 1.0), d(1.0, 0.9), d(2.0, 0.95)],
            &[cls(0), cls(1)],
            &w,
            0.75,
            1e-9,
        );
        assert_eq!(series.flagged, 1);
        assert!(series.points[1].flagged);
        assert_abs_diff_eq!(series.points[0].linear_bound.unwrap(), -0.0185, epsilon = 1e-15);
        assert!(!series.monotone());
        let series = lyapunov_series(&[d(0.0, 1.0)], &[], &w, 0.75, 1e-9);
        assert_eq!(series.points.len(), 0);
        assert!(series.monotone());
    }

    #[test]
    fn diagnose_pattern_snapshot() {
        let rec = |id, x, left: f64, right: f64, speed, strength, kind| FrontRecord {
            x,
            family: 0,
            kind,
            left: vec![left],
            right: vec![right],
            speed,
            strength,
            id,
        };
        let snap = Snapshot {
            t: 0.5,
            y: Some(1),
            z: Some(2),
            fronts: vec![
                rec(1, 0.0, 1.0, -0.75, 0.8125, -0.25, WaveKind::NonclassicalShock),
                rec(2, 0.1, -0.75, -0.45, 1.1025, -0.3, WaveKind::ClassicalShock),
                rec(3, 0.5, -0.45, -0.44, 0.59, -0.01, WaveKind::ClassicalShock),
            ],
        };
        let w = Weights::from_zeta(0.75, 0.1, 2.0);
        let d = diagnose(&snap, 0, &w, false);
        assert_abs_diff_eq!(d.w, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(d.eps, 0.01, epsilon = 1e-15);
        // N and the trailing shock separate; both approach the weak shock.
        let q = (1.1025 - 0.59) * 0.3 * 0.01 + (0.8125 - 0.59) * 0.25 * 0.01;
        assert_abs_diff_eq!(d.q, q, epsilon = 1e-15);
        assert_abs_diff_eq!(d.lyapunov, 0.01 + 2.0 * q, epsilon = 1e-15);
        let st = d.strong.unwrap();
        assert_eq!(st.u_m, Some(vec![-0.75]));
        assert_eq!(st.u_r, vec![-0.45]);
    }

    #[test]
    fn calibration_is_deterministic_and_positive() {
        let m = Cubic::default();
        let k = kin();
        let r = RiemannSolver::new(Curves::new(&m), &k, true);
        let opts = CalibrationOptions {
            samples: 700,
            ..Default::default()
        };
        let a = calibrate(&r, &s(1.0), &opts, Execution::Parallel).unwrap();
        let b = calibrate(&r, &s(1.0), &opts, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let floor = a.k_floor.unwrap();
        assert!(floor > 3.0 && floor < 100.0, "{floor}");
        assert_abs_diff_eq!(a.k.unwrap(), 1.05 * floor, epsilon = 1e-12);
        assert!(a.glimm_zero_product_residual <= 1e-11);
        let down = a
            .kinds
            .iter()
            .find(|k| k.kind == SampleKind::ClassicalDownRight)
            .unwrap();
        assert!(down.accepted > 0);
    }

    #[test]
    fn cycle_audit_on_cycling_run() {
        let m = Cubic::default();
        let mut k = kin();
        k.measured_cff = Some(0.75);
        let r = RiemannSolver::new(Curves::new(&m), &k, true);
        let opts = TrackingOptions {
            h: 0.02,
            t_final: 4.0,
            ..Default::default()
        };
        let tr = Tracker::new(r, opts);
        let profile = crate::tracking::InitialProfile {
            u_star: vec![1.0],
            base_right: crate::tracking::BaseRight::Nucleation,
            jumps: vec![
                crate::tracking::Jump {
                    x: 0.2,
                    delta: vec![-0.05],
                },
                crate::tracking::Jump {
                    x: 0.6,
                    delta: vec![0.3],
                },
            ],
        };
        let (fs, _) = tr.init(&profile).unwrap();
        let w = Weights::from_zeta(0.75, 0.1, 10.0);
        let mut diags = vec![diagnose(&fs.snapshot(), 0, &w, false)];
        let mut events = Vec::new();
        tr.run(fs, |fs, ev| {
            diags.push(diagnose(&fs.snapshot(), 0, &w, false));
            events.push(ev.clone());
        })
        .unwrap();
        let audit = cycle_audit(&r, &events, &diags, 0.125, 1e-3).unwrap();
        assert_eq!(audit.cycles.len(), 1, "{audit:?}");
        let c = &audit.cycles[0];
        assert!(c.condition_passed, "{c:?}");
        assert!(c.signed_variation > 0.125);
        assert!(c.lyapunov_drop > 0.0);
    }

    #[test]
    fn elasticity_glimm_zero_product() {
        let m = Elasticity::default();
        let k = kin();
        let r = RiemannSolver::new(Curves::new(&m), &k, true);
        let mut rng = sample_rng(7, 0);
        let mut checked = 0;
        for _ in 0..200 {
            if let Ok(Some(smp)) =
                sample_interaction(&r, SampleKind::WeakWeak, &State::new(vec![0.0, 0.4]), 0.05, &mut rng)
            {
                if smp.glimm.approaching_product == 0.0 {
                    assert!(smp.glimm.residual <= 1e-11, "{}", smp.glimm.residual);
                }
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn w_is_sum_of_regions(strengths in proptest::collection::vec(-0.05f64..0.05, 0..12), y in 0usize..12, z in 0usize..12) {
            let w = Weights::from_zeta(0.75, 0.2, 3.0);
            let mut items: Vec<Item> = strengths.iter().map(|&x| item(0, WaveKind::ClassicalShock, x, x, Role::Weak)).collect();
            if !items.is_empty() {
                let yy = y % items.len();
                items[yy].role = Role::Y;
                let zz = z % items.len();
                if zz > yy { items[zz].role = Role::Z; }
            }
            let f = functionals(&items, &w, 0);
            prop_assert!((f.w - f.v_l - f.v_m - f.v_r).abs() <= 1e-15);
            prop_assert!(f.v_l >= 0.0 && f.v_m >= 0.0 && f.v_r >= 0.0);
            let q = interaction_potential(&items, 0, false);
            prop_assert!(q.q >= 0.0);
            prop_assert!(interaction_potential(&items, 0, true).q <= q.q + 1e-18);
        }

        #[test]
        fn cubic_split_additivity(u in 0.1f64..1.4) {
            let m = Cubic::new(3.0, 3.0);
            let c = Curves::new(&m);
            let k = kin();
            let maps = CriticalMaps::compute(&c, &k, &s(u)).unwrap();
            let a = wave_strength(&c, &s(u), &maps.sharp_state, 0).unwrap();
            let b = wave_strength(&c, &s(u), &maps.flat_state, 0).unwrap()
                + wave_strength(&c, &maps.flat_state, &maps.sharp_state, 0).unwrap();
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }
}
