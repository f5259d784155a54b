//! Event-driven front tracking with strong-wave identity propagation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::Curves;
use crate::diagnostics::wave_strength;
use crate::kinetics::CriticalMaps;
use crate::model::{check_ball, ModelError, State, Vector};
use crate::riemann::{RiemannError, RiemannSolver, Wave, WaveFan, WaveKind, WaveSpeed};

pub const TIME_TIE_TOL: f64 = 1e-12;
pub const POSITION_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("front count {count} exceeds the cap {cap} at t = {time}")]
    FrontOverflow { count: usize, cap: usize, time: f64 },
    #[error("invalid initial data: {0}")]
    InitialData(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RarefactionSpeed {
    /// Rankine-Hugoniot speed of the piece (family projection for systems).
    #[default]
    RankineHugoniot,
    LeftCharacteristic,
    RightCharacteristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingOptions {
    pub h: f64,
    pub t_final: f64,
    pub max_events: usize,
    pub max_fronts: usize,
    pub rarefaction_speed: RarefactionSpeed,
    /// Waves with |strength| below `drop_factor * h^2` are absorbed by a neighbour.
    pub drop_factor: f64,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        TrackingOptions {
            h: 0.01,
            t_final: 1.0,
            max_events: 200_000,
            max_fronts: 20_000,
            rarefaction_speed: RarefactionSpeed::RankineHugoniot,
            drop_factor: 1e-2,
        }
    }
}

/// The right state of the unperturbed pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseRight {
    /// Point of the Hugoniot locus of `u_star` at the nucleation threshold.
    Nucleation,
    /// Companion point of the kinetic state (three-state pattern endpoint).
    Sharp,
    State(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jump {
    pub x: f64,
    pub delta: Vec<f64>,
}

/// `u_star` for x < 0, the base right state for x > 0, plus a perturbation
/// made of jumps `delta` at positions `x` with `v0(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialProfile {
    pub u_star: Vec<f64>,
    pub base_right: BaseRight,
    #[serde(default)]
    pub jumps: Vec<Jump>,
}

impl InitialProfile {
    /// Breakpoints and the states between them, left to right.
    pub fn piecewise(&self, solver: &RiemannSolver<'_>) -> Result<(Vec<f64>, Vec<State>), TrackingError> {
        let model = solver.curves.model;
        let dim = model.dim();
        if self.u_star.len() != dim {
            return Err(TrackingError::InitialData(format!(
                "u_star has {} components, model expects {dim}",
                self.u_star.len()
            )));
        }
        let u_star = State::new(self.u_star.clone());
        let right = match &self.base_right {
            BaseRight::State(v) => {
                if v.len() != dim {
                    return Err(TrackingError::InitialData(
                        "base right state has the wrong dimension".into(),
                    ));
                }
                State::new(v.clone())
            }
            BaseRight::Nucleation | BaseRight::Sharp => {
                let trace = solver
                    .curves
                    .hugoniot_trace(&u_star, model.cc_index())
                    .map_err(RiemannError::from)?;
                let maps = CriticalMaps::from_trace(&trace, solver.kin).map_err(RiemannError::from)?;
                let m = if self.base_right == BaseRight::Sharp || !solver.use_nucleation {
                    maps.sharp
                } else {
                    maps.nucleation
                };
                trace.point(m).map_err(RiemannError::from)?.state
            }
        };
        let mut jumps: Vec<&Jump> = self.jumps.iter().collect();
        for j in &jumps {
            if j.delta.len() != dim || !j.x.is_finite() || j.x == 0.0 {
                return Err(TrackingError::InitialData(format!(
                    "jump at x = {} must be nonzero, finite and of dimension {dim}",
                    j.x
                )));
            }
        }
        jumps.sort_by(|a, b| a.x.total_cmp(&b.x));
        if jumps.windows(2).any(|w| w[0].x == w[1].x) {
            return Err(TrackingError::InitialData("duplicate jump positions".into()));
        }
        let neg: Vec<&Jump> = jumps.iter().copied().filter(|j| j.x < 0.0).collect();
        let pos: Vec<&Jump> = jumps.iter().copied().filter(|j| j.x > 0.0).collect();
        // Left of the origin the perturbation accumulates leftward.
        let mut left_states = vec![u_star.clone()];
        let mut cur = u_star.vector().clone();
        for j in neg.iter().rev() {
            cur -= Vector::from_vec(j.delta.clone());
            left_states.push(State::from(cur.clone()));
        }
        left_states.reverse();
        let mut xs: Vec<f64> = neg.iter().map(|j| j.x).collect();
        xs.push(0.0);
        let mut states = left_states;
        let mut cur = right.vector().clone();
        states.push(right.clone());
        for j in &pos {
            cur += Vector::from_vec(j.delta.clone());
            xs.push(j.x);
            states.push(State::from(cur.clone()));
        }
        for s in &states {
            check_ball(s, model.delta1())?;
        }
        Ok((xs, states))
    }

    pub fn perturbation_tv(&self) -> f64 {
        self.jumps
            .iter()
            .map(|j| j.delta.iter().map(|d| d * d).sum::<f64>().sqrt())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Front {
    pub x0: f64,
    pub t0: f64,
    pub speed: f64,
    pub wave: Wave,
}

impl Front {
    pub fn id(&self) -> u64 {
        self.wave.id
    }

    pub fn position(&self, t: f64) -> f64 {
        self.x0 + self.speed * (t - self.t0)
    }

    /// Rankine-Hugoniot defect `[f] - s [u]`.
    pub fn defect(&self, curves: &Curves<'_>) -> Vector {
        let m = curves.model;
        m.flux(&self.wave.right)
            - m.flux(&self.wave.left)
            - (self.wave.right.vector() - self.wave.left.vector()) * self.speed
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrongIds {
    pub y: Option<u64>,
    pub z: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontSet {
    pub time: f64,
    pub fronts: Vec<Front>,
    pub strong: StrongIds,
    pub h: f64,
    pub left_state: State,
    pub right_state: State,
    next_id: u64,
}

impl FrontSet {
    pub fn new(time: f64, h: f64, left: State, right: State) -> Self {
        FrontSet {
            time,
            fronts: Vec::new(),
            strong: StrongIds::default(),
            h,
            left_state: left,
            right_state: right,
            next_id: 1,
        }
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.fronts.iter().position(|f| f.id() == id)
    }

    pub fn front(&self, id: u64) -> Option<&Front> {
        self.fronts.iter().find(|f| f.id() == id)
    }

    pub fn is_strong(&self, id: u64) -> bool {
        self.strong.y == Some(id) || self.strong.z == Some(id)
    }

    /// `int u dx` over `[-r, r]`, `r` beyond every front.
    pub fn mass(&self, r: f64) -> Vector {
        let mut acc = self.left_state.vector() * 0.0;
        let mut x = -r;
        let mut u = self.left_state.vector().clone();
        for f in &self.fronts {
            let p = f.position(self.time);
            acc += &u * (p - x);
            x = p;
            u = f.wave.right.vector().clone();
        }
        acc += &u * (r - x);
        acc
    }

    /// Checks ordering and exact state chaining.
    pub fn check_consistency(&self) -> Result<(), String> {
        let mut prev = &self.left_state;
        let mut last_x = f64::NEG_INFINITY;
        for f in &self.fronts {
            if &f.wave.left != prev {
                return Err(format!("front {} does not chain", f.id()));
            }
            let x = f.position(self.time);
            if x < last_x - 1e-9 {
                return Err(format!("front {} out of order ({x} < {last_x})", f.id()));
            }
            last_x = x;
            prev = &f.wave.right;
        }
        if prev != &self.right_state {
            return Err("fronts do not end at the right far-field state".into());
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.time,
            y: self.strong.y,
            z: self.strong.z,
            fronts: self
                .fronts
                .iter()
                .map(|f| FrontRecord {
                    x: f.position(self.time),
                    family: f.wave.family,
                    kind: f.wave.kind,
                    left: f.wave.left.to_vec(),
                    right: f.wave.right.to_vec(),
                    speed: f.speed,
                    strength: f.wave.strength,
                    id: f.id(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontRecord {
    pub x: f64,
    pub family: usize,
    pub kind: WaveKind,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub speed: f64,
    pub strength: f64,
    pub id: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub y: Option<u64>,
    pub z: Option<u64>,
    pub fronts: Vec<FrontRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedWave {
    pub time: f64,
    pub x: f64,
    pub family: usize,
    pub strength: f64,
    pub jump: f64,
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub index: usize,
    pub time: f64,
    pub position: f64,
    pub incoming: Vec<Wave>,
    pub outgoing: Vec<Wave>,
    pub strong_before: StrongIds,
    pub strong_after: StrongIds,
    pub dropped: Vec<DroppedWave>,
}

impl InteractionEvent {
    pub fn is_split(&self) -> bool {
        let had_n = self.incoming.iter().any(|w| w.kind == WaveKind::NonclassicalShock);
        let has_n = self.outgoing.iter().any(|w| w.kind == WaveKind::NonclassicalShock);
        !had_n && has_n
    }

    pub fn is_merge(&self) -> bool {
        let had_n = self.incoming.iter().any(|w| w.kind == WaveKind::NonclassicalShock);
        let has_n = self.outgoing.iter().any(|w| w.kind == WaveKind::NonclassicalShock);
        had_n && !has_n
    }
}

/// Fronts and Riemann solves around one tracking run.
pub struct Tracker<'a> {
    pub solver: RiemannSolver<'a>,
    pub opts: TrackingOptions,
}

impl<'a> Tracker<'a> {
    pub fn new(solver: RiemannSolver<'a>, opts: TrackingOptions) -> Self {
        Tracker { solver, opts }
    }

    fn curves(&self) -> &Curves<'a> {
        &self.solver.curves
    }

    fn piece_speed(&self, a: &State, b: &State, family: usize) -> Result<f64, RiemannError> {
        let c = self.curves();
        Ok(match self.opts.rarefaction_speed {
            RarefactionSpeed::RankineHugoniot => c.piece_speed(a, b, family)?,
            RarefactionSpeed::LeftCharacteristic => c.lambda(family, a)?,
            RarefactionSpeed::RightCharacteristic => c.lambda(family, b)?,
        })
    }

    /// Splits rarefactions into pieces of `mu`-increment at most `h`.
    pub fn discretize(&self, wave: &Wave) -> Result<Vec<(Wave, f64)>, RiemannError> {
        if wave.kind != WaveKind::Rarefaction {
            let s = wave.speed.lo();
            return Ok(vec![(wave.clone(), s)]);
        }
        let c = self.curves();
        let j = wave.family;
        let m0 = c.model.mu_family(j, &wave.left);
        let m1 = c.model.mu_family(j, &wave.right);
        let n = ((m1 - m0).abs() / self.opts.h - 1e-9).ceil().max(1.0) as usize;
        let mut out = Vec::with_capacity(n);
        let mut prev = wave.left.clone();
        for k in 1..=n {
            let next = if k == n {
                wave.right.clone()
            } else {
                c.rarefaction_point(&wave.left, j, m0 + (m1 - m0) * k as f64 / n as f64)?
                    .state
            };
            let speed = self.piece_speed(&prev, &next, j)?;
            let piece = Wave {
                family: j,
                kind: WaveKind::RarefactionShockPiece,
                left: prev.clone(),
                right: next.clone(),
                speed: WaveSpeed::Single(speed),
                strength: wave_strength(c, &prev, &next, j)?,
                id: 0,
            };
            out.push((piece, speed));
            prev = next;
        }
        Ok(out)
    }

    /// Absorbs negligible waves of a fan into a neighbour, preferring a
    /// neighbour that is not a nonclassical shock.
    fn drop_small(&self, fan: &mut WaveFan, time: f64, x: f64) -> Result<Vec<DroppedWave>, RiemannError> {
        let threshold = self.opts.drop_factor * self.opts.h * self.opts.h;
        let mut dropped = Vec::new();
        let c = self.curves();
        loop {
            if fan.waves.len() <= 1 {
                break;
            }
            let Some(k) = fan.waves.iter().position(|w| w.strength.abs() < threshold) else {
                break;
            };
            let w = fan.waves.remove(k);
            let right_ok = k < fan.waves.len() && fan.waves[k].kind != WaveKind::NonclassicalShock;
            let left_ok = k > 0 && fan.waves[k - 1].kind != WaveKind::NonclassicalShock;
            let into_right = right_ok || (!left_ok && k < fan.waves.len());
            let target = if into_right {
                let t = &mut fan.waves[k];
                t.left = w.left.clone();
                k
            } else {
                let t = &mut fan.waves[k - 1];
                t.right = w.right.clone();
                k - 1
            };
            let t = fan.waves[target].clone();
            fan.waves[target].strength = wave_strength(c, &t.left, &t.right, t.family)?;
            let jump = w.left.distance(&w.right);
            let lam = c
                .model
                .eigen(&w.left)?
                .lambdas
                .iter()
                .chain(c.model.eigen(&w.right)?.lambdas.iter())
                .fold(0.0f64, |a, l| a.max(l.abs()));
            let s = t.speed.lo().abs().max(t.speed.hi().abs());
            dropped.push(DroppedWave {
                time,
                x,
                family: w.family,
                strength: w.strength,
                jump,
                budget: (lam + s) * jump * (self.opts.t_final - time).max(0.0),
            });
        }
        Ok(dropped)
    }

    /// Fronts for the fan issuing from `(x, t)`.
    fn fronts_for(&self, fs: &mut FrontSet, fan: &WaveFan, x: f64, t: f64) -> Result<Vec<Front>, RiemannError> {
        let mut out = Vec::new();
        for w in &fan.waves {
            for (mut piece, speed) in self.discretize(w)? {
                piece.id = fs.fresh_id();
                out.push(Front {
                    x0: x,
                    t0: t,
                    speed,
                    wave: piece,
                });
            }
        }
        Ok(out)
    }

    /// Initial front set: one Riemann fan per breakpoint.
    pub fn init(&self, profile: &InitialProfile) -> Result<(FrontSet, Vec<DroppedWave>), TrackingError> {
        let (xs, states) = profile.piecewise(&self.solver)?;
        let mut fs = FrontSet::new(0.0, self.opts.h, states[0].clone(), states.last().unwrap().clone());
        let mut dropped = Vec::new();
        let i = self.solver.curves.model.cc_index();
        for (k, &x) in xs.iter().enumerate() {
            let mut fan = self.solver.solve(&states[k], &states[k + 1])?;
            dropped.extend(self.drop_small(&mut fan, 0.0, x)?);
            let fronts = self.fronts_for(&mut fs, &fan, x, 0.0)?;
            if x == 0.0 {
                let shocks: Vec<&Front> = fronts
                    .iter()
                    .filter(|f| f.wave.family == i && f.wave.is_shock())
                    .collect();
                if let Some(n) = shocks.iter().find(|f| f.wave.kind == WaveKind::NonclassicalShock) {
                    fs.strong.y = Some(n.id());
                    fs.strong.z = fronts
                        .iter()
                        .find(|f| f.wave.family == i && f.wave.kind == WaveKind::ClassicalShock && f.speed >= n.speed)
                        .map(|f| f.id());
                } else {
                    fs.strong.y = largest_classical(&fronts, i);
                }
            }
            fs.fronts.extend(fronts);
        }
        if fs.fronts.len() > self.opts.max_fronts {
            return Err(TrackingError::FrontOverflow {
                count: fs.fronts.len(),
                cap: self.opts.max_fronts,
                time: 0.0,
            });
        }
        Ok((fs, dropped))
    }

    /// Resolves the collision of the cluster `lo..=hi` at `(t, x)`.
    pub fn resolve(
        &self,
        fs: &mut FrontSet,
        lo: usize,
        hi: usize,
        t: f64,
        x: f64,
        index: usize,
    ) -> Result<InteractionEvent, TrackingError> {
        let i = self.solver.curves.model.cc_index();
        let incoming: Vec<Wave> = fs.fronts[lo..=hi].iter().map(|f| f.wave.clone()).collect();
        let ul = incoming[0].left.clone();
        let ur = incoming.last().unwrap().right.clone();
        let mut fan = self.solver.solve(&ul, &ur)?;
        let dropped = self.drop_small(&mut fan, t, x)?;
        let new_fronts = self.fronts_for(fs, &fan, x, t)?;
        let before = fs.strong;
        let in_ids: Vec<u64> = incoming.iter().map(|w| w.id).collect();
        let has_y = before.y.is_some_and(|y| in_ids.contains(&y));
        let has_z = before.z.is_some_and(|z| in_ids.contains(&z));
        let mut after = before;
        if has_y || has_z {
            let n = new_fronts
                .iter()
                .find(|f| f.wave.family == i && f.wave.kind == WaveKind::NonclassicalShock);
            if has_y {
                match n {
                    Some(n) => {
                        after.y = Some(n.id());
                        let follower = new_fronts
                            .iter()
                            .skip_while(|f| f.id() != n.id())
                            .skip(1)
                            .find(|f| f.wave.family == i && f.wave.kind == WaveKind::ClassicalShock)
                            .map(|f| f.id());
                        // A weak shock emitted behind N is not the trailing shock
                        // unless the old trailing shock took part or none existed.
                        if has_z || before.z.is_none() {
                            after.z = follower;
                        }
                    }
                    None => {
                        after.y = largest_classical(&new_fronts, i);
                        if has_z {
                            after.z = None;
                        }
                    }
                }
            } else {
                after.z = largest_classical(&new_fronts, i);
            }
            if after.y.is_none() && after.z.is_some() {
                after.y = after.z.take();
            }
        }
        fs.fronts.splice(lo..=hi, new_fronts.iter().cloned());
        fs.strong = after;
        fs.time = t;
        if fs.fronts.len() > self.opts.max_fronts {
            return Err(TrackingError::FrontOverflow {
                count: fs.fronts.len(),
                cap: self.opts.max_fronts,
                time: t,
            });
        }
        Ok(InteractionEvent {
            index,
            time: t,
            position: x,
            incoming,
            outgoing: new_fronts.into_iter().map(|f| f.wave).collect(),
            strong_before: before,
            strong_after: after,
            dropped,
        })
    }

    /// Advances `fs` event by event up to the final time, calling `observe`
    /// after every interaction.
    pub fn run(
        &self,
        mut fs: FrontSet,
        mut observe: impl FnMut(&FrontSet, &InteractionEvent),
    ) -> Result<RunSummary, TrackingError> {
        let curves = *self.curves();
        let t_final = self.opts.t_final;
        let mut ledger = fs.left_state.vector() * 0.0;
        let mut defect_rates: Vec<Vector> = fs.fronts.iter().map(|f| f.defect(&curves)).collect();
        let mut queue = CollisionQueue::default();
        for k in 0..fs.fronts.len().saturating_sub(1) {
            queue.push_pair(&fs.fronts[k], &fs.fronts[k + 1], fs.time);
        }
        let mut events = 0usize;
        let mut dropped_budget = 0.0;
        let mut piece_budget = piece_defect_budget(&fs.fronts, &defect_rates, 0.0, t_final);
        let mut truncated = false;
        loop {
            let next = queue.pop_valid(&fs);
            let Some((t, x, lo_id)) = next else { break };
            if t > t_final {
                break;
            }
            if events >= self.opts.max_events {
                truncated = true;
                break;
            }
            let dt = t - fs.time;
            for d in &defect_rates {
                ledger += d * dt;
            }
            fs.time = t;
            let Some(k) = fs.index_of(lo_id) else { break };
            let (lo, hi) = cluster(&fs, k, t, x);
            let ev = self.resolve(&mut fs, lo, hi, t, x, events)?;
            events += 1;
            dropped_budget += ev.dropped.iter().map(|d| d.budget).sum::<f64>();
            let n_new = ev.outgoing.len();
            let new_rates: Vec<Vector> = fs.fronts[lo..lo + n_new].iter().map(|f| f.defect(&curves)).collect();
            piece_budget += piece_defect_budget(&fs.fronts[lo..lo + n_new], &new_rates, t, t_final);
            defect_rates.splice(lo..=hi, new_rates);
            let a = lo.saturating_sub(1);
            let b = (lo + n_new).min(fs.fronts.len().saturating_sub(1));
            for j in a..b {
                queue.push_pair(&fs.fronts[j], &fs.fronts[j + 1], t);
            }
            observe(&fs, &ev);
        }
        if fs.time < t_final && !truncated {
            let dt = t_final - fs.time;
            for d in &defect_rates {
                ledger += d * dt;
            }
            fs.time = t_final;
        }
        Ok(RunSummary {
            final_state: fs,
            events,
            truncated,
            mass_ledger: ledger.iter().copied().collect(),
            dropped_budget,
            piece_budget,
        })
    }
}

fn piece_defect_budget(fronts: &[Front], rates: &[Vector], t: f64, t_final: f64) -> f64 {
    fronts
        .iter()
        .zip(rates)
        .filter(|(f, _)| f.wave.kind == WaveKind::RarefactionShockPiece)
        .map(|(_, r)| r.norm() * (t_final - t).max(0.0))
        .sum()
}

fn largest_classical(fronts: &[Front], family: usize) -> Option<u64> {
    fronts
        .iter()
        .filter(|f| f.wave.family == family && f.wave.kind == WaveKind::ClassicalShock)
        .max_by(|a, b| a.wave.strength.abs().total_cmp(&b.wave.strength.abs()))
        .map(|f| f.id())
}

/// Contiguous fronts meeting at `(t, x)`, starting from the pair `k, k+1`.
fn cluster(fs: &FrontSet, k: usize, t: f64, x: f64) -> (usize, usize) {
    let near = |j: usize| (fs.fronts[j].position(t) - x).abs() <= POSITION_TIE_TOL;
    let mut lo = k;
    while lo > 0 && near(lo - 1) && fs.fronts[lo - 1].speed > fs.fronts[lo].speed {
        lo -= 1;
    }
    let mut hi = k + 1;
    while hi + 1 < fs.fronts.len() && near(hi + 1) && fs.fronts[hi].speed > fs.fronts[hi + 1].speed {
        hi += 1;
    }
    (lo, hi)
}

/// Collision time of two adjacent fronts, if they approach.
pub fn collision_time(a: &Front, b: &Front, now: f64) -> Option<(f64, f64)> {
    if a.speed <= b.speed {
        return None;
    }
    let t = (b.x0 - a.x0 - b.speed * b.t0 + a.speed * a.t0) / (a.speed - b.speed);
    let t = t.max(now);
    if !t.is_finite() {
        return None;
    }
    Some((t, a.position(t)))
}

/// Earliest collision among adjacent fronts by direct scan; ties within
/// `TIME_TIE_TOL` go to the leftmost pair.  Returns the ids of the pair.
pub fn next_collision(fs: &FrontSet) -> Option<(f64, (u64, u64))> {
    let mut best: Option<(f64, f64, u64, u64)> = None;
    for w in fs.fronts.windows(2) {
        if let Some((t, x)) = collision_time(&w[0], &w[1], fs.time) {
            let better = match best {
                None => true,
                Some((bt, bx, _, _)) => t < bt - TIME_TIE_TOL || ((t - bt).abs() <= TIME_TIE_TOL && x < bx),
            };
            if better {
                best = Some((t, x, w[0].id(), w[1].id()));
            }
        }
    }
    best.map(|(t, _, a, b)| (t, (a, b)))
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    t: f64,
    x: f64,
    left: u64,
    right: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t)
            .then(o.x.total_cmp(&self.x))
            .then(o.left.cmp(&self.left))
    }
}

/// Pending collisions with lazy invalidation.
#[derive(Default)]
pub struct CollisionQueue {
    heap: BinaryHeap<Candidate>,
}

impl CollisionQueue {
    pub fn push_pair(&mut self, a: &Front, b: &Front, now: f64) {
        if let Some((t, x)) = collision_time(a, b, now) {
            self.heap.push(Candidate {
                t,
                x,
                left: a.id(),
                right: b.id(),
            });
        }
    }

    fn valid(c: &Candidate, pos: &HashMap<u64, usize>) -> bool {
        match (pos.get(&c.left), pos.get(&c.right)) {
            (Some(&a), Some(&b)) => b == a + 1,
            _ => false,
        }
    }

    /// Earliest valid collision `(t, x, left id)`, leftmost among ties.
    pub fn pop_valid(&mut self, fs: &FrontSet) -> Option<(f64, f64, u64)> {
        let pos: HashMap<u64, usize> = fs.fronts.iter().enumerate().map(|(k, f)| (f.id(), k)).collect();
        let first = loop {
            let c = self.heap.pop()?;
            if Self::valid(&c, &pos) {
                break c;
            }
        };
        let mut best = first;
        let mut held = Vec::new();
        while let Some(c) = self.heap.peek().copied() {
            if c.t > first.t + TIME_TIE_TOL {
                break;
            }
            self.heap.pop();
            if !Self::valid(&c, &pos) {
                continue;
            }
            if c.x < best.x {
                held.push(best);
                best = c;
            } else {
                held.push(c);
            }
        }
        // Tied collisions keep the earliest time of the group.
        let t = first.t.min(best.t);
        self.heap.extend(held);
        Some((t, best.x, best.left))
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub final_state: FrontSet,
    pub events: usize,
    pub truncated: bool,
    /// Integrated Rankine-Hugoniot defect of all fronts.
    pub mass_ledger: Vec<f64>,
    pub dropped_budget: f64,
    pub piece_budget: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::KineticFunction;
    use crate::model::{Cubic, FluxModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn profile(ul: f64, ur: f64, jumps: Vec<(f64, f64)>) -> InitialProfile {
        InitialProfile {
            u_star: vec![ul],
            base_right: BaseRight::State(vec![ur]),
            jumps: jumps.into_iter().map(|(x, d)| Jump { x, delta: vec![d] }).collect(),
        }
    }

    fn front(id: u64, x: f64, s: f64) -> Front {
        Front {
            x0: x,
            t0: 0.0,
            speed: s,
            wave: Wave {
                family: 0,
                kind: WaveKind::ClassicalShock,
                left: State::scalar(0.0),
                right: State::scalar(0.0),
                speed: WaveSpeed::Single(s),
                strength: 0.0,
                id,
            },
        }
    }

    fn set(fronts: Vec<Front>) -> FrontSet {
        let mut fs = FrontSet::new(0.0, 0.01, State::scalar(0.0), State::scalar(0.0));
        fs.fronts = fronts;
        fs
    }

    #[test]
    fn kinematics() {
        let fs = set(vec![front(1, 0.0, 2.0), front(2, 1.0, 1.0)]);
        assert_eq!(next_collision(&fs), Some((1.0, (1, 2))));
        let fs = set(vec![front(1, 0.0, 1.0), front(2, 1.0, 2.0)]);
        assert_eq!(next_collision(&fs), None);
        // Both pairs meet at t = 1 up to roundoff; the leftmost wins.
        let fs = set(vec![front(1, 0.0, 2.0), front(2, 1.0, 1.0), front(3, 2.0, 0.0 + 1e-13)]);
        assert_eq!(next_collision(&fs).unwrap().1, (1, 2));
    }

    #[test]
    fn queue_matches_scan() {
        let fs = set(vec![
            front(1, 0.0, 3.0),
            front(2, 1.0, 1.0),
            front(3, 2.0, 2.5),
            front(4, 3.0, -1.0),
        ]);
        let mut q = CollisionQueue::default();
        for w in fs.fronts.windows(2) {
            q.push_pair(&w[0], &w[1], 0.0);
        }
        let (t, _, left) = q.pop_valid(&fs).unwrap();
        let (ts, (a, _)) = next_collision(&fs).unwrap();
        assert_eq!(t, ts);
        assert_eq!(left, a);
    }

    #[test]
    fn baseline_initial_shock() {
        let m = Cubic::default();
        let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        let solver = RiemannSolver::new(Curves::new(&m), &k, true);
        let tr = Tracker::new(
            solver,
            TrackingOptions {
                h: 0.01,
                ..Default::default()
            },
        );
        let p = InitialProfile {
            u_star: vec![1.0],
            base_right: BaseRight::Nucleation,
            jumps: vec![],
        };
        let (fs, _) = tr.init(&p).unwrap();
        assert_eq!(fs.fronts.len(), 1);
        assert_abs_diff_eq!(fs.fronts[0].speed, 0.765625, epsilon = 1e-12);
        assert_eq!(fs.strong.y, Some(fs.fronts[0].id()));
    }

    #[test]
    fn rarefaction_pieces() {
        let m = Cubic::default();
        let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        let solver = RiemannSolver::new(Curves::new(&m), &k, true);
        let tr = Tracker::new(
            solver,
            TrackingOptions {
                h: 0.05,
                ..Default::default()
            },
        );
        let (fs, _) = tr.init(&profile(1.0, 1.2, vec![])).unwrap();
        assert_eq!(fs.fronts.len(), 4);
        for f in &fs.fronts {
            let c = tr.solver.curves.shock_speed(&f.wave.left, &f.wave.right).unwrap();
            assert_eq!(f.speed, c);
            assert!(f.wave.strength.abs() <= 0.05 + 1e-12);
        }
        let (fs, _) = tr.init(&profile(0.4, 0.4, vec![])).unwrap();
        assert!(fs.fronts.is_empty());
    }

    #[test]
    fn classical_transport() {
        let m = Cubic::default();
        let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        let solver = RiemannSolver::new(Curves::new(&m), &k, true);
        let tr = Tracker::new(
            solver,
            TrackingOptions {
                h: 0.01,
                t_final: 1.0,
                ..Default::default()
            },
        );
        let (fs, _) = tr.init(&profile(1.0, 0.5, vec![])).unwrap();
        let out = tr.run(fs, |_, _| {}).unwrap();
        assert_eq!(out.events, 0);
        assert_abs_diff_eq!(out.final_state.fronts[0].position(1.0), 1.75, epsilon = 1e-15);
    }

    #[test]
    fn split_then_state_chaining() {
        let m = Cubic::default();
        let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
        let solver = RiemannSolver::new(Curves::new(&m), &k, true);
        let tr = Tracker::new(
            solver,
            TrackingOptions {
                h: 0.01,
                t_final: 3.0,
                ..Default::default()
            },
        );
        let p = InitialProfile {
            u_star: vec![1.0],
            base_right: BaseRight::Nucleation,
            jumps: vec![Jump {
                x: 0.5,
                delta: vec![-0.075],
            }],
        };
        let (fs, _) = tr.init(&p).unwrap();
        let mut splits = 0;
        let out = tr
            .run(fs, |fs, ev| {
                fs.check_consistency().unwrap();
                if ev.is_split() {
                    splits += 1;
                    let y = fs.front(fs.strong.y.unwrap()).unwrap();
                    assert_eq!(y.wave.kind, WaveKind::NonclassicalShock);
                    let z = fs.front(fs.strong.z.unwrap()).unwrap();
                    assert_eq!(z.wave.kind, WaveKind::ClassicalShock);
                }
            })
            .unwrap();
        assert_eq!(splits, 1);
        assert!(out.events >= 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_runs_stay_consistent(
            jumps in prop::collection::vec((-1.0f64..1.0, -0.05f64..0.05), 0..6),
        ) {
            let m = Cubic::default();
            let k = KineticFunction::theta(0.5, Some(0.5)).unwrap();
            let solver = RiemannSolver::new(Curves::new(&m), &k, true);
            let tr = Tracker::new(solver, TrackingOptions { h: 0.02, t_final: 1.5, ..Default::default() });
            let mut js: Vec<(f64, f64)> = Vec::new();
            for (x, d) in jumps {
                if x.abs() > 1e-3 && js.iter().all(|(y, _)| (x - y).abs() > 1e-3) {
                    js.push((x, d));
                }
            }
            let p = InitialProfile {
                u_star: vec![1.0],
                base_right: BaseRight::Nucleation,
                jumps: js.into_iter().map(|(x, d)| Jump { x, delta: vec![d] }).collect(),
            };
            let (fs, _) = tr.init(&p).unwrap();
            let r = 50.0;
            let m0 = fs.mass(r)[0];
            let out = tr.run(fs, |fs, _| { fs.check_consistency().unwrap(); }).unwrap();
            let fsf = &out.final_state;
            let flux = m.flux(&fsf.left_state)[0] - m.flux(&fsf.right_state)[0];
            let raw = fsf.mass(r)[0] - m0 - 1.5 * flux;
            prop_assert!((raw - out.mass_ledger[0]).abs() < 1e-10, "{raw} vs {:?}", out.mass_ledger);
        }
    }
}
