//! Classical and nonclassical Riemann solvers.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{CurveError, Curves, ShockClass};
use crate::diagnostics::wave_strength;
use crate::kinetics::{CriticalMaps, KineticError, KineticFunction};
use crate::model::{check_ball, FieldKind, State};
use crate::numerics::{brent, newton_fd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiemannError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Kinetic(#[from] KineticError),
    #[error("wave-curve intersection did not converge (residual {residual:e} after {iterations} iterations)")]
    Divergence { residual: f64, iterations: usize },
    #[error(
        "parameter m = {m} of family {family} falls in the no-solution gap between mu_sharp = {sharp} and mu_nucleation = {nucleation}"
    )]
    NoSolutionGap {
        family: usize,
        m: f64,
        sharp: f64,
        nucleation: f64,
    },
}

impl From<crate::model::ModelError> for RiemannError {
    fn from(e: crate::model::ModelError) -> Self {
        RiemannError::Curve(CurveError::Model(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaveKind {
    ClassicalShock,
    NonclassicalShock,
    Rarefaction,
    Contact,
    RarefactionShockPiece,
}

impl WaveKind {
    /// Genuine shocks: contacts and rarefaction pieces are excluded.
    pub fn is_shock(self) -> bool {
        matches!(self, WaveKind::ClassicalShock | WaveKind::NonclassicalShock)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaveSpeed {
    Single(f64),
    Fan(f64, f64),
}

impl WaveSpeed {
    pub fn lo(self) -> f64 {
        match self {
            WaveSpeed::Single(s) => s,
            WaveSpeed::Fan(a, _) => a,
        }
    }

    pub fn hi(self) -> f64 {
        match self {
            WaveSpeed::Single(s) => s,
            WaveSpeed::Fan(_, b) => b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub family: usize,
    pub kind: WaveKind,
    pub left: State,
    pub right: State,
    pub speed: WaveSpeed,
    pub strength: f64,
    pub id: u64,
}

impl Wave {
    pub fn is_shock(&self) -> bool {
        self.kind.is_shock()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveFan {
    pub left: State,
    pub right: State,
    pub waves: Vec<Wave>,
}

impl WaveFan {
    pub fn empty(u: &State) -> Self {
        WaveFan {
            left: u.clone(),
            right: u.clone(),
            waves: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.waves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }

    /// Self-similar solution value at `xi = x / t`.
    pub fn state_at(&self, curves: &Curves<'_>, xi: f64) -> State {
        for w in &self.waves {
            if xi < w.speed.lo() {
                return w.left.clone();
            }
            if let WaveSpeed::Fan(lo, hi) = w.speed {
                if xi <= hi {
                    return rarefaction_state_at(curves, w, xi.clamp(lo, hi));
                }
            }
        }
        self.right.clone()
    }

    /// Structural and admissibility checks; returns the list of violations.
    pub fn validate(&self, curves: &Curves<'_>, kin: &KineticFunction) -> Vec<String> {
        let tol = 1e-9;
        let mut out = Vec::new();
        let mut prev = &self.left;
        let mut last_speed = f64::NEG_INFINITY;
        for (k, w) in self.waves.iter().enumerate() {
            if &w.left != prev {
                out.push(format!("wave {k}: left state does not chain"));
            }
            prev = &w.right;
            if w.speed.lo() + tol < last_speed {
                out.push(format!(
                    "wave {k}: speed {} below previous {}",
                    w.speed.lo(),
                    last_speed
                ));
            }
            last_speed = w.speed.hi();
            match w.kind {
                WaveKind::Rarefaction => {
                    if w.speed.lo() > w.speed.hi() + tol {
                        out.push(format!("wave {k}: rarefaction speeds decrease"));
                    }
                }
                WaveKind::ClassicalShock | WaveKind::NonclassicalShock => {
                    let s = w.speed.lo();
                    let e = curves.dissipation_at_speed(&w.left, &w.right, s);
                    if e > tol {
                        out.push(format!("wave {k}: entropy dissipation {e:e} > 0"));
                    }
                    let class = curves.classify_with_speed(&w.left, &w.right, w.family, s);
                    match (w.kind, class) {
                        (WaveKind::ClassicalShock, Ok(ShockClass::Lax)) => {}
                        (WaveKind::NonclassicalShock, Ok(c)) if c != ShockClass::Lax => {
                            if let Ok(maps) = CriticalMaps::compute(curves, kin, &w.left) {
                                let mr = curves.model.mu_family(w.family, &w.right);
                                if (mr - maps.flat).abs() > 1e-10 {
                                    out.push(format!("wave {k}: kinetic relation residual {:e}", mr - maps.flat));
                                }
                            }
                        }
                        (kind, c) => out.push(format!("wave {k}: {kind:?} classified {c:?}")),
                    }
                }
                _ => {}
            }
        }
        if prev != &self.right {
            out.push("fan does not end at the right state".into());
        }
        out
    }
}

fn rarefaction_state_at(curves: &Curves<'_>, w: &Wave, xi: f64) -> State {
    let j = w.family;
    let m0 = curves.model.mu_family(j, &w.left);
    let m1 = curves.model.mu_family(j, &w.right);
    let g = |m: f64| -> Option<f64> {
        let p = curves.rarefaction_point(&w.left, j, m).ok()?;
        Some(curves.lambda(j, &p.state).ok()? - xi)
    };
    match brent(g, m0, m1, 1e-15) {
        Ok(m) => curves
            .rarefaction_point(&w.left, j, m)
            .map(|p| p.state)
            .unwrap_or_else(|_| w.left.clone()),
        Err(_) => {
            if (xi - w.speed.lo()).abs() < (xi - w.speed.hi()).abs() {
                w.left.clone()
            } else {
                w.right.clone()
            }
        }
    }
}

/// Ties with the nucleation threshold go to the classical shock; the
/// threshold itself carries root-finding roundoff.
pub const NUCLEATION_TIE_TOL: f64 = 1e-12;

/// Which part of the wave curve of the concave-convex family to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// The nonclassical curve with kinetics and, when enabled, nucleation.
    #[default]
    Auto,
    /// The classical composite curve (shock down to mu_natural, then a
    /// contact followed by a rarefaction).
    Classical,
    /// Always a nonclassical shock first, then the trailing wave.
    Nonclassical,
    /// Rarefaction or plain Hugoniot point, no kinetics.
    ExtendedHugoniot,
}

/// End state and waves of one wave-curve evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment {
    pub state: State,
    pub waves: Vec<Wave>,
}

#[derive(Clone, Copy, Debug)]
pub struct RiemannSolver<'a> {
    pub curves: Curves<'a>,
    pub kin: &'a KineticFunction,
    pub use_nucleation: bool,
}

impl<'a> RiemannSolver<'a> {
    pub fn new(curves: Curves<'a>, kin: &'a KineticFunction, use_nucleation: bool) -> Self {
        RiemannSolver {
            curves,
            kin,
            use_nucleation,
        }
    }

    fn shock(&self, a: &State, b: &State, family: usize, speed: f64, kind: WaveKind) -> Result<Wave, RiemannError> {
        Ok(Wave {
            family,
            kind,
            left: a.clone(),
            right: b.clone(),
            speed: WaveSpeed::Single(speed),
            strength: 0.0,
            id: 0,
        })
    }

    fn rarefaction(&self, a: &State, b: &State, family: usize) -> Result<Wave, RiemannError> {
        Ok(Wave {
            family,
            kind: WaveKind::Rarefaction,
            left: a.clone(),
            right: b.clone(),
            speed: WaveSpeed::Fan(self.curves.lambda(family, a)?, self.curves.lambda(family, b)?),
            strength: 0.0,
            id: 0,
        })
    }

    fn rarefaction_fragment(&self, u: &State, family: usize, m: f64) -> Result<Fragment, RiemannError> {
        let p = self.curves.rarefaction_point(u, family, m)?;
        let waves = if p.state == *u {
            Vec::new()
        } else {
            vec![self.rarefaction(u, &p.state, family)?]
        };
        Ok(Fragment { state: p.state, waves })
    }

    fn hugoniot_fragment(&self, u: &State, family: usize, m: f64, kind: WaveKind) -> Result<Fragment, RiemannError> {
        let p = self.curves.hugoniot_point(u, family, m)?;
        let waves = if p.state == *u {
            Vec::new()
        } else {
            vec![self.shock(u, &p.state, family, p.speed.expect("Hugoniot speed"), kind)?]
        };
        Ok(Fragment { state: p.state, waves })
    }

    /// Point with parameter `m` on the `family` wave curve issuing from `u_minus`.
    pub fn wave_curve_point(
        &self,
        u_minus: &State,
        family: usize,
        m: f64,
        branch: Branch,
    ) -> Result<Fragment, RiemannError> {
        let mut frag = self.fragment(u_minus, family, m, branch)?;
        self.fill_strengths(&mut frag.waves)?;
        Ok(frag)
    }

    // Strengths fold negative-side states through a Hugoniot trace, which is
    // costly for generic models; they are filled in once the states are final.
    fn fill_strengths(&self, waves: &mut [Wave]) -> Result<(), RiemannError> {
        for w in waves.iter_mut() {
            w.strength = wave_strength(&self.curves, &w.left, &w.right, w.family)?;
        }
        Ok(())
    }

    fn fragment(&self, u_minus: &State, family: usize, m: f64, branch: Branch) -> Result<Fragment, RiemannError> {
        let model = self.curves.model;
        check_ball(u_minus, model.delta0())?;
        let mu0 = model.mu_family(family, u_minus);
        if m == mu0 {
            return Ok(Fragment {
                state: u_minus.clone(),
                waves: Vec::new(),
            });
        }
        if family != model.cc_index() {
            return match model.field_kinds()[family] {
                FieldKind::Ld => self.hugoniot_fragment(u_minus, family, m, WaveKind::Contact),
                // The orientation of a genuinely nonlinear family is read off
                // the characteristic speed along its integral curve.
                _ => {
                    let p = self.curves.rarefaction_point(u_minus, family, m)?;
                    if self.curves.lambda(family, &p.state)? > self.curves.lambda(family, u_minus)? {
                        let w = self.rarefaction(u_minus, &p.state, family)?;
                        Ok(Fragment {
                            state: p.state,
                            waves: vec![w],
                        })
                    } else {
                        self.hugoniot_fragment(u_minus, family, m, WaveKind::ClassicalShock)
                    }
                }
            };
        }
        if mu0.abs() < 1e-14 {
            return self.rarefaction_fragment(u_minus, family, m);
        }
        let s = mu0.signum();
        if s * m >= s * mu0 {
            return self.rarefaction_fragment(u_minus, family, m);
        }
        // The tangency point and the kinetic and nucleation thresholds lie
        // across the inflection manifold, so shocks that stay on the side of
        // `u_minus` are classical.
        if branch == Branch::ExtendedHugoniot || s * m > 0.0 {
            return self.hugoniot_fragment(u_minus, family, m, WaveKind::ClassicalShock);
        }
        let trace = self.curves.hugoniot_trace(u_minus, family)?;
        match branch {
            Branch::Classical => {
                let natural = trace.natural()?;
                if s * m >= s * natural {
                    let p = trace.point(m)?;
                    let w = self.shock(u_minus, &p.state, family, p.speed.unwrap(), WaveKind::ClassicalShock)?;
                    return Ok(Fragment {
                        state: p.state,
                        waves: vec![w],
                    });
                }
                let p = trace.point(natural)?;
                let w = self.shock(u_minus, &p.state, family, p.speed.unwrap(), WaveKind::ClassicalShock)?;
                let mut tail = self.rarefaction_fragment(&p.state, family, m)?;
                tail.waves.insert(0, w);
                Ok(tail)
            }
            Branch::Auto | Branch::Nonclassical => {
                let maps = CriticalMaps::from_trace(&trace, self.kin)?;
                let nucleation = if self.use_nucleation {
                    maps.nucleation
                } else {
                    maps.sharp
                };
                if branch == Branch::Auto && s * m >= s * nucleation - NUCLEATION_TIE_TOL * (1.0 + mu0.abs()) {
                    let p = trace.point(m)?;
                    let w = self.shock(u_minus, &p.state, family, p.speed.unwrap(), WaveKind::ClassicalShock)?;
                    return Ok(Fragment {
                        state: p.state,
                        waves: vec![w],
                    });
                }
                let speed = trace.lambda_bar(maps.flat)?;
                let ub = maps.flat_state.clone();
                let class = self.curves.classify_with_speed(u_minus, &ub, family, speed)?;
                let kind = if class == ShockClass::Lax {
                    WaveKind::ClassicalShock
                } else {
                    WaveKind::NonclassicalShock
                };
                let n = self.shock(u_minus, &ub, family, speed, kind)?;
                let mut tail = if s * m >= s * maps.flat {
                    self.hugoniot_fragment(&ub, family, m, WaveKind::ClassicalShock)?
                } else {
                    self.rarefaction_fragment(&ub, family, m)?
                };
                tail.waves.insert(0, n);
                Ok(tail)
            }
            Branch::ExtendedHugoniot => unreachable!(),
        }
    }

    /// Nonclassical Riemann solution between `ul` and `ur`.
    pub fn solve(&self, ul: &State, ur: &State) -> Result<WaveFan, RiemannError> {
        self.solve_with(ul, ur, Branch::Auto)
    }

    /// Classical Riemann solution (no kinetic relation).
    pub fn solve_classical(&self, ul: &State, ur: &State) -> Result<WaveFan, RiemannError> {
        self.solve_with(ul, ur, Branch::Classical)
    }

    fn solve_with(&self, ul: &State, ur: &State, branch: Branch) -> Result<WaveFan, RiemannError> {
        let model = self.curves.model;
        check_ball(ul, model.delta0())?;
        check_ball(ur, model.delta0())?;
        if ul == ur {
            return Ok(WaveFan::empty(ul));
        }
        if model.dim() == 1 {
            let frag = self.fragment(ul, 0, model.mu_family(0, ur), branch)?;
            return self.finish(ul, ur, frag.waves);
        }
        self.solve_system(ul, ur, branch)
    }

    fn finish(&self, ul: &State, ur: &State, waves: Vec<Wave>) -> Result<WaveFan, RiemannError> {
        // Drop roundoff-level waves left by the intersection solve and re-chain.
        let mut waves: Vec<Wave> = waves
            .into_iter()
            .filter(|w| w.left.distance(&w.right) > 1e-13)
            .collect();
        let mut prev = ul.clone();
        for w in waves.iter_mut() {
            w.left = prev;
            prev = w.right.clone();
        }
        if let Some(last) = waves.last_mut() {
            last.right = ur.clone();
        }
        self.fill_strengths(&mut waves)?;
        Ok(WaveFan {
            left: ul.clone(),
            right: ur.clone(),
            waves,
        })
    }

    fn compose(&self, ul: &State, m: &[f64], branches: &[Branch]) -> Result<(Vec<State>, Vec<Wave>), RiemannError> {
        let mut states = vec![ul.clone()];
        let mut waves = Vec::new();
        for (j, (&mj, &b)) in m.iter().zip(branches).enumerate() {
            let frag = self.fragment(states.last().unwrap(), j, mj, b)?;
            waves.extend(frag.waves);
            states.push(frag.state);
        }
        Ok((states, waves))
    }

    fn intersect(
        &self,
        ul: &State,
        ur: &State,
        m0: DVector<f64>,
        branches: &[Branch],
    ) -> Result<DVector<f64>, RiemannError> {
        let f = |m: &DVector<f64>| -> Option<DVector<f64>> {
            let (states, _) = self.compose(ul, m.as_slice(), branches).ok()?;
            Some(states.last()?.vector() - ur.vector())
        };
        let (m, res) = newton_fd(f, m0, 1e-14, 60, 1e-7);
        let (states, _) = self.compose(ul, m.as_slice(), branches)?;
        let residual = (states.last().unwrap().vector() - ur.vector()).norm();
        if residual.is_finite() && residual <= 1e-11 {
            Ok(m)
        } else {
            Err(RiemannError::Divergence {
                residual: if residual.is_finite() { residual } else { res },
                iterations: 60,
            })
        }
    }

    fn solve_system(&self, ul: &State, ur: &State, branch: Branch) -> Result<WaveFan, RiemannError> {
        let model = self.curves.model;
        let n = model.dim();
        let i = model.cc_index();
        let e = model.eigen(ul)?;
        let alpha = &e.left * (ur.vector() - ul.vector());
        let m0 = DVector::from_iterator(
            n,
            (0..n).map(|j| model.mu_family(j, ul) + alpha[j] * model.mu_gradient(j, ul).dot(&e.r(j))),
        );
        let mut branches = vec![Branch::Auto; n];
        if branch == Branch::Classical {
            branches[i] = Branch::Classical;
            let m = self.intersect(ul, ur, m0, &branches)?;
            let (_, waves) = self.compose(ul, m.as_slice(), &branches)?;
            return self.finish(ul, ur, waves);
        }
        branches[i] = Branch::ExtendedHugoniot;
        let m = self.intersect(ul, ur, m0, &branches)?;
        let (states, waves) = self.compose(ul, m.as_slice(), &branches)?;
        let u_i = &states[i];
        let mu0 = model.mu_family(i, u_i);
        let s = mu0.signum();
        let is_shock = mu0.abs() >= 1e-14 && s * m[i] < s * mu0;
        if !is_shock {
            return self.finish(ul, ur, waves);
        }
        let maps = CriticalMaps::compute(&self.curves, self.kin, u_i)?;
        let nucleation = if self.use_nucleation {
            maps.nucleation
        } else {
            maps.sharp
        };
        if s * m[i] >= s * nucleation - NUCLEATION_TIE_TOL * (1.0 + mu0.abs()) {
            return self.finish(ul, ur, waves);
        }
        branches[i] = Branch::Nonclassical;
        let m = self.intersect(ul, ur, m, &branches)?;
        let (states, waves) = self.compose(ul, m.as_slice(), &branches)?;
        let u_i = &states[i];
        let maps = CriticalMaps::compute(&self.curves, self.kin, u_i)?;
        let s = maps.mu.signum();
        if s * m[i] < s * maps.sharp {
            self.finish(ul, ur, waves)
        } else {
            Err(RiemannError::NoSolutionGap {
                family: i,
                m: m[i],
                sharp: maps.sharp,
                nucleation: if self.use_nucleation {
                    maps.nucleation
                } else {
                    maps.sharp
                },
            })
        }
    }
}
