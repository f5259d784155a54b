//! Hugoniot loci, rarefaction curves, shock speeds, entropy dissipation and
//! the critical-point maps of the concave-convex family.

use std::cell::RefCell;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_ball, FluxModel, Matrix, ModelError, State, Vector};
use crate::numerics::{brent, golden_section, newton_fd, RootError, GL_NODES, GL_WEIGHTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Hugoniot continuation failed near m = {m} (residual {residual})")]
    Continuation { m: f64, residual: f64 },
    #[error("states {left:?} -> {right:?} are not Rankine-Hugoniot compatible (residual {residual})")]
    Inconsistent {
        left: Vec<f64>,
        right: Vec<f64>,
        residual: f64,
    },
    #[error("shock speed undefined for coincident states without a family")]
    Degenerate,
    #[error("shock speed increases monotonically along the Hugoniot curve of {state:?}")]
    NoInteriorMinimum { state: Vec<f64> },
    #[error("bracket failure while locating {what} for {state:?}")]
    Bracket { what: &'static str, state: Vec<f64> },
}

impl CurveError {
    pub fn is_out_of_ball(&self) -> bool {
        matches!(self, CurveError::Model(ModelError::OutOfBall { .. }))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CurveOptions {
    /// Use exact algebra for scalar laws instead of continuation.
    pub exact_scalar: bool,
    pub continuation_step: f64,
    pub newton_tol: f64,
    pub rh_tol: f64,
    pub rk_step: f64,
    pub speed_tie_tol: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        CurveOptions {
            exact_scalar: true,
            continuation_step: 1e-2,
            newton_tol: 1e-12,
            rh_tol: 1e-11,
            rk_step: 1e-3,
            speed_tie_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub state: State,
    pub m: f64,
    pub speed: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShockClass {
    Lax,
    SlowUndercompressive,
    FastUndercompressive,
    RarefactionShock,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroMaps {
    pub natural: f64,
    pub minus_natural: Option<f64>,
    pub flat_zero: f64,
    pub sharp_zero: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Curves<'a> {
    pub model: &'a dyn FluxModel,
    pub opts: CurveOptions,
}

impl<'a> Curves<'a> {
    pub fn new(model: &'a dyn FluxModel) -> Self {
        Curves {
            model,
            opts: CurveOptions::default(),
        }
    }

    pub fn with_options(model: &'a dyn FluxModel, opts: CurveOptions) -> Self {
        Curves { model, opts }
    }

    fn exact(&self) -> bool {
        self.opts.exact_scalar && self.model.dim() == 1 && self.model.scalar_mu_inverse(0.0).is_some()
    }

    pub fn lambda(&self, family: usize, u: &State) -> Result<f64, CurveError> {
        Ok(self.model.eigen(u)?.lambdas[family])
    }

    /// Averaged Jacobian `int_0^1 Df(a + t(b - a)) dt`.
    pub fn averaged_jacobian(&self, a: &State, b: &State) -> Matrix {
        let d = b.vector() - a.vector();
        let n = a.dim();
        let mut acc = Matrix::zeros(n, n);
        for (t, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            let p = State::from(a.vector() + &d * *t);
            acc += self.model.jacobian(&p) * *w;
        }
        acc
    }

    pub fn rh_residual(&self, a: &State, b: &State, s: f64) -> f64 {
        let df = self.model.flux(b) - self.model.flux(a);
        (df - (b.vector() - a.vector()) * s).norm()
    }

    /// Rankine–Hugoniot speed of the jump `a -> b`.
    pub fn shock_speed(&self, a: &State, b: &State) -> Result<f64, CurveError> {
        let d = b.vector() - a.vector();
        let dn = d.norm();
        if dn == 0.0 {
            if a.dim() == 1 {
                return self.lambda(0, a);
            }
            return Err(CurveError::Degenerate);
        }
        let ad = self.averaged_jacobian(a, b) * &d;
        let s = ad.dot(&d) / (dn * dn);
        if a.dim() > 1 {
            let res = (&ad - &d * s).norm();
            let scale = 1.0 + ad.norm();
            if res > 1e-9 * scale {
                return Err(CurveError::Inconsistent {
                    left: a.to_vec(),
                    right: b.to_vec(),
                    residual: res,
                });
            }
        }
        Ok(s)
    }

    /// Shock speed with the coincident-state limit resolved by `family`.
    pub fn shock_speed_family(&self, a: &State, b: &State, family: usize) -> Result<f64, CurveError> {
        if a == b {
            return self.lambda(family, a);
        }
        self.shock_speed(a, b)
    }

    /// Speed assigned to a small jump of `family` that need not be an exact
    /// discontinuity: the family projection of the averaged flux jump.
    pub fn piece_speed(&self, a: &State, b: &State, family: usize) -> Result<f64, CurveError> {
        if a.dim() == 1 || a == b {
            return self.shock_speed_family(a, b, family);
        }
        let d = b.vector() - a.vector();
        let mid = State::from((a.vector() + b.vector()) * 0.5);
        let l = self.model.eigen(&mid)?.l(family);
        let ad = self.averaged_jacobian(a, b) * &d;
        Ok(l.dot(&ad) / l.dot(&d))
    }

    pub fn entropy_dissipation(&self, a: &State, b: &State) -> Result<f64, CurveError> {
        let s = self.shock_speed(a, b)?;
        Ok(self.dissipation_at_speed(a, b, s))
    }

    pub fn dissipation_at_speed(&self, a: &State, b: &State, s: f64) -> f64 {
        let (ua, fa) = self.model.entropy(a);
        let (ub, fb) = self.model.entropy(b);
        -s * (ub - ua) + fb - fa
    }

    pub fn classify_shock(&self, a: &State, b: &State, family: usize) -> Result<ShockClass, CurveError> {
        let s = self.shock_speed_family(a, b, family)?;
        self.classify_with_speed(a, b, family, s)
    }

    pub fn classify_with_speed(&self, a: &State, b: &State, family: usize, s: f64) -> Result<ShockClass, CurveError> {
        let la = self.lambda(family, a)?;
        let lb = self.lambda(family, b)?;
        let tol = self.opts.speed_tie_tol;
        Ok(if la + tol >= s && s + tol >= lb {
            ShockClass::Lax
        } else if s <= la + tol && s <= lb + tol {
            ShockClass::SlowUndercompressive
        } else if s + tol >= la && s + tol >= lb {
            ShockClass::FastUndercompressive
        } else {
            ShockClass::RarefactionShock
        })
    }

    pub fn hugoniot_trace(&self, u_minus: &State, family: usize) -> Result<HugoniotTrace<'a>, CurveError> {
        HugoniotTrace::new(*self, u_minus, family)
    }

    pub fn hugoniot_point(&self, u_minus: &State, family: usize, m: f64) -> Result<CurvePoint, CurveError> {
        self.hugoniot_trace(u_minus, family)?.point(m)
    }

    pub fn rarefaction_point(&self, u_minus: &State, family: usize, m: f64) -> Result<CurvePoint, CurveError> {
        check_ball(u_minus, self.model.delta0())?;
        let m0 = self.model.mu_family(family, u_minus);
        if m == m0 {
            return Ok(CurvePoint {
                state: u_minus.clone(),
                m,
                speed: None,
            });
        }
        if self.exact() {
            let u = State::scalar(self.model.scalar_mu_inverse(m).expect("scalar inverse"));
            check_ball(&u, self.model.delta0())?;
            return Ok(CurvePoint {
                state: u,
                m,
                speed: None,
            });
        }
        let steps = ((m - m0).abs() / self.opts.rk_step).ceil().max(1.0) as usize;
        let h = (m - m0) / steps as f64;
        let field = |u: &Vector| -> Result<Vector, CurveError> {
            let s = State::from(u.clone());
            let r = self.model.eigen(&s)?.r(family);
            let g = self.model.mu_gradient(family, &s);
            Ok(&r / g.dot(&r))
        };
        let mut u = u_minus.vector().clone();
        for _ in 0..steps {
            let k1 = field(&u)?;
            let k2 = field(&(&u + &k1 * (0.5 * h)))?;
            let k3 = field(&(&u + &k2 * (0.5 * h)))?;
            let k4 = field(&(&u + &k3 * h))?;
            u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            check_ball(&State::from(u.clone()), self.model.delta0())?;
        }
        Ok(CurvePoint {
            state: State::from(u),
            m,
            speed: None,
        })
    }

    pub fn zero_maps(&self, u_minus: &State) -> Result<ZeroMaps, CurveError> {
        self.hugoniot_trace(u_minus, self.model.cc_index())?.zero_maps()
    }

    pub fn mu_natural(&self, u_minus: &State) -> Result<f64, CurveError> {
        self.hugoniot_trace(u_minus, self.model.cc_index())?.natural()
    }

    pub fn mu_minus_natural(&self, u_minus: &State) -> Result<Option<f64>, CurveError> {
        let t = self.hugoniot_trace(u_minus, self.model.cc_index())?;
        let n = t.natural()?;
        t.minus_natural(n)
    }

    pub fn mu_flat_zero(&self, u_minus: &State) -> Result<f64, CurveError> {
        let t = self.hugoniot_trace(u_minus, self.model.cc_index())?;
        let n = t.natural()?;
        let mn = t.minus_natural(n)?;
        t.flat_zero(n, mn)
    }

    pub fn mu_sharp_zero(&self, u_minus: &State) -> Result<f64, CurveError> {
        Ok(self.zero_maps(u_minus)?.sharp_zero)
    }
}

#[derive(Clone, Debug)]
struct Node {
    m: f64,
    x: DVector<f64>,
}

/// A Hugoniot locus traced from `u_minus` by continuation in `m`, cached so
/// that repeated queries (root finding) cost one Newton correction each.
#[derive(Debug)]
pub struct HugoniotTrace<'a> {
    curves: Curves<'a>,
    u_minus: State,
    family: usize,
    mu0: f64,
    lambda0: f64,
    n0: Vector,
    up: RefCell<Vec<Node>>,
    down: RefCell<Vec<Node>>,
}

impl<'a> HugoniotTrace<'a> {
    fn new(curves: Curves<'a>, u_minus: &State, family: usize) -> Result<Self, CurveError> {
        check_ball(u_minus, curves.model.delta0())?;
        let e = curves.model.eigen(u_minus)?;
        let n0 = e.r(family);
        let mu0 = curves.model.mu_family(family, u_minus);
        let lambda0 = e.lambdas[family];
        let dim = u_minus.dim();
        let mut x0 = DVector::zeros(dim + 2);
        x0.rows_mut(0, dim).copy_from(&n0);
        x0[dim] = lambda0;
        let seed = Node { m: mu0, x: x0 };
        Ok(HugoniotTrace {
            curves,
            u_minus: u_minus.clone(),
            family,
            mu0,
            lambda0,
            n0,
            up: RefCell::new(vec![seed.clone()]),
            down: RefCell::new(vec![seed]),
        })
    }

    pub fn u_minus(&self) -> &State {
        &self.u_minus
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    fn dim(&self) -> usize {
        self.u_minus.dim()
    }

    fn state_of(&self, x: &DVector<f64>) -> State {
        let n = self.dim();
        State::from(self.u_minus.vector() + x.rows(0, n) * x[n + 1])
    }

    fn residual(&self, x: &DVector<f64>, m: f64) -> Option<DVector<f64>> {
        let n = self.dim();
        let nv: Vector = x.rows(0, n).into_owned();
        let s = x[n];
        let up = self.state_of(x);
        if !up.iter().all(|c| c.is_finite()) {
            return None;
        }
        let a = self.curves.averaged_jacobian(&self.u_minus, &up);
        let mut f = DVector::zeros(n + 2);
        let r = a * &nv - &nv * s;
        f.rows_mut(0, n).copy_from(&r);
        f[n] = nv.dot(&self.n0) - 1.0;
        f[n + 1] = self.curves.model.mu_family(self.family, &up) - m;
        Some(f)
    }

    fn correct(&self, guess: DVector<f64>, m: f64) -> Option<DVector<f64>> {
        let (x, res) = newton_fd(|x| self.residual(x, m), guess, 1e-15, 40, 1e-7);
        if res <= self.curves.opts.newton_tol {
            Some(x)
        } else {
            None
        }
    }

    fn predictor(&self, nodes: &[Node], m: f64) -> DVector<f64> {
        let last = nodes.last().expect("seed node");
        let n = self.dim();
        if nodes.len() >= 2 {
            let prev = &nodes[nodes.len() - 2];
            let dm = last.m - prev.m;
            &last.x + (&last.x - &prev.x) * ((m - last.m) / dm)
        } else {
            let mut x = last.x.clone();
            let g = self.curves.model.mu_gradient(self.family, &self.u_minus);
            x[n + 1] = (m - self.mu0) / g.dot(&self.n0);
            x
        }
    }

    /// Extends the trace in the direction of `m` until it covers `m`.
    fn extend_to(&self, m: f64) -> Result<(), CurveError> {
        let upward = m > self.mu0;
        let cell = if upward { &self.up } else { &self.down };
        let mut nodes = cell.borrow_mut();
        let mut step = self.curves.opts.continuation_step;
        loop {
            let last_m = nodes.last().expect("seed node").m;
            let remaining = m - last_m;
            if (upward && remaining <= 0.0) || (!upward && remaining >= 0.0) {
                return Ok(());
            }
            let dm = remaining.abs().min(step);
            let target = last_m + dm.copysign(remaining);
            let guess = self.predictor(&nodes, target);
            match self.correct(guess, target) {
                Some(x) => {
                    let st = self.state_of(&x);
                    check_ball(&st, self.curves.model.delta0())?;
                    nodes.push(Node { m: target, x });
                    step = (step * 2.0).min(self.curves.opts.continuation_step);
                }
                None => {
                    step *= 0.5;
                    if step < 1e-8 {
                        return Err(CurveError::Continuation {
                            m: target,
                            residual: f64::NAN,
                        });
                    }
                }
            }
        }
    }

    /// The point of the locus with `mu = m`.
    pub fn point(&self, m: f64) -> Result<CurvePoint, CurveError> {
        if m == self.mu0 {
            return Ok(CurvePoint {
                state: self.u_minus.clone(),
                m,
                speed: Some(self.lambda0),
            });
        }
        if self.curves.exact() {
            let u = State::scalar(self.curves.model.scalar_mu_inverse(m).expect("scalar inverse"));
            check_ball(&u, self.curves.model.delta0())?;
            let s = self.curves.averaged_jacobian(&self.u_minus, &u)[(0, 0)];
            return Ok(CurvePoint {
                state: u,
                m,
                speed: Some(s),
            });
        }
        let upward = m > self.mu0;
        let covered = {
            let nodes = if upward { self.up.borrow() } else { self.down.borrow() };
            let last = nodes.last().expect("seed node").m;
            if upward {
                last >= m
            } else {
                last <= m
            }
        };
        if !covered {
            self.extend_to(m)?;
        }
        let nodes = if upward { self.up.borrow() } else { self.down.borrow() };
        // Nearest node not beyond m, then one Newton correction.
        let idx = nodes
            .iter()
            .rposition(|nd| if upward { nd.m <= m } else { nd.m >= m })
            .unwrap_or(0);
        let base = &nodes[..=idx];
        let guess = self.predictor(base, m);
        let x = self
            .correct(guess, m)
            .ok_or(CurveError::Continuation { m, residual: f64::NAN })?;
        let n = self.dim();
        let state = self.state_of(&x);
        check_ball(&state, self.curves.model.delta0())?;
        let s = x[n];
        let res = self.curves.rh_residual(&self.u_minus, &state, s);
        if res > self.curves.opts.rh_tol * (1.0 + x[n + 1].abs()) {
            return Err(CurveError::Continuation { m, residual: res });
        }
        Ok(CurvePoint {
            state,
            m,
            speed: Some(s),
        })
    }

    pub fn lambda_bar(&self, m: f64) -> Result<f64, CurveError> {
        Ok(self.point(m)?.speed.expect("Hugoniot points carry a speed"))
    }

    fn dir(&self) -> f64 {
        -self.mu0.signum()
    }

    fn at(&self, t: f64) -> f64 {
        self.mu0 + self.dir() * t
    }

    /// Largest offset `t <= t_max` (away from `mu0` towards the critical
    /// points) that the locus reaches inside the ball.
    fn reach(&self, t_max: f64) -> f64 {
        if self.curves.exact() {
            let mut lo = 0.0;
            let mut hi = t_max;
            if self.point(self.at(hi)).is_ok() {
                return hi;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if self.point(self.at(mid)).is_ok() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        match self.extend_to(self.at(t_max)) {
            Ok(()) => t_max,
            Err(_) => {
                let nodes = if self.dir() > 0.0 {
                    self.up.borrow()
                } else {
                    self.down.borrow()
                };
                (nodes.last().expect("seed node").m - self.mu0).abs()
            }
        }
    }

    fn opt<T>(r: Result<T, CurveError>) -> Option<T> {
        r.ok()
    }

    fn xtol(&self) -> f64 {
        1e-15 * (1.0 + self.mu0.abs())
    }

    /// The parameter at which the shock speed is minimal along the locus.
    pub fn natural(&self) -> Result<f64, CurveError> {
        let a = self.mu0.abs();
        if a < 1e-14 {
            return Ok(self.mu0);
        }
        let l = self.reach(3.0 * a);
        let f = |t: f64| Self::opt(self.lambda_bar(self.at(t)));
        let (lo, hi) = golden_section(f, 0.0, l, 80).ok_or(CurveError::Bracket {
            what: "natural",
            state: self.u_minus.to_vec(),
        })?;
        if hi >= l * (1.0 - 1e-9) {
            return Err(CurveError::NoInteriorMinimum {
                state: self.u_minus.to_vec(),
            });
        }
        // Refine on the tangency condition lambda_bar = lambda(v(m)).
        let g = |t: f64| -> Option<f64> {
            let p = self.point(self.at(t)).ok()?;
            let lam = self.curves.lambda(self.family, &p.state).ok()?;
            Some(p.speed? - lam)
        };
        let w = (1e-4 * a).min(0.5 * lo.max(1e-300)).min(0.5 * (l - hi));
        let (ta, tb) = (lo - w, hi + w);
        let t = match brent(g, ta.max(0.0), tb.min(l), self.xtol()) {
            Ok(t) => t,
            Err(_) => 0.5 * (lo + hi),
        };
        Ok(self.at(t))
    }

    fn offset(&self, m: f64) -> f64 {
        (m - self.mu0) * self.dir()
    }

    fn scan_for_sign(&self, f: &dyn Fn(f64) -> Option<f64>, t_start: f64, step: f64, t_max: f64) -> Option<(f64, f64)> {
        let mut t0 = t_start;
        while t0 < t_max {
            // The last step is clamped to the reach of the locus.
            let t1 = (t0 + step).min(t_max);
            if f(t1)? > 0.0 {
                return Some((t0, t1));
            }
            t0 = t1;
        }
        None
    }

    /// Left-contact parameter beyond `mu_natural`, if the locus reaches it.
    pub fn minus_natural(&self, natural: f64) -> Result<Option<f64>, CurveError> {
        let a = self.mu0.abs();
        if a < 1e-14 {
            return Ok(Some(self.mu0));
        }
        let tn = self.offset(natural);
        let lam0 = self.lambda0;
        let f = move |t: f64| -> Option<f64> { Some(self.lambda_bar(self.at(t)).ok()? - lam0) };
        let t_max = self.reach(6.0 * a);
        match self.scan_for_sign(&f, tn, 0.25 * a, t_max) {
            Some((t0, t1)) => {
                let t = brent(f, t0, t1, self.xtol()).map_err(|_| self.bracket("minus_natural"))?;
                Ok(Some(self.at(t)))
            }
            None => Ok(None),
        }
    }

    fn bracket(&self, what: &'static str) -> CurveError {
        CurveError::Bracket {
            what,
            state: self.u_minus.to_vec(),
        }
    }

    fn dissipation(&self, t: f64) -> Option<f64> {
        let p = self.point(self.at(t)).ok()?;
        Some(self.curves.dissipation_at_speed(&self.u_minus, &p.state, p.speed?))
    }

    /// Zero-dissipation parameter between `mu_minus_natural` and `mu_natural`.
    pub fn flat_zero(&self, natural: f64, minus_natural: Option<f64>) -> Result<f64, CurveError> {
        let a = self.mu0.abs();
        if a < 1e-14 {
            return Ok(self.mu0);
        }
        let tn = self.offset(natural);
        let f = |t: f64| self.dissipation(t);
        if let Some(mn) = minus_natural {
            let tm = self.offset(mn);
            if let Ok(t) = brent(f, tn, tm, self.xtol()) {
                return Ok(self.at(t));
            }
        }
        let t_max = self.reach(6.0 * a);
        let (t0, t1) = self
            .scan_for_sign(&f, tn, 0.125 * a, t_max)
            .ok_or_else(|| self.bracket("flat_zero"))?;
        let t = brent(f, t0, t1, self.xtol()).map_err(|_| self.bracket("flat_zero"))?;
        Ok(self.at(t))
    }

    /// The parameter between `mu0` and `mu_natural` whose shock speed equals
    /// that of `m_other` on the far side of `mu_natural`.
    pub fn companion(&self, natural: f64, m_other: f64) -> Result<f64, CurveError> {
        if self.mu0.abs() < 1e-14 || m_other == natural {
            return Ok(natural);
        }
        let target = self.lambda_bar(m_other)?;
        let tn = self.offset(natural);
        let f = |t: f64| Some(self.lambda_bar(self.at(t)).ok()? - target);
        match brent(f, 0.0, tn, self.xtol()) {
            Ok(t) => Ok(self.at(t)),
            Err(RootError::NoSignChange { fb, .. }) if fb.abs() < 1e-14 => Ok(natural),
            Err(_) => Err(self.bracket("companion")),
        }
    }

    pub fn zero_maps(&self) -> Result<ZeroMaps, CurveError> {
        let natural = self.natural()?;
        let minus_natural = self.minus_natural(natural)?;
        let flat_zero = self.flat_zero(natural, minus_natural)?;
        let sharp_zero = self.companion(natural, flat_zero)?;
        Ok(ZeroMaps {
            natural,
            minus_natural,
            flat_zero,
            sharp_zero,
        })
    }
}
