//! Flux models: flux, Jacobian, entropy pair, eigenstructure and the global
//! parameter of each characteristic family.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Finite-difference step used for gradients a model does not supply.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state {state:?} has norm {norm} outside the ball of radius {radius}")]
    OutOfBall { state: Vec<f64>, norm: f64, radius: f64 },
    #[error("strict hyperbolicity violated at {state:?}: eigenvalue gap {gap}")]
    StrictHyperbolicity { state: Vec<f64>, gap: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown parameter `{param}` for model `{model}`")]
    UnknownParameter { model: String, param: String },
    #[error("invalid parameter `{param}`: {reason}")]
    InvalidParameter { param: String, reason: String },
}

/// A point of phase space.
#[derive(Clone, PartialEq)]
pub struct State(Vector);

impl State {
    pub fn new(components: Vec<f64>) -> Self {
        State(Vector::from_vec(components))
    }

    pub fn scalar(u: f64) -> Self {
        State(Vector::from_element(1, u))
    }

    pub fn from_vector(v: Vector) -> Self {
        State(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn vector(&self) -> &Vector {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.iter().copied().collect()
    }

    pub fn distance(&self, other: &State) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

impl Deref for State {
    type Target = Vector;
    fn deref(&self) -> &Vector {
        &self.0
    }
}

impl From<Vector> for State {
    fn from(v: Vector) -> Self {
        State(v)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State{:?}", self.to_vec())
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(State::new(Vec::<f64>::deserialize(d)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    /// Genuinely nonlinear.
    Gnl,
    /// Linearly degenerate.
    Ld,
    /// Concave-convex.
    Cc,
}

/// Eigenvalues sorted increasingly with matching right and left vectors
/// (columns of `right`, rows of `left`), normalized so that `left * right = I`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub lambdas: Vec<f64>,
    pub right: Matrix,
    pub left: Matrix,
}

impl Eigen {
    pub fn r(&self, j: usize) -> Vector {
        self.right.column(j).into_owned()
    }

    pub fn l(&self, j: usize) -> Vector {
        self.left.row(j).transpose()
    }
}

pub trait FluxModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn flux(&self, u: &State) -> Vector;
    fn jacobian(&self, u: &State) -> Matrix;
    /// Entropy and entropy flux `(U, F)`.
    fn entropy(&self, u: &State) -> (f64, f64);
    fn field_kinds(&self) -> &[FieldKind];
    /// The designated concave-convex family.
    fn cc_index(&self) -> usize;
    fn delta0(&self) -> f64;
    fn delta1(&self) -> f64;

    /// Global parameter of family `j`; oriented so that `grad mu_j . r_j > 0`.
    fn mu_family(&self, family: usize, u: &State) -> f64;

    fn mu_gradient(&self, family: usize, u: &State) -> Vector {
        fd_gradient(|x| self.mu_family(family, x), u)
    }

    fn lambda_gradient(&self, family: usize, u: &State) -> Vector {
        fd_gradient(
            |x| {
                generic_eigenvalues(&self.jacobian(x))
                    .map(|l| l[family])
                    .unwrap_or(f64::NAN)
            },
            u,
        )
    }

    fn eigen(&self, u: &State) -> Result<Eigen, ModelError> {
        generic_eigen(self, u)
    }

    fn entropy_gradients(&self, u: &State) -> (Vector, Vector) {
        (
            fd_gradient(|x| self.entropy(x).0, u),
            fd_gradient(|x| self.entropy(x).1, u),
        )
    }

    /// Smallest admissible eigenvalue gap on the ball.
    fn hyperbolicity_floor(&self) -> f64 {
        1e-8
    }

    /// For scalar laws: the unique state with `mu = m`.
    fn scalar_mu_inverse(&self, _m: f64) -> Option<f64> {
        None
    }
}

pub type SharedModel = Arc<dyn FluxModel>;

/// The global parameter of the designated CC family.
pub fn mu(model: &dyn FluxModel, u: &State) -> f64 {
    model.mu_family(model.cc_index(), u)
}

pub fn entropy_pair(model: &dyn FluxModel, u: &State) -> (f64, f64) {
    model.entropy(u)
}

pub fn eigen(model: &dyn FluxModel, u: &State) -> Result<Eigen, ModelError> {
    model.eigen(u)
}

/// Genuine-nonlinearity coefficient `m_j = grad lambda_j . r_j`.
pub fn nonlinearity(model: &dyn FluxModel, family: usize, u: &State) -> Result<f64, ModelError> {
    let e = model.eigen(u)?;
    Ok(model.lambda_gradient(family, u).dot(&e.r(family)))
}

/// Directional derivative of `m_j` along `r_j`.
pub fn nonlinearity_transversality(model: &dyn FluxModel, family: usize, u: &State) -> Result<f64, ModelError> {
    let r = model.eigen(u)?.r(family);
    let up = State::from(u.vector() + &r * FD_STEP);
    let dn = State::from(u.vector() - &r * FD_STEP);
    Ok((nonlinearity(model, family, &up)? - nonlinearity(model, family, &dn)?) / (2.0 * FD_STEP))
}

pub fn check_ball(u: &State, radius: f64) -> Result<(), ModelError> {
    let norm = u.norm();
    if norm <= radius * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(ModelError::OutOfBall {
            state: u.to_vec(),
            norm,
            radius,
        })
    }
}

pub fn fd_gradient(f: impl Fn(&State) -> f64, u: &State) -> Vector {
    let n = u.dim();
    let mut g = Vector::zeros(n);
    for k in 0..n {
        let mut up = u.vector().clone();
        let mut dn = u.vector().clone();
        up[k] += FD_STEP;
        dn[k] -= FD_STEP;
        g[k] = (f(&State::from(up)) - f(&State::from(dn))) / (2.0 * FD_STEP);
    }
    g
}

fn generic_eigenvalues(j: &Matrix) -> Option<Vec<f64>> {
    if j.nrows() == 1 {
        return Some(vec![j[(0, 0)]]);
    }
    let ev = j.clone().complex_eigenvalues();
    let scale = 1.0 + j.norm();
    let mut out = Vec::with_capacity(ev.len());
    for z in ev.iter() {
        if z.im.abs() > 1e-10 * scale {
            return None;
        }
        out.push(z.re);
    }
    out.sort_by(|a, b| a.total_cmp(b));
    Some(out)
}

/// Eigen-decomposition for an arbitrary model: real Schur eigenvalues, right
/// vectors from the SVD null space, left vectors from the inverse.
fn generic_eigen<M: FluxModel + ?Sized>(model: &M, u: &State) -> Result<Eigen, ModelError> {
    let j = model.jacobian(u);
    let n = j.nrows();
    let lambdas = generic_eigenvalues(&j).ok_or_else(|| ModelError::StrictHyperbolicity {
        state: u.to_vec(),
        gap: 0.0,
    })?;
    check_gaps(u, &lambdas, model.hyperbolicity_floor())?;
    let mut right = Matrix::zeros(n, n);
    for (k, &lam) in lambdas.iter().enumerate() {
        let shifted = &j - Matrix::identity(n, n) * lam;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let imin = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut r: Vector = v_t.row(imin).transpose();
        r /= r.norm();
        if model.mu_gradient(k, u).dot(&r) < 0.0 {
            r = -r;
        }
        right.set_column(k, &r);
    }
    let left = right
        .clone()
        .try_inverse()
        .ok_or_else(|| ModelError::StrictHyperbolicity {
            state: u.to_vec(),
            gap: 0.0,
        })?;
    Ok(Eigen { lambdas, right, left })
}

fn check_gaps(u: &State, lambdas: &[f64], floor: f64) -> Result<(), ModelError> {
    for w in lambdas.windows(2) {
        let gap = w[1] - w[0];
        if gap < floor {
            return Err(ModelError::StrictHyperbolicity { state: u.to_vec(), gap });
        }
    }
    Ok(())
}

/// The scalar law `u_t + (u^3)_x = 0` with entropy pair `(u^2, 1.5 u^4)`.
#[derive(Clone, Debug)]
pub struct Cubic {
    delta0: f64,
    delta1: f64,
}

impl Cubic {
    pub fn new(delta0: f64, delta1: f64) -> Self {
        Cubic { delta0, delta1 }
    }
}

impl Default for Cubic {
    fn default() -> Self {
        Cubic::new(2.0, 1.5)
    }
}

const CUBIC_KINDS: [FieldKind; 1] = [FieldKind::Cc];

impl FluxModel for Cubic {
    fn name(&self) -> &str {
        "cubic"
    }
    fn dim(&self) -> usize {
        1
    }
    fn flux(&self, u: &State) -> Vector {
        Vector::from_element(1, u[0].powi(3))
    }
    fn jacobian(&self, u: &State) -> Matrix {
        Matrix::from_element(1, 1, 3.0 * u[0] * u[0])
    }
    fn entropy(&self, u: &State) -> (f64, f64) {
        (u[0] * u[0], 1.5 * u[0].powi(4))
    }
    fn entropy_gradients(&self, u: &State) -> (Vector, Vector) {
        (
            Vector::from_element(1, 2.0 * u[0]),
            Vector::from_element(1, 6.0 * u[0].powi(3)),
        )
    }
    fn field_kinds(&self) -> &[FieldKind] {
        &CUBIC_KINDS
    }
    fn cc_index(&self) -> usize {
        0
    }
    fn delta0(&self) -> f64 {
        self.delta0
    }
    fn delta1(&self) -> f64 {
        self.delta1
    }
    fn mu_family(&self, _family: usize, u: &State) -> f64 {
        u[0]
    }
    fn mu_gradient(&self, _family: usize, _u: &State) -> Vector {
        Vector::from_element(1, 1.0)
    }
    fn lambda_gradient(&self, _family: usize, u: &State) -> Vector {
        Vector::from_element(1, 6.0 * u[0])
    }
    fn eigen(&self, u: &State) -> Result<Eigen, ModelError> {
        Ok(Eigen {
            lambdas: vec![3.0 * u[0] * u[0]],
            right: Matrix::from_element(1, 1, 1.0),
            left: Matrix::from_element(1, 1, 1.0),
        })
    }
    fn scalar_mu_inverse(&self, m: f64) -> Option<f64> {
        Some(m)
    }
}

/// Nonlinear elasticity `v_t - sigma(w)_x = 0`, `w_t - v_x = 0` with
/// `sigma(w) = w^3 + w`; state `(v, w)`.
#[derive(Clone, Debug)]
pub struct Elasticity {
    delta0: f64,
    delta1: f64,
}

impl Elasticity {
    pub fn new(delta0: f64, delta1: f64) -> Self {
        Elasticity { delta0, delta1 }
    }

    pub fn sigma(w: f64) -> f64 {
        w * w * w + w
    }

    pub fn sigma_prime(w: f64) -> f64 {
        3.0 * w * w + 1.0
    }

    /// Stored energy, the primitive of sigma vanishing at 0.
    pub fn stored_energy(w: f64) -> f64 {
        0.25 * w.powi(4) + 0.5 * w * w
    }
}

impl Default for Elasticity {
    fn default() -> Self {
        Elasticity::new(3.0, 2.0)
    }
}

const ELASTICITY_KINDS: [FieldKind; 2] = [FieldKind::Gnl, FieldKind::Cc];

impl FluxModel for Elasticity {
    fn name(&self) -> &str {
        "elasticity"
    }
    fn dim(&self) -> usize {
        2
    }
    fn flux(&self, u: &State) -> Vector {
        Vector::from_vec(vec![-Self::sigma(u[1]), -u[0]])
    }
    fn jacobian(&self, u: &State) -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, -Self::sigma_prime(u[1]), -1.0, 0.0])
    }
    fn entropy(&self, u: &State) -> (f64, f64) {
        let (v, w) = (u[0], u[1]);
        (0.5 * v * v + Self::stored_energy(w), -v * Self::sigma(w))
    }
    fn entropy_gradients(&self, u: &State) -> (Vector, Vector) {
        let (v, w) = (u[0], u[1]);
        (
            Vector::from_vec(vec![v, Self::sigma(w)]),
            Vector::from_vec(vec![-Self::sigma(w), -v * Self::sigma_prime(w)]),
        )
    }
    fn field_kinds(&self) -> &[FieldKind] {
        &ELASTICITY_KINDS
    }
    fn cc_index(&self) -> usize {
        1
    }
    fn delta0(&self) -> f64 {
        self.delta0
    }
    fn delta1(&self) -> f64 {
        self.delta1
    }
    fn mu_family(&self, family: usize, u: &State) -> f64 {
        if family == 0 {
            -u[1]
        } else {
            u[1]
        }
    }
    fn mu_gradient(&self, family: usize, _u: &State) -> Vector {
        if family == 0 {
            Vector::from_vec(vec![0.0, -1.0])
        } else {
            Vector::from_vec(vec![0.0, 1.0])
        }
    }
    fn lambda_gradient(&self, family: usize, u: &State) -> Vector {
        let w = u[1];
        let c = Self::sigma_prime(w).sqrt();
        let dc = 3.0 * w / c;
        if family == 0 {
            Vector::from_vec(vec![0.0, -dc])
        } else {
            Vector::from_vec(vec![0.0, dc])
        }
    }
    fn eigen(&self, u: &State) -> Result<Eigen, ModelError> {
        let c = Self::sigma_prime(u[1]).sqrt();
        let norm = (c * c + 1.0).sqrt();
        // r1 = -(c, 1), r2 = (-c, 1), both unit length.
        let right = Matrix::from_row_slice(2, 2, &[-c / norm, -c / norm, -1.0 / norm, 1.0 / norm]);
        let h = norm / (2.0 * c);
        let left = Matrix::from_row_slice(2, 2, &[-h, -c * h, -h, c * h]);
        Ok(Eigen {
            lambdas: vec![-c, c],
            right,
            left,
        })
    }
    fn hyperbolicity_floor(&self) -> f64 {
        1.0
    }
}

/// Builds a model from its name and parameter map (`delta0`, `delta1`).
pub fn build_model(name: &str, params: &BTreeMap<String, f64>) -> Result<SharedModel, ModelError> {
    let (d0, d1) = match name {
        "cubic" => (2.0, 1.5),
        "elasticity" => (3.0, 2.0),
        _ => return Err(ModelError::UnknownModel(name.to_string())),
    };
    let mut delta0 = d0;
    let mut delta1 = d1;
    for (k, &v) in params {
        match k.as_str() {
            "delta0" => delta0 = v,
            "delta1" => delta1 = v,
            _ => {
                return Err(ModelError::UnknownParameter {
                    model: name.to_string(),
                    param: k.clone(),
                })
            }
        }
    }
    if !(delta1 > 0.0 && delta1 <= delta0) {
        return Err(ModelError::InvalidParameter {
            param: "delta1".into(),
            reason: format!("need 0 < delta1 <= delta0, got {delta1} and {delta0}"),
        });
    }
    Ok(match name {
        "cubic" => Arc::new(Cubic::new(delta0, delta1)),
        _ => Arc::new(Elasticity::new(delta0, delta1)),
    })
}

/// Summary of the structural checks on sampled states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub samples: usize,
    pub min_eigen_gap: f64,
    pub min_entropy_hessian_eigenvalue: f64,
    pub max_compatibility_residual: f64,
    pub cc_sign_mismatches: usize,
    pub min_transversality: f64,
}

impl ModelReport {
    pub fn passed(&self, floor: f64) -> bool {
        self.min_eigen_gap >= floor
            && self.min_entropy_hessian_eigenvalue > 0.0
            && self.max_compatibility_residual <= 1e-8
            && self.cc_sign_mismatches == 0
            && self.min_transversality > 0.0
    }
}

/// Checks strict hyperbolicity, entropy convexity, entropy-flux compatibility
/// and the sign structure of the CC family at the given states.
pub fn verify_model(model: &dyn FluxModel, samples: &[State]) -> Result<ModelReport, ModelError> {
    let i = model.cc_index();
    let mut rep = ModelReport {
        samples: samples.len(),
        min_eigen_gap: f64::INFINITY,
        min_entropy_hessian_eigenvalue: f64::INFINITY,
        max_compatibility_residual: 0.0,
        cc_sign_mismatches: 0,
        min_transversality: f64::INFINITY,
    };
    for u in samples {
        let e = model.eigen(u)?;
        for w in e.lambdas.windows(2) {
            rep.min_eigen_gap = rep.min_eigen_gap.min(w[1] - w[0]);
        }
        let hess = entropy_hessian(model, u);
        let sym = (&hess + hess.transpose()) * 0.5;
        let min_ev = sym
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        rep.min_entropy_hessian_eigenvalue = rep.min_entropy_hessian_eigenvalue.min(min_ev);
        let grad_u = fd_gradient(|x| model.entropy(x).0, u);
        let grad_f = fd_gradient(|x| model.entropy(x).1, u);
        let compat = (grad_f.transpose() - grad_u.transpose() * model.jacobian(u)).norm();
        rep.max_compatibility_residual = rep.max_compatibility_residual.max(compat);
        let m = nonlinearity(model, i, u)?;
        let mu_u = mu(model, u);
        if mu_u.abs() > 1e-6 && m.signum() != mu_u.signum() {
            rep.cc_sign_mismatches += 1;
        }
        // Transversality is only required across the inflection manifold.
        if mu_u.abs() < 0.1 {
            rep.min_transversality = rep.min_transversality.min(nonlinearity_transversality(model, i, u)?);
        }
    }
    if model.dim() == 1 {
        rep.min_eigen_gap = f64::INFINITY;
    }
    Ok(rep)
}

fn entropy_hessian(model: &dyn FluxModel, u: &State) -> Matrix {
    let n = u.dim();
    let mut h = Matrix::zeros(n, n);
    let step = 1e-4;
    for k in 0..n {
        let mut up = u.vector().clone();
        let mut dn = u.vector().clone();
        up[k] += step;
        dn[k] -= step;
        let gu = model.entropy_gradients(&State::from(up)).0;
        let gd = model.entropy_gradients(&State::from(dn)).0;
        h.set_column(k, &((gu - gd) / (2.0 * step)));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cubic_eigen_and_entropy() {
        let m = Cubic::default();
        let e = m.eigen(&State::scalar(1.0)).unwrap();
        assert_eq!(e.lambdas, vec![3.0]);
        assert_eq!(nonlinearity(&m, 0, &State::scalar(0.0)).unwrap(), 0.0);
        assert_eq!(m.entropy(&State::scalar(1.0)), (1.0, 1.5));
        assert_eq!(m.entropy(&State::scalar(0.0)), (0.0, 0.0));
        assert_eq!(mu(&m, &State::scalar(0.7)), 0.7);
    }

    #[test]
    fn elasticity_eigen_at_unit_strain() {
        let m = Elasticity::default();
        let e = m.eigen(&State::new(vec![0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(e.lambdas[0], -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.lambdas[1], 2.0, epsilon = 1e-14);
        assert_eq!(mu(&m, &State::new(vec![0.3, -0.2])), -0.2);
        let (u, f) = m.entropy(&State::new(vec![1.0, 0.0]));
        assert_eq!((u, f), (0.5, 0.0));
    }

    #[test]
    fn generic_eigen_matches_analytic() {
        #[derive(Debug)]
        struct Plain(Elasticity);
        impl FluxModel for Plain {
            fn name(&self) -> &str {
                "plain"
            }
            fn dim(&self) -> usize {
                2
            }
            fn flux(&self, u: &State) -> Vector {
                self.0.flux(u)
            }
            fn jacobian(&self, u: &State) -> Matrix {
                self.0.jacobian(u)
            }
            fn entropy(&self, u: &State) -> (f64, f64) {
                self.0.entropy(u)
            }
            fn field_kinds(&self) -> &[FieldKind] {
                self.0.field_kinds()
            }
            fn cc_index(&self) -> usize {
                1
            }
            fn delta0(&self) -> f64 {
                3.0
            }
            fn delta1(&self) -> f64 {
                2.0
            }
            fn mu_family(&self, family: usize, u: &State) -> f64 {
                self.0.mu_family(family, u)
            }
        }
        let p = Plain(Elasticity::default());
        for w in [-0.7, 0.0, 0.3, 1.1] {
            let u = State::new(vec![0.2, w]);
            let a = Elasticity::default().eigen(&u).unwrap();
            let g = p.eigen(&u).unwrap();
            for k in 0..2 {
                assert_abs_diff_eq!(a.lambdas[k], g.lambdas[k], epsilon = 1e-12);
                assert_abs_diff_eq!((a.r(k) - g.r(k)).norm(), 0.0, epsilon = 1e-10);
                assert_abs_diff_eq!((a.l(k) - g.l(k)).norm(), 0.0, epsilon = 1e-8);
                let dl = p.lambda_gradient(k, &u) - Elasticity::default().lambda_gradient(k, &u);
                assert_abs_diff_eq!(dl.norm(), 0.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn build_rejects_unknown() {
        assert!(matches!(
            build_model("burgers", &BTreeMap::new()),
            Err(ModelError::UnknownModel(_))
        ));
        let mut p = BTreeMap::new();
        p.insert("gamma".to_string(), 1.0);
        assert!(build_model("cubic", &p).is_err());
    }

    #[test]
    fn ball_check() {
        assert!(check_ball(&State::scalar(1.5), 1.5).is_ok());
        assert!(check_ball(&State::scalar(1.6), 1.5).is_err());
    }

    fn sample_disc(n: usize, radius: f64, dim: usize) -> Vec<State> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        (0..n)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-radius..radius)).collect();
                let s = State::new(v);
                if s.norm() <= radius {
                    break s;
                }
            })
            .collect()
    }

    #[test]
    fn structural_checks_on_samples() {
        let c = Cubic::default();
        let rep = verify_model(&c, &sample_disc(1000, 1.5, 1)).unwrap();
        assert!(rep.passed(0.0), "{rep:?}");
        let e = Elasticity::default();
        let rep = verify_model(&e, &sample_disc(1000, 2.0, 2)).unwrap();
        assert!(rep.passed(1.0), "{rep:?}");
        assert!(rep.min_eigen_gap >= 2.0 - 1e-12);
    }

    proptest! {
        #[test]
        fn elasticity_eigenvectors_are_biorthogonal(v in -1.0f64..1.0, w in -1.5f64..1.5) {
            let m = Elasticity::default();
            let u = State::new(vec![v, w]);
            let e = m.eigen(&u).unwrap();
            let prod = &e.left * &e.right;
            prop_assert!((prod - Matrix::identity(2, 2)).norm() < 1e-13);
            let jr = m.jacobian(&u) * e.r(1);
            prop_assert!((jr - e.r(1) * e.lambdas[1]).norm() < 1e-13);
            prop_assert!(m.mu_gradient(0, &u).dot(&e.r(0)) > 0.0);
            prop_assert!(m.mu_gradient(1, &u).dot(&e.r(1)) > 0.0);
        }

        #[test]
        fn cubic_sign_of_m_matches_mu(u in -1.5f64..1.5) {
            let m = Cubic::default();
            let s = State::scalar(u);
            let nl = nonlinearity(&m, 0, &s).unwrap();
            prop_assert_eq!(nl.signum(), mu(&m, &s).signum());
        }
    }
}
