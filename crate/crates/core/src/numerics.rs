//! Small root-finding and linear-algebra kernels shared by the curve solvers.

use nalgebra::{DMatrix, DVector};

/// Gauss–Legendre nodes and weights on [0, 1] (5 points, exact to degree 9).
pub const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668_004,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
pub const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootError {
    NoSignChange { a: f64, fa: f64, b: f64, fb: f64 },
    NotFinite,
}

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite sign.
pub fn brent(mut f: impl FnMut(f64) -> Option<f64>, a: f64, b: f64, xtol: f64) -> Result<f64, RootError> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a).ok_or(RootError::NotFinite)?;
    let mut fb = f(b).ok_or(RootError::NotFinite)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { a, fa, b, fb });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b).ok_or(RootError::NotFinite)?;
    }
    Ok(b)
}

/// Golden-section search for the minimizer of a unimodal function on [a, b].
/// Returns the final bracket `(lo, hi)`.
pub fn golden_section(mut f: impl FnMut(f64) -> Option<f64>, a: f64, b: f64, iterations: usize) -> Option<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..iterations {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Some((lo, hi))
}

/// Newton's method with a forward-difference Jacobian and step halving.
/// Returns the best iterate and its max-norm residual; the caller decides
/// whether the residual is acceptable.
pub fn newton_fd(
    mut f: impl FnMut(&DVector<f64>) -> Option<DVector<f64>>,
    x0: DVector<f64>,
    tol: f64,
    max_iter: usize,
    fd_step: f64,
) -> (DVector<f64>, f64) {
    let n = x0.len();
    let mut x = x0;
    let mut fx = match f(&x) {
        Some(v) => v,
        None => return (x, f64::INFINITY),
    };
    let mut res = fx.amax();
    for _ in 0..max_iter {
        if res <= tol {
            break;
        }
        let mut jac = DMatrix::zeros(fx.len(), n);
        for k in 0..n {
            let h = fd_step * (1.0 + x[k].abs());
            let mut xp = x.clone();
            xp[k] += h;
            match f(&xp) {
                Some(fp) => jac.set_column(k, &((fp - &fx) / h)),
                None => return (x, res),
            }
        }
        let step = match jac.lu().solve(&fx) {
            Some(s) => s,
            None => break,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xt = &x - &step * t;
            if let Some(ft) = f(&xt) {
                let rt = ft.amax();
                if rt.is_finite() && (rt < res || rt <= tol) {
                    x = xt;
                    fx = ft;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| Some(x * x * x - 2.0), 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
        assert!(brent(|x| Some(x * x + 1.0), -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn golden_brackets_minimum() {
        let (lo, hi) = golden_section(|m| Some(1.0 + m + m * m), -3.0, 1.0, 60).unwrap();
        assert!(lo <= -0.5 + 1e-7 && hi >= -0.5 - 1e-7 && hi - lo < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let s: f64 = GL_NODES.iter().zip(GL_WEIGHTS.iter()).map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 0.1).abs() < 1e-15);
    }

    #[test]
    fn newton_solves_small_system() {
        let (x, res) = newton_fd(
            |x| Some(DVector::from_vec(vec![x[0] * x[0] + x[1] - 3.0, x[0] - x[1] + 1.0])),
            DVector::from_vec(vec![1.0, 1.0]),
            1e-13,
            50,
            1e-7,
        );
        assert!(res <= 1e-13);
        assert!((x[0] - 1.0).abs() < 1e-10 || (x[0] + 2.0).abs() < 1e-10);
    }
}
