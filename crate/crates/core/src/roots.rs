//! Bracketed bisection for scalar equations.

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")]
    NoSignChange { a: f64, fa: f64, b: f64, fb: f64 },
    #[error("function is not finite at x = {0}")]
    NotFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root<T> {
    pub x: T,
    pub fx: T,
    pub iterations: usize,
}

/// Finds `x` in `[a, b]` with `|f(x)| <= ftol` by bisection.
///
/// `f(a)` and `f(b)` must have opposite signs (or one of them be zero). The
/// search also stops once the bracket cannot be halved any further in `T`, in
/// which case the endpoint with the smaller residual is returned.
pub fn bisect<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, ftol: T) -> Result<Root<T>, RootError> {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut flo = f(lo);
    let mut fhi = f(hi);
    for (x, fx) in [(lo, flo), (hi, fhi)] {
        if !fx.is_finite() {
            return Err(RootError::NotFinite(x.as_f64()));
        }
    }
    if flo == T::zero() {
        return Ok(Root { x: lo, fx: flo, iterations: 0 });
    }
    if fhi == T::zero() {
        return Ok(Root { x: hi, fx: fhi, iterations: 0 });
    }
    if flo.signum() == fhi.signum() {
        return Err(RootError::NoSignChange {
            a: lo.as_f64(),
            fa: flo.as_f64(),
            b: hi.as_f64(),
            fb: fhi.as_f64(),
        });
    }

    let half = T::lit(0.5);
    let mut iterations = 0;
    loop {
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            let best = if flo.abs() <= fhi.abs() { (lo, flo) } else { (hi, fhi) };
            return Ok(Root {
                x: best.0,
                fx: best.1,
                iterations,
            });
        }
        iterations += 1;
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(RootError::NotFinite(mid.as_f64()));
        }
        if fm.abs() <= ftol {
            return Ok(Root { x: mid, fx: fm, iterations });
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
}
