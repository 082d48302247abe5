use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Scalar};
use crate::sparse::CsrMatrix;
use num_traits::{ToPrimitive, Zero};

/// Conjugate gradients for a Hermitian positive definite matrix, started from zero.
pub fn conjugate_gradient<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let bnorm = norm2(b).to_f64().unwrap_or(f64::NAN);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let mut rr = dot(&r, &r).real();
    for it in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap).real();
        if !(pap > T::Real::zero()) {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rr.to_f64().unwrap_or(f64::NAN).sqrt() / bnorm,
            });
        }
        let alpha = T::from_real(rr / pap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r).real();
        if rr_new.to_f64().unwrap_or(f64::NAN).sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        let beta = T::from_real(rr_new / rr);
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = *ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: rr.to_f64().unwrap_or(f64::NAN).sqrt() / bnorm,
    })
}
