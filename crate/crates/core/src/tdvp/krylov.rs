//! Lanczos approximation of `exp(-iτH) v` for Hermitian `H`.

use ndarray::Array2;

use super::TdvpError;
use crate::tnalg::{eigh_real, Tensor};
use crate::C64;

/// Outcome of one Krylov propagation.
#[derive(Clone, Debug)]
pub struct KrylovResult {
    pub vector: Tensor,
    /// Krylov dimension used.
    pub iterations: usize,
    /// Final error estimate relative to `‖v‖`.
    pub error_estimate: f64,
}

/// `exp(-iτH) v` with `H` given as a map. Iterates until the error estimate
/// `β_m |e_mᵀ exp(-iτT_m) e_1|` drops below `tol`, the Krylov space becomes
/// invariant, or `max_iter` vectors have been built. Full
/// reorthogonalization keeps the basis orthonormal to working precision.
pub fn krylov_expm<F>(
    mut apply: F,
    v: &Tensor,
    tau: C64,
    max_iter: usize,
    tol: f64,
) -> Result<KrylovResult, TdvpError>
where
    F: FnMut(&Tensor) -> Result<Tensor, TdvpError>,
{
    let beta0 = v.norm();
    if beta0 == 0.0 {
        return Err(TdvpError::ZeroVector);
    }
    if !beta0.is_finite() {
        return Err(TdvpError::NonFinite);
    }
    let max_iter = max_iter.max(1);
    let mut q0 = v.clone();
    q0.scale(C64::new(1.0 / beta0, 0.0));
    let mut basis = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j])?;
        if w.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(TdvpError::NonFinite);
        }
        let a = basis[j].inner(&w)?.re;
        w.add_scaled(C64::new(-a, 0.0), &basis[j])?;
        if j > 0 {
            w.add_scaled(C64::new(-beta[j - 1], 0.0), &basis[j - 1])?;
        }
        for q in &basis {
            let c = q.inner(&w)?;
            w.add_scaled(-c, q)?;
        }
        alpha.push(a);
        let b = w.norm();
        let m = alpha.len();
        let y = small_expm(&alpha, &beta, tau)?;
        let scale = alpha.iter().fold(1.0f64, |s, x| s.max(x.abs()));
        let err = b * y[m - 1].norm();
        let invariant = b <= 1e-13 * scale;
        if invariant || err < tol || m >= max_iter {
            let mut out = basis[0].clone();
            out.scale(y[0] * beta0);
            for (k, q) in basis.iter().enumerate().skip(1) {
                out.add_scaled(y[k] * beta0, q)?;
            }
            return Ok(KrylovResult {
                vector: out,
                iterations: m,
                error_estimate: if invariant { 0.0 } else { err },
            });
        }
        beta.push(b);
        w.scale(C64::new(1.0 / b, 0.0));
        basis.push(w);
    }
}

/// First column of `exp(-iτT)` for the tridiagonal `T`.
fn small_expm(alpha: &[f64], beta: &[f64], tau: C64) -> Result<Vec<C64>, TdvpError> {
    let m = alpha.len();
    let mut t = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alpha[i];
        if i + 1 < m {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let (w, u) = eigh_real(&t)?;
    let phases: Vec<C64> = w
        .iter()
        .enumerate()
        .map(|(l, &lam)| (C64::new(0.0, -1.0) * tau * lam).exp() * u[[0, l]])
        .collect();
    Ok((0..m)
        .map(|k| (0..m).map(|l| phases[l] * u[[k, l]]).sum())
        .collect())
}
