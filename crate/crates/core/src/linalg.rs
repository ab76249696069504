//! Deterministic parallel reductions and the COCG solver used by the time stepper.

use num_complex::Complex64;
use rayon::prelude::*;

const CHUNK: usize = 4096;

/// Sum `f(i)` for `i in 0..n`. Partial sums over fixed chunks are combined
/// in order, so the result does not depend on the number of threads.
pub fn par_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        })
        .collect();
    partial.iter().sum()
}

pub fn par_sum_c<F>(n: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<Complex64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = Complex64::new(0.0, 0.0);
            for i in lo..hi {
                s += f(i);
            }
            s
        })
        .collect();
    partial.iter().sum()
}

/// Unconjugated bilinear form `a^T b`.
pub fn dotu(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    par_sum_c(a.len(), |i| a[i] * b[i])
}

pub fn norm_sq(a: &[Complex64]) -> f64 {
    par_sum(a.len(), |i| a[i].norm_sqr())
}

pub fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned conjugate orthogonal conjugate gradient for a
/// complex symmetric matrix (`A^T = A`, not Hermitian).
///
/// `x` holds the initial guess on entry and the solution on exit.
pub fn cocg<A>(
    apply: A,
    diag: &[Complex64],
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats, SolveStats>
where
    A: Fn(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let bnorm = norm_sq(b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(SolveStats { iterations: 0, rel_residual: 0.0 });
    }
    let mut q = vec![Complex64::new(0.0, 0.0); n];
    apply(x, &mut q);
    let mut r: Vec<Complex64> = b.iter().zip(&q).map(|(bi, qi)| bi - qi).collect();
    let mut z: Vec<Complex64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rho = dotu(&r, &z);
    let mut rel = norm_sq(&r).sqrt() / bnorm;
    if rel < tol {
        return Ok(SolveStats { iterations: 0, rel_residual: rel });
    }
    for it in 1..=max_iter {
        apply(&p, &mut q);
        let pq = dotu(&p, &q);
        if pq.norm() == 0.0 || !pq.re.is_finite() {
            return Err(SolveStats { iterations: it, rel_residual: rel });
        }
        let alpha = rho / pq;
        x.par_iter_mut()
            .zip(r.par_iter_mut())
            .zip(p.par_iter().zip(q.par_iter()))
            .for_each(|((xi, ri), (pi, qi))| {
                *xi += alpha * pi;
                *ri -= alpha * qi;
            });
        rel = norm_sq(&r).sqrt() / bnorm;
        if rel < tol {
            return Ok(SolveStats { iterations: it, rel_residual: rel });
        }
        z.par_iter_mut()
            .zip(r.par_iter().zip(diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = ri / di);
        let rho_new = dotu(&r, &z);
        let beta = rho_new / rho;
        rho = rho_new;
        p.par_iter_mut().zip(z.par_iter()).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(SolveStats { iterations: max_iter, rel_residual: rel })
}
