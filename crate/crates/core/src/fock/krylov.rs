//! Lanczos (hermitian Krylov) propagation `ψ ↦ e^{-itH}ψ` with per-step
//! convergence control.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

use super::basis::FockVector;
use super::operators::SparseOp;

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub subspace: usize,
    pub tol: f64,
    /// Largest `‖H‖·dt` accepted before a step is subdivided.
    pub max_hdt: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            subspace: 30,
            tol: 1e-10,
            max_hdt: 5.0,
        }
    }
}

/// Propagate `ψ ↦ e^{-i t H} ψ` for hermitian `H` by Lanczos stepping with
/// step size `dt` (subdivided further when the residual estimate exceeds
/// tolerance).
pub fn propagate<S: Scalar>(
    h: &SparseOp<S>,
    psi: &FockVector<S>,
    t: S,
    dt: S,
    opts: KrylovOptions,
) -> Result<FockVector<S>> {
    let hnorm = h.norm_estimate().as_f64().max(1e-12);
    let mut step = dt.as_f64().min(opts.max_hdt / hnorm).min(t.as_f64().abs().max(1e-300));
    if step <= 0.0 {
        step = dt.as_f64();
    }
    let total = t.as_f64();
    let mut done = 0.0;
    let mut cur = psi.clone();
    let mut guard = 0usize;
    while done < total - 1e-15 * total.abs().max(1.0) {
        let this = step.min(total - done);
        match lanczos_step(h, &cur, this, opts) {
            Ok(next) => {
                cur = next;
                done += this;
            }
            Err(_) if step > 1e-8 => {
                step *= 0.5;
            }
            Err(e) => return Err(e),
        }
        guard += 1;
        if guard > 10_000_000 {
            return Err(CoreError::KrylovFailure("step count blew up".into()));
        }
    }
    Ok(cur)
}

fn lanczos_step<S: Scalar>(
    h: &SparseOp<S>,
    psi: &FockVector<S>,
    dt: f64,
    opts: KrylovOptions,
) -> Result<FockVector<S>> {
    let dim = h.dim;
    let beta0 = psi.norm();
    if beta0.as_f64() == 0.0 {
        return Ok(psi.clone());
    }
    let m = opts.subspace.min(dim);
    let mut basis: Vec<Vec<Complex<S>>> = Vec::with_capacity(m);
    let mut alphas: Vec<S> = Vec::new();
    let mut betas: Vec<S> = Vec::new();
    let mut v0: Vec<Complex<S>> = psi
        .amp
        .iter()
        .map(|a| a.unscale(beta0))
        .collect();
    let mut w = vec![Complex::new(S::zero(), S::zero()); dim];
    let mut used = 0usize;
    for j in 0..m {
        h.apply(&v0, &mut w);
        // orthogonalize against the two previous vectors (Lanczos) plus a
        // full reorthogonalization pass for robustness at these sizes
        let mut alpha = Complex::new(S::zero(), S::zero());
        for (a, b) in v0.iter().zip(&w) {
            alpha += a.conj() * b;
        }
        for (ww, vv) in w.iter_mut().zip(&v0) {
            *ww -= alpha * vv;
        }
        if j > 0 {
            let prev = &basis[j - 1];
            let beta_prev = betas[j - 1];
            for (ww, vv) in w.iter_mut().zip(prev) {
                *ww -= vv.scale(beta_prev);
            }
        }
        for prev in basis.iter() {
            let mut ip = Complex::new(S::zero(), S::zero());
            for (a, b) in prev.iter().zip(&w) {
                ip += a.conj() * b;
            }
            for (ww, vv) in w.iter_mut().zip(prev) {
                *ww -= ip * vv;
            }
        }
        alphas.push(alpha.re);
        basis.push(v0.clone());
        used = j + 1;
        let beta = {
            let mut acc = S::zero();
            for x in &w {
                acc += x.norm_sqr();
            }
            num_traits::Float::sqrt(acc)
        };
        if beta.as_f64() < 1e-14 {
            betas.push(S::zero());
            break;
        }
        betas.push(beta);
        v0 = w.iter().map(|x| x.unscale(beta)).collect();
    }
    // tridiagonal exponential
    let mdim = used;
    let mut tri = DMatrix::<Complex<S>>::zeros(mdim, mdim);
    for j in 0..mdim {
        tri[(j, j)] = Complex::new(alphas[j], S::zero());
        if j + 1 < mdim {
            tri[(j, j + 1)] = Complex::new(betas[j], S::zero());
            tri[(j + 1, j)] = Complex::new(betas[j], S::zero());
        }
    }
    let eig = nalgebra::SymmetricEigen::new(tri);
    let mut coeff = DVector::<Complex<S>>::zeros(mdim);
    for j in 0..mdim {
        let mut acc = Complex::new(S::zero(), S::zero());
        for l in 0..mdim {
            let phase =
                Complex::new(S::zero(), -S::of(dt) * eig.eigenvalues[l]).exp();
            acc += eig.eigenvectors[(j, l)] * phase * eig.eigenvectors[(0, l)].conj();
        }
        coeff[j] = acc;
    }
    // residual estimate from the last subspace coupling
    if mdim == opts.subspace.min(dim) && mdim >= 2 {
        let est = betas[mdim - 1].as_f64() * coeff[mdim - 1].norm().as_f64() * dt.abs();
        if est > opts.tol {
            return Err(CoreError::KrylovFailure(format!(
                "residual {est:.2e} above tolerance"
            )));
        }
    }
    let mut out = psi.clone();
    for x in out.amp.iter_mut() {
        *x = Complex::new(S::zero(), S::zero());
    }
    for (j, vecj) in basis.iter().enumerate() {
        let c = coeff[j].scale(beta0);
        for (o, v) in out.amp.iter_mut().zip(vecj) {
            *o += c * v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::basis::{FockSpace, ParticleSector};
    use crate::grid::Grid;
    use crate::kernels::{Cutoff, KernelSet};
    use crate::linalg::hermitian_expm;
    use num_complex::Complex64 as C;
    use std::sync::Arc;

    #[test]
    fn matches_dense_expm() {
        let g = Grid::new(1, 2.0 * std::f64::consts::PI, 4).unwrap();
        let kset = KernelSet::new(&g, Cutoff::GridMax);
        let sp = Arc::new(
            FockSpace::new(&g, vec![1, 2, 3], vec![2, 3], ParticleSector::Fixed(2), 2).unwrap(),
        );
        let rep = crate::fock::build_nelson_hamiltonian(&sp, &kset, 2, Cutoff::GridMax).unwrap();
        assert!(sp.dim <= 500);
        let mut psi = sp.zero_vector();
        // a definite superposition
        for i in 0..sp.dim {
            psi.amp[i] = C::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos());
        }
        let n = psi.norm();
        psi.scale(C::new(1.0 / n, 0.0));
        let t = 0.7;
        let krylov = propagate(&rep.op, &psi, t, 0.2, KrylovOptions::default()).unwrap();
        let dense = hermitian_expm(&rep.op.to_dense(), C::new(0.0, -t));
        let mut want = psi.clone();
        for r in 0..sp.dim {
            let mut acc = C::new(0.0, 0.0);
            for c in 0..sp.dim {
                acc += dense[(r, c)] * psi.amp[c];
            }
            want.amp[r] = acc;
        }
        let mut err: f64 = 0.0;
        for i in 0..sp.dim {
            err = err.max((krylov.amp[i] - want.amp[i]).norm());
        }
        assert!(err < 1e-9, "krylov vs dense expm: {err:.3e}");
        // unitarity and energy conservation
        assert!((krylov.norm() - 1.0).abs() < 1e-10);
        let e0 = rep.op.expectation(&psi).re;
        let e1 = rep.op.expectation(&krylov).re;
        assert!(((e1 - e0) / e0).abs() < 1e-9);
    }
}
