//! Small dense-linear-algebra helpers over complex matrices: defect
//! measures, spectral norm by power iteration, and exponentials of
//! hermitian matrices through their eigendecomposition.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::scalar::Scalar;

pub type CMat<S> = DMatrix<Complex<S>>;

/// Frobenius norm.
pub fn fro_norm<S: Scalar>(m: &CMat<S>) -> S {
    let mut acc = S::zero();
    for v in m.iter() {
        acc += v.norm_sqr();
    }
    num_traits::Float::sqrt(acc)
}

/// Relative hermiticity defect `‖M - M†‖_F / ‖M‖_F`.
pub fn hermiticity_defect<S: Scalar>(m: &CMat<S>) -> S {
    let diff = m - m.adjoint();
    let denom = fro_norm(m);
    if denom == S::zero() {
        return S::zero();
    }
    fro_norm(&diff) / denom
}

/// Relative symmetry defect `‖M - Mᵀ‖_F / ‖M‖_F`.
pub fn symmetry_defect<S: Scalar>(m: &CMat<S>) -> S {
    let diff = m - m.transpose();
    let denom = fro_norm(m);
    if denom == S::zero() {
        return S::zero();
    }
    fro_norm(&diff) / denom
}

/// Spectral norm (largest singular value) by power iteration on `M†M`.
pub fn spectral_norm<S: Scalar>(m: &CMat<S>) -> S {
    let n = m.ncols();
    if n == 0 {
        return S::zero();
    }
    let mt = m.adjoint();
    let mut v: Vec<Complex<S>> = (0..n)
        .map(|i| {
            Complex::new(
                S::of(((i * 2654435761 + 12345) % 1000) as f64 / 1000.0 + 0.1),
                S::of(((i * 40503 + 77) % 997) as f64 / 997.0),
            )
        })
        .collect();
    let mut v = nalgebra::DVector::from_vec(v.drain(..).collect::<Vec<_>>());
    let mut lam = S::zero();
    for _ in 0..60 {
        let w = &mt * (m * &v);
        let norm = {
            let mut acc = S::zero();
            for x in w.iter() {
                acc += x.norm_sqr();
            }
            num_traits::Float::sqrt(acc)
        };
        if norm == S::zero() {
            return S::zero();
        }
        let new_lam = norm;
        v = w.map(|x| x / Complex::new(norm, S::zero()));
        if num_traits::Float::abs(new_lam - lam) <= S::of(1e-13) * new_lam {
            lam = new_lam;
            break;
        }
        lam = new_lam;
    }
    num_traits::Float::sqrt(lam)
}

/// `e^{c·H}` for hermitian `H` via its eigendecomposition; `c` is a complex
/// scalar (typically `-i t`).
pub fn hermitian_expm<S: Scalar>(h: &CMat<S>, c: Complex<S>) -> CMat<S> {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut d = CMat::<S>::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = (c.scale(eig.eigenvalues[i])).exp();
    }
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Trace norm of a hermitian matrix (sum of absolute eigenvalues).
pub fn trace_norm_hermitian<S: Scalar>(m: &CMat<S>) -> S {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    eig.eigenvalues
        .iter()
        .fold(S::zero(), |acc, &l| acc + num_traits::Float::abs(l))
}

/// General dense matrix exponential by scaling-and-squaring with a Taylor
/// series; adequate for the small matrices it is applied to.
pub fn expm<S: Scalar>(m: &CMat<S>) -> CMat<S> {
    let n = m.nrows();
    let norm = fro_norm(m);
    let mut s = 0u32;
    let mut scale = S::one();
    while norm * scale > S::of(0.5) {
        scale *= S::of(0.5);
        s += 1;
    }
    let t = m.map(|z| z.scale(scale));
    let mut term = CMat::<S>::identity(n, n);
    let mut acc = CMat::<S>::identity(n, n);
    for k in 1..=20 {
        term = (&term * &t).map(|z| z.unscale(S::of(k as f64)));
        acc += &term;
        if fro_norm(&term) < S::of(1e-18) {
            break;
        }
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    acc
}
