//! Momentum-space kernels `ω, G₀, B₀, kB₀`, the effective potentials built
//! from them, and pseudo-spectral application of the one-particle operator
//! `h_{u,α,θ}`.
//!
//! All kernel arrays are precomputed per `(Grid, Λ)`. The dispersion is
//! `ω(k) = √(k²+1)`, the form factor `G₀ = ω^{-1/2}`, and
//! `B₀ = G₀ / (k² + ω)`. Physics kernels are zeroed on Nyquist nodes and
//! beyond the cutoff; `ω` itself is kept unmasked.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::grid::{inner_momentum, Grid, MomentumField, SpatialField};
use crate::scalar::Scalar;

/// Ultraviolet cutoff for the interaction kernels. `GridMax` keeps every
/// non-Nyquist mode; the continuum limit is probed by grid refinement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff<S: Scalar> {
    GridMax,
    Finite(S),
}

impl<S: Scalar> Cutoff<S> {
    pub fn accepts(&self, k_abs: S) -> bool {
        match self {
            Cutoff::GridMax => true,
            Cutoff::Finite(l) => k_abs <= *l,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Cutoff::GridMax => "max".into(),
            Cutoff::Finite(l) => format!("{}", l),
        }
    }
}

/// Precomputed radial kernels over the momentum nodes of one grid.
pub struct KernelSet<S: Scalar> {
    pub grid: Arc<Grid<S>>,
    pub cutoff: Cutoff<S>,
    /// Dispersion `ω(k)`, unmasked (used by the free field evolution).
    pub omega: Vec<S>,
    /// `G₀(k)` masked by the cutoff and Nyquist.
    pub g0: Vec<S>,
    /// `B₀(k)` masked.
    pub b0: Vec<S>,
    /// `k_a B₀(k)` per axis, masked.
    pub kb0: Vec<Vec<S>>,
    /// 0/1 cutoff mask (`1_{|k| ≤ Λ}` minus Nyquist nodes).
    pub mask: Vec<S>,
}

impl<S: Scalar> KernelSet<S> {
    pub fn new(grid: &Arc<Grid<S>>, cutoff: Cutoff<S>) -> Self {
        let n = grid.n;
        let mut omega = vec![S::zero(); n];
        let mut g0 = vec![S::zero(); n];
        let mut b0 = vec![S::zero(); n];
        let mut kb0 = vec![vec![S::zero(); n]; grid.d];
        let mut mask = vec![S::zero(); n];
        let mut k = [S::zero(); 3];
        for i in 0..n {
            let k2 = grid.k_sq(i);
            let om = num_traits::Float::sqrt(k2 + S::one());
            omega[i] = om;
            let kabs = num_traits::Float::sqrt(k2);
            if grid.is_nyquist(i) || !cutoff.accepts(kabs) {
                continue;
            }
            mask[i] = S::one();
            let g = S::one() / num_traits::Float::sqrt(om);
            let b = g / (k2 + om);
            g0[i] = g;
            b0[i] = b;
            grid.k_vec(i, &mut k[..grid.d]);
            for a in 0..grid.d {
                kb0[a][i] = k[a] * b;
            }
        }
        Self {
            grid: grid.clone(),
            cutoff,
            omega,
            g0,
            b0,
            kb0,
            mask,
        }
    }

    fn check_grid(&self, g: &Grid<S>) -> Result<()> {
        if !self.grid.same_as(g) {
            return Err(CoreError::GridMismatch(
                "field lives on a different grid".into(),
            ));
        }
        Ok(())
    }

    pub fn two_pi_d2(&self) -> S {
        num_traits::Float::powf(S::tau(), S::of(self.grid.d as f64) / S::of(2.0))
    }

    /// `(2π)^{d/2} ifft(kernel · α)` as a complex spatial field.
    fn back_transform(&self, kernel: &[S], alpha: &MomentumField<S>) -> SpatialField<S> {
        let mut f = self.grid.zeros_momentum();
        for i in 0..self.grid.n {
            f.values[i] = alpha.values[i].scale(kernel[i]);
        }
        let mut out = self.grid.fft_inverse(&f);
        let c = self.two_pi_d2();
        for v in &mut out.values {
            *v = v.scale(c);
        }
        out
    }

    /// `φ_α(x) = 2 Re⟨G_x, α⟩`, exactly real.
    pub fn phi_alpha(&self, alpha: &MomentumField<S>) -> Result<SpatialField<S>> {
        self.check_grid(&alpha.grid)?;
        let z = self.back_transform(&self.g0, alpha);
        let mut out = self.grid.zeros_spatial();
        for (o, v) in out.values.iter_mut().zip(&z.values) {
            *o = Complex::new(S::of(2.0) * v.re, S::zero());
        }
        Ok(out)
    }

    /// `φ̃_α(x) = 2 Re⟨iB_x, α⟩ = 2 Im[(2π)^{d/2} ifft(B₀ α)]`, exactly real.
    pub fn phi_tilde_alpha(&self, alpha: &MomentumField<S>) -> Result<SpatialField<S>> {
        self.check_grid(&alpha.grid)?;
        let z = self.back_transform(&self.b0, alpha);
        let mut out = self.grid.zeros_spatial();
        for (o, v) in out.values.iter_mut().zip(&z.values) {
            *o = Complex::new(S::of(2.0) * v.im, S::zero());
        }
        Ok(out)
    }

    /// `c_α(x) = ⟨kB_x, α⟩` per axis (the unconjugated half of `A_α`).
    pub fn c_alpha(&self, alpha: &MomentumField<S>) -> Result<Vec<SpatialField<S>>> {
        self.check_grid(&alpha.grid)?;
        Ok((0..self.grid.d)
            .map(|a| self.back_transform(&self.kb0[a], alpha))
            .collect())
    }

    /// `F_α = 2 Re c_α` per axis, exactly real.
    pub fn f_alpha(&self, alpha: &MomentumField<S>) -> Result<Vec<SpatialField<S>>> {
        let c = self.c_alpha(alpha)?;
        Ok(c.into_iter()
            .map(|comp| {
                let mut out = self.grid.zeros_spatial();
                for (o, v) in out.values.iter_mut().zip(&comp.values) {
                    *o = Complex::new(S::of(2.0) * v.re, S::zero());
                }
                out
            })
            .collect())
    }

    /// Fourier coefficients of `V_θ`: `-4θ G₀B₀ + 2θ² ω B₀²` on the masked
    /// mode set.
    pub fn v_theta_hat(&self, theta: S) -> Vec<S> {
        let mut out = vec![S::zero(); self.grid.n];
        for i in 0..self.grid.n {
            out[i] = -S::of(4.0) * theta * self.g0[i] * self.b0[i]
                + S::of(2.0) * theta * theta * self.omega[i] * self.b0[i] * self.b0[i];
        }
        out
    }

    /// `V_θ` sampled at the grid nodes, `V_θ(x) = dk^d Σ_k v̂_θ(k) e^{ikx}`.
    pub fn v_theta_at_nodes(&self, theta: S) -> SpatialField<S> {
        let vhat = self.v_theta_hat(theta);
        let mut f = self.grid.zeros_momentum();
        for i in 0..self.grid.n {
            f.values[i] = Complex::new(vhat[i], S::zero());
        }
        let back = self.grid.fft_inverse(&f);
        let c = self.two_pi_d2();
        let mut out = self.grid.zeros_spatial();
        for (o, v) in out.values.iter_mut().zip(&back.values) {
            // imaginary part vanishes by evenness of the coefficients
            *o = Complex::new(v.re * c, S::zero());
        }
        out
    }

    /// Periodic convolution `(V_θ * ρ)(x)` for a real density ρ, exactly real.
    pub fn v_theta_convolve(&self, rho: &SpatialField<S>, theta: S) -> Result<SpatialField<S>> {
        self.check_grid(&rho.grid)?;
        let rho_hat = self.grid.fft_forward(rho);
        let vhat = self.v_theta_hat(theta);
        let mut f = self.grid.zeros_momentum();
        for i in 0..self.grid.n {
            f.values[i] = rho_hat.values[i].scale(vhat[i]);
        }
        let back = self.grid.fft_inverse(&f);
        let c = num_traits::Float::powi(self.two_pi_d2(), 2);
        let mut out = self.grid.zeros_spatial();
        for (o, v) in out.values.iter_mut().zip(&back.values) {
            *o = Complex::new(v.re * c, S::zero());
        }
        Ok(out)
    }

    /// `f_u(k) = 2⟨u, kB(k)(-i∇)u⟩`, contracted over the vector index.
    pub fn f_u(&self, u: &SpatialField<S>) -> Result<MomentumField<S>> {
        self.check_grid(&u.grid)?;
        let grad = self.grid.gradient(u);
        let mut out = self.grid.zeros_momentum();
        let c = self.two_pi_d2();
        for a in 0..self.grid.d {
            let mut w = self.grid.zeros_spatial();
            for i in 0..self.grid.n {
                // conj(u) · (-i ∂_a u)
                w.values[i] = u.values[i].conj() * grad[a].values[i] * (-S::i());
            }
            let what = self.grid.fft_forward(&w);
            for i in 0..self.grid.n {
                out.values[i] += what.values[i].scale(S::of(2.0) * c * self.kb0[a][i]);
            }
        }
        Ok(out)
    }

    /// `g_{u,α}(k) = 2⟨u, kB(k) F_α u⟩`.
    pub fn g_u_alpha(
        &self,
        u: &SpatialField<S>,
        alpha: &MomentumField<S>,
    ) -> Result<MomentumField<S>> {
        self.check_grid(&u.grid)?;
        let f = self.f_alpha(alpha)?;
        let mut out = self.grid.zeros_momentum();
        let c = self.two_pi_d2();
        for a in 0..self.grid.d {
            let mut w = self.grid.zeros_spatial();
            for i in 0..self.grid.n {
                w.values[i] = f[a].values[i].scale(u.values[i].norm_sqr());
            }
            let what = self.grid.fft_forward(&w);
            for i in 0..self.grid.n {
                out.values[i] += what.values[i].scale(S::of(2.0) * c * self.kb0[a][i]);
            }
        }
        Ok(out)
    }

    /// Gauge constant `μ_{u,α,θ}`; `u` must be normalized.
    pub fn mu(&self, u: &SpatialField<S>, alpha: &MomentumField<S>, theta: S) -> Result<S> {
        let norm = u.norm();
        if num_traits::Float::abs(norm - S::one()) > S::of(1e-8) {
            return Err(CoreError::NotNormalized {
                norm: norm.as_f64(),
                tol: 1e-8,
            });
        }
        Ok(self.mu_unchecked(u, alpha, theta))
    }

    /// `μ` without the normalization gate, used inside integrator stages
    /// where the state departs from unit norm at integration-error level.
    pub fn mu_unchecked(&self, u: &SpatialField<S>, alpha: &MomentumField<S>, theta: S) -> S {
        let rho = density(u);
        let phi = self.phi_alpha(alpha).expect("grid checked");
        let vconv = self.v_theta_convolve(&rho, theta).expect("grid checked");
        let mut quad = S::zero();
        let mut pair = S::zero();
        for i in 0..self.grid.n {
            quad += phi.values[i].re * rho.values[i].re;
            pair += vconv.values[i].re * rho.values[i].re;
        }
        let dxd = self.grid.dx_pow_d();
        let half = S::of(0.5);
        let f = self.f_u(u).expect("grid checked");
        let g = self.g_u_alpha(u, alpha).expect("grid checked");
        let mut src = self.grid.zeros_momentum();
        for i in 0..self.grid.n {
            src.values[i] = f.values[i] + g.values[i].scale(theta);
        }
        (S::one() - theta) * half * quad * dxd
            + half * pair * dxd
            + theta * inner_momentum(alpha, &src).re
    }

    /// `τ_{u,α}(x) = φ̃_α(x) - ½⟨u, φ̃_α u⟩`, exactly real with
    /// `⟨u, τ u⟩ = 0`.
    pub fn tau(&self, u: &SpatialField<S>, alpha: &MomentumField<S>) -> Result<SpatialField<S>> {
        let phit = self.phi_tilde_alpha(alpha)?;
        let mut mean = S::zero();
        for i in 0..self.grid.n {
            mean += phit.values[i].re * u.values[i].norm_sqr();
        }
        mean *= self.grid.dx_pow_d() * S::of(0.5);
        let mut out = phit;
        for v in &mut out.values {
            *v = Complex::new(v.re - mean, S::zero());
        }
        Ok(out)
    }

    /// Apply `h_{u,α,θ} = -Δ + (1-θ)φ_α + θA_α + θ²F_α² + V_θ*|u|² - μ` to ψ.
    pub fn apply_h_theta(
        &self,
        u: &SpatialField<S>,
        alpha: &MomentumField<S>,
        theta: S,
        psi: &SpatialField<S>,
    ) -> Result<SpatialField<S>> {
        self.check_grid(&psi.grid)?;
        let op = self.h_theta_op(u, alpha, theta)?;
        Ok(op.apply(psi))
    }

    /// Precompute the coefficient fields of `h_{u,α,θ}` for repeated
    /// application to different ψ.
    pub fn h_theta_op(
        &self,
        u: &SpatialField<S>,
        alpha: &MomentumField<S>,
        theta: S,
    ) -> Result<HThetaOp<S>> {
        self.check_grid(&u.grid)?;
        self.check_grid(&alpha.grid)?;
        let rho = density(u);
        let phi = self.phi_alpha(alpha)?;
        let c = self.c_alpha(alpha)?;
        let vconv = self.v_theta_convolve(&rho, theta)?;
        let mu = self.mu_unchecked(u, alpha, theta);
        let n = self.grid.n;
        let mut pot = vec![S::zero(); n];
        for i in 0..n {
            let mut f2 = S::zero();
            for a in 0..self.grid.d {
                let fa = S::of(2.0) * c[a].values[i].re;
                f2 += fa * fa;
            }
            pot[i] = (S::one() - theta) * phi.values[i].re
                + theta * theta * f2
                + vconv.values[i].re
                - mu;
        }
        Ok(HThetaOp {
            grid: self.grid.clone(),
            theta,
            pot,
            c,
        })
    }
}

/// Coefficient fields of `h_{u,α,θ}` frozen at one mean-field state.
pub struct HThetaOp<S: Scalar> {
    grid: Arc<Grid<S>>,
    theta: S,
    /// `(1-θ)φ_α + θ²F_α² + V_θ*|u|² - μ`
    pub pot: Vec<S>,
    /// `c_α` per axis
    pub c: Vec<SpatialField<S>>,
}

impl<S: Scalar> HThetaOp<S> {
    pub fn apply(&self, psi: &SpatialField<S>) -> SpatialField<S> {
        let mut out = self.grid.minus_laplacian(psi);
        for i in 0..self.grid.n {
            out.values[i] += psi.values[i].scale(self.pot[i]);
        }
        if self.theta != S::zero() {
            // A_α ψ = 2(-i∇)(c_α ψ) + 2 conj(c_α)·(-i∇ψ)
            let two_th = S::of(2.0) * self.theta;
            let gpsi = self.grid.gradient(psi);
            for a in 0..self.grid.d {
                let mut prod = self.grid.zeros_spatial();
                for i in 0..self.grid.n {
                    prod.values[i] = self.c[a].values[i] * psi.values[i];
                }
                let dprod = self.grid.gradient(&prod);
                for i in 0..self.grid.n {
                    out.values[i] += (dprod[a].values[i] * (-S::i())
                        + self.c[a].values[i].conj() * gpsi[a].values[i] * (-S::i()))
                    .scale(two_th);
                }
            }
        }
        out
    }
}

/// `|u|²` as a real spatial field.
pub fn density<S: Scalar>(u: &SpatialField<S>) -> SpatialField<S> {
    let mut out = u.grid.zeros_spatial();
    for (o, v) in out.values.iter_mut().zip(&u.values) {
        *o = Complex::new(v.norm_sqr(), S::zero());
    }
    out
}

/// Kinetic energy `⟨u, -Δ u⟩` evaluated spectrally.
pub fn kinetic_energy<S: Scalar>(u: &SpatialField<S>) -> S {
    let uhat = u.grid.fft_forward(u);
    let mut acc = S::zero();
    for i in 0..u.grid.n {
        acc += u.grid.k_sq(i) * uhat.values[i].norm_sqr();
    }
    acc * u.grid.dk_pow_d()
}

/// `⟨u, m u⟩` for a real multiplication operator m.
pub fn expect_real_potential<S: Scalar>(u: &SpatialField<S>, m: &SpatialField<S>) -> S {
    let mut acc = S::zero();
    for i in 0..u.grid.n {
        acc += m.values[i].re * u.values[i].norm_sqr();
    }
    acc * u.grid.dx_pow_d()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{field_norm, inner_spatial};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    type C = Complex64;

    fn setup(m: usize, l: f64) -> (Arc<Grid<f64>>, KernelSet<f64>) {
        let g = Grid::new(1, l, m).unwrap();
        let k = KernelSet::new(&g, Cutoff::GridMax);
        (g, k)
    }

    fn random_alpha(g: &Arc<Grid<f64>>, seed: u64) -> MomentumField<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = g.zeros_momentum();
        for i in 0..g.n {
            if g.is_nyquist(i) {
                continue;
            }
            a.values[i] = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        a
    }

    fn gaussian_u(g: &Arc<Grid<f64>>) -> SpatialField<f64> {
        let mut u = g.spatial_from_fn(|x| C::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let n = u.norm();
        u.scale(C::new(1.0 / n, 0.0));
        u
    }

    #[test]
    fn kernel_invariants() {
        let (g, k) = setup(32, 11.0);
        for i in 0..g.n {
            assert!(k.omega[i] >= 1.0);
            assert!(k.b0[i] <= k.g0[i] + 1e-15);
            if !g.is_nyquist(i) {
                let j = g.negate_k(i);
                assert_eq!(k.g0[i], k.g0[j]);
                assert_eq!(k.b0[i], k.b0[j]);
                assert_eq!(k.kb0[0][i], -k.kb0[0][j]);
            } else {
                assert_eq!(k.mask[i], 0.0);
                assert_eq!(k.g0[i], 0.0);
            }
        }
        // cutoff at the largest on-grid |k| reproduces GridMax bit-for-bit
        let kmax = (0..g.n)
            .filter(|&i| !g.is_nyquist(i))
            .map(|i| g.k_sq(i).sqrt())
            .fold(0.0f64, f64::max);
        let kc = KernelSet::new(&g, Cutoff::Finite(kmax));
        assert_eq!(k.g0, kc.g0);
        assert_eq!(k.b0, kc.b0);
        assert_eq!(k.mask, kc.mask);
        // kB₀(0) = 0
        let zero_idx = g.m / 2;
        assert_eq!(k.kb0[0][zero_idx], 0.0);
    }

    #[test]
    fn phi_alpha_single_mode_oracle() {
        let (g, k) = setup(16, 8.0);
        // α = c δ_{k0} / dk
        let j0 = g.m / 2 + 3;
        let k0 = g.k_nodes()[j0];
        let c0 = C::new(0.7, -0.4);
        let mut alpha = g.zeros_momentum();
        alpha.values[j0] = c0 / g.dk;
        let phi = k.phi_alpha(&alpha).unwrap();
        let om = (k0 * k0 + 1.0f64).sqrt();
        for i in 0..g.n {
            let x = g.x_nodes()[i];
            let expect = 2.0 * (c0 * C::new(0.0, k0 * x).exp()).re / om.sqrt();
            assert!(
                (phi.values[i].re - expect).abs() < 1e-12,
                "phi mismatch at x={x}"
            );
            assert_eq!(phi.values[i].im, 0.0);
        }
        // direct-sum oracle on a random α
        let alpha = random_alpha(&g, 2);
        let phi = k.phi_alpha(&alpha).unwrap();
        for i in 0..g.n {
            let x = g.x_nodes()[i];
            let mut acc = C::new(0.0, 0.0);
            for j in 0..g.n {
                acc += C::new(0.0, g.k_nodes()[j] * x).exp() * alpha.values[j] * k.g0[j];
            }
            let direct = 2.0 * (acc * g.dk).re;
            assert!((phi.values[i].re - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_zero_and_real() {
        let (g, k) = setup(16, 5.0);
        let z = g.zeros_momentum();
        assert_eq!(k.phi_alpha(&z).unwrap().max_abs(), 0.0);
        assert_eq!(k.phi_tilde_alpha(&z).unwrap().max_abs(), 0.0);
        let alpha = random_alpha(&g, 9);
        for f in [
            k.phi_alpha(&alpha).unwrap(),
            k.phi_tilde_alpha(&alpha).unwrap(),
        ] {
            assert!(f.values.iter().all(|v| v.im == 0.0));
        }
    }

    #[test]
    fn phi_tilde_kills_dressing_increment() {
        // φ̃ of α = B₀·widehat(|u|²) vanishes identically
        let (g, k) = setup(64, 16.0);
        let u = gaussian_u(&g);
        let rho_hat = g.fft_forward(&density(&u));
        let c = (2.0 * std::f64::consts::PI).sqrt();
        let mut alpha = g.zeros_momentum();
        for i in 0..g.n {
            alpha.values[i] = rho_hat.values[i].scale(k.b0[i] * c);
        }
        let phit = k.phi_tilde_alpha(&alpha).unwrap();
        assert!(phit.max_abs() < 1e-13, "max {:.3e}", phit.max_abs());
    }

    #[test]
    fn c_alpha_symmetry_and_sup_bound() {
        let (g, k) = setup(16, 6.0);
        // real even α: kB₀ odd × even ⇒ the sum at x = 0 vanishes
        let mut alpha = g.zeros_momentum();
        for i in 0..g.n {
            if g.is_nyquist(i) {
                continue;
            }
            let kk = g.k_nodes()[i];
            alpha.values[i] = C::new((-kk * kk / 2.0).exp(), 0.0);
        }
        let c = k.c_alpha(&alpha).unwrap();
        let x0 = g.m / 2; // x = 0 node
        assert!(c[0].values[x0].im.abs() < 1e-14);
        assert!(c[0].values[x0].re.abs() < 1e-14);

        let alpha = random_alpha(&g, 4);
        let f = k.f_alpha(&alpha).unwrap();
        let mut bound = 0.0;
        for i in 0..g.n {
            bound += k.kb0[0][i].abs() * alpha.values[i].norm();
        }
        bound *= 2.0 * g.dk;
        assert!(f[0].max_abs() <= bound + 1e-13);
    }

    #[test]
    fn v_theta_zero_and_const_density_oracle() {
        let (g, k) = setup(8, 4.0);
        let rho_const = g.spatial_from_fn(|_| C::new(0.3, 0.0));
        assert_eq!(k.v_theta_convolve(&rho_const, 0.0).unwrap().max_abs(), 0.0);

        // direct double-sum oracle on a small grid, const and random ρ
        for (seed, theta) in [(0u64, 1.0f64), (1, 0.5)] {
            let rho = if seed == 0 {
                rho_const.clone()
            } else {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut r = g.zeros_spatial();
                for v in &mut r.values {
                    *v = C::new(rng.gen_range(0.0..1.0), 0.0);
                }
                r
            };
            let conv = k.v_theta_convolve(&rho, theta).unwrap();
            let vnodes = k.v_theta_at_nodes(theta);
            // V(x) against the raw kernel sum
            for i in 0..g.n {
                let x = g.x_nodes()[i];
                let mut acc = 0.0;
                for j in 0..g.n {
                    let kk = g.k_nodes()[j];
                    let w = -4.0 * theta * k.g0[j] * k.b0[j]
                        + 2.0 * theta * theta * k.omega[j] * k.b0[j] * k.b0[j];
                    acc += w * (kk * x).cos() * g.dk;
                }
                assert!((vnodes.values[i].re - acc).abs() < 1e-12);
            }
            // periodic convolution against the direct double sum;
            // displacement (i-j)·dx sits at node index i-j+m/2 (x₀ = -L/2)
            for i in 0..g.n {
                let mut acc = 0.0;
                for j in 0..g.n {
                    let shift = (i + g.n - j + g.n / 2) % g.n;
                    acc += vnodes.values[shift].re * rho.values[j].re * g.dx;
                }
                assert!(
                    (conv.values[i].re - acc).abs() < 1e-12,
                    "V*ρ mismatch: {} vs {}",
                    conv.values[i].re,
                    acc
                );
            }
        }
    }

    #[test]
    fn f_u_plane_wave_vanishes() {
        let (g, k) = setup(16, 2.0 * std::f64::consts::PI);
        let vol = g.volume();
        let u = g.spatial_from_fn(|x| C::new(0.0, 3.0 * x[0]).exp() / C::new(vol.sqrt(), 0.0));
        let f = k.f_u(&u).unwrap();
        assert!(
            f.values.iter().all(|v| v.norm() < 1e-13),
            "f_u should vanish for a plane wave"
        );
        // f_u(0) = 0 for any u since kB₀(0) = 0
        let w = gaussian_u(&g);
        let f = k.f_u(&w).unwrap();
        assert_eq!(f.values[g.m / 2].norm(), 0.0);
    }

    #[test]
    fn g_u_alpha_brute_force() {
        let (g, k) = setup(16, 7.0);
        let u = gaussian_u(&g);
        let alpha = random_alpha(&g, 13);
        let gg = k.g_u_alpha(&u, &alpha).unwrap();
        assert_eq!(gg.values[g.m / 2].norm(), 0.0, "g(0) must vanish");
        let z = g.zeros_momentum();
        assert_eq!(k.g_u_alpha(&u, &z).unwrap().max_abs(), 0.0);

        // brute-force double sum: F_α direct, then g(k) direct
        let mut f_direct = vec![0.0; g.n];
        for (x_i, fd) in f_direct.iter_mut().enumerate() {
            let x = g.x_nodes()[x_i];
            let mut acc = C::new(0.0, 0.0);
            for j in 0..g.n {
                acc += C::new(0.0, g.k_nodes()[j] * x).exp() * alpha.values[j] * k.kb0[0][j];
            }
            *fd = 2.0 * (acc * g.dk).re;
        }
        for i in 0..g.n {
            let kk = g.k_nodes()[i];
            let mut acc = C::new(0.0, 0.0);
            for (x_i, fd) in f_direct.iter().enumerate() {
                let x = g.x_nodes()[x_i];
                acc += C::new(0.0, -kk * x).exp() * u.values[x_i].norm_sqr() * fd * g.dx;
            }
            let direct = acc * 2.0 * k.kb0[0][i];
            assert!(
                (gg.values[i] - direct).norm() < 1e-10,
                "g mismatch at k={kk}: {:?} vs {:?}",
                gg.values[i],
                direct
            );
        }
    }

    #[test]
    fn mu_reductions_and_brute_force() {
        let (g, k) = setup(32, 10.0);
        let u = gaussian_u(&g);
        let z = g.zeros_momentum();
        assert!(k.mu(&u, &z, 0.0).unwrap().abs() < 1e-15);

        let alpha = random_alpha(&g, 21);
        // θ=1 equals the dressed gauge formula assembled independently
        let mu1 = k.mu(&u, &alpha, 1.0).unwrap();
        let rho = density(&u);
        let vconv = k.v_theta_convolve(&rho, 1.0).unwrap();
        let f = k.f_u(&u).unwrap();
        let gg = k.g_u_alpha(&u, &alpha).unwrap();
        let dressed = 0.5 * expect_real_potential(&u, &vconv)
            + inner_momentum(&alpha, &f).re
            + inner_momentum(&alpha, &gg).re;
        assert!((mu1 - dressed).abs() < 1e-12);

        // brute-force reassembly at θ = 0.6
        let theta = 0.6;
        let mu_t = k.mu(&u, &alpha, theta).unwrap();
        let phi = k.phi_alpha(&alpha).unwrap();
        let vconv = k.v_theta_convolve(&rho, theta).unwrap();
        let direct = (1.0 - theta) / 2.0 * expect_real_potential(&u, &phi)
            + 0.5 * expect_real_potential(&u, &vconv)
            + theta * (inner_momentum(&alpha, &f).re + theta * inner_momentum(&alpha, &gg).re);
        assert!((mu_t - direct).abs() < 1e-10);

        // non-normalized u rejected
        let mut bad = u.clone();
        bad.scale(C::new(1.1, 0.0));
        assert!(k.mu(&bad, &alpha, 0.5).is_err());
    }

    #[test]
    fn tau_orthogonality_and_sup_bound() {
        let (g, k) = setup(32, 9.0);
        let u = gaussian_u(&g);
        let z = g.zeros_momentum();
        assert_eq!(k.tau(&u, &z).unwrap().max_abs(), 0.0);
        let alpha = random_alpha(&g, 5);
        let tau = k.tau(&u, &alpha).unwrap();
        // the gauge term subtracts half the mean: <u, τ u> = ½ <u, φ̃ u>
        let phit = k.phi_tilde_alpha(&alpha).unwrap();
        let mut tau_mean = 0.0;
        let mut phit_mean = 0.0;
        for i in 0..g.n {
            tau_mean += tau.values[i].re * u.values[i].norm_sqr();
            phit_mean += phit.values[i].re * u.values[i].norm_sqr();
        }
        assert!(
            (tau_mean * g.dx - 0.5 * phit_mean * g.dx).abs() < 1e-12,
            "<u, τ u> = {} but ½<u, φ̃ u> = {}",
            tau_mean * g.dx,
            0.5 * phit_mean * g.dx
        );
        // sup bound 3 ||B₀|| ||α||
        let b0_l2 = (k.b0.iter().map(|b| b * b).sum::<f64>() * g.dk).sqrt();
        let bound = 3.0 * b0_l2 * field_norm(&alpha, 0.0);
        assert!(tau.max_abs() <= bound);
    }

    #[test]
    fn h_theta_plane_wave_and_self_adjointness() {
        let l = 4.0 * std::f64::consts::PI;
        let (g, k) = setup(64, l);
        // free case: θ=0, α=0, ψ = u = plane wave → hψ = k₀²ψ
        let k0 = 4.0 * g.dk;
        let u = g.spatial_from_fn(|x| C::new(0.0, k0 * x[0]).exp() / C::new(l.sqrt(), 0.0));
        let z = g.zeros_momentum();
        let h = k.apply_h_theta(&u, &z, 0.0, &u).unwrap();
        for i in 0..g.n {
            assert!((h.values[i] - u.values[i].scale(k0 * k0)).norm() < 1e-11);
        }

        // self-adjointness on random fields
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut psi = g.zeros_spatial();
        let mut phi = g.zeros_spatial();
        for v in psi.values.iter_mut().chain(phi.values.iter_mut()) {
            *v = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let ug = gaussian_u(&g);
        let alpha = random_alpha(&g, 30);
        let theta = 0.8;
        let hpsi = k.apply_h_theta(&ug, &alpha, theta, &psi).unwrap();
        let hphi = k.apply_h_theta(&ug, &alpha, theta, &phi).unwrap();
        let lhs = inner_spatial(&psi, &hphi);
        let rhs = inner_spatial(&hpsi, &phi);
        assert!(
            (lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0),
            "h not symmetric: {lhs} vs {rhs}"
        );

        // θ=1, α=0, u constant: h u = ½ c u with c = (V*|u|²)(x) constant
        let vol = g.volume();
        let uc = g.spatial_from_fn(|_| C::new(1.0 / vol.sqrt(), 0.0));
        let hu = k.apply_h_theta(&uc, &z, 1.0, &uc).unwrap();
        let rho = density(&uc);
        let vconv = k.v_theta_convolve(&rho, 1.0).unwrap();
        let c_val = vconv.values[0].re;
        assert!(vconv.values.iter().all(|v| (v.re - c_val).abs() < 1e-13));
        for i in 0..g.n {
            assert!((hu.values[i] - uc.values[i].scale(0.5 * c_val)).norm() < 1e-12);
        }
    }
}
