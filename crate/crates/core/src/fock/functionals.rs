//! Condensation/coherence functionals, reduced density matrices and the
//! excitation map between the fixed-N space and the excitation space.

use nalgebra::DMatrix;
use num_complex::Complex;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{MomentumField, SpatialField};
use crate::scalar::Scalar;

use super::basis::{FockSpace, FockVector, ParticleSector};
use super::operators::weyl_apply;

/// One-particle reduced density `γ^{(1,0)}[(i,j)] = ⟨b†_j b_i⟩` and the
/// field density `γ^{(0,1)}[(k,l)] = ⟨a†_l a_k⟩` in the retained mode bases.
pub fn reduced_densities<S: Scalar>(
    psi: &FockVector<S>,
) -> (DMatrix<Complex<S>>, DMatrix<Complex<S>>) {
    let sp = &psi.space;
    let m_b = sp.m_b();
    let m_a = sp.m_a();
    let mut g1 = DMatrix::<Complex<S>>::zeros(m_b, m_b);
    let mut g0 = DMatrix::<Complex<S>>::zeros(m_a, m_a);
    for (pi, occ) in sp.pstates.iter().enumerate() {
        for f in 0..sp.fdim {
            let src = psi.amp[sp.flat(pi, f)];
            if src.norm_sqr() == S::zero() {
                continue;
            }
            // particle sector: ⟨b†_j b_i⟩ moves one boson i -> j
            for i in 0..m_b {
                if occ[i] == 0 {
                    continue;
                }
                // diagonal
                g1[(i, i)] += src.conj().scale(S::of_usize(occ[i] as usize)) * src;
                for j in 0..m_b {
                    if j == i {
                        continue;
                    }
                    let mut newocc = occ.clone();
                    newocc[i] -= 1;
                    newocc[j] += 1;
                    if let Some(pj) = sp.pstate_index(&newocc) {
                        let amp = num_traits::Float::sqrt(
                            S::of_usize(occ[i] as usize) * S::of_usize(newocc[j] as usize),
                        );
                        let dst = psi.amp[sp.flat(pj, f)];
                        g1[(i, j)] += dst.conj() * src.scale(amp);
                    }
                }
            }
            // field sector
            for k in 0..m_a {
                let nk = sp.focc(f, k);
                if nk == 0 {
                    continue;
                }
                g0[(k, k)] += src.conj().scale(S::of_usize(nk)) * src;
                for l in 0..m_a {
                    if l == k {
                        continue;
                    }
                    if let Some(f1) = sp.fshift(f, k, false) {
                        if let Some(f2) = sp.fshift(f1, l, true) {
                            let amp = num_traits::Float::sqrt(
                                S::of_usize(nk) * S::of_usize(sp.focc(f2, l)),
                            );
                            let dst = psi.amp[sp.flat(pi, f2)];
                            g0[(k, l)] += dst.conj() * src.scale(amp);
                        }
                    }
                }
            }
        }
    }
    // orientation: g1[(i,j)] = <b†_j b_i>
    let g1 = {
        let mut out = DMatrix::<Complex<S>>::zeros(m_b, m_b);
        for i in 0..m_b {
            for j in 0..m_b {
                // accumulated above as <(moved i->j state)| src>: equals <b†_j b_i>
                out[(i, j)] = g1[(j, i)].conj();
            }
        }
        out
    };
    let g0 = {
        let mut out = DMatrix::<Complex<S>>::zeros(m_a, m_a);
        for k in 0..m_a {
            for l in 0..m_a {
                out[(k, l)] = g0[(l, k)].conj();
            }
        }
        out
    };
    (g1, g0)
}

/// Expectations `⟨A_m⟩` of the field annihilators.
fn field_means<S: Scalar>(psi: &FockVector<S>) -> Vec<Complex<S>> {
    let sp = &psi.space;
    let mut out = vec![Complex::new(S::zero(), S::zero()); sp.m_a()];
    for pi in 0..sp.pdim {
        for f in 0..sp.fdim {
            let src = psi.amp[sp.flat(pi, f)];
            if src.norm_sqr() == S::zero() {
                continue;
            }
            for m in 0..sp.m_a() {
                if let Some(fj) = sp.fshift(f, m, false) {
                    let amp = num_traits::Float::sqrt(S::of_usize(sp.focc(f, m)));
                    out[m] += psi.amp[sp.flat(pi, fj)].conj() * src.scale(amp);
                }
            }
        }
    }
    out
}

/// Occupation expectations `⟨A†_m A_m⟩` per field mode, optionally weighted.
fn field_occupations<S: Scalar>(psi: &FockVector<S>) -> Vec<S> {
    let sp = &psi.space;
    let mut out = vec![S::zero(); sp.m_a()];
    for pi in 0..sp.pdim {
        for f in 0..sp.fdim {
            let w = psi.amp[sp.flat(pi, f)].norm_sqr();
            if w == S::zero() {
                continue;
            }
            for m in 0..sp.m_a() {
                out[m] += w * S::of_usize(sp.focc(f, m));
            }
        }
    }
    out
}

/// Deviation functionals from the condensate/coherent reference `(u, α)`:
/// `(⟨(q_u)_1⟩, N^{-1}‖N_a^{1/2} W*(√Nα)ψ‖²)`. The displaced number
/// expectation is evaluated exactly through the shift property.
pub fn beta_functional<S: Scalar>(
    psi: &FockVector<S>,
    u: &SpatialField<S>,
    alpha: &MomentumField<S>,
    n_particles: usize,
) -> Result<(S, S)> {
    let sp = &psi.space;
    let (g1, _) = reduced_densities(psi);
    let coeffs = sp.particle_coefficients(u);
    let mut pu = Complex::new(S::zero(), S::zero());
    for i in 0..sp.m_b() {
        for j in 0..sp.m_b() {
            pu += coeffs[i].conj() * g1[(i, j)] * coeffs[j];
        }
    }
    let n = S::of_usize(n_particles);
    let beta_p = S::one() - pu.re / n;

    // displaced field quanta: Σ_m ⟨(A†_m - ḡ_m)(A_m - g_m)⟩, g = √N α
    let g: Vec<Complex<S>> = sp
        .field_coefficients(alpha)
        .into_iter()
        .map(|c| c.scale(num_traits::Float::sqrt(n)))
        .collect();
    let occ = field_occupations(psi);
    let means = field_means(psi);
    let mut disp = S::zero();
    for m in 0..sp.m_a() {
        disp += occ[m] - S::of(2.0) * (g[m].conj() * means[m]).re + g[m].norm_sqr();
    }
    Ok((beta_p, disp / n))
}

/// Kinetic-weighted deviation `(‖∇₁(q_u)₁ψ‖², N^{-1}‖dΓ(ω)^{1/2}W*ψ‖²)`
/// combined into one scalar.
pub fn gamma_functional<S: Scalar>(
    psi: &FockVector<S>,
    u: &SpatialField<S>,
    alpha: &MomentumField<S>,
    n_particles: usize,
) -> Result<S> {
    let sp = &psi.space;
    let m_b = sp.m_b();
    let coeffs = sp.particle_coefficients(u);
    // q_u (-Δ) q_u in the particle-mode basis
    let mut q = DMatrix::<Complex<S>>::identity(m_b, m_b);
    for i in 0..m_b {
        for j in 0..m_b {
            q[(i, j)] -= coeffs[i] * coeffs[j].conj();
        }
    }
    let mut kin = DMatrix::<Complex<S>>::zeros(m_b, m_b);
    for i in 0..m_b {
        kin[(i, i)] = Complex::new(sp.grid.k_sq(sp.pmodes[i]), S::zero());
    }
    let qkq = &q * kin * &q;
    let (g1, _) = reduced_densities(psi);
    // ⟨dΓ_b(M)⟩ = Σ_{ij} M[(j,i)] ⟨b†_j b_i⟩ = Σ_{ij} M[(j,i)] g1[(i,j)]
    let mut part = Complex::new(S::zero(), S::zero());
    for i in 0..m_b {
        for j in 0..m_b {
            part += qkq[(j, i)] * g1[(i, j)];
        }
    }
    let n = S::of_usize(n_particles);
    let mut total = part.re / n;

    let g: Vec<Complex<S>> = sp
        .field_coefficients(alpha)
        .into_iter()
        .map(|c| c.scale(num_traits::Float::sqrt(n)))
        .collect();
    let means = field_means(psi);
    // ω-weighted displaced occupation, computed modewise
    for m in 0..sp.m_a() {
        let om = num_traits::Float::sqrt(sp.grid.k_sq(sp.fmodes[m]) + S::one());
        // ⟨A†A⟩ for this mode
        let mut occ_m = S::zero();
        for pi in 0..sp.pdim {
            for f in 0..sp.fdim {
                occ_m += psi.amp[sp.flat(pi, f)].norm_sqr() * S::of_usize(sp.focc(f, m));
            }
        }
        total += om * (occ_m - S::of(2.0) * (g[m].conj() * means[m]).re + g[m].norm_sqr()) / n;
    }
    Ok(total)
}

/// Forward excitation map for a condensate that coincides with one particle
/// mode (`u_mode`): undoes the coherent field displacement and re-indexes
/// the condensate occupation into excitation sectors.
pub fn excitation_map<S: Scalar>(
    psi: &FockVector<S>,
    exc_space: &Arc<FockSpace<S>>,
    u_mode: usize,
    alpha: &MomentumField<S>,
    n_particles: usize,
) -> Result<FockVector<S>> {
    let sp = &psi.space;
    let ParticleSector::Fixed(n) = sp.sector else {
        return Err(CoreError::InvalidParameter("expected a fixed-N space".into()));
    };
    if n != n_particles {
        return Err(CoreError::InvalidParameter("particle number mismatch".into()));
    }
    if exc_space.pmodes != sp.pmodes || exc_space.fmodes != sp.fmodes {
        return Err(CoreError::ModeMismatch(
            "excitation space modes differ from the N-body space".into(),
        ));
    }
    let g: Vec<Complex<S>> = sp
        .field_coefficients(alpha)
        .into_iter()
        .map(|c| c.scale(num_traits::Float::sqrt(S::of_usize(n))))
        .collect();
    let undisplaced = weyl_apply(psi, &g.iter().map(|z| -z).collect::<Vec<_>>());
    let mut chi = exc_space.zero_vector();
    for (pi, occ) in sp.pstates.iter().enumerate() {
        let mut exc = occ.clone();
        exc[u_mode] = 0;
        let Some(pj) = exc_space.pstate_index(&exc) else {
            continue;
        };
        for f in 0..sp.fdim {
            chi.amp[exc_space.flat(pj, f)] = undisplaced.amp[sp.flat(pi, f)];
        }
    }
    Ok(chi)
}

/// Adjoint of the excitation map for a general condensate wave function:
/// `Ψ = W(√Nα) Σ_m b†(u)^{N-m} χ^{(m)} / √((N-m)!)`.
pub fn excitation_adjoint<S: Scalar>(
    chi: &FockVector<S>,
    nbody_space: &Arc<FockSpace<S>>,
    u: &SpatialField<S>,
    alpha: &MomentumField<S>,
    n_particles: usize,
) -> Result<FockVector<S>> {
    let exc = &chi.space;
    let ParticleSector::Capped(cap) = exc.sector else {
        return Err(CoreError::InvalidParameter("expected a capped space".into()));
    };
    if cap < n_particles {
        return Err(CoreError::InvalidParameter(
            "excitation cap below the particle number".into(),
        ));
    }
    if exc.pmodes != nbody_space.pmodes || exc.fmodes != nbody_space.fmodes {
        return Err(CoreError::ModeMismatch(
            "spaces built over different mode sets".into(),
        ));
    }
    let coeffs = exc.particle_coefficients(u);
    let creator = super::operators::particle_creator(exc, &coeffs)?;
    let mut acc = exc.zero_vector();
    for m in 0..=n_particles {
        // extract the m-excitation component
        let mut part = exc.zero_vector();
        let mut any = false;
        for (pi, occ) in exc.pstates.iter().enumerate() {
            let tot: usize = occ.iter().map(|&x| x as usize).sum();
            if tot != m {
                continue;
            }
            for f in 0..exc.fdim {
                let a = chi.amp[exc.flat(pi, f)];
                if a.norm_sqr() != S::zero() {
                    part.amp[exc.flat(pi, f)] = a;
                    any = true;
                }
            }
        }
        if !any {
            continue;
        }
        for _ in 0..(n_particles - m) {
            part = creator.apply_vec(&part);
        }
        let mut ln_fact = S::zero();
        for i in 2..=(n_particles - m) {
            ln_fact += num_traits::Float::ln(S::of_usize(i));
        }
        let scale = num_traits::Float::exp(-ln_fact * S::of(0.5));
        acc.axpy(Complex::new(scale, S::zero()), &part);
    }
    // move the top sector into the fixed-N space
    let mut out = nbody_space.zero_vector();
    for (pi, occ) in exc.pstates.iter().enumerate() {
        let tot: usize = occ.iter().map(|&x| x as usize).sum();
        if tot != n_particles {
            continue;
        }
        let Some(pj) = nbody_space.pstate_index(occ) else {
            continue;
        };
        for f in 0..exc.fdim {
            out.amp[nbody_space.flat(pj, f)] = acc.amp[exc.flat(pi, f)];
        }
    }
    let g: Vec<Complex<S>> = nbody_space
        .field_coefficients(alpha)
        .into_iter()
        .map(|c| c.scale(num_traits::Float::sqrt(S::of_usize(n_particles))))
        .collect();
    Ok(weyl_apply(&out, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::operators::coherent_product_state;
    use crate::grid::Grid;
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};

    fn setup() -> (
        Arc<Grid<f64>>,
        Arc<FockSpace<f64>>,
        Arc<FockSpace<f64>>,
        SpatialField<f64>,
        MomentumField<f64>,
    ) {
        let g = Grid::new(1, 2.0 * std::f64::consts::PI, 4).unwrap();
        let modes: Vec<usize> = (1..4).collect();
        let n = 3usize;
        let sp = Arc::new(
            FockSpace::new(&g, modes.clone(), modes.clone(), ParticleSector::Fixed(n), 3).unwrap(),
        );
        let exc = Arc::new(
            FockSpace::new(&g, modes.clone(), modes, ParticleSector::Capped(n), 3).unwrap(),
        );
        let vol = g.volume();
        // u = the k=0 plane wave (mode index 1 in the grid, position 1 in pmodes)
        let u = g.spatial_from_fn(|_| C::new(1.0 / vol.sqrt(), 0.0));
        let mut alpha = g.zeros_momentum();
        for i in 0..g.n {
            if g.is_nyquist(i) {
                continue;
            }
            let k: f64 = g.k_sq(i).sqrt();
            alpha.values[i] = C::new(0.05 * (-k * k).exp(), -0.03 * (-k * k).exp());
        }
        (g, sp, exc, u, alpha)
    }

    #[test]
    fn beta_of_product_vanishes() {
        let (_, sp, _, u, alpha) = setup();
        let mut psi = coherent_product_state(&sp, &u, &alpha, 3).unwrap();
        let nrm = psi.norm();
        psi.scale(C::new(1.0 / nrm, 0.0));
        let (bp, bf) = beta_functional(&psi, &u, &alpha, 3).unwrap();
        assert!(bp.abs() < 1e-8, "beta_particle {bp:.3e}");
        assert!(bf.abs() < 1e-7, "beta_field {bf:.3e}");
        // γ of a plane-wave condensate with coherent field also vanishes
        let gm = gamma_functional(&psi, &u, &alpha, 3).unwrap();
        assert!(gm.abs() < 1e-6, "gamma {gm:.3e}");
    }

    #[test]
    fn beta_single_excitation_exact() {
        let (g, sp, _, u, _) = setup();
        let n = 3;
        // one particle moved to v ⊥ u: symmetrized occupation (n_u = N-1, n_v = 1)
        let alpha0 = g.zeros_momentum();
        // u occupies mode position 1 (k = 0); move one boson to position 2
        let mut occ = vec![0u8; sp.m_b()];
        occ[1] = (n - 1) as u8;
        occ[2] = 1;
        let psi = sp.basis_vector(&occ, 0).unwrap();
        let (bp, bf) = beta_functional(&psi, &u, &alpha0, n).unwrap();
        assert!(
            (bp - 1.0 / n as f64).abs() < 1e-12,
            "beta_particle = {bp}, want {}",
            1.0 / n as f64
        );
        assert!(bf.abs() < 1e-12);

        // one field quantum on top of the vacuum: beta_field = 1/N exactly
        occ[2] = 0;
        occ[1] = n as u8;
        let f_one = sp.fshift(0, 0, true).unwrap();
        let psi = sp.basis_vector(&occ, f_one).unwrap();
        let (bp, bf) = beta_functional(&psi, &u, &alpha0, n).unwrap();
        assert!(bp.abs() < 1e-12);
        assert!((bf - 1.0 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn gamma_matches_operator_oracle() {
        let (_, sp, _, u, alpha) = setup();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut psi = sp.zero_vector();
        for a in psi.amp.iter_mut() {
            *a = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let nn = psi.norm();
        psi.scale(C::new(1.0 / nn, 0.0));
        let n = 3;
        let gm = gamma_functional(&psi, &u, &alpha, n).unwrap();
        assert!(gm >= -1e-12, "gamma must be nonnegative, got {gm}");

        // operator-level oracle: dΓ_b(q K q) as an explicit sparse matrix
        // plus the ω-weighted displaced number operator
        let coeffs = sp.particle_coefficients(&u);
        let m_b = sp.m_b();
        let mut q = DMatrix::<C>::identity(m_b, m_b);
        for i in 0..m_b {
            for j in 0..m_b {
                q[(i, j)] -= coeffs[i] * coeffs[j].conj();
            }
        }
        let mut kin = DMatrix::<C>::zeros(m_b, m_b);
        for i in 0..m_b {
            kin[(i, i)] = C::new(sp.grid.k_sq(sp.pmodes[i]), 0.0);
        }
        let qkq = &q * kin * &q;
        let op = crate::fock::dgamma_b(&sp, &qkq);
        let mut direct = op.expectation(&psi).re / n as f64;
        let g: Vec<C> = sp
            .field_coefficients(&alpha)
            .into_iter()
            .map(|c| c * (n as f64).sqrt())
            .collect();
        for m in 0..sp.m_a() {
            let om = (sp.grid.k_sq(sp.fmodes[m]) + 1.0).sqrt();
            let a_op = crate::fock::field_annihilator(&sp, m);
            let mean = a_op.expectation(&psi);
            let mut occ_m = 0.0;
            for pi in 0..sp.pdim {
                for f in 0..sp.fdim {
                    occ_m += psi.amp[sp.flat(pi, f)].norm_sqr() * sp.focc(f, m) as f64;
                }
            }
            direct += om * (occ_m - 2.0 * (g[m].conj() * mean).re + g[m].norm_sqr()) / n as f64;
        }
        assert!(
            (gm - direct).abs() < 1e-10 * gm.abs().max(1.0),
            "gamma {gm} vs oracle {direct}"
        );
    }

    #[test]
    fn reduced_density_properties() {
        let (_, sp, _, u, alpha) = setup();
        let n = 3;
        let psi = coherent_product_state(&sp, &u, &alpha, n).unwrap();
        let (g1, g0) = reduced_densities(&psi);
        let norm2 = psi.norm().powi(2);
        // traces
        let tr1: C = (0..sp.m_b()).map(|i| g1[(i, i)]).sum();
        assert!((tr1.re / norm2 - n as f64).abs() < 1e-10);
        let tr0: C = (0..sp.m_a()).map(|k| g0[(k, k)]).sum();
        let na = crate::fock::number_a(&sp).expectation(&psi).re;
        assert!((tr0.re - na).abs() < 1e-10);
        // product state: γ^{(1,0)} = N |u⟩⟨u| in mode coefficients
        let coeffs = sp.particle_coefficients(&u);
        for i in 0..sp.m_b() {
            for j in 0..sp.m_b() {
                let want = coeffs[i] * coeffs[j].conj() * n as f64 * norm2;
                assert!(
                    (g1[(i, j)] - want).norm() < 1e-10,
                    "γ(1,0) mismatch at ({i},{j})"
                );
            }
        }

        // trace-distance inequality on random states
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let mut psi = sp.zero_vector();
            for a in psi.amp.iter_mut() {
                *a = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let nn = psi.norm();
            psi.scale(C::new(1.0 / nn, 0.0));
            let (g1, _) = reduced_densities(&psi);
            let mut diff = DMatrix::<C>::zeros(sp.m_b(), sp.m_b());
            for i in 0..sp.m_b() {
                for j in 0..sp.m_b() {
                    diff[(i, j)] = g1[(i, j)] - coeffs[i] * coeffs[j].conj() * n as f64;
                }
            }
            let tnorm = crate::linalg::trace_norm_hermitian(&diff);
            let (bp, _) = beta_functional(&psi, &u, &alpha, n).unwrap();
            let bound = n as f64 * (8.0 * bp.max(0.0)).sqrt();
            assert!(
                tnorm <= bound + 1e-9,
                "trace-distance bound violated: {tnorm} > {bound}"
            );
        }
    }

    #[test]
    fn excitation_roundtrip_and_relations() {
        let (_, sp, exc, u, alpha) = setup();
        let n = 3;
        // product state maps to the double vacuum
        let psi = coherent_product_state(&sp, &u, &alpha, n).unwrap();
        let chi = excitation_map(&psi, &exc, 1, &alpha, n).unwrap();
        let vac_amp = chi.amp[exc.flat(0, 0)];
        assert!(
            (vac_amp.norm() - psi.norm()).abs() < 1e-7,
            "product state should map to the vacuum: {:?}",
            vac_amp
        );
        let mut off_vac = 0.0f64;
        for (pi, occ) in exc.pstates.iter().enumerate() {
            let tot: usize = occ.iter().map(|&x| x as usize).sum();
            for f in 0..exc.fdim {
                if tot != 0 || f != 0 {
                    off_vac += chi.amp[exc.flat(pi, f)].norm_sqr();
                }
            }
        }
        assert!(off_vac.sqrt() < 1e-4, "residual excitations {:.3e}", off_vac.sqrt());

        // X* X = 1 on random states
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..4 {
            let mut psi = sp.zero_vector();
            for a in psi.amp.iter_mut() {
                *a = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let nn = psi.norm();
            psi.scale(C::new(1.0 / nn, 0.0));
            let chi = excitation_map(&psi, &exc, 1, &alpha, n).unwrap();
            let back = excitation_adjoint(&chi, &sp, &u, &alpha, n).unwrap();
            let mut err: f64 = 0.0;
            for i in 0..sp.dim {
                err = err.max((back.amp[i] - psi.amp[i]).norm());
            }
            assert!(err < 1e-10, "X*X defect {err:.3e}");
        }

        // X b†(u)b(u) X* = [N - N_b]_+ on random excitation vectors
        let mut chi = exc.zero_vector();
        for a in chi.amp.iter_mut() {
            *a = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        // keep only components orthogonal to u (occupation of mode 1 zero)
        for (pi, occ) in exc.pstates.iter().enumerate() {
            if occ[1] != 0 {
                for f in 0..exc.fdim {
                    chi.amp[exc.flat(pi, f)] = C::new(0.0, 0.0);
                }
            }
        }
        let nn = chi.norm();
        chi.scale(C::new(1.0 / nn, 0.0));
        let psi = excitation_adjoint(&chi, &sp, &u, &alpha, n).unwrap();
        // b†(u)b(u) on the N-body space = occupation of the u mode
        let mut lhs = C::new(0.0, 0.0);
        for (pi, occ) in sp.pstates.iter().enumerate() {
            for f in 0..sp.fdim {
                lhs += psi.amp[sp.flat(pi, f)].norm_sqr() * C::new(occ[1] as f64, 0.0);
            }
        }
        let mut rhs = C::new(0.0, 0.0);
        for (pi, occ) in exc.pstates.iter().enumerate() {
            let nb: usize = occ.iter().map(|&x| x as usize).sum();
            let w = (n as isize - nb as isize).max(0) as f64;
            for f in 0..exc.fdim {
                rhs += chi.amp[exc.flat(pi, f)].norm_sqr() * C::new(w, 0.0);
            }
        }
        assert!(
            (lhs - rhs).norm() < 1e-9,
            "number relation violated: {lhs} vs {rhs}"
        );
    }
}
