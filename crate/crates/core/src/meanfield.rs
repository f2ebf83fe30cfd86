//! The interpolating mean-field flow family: the coupled
//! Schrödinger–Klein–Gordon system at θ = 0, the dressed system at θ = 1,
//! the closed-form dressing map between them, and fixed-step RK4 integration
//! with conservation diagnostics.

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::grid::{field_norm, sobolev_norm, MomentumField, SpatialField};
use crate::kernels::{density, expect_real_potential, kinetic_energy, KernelSet};
use crate::scalar::Scalar;

/// The pair `(u, α)` at a time stamp: `u` on the spatial grid, `α` on the
/// momentum grid.
#[derive(Clone)]
pub struct MeanFieldState<S: Scalar> {
    pub u: SpatialField<S>,
    pub alpha: MomentumField<S>,
    pub t: S,
}

impl<S: Scalar> MeanFieldState<S> {
    pub fn new(u: SpatialField<S>, alpha: MomentumField<S>) -> Self {
        Self {
            u,
            alpha,
            t: S::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.alpha.is_finite()
    }

    /// `L²⊕L²` distance between two states.
    pub fn distance(&self, other: &Self) -> S {
        let mut du = self.u.clone();
        du.axpy(-Complex::new(S::one(), S::zero()), &other.u);
        let mut da = self.alpha.clone();
        da.axpy(-Complex::new(S::one(), S::zero()), &other.alpha);
        num_traits::Float::sqrt(du.norm_sq() + da.norm_sq())
    }

    fn axpy(&mut self, c: S, other: &(SpatialField<S>, MomentumField<S>)) {
        let cc = Complex::new(c, S::zero());
        self.u.axpy(cc, &other.0);
        self.alpha.axpy(cc, &other.1);
    }
}

/// Integration parameters for one flow run.
#[derive(Clone, Debug)]
pub struct FlowSpec<S: Scalar> {
    pub theta: S,
    pub dt: S,
    pub t_final: S,
    /// Record a snapshot every this many steps (0 = endpoints only).
    pub snapshot_stride: usize,
}

impl<S: Scalar> FlowSpec<S> {
    pub fn new(theta: S, dt: S, t_final: S) -> Result<Self> {
        if dt <= S::zero() {
            return Err(CoreError::InvalidParameter("dt must be positive".into()));
        }
        if theta < S::zero() || theta > S::one() {
            return Err(CoreError::InvalidParameter(
                "theta must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            theta,
            dt,
            t_final,
            snapshot_stride: 0,
        })
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }
}

/// Snapshots plus per-snapshot diagnostics along one trajectory.
pub struct Trajectory<S: Scalar> {
    pub states: Vec<MeanFieldState<S>>,
    pub times: Vec<S>,
    pub norm_u: Vec<S>,
    pub energy_theta: Vec<S>,
    pub h3_norm_u: Vec<S>,
    pub h52_norm_alpha: Vec<S>,
}

impl<S: Scalar> Trajectory<S> {
    fn push(&mut self, kset: &KernelSet<S>, theta: S, state: &MeanFieldState<S>) {
        self.times.push(state.t);
        self.norm_u.push(state.u.norm());
        self.energy_theta.push(energy(kset, state, theta));
        self.h3_norm_u.push(sobolev_norm(&state.u, S::of(3.0)));
        self.h52_norm_alpha
            .push(field_norm(&state.alpha, S::of(2.5)));
        self.states.push(state.clone());
    }

    pub fn last(&self) -> &MeanFieldState<S> {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Right-hand side of the θ-interpolated flow:
/// `i∂u = h_{u,α,θ} u`,
/// `i∂α = ωα + (1-θ)⟨u,G(k)u⟩ + θ f_u + θ² g_{u,α}`.
pub fn theta_rhs<S: Scalar>(
    kset: &KernelSet<S>,
    state: &MeanFieldState<S>,
    theta: S,
) -> Result<(SpatialField<S>, MomentumField<S>)> {
    if theta < S::zero() || theta > S::one() {
        return Err(CoreError::InvalidParameter(
            "theta must lie in [0, 1]".into(),
        ));
    }
    let grid = &kset.grid;
    let minus_i = -S::i();

    let hu = kset.apply_h_theta(&state.u, &state.alpha, theta, &state.u)?;
    let mut du = grid.zeros_spatial();
    for i in 0..grid.n {
        du.values[i] = minus_i * hu.values[i];
    }

    let rho_hat = grid.fft_forward(&density(&state.u));
    let c = kset.two_pi_d2();
    let f = kset.f_u(&state.u)?;
    let g = kset.g_u_alpha(&state.u, &state.alpha)?;
    let mut dalpha = grid.zeros_momentum();
    for i in 0..grid.n {
        let source = rho_hat.values[i].scale((S::one() - theta) * c * kset.g0[i])
            + f.values[i].scale(theta)
            + g.values[i].scale(theta * theta);
        dalpha.values[i] = minus_i * (state.alpha.values[i].scale(kset.omega[i]) + source);
    }
    Ok((du, dalpha))
}

/// One classical RK4 step of the θ-flow.
pub fn rk4_step<S: Scalar>(
    kset: &KernelSet<S>,
    state: &MeanFieldState<S>,
    theta: S,
    dt: S,
) -> Result<MeanFieldState<S>> {
    let half = S::of(0.5);
    let sixth = S::of(1.0 / 6.0);
    let k1 = theta_rhs(kset, state, theta)?;
    let mut s2 = state.clone();
    s2.axpy(half * dt, &k1);
    let k2 = theta_rhs(kset, &s2, theta)?;
    let mut s3 = state.clone();
    s3.axpy(half * dt, &k2);
    let k3 = theta_rhs(kset, &s3, theta)?;
    let mut s4 = state.clone();
    s4.axpy(dt, &k3);
    let k4 = theta_rhs(kset, &s4, theta)?;

    let mut out = state.clone();
    out.axpy(dt * sixth, &k1);
    out.axpy(dt * sixth * S::of(2.0), &k2);
    out.axpy(dt * sixth * S::of(2.0), &k3);
    out.axpy(dt * sixth, &k4);
    out.t = state.t + dt;
    Ok(out)
}

/// Integrate the θ-flow with fixed-step RK4 and collect diagnostics.
pub fn integrate<S: Scalar>(
    kset: &KernelSet<S>,
    state0: MeanFieldState<S>,
    spec: &FlowSpec<S>,
) -> Result<Trajectory<S>> {
    let nsteps = num_traits::Float::round(spec.t_final / spec.dt).as_f64() as usize;
    let mut traj = Trajectory {
        states: Vec::new(),
        times: Vec::new(),
        norm_u: Vec::new(),
        energy_theta: Vec::new(),
        h3_norm_u: Vec::new(),
        h52_norm_alpha: Vec::new(),
    };
    traj.push(kset, spec.theta, &state0);
    let mut state = state0;
    for step in 0..nsteps {
        state = rk4_step(kset, &state, spec.theta, spec.dt)?;
        if !state.is_finite() {
            return Err(CoreError::NonFinite {
                t: state.t.as_f64(),
                context: format!(
                    "theta flow diverged; last good diagnostics: |u| = {}, E = {}",
                    traj.norm_u.last().unwrap(),
                    traj.energy_theta.last().unwrap()
                ),
            });
        }
        let at_end = step + 1 == nsteps;
        if at_end || (spec.snapshot_stride > 0 && (step + 1) % spec.snapshot_stride == 0) {
            traj.push(kset, spec.theta, &state);
        }
    }
    Ok(traj)
}

/// Conserved energy of the θ-flow,
/// `E_θ = ⟨u,(-Δ + (1-θ)φ_α + θA_α + θ²F_α² + ½V_θ*|u|²)u⟩ + ⟨α,ωα⟩`.
pub fn energy<S: Scalar>(kset: &KernelSet<S>, state: &MeanFieldState<S>, theta: S) -> S {
    let grid = &kset.grid;
    let u = &state.u;
    let rho = density(u);
    let mut acc = kinetic_energy(u);
    if theta != S::one() {
        let phi = kset.phi_alpha(&state.alpha).expect("grid");
        acc += (S::one() - theta) * expect_real_potential(u, &phi);
    }
    if theta != S::zero() {
        // ⟨u, A_α u⟩ = 2⟨u, (-i∇)(c u)⟩ + 2⟨u, conj(c)(-i∇ u)⟩ per axis
        let c = kset.c_alpha(&state.alpha).expect("grid");
        let grad = grid.gradient(u);
        let mut a_term = S::zero();
        let mut f2 = S::zero();
        for a in 0..grid.d {
            let mut prod = grid.zeros_spatial();
            for i in 0..grid.n {
                prod.values[i] = c[a].values[i] * u.values[i];
            }
            let dprod = grid.gradient(&prod);
            for i in 0..grid.n {
                let minus_i = -S::i();
                let val = u.values[i].conj()
                    * (dprod[a].values[i] * minus_i
                        + c[a].values[i].conj() * grad[a].values[i] * minus_i);
                a_term += S::of(2.0) * val.re;
                let fa = S::of(2.0) * c[a].values[i].re;
                f2 += fa * fa * rho.values[i].re;
            }
        }
        acc += theta * a_term * grid.dx_pow_d() + theta * theta * f2 * grid.dx_pow_d();
    }
    let vconv = kset.v_theta_convolve(&rho, theta).expect("grid");
    acc += S::of(0.5) * expect_real_potential(u, &vconv);
    let mut field = S::zero();
    for i in 0..grid.n {
        field += kset.omega[i] * state.alpha.values[i].norm_sqr();
    }
    acc + field * grid.dk_pow_d()
}

/// Closed-form dressing map `(u, α) ↦ (e^{-iθτ_{u,α}} u, α + θ B₀ ŵ)` with
/// `ŵ(k) = ∫ e^{-ikx}|u|² dx`.
pub fn dressing_flow_closed<S: Scalar>(
    kset: &KernelSet<S>,
    state: &MeanFieldState<S>,
    theta: S,
) -> Result<MeanFieldState<S>> {
    let grid = &kset.grid;
    let tau = kset.tau(&state.u, &state.alpha)?;
    let mut u = state.u.clone();
    for i in 0..grid.n {
        let phase = (-S::i().scale(theta * tau.values[i].re)).exp();
        u.values[i] *= phase;
    }
    let rho_hat = grid.fft_forward(&density(&state.u));
    let c = kset.two_pi_d2();
    let mut alpha = state.alpha.clone();
    for i in 0..grid.n {
        alpha.values[i] += rho_hat.values[i].scale(theta * c * kset.b0[i]);
    }
    Ok(MeanFieldState {
        u,
        alpha,
        t: state.t,
    })
}

/// Dressing flow integrated as an ODE in θ:
/// `i∂_θ u = τ_{u,α} u`, `∂_θ α = B₀ ŵ(|u|²)`.
pub fn dressing_flow_ode<S: Scalar>(
    kset: &KernelSet<S>,
    state: &MeanFieldState<S>,
    theta: S,
    dtheta: S,
) -> Result<MeanFieldState<S>> {
    let grid = &kset.grid;
    let rhs = |s: &MeanFieldState<S>| -> Result<(SpatialField<S>, MomentumField<S>)> {
        let tau = kset.tau(&s.u, &s.alpha)?;
        let mut du = grid.zeros_spatial();
        for i in 0..grid.n {
            du.values[i] = -S::i() * s.u.values[i].scale(tau.values[i].re);
        }
        let rho_hat = grid.fft_forward(&density(&s.u));
        let c = kset.two_pi_d2();
        let mut dalpha = grid.zeros_momentum();
        for i in 0..grid.n {
            dalpha.values[i] = rho_hat.values[i].scale(c * kset.b0[i]);
        }
        Ok((du, dalpha))
    };

    let nsteps = num_traits::Float::ceil(num_traits::Float::abs(theta) / dtheta).as_f64() as usize;
    let nsteps = nsteps.max(1);
    let h = theta / S::of_usize(nsteps);
    let half = S::of(0.5);
    let sixth = S::of(1.0 / 6.0);
    let mut s = state.clone();
    for _ in 0..nsteps {
        let k1 = rhs(&s)?;
        let mut s2 = s.clone();
        s2.axpy(half * h, &k1);
        let k2 = rhs(&s2)?;
        let mut s3 = s.clone();
        s3.axpy(half * h, &k2);
        let k3 = rhs(&s3)?;
        let mut s4 = s.clone();
        s4.axpy(h, &k3);
        let k4 = rhs(&s4)?;
        s.axpy(h * sixth, &k1);
        s.axpy(h * sixth * S::of(2.0), &k2);
        s.axpy(h * sixth * S::of(2.0), &k3);
        s.axpy(h * sixth, &k4);
        if !s.is_finite() {
            return Err(CoreError::NonFinite {
                t: s.t.as_f64(),
                context: "dressing flow diverged".into(),
            });
        }
    }
    Ok(s)
}

/// Defect of the commuting-flow diagram
/// `‖s_{θ=1}[t](D(u,α)) - D(s_{θ=0}[t](u,α))‖_{L²⊕L²}`, both time flows
/// integrated with the same fixed step.
pub fn commuting_diagram_defect<S: Scalar>(
    kset: &KernelSet<S>,
    state: &MeanFieldState<S>,
    t: S,
    dt: S,
) -> Result<S> {
    if t == S::zero() {
        return Ok(S::zero());
    }
    let dressed0 = dressing_flow_closed(kset, state, S::one())?;
    let path_a = integrate(kset, dressed0, &FlowSpec::new(S::one(), dt, t)?)?;
    let path_b = integrate(kset, state.clone(), &FlowSpec::new(S::zero(), dt, t)?)?;
    let dressed_t = dressing_flow_closed(kset, path_b.last(), S::one())?;
    Ok(path_a.last().distance(&dressed_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_spatial, Grid};
    use crate::kernels::Cutoff;
    use num_complex::Complex64;
    use std::sync::Arc;

    type C = Complex64;

    fn default_scenario() -> (Arc<Grid<f64>>, KernelSet<f64>, MeanFieldState<f64>) {
        let g = Grid::new(1, 16.0 * std::f64::consts::PI, 256).unwrap();
        let k = KernelSet::new(&g, Cutoff::GridMax);
        let mut u = g.spatial_from_fn(|x| C::new((-x[0] * x[0] / 2.0).exp(), 0.0));
        let n = u.norm();
        u.scale(C::new(1.0 / n, 0.0));
        let alpha = g.zeros_momentum();
        (g.clone(), k, MeanFieldState::new(u, alpha))
    }

    fn small_scenario(seed: u64) -> (Arc<Grid<f64>>, KernelSet<f64>, MeanFieldState<f64>) {
        let g = Grid::new(1, 12.0, 48).unwrap();
        let k = KernelSet::new(&g, Cutoff::GridMax);
        let state = crate::random::smooth_random_state(&g, seed, 1.3, 0.2);
        (g, k, state)
    }

    #[test]
    fn theta_rhs_reductions() {
        let (g, kset, state) = small_scenario(1);
        // θ=0 must equal a directly coded SKG right-hand side
        let (du, dalpha) = theta_rhs(&kset, &state, 0.0).unwrap();
        let phi = kset.phi_alpha(&state.alpha).unwrap();
        let mean = expect_real_potential(&state.u, &phi);
        let lap = g.minus_laplacian(&state.u);
        let rho_hat = g.fft_forward(&density(&state.u));
        let c = (2.0 * std::f64::consts::PI).sqrt();
        for i in 0..g.n {
            let skg_u =
                -C::i() * (lap.values[i] + state.u.values[i] * (phi.values[i].re - 0.5 * mean));
            assert!((du.values[i] - skg_u).norm() < 1e-12);
            let skg_a = -C::i()
                * (state.alpha.values[i] * kset.omega[i] + rho_hat.values[i] * (kset.g0[i] * c));
            assert!((dalpha.values[i] - skg_a).norm() < 1e-12);
        }
        // θ=1 must equal the dressed right-hand side assembled directly
        let (du, dalpha) = theta_rhs(&kset, &state, 1.0).unwrap();
        let hu = kset
            .apply_h_theta(&state.u, &state.alpha, 1.0, &state.u)
            .unwrap();
        let f = kset.f_u(&state.u).unwrap();
        let gg = kset.g_u_alpha(&state.u, &state.alpha).unwrap();
        for i in 0..g.n {
            assert!((du.values[i] + C::i() * hu.values[i]).norm() < 1e-13);
            let want =
                -C::i() * (state.alpha.values[i] * kset.omega[i] + f.values[i] + gg.values[i]);
            assert!((dalpha.values[i] - want).norm() < 1e-13);
        }
        // norm preservation at generator level: Re<u, du/dt> = 0
        for theta in [0.0, 0.5, 1.0] {
            let (du, _) = theta_rhs(&kset, &state, theta).unwrap();
            let re = inner_spatial(&state.u, &du).re;
            assert!(re.abs() < 1e-12, "Re<u,du> = {re} at theta={theta}");
        }
        assert!(theta_rhs(&kset, &state, 1.5).is_err());
    }

    #[test]
    fn free_flow_matches_exact_solution() {
        // zero-coupling variant: u under -Δ only, α under ω only
        let g = Grid::new(1, 12.0, 32).unwrap();
        let kset_zero = {
            let mut k = KernelSet::new(&g, Cutoff::GridMax);
            // switch the coupling off by zeroing the interaction kernels
            for v in k.g0.iter_mut().chain(k.b0.iter_mut()) {
                *v = 0.0;
            }
            for ax in k.kb0.iter_mut() {
                for v in ax.iter_mut() {
                    *v = 0.0;
                }
            }
            k
        };
        let state = crate::random::smooth_random_state(&g, 3, 1.3, 0.5);
        let t = 0.4;
        let run = |dt: f64| {
            let traj = integrate(
                &kset_zero,
                state.clone(),
                &FlowSpec::new(0.0, dt, t).unwrap(),
            )
            .unwrap();
            // exact: û(t) = e^{-ik²t} û(0), α(t) = e^{-iωt} α(0)
            let uhat = g.fft_forward(&state.u);
            let mut exact_uhat = g.zeros_momentum();
            for i in 0..g.n {
                exact_uhat.values[i] = uhat.values[i] * (-C::i() * C::new(g.k_sq(i) * t, 0.0)).exp();
            }
            let exact_u = g.fft_inverse(&exact_uhat);
            let mut err: f64 = 0.0;
            let last = traj.last();
            for i in 0..g.n {
                err = err.max((last.u.values[i] - exact_u.values[i]).norm());
                let om = kset_zero.omega[i];
                let exact_a = state.alpha.values[i] * (-C::i() * C::new(om * t, 0.0)).exp();
                err = err.max((last.alpha.values[i] - exact_a).norm());
            }
            err
        };
        let e1 = run(0.02);
        let e2 = run(0.01);
        assert!(
            e1 / e2 > 12.0,
            "RK4 order: e(0.02) / e(0.01) = {}",
            e1 / e2
        );
        assert!(e2 < 1e-6, "free-flow error {e2:.3e}");
    }

    #[test]
    fn skg_norm_drift_default_scenario() {
        let (_, kset, state) = default_scenario();
        let traj = integrate(&kset, state, &FlowSpec::new(0.0, 1e-3, 1.0).unwrap()).unwrap();
        let drift = (traj.norm_u.last().unwrap() - traj.norm_u[0]).abs();
        assert!(drift <= 1e-8, "norm drift {drift:.3e}");
    }

    #[test]
    fn energy_plane_wave_and_conservation() {
        let l = 2.0 * std::f64::consts::PI;
        let g = Grid::new(1, l, 16).unwrap();
        let kset = KernelSet::new(&g, Cutoff::GridMax);
        let k0 = 2.0;
        let u = g.spatial_from_fn(|x| C::new(0.0, k0 * x[0]).exp() / C::new(l.sqrt(), 0.0));
        let state = MeanFieldState::new(u, g.zeros_momentum());
        let e = energy(&kset, &state, 0.0);
        // θ=0, α=0: only kinetic + V₀ ≡ 0 survive
        assert!((e - k0 * k0).abs() < 1e-12, "E = {e}");

        // conservation along a short run on the small scenario
        let (_, kset, state) = small_scenario(8);
        for theta in [0.25, 1.0] {
            let traj =
                integrate(&kset, state.clone(), &FlowSpec::new(theta, 1e-3, 0.2).unwrap()).unwrap();
            let e0 = traj.energy_theta[0];
            let e1 = traj.energy_theta.last().unwrap();
            assert!(
                ((e1 - e0) / e0).abs() < 1e-8,
                "energy drift at theta={theta}: {} -> {}",
                e0,
                e1
            );
        }
    }

    #[test]
    fn energy_pullback_identity() {
        // E_θ(D[θ](u,α)) = E₀(u,α) at fixed states, no time stepping
        let (_, kset, state) = small_scenario(17);
        let e0 = energy(&kset, &state, 0.0);
        for theta in [0.25, 0.5, 1.0] {
            let dressed = dressing_flow_closed(&kset, &state, theta).unwrap();
            let et = energy(&kset, &dressed, theta);
            assert!(
                (et - e0).abs() <= 1e-10 * e0.abs().max(1.0),
                "pullback defect at theta={theta}: {:.3e}",
                (et - e0).abs()
            );
        }
    }

    #[test]
    fn dressing_closed_form_properties() {
        let (g, kset, state) = small_scenario(23);
        // θ=0 is the identity
        let id = dressing_flow_closed(&kset, &state, 0.0).unwrap();
        assert!(state.distance(&id) < 1e-15);
        let theta = 0.7;
        let dressed = dressing_flow_closed(&kset, &state, theta).unwrap();
        // |u^θ| = |u| pointwise
        for i in 0..g.n {
            assert!((dressed.u.values[i].norm() - state.u.values[i].norm()).abs() < 1e-12);
        }
        // α increment is θ·B₀·ŵ
        let rho_hat = g.fft_forward(&density(&state.u));
        let c = (2.0 * std::f64::consts::PI).sqrt();
        for i in 0..g.n {
            let want = rho_hat.values[i] * (theta * c * kset.b0[i]);
            assert!((dressed.alpha.values[i] - state.alpha.values[i] - want).norm() < 1e-13);
        }
    }

    #[test]
    fn dressing_ode_matches_closed_form() {
        let (_, kset, state) = small_scenario(31);
        let theta = 1.0;
        let closed = dressing_flow_closed(&kset, &state, theta).unwrap();
        let ode = dressing_flow_ode(&kset, &state, theta, 1e-3).unwrap();
        let d = closed.distance(&ode);
        assert!(d <= 1e-9, "ODE vs closed form: {d:.3e}");

        // group law D[θ1]∘D[θ2] = D[θ1+θ2] through the ODE path
        let s1 = dressing_flow_ode(&kset, &state, 0.4, 1e-3).unwrap();
        let s12 = dressing_flow_ode(&kset, &s1, 0.3, 1e-3).unwrap();
        let direct = dressing_flow_ode(&kset, &state, 0.7, 1e-3).unwrap();
        assert!(s12.distance(&direct) <= 1e-9);

        // τ is invariant along the dressing flow
        let tau0 = kset.tau(&state.u, &state.alpha).unwrap();
        let tau1 = kset.tau(&closed.u, &closed.alpha).unwrap();
        let mut dmax: f64 = 0.0;
        for i in 0..tau0.values.len() {
            dmax = dmax.max((tau0.values[i].re - tau1.values[i].re).abs());
        }
        assert!(dmax <= 1e-10, "τ drifted: {dmax:.3e}");
    }

    #[test]
    fn commuting_diagram() {
        let (_, kset, state) = small_scenario(41);
        assert_eq!(
            commuting_diagram_defect(&kset, &state, 0.0, 1e-3).unwrap(),
            0.0
        );
        let d1 = commuting_diagram_defect(&kset, &state, 0.2, 4e-3).unwrap();
        let d2 = commuting_diagram_defect(&kset, &state, 0.2, 2e-3).unwrap();
        assert!(
            d1 / d2 > 8.0 || d2 < 1e-10,
            "commuting defect not 4th order: {d1:.3e} vs {d2:.3e}"
        );
        assert!(d2 < 1e-6);
    }

    #[test]
    fn nan_guard_aborts() {
        let (_, kset, mut state) = small_scenario(5);
        state.u.values[0] = C::new(f64::NAN, 0.0);
        let err = integrate(&kset, state, &FlowSpec::new(0.0, 1e-2, 0.1).unwrap());
        assert!(err.is_err());
    }

    #[test]
    fn random_state_normalized() {
        let g = Grid::new(1, 10.0, 64).unwrap();
        let s: MeanFieldState<f64> = crate::random::smooth_random_state(&g, 7, 2.0, 0.4);
        assert!((s.u.norm() - 1.0).abs() < 1e-12);
        assert!(s.alpha.values[0].norm() == 0.0, "Nyquist must stay zero");
    }
}
