//! Seeded random mean-field states with controlled spectral decay, used by
//! property tests and the scenario runners. States are smooth enough that
//! pointwise products stay resolved on the grid.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::grid::Grid;
use crate::meanfield::MeanFieldState;
use crate::scalar::Scalar;

/// Draw `(u, α)` with Gaussian-decayed random spectra. `k_width` sets the
/// spectral envelope `e^{-k²/(2 k_width²)}`; `alpha_amp` scales the field.
/// `u` is normalized; Nyquist modes are zero.
pub fn smooth_random_state<S: Scalar>(
    grid: &Arc<Grid<S>>,
    seed: u64,
    k_width: f64,
    alpha_amp: f64,
) -> MeanFieldState<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uhat = grid.zeros_momentum();
    let mut alpha = grid.zeros_momentum();
    for i in 0..grid.n {
        if grid.is_nyquist(i) {
            continue;
        }
        let k2 = grid.k_sq(i).as_f64();
        let env = (-k2 / (2.0 * k_width * k_width)).exp();
        let re: f64 = rng.gen_range(-1.0..1.0);
        let im: f64 = rng.gen_range(-1.0..1.0);
        uhat.values[i] = Complex::new(S::of(re * env), S::of(im * env));
        let re: f64 = rng.gen_range(-1.0..1.0);
        let im: f64 = rng.gen_range(-1.0..1.0);
        // extra ω^{-2} decay keeps the h_{5/2} norm moderate
        let om2 = k2 + 1.0;
        alpha.values[i] = Complex::new(
            S::of(alpha_amp * re * env / om2),
            S::of(alpha_amp * im * env / om2),
        );
    }
    let mut u = grid.fft_inverse(&uhat);
    let norm = u.norm();
    u.scale(Complex::new(S::one() / norm, S::zero()));
    MeanFieldState::new(u, alpha)
}
