//! Renormalization constants: radial momentum-space integrals of
//! `1/(ω(r)(r² + ω(r)))` up to a cutoff, their grid-sum counterparts, the
//! mean-field contribution `½⟨u, V_θ*|u|² u⟩`, and least-squares fits of the
//! logarithmic divergence in Λ.

use crate::error::{CoreError, Result};
use crate::grid::SpatialField;
use crate::kernels::{density, expect_real_potential, KernelSet};
use crate::scalar::Scalar;

/// One evaluated constant at `(Λ, θ)`.
#[derive(Clone, Debug)]
pub struct RenormResult {
    pub lambda: f64,
    pub theta: f64,
    /// `(2θ - θ²)⟨G₀^Λ, B₀^Λ⟩`
    pub e_pair: f64,
    /// `½⟨u, V_θ^Λ*|u|² u⟩`
    pub e_mf: f64,
    pub e_total: f64,
    pub quad_err: f64,
}

// 15-point Gauss-Kronrod rule. Abscissae and weights from the standard
// QK15 tables (positive half; the rule is symmetric).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One QK15 panel: returns (integral, error estimate).
fn qk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut result_k = 0.0;
    let mut result_g = 0.0;
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        if x == 0.0 {
            let fc = f(c);
            result_k += wk * fc;
            result_g += WG[3] * fc;
        } else {
            let f1 = f(c - h * x);
            let f2 = f(c + h * x);
            result_k += wk * (f1 + f2);
            if j % 2 == 1 {
                result_g += WG[j / 2] * (f1 + f2);
            }
        }
    }
    let integral = result_k * h;
    let raw = ((result_k - result_g) * h).abs();
    // sharpen the raw Gauss-Kronrod difference as in QUADPACK
    let err = if raw > 0.0 && integral.abs() > 0.0 {
        let scale = (200.0 * raw / integral.abs()).powf(1.5);
        raw * scale.min(1.0)
    } else {
        raw
    };
    (integral, err.max(f64::EPSILON * integral.abs()))
}

/// Adaptive quadrature over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    if !(b >= a) {
        return Err(CoreError::InvalidParameter("bad quadrature range".into()));
    }
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (v0, e0) = qk15(f, a, b);
    let mut intervals = vec![(e0, a, b, v0)];
    let mut total = v0;
    let mut total_err = e0;
    let max_subdiv = 2000;
    for _ in 0..max_subdiv {
        if total_err <= tol {
            return Ok((total, total_err));
        }
        let (imax, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap())
            .unwrap();
        let (err, ia, ib, val) = intervals.swap_remove(imax);
        let mid = 0.5 * (ia + ib);
        if mid <= ia || mid >= ib {
            return Err(CoreError::QuadratureFailure(format!(
                "interval collapsed at [{ia}, {ib}] with error {err:.3e}"
            )));
        }
        let (v1, e1) = qk15(f, ia, mid);
        let (v2, e2) = qk15(f, mid, ib);
        total += v1 + v2 - val;
        total_err += e1 + e2 - err;
        intervals.push((e1, ia, mid, v1));
        intervals.push((e2, mid, ib, v2));
    }
    if total_err <= tol * 10.0 {
        Ok((total, total_err))
    } else {
        Err(CoreError::QuadratureFailure(format!(
            "tolerance {tol:.1e} not reached: error {total_err:.1e} after {max_subdiv} splits"
        )))
    }
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("dimension must be 1, 2 or 3"),
    }
}

/// Radial integrand of `⟨G₀, B₀⟩`: `r^{d-1} / (ω(r)(r² + ω(r)))`.
fn gb_integrand(r: f64, d: usize) -> f64 {
    let om = (r * r + 1.0).sqrt();
    r.powi(d as i32 - 1) / (om * (r * r + om))
}

/// `⟨G₀^Λ, B₀^Λ⟩ = S_{d-1} ∫₀^Λ r^{d-1} dr/(ω(r)(r²+ω(r)))` with its
/// quadrature error estimate.
pub fn gb_pair_integral(lambda: f64, d: usize) -> Result<(f64, f64)> {
    if lambda < 0.0 {
        return Err(CoreError::InvalidParameter("Λ must be >= 0".into()));
    }
    let f = move |r: f64| gb_integrand(r, d);
    let (v, e) = adaptive_quad(&f, 0.0, lambda, 1e-10)?;
    Ok((sphere_area(d) * v, sphere_area(d) * e))
}

/// `(2θ - θ²)⟨G₀^Λ, B₀^Λ⟩` by adaptive radial quadrature.
pub fn pair_constant(lambda: f64, theta: f64, d: usize) -> Result<(f64, f64)> {
    let (v, e) = gb_pair_integral(lambda, d)?;
    let c = 2.0 * theta - theta * theta;
    Ok((c * v, c.abs() * e))
}

/// `E_K = ∫_{|k|≤K} dk/(ω(k)(k²+ω(k)))`; identical integrand to
/// `pair_constant(K, 1, d)`.
pub fn e_k_constant(k: f64, d: usize) -> Result<(f64, f64)> {
    gb_pair_integral(k, d)
}

/// Discrete analogue `(2θ-θ²)·dk^d Σ_{mask} G₀B₀` on a kernel set; the exact
/// constant for grid-level identities.
pub fn pair_constant_discrete<S: Scalar>(kset: &KernelSet<S>, theta: S) -> S {
    let mut acc = S::zero();
    for i in 0..kset.grid.n {
        acc += kset.g0[i] * kset.b0[i];
    }
    (S::of(2.0) * theta - theta * theta) * acc * kset.grid.dk_pow_d()
}

/// `½⟨u, V_θ^Λ*|u|² u⟩` on the grid.
pub fn mf_constant<S: Scalar>(kset: &KernelSet<S>, u: &SpatialField<S>, theta: S) -> Result<S> {
    let rho = density(u);
    let vconv = kset.v_theta_convolve(&rho, theta)?;
    Ok(S::of(0.5) * expect_real_potential(u, &vconv))
}

/// Discrete total `E^Λ_θ = pair + mean-field` used by the Fock-space phase
/// check; all sums share the generator's mode set.
pub fn e_lambda_theta_discrete<S: Scalar>(
    kset: &KernelSet<S>,
    u: &SpatialField<S>,
    theta: S,
) -> Result<S> {
    Ok(pair_constant_discrete(kset, theta) + mf_constant(kset, u, theta)?)
}

/// Least-squares fit `E ≈ slope·ln Λ + intercept`; returns
/// `(slope, intercept, rms residual)`.
pub fn log_divergence_fit(lambdas: &[f64], values: &[f64]) -> Result<(f64, f64, f64)> {
    if lambdas.len() != values.len() || lambdas.len() < 2 {
        return Err(CoreError::InvalidParameter(
            "need at least two (Λ, E) samples".into(),
        ));
    }
    let n = lambdas.len() as f64;
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = values.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(values).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-14 * (n * sxx).abs().max(1.0) {
        return Err(CoreError::InvalidParameter(
            "degenerate design matrix in log fit".into(),
        ));
    }
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy * sxx - sx * sxy) / det;
    let mut res = 0.0;
    for (x, y) in xs.iter().zip(values) {
        let r = y - (slope * x + intercept);
        res += r * r;
    }
    Ok((slope, intercept, (res / n).sqrt()))
}

/// Sweep the pair constant over cutoffs for a fixed θ.
pub fn pair_constant_sweep(lambdas: &[f64], theta: f64, d: usize) -> Result<Vec<RenormResult>> {
    lambdas
        .iter()
        .map(|&l| {
            let (v, e) = pair_constant(l, theta, d)?;
            Ok(RenormResult {
                lambda: l,
                theta,
                e_pair: v,
                e_mf: 0.0,
                e_total: v,
                quad_err: e,
            })
        })
        .collect()
}
