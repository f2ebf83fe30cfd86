//! Periodic-box discretization and discrete Fourier transforms with the
//! continuum normalization `û(k) = (2π)^{-d/2} ∫ dx e^{-ikx} u(x)`, so that
//! analytic kernel formulas transcribe directly.
//!
//! Spatial nodes are `x_j = -L/2 + j·dx`; momentum nodes are stored in
//! shifted ascending order `k_j = dk·(j - M/2)`, so index 0 per axis is the
//! Nyquist frequency.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

/// Uniform periodic grid in `d` dimensions with `M` points per axis.
pub struct Grid<S: Scalar> {
    pub d: usize,
    pub l: S,
    pub m: usize,
    pub dx: S,
    pub dk: S,
    /// Total number of nodes, `M^d`.
    pub n: usize,
    x1: Vec<S>,
    k1: Vec<S>,
    fft_fwd: Arc<dyn Fft<S>>,
    fft_inv: Arc<dyn Fft<S>>,
}

impl<S: Scalar> std::fmt::Debug for Grid<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Grid(d={}, L={}, M={})", self.d, self.l, self.m)
    }
}

impl<S: Scalar> Grid<S> {
    /// Build a grid; `m` must be even and at least 4, `l` positive.
    pub fn new(d: usize, l: S, m: usize) -> Result<Arc<Self>> {
        if !(1..=3).contains(&d) {
            return Err(CoreError::InvalidParameter(format!(
                "dimension must be 1, 2 or 3, got {d}"
            )));
        }
        if l <= S::zero() {
            return Err(CoreError::InvalidParameter("L must be positive".into()));
        }
        if m < 4 || m % 2 != 0 {
            return Err(CoreError::InvalidParameter(format!(
                "M must be even and >= 4, got {m}"
            )));
        }
        let dx = l / S::of_usize(m);
        let dk = S::tau() / l;
        let half = m / 2;
        let x1 = (0..m)
            .map(|j| -l / S::of(2.0) + S::of_usize(j) * dx)
            .collect();
        let k1 = (0..m)
            .map(|j| dk * (S::of_usize(j) - S::of_usize(half)))
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            d,
            l,
            m,
            dx,
            dk,
            n: m.pow(d as u32),
            x1,
            k1,
            fft_fwd: planner.plan_fft_forward(m),
            fft_inv: planner.plan_fft_inverse(m),
        }))
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.d == other.d && self.m == other.m && self.l == other.l
    }

    /// Spatial nodes along one axis.
    pub fn x_nodes(&self) -> &[S] {
        &self.x1
    }

    /// Momentum nodes along one axis, shifted ascending; index 0 is Nyquist.
    pub fn k_nodes(&self) -> &[S] {
        &self.k1
    }

    pub fn dx_pow_d(&self) -> S {
        num_traits::Float::powi(self.dx, self.d as i32)
    }

    pub fn dk_pow_d(&self) -> S {
        num_traits::Float::powi(self.dk, self.d as i32)
    }

    /// Box volume `L^d`.
    pub fn volume(&self) -> S {
        num_traits::Float::powi(self.l, self.d as i32)
    }

    /// Decompose a flat row-major index into per-axis indices.
    pub fn unflatten(&self, flat: usize, idx: &mut [usize]) {
        let mut rem = flat;
        for a in (0..self.d).rev() {
            idx[a] = rem % self.m;
            rem /= self.m;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.m + i)
    }

    /// Momentum vector at a flat node index (shifted ascending per axis).
    pub fn k_vec(&self, flat: usize, out: &mut [S]) {
        let mut rem = flat;
        for a in (0..self.d).rev() {
            out[a] = self.k1[rem % self.m];
            rem /= self.m;
        }
    }

    /// Spatial position at a flat node index.
    pub fn x_vec(&self, flat: usize, out: &mut [S]) {
        let mut rem = flat;
        for a in (0..self.d).rev() {
            out[a] = self.x1[rem % self.m];
            rem /= self.m;
        }
    }

    /// `|k|^2` at a flat momentum index.
    pub fn k_sq(&self, flat: usize) -> S {
        let mut rem = flat;
        let mut acc = S::zero();
        for _ in 0..self.d {
            let k = self.k1[rem % self.m];
            acc += k * k;
            rem /= self.m;
        }
        acc
    }

    /// True if any axis index sits on the Nyquist frequency.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        let mut rem = flat;
        for _ in 0..self.d {
            if rem % self.m == 0 {
                return true;
            }
            rem /= self.m;
        }
        false
    }

    /// Flat index of the momentum node `-k`, defined for non-Nyquist nodes.
    pub fn negate_k(&self, flat: usize) -> usize {
        let mut idx = [0usize; 3];
        self.unflatten(flat, &mut idx[..self.d]);
        let mut out = [0usize; 3];
        for a in 0..self.d {
            // shifted index j <-> frequency j - m/2; negation maps j to m - j
            debug_assert!(idx[a] != 0, "negation undefined at Nyquist");
            out[a] = self.m - idx[a];
        }
        self.flatten(&out[..self.d])
    }

    /// Wrap an integer frequency sum back into the grid Brillouin zone and
    /// return the flat index. Inputs are per-axis shifted indices.
    pub fn wrap_k_indices(&self, idx: &[isize]) -> usize {
        let m = self.m as isize;
        let mut flat = 0usize;
        for &i in idx {
            let w = i.rem_euclid(m) as usize;
            flat = flat * self.m + w;
        }
        flat
    }

    /// Zero-filled spatial field on this grid.
    pub fn zeros_spatial(self: &Arc<Self>) -> SpatialField<S> {
        SpatialField {
            grid: self.clone(),
            values: vec![Complex::new(S::zero(), S::zero()); self.n],
        }
    }

    /// Zero-filled momentum field on this grid.
    pub fn zeros_momentum(self: &Arc<Self>) -> MomentumField<S> {
        MomentumField {
            grid: self.clone(),
            values: vec![Complex::new(S::zero(), S::zero()); self.n],
        }
    }

    pub fn spatial_from_fn(self: &Arc<Self>, f: impl Fn(&[S]) -> Complex<S>) -> SpatialField<S> {
        let mut out = self.zeros_spatial();
        let mut x = [S::zero(); 3];
        for i in 0..self.n {
            self.x_vec(i, &mut x[..self.d]);
            out.values[i] = f(&x[..self.d]);
        }
        out
    }

    pub fn momentum_from_fn(self: &Arc<Self>, f: impl Fn(&[S]) -> Complex<S>) -> MomentumField<S> {
        let mut out = self.zeros_momentum();
        let mut k = [S::zero(); 3];
        for i in 0..self.n {
            self.k_vec(i, &mut k[..self.d]);
            out.values[i] = f(&k[..self.d]);
        }
        out
    }

    /// 1D FFT along every axis, in place over the flat buffer.
    fn fft_axes(&self, data: &mut [Complex<S>], forward: bool) {
        let fft = if forward { &self.fft_fwd } else { &self.fft_inv };
        let m = self.m;
        let mut lane = vec![Complex::new(S::zero(), S::zero()); m];
        let mut scratch = vec![Complex::new(S::zero(), S::zero()); fft.get_inplace_scratch_len()];
        // axis a has stride m^(d-1-a)
        for a in 0..self.d {
            let stride = self.m.pow((self.d - 1 - a) as u32);
            let block = stride * m;
            let nblocks = self.n / block;
            for b in 0..nblocks {
                for off in 0..stride {
                    let base = b * block + off;
                    for j in 0..m {
                        lane[j] = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut lane, &mut scratch);
                    for j in 0..m {
                        data[base + j * stride] = lane[j];
                    }
                }
            }
        }
    }

    /// Checkerboard sign `(-1)^{sum of natural per-axis indices}`.
    fn checkerboard(&self, data: &mut [Complex<S>]) {
        let mut idx = [0usize; 3];
        for i in 0..self.n {
            self.unflatten(i, &mut idx[..self.d]);
            let s: usize = idx[..self.d].iter().sum();
            if s % 2 == 1 {
                data[i] = -data[i];
            }
        }
    }

    /// Rotate each axis by m/2: natural DFT order <-> shifted ascending.
    /// Self-inverse since m is even.
    fn fftshift(&self, data: &mut [Complex<S>]) {
        let half = self.m / 2;
        let src = data.to_vec();
        let mut idx = [0usize; 3];
        for j in 0..self.n {
            self.unflatten(j, &mut idx[..self.d]);
            for a in 0..self.d {
                idx[a] = (idx[a] + half) % self.m;
            }
            data[j] = src[self.flatten(&idx[..self.d])];
        }
    }

    /// Continuum-normalized forward transform.
    pub fn fft_forward(self: &Arc<Self>, u: &SpatialField<S>) -> MomentumField<S> {
        assert!(self.same_as(&u.grid), "fft_forward: grid mismatch");
        let mut data = u.values.clone();
        self.fft_axes(&mut data, true);
        self.checkerboard(&mut data);
        self.fftshift(&mut data);
        let scale = S::of((2.0 * std::f64::consts::PI).powf(-(self.d as f64) / 2.0))
            * self.dx_pow_d();
        for v in &mut data {
            *v = v.scale(scale);
        }
        MomentumField {
            grid: self.clone(),
            values: data,
        }
    }

    /// Continuum-normalized inverse transform.
    pub fn fft_inverse(self: &Arc<Self>, f: &MomentumField<S>) -> SpatialField<S> {
        assert!(self.same_as(&f.grid), "fft_inverse: grid mismatch");
        let mut data = f.values.clone();
        // undo the shift, apply signs in natural order, then inverse DFT
        self.fftshift(&mut data);
        self.checkerboard(&mut data);
        self.fft_axes(&mut data, false);
        let scale = S::of((2.0 * std::f64::consts::PI).powf(-(self.d as f64) / 2.0))
            * self.dk_pow_d();
        for v in &mut data {
            *v = v.scale(scale);
        }
        SpatialField {
            grid: self.clone(),
            values: data,
        }
    }

    /// Spectral gradient; the Nyquist mode is zeroed so each component stays
    /// a hermitian multiplier.
    pub fn gradient(self: &Arc<Self>, u: &SpatialField<S>) -> Vec<SpatialField<S>> {
        let uhat = self.fft_forward(u);
        let mut out = Vec::with_capacity(self.d);
        let mut k = [S::zero(); 3];
        for a in 0..self.d {
            let mut g = self.zeros_momentum();
            for i in 0..self.n {
                if self.is_nyquist(i) {
                    continue;
                }
                self.k_vec(i, &mut k[..self.d]);
                g.values[i] = uhat.values[i] * Complex::new(S::zero(), k[a]);
            }
            out.push(self.fft_inverse(&g));
        }
        out
    }

    /// Apply the Fourier multiplier `k^2` (the discrete `-Δ`).
    pub fn minus_laplacian(self: &Arc<Self>, u: &SpatialField<S>) -> SpatialField<S> {
        let mut uhat = self.fft_forward(u);
        for i in 0..self.n {
            let k2 = self.k_sq(i);
            uhat.values[i] = uhat.values[i].scale(k2);
        }
        self.fft_inverse(&uhat)
    }
}

/// Complex field sampled at the spatial nodes.
#[derive(Clone)]
pub struct SpatialField<S: Scalar> {
    pub grid: Arc<Grid<S>>,
    pub values: Vec<Complex<S>>,
}

/// Complex field sampled at the momentum nodes (shifted ascending order).
#[derive(Clone)]
pub struct MomentumField<S: Scalar> {
    pub grid: Arc<Grid<S>>,
    pub values: Vec<Complex<S>>,
}

macro_rules! field_common {
    ($t:ident, $measure:ident) => {
        impl<S: Scalar> $t<S> {
            pub fn norm_sq(&self) -> S {
                let w = self.grid.$measure();
                self.values
                    .iter()
                    .fold(S::zero(), |acc, v| acc + v.norm_sqr())
                    * w
            }

            pub fn norm(&self) -> S {
                num_traits::Float::sqrt(self.norm_sq())
            }

            pub fn is_finite(&self) -> bool {
                self.values
                    .iter()
                    .all(|v| num_traits::Float::is_finite(v.re) && num_traits::Float::is_finite(v.im))
            }

            /// `self += c * other`
            pub fn axpy(&mut self, c: Complex<S>, other: &Self) {
                for (a, b) in self.values.iter_mut().zip(&other.values) {
                    *a += c * b;
                }
            }

            pub fn scale(&mut self, c: Complex<S>) {
                for a in self.values.iter_mut() {
                    *a *= c;
                }
            }

            pub fn max_abs(&self) -> S {
                self.values
                    .iter()
                    .fold(S::zero(), |acc, v| num_traits::Float::max(acc, v.norm()))
            }
        }
    };
}

field_common!(SpatialField, dx_pow_d);
field_common!(MomentumField, dk_pow_d);

/// Discrete inner product `dx^d Σ conj(f)·g`, antilinear in the first slot.
pub fn inner_spatial<S: Scalar>(f: &SpatialField<S>, g: &SpatialField<S>) -> Complex<S> {
    assert!(f.grid.same_as(&g.grid), "inner_spatial: grid mismatch");
    let mut acc = Complex::new(S::zero(), S::zero());
    for (a, b) in f.values.iter().zip(&g.values) {
        acc += a.conj() * b;
    }
    acc.scale(f.grid.dx_pow_d())
}

/// Discrete inner product `dk^d Σ conj(f)·g`, antilinear in the first slot.
pub fn inner_momentum<S: Scalar>(f: &MomentumField<S>, g: &MomentumField<S>) -> Complex<S> {
    assert!(f.grid.same_as(&g.grid), "inner_momentum: grid mismatch");
    let mut acc = Complex::new(S::zero(), S::zero());
    for (a, b) in f.values.iter().zip(&g.values) {
        acc += a.conj() * b;
    }
    acc.scale(f.grid.dk_pow_d())
}

/// Sobolev norm `||u||_{H^s} = (dk^d Σ (1+k²)^s |û|²)^{1/2}`.
pub fn sobolev_norm<S: Scalar>(u: &SpatialField<S>, s: S) -> S {
    let uhat = u.grid.fft_forward(u);
    let mut acc = S::zero();
    for i in 0..u.grid.n {
        let w = num_traits::Float::powf(S::one() + u.grid.k_sq(i), s);
        acc += w * uhat.values[i].norm_sqr();
    }
    num_traits::Float::sqrt(acc * u.grid.dk_pow_d())
}

/// Weighted field norm `||α||_{h_s} = (dk^d Σ ω(k)^{2s} |α|²)^{1/2}` with
/// `ω(k) = √(k²+1)`.
pub fn field_norm<S: Scalar>(alpha: &MomentumField<S>, s: S) -> S {
    let mut acc = S::zero();
    for i in 0..alpha.grid.n {
        let om = num_traits::Float::sqrt(alpha.grid.k_sq(i) + S::one());
        let w = num_traits::Float::powf(om, S::of(2.0) * s);
        acc += w * alpha.values[i].norm_sqr();
    }
    num_traits::Float::sqrt(acc * alpha.grid.dk_pow_d())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    fn grid1(m: usize, l: f64) -> Arc<Grid<f64>> {
        Grid::new(1, l, m).unwrap()
    }

    fn random_field(grid: &Arc<Grid<f64>>, seed: u64) -> SpatialField<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = grid.zeros_spatial();
        for v in &mut f.values {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f
    }

    #[test]
    fn grid_parameters() {
        let g = grid1(8, 2.0 * std::f64::consts::PI);
        assert!((g.dk - 1.0).abs() < 1e-15);
        assert_eq!(g.k_nodes()[0], -4.0); // Nyquist
        assert_eq!(g.k_nodes()[7], 3.0);
        assert!(g.is_nyquist(0));
        assert!(!g.is_nyquist(4));

        let g = grid1(256, 16.0 * std::f64::consts::PI);
        assert!((g.dx - std::f64::consts::PI / 16.0).abs() < 1e-15);

        let g3 = Grid::<f64>::new(3, 8.0, 16).unwrap();
        assert_eq!(g3.n, 4096);

        assert!(Grid::<f64>::new(1, 1.0, 255).is_err());
        assert!(Grid::<f64>::new(1, -1.0, 8).is_err());
        assert!(Grid::<f64>::new(1, 1.0, 2).is_err());
    }

    #[test]
    fn plane_wave_peak() {
        // û of e^{ik0 x} is a delta at k0 with value (2π)^{-d/2} L^d
        let l = 2.0 * std::f64::consts::PI;
        let g = grid1(8, l);
        let k0 = 2.0; // on-grid (dk = 1)
        let u = g.spatial_from_fn(|x| Complex64::new(0.0, k0 * x[0]).exp());
        let uhat = g.fft_forward(&u);
        let expect = (2.0 * std::f64::consts::PI).powf(-0.5) * l;
        for i in 0..g.n {
            let k = g.k_nodes()[i];
            let target = if (k - k0).abs() < 1e-12 { expect } else { 0.0 };
            assert!(
                (uhat.values[i].re - target).abs() < 1e-12 && uhat.values[i].im.abs() < 1e-12,
                "peak mismatch at k={k}: {:?}",
                uhat.values[i]
            );
        }
    }

    #[test]
    fn zero_transforms_to_zero() {
        let g = grid1(16, 4.0);
        let z = g.zeros_spatial();
        let zhat = g.fft_forward(&z);
        assert!(zhat.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn roundtrip_and_parseval() {
        for d in 1..=2usize {
            let g = Grid::<f64>::new(d, 5.0, 8).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            let mut u = g.zeros_spatial();
            for v in &mut u.values {
                *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            let uhat = g.fft_forward(&u);
            let back = g.fft_inverse(&uhat);
            let mut err: f64 = 0.0;
            for i in 0..g.n {
                err = err.max((back.values[i] - u.values[i]).norm());
            }
            assert!(err <= 1e-12 * u.norm(), "roundtrip error {err:.3e}");
            assert!(
                (u.norm_sq() - uhat.norm_sq()).abs() <= 1e-12 * u.norm_sq(),
                "Parseval violated"
            );
        }
    }

    #[test]
    fn parseval_inner_product() {
        let g = grid1(32, 7.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut u = g.zeros_spatial();
        let mut v = g.zeros_spatial();
        for w in u.values.iter_mut().chain(v.values.iter_mut()) {
            *w = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let lhs = inner_spatial(&u, &v);
        let rhs = inner_momentum(&g.fft_forward(&u), &g.fft_forward(&v));
        assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm());
        // conjugate symmetry and positivity
        let vu = inner_spatial(&v, &u);
        assert!((lhs - vu.conj()).norm() <= 1e-13 * lhs.norm());
        let uu = inner_spatial(&u, &u);
        assert!(uu.im.abs() <= 1e-14 * uu.re && uu.re >= 0.0);
    }

    #[test]
    fn plane_waves_orthogonal() {
        let g = grid1(16, 2.0 * std::f64::consts::PI);
        let u = g.spatial_from_fn(|x| Complex64::new(0.0, 3.0 * x[0]).exp());
        let v = g.spatial_from_fn(|x| Complex64::new(0.0, -2.0 * x[0]).exp());
        assert!(inner_spatial(&u, &v).norm() < 1e-12 * g.volume());
    }

    #[test]
    fn spectral_derivative_plane_wave() {
        let g = grid1(32, 4.0 * std::f64::consts::PI);
        let k0 = 5.0 * g.dk;
        let u = g.spatial_from_fn(|x| Complex64::new(0.0, k0 * x[0]).exp());
        let grad = g.gradient(&u);
        let mut err: f64 = 0.0;
        for i in 0..g.n {
            let expect = Complex64::new(0.0, k0) * u.values[i];
            err = err.max((grad[0].values[i] - expect).norm());
        }
        assert!(err < 1e-12, "derivative error {err:.3e}");
    }

    #[test]
    fn sobolev_norms() {
        // s = 0 reduces to the L² norm
        let g = grid1(64, 10.0);
        let u = random_field(&g, 11);
        assert!((sobolev_norm(&u, 0.0) - u.norm()).abs() < 1e-12 * u.norm());

        // normalized Gaussian on a large box: ||u||_{H¹}² = 1 + <k²> = 1.5,
        // cross-checked against a centered-difference gradient quadrature
        let g = grid1(256, 16.0 * std::f64::consts::PI);
        let c = std::f64::consts::PI.powf(-0.25);
        let u = g.spatial_from_fn(|x| Complex64::new(c * (-x[0] * x[0] / 2.0).exp(), 0.0));
        assert!((u.norm() - 1.0).abs() < 1e-12);
        let h1 = sobolev_norm(&u, 1.0);
        assert!((h1 * h1 - 1.5).abs() < 1e-9, "H1^2 = {}", h1 * h1);
        // centered-difference oracle for ∫|∇u|², Richardson-extrapolated
        let fd_at = |step: usize| -> f64 {
            let mut acc = 0.0;
            for j in 0..g.m {
                let jp = (j + step) % g.m;
                let jm = (j + g.m - step) % g.m;
                let h = step as f64 * g.dx;
                let du = (u.values[jp] - u.values[jm]) / Complex64::new(2.0 * h, 0.0);
                acc += du.norm_sqr() * g.dx;
            }
            acc
        };
        let fd = (4.0 * fd_at(1) - fd_at(2)) / 3.0;
        assert!(
            (h1 * h1 - 1.0 - fd).abs() < 5e-4,
            "spectral vs FD gradient: {} vs {}",
            h1 * h1 - 1.0,
            fd
        );
    }

    #[test]
    fn field_norm_monotone_in_s() {
        let g = grid1(32, 9.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut alpha = g.zeros_momentum();
        for (i, v) in alpha.values.iter_mut().enumerate() {
            if g.is_nyquist(i) {
                continue;
            }
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let mut prev = field_norm(&alpha, 0.0);
        for s in [0.5, 1.0, 2.0, 2.5] {
            let cur = field_norm(&alpha, s);
            assert!(cur >= prev - 1e-13, "h_s norm not monotone at s={s}");
            prev = cur;
        }
    }

    #[test]
    fn f32_instantiation() {
        let g = Grid::<f32>::new(1, 4.0f32, 16).unwrap();
        let u = g.spatial_from_fn(|x| num_complex::Complex::new((-x[0] * x[0]).exp(), 0.0f32));
        let back = g.fft_inverse(&g.fft_forward(&u));
        let mut err = 0.0f32;
        for i in 0..g.n {
            err = err.max((back.values[i] - u.values[i]).norm());
        }
        assert!(err < 1e-5);
    }
}
