//! Sparse many-body operators on truncated Fock spaces: the cutoff and
//! dressed Hamiltonians, Weyl and dressing transformations, ladder
//! operators and second quantizations of one-body matrices.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::grid::{MomentumField, SpatialField};
use crate::kernels::{Cutoff, KernelSet};
use crate::linalg::hermitian_expm;
use crate::scalar::Scalar;

use super::basis::{FockSpace, FockVector, ParticleSector};

/// Compressed sparse row operator over a Fock basis.
pub struct SparseOp<S: Scalar> {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<Complex<S>>,
}

impl<S: Scalar> SparseOp<S> {
    pub fn from_coo(dim: usize, mut coo: Vec<(u32, u32, Complex<S>)>) -> Self {
        coo.sort_unstable_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(coo.len());
        let mut vals: Vec<Complex<S>> = Vec::with_capacity(coo.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in coo {
            if last == Some((r, c)) {
                let n = vals.len();
                vals[n - 1] += v;
            } else {
                row_ptr[r as usize + 1] += 1;
                cols.push(c);
                vals.push(v);
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn apply(&self, x: &[Complex<S>], y: &mut [Complex<S>]) {
        for v in y.iter_mut() {
            *v = Complex::new(S::zero(), S::zero());
        }
        for r in 0..self.dim {
            let mut acc = Complex::new(S::zero(), S::zero());
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx] * x[self.cols[idx] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn apply_vec(&self, v: &FockVector<S>) -> FockVector<S> {
        let mut out = v.clone();
        self.apply(&v.amp, &mut out.amp);
        out
    }

    pub fn expectation(&self, v: &FockVector<S>) -> Complex<S> {
        let mut y = vec![Complex::new(S::zero(), S::zero()); self.dim];
        self.apply(&v.amp, &mut y);
        let mut acc = Complex::new(S::zero(), S::zero());
        for (a, b) in v.amp.iter().zip(&y) {
            acc += a.conj() * b;
        }
        acc
    }

    /// Relative Frobenius hermiticity defect.
    pub fn hermiticity_defect(&self) -> S {
        let mut entries = std::collections::HashMap::new();
        for r in 0..self.dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                entries.insert((r as u32, self.cols[idx]), self.vals[idx]);
            }
        }
        let mut num = S::zero();
        let mut den = S::zero();
        for (&(r, c), &v) in &entries {
            den += v.norm_sqr();
            let vt = entries
                .get(&(c, r))
                .copied()
                .unwrap_or(Complex::new(S::zero(), S::zero()));
            num += (v - vt.conj()).norm_sqr();
        }
        if den == S::zero() {
            return S::zero();
        }
        num_traits::Float::sqrt(num / den)
    }

    pub fn scaled(&self, c: Complex<S>) -> Self {
        Self {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals: self.vals.iter().map(|v| v * c).collect(),
        }
    }

    /// Rough upper estimate of the spectral norm (for step-size choices).
    pub fn norm_estimate(&self) -> S {
        let mut worst = S::zero();
        for r in 0..self.dim {
            let mut acc = S::zero();
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[idx].norm();
            }
            worst = num_traits::Float::max(worst, acc);
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<Complex<S>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[idx] as usize)] = self.vals[idx];
            }
        }
        m
    }
}

/// Hamiltonian plus bookkeeping about transitions dropped at the mode-set
/// boundary.
pub struct HamiltonianReport<S: Scalar> {
    pub op: SparseOp<S>,
    /// Sum of |coefficient|² over dropped hopping transitions.
    pub dropped_weight: S,
}

struct Builder<'a, S: Scalar> {
    sp: &'a FockSpace<S>,
    coo: Vec<(u32, u32, Complex<S>)>,
    dropped: S,
}

impl<'a, S: Scalar> Builder<'a, S> {
    fn new(sp: &'a FockSpace<S>) -> Self {
        Self {
            sp,
            coo: Vec::new(),
            dropped: S::zero(),
        }
    }

    /// Particle-mode position of the momentum `freq(p) + sign·freq(k)`.
    fn hop_target(&self, p_mode: usize, k_mode_flat: usize, sign: isize) -> Option<usize> {
        let grid = &self.sp.grid;
        let half = grid.m as isize / 2;
        let mut pi = [0usize; 3];
        let mut ki = [0usize; 3];
        grid.unflatten(self.sp.pmodes[p_mode], &mut pi[..grid.d]);
        grid.unflatten(k_mode_flat, &mut ki[..grid.d]);
        let mut flat = 0usize;
        for a in 0..grid.d {
            let f = (pi[a] as isize - half) + sign * (ki[a] as isize - half);
            let j = f + half;
            if j < 1 || j >= grid.m as isize {
                return None;
            }
            flat = flat * grid.m + j as usize;
        }
        self.sp.pmodes.iter().position(|&m| m == flat)
    }

    /// Add `coeff · b†_{p+sign·k} b_p A^{dag_a}_k` over the whole basis;
    /// records dropped weight when the hop leaves the particle modes.
    fn add_hop_ladder(
        &mut self,
        p: usize,
        k_mode: usize,
        sign: isize,
        raise_field: bool,
        coeff: Complex<S>,
    ) {
        if coeff.norm_sqr() == S::zero() {
            return;
        }
        let target = match self.hop_target(p, self.sp.fmodes[k_mode], sign) {
            Some(t) => t,
            None => {
                self.dropped += coeff.norm_sqr();
                return;
            }
        };
        let sp = self.sp;
        for (pi, occ) in sp.pstates.iter().enumerate() {
            if occ[p] == 0 {
                continue;
            }
            let mut newocc = occ.clone();
            newocc[p] -= 1;
            newocc[target] += 1;
            let pj = match sp.pstate_index(&newocc) {
                Some(j) => j,
                None => continue, // leaves the truncated particle sector
            };
            let amp_p = num_traits::Float::sqrt(
                S::of_usize(occ[p] as usize) * S::of_usize(newocc[target] as usize),
            );
            for f in 0..sp.fdim {
                let nk = sp.focc(f, k_mode);
                let (fj, amp_f) = if raise_field {
                    match sp.fshift(f, k_mode, true) {
                        Some(fj) => (fj, num_traits::Float::sqrt(S::of_usize(nk + 1))),
                        None => continue,
                    }
                } else {
                    match sp.fshift(f, k_mode, false) {
                        Some(fj) => (fj, num_traits::Float::sqrt(S::of_usize(nk))),
                        None => continue,
                    }
                };
                self.coo.push((
                    sp.flat(pj, fj) as u32,
                    sp.flat(pi, f) as u32,
                    coeff.scale(amp_p * amp_f),
                ));
            }
        }
    }

    fn add_diag(&mut self, f: impl Fn(&[u8], usize) -> S) {
        let sp = self.sp;
        for (pi, occ) in sp.pstates.iter().enumerate() {
            for fi in 0..sp.fdim {
                let v = f(occ, fi);
                if v != S::zero() {
                    let idx = sp.flat(pi, fi) as u32;
                    self.coo.push((idx, idx, Complex::new(v, S::zero())));
                }
            }
        }
    }

    fn finish(self) -> HamiltonianReport<S> {
        HamiltonianReport {
            op: SparseOp::from_coo(self.sp.dim, self.coo),
            dropped_weight: self.dropped,
        }
    }
}

fn free_diagonal<S: Scalar>(b: &mut Builder<S>) {
    let sp = b.sp;
    let peners: Vec<S> = sp.pmodes.iter().map(|&i| sp.grid.k_sq(i)).collect();
    let feners: Vec<S> = sp
        .fmodes
        .iter()
        .map(|&i| num_traits::Float::sqrt(sp.grid.k_sq(i) + S::one()))
        .collect();
    let nbase = sp.n_max + 1;
    for (pi, occ) in sp.pstates.iter().enumerate() {
        let mut e_kin = S::zero();
        for (i, &n) in occ.iter().enumerate() {
            e_kin += peners[i] * S::of_usize(n as usize);
        }
        for f in 0..sp.fdim {
            let mut e = e_kin;
            let mut rem = f;
            for fe in &feners {
                e += *fe * S::of_usize(rem % nbase);
                rem /= nbase;
            }
            if e != S::zero() {
                let idx = sp.flat(pi, f) as u32;
                b.coo.push((idx, idx, Complex::new(e, S::zero())));
            }
        }
    }
}

/// Masked form-factor values over the field modes of a space.
fn masked_kernels<S: Scalar>(
    sp: &FockSpace<S>,
    kset: &KernelSet<S>,
    cut: Cutoff<S>,
) -> (Vec<S>, Vec<S>) {
    sp.fmodes
        .iter()
        .map(|&i| {
            let kabs = num_traits::Float::sqrt(sp.grid.k_sq(i));
            if kset.mask[i] != S::zero() && cut.accepts(kabs) {
                (kset.g0[i], kset.b0[i])
            } else {
                (S::zero(), S::zero())
            }
        })
        .unzip()
}

/// Cutoff Hamiltonian: kinetic + field energy + the linear coupling with
/// the discrete form factor `√(dk^d)·ω^{-1/2}(k)` per retained field mode.
pub fn build_nelson_hamiltonian<S: Scalar>(
    sp: &FockSpace<S>,
    kset: &KernelSet<S>,
    n_particles: usize,
    cut: Cutoff<S>,
) -> Result<HamiltonianReport<S>> {
    if !sp.grid.same_as(&kset.grid) {
        return Err(CoreError::GridMismatch("fock space vs kernel set".into()));
    }
    let mut b = Builder::new(sp);
    free_diagonal(&mut b);
    let (g0m, _) = masked_kernels(sp, kset, cut);
    let sdk = num_traits::Float::sqrt(sp.grid.dk_pow_d());
    let coupling = S::one() / num_traits::Float::sqrt(S::of_usize(n_particles));
    // N^{-1/2} Σ_{p,k} √(dk^d) G₀(k) b†_{p-k} b_p A†_k, then + h.c.
    let mark = b.coo.len();
    for k in 0..sp.m_a() {
        if g0m[k] == S::zero() {
            continue;
        }
        for p in 0..sp.m_b() {
            b.add_hop_ladder(
                p,
                k,
                -1,
                true,
                Complex::new(coupling * sdk * g0m[k], S::zero()),
            );
        }
    }
    let mut adj: Vec<(u32, u32, Complex<S>)> = b.coo[mark..]
        .iter()
        .map(|&(r, c, v)| (c, r, v.conj()))
        .collect();
    b.coo.append(&mut adj);
    Ok(b.finish())
}

/// Dressed Hamiltonian: free part, the gradient-coupled interaction, the
/// effective pair potential and the field-quadratic terms, all at cutoff.
pub fn build_dressed_hamiltonian<S: Scalar>(
    sp: &FockSpace<S>,
    kset: &KernelSet<S>,
    n_particles: usize,
    cut: Cutoff<S>,
) -> Result<HamiltonianReport<S>> {
    if !sp.grid.same_as(&kset.grid) {
        return Err(CoreError::GridMismatch("fock space vs kernel set".into()));
    }
    let grid = &sp.grid;
    let mut b = Builder::new(sp);
    free_diagonal(&mut b);
    let (_g0m, b0m) = masked_kernels(sp, kset, cut);
    let sdk = num_traits::Float::sqrt(grid.dk_pow_d());
    let dkd = grid.dk_pow_d();
    let n_s = S::of_usize(n_particles);
    let inv_sqrt_n = S::one() / num_traits::Float::sqrt(n_s);
    let inv_n = S::one() / n_s;

    let kvec = |flat: usize, out: &mut [S]| grid.k_vec(flat, out);
    let mut kv = [S::zero(); 3];
    let mut pv = [S::zero(); 3];

    // gradient coupling: 2 N^{-1/2} √(dk^d) B₀(k) (k·p) b†_{p-k} b_p A†_k + h.c.
    let mark = b.coo.len();
    for k in 0..sp.m_a() {
        if b0m[k] == S::zero() {
            continue;
        }
        kvec(sp.fmodes[k], &mut kv[..grid.d]);
        for p in 0..sp.m_b() {
            kvec(sp.pmodes[p], &mut pv[..grid.d]);
            let mut dot = S::zero();
            for a in 0..grid.d {
                dot += kv[a] * pv[a];
            }
            b.add_hop_ladder(
                p,
                k,
                -1,
                true,
                Complex::new(S::of(2.0) * inv_sqrt_n * sdk * b0m[k] * dot, S::zero()),
            );
        }
    }
    let mut adj: Vec<(u32, u32, Complex<S>)> = b.coo[mark..]
        .iter()
        .map(|&(r, c, v)| (c, r, v.conj()))
        .collect();
    b.coo.append(&mut adj);

    // pair potential (1/2N) Σ_q w_q (σ_q† σ_q - N̂), w_q = dk^d v̂(q) over
    // the masked momenta; σ_q hops every particle by -q
    {
        let half = grid.m as isize / 2;
        for &qf in sp.fmodes.iter() {
            let kabs = num_traits::Float::sqrt(grid.k_sq(qf));
            if kset.mask[qf] == S::zero() || !cut.accepts(kabs) {
                continue;
            }
            let w = {
                let g = kset.g0[qf];
                let bb = kset.b0[qf];
                let om = kset.omega[qf];
                // dressed pair kernel: -4 G₀B₀ + 2 ω B₀²
                dkd * (-S::of(4.0) * g * bb + S::of(2.0) * om * bb * bb)
            };
            if w == S::zero() {
                continue;
            }
            // hop table: particle mode -> mode shifted by -q, if retained
            let mut qidx = [0usize; 3];
            grid.unflatten(qf, &mut qidx[..grid.d]);
            let hop: Vec<Option<usize>> = (0..sp.m_b())
                .map(|p| {
                    let mut pi = [0usize; 3];
                    grid.unflatten(sp.pmodes[p], &mut pi[..grid.d]);
                    let mut flat = 0usize;
                    for a in 0..grid.d {
                        let f = (pi[a] as isize - half) - (qidx[a] as isize - half);
                        let j = f + half;
                        if j < 1 || j >= grid.m as isize {
                            return None;
                        }
                        flat = flat * grid.m + j as usize;
                    }
                    sp.pmodes.iter().position(|&m| m == flat)
                })
                .collect();
            let w_half = S::of(0.5) * inv_n * w;
            for (pi, occ) in sp.pstates.iter().enumerate() {
                // σ_q |occ⟩ = Σ_p √(n_p (n_{p'}+1)) |occ'⟩
                let mut images: Vec<(usize, S)> = Vec::new();
                for p in 0..sp.m_b() {
                    if occ[p] == 0 {
                        continue;
                    }
                    let Some(t) = hop[p] else {
                        b.dropped += w_half * w_half;
                        continue;
                    };
                    let mut newocc = occ.clone();
                    newocc[p] -= 1;
                    newocc[t] += 1;
                    if let Some(pj) = sp.pstate_index(&newocc) {
                        let amp = num_traits::Float::sqrt(
                            S::of_usize(occ[p] as usize) * S::of_usize(newocc[t] as usize),
                        );
                        images.push((pj, amp));
                    }
                }
                // σ_q† σ_q: expand through the intermediate states
                for &(mid, amp1) in &images {
                    let moc = &sp.pstates[mid];
                    for p2 in 0..sp.m_b() {
                        if moc[p2] == 0 {
                            continue;
                        }
                        // σ_q† hops by +q
                        let src_mode = hop
                            .iter()
                            .position(|h| *h == Some(p2));
                        let Some(back) = src_mode else { continue };
                        let mut newocc = moc.clone();
                        newocc[p2] -= 1;
                        newocc[back] += 1;
                        if let Some(pj) = sp.pstate_index(&newocc) {
                            let amp2 = num_traits::Float::sqrt(
                                S::of_usize(moc[p2] as usize)
                                    * S::of_usize(newocc[back] as usize),
                            );
                            for f in 0..sp.fdim {
                                b.coo.push((
                                    sp.flat(pj, f) as u32,
                                    sp.flat(pi, f) as u32,
                                    Complex::new(w_half * amp1 * amp2, S::zero()),
                                ));
                            }
                        }
                    }
                }
                // -N̂ part
                let ntot: usize = occ.iter().map(|&x| x as usize).sum();
                for f in 0..sp.fdim {
                    let idx = sp.flat(pi, f) as u32;
                    b.coo
                        .push((idx, idx, Complex::new(-w_half * S::of_usize(ntot), S::zero())));
                }
            }
        }
    }

    // field-quadratic terms
    // N^{-1} Σ_j [a(kB)² + 2a†(kB)a(kB) + a†(kB)²]:
    //   a-a:  Σ_{k,l} dk^d (k·l)B₀B₀ · hop(p→p+k+l) A_k A_l
    //   a†-a: 2Σ_{k,l} dk^d (k·l)B₀B₀ · hop(p→p-(k-l)) A†_k A_l
    {
        let mark = b.coo.len();
        // a-a half (its dagger gives a†a†)
        for k in 0..sp.m_a() {
            if b0m[k] == S::zero() {
                continue;
            }
            kvec(sp.fmodes[k], &mut kv[..grid.d]);
            for l in 0..sp.m_a() {
                if b0m[l] == S::zero() {
                    continue;
                }
                let mut lv = [S::zero(); 3];
                kvec(sp.fmodes[l], &mut lv[..grid.d]);
                let mut dot = S::zero();
                for a in 0..grid.d {
                    dot += kv[a] * lv[a];
                }
                let coeff = inv_n * dkd * dot * b0m[k] * b0m[l];
                if coeff == S::zero() {
                    continue;
                }
                add_double_ladder(&mut b, k, l, false, false, coeff)?;
            }
        }
        let mut adj: Vec<(u32, u32, Complex<S>)> = b.coo[mark..]
            .iter()
            .map(|&(r, c, v)| (c, r, v.conj()))
            .collect();
        b.coo.append(&mut adj);
        // a† a part (hermitian as a whole)
        for k in 0..sp.m_a() {
            if b0m[k] == S::zero() {
                continue;
            }
            kvec(sp.fmodes[k], &mut kv[..grid.d]);
            for l in 0..sp.m_a() {
                if b0m[l] == S::zero() {
                    continue;
                }
                let mut lv = [S::zero(); 3];
                kvec(sp.fmodes[l], &mut lv[..grid.d]);
                let mut dot = S::zero();
                for a in 0..grid.d {
                    dot += kv[a] * lv[a];
                }
                let coeff = S::of(2.0) * inv_n * dkd * dot * b0m[k] * b0m[l];
                if coeff == S::zero() {
                    continue;
                }
                add_double_ladder(&mut b, k, l, true, false, coeff)?;
            }
        }
    }

    Ok(b.finish())
}

/// `coeff · σ-hop ⊗ A^{†?}_k A^{†?}_l` with the particle hop fixed by
/// momentum conservation of the term.
fn add_double_ladder<S: Scalar>(
    b: &mut Builder<S>,
    k: usize,
    l: usize,
    k_raise: bool,
    l_raise: bool,
    coeff: S,
) -> Result<()> {
    let sp = b.sp;
    let grid = &sp.grid;
    let half = grid.m as isize / 2;
    // momentum transferred to the particles: +k for each annihilated quantum,
    // -k for each created one
    let mut ki = [0usize; 3];
    let mut li = [0usize; 3];
    grid.unflatten(sp.fmodes[k], &mut ki[..grid.d]);
    grid.unflatten(sp.fmodes[l], &mut li[..grid.d]);
    let sgn_k: isize = if k_raise { -1 } else { 1 };
    let sgn_l: isize = if l_raise { -1 } else { 1 };
    for (pi, occ) in sp.pstates.iter().enumerate() {
        for p in 0..sp.m_b() {
            if occ[p] == 0 {
                continue;
            }
            let mut pidx = [0usize; 3];
            grid.unflatten(sp.pmodes[p], &mut pidx[..grid.d]);
            let mut flat = 0usize;
            let mut ok = true;
            for a in 0..grid.d {
                let f = (pidx[a] as isize - half)
                    + sgn_k * (ki[a] as isize - half)
                    + sgn_l * (li[a] as isize - half);
                let j = f + half;
                if j < 1 || j >= grid.m as isize {
                    ok = false;
                    break;
                }
                flat = flat * grid.m + j as usize;
            }
            if !ok {
                b.dropped += coeff * coeff;
                continue;
            }
            let Some(t) = sp.pmodes.iter().position(|&m| m == flat) else {
                b.dropped += coeff * coeff;
                continue;
            };
            let mut newocc = occ.clone();
            newocc[p] -= 1;
            newocc[t] += 1;
            let Some(pj) = sp.pstate_index(&newocc) else {
                continue;
            };
            let amp_p = num_traits::Float::sqrt(
                S::of_usize(occ[p] as usize) * S::of_usize(newocc[t] as usize),
            );
            for f in 0..sp.fdim {
                // first ladder on l, then on k
                let nl = sp.focc(f, l);
                let (f1, a1) = if l_raise {
                    match sp.fshift(f, l, true) {
                        Some(fj) => (fj, num_traits::Float::sqrt(S::of_usize(nl + 1))),
                        None => continue,
                    }
                } else {
                    match sp.fshift(f, l, false) {
                        Some(fj) => (fj, num_traits::Float::sqrt(S::of_usize(nl))),
                        None => continue,
                    }
                };
                let nk = sp.focc(f1, k);
                let (f2, a2) = if k_raise {
                    match sp.fshift(f1, k, true) {
                        Some(fj) => (fj, num_traits::Float::sqrt(S::of_usize(nk + 1))),
                        None => continue,
                    }
                } else {
                    match sp.fshift(f1, k, false) {
                        Some(fj) => (fj, num_traits::Float::sqrt(S::of_usize(nk))),
                        None => continue,
                    }
                };
                b.coo.push((
                    sp.flat(pj, f2) as u32,
                    sp.flat(pi, f) as u32,
                    Complex::new(coeff * amp_p * a1 * a2, S::zero()),
                ));
            }
        }
    }
    Ok(())
}

/// Second quantization `dΓ_b(T)` of a one-body matrix over the particle
/// modes (`T[(j,i)]` multiplies `b†_j b_i`).
pub fn dgamma_b<S: Scalar>(sp: &FockSpace<S>, t: &DMatrix<Complex<S>>) -> SparseOp<S> {
    let m = sp.m_b();
    assert_eq!(t.nrows(), m);
    let mut coo = Vec::new();
    for (pi, occ) in sp.pstates.iter().enumerate() {
        for i in 0..m {
            if occ[i] == 0 {
                continue;
            }
            for j in 0..m {
                let tv = t[(j, i)];
                if tv.norm_sqr() == S::zero() {
                    continue;
                }
                if i == j {
                    let amp = S::of_usize(occ[i] as usize);
                    for f in 0..sp.fdim {
                        let idx = sp.flat(pi, f) as u32;
                        coo.push((idx, idx, tv.scale(amp)));
                    }
                } else {
                    let mut newocc = occ.clone();
                    newocc[i] -= 1;
                    newocc[j] += 1;
                    if let Some(pj) = sp.pstate_index(&newocc) {
                        let amp = num_traits::Float::sqrt(
                            S::of_usize(occ[i] as usize) * S::of_usize(newocc[j] as usize),
                        );
                        for f in 0..sp.fdim {
                            coo.push((sp.flat(pj, f) as u32, sp.flat(pi, f) as u32, tv.scale(amp)));
                        }
                    }
                }
            }
        }
    }
    SparseOp::from_coo(sp.dim, coo)
}

/// Total particle number.
pub fn number_b<S: Scalar>(sp: &FockSpace<S>) -> SparseOp<S> {
    let mut coo = Vec::new();
    for (pi, occ) in sp.pstates.iter().enumerate() {
        let n: usize = occ.iter().map(|&x| x as usize).sum();
        for f in 0..sp.fdim {
            let idx = sp.flat(pi, f) as u32;
            coo.push((idx, idx, Complex::new(S::of_usize(n), S::zero())));
        }
    }
    SparseOp::from_coo(sp.dim, coo)
}

/// Total field quantum number.
pub fn number_a<S: Scalar>(sp: &FockSpace<S>) -> SparseOp<S> {
    let mut coo = Vec::new();
    let nbase = sp.n_max + 1;
    for pi in 0..sp.pdim {
        for f in 0..sp.fdim {
            let mut n = 0usize;
            let mut rem = f;
            for _ in 0..sp.m_a() {
                n += rem % nbase;
                rem /= nbase;
            }
            let idx = sp.flat(pi, f) as u32;
            coo.push((idx, idx, Complex::new(S::of_usize(n), S::zero())));
        }
    }
    SparseOp::from_coo(sp.dim, coo)
}

/// Field annihilator `A_m` for one retained mode.
pub fn field_annihilator<S: Scalar>(sp: &FockSpace<S>, m: usize) -> SparseOp<S> {
    let mut coo = Vec::new();
    for pi in 0..sp.pdim {
        for f in 0..sp.fdim {
            if let Some(fj) = sp.fshift(f, m, false) {
                let amp = num_traits::Float::sqrt(S::of_usize(sp.focc(f, m)));
                coo.push((
                    sp.flat(pi, fj) as u32,
                    sp.flat(pi, f) as u32,
                    Complex::new(amp, S::zero()),
                ));
            }
        }
    }
    SparseOp::from_coo(sp.dim, coo)
}

/// `b†(u)` on a capped space, mapping total-occupation sectors upward.
pub fn particle_creator<S: Scalar>(
    sp: &FockSpace<S>,
    coeffs: &[Complex<S>],
) -> Result<SparseOp<S>> {
    let ParticleSector::Capped(_) = sp.sector else {
        return Err(CoreError::InvalidParameter(
            "particle creation needs a capped space".into(),
        ));
    };
    let mut coo = Vec::new();
    for (pi, occ) in sp.pstates.iter().enumerate() {
        for (i, &c) in coeffs.iter().enumerate() {
            if c.norm_sqr() == S::zero() {
                continue;
            }
            let mut newocc = occ.clone();
            newocc[i] += 1;
            if let Some(pj) = sp.pstate_index(&newocc) {
                let amp = num_traits::Float::sqrt(S::of_usize(newocc[i] as usize));
                for f in 0..sp.fdim {
                    coo.push((sp.flat(pj, f) as u32, sp.flat(pi, f) as u32, c.scale(amp)));
                }
            }
        }
    }
    Ok(SparseOp::from_coo(sp.dim, coo))
}

/// Apply the Weyl operator `W(g) = exp(Σ g_m A†_m - h.c.)` to a vector; the
/// exponential of the truncated generator is exactly unitary.
pub fn weyl_apply<S: Scalar>(v: &FockVector<S>, g: &[Complex<S>]) -> FockVector<S> {
    let sp = &v.space;
    let fdim = sp.fdim;
    // dense skew generator on the field factor
    let mut kmat = DMatrix::<Complex<S>>::zeros(fdim, fdim);
    for f in 0..fdim {
        for (m, gm) in g.iter().enumerate() {
            if let Some(fj) = sp.fshift(f, m, true) {
                let amp = num_traits::Float::sqrt(S::of_usize(sp.focc(f, m) + 1));
                kmat[(fj, f)] += gm.scale(amp);
                kmat[(f, fj)] -= gm.conj().scale(amp);
            }
        }
    }
    // e^K with K skew-hermitian: H = iK is hermitian, e^K = e^{-iH}
    let h = kmat.map(|z| Complex::new(S::zero(), S::one()) * z);
    let w = hermitian_expm(&h, Complex::new(S::zero(), -S::one()));
    let mut out = v.clone();
    for p in 0..sp.pdim {
        let base = p * fdim;
        for f in 0..fdim {
            let mut acc = Complex::new(S::zero(), S::zero());
            for f2 in 0..fdim {
                acc += w[(f, f2)] * v.amp[base + f2];
            }
            out.amp[base + f] = acc;
        }
    }
    out
}

/// Product state `u^{⊗N} ⊗ (coherent field √N α)` on a fixed-N space.
/// Rejects `u` with more than `1e-8` mass outside the particle modes.
pub fn coherent_product_state<S: Scalar>(
    sp: &Arc<FockSpace<S>>,
    u: &SpatialField<S>,
    alpha: &MomentumField<S>,
    n_particles: usize,
) -> Result<FockVector<S>> {
    let ParticleSector::Fixed(n) = sp.sector else {
        return Err(CoreError::InvalidParameter(
            "product state needs a fixed-N space".into(),
        ));
    };
    if n != n_particles {
        return Err(CoreError::InvalidParameter("particle number mismatch".into()));
    }
    let leak = sp.leakage(u);
    if leak.as_f64() > 1e-8 {
        return Err(CoreError::InvalidParameter(format!(
            "u leaks {:.3e} outside the particle modes",
            leak.as_f64()
        )));
    }
    let coeffs = sp.particle_coefficients(u);
    let mut v = sp.zero_vector();
    // multinomial amplitudes over the particle basis
    let ln_nfact = ln_factorial::<S>(n);
    for (pi, occ) in sp.pstates.iter().enumerate() {
        let mut amp = Complex::new(S::one(), S::zero());
        let mut ln_norm = ln_nfact;
        for (i, &ni) in occ.iter().enumerate() {
            for _ in 0..ni {
                amp *= coeffs[i];
            }
            ln_norm -= ln_factorial::<S>(ni as usize);
        }
        let scale = num_traits::Float::exp(ln_norm * S::of(0.5));
        v.amp[sp.flat(pi, 0)] = amp.scale(scale);
    }
    // coherent field amplitudes per mode
    let g = {
        let mut g = sp.field_coefficients(alpha);
        let s = num_traits::Float::sqrt(S::of_usize(n_particles));
        for c in &mut g {
            *c = c.scale(s);
        }
        g
    };
    let mut out = sp.zero_vector();
    let nbase = sp.n_max + 1;
    for pi in 0..sp.pdim {
        let amp_p = v.amp[sp.flat(pi, 0)];
        if amp_p.norm_sqr() == S::zero() {
            continue;
        }
        for f in 0..sp.fdim {
            let mut amp = amp_p;
            let mut rem = f;
            for gm in &g {
                let nm = rem % nbase;
                rem /= nbase;
                let mut term = Complex::new(
                    num_traits::Float::exp(-gm.norm_sqr() * S::of(0.5)),
                    S::zero(),
                );
                for j in 0..nm {
                    term = term * *gm / Complex::new(num_traits::Float::sqrt(S::of_usize(j + 1)), S::zero());
                }
                amp *= term;
            }
            out.amp[sp.flat(pi, f)] = amp;
        }
    }
    Ok(out)
}

fn ln_factorial<S: Scalar>(n: usize) -> S {
    let mut acc = S::zero();
    for i in 2..=n {
        acc += num_traits::Float::ln(S::of_usize(i));
    }
    acc
}

/// Skew-hermitian generator of the infrared-dressed initial state: the
/// second quantization of `N^{-1/2} Σ_j [a†(B_{K,x_j}) - a(B_{K,x_j})]`
/// with `B_{K} = B·1_{|k|≥K}` on the retained momenta.
pub fn dressing_generator<S: Scalar>(
    sp: &FockSpace<S>,
    kset: &KernelSet<S>,
    n_particles: usize,
    k_infrared: S,
    cut: Cutoff<S>,
) -> Result<HamiltonianReport<S>> {
    let mut b = Builder::new(sp);
    let sdk = num_traits::Float::sqrt(sp.grid.dk_pow_d());
    let coupling = S::one() / num_traits::Float::sqrt(S::of_usize(n_particles));
    let mark = b.coo.len();
    for k in 0..sp.m_a() {
        let flat = sp.fmodes[k];
        let kabs = num_traits::Float::sqrt(sp.grid.k_sq(flat));
        if kset.mask[flat] == S::zero() || !cut.accepts(kabs) || kabs < k_infrared {
            continue;
        }
        let b0 = kset.b0[flat];
        for p in 0..sp.m_b() {
            b.add_hop_ladder(p, k, -1, true, Complex::new(coupling * sdk * b0, S::zero()));
        }
    }
    // subtract the adjoint to obtain the skew generator
    let mut adj: Vec<(u32, u32, Complex<S>)> = b.coo[mark..]
        .iter()
        .map(|&(r, c, v)| (c, r, -v.conj()))
        .collect();
    b.coo.append(&mut adj);
    Ok(b.finish())
}

/// Infrared-dressed near-product initial state: applies `exp(-G)` with the
/// dressing generator `G` by hermitian Krylov propagation.
pub fn dressed_initial_state<S: Scalar>(
    sp: &Arc<FockSpace<S>>,
    kset: &KernelSet<S>,
    u: &SpatialField<S>,
    alpha: &MomentumField<S>,
    n_particles: usize,
    k_infrared: S,
    cut: Cutoff<S>,
) -> Result<FockVector<S>> {
    let base = coherent_product_state(sp, u, alpha, n_particles)?;
    let gen = dressing_generator(sp, kset, n_particles, k_infrared, cut)?;
    if gen.op.nnz() == 0 {
        return Ok(base);
    }
    // e^{-G} = e^{-iH} with H = -iG hermitian
    let h = gen.op.scaled(Complex::new(S::zero(), -S::one()));
    super::krylov::propagate(&h, &base, S::one(), S::one(), super::krylov::KrylovOptions::default())
}
