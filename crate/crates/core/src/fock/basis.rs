//! Occupation-number basis enumeration for (particles ⊗ field) truncated
//! Fock spaces, with deterministic lexicographic ordering and two-way index
//! maps.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{CoreError, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// Particle-sector truncation: exactly `N` bosons, or all totals `0..=cap`
/// (the excitation space).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParticleSector {
    Fixed(usize),
    Capped(usize),
}

/// Truncated occupation-number basis for bosons in `m_b` plane-wave particle
/// modes tensored with `m_a` field momentum modes capped at `n_max` quanta
/// per mode.
pub struct FockSpace<S: Scalar> {
    pub grid: Arc<Grid<S>>,
    /// Flat momentum indices of the particle modes.
    pub pmodes: Vec<usize>,
    /// Flat momentum indices of the field modes.
    pub fmodes: Vec<usize>,
    pub sector: ParticleSector,
    pub n_max: usize,
    pub pstates: Vec<Vec<u8>>,
    pindex: HashMap<Vec<u8>, usize>,
    pub pdim: usize,
    pub fdim: usize,
    pub dim: usize,
    /// Offset of each total-occupation sector within `pstates` (Capped only).
    pub sector_offsets: Vec<usize>,
}

pub const DIM_CAP: usize = 1 << 22;

fn enumerate_fixed(m: usize, total: usize, out: &mut Vec<Vec<u8>>) {
    let mut cur = vec![0u8; m];
    fn rec(cur: &mut Vec<u8>, pos: usize, left: usize, out: &mut Vec<Vec<u8>>) {
        if pos == cur.len() - 1 {
            cur[pos] = left as u8;
            out.push(cur.clone());
            return;
        }
        for take in 0..=left {
            cur[pos] = take as u8;
            rec(cur, pos + 1, left - take, out);
        }
    }
    if m == 0 {
        return;
    }
    rec(&mut cur, 0, total, out);
}

impl<S: Scalar> FockSpace<S> {
    pub fn new(
        grid: &Arc<Grid<S>>,
        pmodes: Vec<usize>,
        fmodes: Vec<usize>,
        sector: ParticleSector,
        n_max: usize,
    ) -> Result<Self> {
        let m_b = pmodes.len();
        let m_a = fmodes.len();
        if m_b < 1 || m_a < 1 || n_max < 1 {
            return Err(CoreError::InvalidParameter(
                "need at least one particle mode, one field mode and n_max >= 1".into(),
            ));
        }
        let mut pstates = Vec::new();
        let mut sector_offsets = Vec::new();
        match sector {
            ParticleSector::Fixed(n) => {
                if n < 1 {
                    return Err(CoreError::InvalidParameter("N must be >= 1".into()));
                }
                enumerate_fixed(m_b, n, &mut pstates);
            }
            ParticleSector::Capped(cap) => {
                for total in 0..=cap {
                    sector_offsets.push(pstates.len());
                    enumerate_fixed(m_b, total, &mut pstates);
                }
            }
        }
        let pdim = pstates.len();
        let fdim = (n_max + 1).pow(m_a as u32);
        let dim = pdim
            .checked_mul(fdim)
            .ok_or(CoreError::DimensionCap { dim: usize::MAX, cap: DIM_CAP })?;
        if dim > DIM_CAP {
            return Err(CoreError::DimensionCap { dim, cap: DIM_CAP });
        }
        let pindex = pstates
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Self {
            grid: grid.clone(),
            pmodes,
            fmodes,
            sector,
            n_max,
            pstates,
            pindex,
            pdim,
            fdim,
            dim,
            sector_offsets,
        })
    }

    pub fn m_b(&self) -> usize {
        self.pmodes.len()
    }

    pub fn m_a(&self) -> usize {
        self.fmodes.len()
    }

    pub fn pstate_index(&self, occ: &[u8]) -> Option<usize> {
        self.pindex.get(occ).copied()
    }

    /// Flat index from particle-state index and field index.
    pub fn flat(&self, p: usize, f: usize) -> usize {
        p * self.fdim + f
    }

    pub fn split(&self, flat: usize) -> (usize, usize) {
        (flat / self.fdim, flat % self.fdim)
    }

    /// Field occupation of mode `m` within field index `f`.
    pub fn focc(&self, f: usize, m: usize) -> usize {
        (f / (self.n_max + 1).pow(m as u32)) % (self.n_max + 1)
    }

    /// Field index with mode `m` occupation shifted by ±1; None if capped.
    pub fn fshift(&self, f: usize, m: usize, up: bool) -> Option<usize> {
        let base = (self.n_max + 1).pow(m as u32);
        let occ = self.focc(f, m);
        if up {
            if occ + 1 > self.n_max {
                return None;
            }
            Some(f + base)
        } else {
            if occ == 0 {
                return None;
            }
            Some(f - base)
        }
    }

    /// Orthonormal-mode coefficients `√(dk^d)·û(p)` of a grid function over
    /// the particle modes.
    pub fn particle_coefficients(&self, u: &crate::grid::SpatialField<S>) -> Vec<Complex<S>> {
        let uhat = self.grid.fft_forward(u);
        let w = num_traits::Float::sqrt(self.grid.dk_pow_d());
        self.pmodes.iter().map(|&i| uhat.values[i].scale(w)).collect()
    }

    /// Orthonormal-mode coefficients `√(dk^d)·α(k)` over the field modes.
    pub fn field_coefficients(
        &self,
        alpha: &crate::grid::MomentumField<S>,
    ) -> Vec<Complex<S>> {
        let w = num_traits::Float::sqrt(self.grid.dk_pow_d());
        self.fmodes.iter().map(|&i| alpha.values[i].scale(w)).collect()
    }

    /// Leaked mass `1 - Σ|coeff|²` of a normalized grid function outside the
    /// particle modes.
    pub fn leakage(&self, u: &crate::grid::SpatialField<S>) -> S {
        let coeffs = self.particle_coefficients(u);
        let mut inside = S::zero();
        for c in &coeffs {
            inside += c.norm_sqr();
        }
        u.norm_sq() - inside
    }

    pub fn zero_vector(self: &Arc<Self>) -> FockVector<S> {
        FockVector {
            space: self.clone(),
            amp: vec![Complex::new(S::zero(), S::zero()); self.dim],
        }
    }

    /// Basis vector with all particles in `pocc` and field vacuum.
    pub fn basis_vector(self: &Arc<Self>, pocc: &[u8], f: usize) -> Result<FockVector<S>> {
        let p = self
            .pstate_index(pocc)
            .ok_or_else(|| CoreError::InvalidParameter("occupation not in basis".into()))?;
        let mut v = self.zero_vector();
        v.amp[self.flat(p, f)] = Complex::new(S::one(), S::zero());
        Ok(v)
    }
}

/// Complex amplitude vector over a `FockSpace` basis.
#[derive(Clone)]
pub struct FockVector<S: Scalar> {
    pub space: Arc<FockSpace<S>>,
    pub amp: Vec<Complex<S>>,
}

impl<S: Scalar> FockVector<S> {
    pub fn norm(&self) -> S {
        num_traits::Float::sqrt(
            self.amp
                .iter()
                .fold(S::zero(), |acc, a| acc + a.norm_sqr()),
        )
    }

    pub fn dot(&self, other: &Self) -> Complex<S> {
        let mut acc = Complex::new(S::zero(), S::zero());
        for (a, b) in self.amp.iter().zip(&other.amp) {
            acc += a.conj() * b;
        }
        acc
    }

    pub fn scale(&mut self, c: Complex<S>) {
        for a in &mut self.amp {
            *a *= c;
        }
    }

    pub fn axpy(&mut self, c: Complex<S>, other: &Self) {
        for (a, b) in self.amp.iter_mut().zip(&other.amp) {
            *a += c * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn grid() -> Arc<Grid<f64>> {
        Grid::new(1, 2.0 * std::f64::consts::PI, 4).unwrap()
    }

    #[test]
    fn dimensions() {
        let g = grid();
        // N=2 in 2 modes: C(3,1)=3 particle states; 1 field mode, n_max=2: 3
        let sp = FockSpace::new(&g, vec![1, 2], vec![2], ParticleSector::Fixed(2), 2).unwrap();
        assert_eq!(sp.pdim, 3);
        assert_eq!(sp.fdim, 3);
        assert_eq!(sp.dim, 9);

        // N=3 in 4 modes: C(6,3) = 20
        let g8 = Grid::new(1, 4.0, 8).unwrap();
        let sp = FockSpace::new(
            &g8,
            vec![2, 3, 4, 5],
            vec![4],
            ParticleSector::Fixed(3),
            1,
        )
        .unwrap();
        assert_eq!(sp.pdim, 20);

        // capped sector: sum of binomials
        let sp = FockSpace::new(&g, vec![1, 2], vec![2], ParticleSector::Capped(2), 1).unwrap();
        assert_eq!(sp.pdim, 1 + 2 + 3);
        assert_eq!(sp.sector_offsets, vec![0, 1, 3]);
    }

    #[test]
    fn index_roundtrip() {
        let g = grid();
        let sp = FockSpace::new(
            &g,
            vec![1, 2, 3],
            vec![2, 3],
            ParticleSector::Fixed(2),
            2,
        )
        .unwrap();
        for (i, st) in sp.pstates.iter().enumerate() {
            assert_eq!(sp.pstate_index(st), Some(i));
            assert_eq!(st.iter().map(|&x| x as usize).sum::<usize>(), 2);
        }
        for flat in 0..sp.dim {
            let (p, f) = sp.split(flat);
            assert_eq!(sp.flat(p, f), flat);
        }
        // field shifts respect the cap
        assert_eq!(sp.fshift(0, 0, false), None);
        let up = sp.fshift(0, 0, true).unwrap();
        assert_eq!(sp.focc(up, 0), 1);
        let top = sp.fshift(up, 0, true).unwrap();
        assert_eq!(sp.fshift(top, 0, true), None);
    }

    #[test]
    fn dimension_cap_rejected() {
        let g = Grid::new(1, 4.0, 8).unwrap();
        let err = FockSpace::<f64>::new(
            &g,
            (1..8).collect(),
            (1..8).collect(),
            ParticleSector::Fixed(9),
            9,
        );
        assert!(err.is_err());
    }
}
