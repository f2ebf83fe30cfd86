//! Exact truncated Fock-space realization of the cutoff model at small
//! particle number: occupation-number bases, sparse many-body Hamiltonians,
//! Weyl and dressing operators, Krylov propagation, condensation/coherence
//! functionals, the excitation map, and second quantization of quadratic
//! generators.
//!
//! Particle one-particle modes are plane waves of the same grid the
//! mean-field flows run on; mode sums use true momentum arithmetic and
//! transitions leaving the retained set are dropped (the dropped weight is
//! tracked).

mod basis;
mod functionals;
mod krylov;
mod operators;
mod quad;

pub use basis::{FockSpace, FockVector, ParticleSector};
pub use functionals::{
    beta_functional, excitation_adjoint, excitation_map, gamma_functional, reduced_densities,
};
pub use krylov::{propagate, KrylovOptions};
pub use operators::{
    build_dressed_hamiltonian, build_nelson_hamiltonian, coherent_product_state, dgamma_b,
    dressed_initial_state, dressing_generator, field_annihilator, number_a, number_b,
    particle_creator, weyl_apply, HamiltonianReport, SparseOp,
};
pub use quad::{phase_defect, quad_fock_operator, PhaseDefectReport};
