//! Tree tensor network time evolution for the two-dimensional quantum Ising
//! model.
//!
//! A binary tree covers an `Lx × Ly` lattice by alternating bisection. States
//! live on the tree ([`state::TtnState`]), Hamiltonians are sums of few-body
//! terms ([`hamiltonian::LocalSumOperator`]) whose terms are collapsed branch
//! by branch when effective Hamiltonians are built, and time evolution is
//! single-site TDVP with a Lanczos exponential ([`tdvp`]).
//!
//! Independent reference engines live in [`oracles`]: dense statevector
//! evolution, the constrained PXP model and a free-fermion chain.
//!
//! # Conventions
//!
//! The local basis is the eigenbasis of the Ising axis: `|0⟩` is spin up
//! (`σx = +1`), `|1⟩` is spin down. In this basis `σx = diag(1, -1)` and the
//! transverse `σz` flips the spin. Dense statevectors index basis states by
//! `Σ_i b_i 2^i` with site `i = x + Lx·y`.
//!
//! # Examples
//!
//! Each capability has a runnable example:
//!
//! ```text
//! cargo run --release --example lattice_and_tree
//! cargo run --release --example tensor_algebra
//! cargo run --release --example product_states_and_gauge
//! cargo run --release --example quench_vs_ed
//! cargo run --release --example strip_dynamics
//! cargo run --release --example corner_wannier_stark
//! cargo run --release --example bubble
//! cargo run --release --example local_sum_benchmark
//! cargo run --release --example checkpoint_roundtrip
//! ```

extern crate openblas_src;

pub mod cli;
pub mod hamiltonian;
pub mod initstates;
pub mod observables;
pub mod oracles;
pub mod state;
pub mod tdvp;
pub mod tnalg;
pub mod topology;

pub use num_complex::Complex64 as C64;

/// Critical transverse field of the 2D model, in units of `J`.
pub const G_CRITICAL: f64 = 3.04;

/// Sets the BLAS thread count; `0` leaves the library default.
pub fn set_threads(n: usize) {
    extern "C" {
        fn openblas_set_num_threads(n: std::os::raw::c_int);
    }
    if n > 0 {
        // SAFETY: plain setter exported by OpenBLAS
        unsafe { openblas_set_num_threads(n as std::os::raw::c_int) }
    }
}
