//! Fixtures shared by the benchmarks.

use hlkernel::jet::C64;

/// A well-separated `(zeta, z)` pair inside the pinched domain.
pub fn pinched_pair() -> (Vec<C64>, Vec<C64>) {
    (vec![C64::new(0.6, 0.05), C64::new(0.1, -0.2)], vec![C64::new(0.4, 0.0), C64::new(0.0, 0.15)])
}

/// Kernel expressions typical of the derivation scripts.
pub const EXPRESSIONS: [&str; 3] =
    ["E[3,0]*Phi^-1*P^-2", "GammaStar^-1*E[2,0]*Phi^-1*P^-2", "Gamma^-1*E[0,0]*Phi^-1*P^-2 + E[1,0]*Phi^-2*P^-2"];
