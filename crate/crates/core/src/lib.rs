//! Symbolic type calculus for admissible kernels on Henkin-Leiterer domains,
//! machine-checkable replays of the cancellation arguments, and numerical
//! geometry and singular quadrature for the homotopy kernels.

pub mod dforms;
pub mod geom;
pub mod jet;
pub mod kexpr;
pub mod krewrite;
pub mod ktype;
pub mod quad;

pub use kexpr::{Coeff, Idx, KernelAtom, KernelExpr, KernelTerm, Named, PhiKind, Rational};
pub use ktype::{classify, double_type, mapping, z_chain, DoubleType, Exponent, KernelClass, WeightPrefix};
