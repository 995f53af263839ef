//! Model description: parasite dynamics, cell policies and sharing kernels.

mod kernel;
mod law;
mod profile;
mod validate;

pub use kernel::{KernelSpec, SharingKernel};
pub use law::{
    CellPolicy, JumpMeasure, ModelSpec, ParasiteLaw, Rates, SizeLaw, StableJumps,
    STABLE_TRUNCATION_BIAS,
};
pub use profile::{Monomial, Profile};
pub use validate::{generator_on_power, validate_eu, ClauseVerdict, EuClause, EuReport};
