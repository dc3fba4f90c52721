// Indexed loops follow the tensor index notation of the equations, and
// negated comparisons like `!(x > 0.0)` are NaN-rejecting on purpose.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

//! viscoflow: a periodic-domain solver for compressible viscoelastic flow.
//!
//! The library advances the density / velocity / deformation-gradient
//! triple on a periodic box by composing three sub-solves per time step:
//! semi-Lagrangian transport of the density and deformation gradient along
//! characteristics of a frozen velocity, an implicit variable-coefficient
//! elliptic solve for the new velocity, and a Picard fixed-point loop that
//! iterates the composition to self-consistency. A monitoring subsystem
//! reports, every step, the conserved quantities and a-priori bounds the
//! continuous system satisfies.

pub mod cli;
pub mod config;
pub mod constitutive;
pub mod error;
pub mod field;
pub mod grid;
pub mod interp;
mod jet;
pub mod lame;
pub mod mms;
pub mod monitors;
pub mod ops;
mod reduce;
pub mod snapshot;
pub mod stepper;
pub mod transport;

pub use error::Error;
pub use field::{ScalarField, TensorField, VectorField};
pub use grid::Grid;

// Every code block in the guide compiles and runs as a doc-test, so the
// book cannot drift from the library.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub struct $name;
        };
    }
    chapter!(Introduction, "../../../book/src/introduction.md");
    chapter!(GridAndFields, "../../../book/src/grid-and-fields.md");
    chapter!(Constitutive, "../../../book/src/constitutive.md");
    chapter!(Transport, "../../../book/src/transport.md");
    chapter!(Momentum, "../../../book/src/momentum.md");
    chapter!(Stepping, "../../../book/src/stepping.md");
    chapter!(Monitors, "../../../book/src/monitors.md");
    chapter!(Mms, "../../../book/src/mms.md");
    chapter!(Cli, "../../../book/src/cli.md");
}
