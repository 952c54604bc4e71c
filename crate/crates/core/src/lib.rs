//! Numerical laboratory for the planar double-bubble surface diffusion flow.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] — closed-form standard double bubbles (curvatures, lengths,
//!   level-set functions, areas and the inverse area problem);
//! * [`perturbation`] — graph perturbations ρ over a reference bubble, the
//!   junction matrix 𝓙 and push-forward of perturbed curves;
//! * [`flow`] — the nonlinear, nonlocal graph formulation of surface
//!   diffusion, implicit time stepping and admissible initial data;
//! * [`linops`] — the linearized operator: discrete pencil, spectrum, null
//!   space, second variation and the junction ODE determinant;
//! * [`lab`] — the equilibrium chart and the stability experiment.
//!
//! Arcs are indexed `0, 1, 2` in code (arcs 1, 2, 3 in the usual notation).
//! Junction `p₊` sits at `x = +l_i` on every arc.

pub mod error;
pub mod fd;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod lab;
pub mod linops;
pub mod perturbation;

pub use error::{Error, Result};
pub use geometry::{BubbleParams, StandardBubble, Vec2};
pub use perturbation::{ArcGrid, ArcSamples, PerturbationField, Tangential, TangentialProfile};
pub use flow::{BoundaryResiduals, FlowConfig, FlowState};
pub use linops::{DiscretePencil, ModeReport};
pub use lab::{ChartPoint, Recipe, StabilityConfig, StabilityReport};
