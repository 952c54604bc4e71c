//! Fixtures shared by the criterion benches.

use bubbleflow::flow::{project_admissible, FlowState};
use bubbleflow::lab::{recipe_field, Recipe};
use bubbleflow::perturbation::Reference;
use bubbleflow::{ArcGrid, BubbleParams, PerturbationField, StandardBubble};

pub fn reference(gamma: f64, n: usize) -> Reference {
    let b = StandardBubble::new(BubbleParams::new(1.0, gamma)).expect("valid bubble");
    let g = ArcGrid::new(&b, n).expect("valid grid");
    Reference::new(&b, &g).expect("valid reference")
}

/// The default 1e-2 generic perturbation, made admissible.
pub fn perturbed(reference: &Reference) -> PerturbationField {
    let raw = recipe_field(&reference.bubble, &reference.grid, Recipe::Generic, 1e-2, 7);
    project_admissible(reference, &raw).expect("admissible data")
}

pub fn state(reference: &Reference) -> FlowState {
    FlowState::new(reference, perturbed(reference)).expect("valid state")
}
