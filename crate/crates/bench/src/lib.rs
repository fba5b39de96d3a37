//! Fixtures shared by the criterion benchmarks in `benches/`.

use ampi_core::env::{make_garnet, GarnetSpec};
use ampi_core::TabularMdp;

/// Garnet with branching 3 and discount 0.9.
pub fn garnet(n_states: usize, n_actions: usize, seed: u64) -> TabularMdp {
    make_garnet(&GarnetSpec::new(n_states, n_actions, 3.min(n_states), 0.9, seed)).expect("valid garnet spec")
}
