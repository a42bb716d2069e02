//! Characteristic evolution: grid, data, the diamond integrator, and the
//! manufactured-solution harness.

pub mod data;
pub mod grid;
pub mod manufactured;
pub mod scheme;

pub use data::{AMode, HigherOrder, InitialData, NonlinearityConfig};
pub use grid::{build_evolution_grid, DiagonalScalars, EvolutionGrid, GridSpec};
pub use manufactured::ManufacturedSolution;
pub use scheme::{
    evolve, evolve_linear, evolve_manufactured, evolve_with_observers, initial_data_bump,
    rhs_center, CellCenter, CellObserver, DataSource, Field, RowData, RowObserver, RowWindow,
    D_SWITCH,
};
