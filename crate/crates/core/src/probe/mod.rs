//! Linear probes on externally dumped hidden states.

mod cv;
mod grid;
mod logistic;
mod tensor;

pub use cv::{cross_validate, fold_assignment, CvResult, FoldReport};
pub use grid::{grid_eval, select_rows, CellResult, ProbeResult, PRIMARY_CELL};
pub use logistic::{fit_logistic_l2, objective, LogisticModel, ProbeConfig, Scaler};
pub use tensor::{
    read_matrix, write_matrix, Cell, HiddenStateBundle, HiddenStateMatrix, LayerTag, TokenTag, TENSOR_MAGIC,
    TENSOR_VERSION,
};
