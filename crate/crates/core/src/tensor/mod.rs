//! Dense tensors and a small reverse-mode autodiff engine.

mod dense;
mod gradcheck;
mod graph;

pub use dense::Tensor;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use graph::{softmax_rows, Binary, Gradients, Graph, Unary, Var};
