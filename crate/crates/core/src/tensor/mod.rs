//! Dense tensors and a tape-based reverse-mode autodiff engine.

mod gradcheck;
mod graph;
mod value;

pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport, TensorCheck};
pub use graph::{Elementwise, Graph, InputGrads, OpKind, Reduction, Var, LOG_CLAMP};
pub use value::{GradStore, ParamId, ParamStore, Tensor};
