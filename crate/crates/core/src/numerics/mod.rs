//! Dense tensors, reverse-mode differentiation and gradient checking.

mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{log_sum_exp, Groups, Tape, Var};
pub(crate) use tape::shifted_log_sum_exp;
pub use tensor::{
    binary, concat_columns, matmul, matmul_nt, sigmoid, softmax_rows, split_columns, unary,
    Elementwise, Tensor,
};
