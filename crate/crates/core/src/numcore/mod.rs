//! Dense matrices and the reverse-mode tape the models are trained with.

mod adam;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{ssp, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("{len} values cannot fill a tensor of shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("rows have unequal lengths")]
    RaggedRows,
    #[error("expected a 1x1 tensor, got {0:?}")]
    NotScalar([usize; 2]),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("segment_sum: {rows} message rows but {segments} segment ids")]
    SegmentLength { rows: usize, segments: usize },
    #[error("concat_rows of zero tensors")]
    EmptyConcat,
    #[error("{params} parameters but {grads} gradients")]
    ParamCount { params: usize, grads: usize },
}
