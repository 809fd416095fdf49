//! Minimal differentiable layer set with hand-written backward passes.

pub mod conv;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod pool;
pub mod tensor;

pub use conv::{conv1d_backward, conv1d_forward, Conv1dCache, Conv1dParams};
pub use dense::{affine, affine_backward, softmax, softmax_backward, Activation, AffineCache, AffineParams};
pub use dropout::{spatial_dropout, ChannelMask, Mode};
pub use gradcheck::{check_all, check_op, finite_diff_check, GradCheckReport, OpCheck, OpKind};
pub use loss::{
    gold_class, head_range, head_size, head_softmax, multitask_loss, multitask_loss_and_grad, ClassWeights, N_HEADS,
    N_LOGITS,
};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_sequence, lstm_sequence_backward, lstm_step, lstm_step_backward, BiLstmCache,
    LstmCellParams, LstmSeqCache, LstmStepCache,
};
pub use optim::{adam_update, clip_global_norm, AdamConfig, AdamState, RowStore, SparseAdam};
pub use pool::{global_pool_backward, global_pool_concat, PoolCache};
pub use tensor::{glorot_bound, Scalar, Tensor};
