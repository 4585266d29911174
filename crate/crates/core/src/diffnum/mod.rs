//! Small reverse-mode differentiable core: tensors, a layer-stack tape,
//! Adam, finite-difference checks and a named-tensor checkpoint format.

mod adam;
mod checkpoint;
mod gemm;
mod gradcheck;
mod layers;
mod network;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use gemm::gemm;
pub use gradcheck::{check_scalar_fn, finite_diff_check, half_sq_loss, relative_error, GradReport, ParamReport, FD_STEP};
pub use layers::{sigmoid, softmax_into, Layer, LayerSpec, CONV_KERNEL, CONV_PADDING, CONV_STRIDE};
pub use network::Sequential;
pub use tensor::Tensor;
