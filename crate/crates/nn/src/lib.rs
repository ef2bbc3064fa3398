//! Complex-valued neural network primitives with reverse-mode gradients.
//!
//! Networks are built eagerly on a [`Graph`] that borrows a [`ParamStore`];
//! calling [`Graph::backward`] on a real scalar loss yields per-parameter
//! gradients for [`Adam`].

mod adam;
mod attention;
mod checkpoint;
mod conv;
mod gradcheck;
mod graph;
mod layers;
mod params;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use conv::{ConvSpec, Padding};
pub use gradcheck::{check_gradients, gradient_pairs, GradCheckReport};
pub use graph::{Backward, Graph, Var, IGNORE_LABEL};
pub use layers::{timestep_embedding, ComplexConv, CrossAttention, DepthwiseSeparable};
pub use params::{Grads, ParamId, ParamStore};
pub use tensor::Tensor;
