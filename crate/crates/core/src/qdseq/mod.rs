//! Quantum deep sequences: elements are embedded as density matrices and
//! combined in reading order by a binary channel built from a tristochastic
//! tensor and block unitaries.

mod channel;
mod model;
mod tensor;

pub use channel::{
    assemble_channel_unitary, associativity_defect, build_channel_unitary, channel_product,
    commutativity_defect, fold_sequence, random_density, stick_breaking_eigenvalues, BinaryChannel,
    ChannelSpec, DilationChannel, Swapped,
};
pub use model::{density_features, embed_density, qdseq_forward, QdseqConfig, QdseqModel};
pub use tensor::{
    default_tensor, validate_tensor, Marginal, TensorViolation, Triple, TristochasticTensor,
};

pub(crate) use channel::stick_breaking_vjp;
