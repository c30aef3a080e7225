//! Attention-based encoder–decoder, Neural Turing Machine and Memory Network
//! models for synthetic reading-comprehension question answering, together with
//! the corpus tooling and experiment harness used to compare them.

pub mod corpus;
pub mod gradcheck;
pub mod harness;
pub mod memnn;
pub mod model;
pub mod nmt;
pub mod nn;
pub mod ntm;
pub mod tensor;
