//! Attention decoder (single or doubly attentive) and beam search.

mod attention;
mod beam;
mod step;

pub use attention::{attend, Attention, AttentionVars, PreparedMemory};
pub use beam::{beam_decode, BeamOptions, Hypothesis, StepScorer};
pub use step::{
    decode_step, init_state, DecoderState, DecoderStepTrace, DecoderVars, Dropout, Memories,
    StepOutput,
};
