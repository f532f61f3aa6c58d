//! Three DSLs built on dslkit: finite-state automata, a sawtooth synth and
//! a small array-loop language.

pub mod fsa;
pub mod mhk;
pub mod synth;

pub use fsa::{build_more_chain, compile_fsa, fsa_match, parse_fsa, FsaError, FsaSpec, FsaStyle};
pub use mhk::{mhk_compile, mhk_run, parse_inputs, MhkError, MhkOptions, MhkProgram};
pub use synth::{parse_score, render, synth_build, wav_bytes, write_wav, Score, SynthError, Voice};
