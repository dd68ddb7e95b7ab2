//! Shared inputs for the criterion benches.

use clinfix_core::synth::{generate, SynthConfig, SynthCorpus};

/// Default-sized synthetic corpus (500 training, 200 test records).
pub fn corpus() -> SynthCorpus {
    generate(&SynthConfig::default())
}
