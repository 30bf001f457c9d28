pub mod analyze;
pub mod bench;
pub mod common;
pub mod evaluate;
pub mod preprocess;
pub mod synth;
pub mod train;
pub mod translate;
