pub mod attribute;
pub mod eval;
pub mod prepare;
pub mod selftest;
pub mod snippets;
pub mod synth;
pub mod train;
