//! Criterion benchmarks for the encoders and heads; see `benches/`.
