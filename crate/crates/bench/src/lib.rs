//! Criterion benchmarks for the convexo pipeline live in `benches/`.
