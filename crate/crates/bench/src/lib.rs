//! Criterion benchmarks for the tracker hot paths; see `benches/`.
