//! Criterion benchmarks for the simulator hot paths. See `benches/`.
