//! Criterion benchmarks for the metric and probe hot paths; see `benches/`.
