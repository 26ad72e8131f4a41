//! Benchmark harness for the modelling pipeline; see `benches/`.
