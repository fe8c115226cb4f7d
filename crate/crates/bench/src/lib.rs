//! Criterion benchmarks for sapalm live under `benches/`.
