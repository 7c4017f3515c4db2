//! Criterion benchmarks for the AMR-SG pipeline live in `benches/`.
