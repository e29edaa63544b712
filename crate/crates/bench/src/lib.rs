//! Benchmarks for the zenosim core live in `benches/`.
