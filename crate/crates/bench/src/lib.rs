//! Benchmarks for the probewarp pipeline stages. See `benches/`.
