//! Benchmarks for the filter and episode loop; see `benches/`.
