//! Criterion benchmarks for mbc-core live under `benches/`.
