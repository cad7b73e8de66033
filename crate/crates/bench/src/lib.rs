//! Criterion benchmarks for `sumsq-core`; see `benches/`.
