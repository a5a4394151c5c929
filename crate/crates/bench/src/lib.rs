//! Criterion benchmarks (`benches/`) and the acceptance report (`tests/acceptance.rs`).
