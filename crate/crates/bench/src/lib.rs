//! Criterion benchmarks for the node dynamics and the minimum-norm oracle.
//! Run with `cargo bench -p pcgen-bench`.
