//! Criterion benchmarks for the hot paths of `afk-core`: FFTs, MFCC
//! features, the co-domain mapping, model passes and one per-clip attack.
//! Run with `cargo bench -p afk-bench`.
