//! Acceptance checks for `spikesnr`. The checks live in `tests/acceptance.rs`
//! and run with `cargo test -p spikesnr-suite --test acceptance`.
