//! Holds the long-running acceptance suite; see `tests/acceptance.rs`.
