//! Acceptance checks for `sea-core`; see `tests/acceptance.rs`.
