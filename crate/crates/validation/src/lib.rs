//! Holds the `acceptance` test target (`tests/acceptance.rs`). It is a
//! separate package so that its exit status does not stop the other test
//! targets of the workspace from running.
