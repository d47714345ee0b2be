//! Library surface of the `witloc` CLI: the config-file parser and the
//! built-in presets, shared between the binary and its integration tests.

pub mod config;
