//! Library side of the `rgk` command: configuration, the LFA benchmark,
//! selftest checks and command implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod commands;
pub mod config;
pub mod num;
pub mod selftest;
