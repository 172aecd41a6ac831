//! Files and command line around `alkatherm-core`: TOML scenarios, CSV
//! trajectories, LPV table text files and the `alkatherm` binary.

pub mod cli;
pub mod config;
pub mod lpv_io;
pub mod qp_dump;
pub mod report;
