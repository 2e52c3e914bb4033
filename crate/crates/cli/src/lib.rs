//! Command line and HTTP front end for the `infobell` library.

pub mod api;
pub mod cli;
