//! Command-line front end for `kmsprod`: grid evaluation of the product
//! statistics with CSV output and a JSON run manifest.

pub mod config;
pub mod run;
