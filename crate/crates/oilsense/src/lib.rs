//! File formats, image IO and the command-line front end for
//! [`oilsense_core`].
//!
//! | format | module |
//! |---|---|
//! | binary PGM / PPM | [`pnm`] |
//! | scene JSON | [`scene_json`] |
//! | relation-network weights | [`weights`] |
//! | rule files and parameter JSON | [`rules`] |
//! | pair datasets (JSON-lines) | [`pairs`] |
//! | pipeline / training configs | [`config`] |

pub mod cli;
pub mod config;
pub mod error;
pub mod pairs;
pub mod pnm;
pub mod report;
pub mod rules;
pub mod scene_json;
pub mod weights;

pub use error::{Error, Result};
pub use oilsense_core;

/// The three oil-area rules with their reference parameters, as a rule file.
pub const REFERENCE_RULES: &str = include_str!("../data/oil_area.rules");
