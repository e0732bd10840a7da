//! Built-in scenarios reproducing the showcased solution types.
//!
//! Root values of c are implementer-chosen reconstructions of the qualitative
//! root patterns (simple roots for tori, double roots for solitons); only
//! kb-exact uses exact published data.

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// (name, TOML source) of every preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("kb-exact", include_str!("../presets/kb-exact.toml")),
    ("kdv-cnoidal", include_str!("../presets/kdv-cnoidal.toml")),
    ("kdv-2soliton", include_str!("../presets/kdv-2soliton.toml")),
    ("bkm4-n2-cnoidal", include_str!("../presets/bkm4-n2-cnoidal.toml")),
    ("bkm4-n2-loop", include_str!("../presets/bkm4-n2-loop.toml")),
    ("bkm4-n2-rope", include_str!("../presets/bkm4-n2-rope.toml")),
    ("bkm2-cnoidal", include_str!("../presets/bkm2-cnoidal.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

/// TOML source of a preset.
pub fn source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|p| p.0 == name)
        .map(|p| p.1)
        .ok_or_else(|| Error::config("preset", format!("unknown preset `{name}`")))
}

pub fn load(name: &str) -> Result<Scenario> {
    Scenario::from_toml_str(source(name)?)
}
