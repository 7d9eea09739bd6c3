//! Readers for the on-disk binary formats: DEX bytecode, binary/plain
//! manifests, and extracted update directories.

pub mod dex;
pub mod manifest;
pub mod update_dir;

pub use dex::{parse_dex, parse_dex_with, DexError, DexOptions};
pub use manifest::{parse_manifest, ManifestError, ManifestInfo};
pub use update_dir::{parse_update_dir, FrontendError, ParsedUpdate};
