//! Static analysis of how Android apps integrate advertising libraries.
//!
//! The pipeline loads app update lineages (from DEX bytecode or a textual
//! IR), detects which ad libraries each update carries, decides whether
//! and where it displays ads, labels the integration strategy, and measures
//! how ad-related code evolves from one update to the next.

pub mod catalog;
pub mod corpus;
pub mod detection;
pub mod diag;
pub mod evolution;
pub mod forge;
pub mod frontend;
pub mod ir;
pub mod model;
pub mod report;
pub mod stats;
pub mod strategy;

pub use catalog::{AdLibraryCatalog, AdLibraryEntry, CatalogError};
pub use diag::{Diagnostic, DiagnosticKind};
pub use model::{package_of, AppLineage, AppUpdate, CallSite, ClassRecord, Corpus, MethodRef};
