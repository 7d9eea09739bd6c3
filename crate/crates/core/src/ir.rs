//! Line-oriented JSON text form of an [`AppUpdate`] (`ir-schema v1`).
//!
//! The first line is an update header, every following line one class.
//! See `docs/ir-schema-v1.md` for the field reference.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AppUpdate, CallSite, ClassRecord, MethodRef, ModelError};

pub const IR_SCHEMA: &str = "ir-schema v1";
pub const IR_FILE_NAME: &str = "update.ir.jsonl";

#[derive(Debug, Error)]
pub enum IrError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("empty IR file")]
    MissingHeader,
    #[error("unsupported schema {0:?}, expected {IR_SCHEMA:?}")]
    Schema(String),
    #[error("header lacks {0} and no default was supplied")]
    MissingField(&'static str),
    #[error("line {line}: {source}")]
    Model {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("line {line}: duplicate class {fqn}")]
    DuplicateClass { line: usize, fqn: String },
    #[error("header announces {expected} classes, found {found}")]
    ClassCount { expected: usize, found: usize },
}

/// Values used when an IR header omits the corresponding field.
#[derive(Debug, Clone, Default)]
pub struct UpdateDefaults {
    pub observed_at: Option<i64>,
    pub category: Option<String>,
    pub download_count: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    schema: String,
    app_id: String,
    version_code: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observed_at: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    download_count: Option<u64>,
    #[serde(default)]
    has_native_code: bool,
    #[serde(default)]
    activities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_count: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassLine {
    fqn: String,
    #[serde(default)]
    methods: Vec<MethodLine>,
    #[serde(default)]
    calls: Vec<CallLine>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MethodLine {
    name: String,
    params: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CallLine {
    caller: String,
    caller_params: u32,
    owner: String,
    method: String,
    params: u32,
    ordinal: u32,
}

pub fn write_ir<W: Write>(update: &AppUpdate, mut out: W) -> Result<(), IrError> {
    update.validate().map_err(|source| IrError::Model { line: 0, source })?;
    let header = HeaderLine {
        schema: IR_SCHEMA.to_owned(),
        app_id: update.app_id.clone(),
        version_code: update.version_code,
        observed_at: Some(update.observed_at),
        category: Some(update.category.clone()),
        download_count: Some(update.download_count),
        has_native_code: update.has_native_code,
        activities: update.activities.iter().cloned().collect(),
        class_count: Some(update.classes.len()),
    };
    write_line(&mut out, &header)?;
    for class in update.classes.values() {
        let line = ClassLine {
            fqn: class.fqn.clone(),
            methods: class
                .declared_methods
                .iter()
                .map(|m| MethodLine {
                    name: m.method_name.clone(),
                    params: m.param_count,
                })
                .collect(),
            calls: class
                .call_sites
                .iter()
                .map(|c| CallLine {
                    caller: c.caller.method_name.clone(),
                    caller_params: c.caller.param_count,
                    owner: c.callee.owner_class.clone(),
                    method: c.callee.method_name.clone(),
                    params: c.callee.param_count,
                    ordinal: c.ordinal,
                })
                .collect(),
        };
        write_line(&mut out, &line)?;
    }
    out.flush()?;
    Ok(())
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), IrError> {
    serde_json::to_writer(&mut *out, value).map_err(|source| IrError::Json { line: 0, source })?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn store_ir(update: &AppUpdate, path: &Path) -> Result<(), IrError> {
    let file = File::create(path)?;
    write_ir(update, BufWriter::new(file))
}

pub fn read_ir<R: BufRead>(input: R, defaults: &UpdateDefaults) -> Result<AppUpdate, IrError> {
    let mut lines = input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));

    let (line_no, first) = lines.next().ok_or(IrError::MissingHeader)?;
    let header: HeaderLine =
        serde_json::from_str(&first?).map_err(|source| IrError::Json { line: line_no, source })?;
    if header.schema != IR_SCHEMA {
        return Err(IrError::Schema(header.schema));
    }

    let mut update = AppUpdate::new(header.app_id, header.version_code);
    update.observed_at = header.observed_at.or(defaults.observed_at).unwrap_or(0);
    update.category = header
        .category
        .or_else(|| defaults.category.clone())
        .ok_or(IrError::MissingField("category"))?;
    update.download_count = header
        .download_count
        .or(defaults.download_count)
        .ok_or(IrError::MissingField("download_count"))?;
    update.has_native_code = header.has_native_code;
    update.activities = header.activities.into_iter().collect();

    for (line_no, line) in lines {
        let parsed: ClassLine =
            serde_json::from_str(&line?).map_err(|source| IrError::Json { line: line_no, source })?;
        let class = class_from_line(parsed).map_err(|source| IrError::Model { line: line_no, source })?;
        if let Err(dup) = update.insert_class(class) {
            return Err(IrError::DuplicateClass {
                line: line_no,
                fqn: dup.fqn,
            });
        }
    }
    if let Some(expected) = header.class_count {
        if expected != update.classes.len() {
            return Err(IrError::ClassCount {
                expected,
                found: update.classes.len(),
            });
        }
    }
    update.validate().map_err(|source| IrError::Model { line: 0, source })?;
    Ok(update)
}

fn class_from_line(line: ClassLine) -> Result<ClassRecord, ModelError> {
    let mut class = ClassRecord::new(line.fqn)?;
    for m in line.methods {
        class.declare_method(m.name, m.params);
    }
    for c in line.calls {
        class.call_sites.push(CallSite {
            caller: MethodRef::new(class.fqn.clone(), c.caller, c.caller_params),
            callee: MethodRef::new(c.owner, c.method, c.params),
            ordinal: c.ordinal,
        });
    }
    class.validate()?;
    Ok(class)
}

pub fn load_ir(path: &Path, defaults: &UpdateDefaults) -> Result<AppUpdate, IrError> {
    read_ir(BufReader::new(File::open(path)?), defaults)
}
