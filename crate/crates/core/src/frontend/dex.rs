//! Dalvik Executable reader, versions 035 through 039.
//!
//! Only what the call-site analysis needs is decoded: the identifier
//! tables, class definitions, class data and the invoke instructions of
//! every code item. Other opcodes are stepped over using their format
//! lengths. Every offset and count is checked against the buffer before it
//! is used, so arbitrary input either parses or yields a [`DexError`].

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{ClassRecord, MethodRef, ModelError};

const HEADER_SIZE: usize = 0x70;
const ENDIAN_CONSTANT: u32 = 0x1234_5678;

const TYPE_CALL_SITE_ID_ITEM: u16 = 0x0007;
const TYPE_METHOD_HANDLE_ITEM: u16 = 0x0008;
const VALUE_METHOD_HANDLE: u8 = 0x16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DexError {
    #[error("not a DEX file (bad magic)")]
    BadMagic,
    #[error("unsupported DEX version {0}")]
    UnsupportedVersion(String),
    #[error("truncated file: {what} at offset {offset:#x} exceeds file bounds")]
    TruncatedFile { what: &'static str, offset: u64 },
    #[error("unsupported endian tag {0:#010x}")]
    BadEndianTag(u32),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("{table} index {index} out of range")]
    IndexOutOfRange { table: &'static str, index: u32 },
    #[error("malformed type descriptor {0:?}")]
    BadDescriptor(String),
    #[error("malformed uleb128 at offset {0:#x}")]
    BadLeb128(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type Result<T> = std::result::Result<T, DexError>;

#[derive(Debug, Clone, Copy, Default)]
pub struct DexOptions {
    /// Verify the Adler-32 checksum stored in the header.
    pub verify_checksum: bool,
}

/// The invoke family an instruction belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvokeKind {
    Virtual,
    Super,
    Direct,
    Static,
    Interface,
    Polymorphic,
    Custom,
}

impl InvokeKind {
    /// Classifies an opcode, `None` for everything that is not an invoke.
    pub fn from_opcode(op: u8) -> Option<Self> {
        Some(match op {
            0x6e | 0x74 => Self::Virtual,
            0x6f | 0x75 => Self::Super,
            0x70 | 0x76 => Self::Direct,
            0x71 | 0x77 => Self::Static,
            0x72 | 0x78 => Self::Interface,
            0xfa | 0xfb => Self::Polymorphic,
            0xfc | 0xfd => Self::Custom,
            _ => return None,
        })
    }
}

/// Length in 16-bit code units of the instruction starting with `op`.
/// Payload pseudo-instructions behind opcode `0x00` are handled separately.
fn insn_units(op: u8) -> usize {
    match op {
        0x00 | 0x01 => 1,
        0x02 => 2,
        0x03 => 3,
        0x04 => 1,
        0x05 => 2,
        0x06 => 3,
        0x07 => 1,
        0x08 => 2,
        0x09 => 3,
        0x0a..=0x12 => 1,
        0x13 => 2,
        0x14 => 3,
        0x15 | 0x16 => 2,
        0x17 => 3,
        0x18 => 5,
        0x19 | 0x1a => 2,
        0x1b => 3,
        0x1c => 2,
        0x1d | 0x1e => 1,
        0x1f | 0x20 => 2,
        0x21 => 1,
        0x22 | 0x23 => 2,
        0x24..=0x26 => 3,
        0x27 | 0x28 => 1,
        0x29 => 2,
        0x2a..=0x2c => 3,
        0x2d..=0x3d => 2,
        0x3e..=0x43 => 1,
        0x44..=0x6d => 2,
        0x6e..=0x72 => 3,
        0x73 => 1,
        0x74..=0x78 => 3,
        0x79..=0x8f => 1,
        0x90..=0xaf => 2,
        0xb0..=0xcf => 1,
        0xd0..=0xe2 => 2,
        0xe3..=0xf9 => 1,
        0xfa | 0xfb => 4,
        0xfc | 0xfd => 3,
        0xfe | 0xff => 2,
    }
}

#[derive(Debug, Clone, Copy)]
struct Table {
    off: usize,
    count: u32,
}

/// A validated view over a DEX buffer.
pub struct DexFile<'a> {
    data: &'a [u8],
    version: u16,
    string_ids: Table,
    type_ids: Table,
    proto_ids: Table,
    method_ids: Table,
    class_defs: Table,
    call_site_ids: Option<Table>,
    method_handles: Option<Table>,
}

impl<'a> DexFile<'a> {
    pub fn parse(data: &'a [u8], options: DexOptions) -> Result<Self> {
        let version = check_magic(data)?;
        if data.len() < HEADER_SIZE {
            return Err(DexError::TruncatedFile {
                what: "header",
                offset: data.len() as u64,
            });
        }
        let endian = u32_at(data, 0x28)?;
        if endian != ENDIAN_CONSTANT {
            return Err(DexError::BadEndianTag(endian));
        }
        if options.verify_checksum {
            let stored = u32_at(data, 0x08)?;
            let computed = adler2::adler32_slice(&data[12..]);
            if stored != computed {
                return Err(DexError::ChecksumMismatch { stored, computed });
            }
        }
        let table = |count_at: usize, item: usize, what: &'static str| -> Result<Table> {
            let count = u32_at(data, count_at)?;
            let off = u32_at(data, count_at + 4)?;
            check_range(data, off as u64, count as u64 * item as u64, what)?;
            Ok(Table {
                off: off as usize,
                count,
            })
        };
        let mut dex = DexFile {
            data,
            version,
            string_ids: table(0x38, 4, "string_ids")?,
            type_ids: table(0x40, 4, "type_ids")?,
            proto_ids: table(0x48, 12, "proto_ids")?,
            method_ids: table(0x58, 8, "method_ids")?,
            class_defs: table(0x60, 32, "class_defs")?,
            call_site_ids: None,
            method_handles: None,
        };
        dex.read_map()?;
        Ok(dex)
    }

    pub fn version(&self) -> u16 {
        self.version
    }

    pub fn class_def_count(&self) -> u32 {
        self.class_defs.count
    }

    pub fn method_id_count(&self) -> u32 {
        self.method_ids.count
    }

    /// Locates the call-site and method-handle sections, which only the map
    /// list knows about. A missing map simply leaves them unresolved.
    fn read_map(&mut self) -> Result<()> {
        let map_off = u32_at(self.data, 0x34)? as usize;
        if map_off == 0 {
            return Ok(());
        }
        let size = u32_at(self.data, map_off)?;
        check_range(self.data, map_off as u64 + 4, size as u64 * 12, "map_list")?;
        for i in 0..size as usize {
            let at = map_off + 4 + i * 12;
            let kind = u16_at(self.data, at)?;
            let count = u32_at(self.data, at + 4)?;
            let off = u32_at(self.data, at + 8)?;
            let item = match kind {
                TYPE_CALL_SITE_ID_ITEM => 4,
                TYPE_METHOD_HANDLE_ITEM => 8,
                _ => continue,
            };
            check_range(self.data, off as u64, count as u64 * item, "map item")?;
            let t = Some(Table {
                off: off as usize,
                count,
            });
            if kind == TYPE_CALL_SITE_ID_ITEM {
                self.call_site_ids = t;
            } else {
                self.method_handles = t;
            }
        }
        Ok(())
    }

    fn string(&self, idx: u32) -> Result<String> {
        let at = self.index(self.string_ids, idx, 4, "string_ids")?;
        let off = u32_at(self.data, at)? as usize;
        let mut pos = off;
        let _utf16_len = uleb128(self.data, &mut pos)?;
        let rest = self.data.get(pos..).ok_or(DexError::TruncatedFile {
            what: "string_data",
            offset: pos as u64,
        })?;
        let end = rest.iter().position(|&b| b == 0).ok_or(DexError::TruncatedFile {
            what: "string_data",
            offset: pos as u64,
        })?;
        Ok(decode_mutf8(&rest[..end]))
    }

    fn type_name(&self, idx: u32) -> Result<String> {
        let at = self.index(self.type_ids, idx, 4, "type_ids")?;
        let descriptor = self.string(u32_at(self.data, at)?)?;
        descriptor_to_name(&descriptor)
    }

    fn proto_param_count(&self, idx: u32) -> Result<u32> {
        let at = self.index(self.proto_ids, idx, 12, "proto_ids")?;
        let params_off = u32_at(self.data, at + 8)?;
        if params_off == 0 {
            return Ok(0);
        }
        let size = u32_at(self.data, params_off as usize)?;
        check_range(self.data, params_off as u64 + 4, size as u64 * 2, "type_list")?;
        Ok(size)
    }

    /// Resolves a method_id entry into a [`MethodRef`].
    pub fn method_ref(&self, idx: u32) -> Result<MethodRef> {
        let at = self.index(self.method_ids, idx, 8, "method_ids")?;
        let class_idx = u16_at(self.data, at)? as u32;
        let proto_idx = u16_at(self.data, at + 2)? as u32;
        let name_idx = u32_at(self.data, at + 4)?;
        Ok(MethodRef::new(
            self.type_name(class_idx)?,
            self.string(name_idx)?,
            self.proto_param_count(proto_idx)?,
        ))
    }

    /// Maps an invoke-custom call site to the method_id of its bootstrap
    /// method handle. `None` when the handle is a field accessor or the
    /// file carries no call-site section.
    fn call_site_method(&self, call_site_idx: u32) -> Result<Option<u32>> {
        let (Some(sites), Some(handles)) = (self.call_site_ids, self.method_handles) else {
            return Ok(None);
        };
        let at = self.index(sites, call_site_idx, 4, "call_site_ids")?;
        let mut pos = u32_at(self.data, at)? as usize;
        let size = uleb128(self.data, &mut pos)?;
        if size == 0 {
            return Ok(None);
        }
        let header = *self.data.get(pos).ok_or(DexError::TruncatedFile {
            what: "encoded_array",
            offset: pos as u64,
        })?;
        if header & 0x1f != VALUE_METHOD_HANDLE {
            return Ok(None);
        }
        let width = (header >> 5) as usize + 1;
        let bytes = self
            .data
            .get(pos + 1..pos + 1 + width)
            .ok_or(DexError::TruncatedFile {
                what: "encoded_value",
                offset: pos as u64,
            })?;
        let handle_idx = bytes
            .iter()
            .rev()
            .fold(0u64, |acc, &b| (acc << 8) | b as u64);
        let handle_idx = u32::try_from(handle_idx).map_err(|_| DexError::IndexOutOfRange {
            table: "method_handles",
            index: u32::MAX,
        })?;
        let at = self.index(handles, handle_idx, 8, "method_handles")?;
        let kind = u16_at(self.data, at)?;
        if !(0x04..=0x08).contains(&kind) {
            return Ok(None);
        }
        Ok(Some(u16_at(self.data, at + 4)? as u32))
    }

    fn index(&self, table: Table, idx: u32, item: usize, name: &'static str) -> Result<usize> {
        if idx >= table.count {
            return Err(DexError::IndexOutOfRange { table: name, index: idx });
        }
        Ok(table.off + idx as usize * item)
    }

    /// Decodes every class definition into a [`ClassRecord`].
    pub fn classes(&self) -> Result<Vec<ClassRecord>> {
        (0..self.class_defs.count).map(|i| self.class(i)).collect()
    }

    fn class(&self, def_idx: u32) -> Result<ClassRecord> {
        let at = self.class_defs.off + def_idx as usize * 32;
        let class_idx = u32_at(self.data, at)?;
        let class_data_off = u32_at(self.data, at + 24)?;
        let mut record = ClassRecord::new(self.type_name(class_idx)?)?;
        if class_data_off == 0 {
            return Ok(record);
        }

        let mut pos = class_data_off as usize;
        let static_fields = uleb128(self.data, &mut pos)?;
        let instance_fields = uleb128(self.data, &mut pos)?;
        let direct_methods = uleb128(self.data, &mut pos)?;
        let virtual_methods = uleb128(self.data, &mut pos)?;
        let fields = static_fields as u64 + instance_fields as u64;
        let methods = direct_methods as u64 + virtual_methods as u64;
        // Each encoded field takes at least two bytes, each method three.
        check_range(self.data, pos as u64, fields * 2 + methods * 3, "class_data")?;
        for _ in 0..fields {
            uleb128(self.data, &mut pos)?;
            uleb128(self.data, &mut pos)?;
        }

        let mut next_ordinal: HashMap<(String, u32), u32> = HashMap::new();
        for count in [direct_methods, virtual_methods] {
            let mut method_idx = 0u32;
            for _ in 0..count {
                let diff = uleb128(self.data, &mut pos)?;
                let _access = uleb128(self.data, &mut pos)?;
                let code_off = uleb128(self.data, &mut pos)?;
                method_idx = method_idx.checked_add(diff).ok_or(DexError::IndexOutOfRange {
                    table: "method_ids",
                    index: u32::MAX,
                })?;
                let declared = self.method_ref(method_idx)?;
                record.declare_method(declared.method_name.clone(), declared.param_count);
                if code_off == 0 {
                    continue;
                }
                let key = (declared.method_name.clone(), declared.param_count);
                let ordinal = next_ordinal.entry(key).or_insert(0);
                for target in self.invoke_targets(code_off as usize)? {
                    let callee = self.method_ref(target)?;
                    record.call_sites.push(crate::model::CallSite {
                        caller: MethodRef::new(
                            record.fqn.clone(),
                            declared.method_name.clone(),
                            declared.param_count,
                        ),
                        callee,
                        ordinal: *ordinal,
                    });
                    *ordinal += 1;
                }
            }
        }
        Ok(record)
    }

    /// Walks a code item and returns the method_id of every invoke in
    /// instruction order.
    fn invoke_targets(&self, code_off: usize) -> Result<Vec<u32>> {
        let insns_size = u32_at(self.data, code_off + 12)? as usize;
        let start = code_off + 16;
        check_range(self.data, start as u64, insns_size as u64 * 2, "insns")?;
        let unit = |i: usize| -> u16 {
            let at = start + i * 2;
            u16::from_le_bytes([self.data[at], self.data[at + 1]])
        };
        let truncated = |pc: usize| DexError::TruncatedFile {
            what: "instruction",
            offset: (start + pc * 2) as u64,
        };

        let mut targets = Vec::new();
        let mut pc = 0usize;
        while pc < insns_size {
            let first = unit(pc);
            let op = (first & 0xff) as u8;
            let len = if op == 0x00 && first != 0 {
                payload_units(first, pc, insns_size, &unit).ok_or_else(|| truncated(pc))?
            } else {
                insn_units(op)
            };
            if pc + len > insns_size {
                return Err(truncated(pc));
            }
            if let Some(kind) = InvokeKind::from_opcode(op) {
                let operand = unit(pc + 1) as u32;
                let target = if kind == InvokeKind::Custom {
                    self.call_site_method(operand)?
                } else {
                    Some(operand)
                };
                if let Some(t) = target {
                    if t >= self.method_ids.count {
                        return Err(DexError::IndexOutOfRange {
                            table: "method_ids",
                            index: t,
                        });
                    }
                    targets.push(t);
                }
            }
            pc += len;
        }
        Ok(targets)
    }
}

/// Size of a switch or array payload, or `None` if its header is cut off.
/// Unknown pseudo-opcodes are treated as a one-unit nop.
fn payload_units(first: u16, pc: usize, limit: usize, unit: &dyn Fn(usize) -> u16) -> Option<usize> {
    let need = |n: usize| if pc + n <= limit { Some(()) } else { None };
    match first {
        0x0100 => {
            need(2)?;
            Some(4 + unit(pc + 1) as usize * 2)
        }
        0x0200 => {
            need(2)?;
            Some(2 + unit(pc + 1) as usize * 4)
        }
        0x0300 => {
            need(4)?;
            let width = unit(pc + 1) as usize;
            let count = unit(pc + 2) as usize | (unit(pc + 3) as usize) << 16;
            Some(4 + (width * count).div_ceil(2))
        }
        _ => Some(1),
    }
}

fn check_magic(data: &[u8]) -> Result<u16> {
    let magic = data.get(..8).ok_or_else(|| {
        if b"dex\n".starts_with(&data[..data.len().min(4)]) && !data.is_empty() {
            DexError::TruncatedFile {
                what: "magic",
                offset: data.len() as u64,
            }
        } else {
            DexError::BadMagic
        }
    })?;
    if &magic[..4] != b"dex\n" || magic[7] != 0 {
        return Err(DexError::BadMagic);
    }
    let digits = &magic[4..7];
    if !digits.iter().all(u8::is_ascii_digit) {
        return Err(DexError::BadMagic);
    }
    let text = std::str::from_utf8(digits).expect("ascii digits");
    let version: u16 = text.parse().expect("three digits");
    if !(35..=39).contains(&version) {
        return Err(DexError::UnsupportedVersion(text.to_owned()));
    }
    Ok(version)
}

fn check_range(data: &[u8], off: u64, len: u64, what: &'static str) -> Result<()> {
    match off.checked_add(len) {
        Some(end) if end <= data.len() as u64 => Ok(()),
        _ => Err(DexError::TruncatedFile { what, offset: off }),
    }
}

fn u16_at(data: &[u8], at: usize) -> Result<u16> {
    data.get(at..at.saturating_add(2))
        .filter(|b| b.len() == 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or(DexError::TruncatedFile {
            what: "u16",
            offset: at as u64,
        })
}

fn u32_at(data: &[u8], at: usize) -> Result<u32> {
    data.get(at..at.saturating_add(4))
        .filter(|b| b.len() == 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DexError::TruncatedFile {
            what: "u32",
            offset: at as u64,
        })
}

pub(crate) fn uleb128(data: &[u8], pos: &mut usize) -> Result<u32> {
    let start = *pos;
    let mut value = 0u32;
    for i in 0..5 {
        let byte = *data.get(*pos).ok_or(DexError::TruncatedFile {
            what: "uleb128",
            offset: *pos as u64,
        })?;
        *pos += 1;
        if i == 4 && byte > 0x0f {
            return Err(DexError::BadLeb128(start));
        }
        value |= ((byte & 0x7f) as u32) << (7 * i);
        if byte & 0x80 == 0 {
            return Ok(value);
        }
    }
    Err(DexError::BadLeb128(start))
}

/// Decodes modified UTF-8 (CESU-8 surrogates, `C0 80` for NUL). Malformed
/// sequences become U+FFFD rather than failing the whole file.
fn decode_mutf8(bytes: &[u8]) -> String {
    let mut units: Vec<u16> = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let cont = |k: usize| bytes.get(i + k).filter(|c| *c & 0xc0 == 0x80).map(|c| (c & 0x3f) as u16);
        if b < 0x80 {
            units.push(b as u16);
            i += 1;
        } else if b & 0xe0 == 0xc0 {
            match cont(1) {
                Some(c1) => {
                    units.push(((b & 0x1f) as u16) << 6 | c1);
                    i += 2;
                }
                None => {
                    units.push(0xfffd);
                    i += 1;
                }
            }
        } else if b & 0xf0 == 0xe0 {
            match (cont(1), cont(2)) {
                (Some(c1), Some(c2)) => {
                    units.push(((b & 0x0f) as u16) << 12 | c1 << 6 | c2);
                    i += 3;
                }
                _ => {
                    units.push(0xfffd);
                    i += 1;
                }
            }
        } else {
            units.push(0xfffd);
            i += 1;
        }
    }
    String::from_utf16_lossy(&units)
}

/// Converts a type descriptor (`Lcom/foo/Bar;`, `[I`) into dotted form
/// (`com.foo.Bar`, `int[]`).
pub fn descriptor_to_name(descriptor: &str) -> Result<String> {
    let dims = descriptor.bytes().take_while(|&b| b == b'[').count();
    let base = &descriptor[dims..];
    let mut name = match base {
        "V" => "void".to_owned(),
        "Z" => "boolean".to_owned(),
        "B" => "byte".to_owned(),
        "S" => "short".to_owned(),
        "C" => "char".to_owned(),
        "I" => "int".to_owned(),
        "J" => "long".to_owned(),
        "F" => "float".to_owned(),
        "D" => "double".to_owned(),
        _ => match base.strip_prefix('L').and_then(|s| s.strip_suffix(';')) {
            Some(inner) if !inner.is_empty() => inner.replace('/', "."),
            _ => return Err(DexError::BadDescriptor(descriptor.to_owned())),
        },
    };
    for _ in 0..dims {
        name.push_str("[]");
    }
    Ok(name)
}

/// Parses a single DEX buffer into one [`ClassRecord`] per class definition.
pub fn parse_dex(bytes: &[u8]) -> Result<Vec<ClassRecord>> {
    parse_dex_with(bytes, DexOptions::default())
}

pub fn parse_dex_with(bytes: &[u8], options: DexOptions) -> Result<Vec<ClassRecord>> {
    DexFile::parse(bytes, options)?.classes()
}
