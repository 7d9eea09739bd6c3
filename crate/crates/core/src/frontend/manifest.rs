//! `AndroidManifest.xml` reader for the binary chunk format, with a
//! plaintext XML fallback used by hand-written fixtures.

use quick_xml::events::{BytesStart, Event};
use quick_xml::name::ResolveResult;
use quick_xml::{NsReader, XmlVersion};
use thiserror::Error;

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";
const ATTR_NAME_RESOURCE_ID: u32 = 0x0101_0003;
const NO_INDEX: u32 = 0xffff_ffff;

const RES_STRING_POOL_TYPE: u16 = 0x0001;
const RES_XML_TYPE: u16 = 0x0003;
const RES_XML_START_ELEMENT_TYPE: u16 = 0x0102;
const RES_XML_RESOURCE_MAP_TYPE: u16 = 0x0180;
const UTF8_FLAG: u32 = 0x100;
const TYPE_STRING: u8 = 0x03;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("bad chunk at offset {offset:#x}: {reason}")]
    BadChunk { offset: usize, reason: &'static str },
    #[error("<manifest> has no package attribute")]
    MissingPackageAttr,
    #[error("malformed XML: {0}")]
    Xml(String),
}

type Result<T> = std::result::Result<T, ManifestError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestInfo {
    pub package_name: String,
    /// Fully qualified activity class names in document order.
    pub activities: Vec<String>,
}

/// Parses a manifest, dispatching on the leading bytes.
pub fn parse_manifest(bytes: &[u8]) -> Result<ManifestInfo> {
    if bytes.len() >= 2 && u16::from_le_bytes([bytes[0], bytes[1]]) == RES_XML_TYPE {
        return parse_axml(bytes);
    }
    let text = bytes.strip_prefix(b"\xef\xbb\xbf").unwrap_or(bytes);
    match text.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'<') => parse_plain(text),
        _ => Err(ManifestError::BadChunk {
            offset: 0,
            reason: "neither binary XML nor text XML",
        }),
    }
}

/// Expands `.Foo` and bare `Foo` against the manifest package.
pub fn resolve_activity_name(package: &str, name: &str) -> String {
    if name.starts_with('.') {
        format!("{package}{name}")
    } else if !name.contains('.') {
        format!("{package}.{name}")
    } else {
        name.to_owned()
    }
}

fn finish(package: Option<String>, raw: Vec<String>) -> Result<ManifestInfo> {
    let package_name = package.ok_or(ManifestError::MissingPackageAttr)?;
    let activities = raw
        .iter()
        .map(|n| resolve_activity_name(&package_name, n))
        .collect();
    Ok(ManifestInfo {
        package_name,
        activities,
    })
}

fn parse_plain(text: &[u8]) -> Result<ManifestInfo> {
    let text = std::str::from_utf8(text).map_err(|e| ManifestError::Xml(e.to_string()))?;
    let mut reader = NsReader::from_str(text);
    let mut package = None;
    let mut activities = Vec::new();
    loop {
        match reader.read_event().map_err(|e| ManifestError::Xml(e.to_string()))? {
            Event::Start(e) | Event::Empty(e) => match e.local_name().into_inner() {
                "manifest" => package = plain_attr(&reader, &e, None, "package")?,
                "activity" => {
                    if let Some(name) = plain_attr(&reader, &e, Some(ANDROID_NS), "name")? {
                        activities.push(name);
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    finish(package, activities)
}

fn plain_attr(
    reader: &NsReader<&[u8]>,
    element: &BytesStart<'_>,
    namespace: Option<&str>,
    local: &str,
) -> Result<Option<String>> {
    for attr in element.attributes() {
        let attr = attr.map_err(|e| ManifestError::Xml(e.to_string()))?;
        let (ns, name) = reader.resolver().resolve_attribute(attr.key);
        if name.into_inner() != local {
            continue;
        }
        let ns_matches = match (&ns, namespace) {
            (ResolveResult::Bound(bound), Some(want)) => bound.into_inner() == want,
            (ResolveResult::Unbound, None) => true,
            _ => false,
        };
        if ns_matches {
            let value = attr
                .normalized_value(XmlVersion::default())
                .map_err(|e| ManifestError::Xml(e.to_string()))?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

struct Chunk {
    kind: u16,
    header_size: usize,
    start: usize,
    end: usize,
}

fn chunk_at(data: &[u8], at: usize, limit: usize) -> Result<Chunk> {
    let bad = |reason| ManifestError::BadChunk { offset: at, reason };
    if at + 8 > limit {
        return Err(bad("chunk header past end"));
    }
    let kind = u16le(data, at);
    let header_size = u16le(data, at + 2) as usize;
    let size = u32le(data, at + 4) as usize;
    if header_size < 8 || size < header_size {
        return Err(bad("inconsistent chunk sizes"));
    }
    let end = at.checked_add(size).filter(|&e| e <= limit).ok_or_else(|| bad("chunk exceeds parent"))?;
    Ok(Chunk {
        kind,
        header_size,
        start: at,
        end,
    })
}

fn parse_axml(data: &[u8]) -> Result<ManifestInfo> {
    let root = chunk_at(data, 0, data.len())?;
    if root.kind != RES_XML_TYPE {
        return Err(ManifestError::BadChunk {
            offset: 0,
            reason: "root chunk is not RES_XML_TYPE",
        });
    }
    let mut strings: Vec<String> = Vec::new();
    let mut resource_ids: Vec<u32> = Vec::new();
    let mut package = None;
    let mut activities = Vec::new();

    let mut at = root.start + root.header_size;
    while at < root.end {
        let chunk = chunk_at(data, at, root.end)?;
        match chunk.kind {
            RES_STRING_POOL_TYPE => strings = read_string_pool(data, &chunk)?,
            RES_XML_RESOURCE_MAP_TYPE => {
                resource_ids = data[chunk.start + chunk.header_size..chunk.end]
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
            }
            RES_XML_START_ELEMENT_TYPE => {
                let element = read_start_element(data, &chunk, &strings, &resource_ids)?;
                match element.name.as_str() {
                    "manifest" => {
                        package = element
                            .attrs
                            .iter()
                            .find(|a| a.name == "package" && a.namespace.is_none())
                            .and_then(|a| a.value.clone());
                    }
                    "activity" => {
                        let name = element.attrs.iter().find(|a| {
                            a.resource_id == Some(ATTR_NAME_RESOURCE_ID)
                                || (a.name == "name" && a.namespace.as_deref() == Some(ANDROID_NS))
                        });
                        if let Some(value) = name.and_then(|a| a.value.clone()) {
                            activities.push(value);
                        }
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        at = chunk.end;
    }
    finish(package, activities)
}

struct AxmlAttr {
    namespace: Option<String>,
    name: String,
    resource_id: Option<u32>,
    value: Option<String>,
}

struct AxmlElement {
    name: String,
    attrs: Vec<AxmlAttr>,
}

fn read_start_element(
    data: &[u8],
    chunk: &Chunk,
    strings: &[String],
    resource_ids: &[u32],
) -> Result<AxmlElement> {
    let bad = |reason| ManifestError::BadChunk {
        offset: chunk.start,
        reason,
    };
    let ext = chunk.start + chunk.header_size;
    if ext + 20 > chunk.end {
        return Err(bad("start element too short"));
    }
    let lookup = |idx: u32| -> Result<Option<String>> {
        if idx == NO_INDEX {
            return Ok(None);
        }
        strings
            .get(idx as usize)
            .cloned()
            .map(Some)
            .ok_or(bad("string index out of range"))
    };
    let name = lookup(u32le(data, ext + 4))?.unwrap_or_default();
    let attr_start = u16le(data, ext + 8) as usize;
    let attr_size = u16le(data, ext + 10) as usize;
    let attr_count = u16le(data, ext + 12) as usize;
    if attr_count > 0 && attr_size < 20 {
        return Err(bad("attribute record too small"));
    }
    let first = ext + attr_start;
    if first + attr_count * attr_size > chunk.end {
        return Err(bad("attributes exceed chunk"));
    }
    let mut attrs = Vec::with_capacity(attr_count);
    for i in 0..attr_count {
        let a = first + i * attr_size;
        let name_idx = u32le(data, a + 4);
        let raw = u32le(data, a + 8);
        let data_type = data[a + 15];
        let typed = u32le(data, a + 16);
        let value = if raw != NO_INDEX {
            lookup(raw)?
        } else if data_type == TYPE_STRING {
            lookup(typed)?
        } else {
            None
        };
        attrs.push(AxmlAttr {
            namespace: lookup(u32le(data, a))?,
            name: lookup(name_idx)?.unwrap_or_default(),
            resource_id: resource_ids.get(name_idx as usize).copied(),
            value,
        });
    }
    Ok(AxmlElement { name, attrs })
}

fn read_string_pool(data: &[u8], chunk: &Chunk) -> Result<Vec<String>> {
    let bad = |reason| ManifestError::BadChunk {
        offset: chunk.start,
        reason,
    };
    if chunk.header_size < 28 {
        return Err(bad("string pool header too small"));
    }
    let count = u32le(data, chunk.start + 8) as usize;
    let flags = u32le(data, chunk.start + 16);
    let strings_start = u32le(data, chunk.start + 20) as usize;
    let offsets = chunk.start + chunk.header_size;
    if count.checked_mul(4).and_then(|n| n.checked_add(offsets)).is_none_or(|e| e > chunk.end) {
        return Err(bad("string offsets exceed chunk"));
    }
    let base = chunk.start.checked_add(strings_start).ok_or(bad("string data offset"))?;
    let utf8 = flags & UTF8_FLAG != 0;
    (0..count)
        .map(|i| {
            let at = base
                .checked_add(u32le(data, offsets + i * 4) as usize)
                .filter(|&a| a < chunk.end)
                .ok_or(bad("string offset out of range"))?;
            if utf8 {
                read_utf8_string(data, at, chunk.end)
            } else {
                read_utf16_string(data, at, chunk.end)
            }
            .ok_or(bad("string data out of range"))
        })
        .collect()
}

fn read_utf8_string(data: &[u8], mut at: usize, end: usize) -> Option<String> {
    let len8 = |at: &mut usize| -> Option<usize> {
        let b0 = *data.get(*at).filter(|_| *at < end)? as usize;
        *at += 1;
        if b0 & 0x80 != 0 {
            let b1 = *data.get(*at).filter(|_| *at < end)? as usize;
            *at += 1;
            Some((b0 & 0x7f) << 8 | b1)
        } else {
            Some(b0)
        }
    };
    let _chars = len8(&mut at)?;
    let bytes = len8(&mut at)?;
    let slice = data.get(at..at.checked_add(bytes)?).filter(|_| at + bytes <= end)?;
    Some(String::from_utf8_lossy(slice).into_owned())
}

fn read_utf16_string(data: &[u8], mut at: usize, end: usize) -> Option<String> {
    let unit = |at: usize| -> Option<u16> {
        (at + 2 <= end).then(|| u16le(data, at))
    };
    let mut len = unit(at)? as usize;
    at += 2;
    if len & 0x8000 != 0 {
        len = (len & 0x7fff) << 16 | unit(at)? as usize;
        at += 2;
    }
    if at.checked_add(len.checked_mul(2)?)? > end {
        return None;
    }
    let units: Vec<u16> = (0..len).map(|i| u16le(data, at + i * 2)).collect();
    Some(String::from_utf16_lossy(&units))
}

fn u16le(data: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([data[at], data[at + 1]])
}

fn u32le(data: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]])
}
