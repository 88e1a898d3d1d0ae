//! `AndroidManifest.xml` decoding.
//!
//! Inside an APK the manifest is Android binary XML: a `RES_XML_TYPE` file
//! chunk holding a string pool, an optional resource map and a flat stream of
//! namespace/element/CDATA chunks. Only what is needed to recover the package
//! name, the requested permissions and the SDK levels is interpreted; all
//! other chunks are skipped by size. Hand-written text manifests are accepted
//! as well.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const RES_STRING_POOL_TYPE: u16 = 0x0001;
const RES_XML_TYPE: u16 = 0x0003;
const RES_XML_START_ELEMENT_TYPE: u16 = 0x0102;
const RES_XML_RESOURCE_MAP_TYPE: u16 = 0x0180;

const UTF8_FLAG: u32 = 1 << 8;
const NO_INDEX: u32 = 0xFFFF_FFFF;

const TYPE_STRING: u8 = 0x03;
const TYPE_INT_DEC: u8 = 0x10;
const TYPE_INT_HEX: u8 = 0x11;

// android:* attribute resource ids, used when the pool string is blank.
const ATTR_NAME: u32 = 0x0101_0003;
const ATTR_MIN_SDK_VERSION: u32 = 0x0101_020c;
const ATTR_TARGET_SDK_VERSION: u32 = 0x0101_0270;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("malformed binary XML: {0}")]
    MalformedAxml(String),

    #[error("malformed text manifest: {0}")]
    MalformedXml(String),

    #[error("manifest has no package attribute")]
    MissingPackage,
}

fn malformed(msg: impl Into<String>) -> ManifestError {
    ManifestError::MalformedAxml(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestInfo {
    pub package_name: String,
    pub permissions: BTreeSet<String>,
    pub min_sdk: Option<u32>,
    pub target_sdk: Option<u32>,
}

pub fn decode_manifest(bytes: &[u8]) -> Result<ManifestInfo, ManifestError> {
    if bytes.len() >= 2 && u16::from_le_bytes([bytes[0], bytes[1]]) == RES_XML_TYPE {
        return decode_axml(bytes);
    }
    let text = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    match text.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'<') => decode_text(text),
        _ => Err(malformed("not a binary XML file chunk")),
    }
}

/// Bounds-checked little-endian reads over a byte slice.
#[derive(Clone, Copy)]
struct Bytes<'a>(&'a [u8]);

impl<'a> Bytes<'a> {
    fn slice(&self, start: usize, len: usize) -> Result<&'a [u8], ManifestError> {
        start
            .checked_add(len)
            .and_then(|end| self.0.get(start..end))
            .ok_or_else(|| malformed(format!("read of {len} bytes at {start:#x} past end of data")))
    }

    fn u8(&self, at: usize) -> Result<u8, ManifestError> {
        Ok(self.slice(at, 1)?[0])
    }

    fn u16(&self, at: usize) -> Result<u16, ManifestError> {
        let b = self.slice(at, 2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&self, at: usize) -> Result<u32, ManifestError> {
        let b = self.slice(at, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct ChunkHeader {
    kind: u16,
    header_size: usize,
    size: usize,
}

fn chunk_header(data: Bytes<'_>, at: usize) -> Result<ChunkHeader, ManifestError> {
    let header =
        ChunkHeader { kind: data.u16(at)?, header_size: data.u16(at + 2)? as usize, size: data.u32(at + 4)? as usize };
    if header.header_size < 8 || header.size < header.header_size {
        return Err(malformed(format!(
            "chunk {:#06x} at {at:#x} has header size {} and size {}",
            header.kind, header.header_size, header.size
        )));
    }
    // Truncated chunk.
    data.slice(at, header.size)?;
    Ok(header)
}

struct StringPool<'a> {
    data: Bytes<'a>,
    utf8: bool,
    offsets_at: usize,
    count: usize,
    strings_at: usize,
}

impl<'a> StringPool<'a> {
    fn parse(data: Bytes<'a>, at: usize, header: &ChunkHeader) -> Result<Self, ManifestError> {
        let count = data.u32(at + 8)? as usize;
        let flags = data.u32(at + 16)?;
        let strings_start = data.u32(at + 20)? as usize;
        let chunk = Bytes(data.slice(at, header.size)?);
        let offsets_at = header.header_size;
        chunk.slice(offsets_at, count.checked_mul(4).ok_or_else(|| malformed("string count overflow"))?)?;
        if strings_start > header.size {
            return Err(malformed("string data starts past end of pool"));
        }
        Ok(StringPool { data: chunk, utf8: flags & UTF8_FLAG != 0, offsets_at, count, strings_at: strings_start })
    }

    fn get(&self, index: u32) -> Result<String, ManifestError> {
        let i = index as usize;
        if i >= self.count {
            return Err(malformed(format!("string index {index} out of range (pool has {})", self.count)));
        }
        let offset = self.data.u32(self.offsets_at + 4 * i)? as usize;
        let at = self.strings_at.checked_add(offset).ok_or_else(|| malformed("string offset overflow"))?;
        if self.utf8 {
            self.utf8_at(at)
        } else {
            self.utf16_at(at)
        }
    }

    fn utf8_at(&self, at: usize) -> Result<String, ManifestError> {
        let len_width = |pos: usize| -> Result<(usize, usize), ManifestError> {
            let first = self.data.u8(pos)? as usize;
            if first & 0x80 != 0 {
                let second = self.data.u8(pos + 1)? as usize;
                Ok((((first & 0x7F) << 8) | second, 2))
            } else {
                Ok((first, 1))
            }
        };
        let (_, w16) = len_width(at)?;
        let (len, w8) = len_width(at + w16)?;
        let raw = self.data.slice(at + w16 + w8, len)?;
        Ok(String::from_utf8_lossy(raw).into_owned())
    }

    fn utf16_at(&self, at: usize) -> Result<String, ManifestError> {
        let first = self.data.u16(at)? as usize;
        let (len, start) = if first & 0x8000 != 0 {
            let second = self.data.u16(at + 2)? as usize;
            (((first & 0x7FFF) << 16) | second, at + 4)
        } else {
            (first, at + 2)
        };
        let raw = self.data.slice(start, len.checked_mul(2).ok_or_else(|| malformed("string length overflow"))?)?;
        let units: Vec<u16> = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        Ok(String::from_utf16_lossy(&units))
    }
}

enum AttrValue {
    Text(String),
    Int(u32),
    Other,
}

fn decode_axml(bytes: &[u8]) -> Result<ManifestInfo, ManifestError> {
    let data = Bytes(bytes);
    let file = chunk_header(data, 0)?;
    if file.kind != RES_XML_TYPE {
        return Err(malformed("not a binary XML file chunk"));
    }

    let mut pool: Option<StringPool<'_>> = None;
    let mut resource_ids: Vec<u32> = Vec::new();
    let mut package = None;
    let mut info = ManifestInfo::default();

    let mut at = file.header_size;
    while at < file.size {
        let header = chunk_header(data, at)?;
        match header.kind {
            RES_STRING_POOL_TYPE if pool.is_none() => {
                pool = Some(StringPool::parse(data, at, &header)?);
            }
            RES_XML_RESOURCE_MAP_TYPE => {
                let n = (header.size - header.header_size) / 4;
                resource_ids = (0..n).map(|i| data.u32(at + header.header_size + 4 * i)).collect::<Result<_, _>>()?;
            }
            RES_XML_START_ELEMENT_TYPE => {
                let pool = pool.as_ref().ok_or_else(|| malformed("element before string pool"))?;
                let ext = at + header.header_size;
                let name = pool.get(data.u32(ext + 4)?)?;
                let attr_start = data.u16(ext + 8)? as usize;
                let attr_size = data.u16(ext + 10)? as usize;
                let attr_count = data.u16(ext + 12)? as usize;
                if attr_count > 0 && attr_size < 20 {
                    return Err(malformed(format!("attribute size {attr_size} too small")));
                }

                for i in 0..attr_count {
                    let a = ext + attr_start + i * attr_size;
                    if a + 20 > at + header.size {
                        return Err(malformed("attribute runs past its element chunk"));
                    }
                    let name_idx = data.u32(a + 4)?;
                    let raw_value = data.u32(a + 8)?;
                    let data_type = data.u8(a + 15)?;
                    let value_data = data.u32(a + 16)?;

                    let attr_name = attribute_name(pool, &resource_ids, name_idx)?;
                    let value = if raw_value != NO_INDEX {
                        AttrValue::Text(pool.get(raw_value)?)
                    } else {
                        match data_type {
                            TYPE_STRING => AttrValue::Text(pool.get(value_data)?),
                            TYPE_INT_DEC | TYPE_INT_HEX => AttrValue::Int(value_data),
                            _ => AttrValue::Other,
                        }
                    };
                    apply_attribute(&mut info, &mut package, &name, &attr_name, value);
                }
            }
            _ => {}
        }
        at += header.size;
    }

    info.package_name = package.filter(|p| !p.is_empty()).ok_or(ManifestError::MissingPackage)?;
    Ok(info)
}

fn attribute_name(pool: &StringPool<'_>, resource_ids: &[u32], index: u32) -> Result<String, ManifestError> {
    let name = pool.get(index)?;
    if !name.is_empty() {
        return Ok(name);
    }
    let known = match resource_ids.get(index as usize) {
        Some(&ATTR_NAME) => "name",
        Some(&ATTR_MIN_SDK_VERSION) => "minSdkVersion",
        Some(&ATTR_TARGET_SDK_VERSION) => "targetSdkVersion",
        _ => "",
    };
    Ok(known.to_string())
}

fn apply_attribute(info: &mut ManifestInfo, package: &mut Option<String>, element: &str, attr: &str, value: AttrValue) {
    let as_int = |v: AttrValue| match v {
        AttrValue::Int(n) => Some(n),
        AttrValue::Text(s) => s.trim().parse().ok(),
        AttrValue::Other => None,
    };
    match (element, attr) {
        ("manifest", "package") => {
            if let AttrValue::Text(s) = value {
                *package = Some(s);
            }
        }
        ("uses-permission", "name") => {
            if let AttrValue::Text(s) = value {
                info.permissions.insert(s);
            }
        }
        ("uses-sdk", "minSdkVersion") => info.min_sdk = as_int(value),
        ("uses-sdk", "targetSdkVersion") => info.target_sdk = as_int(value),
        _ => {}
    }
}

fn decode_text(bytes: &[u8]) -> Result<ManifestInfo, ManifestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ManifestError::MalformedXml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| ManifestError::MalformedXml(e.to_string()))?;

    let mut info = ManifestInfo::default();
    let mut package = None;
    for node in doc.descendants().filter(|n| n.is_element()) {
        let element = node.tag_name().name();
        for attr in node.attributes() {
            apply_attribute(&mut info, &mut package, element, attr.name(), AttrValue::Text(attr.value().to_string()));
        }
    }
    info.package_name = package.filter(|p| !p.is_empty()).ok_or(ManifestError::MissingPackage)?;
    Ok(info)
}
