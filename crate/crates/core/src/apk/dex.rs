//! Class-descriptor extraction from DEX files.
//!
//! Only the header, `string_ids` and `type_ids` tables are read. Every type a
//! DEX file defines or references has an entry in `type_ids`, so this gives
//! the full set of class names without decoding any bytecode.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEX_MAGIC_PREFIX: &[u8; 4] = b"dex\n";
const HEADER_SIZE: usize = 0x70;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum DexError {
    #[error("blob {blob}: bad DEX magic")]
    BadMagic { blob: usize },

    #[error("blob {blob}: {what}")]
    Malformed { blob: usize, what: String },
}

/// Normalised class paths (`com/adcolony/Foo`) across all DEX blobs of an app.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DexClassIndex {
    pub class_paths: BTreeSet<String>,
}

impl DexClassIndex {
    pub fn len(&self) -> usize {
        self.class_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_paths.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.class_paths.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for DexClassIndex {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        DexClassIndex { class_paths: iter.into_iter().map(Into::into).collect() }
    }
}

/// `Lcom/a/B;` becomes `com/a/B`. Primitive and array descriptors yield `None`.
pub fn normalize_descriptor(descriptor: &str) -> Option<&str> {
    descriptor.strip_prefix('L')?.strip_suffix(';').filter(|s| !s.is_empty())
}

pub fn index_classes<B: AsRef<[u8]>>(dex_blobs: &[B]) -> Result<DexClassIndex, DexError> {
    let mut index = DexClassIndex::default();
    for (blob, bytes) in dex_blobs.iter().enumerate() {
        read_descriptors(blob, bytes.as_ref(), &mut index.class_paths)?;
    }
    Ok(index)
}

fn read_descriptors(blob: usize, data: &[u8], out: &mut BTreeSet<String>) -> Result<(), DexError> {
    let malformed = |what: String| DexError::Malformed { blob, what };
    let u32_at = |at: usize| -> Result<usize, DexError> {
        data.get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| malformed(format!("read at {at:#x} past end of file")))
    };

    if data.len() < 8 || &data[..4] != DEX_MAGIC_PREFIX || !data[4..7].iter().all(u8::is_ascii_digit) || data[7] != 0 {
        return Err(DexError::BadMagic { blob });
    }
    if data.len() < HEADER_SIZE {
        return Err(malformed(format!("file is {} bytes, shorter than the header", data.len())));
    }

    let string_ids_size = u32_at(56)?;
    let string_ids_off = u32_at(60)?;
    let type_ids_size = u32_at(64)?;
    let type_ids_off = u32_at(68)?;

    let table_end = |off: usize, count: usize, name: &str| -> Result<(), DexError> {
        match count.checked_mul(4).and_then(|n| n.checked_add(off)) {
            Some(end) if end <= data.len() => Ok(()),
            _ => Err(malformed(format!("{name} table ({count} entries at {off:#x}) extends beyond file"))),
        }
    };
    table_end(string_ids_off, string_ids_size, "string_ids")?;
    table_end(type_ids_off, type_ids_size, "type_ids")?;

    for t in 0..type_ids_size {
        let string_idx = u32_at(type_ids_off + 4 * t)?;
        if string_idx >= string_ids_size {
            return Err(malformed(format!("type {t} refers to string {string_idx} of {string_ids_size}")));
        }
        let data_off = u32_at(string_ids_off + 4 * string_idx)?;
        let (_, payload) =
            read_uleb128(data, data_off).ok_or_else(|| malformed(format!("string {string_idx}: bad length")))?;
        // Reference types only; skips primitives and arrays without decoding.
        if data.get(payload) != Some(&b'L') {
            continue;
        }
        let descriptor =
            decode_mutf8(data, payload).ok_or_else(|| malformed(format!("string {string_idx}: unterminated")))?;
        if let Some(path) = normalize_descriptor(&descriptor) {
            if !out.contains(path) {
                out.insert(path.to_string());
            }
        }
    }
    Ok(())
}

/// Returns the value and the offset just past it.
fn read_uleb128(data: &[u8], mut at: usize) -> Option<(u32, usize)> {
    let mut value = 0u32;
    for shift in (0..35).step_by(7) {
        let byte = *data.get(at)?;
        at += 1;
        value |= ((byte & 0x7F) as u32) << shift;
        if byte & 0x80 == 0 {
            return Some((value, at));
        }
    }
    None
}

/// Modified UTF-8 up to the terminating NUL.
fn decode_mutf8(data: &[u8], start: usize) -> Option<String> {
    let rest = data.get(start..)?;
    let end = rest.iter().position(|&b| b == 0)?;
    let bytes = &rest[..end];
    if bytes.is_ascii() {
        return Some(String::from_utf8_lossy(bytes).into_owned());
    }

    let mut units = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b0 = bytes[i] as u16;
        let (unit, width) = if b0 < 0x80 {
            (b0, 1)
        } else if b0 & 0xE0 == 0xC0 && i + 1 < bytes.len() {
            (((b0 & 0x1F) << 6) | (bytes[i + 1] as u16 & 0x3F), 2)
        } else if b0 & 0xF0 == 0xE0 && i + 2 < bytes.len() {
            (((b0 & 0x0F) << 12) | ((bytes[i + 1] as u16 & 0x3F) << 6) | (bytes[i + 2] as u16 & 0x3F), 3)
        } else {
            (0xFFFD, 1)
        };
        units.push(unit);
        i += width;
    }
    Some(String::from_utf16_lossy(&units))
}
