//! Writers for synthetic inputs: binary manifests, DEX files, APK containers
//! and whole demo corpora.
//!
//! These encoders are written independently of the readers in
//! [`crate::apk`]; the test suites rely on that to check decoding by
//! round trip.

mod corpus;

use std::io::{Cursor, Write};

use zip::write::SimpleFileOptions;
use zip::CompressionMethod;

use crate::apk::ManifestInfo;

pub use corpus::{demo_profile, write_demo_corpus, CorpusApp, CorpusSpec, DemoCorpus};

pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

/// What a generated manifest declares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestSpec {
    pub package: String,
    pub permissions: Vec<String>,
    pub sdk: Option<(u32, u32)>,
}

impl ManifestSpec {
    pub fn new(package: &str) -> Self {
        ManifestSpec { package: package.to_string(), permissions: Vec::new(), sdk: None }
    }

    pub fn permission(mut self, permission: &str) -> Self {
        self.permissions.push(permission.to_string());
        self
    }

    pub fn sdk(mut self, min: u32, target: u32) -> Self {
        self.sdk = Some((min, target));
        self
    }

    /// What a correct decoder must return for this manifest.
    pub fn expected_info(&self) -> ManifestInfo {
        ManifestInfo {
            package_name: self.package.clone(),
            permissions: self.permissions.iter().cloned().collect(),
            min_sdk: self.sdk.map(|s| s.0),
            target_sdk: self.sdk.map(|s| s.1),
        }
    }

    pub fn to_xml(&self) -> String {
        let mut xml = format!(
            "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<manifest xmlns:android=\"{ANDROID_NS}\" package=\"{}\">\n",
            self.package
        );
        if let Some((min, target)) = self.sdk {
            xml += &format!("  <uses-sdk android:minSdkVersion=\"{min}\" android:targetSdkVersion=\"{target}\"/>\n");
        }
        for p in &self.permissions {
            xml += &format!("  <uses-permission android:name=\"{p}\"/>\n");
        }
        xml += "  <application android:label=\"app\"/>\n</manifest>\n";
        xml
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AxmlOptions {
    /// Write the string pool as UTF-8 instead of UTF-16.
    pub utf8: bool,
    /// Blank out `android:` attribute names so readers must fall back to the
    /// resource map, as some packers do.
    pub blank_android_names: bool,
}

pub fn encode_axml(spec: &ManifestSpec) -> Vec<u8> {
    encode_axml_with(spec, AxmlOptions::default())
}

pub fn encode_axml_with(spec: &ManifestSpec, opts: AxmlOptions) -> Vec<u8> {
    // Resource-mapped attribute names first: pool index == resource map index.
    let attr_ids = [0x0101_0003u32, 0x0101_020c, 0x0101_0270];
    let mut strings: Vec<String> = ["name", "minSdkVersion", "targetSdkVersion"]
        .iter()
        .map(|s| if opts.blank_android_names { String::new() } else { s.to_string() })
        .collect();
    let intern = |s: &str, strings: &mut Vec<String>| -> u32 {
        if let Some(i) = strings.iter().skip(3).position(|x| x == s) {
            return (i + 3) as u32;
        }
        strings.push(s.to_string());
        (strings.len() - 1) as u32
    };
    let (s_name, s_min, s_target) = (0u32, 1u32, 2u32);
    let s_prefix = intern("android", &mut strings);
    let s_uri = intern(ANDROID_NS, &mut strings);
    let s_manifest = intern("manifest", &mut strings);
    let s_package = intern("package", &mut strings);
    let s_package_value = intern(&spec.package, &mut strings);
    let s_uses_sdk = intern("uses-sdk", &mut strings);
    let s_uses_permission = intern("uses-permission", &mut strings);
    let s_application = intern("application", &mut strings);
    let perm_idx: Vec<u32> = spec.permissions.iter().map(|p| intern(p, &mut strings)).collect();

    let mut body = Vec::new();
    body.extend(string_pool(&strings, opts.utf8));

    let mut map = Vec::new();
    chunk_header(&mut map, 0x0180, 8, 8 + 4 * attr_ids.len() as u32);
    for id in attr_ids {
        map.extend(id.to_le_bytes());
    }
    body.extend(map);

    let mut line = 1;
    let node = |kind: u16, ext: &[u8], line: &mut u32| -> Vec<u8> {
        let mut c = Vec::new();
        chunk_header(&mut c, kind, 16, 16 + ext.len() as u32);
        c.extend(line.to_le_bytes());
        c.extend(u32::MAX.to_le_bytes());
        c.extend_from_slice(ext);
        *line += 1;
        c
    };
    let ns_ext = [s_prefix.to_le_bytes(), s_uri.to_le_bytes()].concat();
    body.extend(node(0x0100, &ns_ext, &mut line));

    let element = |name: u32, attrs: &[Vec<u8>]| -> Vec<u8> {
        let mut ext = Vec::new();
        ext.extend(u32::MAX.to_le_bytes());
        ext.extend(name.to_le_bytes());
        ext.extend(20u16.to_le_bytes());
        ext.extend(20u16.to_le_bytes());
        ext.extend((attrs.len() as u16).to_le_bytes());
        ext.extend([0u8; 6]);
        for a in attrs {
            ext.extend_from_slice(a);
        }
        ext
    };
    let end = |name: u32| [u32::MAX.to_le_bytes(), name.to_le_bytes()].concat();

    body.extend(node(
        0x0102,
        &element(s_manifest, &[attr(u32::MAX, s_package, Some(s_package_value), 0x03, s_package_value)]),
        &mut line,
    ));
    if let Some((min, target)) = spec.sdk {
        let attrs = [attr(s_uri, s_min, None, 0x10, min), attr(s_uri, s_target, None, 0x10, target)];
        body.extend(node(0x0102, &element(s_uses_sdk, &attrs), &mut line));
        body.extend(node(0x0103, &end(s_uses_sdk), &mut line));
    }
    for &p in &perm_idx {
        body.extend(node(0x0102, &element(s_uses_permission, &[attr(s_uri, s_name, Some(p), 0x03, p)]), &mut line));
        body.extend(node(0x0103, &end(s_uses_permission), &mut line));
    }
    body.extend(node(0x0102, &element(s_application, &[]), &mut line));
    body.extend(node(0x0103, &end(s_application), &mut line));
    body.extend(node(0x0103, &end(s_manifest), &mut line));
    body.extend(node(0x0101, &ns_ext, &mut line));

    let mut out = Vec::with_capacity(body.len() + 8);
    chunk_header(&mut out, 0x0003, 8, 8 + body.len() as u32);
    out.extend(body);
    out
}

fn chunk_header(out: &mut Vec<u8>, kind: u16, header_size: u16, size: u32) {
    out.extend(kind.to_le_bytes());
    out.extend(header_size.to_le_bytes());
    out.extend(size.to_le_bytes());
}

fn attr(ns: u32, name: u32, raw: Option<u32>, data_type: u8, data: u32) -> Vec<u8> {
    let mut a = Vec::with_capacity(20);
    a.extend(ns.to_le_bytes());
    a.extend(name.to_le_bytes());
    a.extend(raw.unwrap_or(u32::MAX).to_le_bytes());
    a.extend(8u16.to_le_bytes());
    a.push(0);
    a.push(data_type);
    a.extend(data.to_le_bytes());
    a
}

fn string_pool(strings: &[String], utf8: bool) -> Vec<u8> {
    let mut data = Vec::new();
    let mut offsets = Vec::with_capacity(strings.len());
    for s in strings {
        offsets.push(data.len() as u32);
        if utf8 {
            let n16 = s.encode_utf16().count();
            push_len8(&mut data, n16);
            push_len8(&mut data, s.len());
            data.extend_from_slice(s.as_bytes());
            data.push(0);
        } else {
            let units: Vec<u16> = s.encode_utf16().collect();
            if units.len() > 0x7FFF {
                data.extend((((units.len() >> 16) as u16) | 0x8000).to_le_bytes());
            }
            data.extend((units.len() as u16).to_le_bytes());
            for u in units {
                data.extend(u.to_le_bytes());
            }
            data.extend([0, 0]);
        }
    }
    while data.len() % 4 != 0 {
        data.push(0);
    }
    let header_size = 28u32;
    let strings_start = header_size + 4 * strings.len() as u32;
    let mut out = Vec::new();
    chunk_header(&mut out, 0x0001, header_size as u16, strings_start + data.len() as u32);
    out.extend((strings.len() as u32).to_le_bytes());
    out.extend(0u32.to_le_bytes());
    out.extend((if utf8 { 1u32 << 8 } else { 0 }).to_le_bytes());
    out.extend(strings_start.to_le_bytes());
    out.extend(0u32.to_le_bytes());
    for o in offsets {
        out.extend(o.to_le_bytes());
    }
    out.extend(data);
    out
}

fn push_len8(out: &mut Vec<u8>, n: usize) {
    if n > 0x7F {
        out.push(((n >> 8) as u8 & 0x7F) | 0x80);
    }
    out.push(n as u8);
}

/// Builds a minimal DEX file holding string and type tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DexBuilder {
    descriptors: Vec<String>,
    padding: usize,
}

impl DexBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a reference type, given as a full descriptor (`Lcom/a/B;`).
    pub fn class(self, descriptor: &str) -> Self {
        self.type_descriptor(descriptor)
    }

    /// Adds any type descriptor, including primitives and arrays.
    pub fn type_descriptor(mut self, descriptor: &str) -> Self {
        self.descriptors.push(descriptor.to_string());
        self
    }

    /// Appends `bytes` of incompressible filler after the tables, standing in
    /// for code and data sections.
    pub fn padding(mut self, bytes: usize) -> Self {
        self.padding = bytes;
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let mut strings: Vec<&str> = self.descriptors.iter().map(String::as_str).collect();
        strings.sort_unstable();
        strings.dedup();

        let n = strings.len();
        let string_ids_off = 0x70usize;
        let type_ids_off = string_ids_off + 4 * n;
        let data_off = type_ids_off + 4 * n;

        let mut data = Vec::new();
        let mut string_offsets = Vec::with_capacity(n);
        for s in &strings {
            string_offsets.push((data_off + data.len()) as u32);
            let units: Vec<u16> = s.encode_utf16().collect();
            push_uleb128(&mut data, units.len() as u32);
            for u in units {
                push_mutf8_unit(&mut data, u);
            }
            data.push(0);
        }
        let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ self.padding as u64;
        for _ in 0..self.padding {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            data.push(state as u8);
        }

        let file_size = data_off + data.len();
        let mut out = Vec::with_capacity(file_size);
        out.extend_from_slice(b"dex\n035\0");
        out.extend([0u8; 4]); // checksum, patched below
        out.extend([0u8; 20]); // signature
        out.extend((file_size as u32).to_le_bytes());
        out.extend(0x70u32.to_le_bytes());
        out.extend(0x1234_5678u32.to_le_bytes());
        out.extend([0u8; 12]); // link_size, link_off, map_off
        out.extend((n as u32).to_le_bytes());
        out.extend((if n > 0 { string_ids_off as u32 } else { 0 }).to_le_bytes());
        out.extend((n as u32).to_le_bytes());
        out.extend((if n > 0 { type_ids_off as u32 } else { 0 }).to_le_bytes());
        out.extend([0u8; 36]); // proto, field, method, class_defs (size/off each), data_size
        out.extend((data_off as u32).to_le_bytes());
        debug_assert_eq!(out.len(), 0x70);
        for off in &string_offsets {
            out.extend(off.to_le_bytes());
        }
        for i in 0..n as u32 {
            out.extend(i.to_le_bytes());
        }
        out.extend(data);

        let checksum = adler32(&out[12..]);
        out[8..12].copy_from_slice(&checksum.to_le_bytes());
        out
    }
}

fn push_uleb128(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn push_mutf8_unit(out: &mut Vec<u8>, u: u16) {
    match u {
        0x0001..=0x007F => out.push(u as u8),
        0x0000 | 0x0080..=0x07FF => {
            out.push(0xC0 | (u >> 6) as u8);
            out.push(0x80 | (u & 0x3F) as u8);
        }
        _ => {
            out.push(0xE0 | (u >> 12) as u8);
            out.push(0x80 | ((u >> 6) & 0x3F) as u8);
            out.push(0x80 | (u & 0x3F) as u8);
        }
    }
}

fn adler32(data: &[u8]) -> u32 {
    let (mut a, mut b) = (1u32, 0u32);
    for chunk in data.chunks(5552) {
        for &x in chunk {
            a += x as u32;
            b += a;
        }
        a %= 65521;
        b %= 65521;
    }
    (b << 16) | a
}

enum ManifestForm {
    Binary(ManifestSpec),
    Text(ManifestSpec),
    Absent,
}

/// Assembles an APK (ZIP) in memory.
pub struct ApkBuilder {
    manifest: ManifestForm,
    dex: Vec<Vec<u8>>,
    extra: Vec<(String, Vec<u8>)>,
    method: CompressionMethod,
}

impl ApkBuilder {
    pub fn new(manifest: ManifestSpec) -> Self {
        ApkBuilder {
            manifest: ManifestForm::Binary(manifest),
            dex: Vec::new(),
            extra: Vec::new(),
            method: CompressionMethod::Deflated,
        }
    }

    pub fn without_manifest() -> Self {
        ApkBuilder { manifest: ManifestForm::Absent, ..Self::new(ManifestSpec::new("")) }
    }

    /// Store the manifest as plain XML rather than binary XML.
    pub fn text_manifest(mut self) -> Self {
        if let ManifestForm::Binary(spec) = self.manifest {
            self.manifest = ManifestForm::Text(spec);
        }
        self
    }

    /// Adds the next `classesN.dex`.
    pub fn dex(mut self, dex: DexBuilder) -> Self {
        self.dex.push(dex.build());
        self
    }

    pub fn raw_entry(mut self, name: &str, bytes: Vec<u8>) -> Self {
        self.extra.push((name.to_string(), bytes));
        self
    }

    pub fn stored(mut self) -> Self {
        self.method = CompressionMethod::Stored;
        self
    }

    pub fn build(&self) -> Vec<u8> {
        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        let opts = SimpleFileOptions::default().compression_method(self.method);
        let mut put = |name: &str, bytes: &[u8]| {
            zip.start_file(name, opts).expect("in-memory zip");
            zip.write_all(bytes).expect("in-memory zip");
        };
        match &self.manifest {
            ManifestForm::Binary(spec) => put(crate::apk::MANIFEST_ENTRY, &encode_axml(spec)),
            ManifestForm::Text(spec) => put(crate::apk::MANIFEST_ENTRY, spec.to_xml().as_bytes()),
            ManifestForm::Absent => {}
        }
        for (i, dex) in self.dex.iter().enumerate() {
            let name = if i == 0 { "classes.dex".to_string() } else { format!("classes{}.dex", i + 1) };
            put(&name, dex);
        }
        for (name, bytes) in &self.extra {
            put(name, bytes);
        }
        put("resources.arsc", &[0u8; 16]);
        zip.finish().expect("in-memory zip").into_inner()
    }
}
