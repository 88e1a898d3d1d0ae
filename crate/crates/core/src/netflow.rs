//! PII detection over decoded network flows.
//!
//! Flows are captured elsewhere (VPN interposition, TLS interception); this
//! module only reads the decoded request text, looks for the identifiers of
//! the test device and for well-known identifier shapes, and attributes each
//! destination to trackers through the signature database.
//!
//! Flow-log format (JSON, `schema_version` 1):
//!
//! ```json
//! { "schema_version": 1, "session": "run-0042",
//!   "flows": [ { "package": "com.example.kids", "host": "ads.adcolony.com",
//!                "timestamp": 1639000000, "payload_text": "...",
//!                "consent_given": false } ] }
//! ```
//!
//! `payload_text` defaults to empty and `consent_given` to `false`; the other
//! three fields are required.

use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;
use std::path::Path;
use std::sync::OnceLock;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::signatures::{normalize_host, SignatureDatabase};

pub const FLOW_SCHEMA_VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum FlowError {
    #[error("flow record {index}: missing or invalid field {field:?}")]
    MalformedRecord { index: usize, field: &'static str },

    #[error("unsupported flow-log schema version {0}")]
    SchemaVersion(u64),

    #[error("flow log: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{0}: {1}")]
    Io(std::path::PathBuf, #[source] std::io::Error),
}

#[derive(Error, Debug, PartialEq, Eq)]
pub enum ProfileError {
    #[error("device profile field {0} is empty")]
    Empty(&'static str),

    #[error("advertising_id {0:?} is not a UUID")]
    AdvertisingId(String),

    #[error("private_ip {0:?} is not an IP literal")]
    PrivateIp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Risk {
    Low,
    Mid,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionMode {
    ProfileValue,
    KeywordPattern,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PiiCategory {
    DeviceModel,
    Brand,
    BoardInfo,
    BuildNumber,
    MacAddress,
    PrivateIp,
    DeviceFingerprint,
    Location,
    Timezone,
    Imei,
    SerialNumber,
    AdvertisingId,
}

impl PiiCategory {
    pub const ALL: [PiiCategory; 12] = [
        PiiCategory::DeviceModel,
        PiiCategory::Brand,
        PiiCategory::BoardInfo,
        PiiCategory::BuildNumber,
        PiiCategory::MacAddress,
        PiiCategory::PrivateIp,
        PiiCategory::DeviceFingerprint,
        PiiCategory::Location,
        PiiCategory::Timezone,
        PiiCategory::Imei,
        PiiCategory::SerialNumber,
        PiiCategory::AdvertisingId,
    ];

    pub fn risk(self) -> Risk {
        use PiiCategory::*;
        match self {
            DeviceModel | Brand | BoardInfo | BuildNumber => Risk::Low,
            MacAddress | PrivateIp => Risk::Mid,
            DeviceFingerprint | Location | Timezone | Imei | SerialNumber | AdvertisingId => Risk::High,
        }
    }

    pub fn detection_mode(self) -> DetectionMode {
        use PiiCategory::*;
        match self {
            DeviceModel | Brand | BoardInfo | BuildNumber | Imei | SerialNumber | AdvertisingId => {
                DetectionMode::ProfileValue
            }
            MacAddress | PrivateIp | DeviceFingerprint | Location | Timezone => DetectionMode::Both,
        }
    }

    pub fn label(self) -> &'static str {
        use PiiCategory::*;
        match self {
            DeviceModel => "Device Model",
            Brand => "Brand",
            BoardInfo => "Board Info",
            BuildNumber => "Build number",
            MacAddress => "MAC Address",
            PrivateIp => "Private IP",
            DeviceFingerprint => "Device Fingerprint",
            Location => "Location",
            Timezone => "Timezone",
            Imei => "IMEI",
            SerialNumber => "Serial number",
            AdvertisingId => "Advertising ID",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationTokens {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latitude: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longitude: Option<String>,
}

/// Known identifiers of the capture device. Absent fields are not searched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceProfile {
    pub device_model: Option<String>,
    pub brand: Option<String>,
    pub board: Option<String>,
    pub build_number: Option<String>,
    pub mac_address: Option<String>,
    pub private_ip: Option<String>,
    pub device_fingerprint: Option<String>,
    pub location: LocationTokens,
    pub timezone: Option<String>,
    pub imei: Option<String>,
    pub serial: Option<String>,
    pub advertising_id: Option<String>,
}

fn is_uuid(s: &str) -> bool {
    let groups: Vec<&str> = s.split('-').collect();
    groups.len() == 5
        && groups.iter().zip([8, 4, 4, 4, 12]).all(|(g, n)| g.len() == n && g.chars().all(|c| c.is_ascii_hexdigit()))
}

/// Cuts a decimal coordinate to four fractional digits (`-34.92850` -> `-34.9285`).
fn coordinate_prefix(value: &str) -> String {
    let value = value.trim();
    match value.split_once('.') {
        Some((int, frac)) => format!("{int}.{}", &frac[..frac.len().min(4)]),
        None => value.to_string(),
    }
}

impl DeviceProfile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FlowError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FlowError::Io(path.to_path_buf(), e))?;
        Ok(Self::from_json(&text)?)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        for (field, value) in self.needles_by_field() {
            if value.trim().is_empty() {
                return Err(ProfileError::Empty(field));
            }
        }
        if let Some(id) = &self.advertising_id {
            if !is_uuid(id) {
                return Err(ProfileError::AdvertisingId(id.clone()));
            }
        }
        if let Some(ip) = &self.private_ip {
            if ip.parse::<IpAddr>().is_err() {
                return Err(ProfileError::PrivateIp(ip.clone()));
            }
        }
        Ok(())
    }

    fn needles_by_field(&self) -> Vec<(&'static str, &str)> {
        let loc = &self.location;
        [
            ("device_model", &self.device_model),
            ("brand", &self.brand),
            ("board", &self.board),
            ("build_number", &self.build_number),
            ("mac_address", &self.mac_address),
            ("private_ip", &self.private_ip),
            ("device_fingerprint", &self.device_fingerprint),
            ("location.country", &loc.country),
            ("location.city", &loc.city),
            ("location.latitude", &loc.latitude),
            ("location.longitude", &loc.longitude),
            ("timezone", &self.timezone),
            ("imei", &self.imei),
            ("serial", &self.serial),
            ("advertising_id", &self.advertising_id),
        ]
        .into_iter()
        .filter_map(|(f, v)| v.as_deref().map(|v| (f, v)))
        .collect()
    }

    /// Every (category, value) pair searched for in payloads.
    pub fn needles(&self) -> Vec<(PiiCategory, String)> {
        use PiiCategory::*;
        let loc = &self.location;
        let mut out = Vec::new();
        let mut push = |cat, v: &Option<String>| {
            if let Some(v) = v.as_deref().map(str::trim).filter(|v| !v.is_empty()) {
                out.push((cat, v.to_string()));
            }
        };
        push(DeviceModel, &self.device_model);
        push(Brand, &self.brand);
        push(BoardInfo, &self.board);
        push(BuildNumber, &self.build_number);
        push(MacAddress, &self.mac_address);
        push(PrivateIp, &self.private_ip);
        push(DeviceFingerprint, &self.device_fingerprint);
        push(Location, &loc.country);
        push(Location, &loc.city);
        push(Location, &loc.latitude.as_deref().map(coordinate_prefix));
        push(Location, &loc.longitude.as_deref().map(coordinate_prefix));
        push(Timezone, &self.timezone);
        push(Imei, &self.imei);
        push(SerialNumber, &self.serial);
        push(AdvertisingId, &self.advertising_id);
        out
    }
}

/// Identifier shapes matched regardless of the device profile.
pub fn keyword_patterns() -> &'static [(PiiCategory, Regex)] {
    static PATTERNS: OnceLock<Vec<(PiiCategory, Regex)>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        let seg = r"[A-Za-z0-9_.\-]+";
        [
            (PiiCategory::MacAddress, r"(?i)\b[0-9a-f]{2}(?::[0-9a-f]{2}){5}\b".to_string()),
            (
                PiiCategory::PrivateIp,
                r"\b(?:10\.\d{1,3}\.\d{1,3}\.\d{1,3}|192\.168\.\d{1,3}\.\d{1,3}|172\.(?:1[6-9]|2\d|3[01])\.\d{1,3}\.\d{1,3})\b"
                    .to_string(),
            ),
            (
                PiiCategory::DeviceFingerprint,
                format!(r"{seg}/{seg}/{seg}:\d+(?:\.\d+)*/{seg}/{seg}:(?:user|userdebug|eng)/[A-Za-z0-9_.,\-]+"),
            ),
            (PiiCategory::Location, r"\$(?:country|city)\b".to_string()),
            (
                PiiCategory::Timezone,
                r"\b(?:Africa|America|Antarctica|Asia|Atlantic|Australia|Europe|Indian|Pacific)/[A-Za-z_]+(?:/[A-Za-z_]+)?"
                    .to_string(),
            ),
        ]
        .into_iter()
        .map(|(c, p)| (c, Regex::new(&p).expect("static pattern")))
        .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRecord {
    #[serde(rename = "package")]
    pub app_package: String,
    #[serde(rename = "host")]
    pub destination_host: String,
    pub timestamp: i64,
    #[serde(default)]
    pub payload_text: String,
    #[serde(default)]
    pub consent_given: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakFinding {
    pub app_package: String,
    pub category: PiiCategory,
    pub risk: Risk,
    pub destination_host: String,
    pub timestamp: i64,
    pub attributed_trackers: BTreeSet<String>,
    pub consent_given: bool,
    pub matched_excerpt: String,
    /// Sent without consent at Mid risk or above.
    pub flagged: bool,
    /// Number of flows merged into this finding.
    pub occurrences: u32,
}

impl LeakFinding {
    pub fn is_potential_violation(&self) -> bool {
        !self.consent_given && self.risk >= Risk::Mid
    }
}

/// A device profile compiled for repeated scanning.
pub struct PiiDetector {
    needles: Option<(AhoCorasick, Vec<PiiCategory>)>,
}

impl PiiDetector {
    pub fn new(profile: &DeviceProfile) -> Self {
        let (cats, values): (Vec<_>, Vec<_>) = profile.needles().into_iter().unzip();
        let needles = (!values.is_empty()).then(|| {
            let automaton =
                AhoCorasickBuilder::new().ascii_case_insensitive(true).build(&values).expect("literal needles build");
            (automaton, cats)
        });
        PiiDetector { needles }
    }

    /// First occurrence per category, as byte ranges into `payload`.
    pub fn scan(&self, payload: &str) -> BTreeMap<PiiCategory, (usize, usize)> {
        let mut found: BTreeMap<PiiCategory, (usize, usize)> = BTreeMap::new();
        let mut keep = |cat, start, end| {
            let slot = found.entry(cat).or_insert((start, end));
            if start < slot.0 {
                *slot = (start, end);
            }
        };
        if let Some((automaton, cats)) = &self.needles {
            for m in automaton.find_overlapping_iter(payload) {
                keep(cats[m.pattern().as_usize()], m.start(), m.end());
            }
        }
        for (cat, re) in keyword_patterns() {
            if let Some(m) = re.find(payload) {
                keep(*cat, m.start(), m.end());
            }
        }
        found
    }

    pub fn detect(&self, flow: &FlowRecord) -> Vec<LeakFinding> {
        self.scan(&flow.payload_text)
            .into_iter()
            .map(|(category, (start, end))| LeakFinding {
                app_package: flow.app_package.clone(),
                category,
                risk: category.risk(),
                destination_host: normalize_host(&flow.destination_host),
                timestamp: flow.timestamp,
                attributed_trackers: BTreeSet::new(),
                consent_given: flow.consent_given,
                matched_excerpt: flow.payload_text[start..end].to_string(),
                flagged: false,
                occurrences: 1,
            })
            .collect()
    }
}

pub fn detect_pii(flow: &FlowRecord, profile: &DeviceProfile) -> Vec<LeakFinding> {
    PiiDetector::new(profile).detect(flow)
}

pub fn attribute_and_score(findings: Vec<LeakFinding>, db: &SignatureDatabase) -> Vec<LeakFinding> {
    findings
        .into_iter()
        .map(|mut f| {
            f.attributed_trackers = db.match_host(&f.destination_host);
            f.flagged = f.is_potential_violation();
            f
        })
        .collect()
}

/// Collapses findings sharing (app, category, destination). The merged
/// finding keeps the earliest excerpt and counts as consented only if every
/// merged flow was.
pub fn merge_findings(findings: Vec<LeakFinding>) -> Vec<LeakFinding> {
    let mut merged: BTreeMap<(String, PiiCategory, String), LeakFinding> = BTreeMap::new();
    for f in findings {
        let key = (f.app_package.clone(), f.category, f.destination_host.clone());
        match merged.get_mut(&key) {
            None => {
                merged.insert(key, f);
            }
            Some(m) => {
                m.occurrences += f.occurrences;
                m.consent_given &= f.consent_given;
                m.flagged |= f.flagged;
                m.attributed_trackers.extend(f.attributed_trackers.iter().cloned());
                if (f.timestamp, &f.matched_excerpt) < (m.timestamp, &m.matched_excerpt) {
                    m.timestamp = f.timestamp;
                    m.matched_excerpt = f.matched_excerpt;
                }
            }
        }
    }
    merged.into_values().collect()
}

/// Detection, attribution and merging over a whole capture.
pub fn audit_flows(flows: &[FlowRecord], profile: &DeviceProfile, db: &SignatureDatabase) -> Vec<LeakFinding> {
    use rayon::prelude::*;
    let detector = PiiDetector::new(profile);
    let raw: Vec<LeakFinding> = flows.par_iter().flat_map_iter(|f| detector.detect(f)).collect();
    merge_findings(attribute_and_score(raw, db))
}

fn record_from_value(index: usize, v: &Value) -> Result<FlowRecord, FlowError> {
    let bad = |field| FlowError::MalformedRecord { index, field };
    let text = |field: &'static str| -> Result<String, FlowError> {
        v.get(field)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .ok_or_else(|| bad(field))
    };
    let app_package = text("package")?;
    let destination_host = text("host")?;
    let timestamp = v.get("timestamp").and_then(Value::as_i64).ok_or_else(|| bad("timestamp"))?;
    let payload_text = match v.get("payload_text") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(bad("payload_text")),
    };
    let consent_given = match v.get("consent_given") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(bad("consent_given")),
    };
    Ok(FlowRecord { app_package, destination_host, timestamp, payload_text, consent_given })
}

/// Parses a flow log. Records come back ordered by timestamp (stable, so
/// per-app order is kept for equal timestamps).
pub fn parse_flows(text: &str) -> Result<Vec<FlowRecord>, FlowError> {
    let doc: Value = serde_json::from_str(text)?;
    let records = match &doc {
        Value::Array(items) => items.as_slice(),
        Value::Object(obj) => {
            if let Some(version) = obj.get("schema_version").and_then(Value::as_u64) {
                if version != FLOW_SCHEMA_VERSION as u64 {
                    return Err(FlowError::SchemaVersion(version));
                }
            }
            obj.get("flows")
                .and_then(Value::as_array)
                .map(Vec::as_slice)
                .ok_or(FlowError::MalformedRecord { index: 0, field: "flows" })?
        }
        _ => return Err(FlowError::MalformedRecord { index: 0, field: "flows" }),
    };
    let mut flows = records.iter().enumerate().map(|(i, v)| record_from_value(i, v)).collect::<Result<Vec<_>, _>>()?;
    flows.sort_by_key(|f| f.timestamp);
    Ok(flows)
}

pub fn ingest_flows(path: impl AsRef<Path>) -> Result<Vec<FlowRecord>, FlowError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| FlowError::Io(path.to_path_buf(), e))?;
    parse_flows(&text)
}

pub fn flows_to_json(flows: &[FlowRecord], session: Option<&str>) -> String {
    let mut doc = serde_json::json!({ "schema_version": FLOW_SCHEMA_VERSION, "flows": flows });
    if let Some(s) = session {
        doc["session"] = Value::from(s);
    }
    serde_json::to_string_pretty(&doc).expect("flows serialize")
}

/// Converts a HAR capture into flow records for one app. The payload is the
/// request URL followed by the request body, if any.
pub fn flows_from_har(text: &str, package: &str, consent_given: bool) -> Result<Vec<FlowRecord>, FlowError> {
    let doc: Value = serde_json::from_str(text)?;
    let entries = doc
        .pointer("/log/entries")
        .and_then(Value::as_array)
        .ok_or(FlowError::MalformedRecord { index: 0, field: "log.entries" })?;
    let mut flows = Vec::with_capacity(entries.len());
    for (index, e) in entries.iter().enumerate() {
        let url = e
            .pointer("/request/url")
            .and_then(Value::as_str)
            .ok_or(FlowError::MalformedRecord { index, field: "request.url" })?;
        let host = url.split_once("://").map_or(url, |(_, rest)| rest).split(['/', '?', '#']).next().unwrap_or("");
        if host.is_empty() {
            return Err(FlowError::MalformedRecord { index, field: "request.url" });
        }
        let timestamp = e
            .get("startedDateTime")
            .and_then(Value::as_str)
            .and_then(|s| chrono::DateTime::parse_from_rfc3339(s).ok())
            .map(|t| t.timestamp())
            .ok_or(FlowError::MalformedRecord { index, field: "startedDateTime" })?;
        let mut payload_text = url.to_string();
        if let Some(body) = e.pointer("/request/postData/text").and_then(Value::as_str) {
            payload_text.push('\n');
            payload_text.push_str(body);
        }
        flows.push(FlowRecord {
            app_package: package.to_string(),
            destination_host: normalize_host(host),
            timestamp,
            payload_text,
            consent_given,
        });
    }
    flows.sort_by_key(|f| f.timestamp);
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table_profile() -> DeviceProfile {
        DeviceProfile {
            device_model: Some("Redmi Note9 Pro".into()),
            brand: Some("xiaomi".into()),
            board: Some("miatoll".into()),
            build_number: Some("QQ3A.200905.001".into()),
            mac_address: Some("a4:50:46:12:34:56".into()),
            private_ip: Some("192.168.1.23".into()),
            device_fingerprint: Some("google/walleye/walleye:8.1.0/OPM1.171019.011/4448085:user/release-keys".into()),
            location: LocationTokens {
                country: Some("Australia".into()),
                city: Some("Adelaide".into()),
                latitude: Some("-34.928500".into()),
                longitude: Some("138.600700".into()),
            },
            timezone: Some("America/New_York".into()),
            imei: Some("866400053132507".into()),
            serial: Some("3a9eb795".into()),
            advertising_id: Some("7cba4b19-3ee3-4c14-9ec8-10ca1ad1abe1".into()),
        }
    }

    fn flow(payload: &str) -> FlowRecord {
        FlowRecord {
            app_package: "com.example.kids".into(),
            destination_host: "example.org".into(),
            timestamp: 0,
            payload_text: payload.into(),
            consent_given: false,
        }
    }

    #[test]
    fn risk_table() {
        use PiiCategory::*;
        let expected = [
            (DeviceModel, Risk::Low),
            (Brand, Risk::Low),
            (BoardInfo, Risk::Low),
            (BuildNumber, Risk::Low),
            (MacAddress, Risk::Mid),
            (PrivateIp, Risk::Mid),
            (DeviceFingerprint, Risk::High),
            (Location, Risk::High),
            (Timezone, Risk::High),
            (Imei, Risk::High),
            (SerialNumber, Risk::High),
            (AdvertisingId, Risk::High),
        ];
        assert_eq!(PiiCategory::ALL.len(), expected.len());
        for (cat, risk) in expected {
            assert_eq!(cat.risk(), risk, "{cat:?}");
        }
    }

    #[test]
    fn timezone_without_profile() {
        let f = detect_pii(&flow("tz=America/New_York&v=2"), &DeviceProfile::default());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].category, PiiCategory::Timezone);
        assert_eq!(f[0].risk, Risk::High);
        assert_eq!(f[0].matched_excerpt, "America/New_York");
    }

    #[test]
    fn advertising_id() {
        let f = detect_pii(&flow(r#"{"gaid":"7cba4b19-3ee3-4c14-9ec8-10ca1ad1abe1"}"#), &table_profile());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].category, PiiCategory::AdvertisingId);
        assert_eq!(f[0].risk, Risk::High);
    }

    #[test]
    fn upper_case_id_still_found() {
        let f = detect_pii(&flow("adid=7CBA4B19-3EE3-4C14-9EC8-10CA1AD1ABE1"), &table_profile());
        assert_eq!(f[0].category, PiiCategory::AdvertisingId);
        assert_eq!(f[0].matched_excerpt, "7CBA4B19-3EE3-4C14-9EC8-10CA1AD1ABE1");
    }

    #[test]
    fn empty_payload() {
        assert!(detect_pii(&flow(""), &table_profile()).is_empty());
    }

    #[test]
    fn location_forms() {
        let p = table_profile();
        for payload in [r#"{"$country":"x"}"#, "lat=-34.9285&lon=0", "city=Adelaide", "lon=138.60071"] {
            let f = detect_pii(&flow(payload), &p);
            assert_eq!(f.iter().map(|x| x.category).collect::<Vec<_>>(), [PiiCategory::Location], "{payload}");
        }
        // Four decimals must agree.
        assert!(detect_pii(&flow("lat=-34.9286"), &p).is_empty());
    }

    #[test]
    fn keyword_shapes() {
        let none = DeviceProfile::default();
        let cats = |s: &str| detect_pii(&flow(s), &none).into_iter().map(|f| f.category).collect::<Vec<_>>();
        assert_eq!(cats("mac=0a:1b:2c:3d:4e:5f;"), [PiiCategory::MacAddress]);
        assert_eq!(cats("ip=10.0.3.15"), [PiiCategory::PrivateIp]);
        assert_eq!(cats("ip=172.20.1.1"), [PiiCategory::PrivateIp]);
        assert!(cats("ip=172.32.1.1").is_empty());
        assert_eq!(
            cats("fp=samsung/beyond1ltexx/beyond1:12/SP1A.210812.016/G973FXXSGHWC1:user/release-keys&x=1"),
            [PiiCategory::DeviceFingerprint]
        );
    }

    #[test]
    fn excerpt_is_substring() {
        let f = detect_pii(&flow("model=REDMI NOTE9 PRO&brand=Xiaomi"), &table_profile());
        for x in &f {
            assert!("model=REDMI NOTE9 PRO&brand=Xiaomi".contains(&x.matched_excerpt));
        }
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn attribution() {
        let db = SignatureDatabase::bundled();
        let mut loc = flow(r#"{"$city":"Adelaide"}"#);
        loc.destination_host = "graph.facebook.com".into();
        let f = attribute_and_score(detect_pii(&loc, &table_profile()), &db);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].attributed_trackers.iter().collect::<Vec<_>>(), ["Facebook Analytics"]);
        assert!(f[0].flagged);

        let f = attribute_and_score(detect_pii(&flow("sn=3a9eb795"), &table_profile()), &db);
        assert!(f[0].attributed_trackers.is_empty());
        assert_eq!(f[0].category, PiiCategory::SerialNumber);
        assert!(f[0].flagged);

        let mut consented = flow("sn=3a9eb795");
        consented.consent_given = true;
        assert!(!attribute_and_score(detect_pii(&consented, &table_profile()), &db)[0].flagged);

        let f = attribute_and_score(detect_pii(&flow("brand=xiaomi"), &table_profile()), &db);
        assert!(!f[0].flagged, "Low risk is never flagged");
    }

    #[test]
    fn merging() {
        let db = SignatureDatabase::bundled();
        let mut a = flow("sn=3a9eb795");
        a.timestamp = 5;
        a.consent_given = true;
        let mut b = flow("serial=3a9eb795");
        b.timestamp = 2;
        let found: Vec<LeakFinding> = [a, b].iter().flat_map(|f| detect_pii(f, &table_profile())).collect();
        let merged = merge_findings(attribute_and_score(found, &db));
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].occurrences, 2);
        assert_eq!(merged[0].timestamp, 2);
        assert!(!merged[0].consent_given);
        assert!(merged[0].flagged);
    }

    #[test]
    fn profile_validation() {
        assert_eq!(table_profile().validate(), Ok(()));
        let mut p = table_profile();
        p.advertising_id = Some("nope".into());
        assert!(matches!(p.validate(), Err(ProfileError::AdvertisingId(_))));
        let mut p = table_profile();
        p.private_ip = Some("129.127.146.***".into());
        assert!(matches!(p.validate(), Err(ProfileError::PrivateIp(_))));
        let mut p = table_profile();
        p.brand = Some(" ".into());
        assert_eq!(p.validate(), Err(ProfileError::Empty("brand")));
    }

    #[test]
    fn ingest_three_records() {
        let text = r#"{"schema_version":1,"flows":[
            {"package":"a","host":"h1","timestamp":3,"payload_text":"x"},
            {"package":"b","host":"h2","timestamp":1,"payload_text":"y","consent_given":true},
            {"package":"a","host":"h3","timestamp":2}
        ]}"#;
        let flows = parse_flows(text).unwrap();
        assert_eq!(flows.len(), 3);
        assert_eq!(flows.iter().map(|f| f.timestamp).collect::<Vec<_>>(), [1, 2, 3]);
        assert!(flows[0].consent_given);
        assert!(!flows[1].consent_given);
        assert_eq!(flows[1].payload_text, "");
    }

    #[test]
    fn missing_destination() {
        let text = r#"[{"package":"a","host":"h","timestamp":1},{"package":"a","timestamp":2}]"#;
        assert!(matches!(parse_flows(text), Err(FlowError::MalformedRecord { index: 1, field: "host" })));
    }

    #[test]
    fn mixed_app_grouping() {
        let mut flows = Vec::new();
        for (pkg, n) in [("com.a", 4), ("com.b", 2), ("com.c", 7)] {
            for i in 0..n {
                flows.push(FlowRecord {
                    app_package: pkg.into(),
                    destination_host: "h".into(),
                    timestamp: 100 - i,
                    payload_text: String::new(),
                    consent_given: false,
                });
            }
        }
        let parsed = parse_flows(&flows_to_json(&flows, Some("s1"))).unwrap();
        let mut counts = BTreeMap::new();
        for f in &parsed {
            *counts.entry(f.app_package.as_str()).or_insert(0) += 1;
        }
        assert_eq!(counts, BTreeMap::from([("com.a", 4), ("com.b", 2), ("com.c", 7)]));
        for pkg in ["com.a", "com.b", "com.c"] {
            let ts: Vec<i64> = parsed.iter().filter(|f| f.app_package == pkg).map(|f| f.timestamp).collect();
            assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn har_conversion() {
        let har = r#"{"log":{"entries":[
            {"startedDateTime":"2021-12-01T10:00:05.000Z","request":{"url":"https://ads.adcolony.com/v1?tz=America/New_York","postData":{"text":"sn=3a9eb795"}}},
            {"startedDateTime":"2021-12-01T10:00:01.000Z","request":{"url":"http://Example.org:8080/x"}}
        ]}}"#;
        let flows = flows_from_har(har, "com.example.kids", false).unwrap();
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].destination_host, "example.org");
        assert_eq!(flows[1].destination_host, "ads.adcolony.com");
        assert!(flows[1].payload_text.ends_with("sn=3a9eb795"));
        let leaks = audit_flows(&flows, &table_profile(), &SignatureDatabase::bundled());
        assert_eq!(leaks.len(), 2);
        assert!(leaks.iter().all(|l| l.attributed_trackers.contains("AdColony")));
    }

    #[test]
    fn uuid_shape() {
        assert!(is_uuid("7cba4b19-3ee3-4c14-9ec8-10ca1ad1abe1"));
        assert!(!is_uuid("7cba4b19-3ee3-4c14-9ec8-10ca1ad1abe"));
        assert_eq!(coordinate_prefix("138.600700"), "138.6007");
        assert_eq!(coordinate_prefix("-34.9"), "-34.9");
    }
}
