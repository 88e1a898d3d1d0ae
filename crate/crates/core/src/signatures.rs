//! Tracker and ad-SDK signatures.
//!
//! A database is a list of [`TrackerSignature`]s plus two lookup structures
//! built at load time: a byte trie over code-signature prefixes and a label
//! trie over reversed network domains. Both are immutable after construction.
//!
//! File format (JSON, `schema_version` 1):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "trackers": [
//!     { "name": "AdColony", "vendor": "AdColony",
//!       "code_signatures": ["com/adcolony/", "com/jirbo/adcolony/"],
//!       "network_signatures": ["adcolony.com"],
//!       "family_certified": true }
//!   ]
//! }
//! ```
//!
//! A bare array of tracker objects is accepted too, and an empty file is an
//! empty database.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apk::DexClassIndex;

pub const SIGNATURE_SCHEMA_VERSION: u32 = 1;

/// The Families Ads Program self-certified SDKs.
pub const FAMILY_CERTIFIED_SDKS: [&str; 10] = [
    "AdColony",
    "AppLovin",
    "Chartboost",
    "Google AdMob",
    "InMobi",
    "ironSource",
    "Kidoz",
    "SuperAwesome",
    "Unity Ads",
    "Vungle",
];

const DEFAULT_DATABASE: &str = include_str!("../data/trackers.json");

#[derive(Error, Debug)]
pub enum SignatureError {
    #[error("duplicate tracker name {0:?}")]
    DuplicateName(String),

    #[error("tracker {0:?} has no usable code or network signature")]
    EmptySignature(String),

    #[error("unsupported signature schema version {0}")]
    SchemaVersion(u32),

    #[error("signature list: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{0}: {1}")]
    Io(std::path::PathBuf, #[source] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerSignature {
    pub name: String,
    #[serde(default)]
    pub code_signatures: Vec<String>,
    #[serde(default)]
    pub network_signatures: Vec<String>,
    #[serde(default)]
    pub family_certified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vendor: Option<String>,
}

impl TrackerSignature {
    /// Google and Facebook SDKs, as separated out by the report-time
    /// exclusion filter.
    pub fn is_google_or_facebook(&self) -> bool {
        let owner = self.vendor.as_deref().unwrap_or(&self.name).to_ascii_lowercase();
        ["google", "facebook", "meta"].iter().any(|v| owner == *v || owner.starts_with(&format!("{v} ")))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SignatureFile {
    Versioned { schema_version: u32, trackers: Vec<TrackerSignature> },
    Bare(Vec<TrackerSignature>),
}

/// How code signatures are compared against class paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The class path starts with the signature.
    #[default]
    Prefix,
    /// The signature occurs anywhere in the class path.
    Substring,
}

#[derive(Debug, Default, Clone)]
struct TrieNode<K: Ord> {
    children: BTreeMap<K, usize>,
    owners: Vec<usize>,
}

/// Prefix trie over keys made of `K` symbols; each terminal node lists the
/// signatures that end there.
#[derive(Debug, Clone)]
struct Trie<K: Ord> {
    nodes: Vec<TrieNode<K>>,
}

impl<K: Ord + Clone> Trie<K> {
    fn new() -> Self {
        Trie { nodes: vec![TrieNode { children: BTreeMap::new(), owners: Vec::new() }] }
    }

    fn insert(&mut self, key: impl IntoIterator<Item = K>, owner: usize) {
        let mut at = 0;
        for k in key {
            at = match self.nodes[at].children.get(&k) {
                Some(&next) => next,
                None => {
                    self.nodes.push(TrieNode { children: BTreeMap::new(), owners: Vec::new() });
                    let next = self.nodes.len() - 1;
                    self.nodes[at].children.insert(k, next);
                    next
                }
            };
        }
        if !self.nodes[at].owners.contains(&owner) {
            self.nodes[at].owners.push(owner);
        }
    }

    /// Owners of every inserted key that is a prefix of `key`.
    fn prefixes_of(&self, key: impl IntoIterator<Item = K>, mut found: impl FnMut(usize)) {
        let mut at = 0;
        self.nodes[0].owners.iter().for_each(|&o| found(o));
        for k in key {
            match self.nodes[at].children.get(&k) {
                Some(&next) => at = next,
                None => return,
            }
            self.nodes[at].owners.iter().for_each(|&o| found(o));
        }
    }
}

#[derive(Debug, Clone)]
pub struct SignatureDatabase {
    signatures: Vec<TrackerSignature>,
    by_name: HashMap<String, usize>,
    code_index: Trie<u8>,
    host_index: Trie<String>,
    substring: Option<(AhoCorasick, Vec<usize>)>,
}

/// Host part of a network signature, lowercased. Signatures printed with a
/// path (`kidoz.net/kidoz-sdk`) match on their host.
fn signature_host(signature: &str) -> String {
    let s = signature.trim().trim_start_matches("*.").trim_start_matches('.');
    s.split('/').next().unwrap_or("").trim_end_matches('.').to_ascii_lowercase()
}

/// Lowercases and strips a port or trailing dot.
pub fn normalize_host(host: &str) -> String {
    let host = host.trim();
    let host = host.rsplit_once('@').map_or(host, |(_, h)| h);
    let host = match host.strip_prefix('[') {
        Some(v6) => v6.split(']').next().unwrap_or(v6),
        None => match host.rsplit_once(':') {
            Some((h, port)) if !h.contains(':') && port.chars().all(|c| c.is_ascii_digit()) => h,
            _ => host,
        },
    };
    host.trim_end_matches('.').to_ascii_lowercase()
}

impl SignatureDatabase {
    pub fn new(mut signatures: Vec<TrackerSignature>) -> Result<Self, SignatureError> {
        let mut by_name = HashMap::new();
        let mut code_index = Trie::new();
        let mut host_index = Trie::new();

        for (i, sig) in signatures.iter_mut().enumerate() {
            sig.name = sig.name.trim().to_string();
            sig.code_signatures.retain(|s| !s.trim().is_empty());
            sig.network_signatures.retain(|s| !signature_host(s).is_empty());
            if sig.name.is_empty() || (sig.code_signatures.is_empty() && sig.network_signatures.is_empty()) {
                return Err(SignatureError::EmptySignature(sig.name.clone()));
            }
            if by_name.insert(sig.name.clone(), i).is_some() {
                return Err(SignatureError::DuplicateName(sig.name.clone()));
            }
            if FAMILY_CERTIFIED_SDKS.contains(&sig.name.as_str()) {
                sig.family_certified = true;
            }
            for code in &sig.code_signatures {
                code_index.insert(code.trim().bytes(), i);
            }
            for net in &sig.network_signatures {
                let host = signature_host(net);
                host_index.insert(host.rsplit('.').map(str::to_string), i);
            }
        }

        Ok(SignatureDatabase { signatures, by_name, code_index, host_index, substring: None })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new()).expect("empty database is valid")
    }

    /// The bundled list: the ten certified SDKs plus common non-certified
    /// trackers.
    pub fn bundled() -> Self {
        Self::from_json(DEFAULT_DATABASE).expect("bundled tracker list is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SignatureError> {
        if text.trim().is_empty() {
            return Ok(Self::empty());
        }
        let signatures = match serde_json::from_str::<SignatureFile>(text)? {
            SignatureFile::Versioned { schema_version, trackers } => {
                if schema_version != SIGNATURE_SCHEMA_VERSION {
                    return Err(SignatureError::SchemaVersion(schema_version));
                }
                trackers
            }
            SignatureFile::Bare(trackers) => trackers,
        };
        Self::new(signatures)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "schema_version": SIGNATURE_SCHEMA_VERSION,
            "trackers": self.signatures,
        }))
        .expect("signatures serialize")
    }

    /// Enables [`MatchMode::Substring`] lookups.
    pub fn with_substring_matching(mut self) -> Self {
        let mut patterns = Vec::new();
        let mut owners = Vec::new();
        for (i, sig) in self.signatures.iter().enumerate() {
            for code in &sig.code_signatures {
                patterns.push(code.trim().to_string());
                owners.push(i);
            }
        }
        let automaton = AhoCorasick::new(&patterns).expect("literal patterns build");
        self.substring = Some((automaton, owners));
        self
    }

    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    pub fn signatures(&self) -> &[TrackerSignature] {
        &self.signatures
    }

    pub fn get(&self, name: &str) -> Option<&TrackerSignature> {
        self.by_name.get(name).map(|&i| &self.signatures[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn certified(&self) -> BTreeSet<String> {
        self.names_where(|s| s.family_certified)
    }

    pub fn non_certified(&self) -> BTreeSet<String> {
        self.names_where(|s| !s.family_certified)
    }

    fn names_where(&self, pred: impl Fn(&TrackerSignature) -> bool) -> BTreeSet<String> {
        self.signatures.iter().filter(|s| pred(s)).map(|s| s.name.clone()).collect()
    }

    pub fn match_code(&self, index: &DexClassIndex) -> BTreeSet<String> {
        self.match_code_with(index, MatchMode::Prefix)
    }

    /// Substring mode needs [`Self::with_substring_matching`]; without it the
    /// lookup falls back to a linear scan.
    pub fn match_code_with(&self, index: &DexClassIndex, mode: MatchMode) -> BTreeSet<String> {
        let mut hit = vec![false; self.signatures.len()];
        for class in index.iter() {
            self.match_class(class, mode, |i| hit[i] = true);
        }
        self.names_of(&hit)
    }

    /// Trackers whose code signatures match a single class path.
    pub fn match_class_path(&self, class: &str, mode: MatchMode) -> BTreeSet<String> {
        let mut hit = vec![false; self.signatures.len()];
        self.match_class(class, mode, |i| hit[i] = true);
        self.names_of(&hit)
    }

    fn match_class(&self, class: &str, mode: MatchMode, mut found: impl FnMut(usize)) {
        match mode {
            MatchMode::Prefix => self.code_index.prefixes_of(class.bytes(), found),
            MatchMode::Substring => match &self.substring {
                Some((automaton, owners)) => {
                    for m in automaton.find_overlapping_iter(class) {
                        found(owners[m.pattern().as_usize()]);
                    }
                }
                None => {
                    for (i, sig) in self.signatures.iter().enumerate() {
                        if sig.code_signatures.iter().any(|c| class.contains(c.trim())) {
                            found(i);
                        }
                    }
                }
            },
        }
    }

    /// Label-aligned suffix match: `ads.adcolony.com` matches `adcolony.com`,
    /// `notadcolony.com` does not.
    pub fn match_host(&self, hostname: &str) -> BTreeSet<String> {
        let host = normalize_host(hostname);
        let mut hit = vec![false; self.signatures.len()];
        if !host.is_empty() {
            self.host_index.prefixes_of(host.rsplit('.').map(str::to_string), |i| hit[i] = true);
        }
        self.names_of(&hit)
    }

    fn names_of(&self, hit: &[bool]) -> BTreeSet<String> {
        hit.iter().zip(&self.signatures).filter(|(h, _)| **h).map(|(_, s)| s.name.clone()).collect()
    }
}

pub fn load_database(path: impl AsRef<Path>) -> Result<SignatureDatabase, SignatureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SignatureError::Io(path.to_path_buf(), e))?;
    SignatureDatabase::from_json(&text)
}
