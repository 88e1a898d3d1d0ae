//! Families-policy checks over one app's static facts.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apk::ManifestInfo;
use crate::signatures::SignatureDatabase;

pub const ACCESS_COARSE_LOCATION: &str = "android.permission.ACCESS_COARSE_LOCATION";
pub const ACCESS_FINE_LOCATION: &str = "android.permission.ACCESS_FINE_LOCATION";
pub const LOCATION_PERMISSIONS: [&str; 2] = [ACCESS_COARSE_LOCATION, ACCESS_FINE_LOCATION];

pub const DEFAULT_EXCESSIVE_TRACKERS: usize = 10;

const REF_LOCATION_FAMILY: &str =
    "Families policy: apps that solely target children must not request location permissions";
const REF_LOCATION_CHILD_TARGET: &str = "Families policy: location access in an app whose audience includes children; \
     compliance depends on a neutral age screen, which static analysis cannot verify";
const REF_SDK_FAMILY: &str = "Families policy: Designed-for-Families apps may only use self-certified ad SDKs";
const REF_SDK_CHILD_TARGET: &str = "Families policy: non-certified SDKs in an app whose audience includes children \
     must only serve users over 13 behind a neutral age screen, which static analysis cannot verify";
const REF_EXCESSIVE: &str = "more than the configured number of non-certified ad or tracker SDKs";

#[derive(Error, Debug)]
pub enum PolicyError {
    #[error("tracker {0:?} is not in the signature database")]
    UnknownTracker(String),

    #[error("app metadata: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{0}: {1}")]
    Io(std::path::PathBuf, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Audience {
    /// Listed in the Designed-for-Families program; users are children.
    FamilyDesigned,
    /// General app whose target audience includes children.
    IncludesChildren,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppMetadata {
    pub package_name: String,
    pub audience: Audience,
    #[serde(default)]
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub install_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_score: Option<f64>,
}

impl AppMetadata {
    pub fn new(package_name: &str, audience: Audience) -> Self {
        AppMetadata {
            package_name: package_name.to_string(),
            audience,
            category: String::new(),
            install_count: None,
            rating_score: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Io(path.to_path_buf(), e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FindingCode {
    LocationPermissionFamily,
    LocationPermissionChildTarget,
    NonCertifiedSdkFamily,
    NonCertifiedSdkChildTarget,
    ExcessiveTrackers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Warning,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    pub severity: Severity,
    pub evidence: Vec<String>,
    pub policy_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// `ExcessiveTrackers` fires when the non-certified count exceeds this.
    pub excessive_threshold: usize,
    /// Drop Google and Facebook SDKs before auditing trackers.
    pub exclude_google_facebook: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { excessive_threshold: DEFAULT_EXCESSIVE_TRACKERS, exclude_google_facebook: false }
    }
}

fn severity_for(audience: Audience) -> Severity {
    match audience {
        Audience::FamilyDesigned => Severity::Violation,
        Audience::IncludesChildren => Severity::Warning,
    }
}

pub fn audit_location(manifest: &ManifestInfo, meta: &AppMetadata) -> Vec<Finding> {
    let evidence: Vec<String> =
        LOCATION_PERMISSIONS.iter().filter(|p| manifest.permissions.contains(**p)).map(|p| p.to_string()).collect();
    if evidence.is_empty() {
        return Vec::new();
    }
    let (code, policy_ref) = match meta.audience {
        Audience::FamilyDesigned => (FindingCode::LocationPermissionFamily, REF_LOCATION_FAMILY),
        Audience::IncludesChildren => (FindingCode::LocationPermissionChildTarget, REF_LOCATION_CHILD_TARGET),
    };
    vec![Finding { code, severity: severity_for(meta.audience), evidence, policy_ref: policy_ref.to_string() }]
}

/// Splits matched tracker names into (certified, non-certified).
pub fn partition_trackers(
    matched: &BTreeSet<String>,
    db: &SignatureDatabase,
) -> Result<(BTreeSet<String>, BTreeSet<String>), PolicyError> {
    let mut certified = BTreeSet::new();
    let mut other = BTreeSet::new();
    for name in matched {
        let sig = db.get(name).ok_or_else(|| PolicyError::UnknownTracker(name.clone()))?;
        if sig.family_certified {
            certified.insert(name.clone());
        } else {
            other.insert(name.clone());
        }
    }
    Ok((certified, other))
}

/// Removes Google and Facebook SDKs from a matched set.
pub fn without_google_facebook(matched: &BTreeSet<String>, db: &SignatureDatabase) -> BTreeSet<String> {
    matched.iter().filter(|n| !db.get(n).is_some_and(|s| s.is_google_or_facebook())).cloned().collect()
}

pub fn audit_trackers(
    matched: &BTreeSet<String>,
    meta: &AppMetadata,
    db: &SignatureDatabase,
    config: &AuditConfig,
) -> Result<Vec<Finding>, PolicyError> {
    let (_, mut non_certified) = partition_trackers(matched, db)?;
    if config.exclude_google_facebook {
        non_certified = without_google_facebook(&non_certified, db);
    }
    if non_certified.is_empty() {
        return Ok(Vec::new());
    }

    let severity = severity_for(meta.audience);
    let evidence: Vec<String> = non_certified.into_iter().collect();
    let (code, policy_ref) = match meta.audience {
        Audience::FamilyDesigned => (FindingCode::NonCertifiedSdkFamily, REF_SDK_FAMILY),
        Audience::IncludesChildren => (FindingCode::NonCertifiedSdkChildTarget, REF_SDK_CHILD_TARGET),
    };
    let mut findings = vec![Finding { code, severity, evidence: evidence.clone(), policy_ref: policy_ref.to_string() }];
    if evidence.len() > config.excessive_threshold {
        findings.push(Finding {
            code: FindingCode::ExcessiveTrackers,
            severity,
            evidence,
            policy_ref: format!("{REF_EXCESSIVE} ({})", config.excessive_threshold),
        });
    }
    Ok(findings)
}
