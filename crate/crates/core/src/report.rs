//! Whole-corpus scans and their reports.
//!
//! A corpus directory holds `apks/*.apk`, and optionally `metadata/`,
//! `flows/`, `ratings/` and `comments/` (JSON files, any names) plus a
//! `device_profile.json`. Everything is joined on the package name.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::apk::{decode_manifest, index_classes, open_apk};
use crate::comments::{self, apply_rules, Category, Comment, PreprocessConfig, SemanticRule, TopicCatalog};
use crate::netflow::{self, audit_flows, DeviceProfile, FlowRecord, LeakFinding, PiiCategory};
use crate::policy::{self, AppMetadata, Audience, AuditConfig, Finding, FindingCode, Severity};
use crate::rating::{self, AgeGroupTable, InconsistencyReport, RatingRecord};
use crate::signatures::{self, MatchMode, SignatureDatabase};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATIONS: i32 = 2;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("{0}: not a directory")]
    NotADirectory(PathBuf),

    #[error("{0}: file not found")]
    MissingFile(PathBuf),

    #[error("parallelism must be at least 1")]
    Parallelism,

    #[error("signature database: {0}")]
    Signatures(#[from] signatures::SignatureError),

    #[error("age table: {0}")]
    AgeTable(#[from] rating::RatingError),

    #[error("rules: {0}")]
    Rules(#[from] comments::CommentError),

    #[error("device profile: {0}")]
    Profile(String),

    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub corpus_dir: PathBuf,
    pub signature_db: Option<PathBuf>,
    pub age_table: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    /// Defaults to `<corpus>/device_profile.json` when that exists.
    pub device_profile: Option<PathBuf>,
    pub parallelism: usize,
    pub exclude_google_facebook: bool,
    pub audience: Option<Audience>,
    pub match_mode: MatchMode,
    pub rating_threshold: u32,
    pub max_stars: u8,
    pub excessive_threshold: usize,
}

impl ScanConfig {
    pub fn new(corpus_dir: impl Into<PathBuf>) -> Self {
        ScanConfig {
            corpus_dir: corpus_dir.into(),
            signature_db: None,
            age_table: None,
            rules: None,
            device_profile: None,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            exclude_google_facebook: false,
            audience: None,
            match_mode: MatchMode::Prefix,
            rating_threshold: rating::DEFAULT_THRESHOLD,
            max_stars: comments::DEFAULT_MAX_STARS,
            excessive_threshold: policy::DEFAULT_EXCESSIVE_TRACKERS,
        }
    }

    /// Checks that every referenced file exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.corpus_dir.is_dir() {
            return Err(ConfigError::NotADirectory(self.corpus_dir.clone()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Parallelism);
        }
        for p in [&self.signature_db, &self.age_table, &self.rules, &self.device_profile].into_iter().flatten() {
            if !p.is_file() {
                return Err(ConfigError::MissingFile(p.clone()));
            }
        }
        Ok(())
    }
}

/// Everything a scan needs besides the corpus, loaded once.
pub struct ScanContext {
    pub db: SignatureDatabase,
    pub ages: AgeGroupTable,
    pub rules: Vec<SemanticRule>,
    pub catalog: TopicCatalog,
    pub profile: DeviceProfile,
    pub preprocess: PreprocessConfig,
    pub audit: AuditConfig,
}

impl ScanContext {
    pub fn load(config: &ScanConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut db = match &config.signature_db {
            Some(p) => signatures::load_database(p)?,
            None => SignatureDatabase::bundled(),
        };
        if config.match_mode == MatchMode::Substring {
            db = db.with_substring_matching();
        }
        let ages = match &config.age_table {
            Some(p) => AgeGroupTable::load(p)?,
            None => AgeGroupTable::bundled(),
        };
        let catalog = TopicCatalog::default();
        let rules = match &config.rules {
            Some(p) => comments::load_rules(p)?,
            None => comments::starter_rules(),
        };
        catalog.check(&rules)?;
        let default_profile = config.corpus_dir.join("device_profile.json");
        let profile_path =
            config.device_profile.clone().or_else(|| default_profile.is_file().then_some(default_profile));
        let profile = match profile_path {
            Some(p) => {
                let profile = DeviceProfile::load(&p).map_err(|e| ConfigError::Profile(e.to_string()))?;
                profile.validate().map_err(|e| ConfigError::Profile(e.to_string()))?;
                profile
            }
            None => DeviceProfile::default(),
        };
        Ok(ScanContext {
            db,
            ages,
            rules,
            catalog,
            profile,
            preprocess: PreprocessConfig::default().with_max_stars(config.max_stars),
            audit: AuditConfig {
                excessive_threshold: config.excessive_threshold,
                exclude_google_facebook: config.exclude_google_facebook,
            },
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerSummary {
    pub certified: Vec<String>,
    pub non_certified: Vec<String>,
    pub certified_count: usize,
    pub non_certified_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplaintSummary {
    pub comments: usize,
    pub matched: usize,
    pub by_category: BTreeMap<Category, usize>,
    pub by_topic: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppReport {
    pub package: String,
    pub audience: Option<Audience>,
    pub apk: Option<String>,
    pub permissions: Vec<String>,
    pub findings: Vec<Finding>,
    pub leaks: Vec<LeakFinding>,
    pub trackers: Option<TrackerSummary>,
    pub inconsistency: Option<InconsistencyReport>,
    pub complaints: Option<ComplaintSummary>,
    pub errors: Vec<String>,
}

impl AppReport {
    fn empty(package: &str) -> Self {
        AppReport {
            package: package.to_string(),
            audience: None,
            apk: None,
            permissions: Vec::new(),
            findings: Vec::new(),
            leaks: Vec::new(),
            trackers: None,
            inconsistency: None,
            complaints: None,
            errors: Vec::new(),
        }
    }

    pub fn has_violation(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Violation)
    }

    pub fn needs_manual_review(&self) -> bool {
        self.inconsistency.as_ref().is_some_and(|i| i.manual_review)
    }
}

/// Corpus-wide counts, each recomputable from the per-app reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub apps: usize,
    pub apps_with_location_permission: usize,
    pub apps_with_non_certified_trackers: usize,
    pub apps_with_violations: usize,
    pub apps_with_leaks: usize,
    pub apps_with_flagged_leaks: usize,
    pub apps_for_manual_review: usize,
    pub apps_with_errors: usize,
    pub findings_by_code: BTreeMap<FindingCode, usize>,
    pub findings_by_severity: BTreeMap<Severity, usize>,
    pub leaks_by_category: BTreeMap<PiiCategory, usize>,
    pub complaint_comments: usize,
    pub complaint_comments_by_category: BTreeMap<Category, usize>,
    pub complaint_apps_by_category: BTreeMap<Category, usize>,
}

impl Summary {
    pub fn of(reports: &[AppReport]) -> Self {
        let mut s = Summary { apps: reports.len(), ..Default::default() };
        for r in reports {
            let has_location = r.permissions.iter().any(|p| policy::LOCATION_PERMISSIONS.contains(&p.as_str()));
            s.apps_with_location_permission += has_location as usize;
            s.apps_with_non_certified_trackers +=
                r.trackers.as_ref().is_some_and(|t| t.non_certified_count > 0) as usize;
            s.apps_with_violations += r.has_violation() as usize;
            s.apps_with_leaks += !r.leaks.is_empty() as usize;
            s.apps_with_flagged_leaks += r.leaks.iter().any(|l| l.flagged) as usize;
            s.apps_for_manual_review += r.needs_manual_review() as usize;
            s.apps_with_errors += !r.errors.is_empty() as usize;
            for f in &r.findings {
                *s.findings_by_code.entry(f.code).or_default() += 1;
                *s.findings_by_severity.entry(f.severity).or_default() += 1;
            }
            for l in &r.leaks {
                *s.leaks_by_category.entry(l.category).or_default() += 1;
            }
            if let Some(c) = &r.complaints {
                s.complaint_comments += c.comments;
                for (cat, n) in &c.by_category {
                    *s.complaint_comments_by_category.entry(*cat).or_default() += n;
                    *s.complaint_apps_by_category.entry(*cat).or_default() += (*n > 0) as usize;
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub apps: Vec<AppReport>,
    pub summary: Summary,
    /// Problems with corpus files not tied to one app.
    pub errors: Vec<String>,
}

impl ScanReport {
    pub fn new(mut apps: Vec<AppReport>, errors: Vec<String>) -> Self {
        apps.sort_by(|a, b| a.package.cmp(&b.package));
        ScanReport { schema_version: REPORT_SCHEMA_VERSION, summary: Summary::of(&apps), apps, errors }
    }

    pub fn exit_code(&self) -> i32 {
        if self.apps.iter().any(AppReport::has_violation) {
            EXIT_VIOLATIONS
        } else {
            EXIT_OK
        }
    }
}

fn json_files(dir: &Path) -> Vec<PathBuf> {
    list(dir, "json")
}

fn list(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    files
}

fn display(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

#[derive(Default)]
struct Inputs {
    apks: BTreeMap<String, PathBuf>,
    metadata: BTreeMap<String, AppMetadata>,
    flows: BTreeMap<String, Vec<FlowRecord>>,
    ratings: BTreeMap<String, Vec<RatingRecord>>,
    comments: BTreeMap<String, Vec<Comment>>,
    errors: Vec<String>,
}

fn gather(root: &Path, ctx: &ScanContext) -> Inputs {
    let mut inp = Inputs::default();
    for p in list(&root.join("apks"), "apk") {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        inp.apks.insert(stem, p);
    }
    for p in json_files(&root.join("metadata")) {
        match AppMetadata::load(&p) {
            Ok(m) => {
                inp.metadata.insert(m.package_name.clone(), m);
            }
            Err(e) => inp.errors.push(format!("{}: {e}", display(root, &p))),
        }
    }
    for p in json_files(&root.join("flows")) {
        match netflow::ingest_flows(&p) {
            Ok(flows) => {
                for f in flows {
                    inp.flows.entry(f.app_package.clone()).or_default().push(f);
                }
            }
            Err(e) => inp.errors.push(format!("{}: {e}", display(root, &p))),
        }
    }
    for p in json_files(&root.join("ratings")) {
        match rating::load_ratings(&p) {
            Ok(records) => {
                for (pkg, rs) in rating::group_by_package(records) {
                    inp.ratings.entry(pkg).or_default().extend(rs);
                }
            }
            Err(e) => inp.errors.push(format!("{}: {e}", display(root, &p))),
        }
    }
    for p in json_files(&root.join("comments")) {
        match comments::load_comments(&p) {
            Ok(raw) => {
                for c in comments::preprocess_all(&raw, &ctx.preprocess) {
                    inp.comments.entry(c.app_package.clone()).or_default().push(c);
                }
                // Packages whose reviews were all filtered out still get a
                // (zero) complaint section.
                for r in raw {
                    inp.comments.entry(r.app_package).or_default();
                }
            }
            Err(e) => inp.errors.push(format!("{}: {e}", display(root, &p))),
        }
    }
    inp
}

fn scan_static(report: &mut AppReport, apk: &Path, ctx: &ScanContext, package_hint: &str, root: &Path) {
    report.apk = Some(display(root, apk));
    let archive = match open_apk(apk) {
        Ok(a) => a,
        Err(e) => {
            report.errors.push(format!("apk: {e}"));
            return;
        }
    };
    let manifest = match decode_manifest(&archive.manifest_bytes) {
        Ok(m) => m,
        Err(e) => {
            report.errors.push(format!("manifest: {e}"));
            return;
        }
    };
    if manifest.package_name != package_hint {
        report.errors.push(format!("manifest declares {} but the file is named {package_hint}", manifest.package_name));
    }
    report.permissions = manifest.permissions.iter().cloned().collect();
    let classes = match index_classes(&archive.dex_blobs) {
        Ok(c) => c,
        Err(e) => {
            report.errors.push(format!("dex: {e}"));
            return;
        }
    };
    let mut matched = ctx.db.match_code(&classes);
    if ctx.audit.exclude_google_facebook {
        matched = policy::without_google_facebook(&matched, &ctx.db);
    }
    match policy::partition_trackers(&matched, &ctx.db) {
        Ok((certified, non_certified)) => {
            report.trackers = Some(TrackerSummary {
                certified_count: certified.len(),
                non_certified_count: non_certified.len(),
                certified: certified.into_iter().collect(),
                non_certified: non_certified.into_iter().collect(),
            });
        }
        Err(e) => report.errors.push(format!("trackers: {e}")),
    }
    if let Some(audience) = report.audience {
        let meta = AppMetadata::new(&report.package, audience);
        report.findings.extend(policy::audit_location(&manifest, &meta));
        match policy::audit_trackers(&matched, &meta, &ctx.db, &ctx.audit) {
            Ok(f) => report.findings.extend(f),
            Err(e) => report.errors.push(format!("policy: {e}")),
        }
    }
}

fn complaint_summary(comments: &[Comment], ctx: &ScanContext) -> ComplaintSummary {
    let mut s = ComplaintSummary { comments: comments.len(), ..Default::default() };
    for c in comments {
        let topics = apply_rules(c, &ctx.rules);
        s.matched += !topics.is_empty() as usize;
        let cats: BTreeSet<Category> = topics.iter().filter_map(|t| ctx.catalog.category(t)).collect();
        for cat in cats {
            *s.by_category.entry(cat).or_default() += 1;
        }
        for t in topics {
            *s.by_topic.entry(t).or_default() += 1;
        }
    }
    s
}

fn scan_app(package: &str, inp: &Inputs, ctx: &ScanContext, threshold: u32, root: &Path) -> AppReport {
    let mut report = AppReport::empty(package);
    report.audience = inp.metadata.get(package).map(|m| m.audience);
    if let Some(apk) = inp.apks.get(package) {
        scan_static(&mut report, apk, ctx, package, root);
    }
    if let Some(flows) = inp.flows.get(package) {
        report.leaks = audit_flows(flows, &ctx.profile, &ctx.db);
    }
    if let Some(records) = inp.ratings.get(package) {
        match rating::app_inconsistency(records, &ctx.ages, threshold) {
            Ok(r) => report.inconsistency = Some(r),
            Err(e) => report.errors.push(format!("ratings: {e}")),
        }
    }
    if let Some(cs) = inp.comments.get(package) {
        report.complaints = Some(complaint_summary(cs, ctx));
    }
    report
}

/// Runs every analysis over the corpus. Per-app problems end up in that
/// app's `errors`; only configuration problems fail the scan.
pub fn scan(config: &ScanConfig) -> Result<ScanReport, ConfigError> {
    let ctx = ScanContext::load(config)?;
    scan_with(config, &ctx)
}

pub fn scan_with(config: &ScanConfig, ctx: &ScanContext) -> Result<ScanReport, ConfigError> {
    config.validate()?;
    let root = config.corpus_dir.as_path();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| ConfigError::Pool(e.to_string()))?;
    let inp = pool.install(|| gather(root, ctx));
    let mut packages: BTreeSet<&String> = inp.apks.keys().collect();
    packages.extend(inp.metadata.keys());
    packages.extend(inp.flows.keys());
    packages.extend(inp.ratings.keys());
    packages.extend(inp.comments.keys());
    let packages: Vec<&String> = packages
        .into_iter()
        .filter(|p| config.audience.is_none() || inp.metadata.get(*p).map(|m| m.audience) == config.audience)
        .collect();
    let apps =
        pool.install(|| packages.par_iter().map(|p| scan_app(p, &inp, ctx, config.rating_threshold, root)).collect());
    Ok(ScanReport::new(apps, inp.errors))
}

pub fn to_structured(report: &ScanReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

pub fn parse_structured(text: &str) -> Result<ScanReport, serde_json::Error> {
    serde_json::from_str(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Structured,
    Table,
}

pub fn emit(report: &ScanReport, format: Format) -> String {
    match format {
        Format::Structured => to_structured(report),
        Format::Table => to_table(report),
    }
}

fn audience_label(a: Option<Audience>) -> &'static str {
    match a {
        Some(Audience::FamilyDesigned) => "family",
        Some(Audience::IncludesChildren) => "children",
        None => "-",
    }
}

/// One row per app and a summary block. Apps whose ratings disagree by
/// more than three levels carry a `MANUAL-REVIEW` tag.
pub fn to_table(report: &ScanReport) -> String {
    let mut rows = vec![[
        "package".to_string(),
        "audience".into(),
        "location".into(),
        "certified".into(),
        "non-cert".into(),
        "violations".into(),
        "leaks".into(),
        "rating".into(),
        "complaints".into(),
        "notes".into(),
    ]];
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for r in &report.apps {
        let location = r.permissions.iter().any(|p| policy::LOCATION_PERMISSIONS.contains(&p.as_str()));
        let violations = r.findings.iter().filter(|f| f.severity == Severity::Violation).count();
        let mut notes = Vec::new();
        if r.needs_manual_review() {
            notes.push("MANUAL-REVIEW".to_string());
        }
        if !r.errors.is_empty() {
            notes.push(format!("{} error(s)", r.errors.len()));
        }
        rows.push([
            r.package.clone(),
            audience_label(r.audience).into(),
            if r.apk.is_some() && r.trackers.is_some() {
                if location { "yes" } else { "no" }.into()
            } else {
                "-".into()
            },
            opt(r.trackers.as_ref().map(|t| t.certified_count.to_string())),
            opt(r.trackers.as_ref().map(|t| t.non_certified_count.to_string())),
            violations.to_string(),
            format!("{}/{}", r.leaks.iter().filter(|l| l.flagged).count(), r.leaks.len()),
            opt(r.inconsistency.as_ref().map(|i| format!("L{}", i.max_level))),
            opt(r.complaints.as_ref().map(|c| format!("{}/{}", c.matched, c.comments))),
            notes.join(", "),
        ]);
    }
    let widths: Vec<usize> = (0..10).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out += line.join("  ").trim_end();
        out.push('\n');
    }

    let s = &report.summary;
    let pct = |n: usize| if s.apps == 0 { 0.0 } else { 100.0 * n as f64 / s.apps as f64 };
    out.push('\n');
    let _ = writeln!(out, "apps scanned                 {}", s.apps);
    let lines = [
        ("location permission", s.apps_with_location_permission),
        ("non-certified trackers", s.apps_with_non_certified_trackers),
        ("policy violations", s.apps_with_violations),
        ("PII leaks", s.apps_with_leaks),
        ("flagged PII leaks", s.apps_with_flagged_leaks),
        ("manual rating review", s.apps_for_manual_review),
        ("scan errors", s.apps_with_errors),
    ];
    for (label, n) in lines {
        let _ = writeln!(out, "{label:<28} {n} ({:.1}%)", pct(n));
    }
    for cat in Category::ALL {
        let c = s.complaint_comments_by_category.get(&cat).copied().unwrap_or(0);
        let a = s.complaint_apps_by_category.get(&cat).copied().unwrap_or(0);
        let _ = writeln!(out, "{:<28} {c} of {} comments, {a} apps", format!("{cat} complaints"), s.complaint_comments);
    }
    for e in &report.errors {
        let _ = writeln!(out, "error: {e}");
    }
    out
}
