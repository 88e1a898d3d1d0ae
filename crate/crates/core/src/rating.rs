//! Content age ratings: label -> suitable-age interval, pairwise
//! inconsistency levels, the full level matrix, and per-app scoring.
//!
//! A rating's suitable-age interval runs from its minimum age to one below
//! the next level's minimum age; the top level of each authority is open.
//! Two intervals are compared through the gap between the later interval's
//! start and the earlier interval's end. A gap of zero or less is level 0,
//! each further `threshold` years adds one level, and gaps above nine years
//! are level 4.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const DEFAULT_THRESHOLD: u32 = 3;
pub const MAX_LEVEL: u8 = 4;
/// Gaps above this many years are always the top level.
pub const MAX_GRADED_GAP: i64 = 9;
/// Reports above this level are tagged for manual review.
pub const MANUAL_REVIEW_ABOVE: u8 = 3;

const DEFAULT_TABLE: &str = include_str!("../data/age_groups.csv");

#[derive(Error, Debug)]
pub enum RatingError {
    #[error("unknown rating label {label:?} for {authority}")]
    UnknownLabel { authority: RatingAuthority, label: String },

    #[error("unknown rating authority {0:?}")]
    UnknownAuthority(String),

    #[error("{0}: need ratings from at least two authorities, got {1}")]
    InsufficientRatings(String, usize),

    #[error("age table: {0}")]
    InvalidTable(String),

    #[error("age table: {0}")]
    Csv(#[from] csv::Error),

    #[error("rating file: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("{0}: {1}")]
    Io(std::path::PathBuf, #[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RatingAuthority {
    ACB,
    ESRB,
    PEGI,
    USK,
    IARC,
}

impl RatingAuthority {
    pub const ALL: [RatingAuthority; 5] = [
        RatingAuthority::ACB,
        RatingAuthority::ESRB,
        RatingAuthority::PEGI,
        RatingAuthority::USK,
        RatingAuthority::IARC,
    ];

    /// Authority the Play Store shows for a storefront country.
    pub fn for_country(country: &str) -> RatingAuthority {
        match country.to_ascii_uppercase().as_str() {
            "AU" => RatingAuthority::ACB,
            "US" | "CA" | "MX" | "BR" | "AR" | "CL" | "CO" | "PE" => RatingAuthority::ESRB,
            "DE" => RatingAuthority::USK,
            "FR" | "GB" | "UK" | "IT" | "ES" | "NL" | "BE" | "PT" | "AT" | "SE" | "DK" | "FI" | "NO" | "IE" | "PL"
            | "CH" | "GR" | "AE" | "SA" | "IL" => RatingAuthority::PEGI,
            _ => RatingAuthority::IARC,
        }
    }
}

impl fmt::Display for RatingAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for RatingAuthority {
    type Err = RatingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RatingAuthority::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| RatingError::UnknownAuthority(s.to_string()))
    }
}

/// Suitable ages `[min_age, max_age]`; `max_age == None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgeGroup {
    pub min_age: u32,
    pub max_age: Option<u32>,
}

impl AgeGroup {
    pub fn new(min_age: u32, max_age: u32) -> Self {
        AgeGroup { min_age, max_age: Some(max_age) }
    }

    pub fn open(min_age: u32) -> Self {
        AgeGroup { min_age, max_age: None }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.max_age {
            Some(max) => write!(f, "[{},{}]", self.min_age, max),
            None => write!(f, "[{},OPEN]", self.min_age),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct AgeGroupRepr {
    min_age: u32,
    #[serde(serialize_with = "ser_max", deserialize_with = "de_max")]
    max_age: Option<u32>,
}

fn ser_max<S: Serializer>(v: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(n) => s.serialize_u32(*n),
        None => s.serialize_str("OPEN"),
    }
}

fn de_max<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u32>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Max {
        N(u32),
        S(String),
    }
    match Max::deserialize(d)? {
        Max::N(n) => Ok(Some(n)),
        Max::S(s) if s.eq_ignore_ascii_case("open") => Ok(None),
        Max::S(s) => Err(serde::de::Error::custom(format!("bad max_age {s:?}"))),
    }
}

impl Serialize for AgeGroup {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        AgeGroupRepr { min_age: self.min_age, max_age: self.max_age }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for AgeGroup {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = AgeGroupRepr::deserialize(d)?;
        Ok(AgeGroup { min_age: r.min_age, max_age: r.max_age })
    }
}

/// Inconsistency level between two suitable-age intervals (symmetric).
///
/// Levels are capped at [`MAX_LEVEL`]; with the default threshold of 3 the
/// cap is only reached through the "gap above nine" branch.
///
/// # Panics
/// If `threshold` is zero.
pub fn inconsistency_level(a: &AgeGroup, b: &AgeGroup, threshold: u32) -> u8 {
    assert!(threshold >= 1, "inconsistency threshold must be at least 1");
    let (lo, hi) = if (a.min_age, a.max_age.is_none()) <= (b.min_age, b.max_age.is_none()) { (a, b) } else { (b, a) };
    let Some(lo_max) = lo.max_age else {
        return 0;
    };
    level_for_gap(hi.min_age as i64 - lo_max as i64, threshold)
}

/// The level step function on a raw gap in years.
pub fn level_for_gap(gap: i64, threshold: u32) -> u8 {
    assert!(threshold >= 1, "inconsistency threshold must be at least 1");
    if gap <= 0 {
        0
    } else if gap <= MAX_GRADED_GAP {
        (gap / threshold as i64 + 1).min(MAX_LEVEL as i64) as u8
    } else {
        MAX_LEVEL
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RatingLabel {
    pub authority: RatingAuthority,
    pub label: String,
}

impl fmt::Display for RatingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.authority, self.label)
    }
}

#[derive(Debug, Deserialize)]
struct TableRow {
    authority: String,
    label: String,
    min_age: u32,
    max_age: String,
}

/// Configured (authority, label) -> interval mapping, levels in ascending
/// order per authority.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeGroupTable {
    levels: BTreeMap<RatingAuthority, Vec<(String, AgeGroup)>>,
}

fn label_key(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase()
}

impl AgeGroupTable {
    pub fn new(rows: impl IntoIterator<Item = (RatingAuthority, String, AgeGroup)>) -> Result<Self, RatingError> {
        let mut levels: BTreeMap<RatingAuthority, Vec<(String, AgeGroup)>> = BTreeMap::new();
        for (authority, label, group) in rows {
            let label = label.trim().to_string();
            let entry = levels.entry(authority).or_default();
            if entry.iter().any(|(l, _)| label_key(l) == label_key(&label)) {
                return Err(RatingError::InvalidTable(format!("{authority} {label} listed twice")));
            }
            entry.push((label, group));
        }
        for (authority, entries) in levels.iter_mut() {
            entries.sort_by_key(|(_, g)| g.min_age);
            for pair in entries.windows(2) {
                let ((l1, g1), (l2, g2)) = (&pair[0], &pair[1]);
                if g1.max_age.map(|m| m + 1) != Some(g2.min_age) {
                    return Err(RatingError::InvalidTable(format!(
                        "{authority} {l1} {g1} must end one year before {l2} starts at {}",
                        g2.min_age
                    )));
                }
            }
            if let Some((l, g)) = entries.last() {
                if g.max_age.is_some_and(|m| m < g.min_age) {
                    return Err(RatingError::InvalidTable(format!("{authority} {l} has an empty interval {g}")));
                }
            }
        }
        Ok(AgeGroupTable { levels })
    }

    /// The bundled ladders for the five authorities.
    pub fn bundled() -> Self {
        Self::from_csv(DEFAULT_TABLE).expect("bundled age table is valid")
    }

    /// `authority,label,min_age,max_age` rows; `#` starts a comment line and
    /// `max_age` may be `OPEN`.
    pub fn from_csv(text: &str) -> Result<Self, RatingError> {
        let mut reader =
            csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for row in reader.deserialize::<TableRow>() {
            let row = row?;
            let authority: RatingAuthority = row.authority.parse()?;
            let max_age = if row.max_age.eq_ignore_ascii_case("open") {
                None
            } else {
                Some(
                    row.max_age
                        .parse()
                        .map_err(|_| RatingError::InvalidTable(format!("bad max_age {:?}", row.max_age)))?,
                )
            };
            rows.push((authority, row.label, AgeGroup { min_age: row.min_age, max_age }));
        }
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RatingError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RatingError::Io(path.to_path_buf(), e))?;
        Self::from_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("authority,label,min_age,max_age\n");
        for (label, group) in self.labels() {
            let max = group.max_age.map_or("OPEN".to_string(), |m| m.to_string());
            out += &format!("{},{},{},{}\n", label.authority, label.label, group.min_age, max);
        }
        out
    }

    /// Looks a label up case-insensitively; a leading authority name
    /// (`"PEGI 12"`) is accepted.
    pub fn age_group(&self, authority: RatingAuthority, label: &str) -> Result<AgeGroup, RatingError> {
        let unknown = || RatingError::UnknownLabel { authority, label: label.to_string() };
        let entries = self.levels.get(&authority).ok_or_else(unknown)?;
        let wanted = label_key(label);
        let prefix = format!("{} ", authority.to_string().to_ascii_lowercase());
        let stripped = wanted.strip_prefix(&prefix).unwrap_or(&wanted);
        entries
            .iter()
            .find(|(l, _)| {
                let k = label_key(l);
                k == wanted || k == stripped
            })
            .map(|(_, g)| *g)
            .ok_or_else(unknown)
    }

    /// Every (label, interval) in authority order, then ascending age.
    pub fn labels(&self) -> impl Iterator<Item = (RatingLabel, AgeGroup)> + '_ {
        self.levels.iter().flat_map(|(a, entries)| {
            entries.iter().map(move |(l, g)| (RatingLabel { authority: *a, label: l.clone() }, *g))
        })
    }

    pub fn len(&self) -> usize {
        self.levels.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn age_group(authority: RatingAuthority, label: &str, table: &AgeGroupTable) -> Result<AgeGroup, RatingError> {
    table.age_group(authority, label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub labels: Vec<RatingLabel>,
    pub levels: Vec<Vec<u8>>,
}

impl RatingMatrix {
    pub fn get(&self, a: &RatingLabel, b: &RatingLabel) -> Option<u8> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.levels[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rating");
        for l in &self.labels {
            out += &format!(",{l}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.levels) {
            out += &l.to_string();
            for v in row {
                out += &format!(",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn build_matrix(table: &AgeGroupTable, threshold: u32) -> RatingMatrix {
    let (labels, groups): (Vec<RatingLabel>, Vec<AgeGroup>) = table.labels().unzip();
    let n = groups.len();
    let mut levels = vec![vec![0u8; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let level = inconsistency_level(&groups[i], &groups[j], threshold);
            levels[i][j] = level;
            levels[j][i] = level;
        }
    }
    RatingMatrix { labels, levels }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub app_package: String,
    pub country: String,
    pub authority: RatingAuthority,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairLevel {
    pub a: RatingAuthority,
    pub b: RatingAuthority,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InconsistencyReport {
    pub app_package: String,
    /// One entry per unordered authority pair, `a < b`.
    pub pair_levels: Vec<PairLevel>,
    pub max_level: u8,
    pub manual_review: bool,
}

impl InconsistencyReport {
    pub fn level(&self, a: RatingAuthority, b: RatingAuthority) -> Option<u8> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.pair_levels.iter().find(|p| p.a == a && p.b == b).map(|p| p.level)
    }
}

/// Scores one app's ratings. When an authority appears more than once
/// (several storefronts), each pair takes its worst combination.
pub fn app_inconsistency(
    records: &[RatingRecord],
    table: &AgeGroupTable,
    threshold: u32,
) -> Result<InconsistencyReport, RatingError> {
    let package = records.first().map(|r| r.app_package.clone()).unwrap_or_default();
    let mut groups: BTreeMap<RatingAuthority, BTreeSet<AgeGroup>> = BTreeMap::new();
    for r in records {
        groups.entry(r.authority).or_default().insert(table.age_group(r.authority, &r.label)?);
    }
    if groups.len() < 2 {
        return Err(RatingError::InsufficientRatings(package, groups.len()));
    }

    let authorities: Vec<_> = groups.keys().copied().collect();
    let mut pair_levels = Vec::new();
    for (i, &a) in authorities.iter().enumerate() {
        for &b in &authorities[i + 1..] {
            let level = groups[&a]
                .iter()
                .flat_map(|ga| groups[&b].iter().map(move |gb| inconsistency_level(ga, gb, threshold)))
                .max()
                .unwrap_or(0);
            pair_levels.push(PairLevel { a, b, level });
        }
    }
    let max_level = pair_levels.iter().map(|p| p.level).max().unwrap_or(0);
    Ok(InconsistencyReport {
        app_package: package,
        pair_levels,
        max_level,
        manual_review: max_level > MANUAL_REVIEW_ABOVE,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CountryRating {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    authority: Option<RatingAuthority>,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AppRatings {
    package: String,
    ratings: BTreeMap<String, CountryRating>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RatingFile {
    One(AppRatings),
    Many(Vec<AppRatings>),
}

/// Rating file: `{"package": ..., "ratings": {"AU": {"authority": "ACB",
/// "label": "PG"}, ...}}` or an array of such objects. `authority` defaults
/// to the storefront's authority for the country code.
pub fn parse_ratings(text: &str) -> Result<Vec<RatingRecord>, RatingError> {
    let apps = match serde_json::from_str::<RatingFile>(text)? {
        RatingFile::One(a) => vec![a],
        RatingFile::Many(v) => v,
    };
    Ok(apps
        .into_iter()
        .flat_map(|app| {
            let package = app.package;
            app.ratings.into_iter().map(move |(country, r)| RatingRecord {
                app_package: package.clone(),
                authority: r.authority.unwrap_or_else(|| RatingAuthority::for_country(&country)),
                country,
                label: r.label,
            })
        })
        .collect())
}

pub fn load_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingRecord>, RatingError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| RatingError::Io(path.to_path_buf(), e))?;
    parse_ratings(&text)
}

/// Writes one app's ratings in the file format read by [`parse_ratings`].
pub fn ratings_to_json(package: &str, ratings: &[(&str, RatingAuthority, &str)]) -> String {
    let app = AppRatings {
        package: package.to_string(),
        ratings: ratings
            .iter()
            .map(|(c, a, l)| (c.to_string(), CountryRating { authority: Some(*a), label: l.to_string() }))
            .collect(),
    };
    serde_json::to_string_pretty(&app).expect("ratings serialize")
}

pub fn group_by_package(records: Vec<RatingRecord>) -> BTreeMap<String, Vec<RatingRecord>> {
    let mut out: BTreeMap<String, Vec<RatingRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.app_package.clone()).or_default().push(r);
    }
    out
}
