//! Keyword-pair rules over review text, their induction from labeled
//! examples, and per-category complaint rates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::text::{to_comment, PreprocessConfig};
use super::{Comment, CommentError};

const STARTER_RULES: &str = include_str!("../../data/starter_rules.csv");

/// Induced rules must score strictly above this F1.
pub const MIN_F1: Ratio<u64> = Ratio::new_raw(4, 5);
/// Rules whose pilot error rate is strictly above this are dropped.
pub const DEFAULT_MAX_ERROR: Ratio<u64> = Ratio::new_raw(1, 10);
pub const DEFAULT_DISTANCES: std::ops::RangeInclusive<u32> = 1..=20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Content,
    Ads,
    Privacy,
    Security,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Content, Category::Ads, Category::Privacy, Category::Security];
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: String,
    pub category: Category,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicCatalog {
    pub topics: Vec<Topic>,
}

const BUILTIN_TOPICS: [(&str, Category, &str); 15] = [
    ("not_proper_for_kids", Category::Content, "Violence, blood or scary content not proper for kids"),
    ("sexual_content", Category::Content, "Sexual content not allowed for kids"),
    ("tobacco_drugs", Category::Content, "Encourages the use of tobacco or drugs"),
    ("inappropriate_language", Category::Content, "Exposes children to inappropriate language"),
    ("criminal_activity", Category::Content, "Depicts criminal activities to kids"),
    ("too_many_ads", Category::Ads, "Too many advertisements"),
    ("disruptive_ads", Category::Ads, "Users are disrupted by ads"),
    ("ad_shortcuts", Category::Ads, "Ad shortcuts in the launcher or notification bar"),
    ("ad_redirection", Category::Ads, "Redirection or drive-by download by ads"),
    ("data_leak", Category::Privacy, "Leaking or stealing private information"),
    ("permission_abuse", Category::Privacy, "Abusing permissions, such as requesting unnecessary ones"),
    ("unnecessary_data_collection", Category::Privacy, "Collecting unnecessary private data"),
    ("third_party_sharing", Category::Privacy, "Sharing data with third parties or other users without consent"),
    ("malware", Category::Security, "Contains a virus or malware"),
    ("payment_fraud", Category::Security, "Suspected payment fraud"),
];

impl Default for TopicCatalog {
    fn default() -> Self {
        TopicCatalog {
            topics: BUILTIN_TOPICS
                .iter()
                .map(|(id, category, description)| Topic {
                    id: id.to_string(),
                    category: *category,
                    description: description.to_string(),
                })
                .collect(),
        }
    }
}

impl TopicCatalog {
    pub fn get(&self, id: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.id == id)
    }

    pub fn category(&self, id: &str) -> Option<Category> {
        self.get(id).map(|t| t.category)
    }

    pub fn check(&self, rules: &[SemanticRule]) -> Result<(), CommentError> {
        match rules.iter().find(|r| self.get(&r.topic).is_none()) {
            Some(r) => Err(CommentError::UnknownTopic(r.topic.clone())),
            None => Ok(()),
        }
    }
}

/// `{w1, w2, d, t}`: matches when `w1` occurs and, if `w2` is set, `w2`
/// occurs fewer than `d` terms away.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SemanticRule {
    pub w1: String,
    pub w2: Option<String>,
    pub d: u32,
    pub topic: String,
}

impl SemanticRule {
    pub fn single(w1: &str, topic: &str) -> Self {
        SemanticRule { w1: w1.to_string(), w2: None, d: 0, topic: topic.to_string() }
    }

    pub fn pair(w1: &str, w2: &str, d: u32, topic: &str) -> Self {
        SemanticRule { w1: w1.to_string(), w2: Some(w2.to_string()), d, topic: topic.to_string() }
    }

    fn validate(&self) -> Result<(), CommentError> {
        if self.w1.is_empty() || self.w2.as_deref() == Some("") {
            return Err(CommentError::Format(format!("rule {self}: empty keyword")));
        }
        if self.w2.is_none() && self.d != 0 {
            return Err(CommentError::Format(format!("rule {self}: single keyword rules take d = 0")));
        }
        Ok(())
    }

    /// Checks against a comment's term positions.
    pub fn matches_index(&self, index: &TermIndex) -> bool {
        let Some(first) = index.positions(&self.w1) else {
            return false;
        };
        let Some(w2) = &self.w2 else {
            return true;
        };
        let Some(second) = index.positions(w2) else {
            return false;
        };
        closest_distinct(first, second).is_some_and(|gap| gap < self.d as usize)
    }

    pub fn matches(&self, comment: &Comment) -> bool {
        self.matches_index(&TermIndex::new(&comment.terms))
    }
}

impl fmt::Display for SemanticRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}, {}, {}, {}}}", self.w1, self.w2.as_deref().unwrap_or("NONE"), self.d, self.topic)
    }
}

/// Smallest `|i - j|` over `i` in `a`, `j` in `b`, `i != j`; both sorted.
fn closest_distinct(a: &[usize], b: &[usize]) -> Option<usize> {
    let (mut i, mut j) = (0, 0);
    let mut best: Option<usize> = None;
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        if x != y {
            let gap = x.abs_diff(y);
            best = Some(best.map_or(gap, |b| b.min(gap)));
        }
        if x < y {
            i += 1;
        } else if y < x {
            j += 1;
        } else {
            // Same position: the neighbours on either side are the candidates.
            if let Some(&next) = a.get(i + 1) {
                let gap = next - y;
                best = Some(best.map_or(gap, |b| b.min(gap)));
            }
            if let Some(&next) = b.get(j + 1) {
                let gap = next - x;
                best = Some(best.map_or(gap, |b| b.min(gap)));
            }
            i += 1;
            j += 1;
        }
    }
    best
}

/// Term -> sorted positions for one comment.
#[derive(Debug, Clone, Default)]
pub struct TermIndex<'a> {
    positions: HashMap<&'a str, Vec<usize>>,
}

impl<'a> TermIndex<'a> {
    pub fn new(terms: &'a [String]) -> Self {
        let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, t) in terms.iter().enumerate() {
            positions.entry(t.as_str()).or_default().push(i);
        }
        TermIndex { positions }
    }

    pub fn positions(&self, term: &str) -> Option<&[usize]> {
        self.positions.get(term).map(Vec::as_slice)
    }
}

pub fn apply_rules(comment: &Comment, rules: &[SemanticRule]) -> BTreeSet<String> {
    let index = TermIndex::new(&comment.terms);
    rules.iter().filter(|r| r.matches_index(&index)).map(|r| r.topic.clone()).collect()
}

/// A comment with its human-assigned topics (possibly none).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeled {
    pub comment: Comment,
    pub topics: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn f1(&self) -> Ratio<u64> {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(2 * self.tp, den)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InducedRule {
    pub rule: SemanticRule,
    pub confusion: Confusion,
    #[serde(serialize_with = "ratio_as_f64")]
    pub f1: Ratio<u64>,
}

fn ratio_as_f64<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(*r.numer() as f64 / *r.denom() as f64)
}

fn confusion(rule: &SemanticRule, labeled: &[Labeled], indexes: &[TermIndex]) -> Confusion {
    let mut c = Confusion::default();
    for (l, idx) in labeled.iter().zip(indexes) {
        let hit = rule.matches_index(idx);
        let positive = l.topics.contains(&rule.topic);
        match (hit, positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Scores every single keyword and every keyword pair at each distance in
/// `distances`, keeping rules with F1 strictly above 0.8.
pub fn induce_rules(
    labeled: &[Labeled],
    keyword_sets: &BTreeMap<String, Vec<String>>,
    distances: std::ops::RangeInclusive<u32>,
) -> Result<Vec<InducedRule>, CommentError> {
    if keyword_sets.is_empty() {
        return Err(CommentError::EmptyKeywordSet(None));
    }
    if let Some((topic, _)) = keyword_sets.iter().find(|(_, k)| k.is_empty()) {
        return Err(CommentError::EmptyKeywordSet(Some(topic.clone())));
    }
    let mut candidates = Vec::new();
    for (topic, words) in keyword_sets {
        let mut words: Vec<&str> = words.iter().map(String::as_str).collect();
        words.dedup();
        for (i, w1) in words.iter().enumerate() {
            candidates.push(SemanticRule::single(w1, topic));
            for w2 in &words[i + 1..] {
                for d in distances.clone() {
                    candidates.push(SemanticRule::pair(w1, w2, d, topic));
                }
            }
        }
    }
    let indexes: Vec<TermIndex> = labeled.iter().map(|l| TermIndex::new(&l.comment.terms)).collect();
    Ok(candidates
        .into_par_iter()
        .filter_map(|rule| {
            let confusion = confusion(&rule, labeled, &indexes);
            let f1 = confusion.f1();
            (f1 > MIN_F1).then_some(InducedRule { rule, confusion, f1 })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PilotScore {
    pub matches: u64,
    pub false_matches: u64,
}

impl PilotScore {
    /// Wrong matches over all matches; 0 when the rule matched nothing.
    pub fn error_rate(&self) -> Ratio<u64> {
        if self.matches == 0 {
            Ratio::from_integer(0)
        } else {
            Ratio::new(self.false_matches, self.matches)
        }
    }
}

pub fn pilot_score(rule: &SemanticRule, pilot: &[Labeled]) -> PilotScore {
    let mut s = PilotScore { matches: 0, false_matches: 0 };
    for l in pilot {
        if rule.matches(&l.comment) {
            s.matches += 1;
            if !l.topics.contains(&rule.topic) {
                s.false_matches += 1;
            }
        }
    }
    s
}

/// Drops rules whose error rate on `pilot` is strictly above `max_error`.
pub fn validate_rules(rules: &[SemanticRule], pilot: &[Labeled], max_error: Ratio<u64>) -> Vec<SemanticRule> {
    rules.par_iter().filter(|r| pilot_score(r, pilot).error_rate() <= max_error).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: Category,
    pub comments_matched: usize,
    pub comments_total: usize,
    pub apps_matched: usize,
    pub apps_total: usize,
    pub percent_comments: f64,
    pub percent_apps: f64,
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Share of comments, and of apps, with at least one complaint in each
/// category.
pub fn categorize_corpus(comments: &[Comment], rules: &[SemanticRule], catalog: &TopicCatalog) -> Vec<CategoryStats> {
    let per_comment: Vec<BTreeSet<Category>> = comments
        .par_iter()
        .map(|c| apply_rules(c, rules).iter().filter_map(|t| catalog.category(t)).collect())
        .collect();
    let apps: BTreeSet<&str> = comments.iter().map(|c| c.app_package.as_str()).collect();
    Category::ALL
        .into_iter()
        .map(|cat| {
            let hits: Vec<&Comment> =
                comments.iter().zip(&per_comment).filter(|(_, cats)| cats.contains(&cat)).map(|(c, _)| c).collect();
            let hit_apps: BTreeSet<&str> = hits.iter().map(|c| c.app_package.as_str()).collect();
            CategoryStats {
                category: cat,
                comments_matched: hits.len(),
                comments_total: comments.len(),
                apps_matched: hit_apps.len(),
                apps_total: apps.len(),
                percent_comments: percent(hits.len(), comments.len()),
                percent_apps: percent(hit_apps.len(), apps.len()),
            }
        })
        .collect()
}

/// Rule file: `w1,w2,d,topic` rows with `NONE` for a missing `w2`; `#`
/// lines are comments.
pub fn parse_rules(text: &str) -> Result<Vec<SemanticRule>, CommentError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rules = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != 4 {
            return Err(CommentError::Format(format!("rule row {:?}: expected 4 fields", row)));
        }
        let d = row[2].parse().map_err(|_| CommentError::Format(format!("rule row {:?}: bad distance", row)))?;
        let w2 = (!row[1].eq_ignore_ascii_case("none")).then(|| row[1].to_lowercase());
        let rule = SemanticRule { w1: row[0].to_lowercase(), w2, d, topic: row[3].to_string() };
        rule.validate()?;
        rules.push(rule);
    }
    Ok(rules)
}

pub fn rules_to_csv(rules: &[SemanticRule]) -> String {
    let mut out = String::from("w1,w2,d,topic\n");
    for r in rules {
        out += &format!("{},{},{},{}\n", r.w1, r.w2.as_deref().unwrap_or("NONE"), r.d, r.topic);
    }
    out
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<SemanticRule>, CommentError> {
    parse_rules(&super::read(path.as_ref())?)
}

/// Hand-written rules from the topic descriptions. Not induced from
/// labeled data; replace them with your own.
pub fn starter_rules() -> Vec<SemanticRule> {
    parse_rules(STARTER_RULES).expect("bundled rules parse")
}

/// Keyword sets: a JSON object from topic id to a list of keywords.
pub fn parse_keyword_sets(text: &str) -> Result<BTreeMap<String, Vec<String>>, CommentError> {
    let sets: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
    Ok(sets.into_iter().map(|(t, ws)| (t, ws.into_iter().map(|w| w.trim().to_lowercase()).collect())).collect())
}

pub fn load_keyword_sets(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>, CommentError> {
    parse_keyword_sets(&super::read(path.as_ref())?)
}

#[derive(Deserialize)]
struct LabeledRecord {
    #[serde(default)]
    id: String,
    #[serde(default, alias = "package")]
    app_package: String,
    #[serde(default = "one_star")]
    stars: u8,
    text: String,
    #[serde(default)]
    topics: Vec<String>,
}

fn one_star() -> u8 {
    1
}

/// Labeled examples: a JSON array of `{"text", "topics": [..]}` with
/// optional `id`, `app_package` and `stars`. No length or star filtering is
/// applied.
pub fn parse_labeled(text: &str, config: &PreprocessConfig) -> Result<Vec<Labeled>, CommentError> {
    let records: Vec<LabeledRecord> = serde_json::from_str(text)?;
    Ok(records
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let id = if r.id.is_empty() { i.to_string() } else { r.id };
            Labeled {
                comment: to_comment(&id, &r.app_package, r.stars, &r.text, config),
                topics: r.topics.into_iter().collect(),
            }
        })
        .collect())
}

pub fn load_labeled(path: impl AsRef<Path>, config: &PreprocessConfig) -> Result<Vec<Labeled>, CommentError> {
    parse_labeled(&super::read(path.as_ref())?, config)
}
