use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CommentError;

const STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
const EMOJI: &str = include_str!("../../data/emoji.tsv");

/// Fewest tokens a kept review may have.
pub const MIN_TOKENS: usize = 5;
/// Reviews with more stars than this are not treated as negative feedback.
pub const DEFAULT_MAX_STARS: u8 = 2;

/// A review after tokenization.
///
/// `tokens` is every lowercase word in order; `terms` is the same sequence
/// with stopwords removed, which is what rules and vectors see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub app_package: String,
    pub stars: u8,
    pub text: String,
    pub tokens: Vec<String>,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub stopwords: HashSet<String>,
    pub emoji: HashMap<char, String>,
    /// Inclusive upper bound on stars. Set to 1 for "strictly below 2".
    pub max_stars: u8,
    pub min_tokens: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            stopwords: parse_stopwords(STOPWORDS),
            emoji: parse_emoji_table(EMOJI).expect("bundled emoji table"),
            max_stars: DEFAULT_MAX_STARS,
            min_tokens: MIN_TOKENS,
        }
    }
}

impl PreprocessConfig {
    pub fn with_max_stars(mut self, max_stars: u8) -> Self {
        self.max_stars = max_stars;
        self
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn load_stopwords(mut self, path: impl AsRef<Path>) -> Result<Self, CommentError> {
        self.stopwords = parse_stopwords(&super::read(path.as_ref())?);
        Ok(self)
    }

    pub fn load_emoji(mut self, path: impl AsRef<Path>) -> Result<Self, CommentError> {
        self.emoji = parse_emoji_table(&super::read(path.as_ref())?)?;
        Ok(self)
    }
}

/// One word per line; `#` lines are ignored.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_lowercase).collect()
}

/// `U+1F44E<TAB>thumbs_down` per line, or the literal character in the
/// first column.
pub fn parse_emoji_table(text: &str) -> Result<HashMap<char, String>, CommentError> {
    let mut map = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || CommentError::Format(format!("emoji table line {}: {line:?}", n + 1));
        let (key, word) = line.split_once('\t').ok_or_else(bad)?;
        let ch = match key.strip_prefix("U+").or_else(|| key.strip_prefix("u+")) {
            Some(hex) => u32::from_str_radix(hex, 16).ok().and_then(char::from_u32).ok_or_else(bad)?,
            None => {
                let mut chars = key.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => c,
                    _ => return Err(bad()),
                }
            }
        };
        map.insert(ch, word.trim().to_lowercase());
    }
    Ok(map)
}

/// Lowercases, spells out emoji, and splits on anything that is not a
/// letter, digit or underscore.
pub fn tokenize(text: &str, config: &PreprocessConfig) -> Vec<String> {
    let mut spelled = String::with_capacity(text.len());
    for c in text.chars() {
        match config.emoji.get(&c) {
            Some(word) => {
                spelled.push(' ');
                spelled.push_str(word);
                spelled.push(' ');
            }
            None => spelled.extend(c.to_lowercase()),
        }
    }
    spelled.split(|c: char| !(c.is_alphanumeric() || c == '_')).filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Builds a [`Comment`] without any filtering.
pub fn to_comment(id: &str, app_package: &str, stars: u8, text: &str, config: &PreprocessConfig) -> Comment {
    let tokens = tokenize(text, config);
    let terms = tokens.iter().filter(|t| !config.is_stopword(t)).cloned().collect();
    Comment { id: id.to_string(), app_package: app_package.to_string(), stars, text: text.to_string(), tokens, terms }
}

/// `None` when the review is too short or not negative enough.
pub fn preprocess(raw: &RawComment, config: &PreprocessConfig) -> Option<Comment> {
    if raw.stars > config.max_stars {
        return None;
    }
    let c = to_comment(&raw.id, &raw.app_package, raw.stars, &raw.text, config);
    (c.tokens.len() >= config.min_tokens).then_some(c)
}

/// A review as scraped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    #[serde(default)]
    pub id: String,
    #[serde(alias = "package")]
    pub app_package: String,
    pub stars: u8,
    pub text: String,
}

/// JSON array of `{"id"?, "app_package", "stars", "text"}`. Missing ids
/// become the record's position.
pub fn parse_comments(text: &str) -> Result<Vec<RawComment>, CommentError> {
    let mut raw: Vec<RawComment> = serde_json::from_str(text)?;
    for (i, c) in raw.iter_mut().enumerate() {
        if !(1..=5).contains(&c.stars) {
            return Err(CommentError::Format(format!("comment {i}: stars {} outside 1..=5", c.stars)));
        }
        if c.id.is_empty() {
            c.id = i.to_string();
        }
    }
    Ok(raw)
}

pub fn load_comments(path: impl AsRef<Path>) -> Result<Vec<RawComment>, CommentError> {
    parse_comments(&super::read(path.as_ref())?)
}

pub fn preprocess_all(raw: &[RawComment], config: &PreprocessConfig) -> Vec<Comment> {
    raw.iter().filter_map(|r| preprocess(r, config)).collect()
}
