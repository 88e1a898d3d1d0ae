//! Review mining: preprocessing, TF-IDF vectors, cosine k-means with
//! model selection, and keyword-pair complaint rules.

mod kmeans;
mod rules;
mod text;
mod vector;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use kmeans::{
    cluster, cluster_keywords, compact_clusters, cosine_distance, default_k_grid, min_center_distance, representatives,
    select_k, silhouettes, summarization_metric, ClusterModel, KMeansConfig, KSelection, COMPACT_SHARE,
    DEFAULT_MAX_ITER, DEFAULT_RESTARTS,
};
pub use rules::{
    apply_rules, categorize_corpus, induce_rules, load_keyword_sets, load_labeled, load_rules, parse_keyword_sets,
    parse_labeled, parse_rules, pilot_score, rules_to_csv, starter_rules, validate_rules, Category, CategoryStats,
    Confusion, InducedRule, Labeled, PilotScore, SemanticRule, TermIndex, Topic, TopicCatalog, DEFAULT_DISTANCES,
    DEFAULT_MAX_ERROR, MIN_F1,
};
pub use text::{
    load_comments, parse_comments, parse_emoji_table, parse_stopwords, preprocess, preprocess_all, to_comment,
    tokenize, Comment, PreprocessConfig, RawComment, DEFAULT_MAX_STARS, MIN_TOKENS,
};
pub use vector::{dense_for_comments, load_dense_vectors, parse_dense_vectors, vectorize, DocVector, TfIdf};

#[derive(Error, Debug)]
pub enum CommentError {
    #[error("no terms left to build a vocabulary from")]
    EmptyVocabulary,

    #[error("k = {k} needs 2 <= k <= {n} vectors")]
    KTooLarge { k: usize, n: usize },

    #[error("no grid value of k fits the corpus")]
    NoValidK,

    #[error("vector {0} is all zeros")]
    ZeroVector(usize),

    #[error("empty keyword set{}", .0.as_ref().map(|t| format!(" for {t}")).unwrap_or_default())]
    EmptyKeywordSet(Option<String>),

    #[error("unknown topic {0:?}")]
    UnknownTopic(String),

    #[error("no vector for comment {0:?}")]
    MissingVector(String),

    #[error("comment {id:?}: vector has {found} dimensions, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

fn read(path: &Path) -> Result<String, CommentError> {
    std::fs::read_to_string(path).map_err(|e| CommentError::Io(path.to_path_buf(), e))
}
