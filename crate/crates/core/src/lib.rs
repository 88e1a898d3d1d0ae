//! Privacy and content audits for children's Android apps.
//!
//! The crate reads APK containers, matches embedded code against a tracker
//! signature database, checks the result against family-program policy,
//! scans captured network flows for personal data, compares content age
//! ratings across authorities, and mines user reviews for complaints.

pub mod apk;
pub mod comments;
pub mod fixtures;
pub mod netflow;
pub mod policy;
pub mod rating;
pub mod report;
pub mod signatures;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating point type the review-mining math is written over.
pub trait Scalar: Float + FromPrimitive + Sum + Send + Sync + Debug + Display + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Sum + Send + Sync + Debug + Display + 'static {}

pub type DocVector64 = comments::DocVector<f64>;
pub type DocVector32 = comments::DocVector<f32>;
pub type ClusterModel64 = comments::ClusterModel<f64>;
pub type ClusterModel32 = comments::ClusterModel<f32>;
pub type TfIdf64 = comments::TfIdf<f64>;
