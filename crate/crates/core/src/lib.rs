//! Category audit toolkit.
//!
//! Categories and candidate articles live in one embedding space. An article
//! outside a category is flagged for reconsideration by one of three
//! strategies:
//!
//! * [`rpfilter`]: an exponential-decay reconsideration probability driven by
//!   the distance to the category centroid,
//! * [`geometry`]: convex-hull breaches on a 2D projection,
//! * [`hnsw`]: fishnet retrieval around the centroid in an HNSW graph.
//!
//! [`cohesion`] adds silhouette and centroid-stability diagnostics, and
//! [`audit`] compares the strategies against true distances.

pub mod audit;
pub mod cohesion;
pub mod corpus;
pub mod demo;
pub mod error;
pub mod geometry;
pub mod hnsw;
pub mod rpfilter;
pub mod vecmath;

pub use audit::{count_blindness_pairs, MethodFlags};
pub use cohesion::{
    ClusterAssignment, CohesionExperiment, StabilityResult, SubcategoryMap, VectorSet,
};
pub use corpus::{Corpus, EmbeddedArticle, EmbeddingProviderConfig};
pub use error::{Error, Result};
pub use geometry::{BreachReport, Hull2D, ProjectedPoint};
pub use hnsw::{FishnetResult, HnswIndex, HnswParams, Neighbor};
pub use rpfilter::{RpCalibration, RpFlag, RpMode};
pub use vecmath::{CategoryModel, Histogram};
