//! Box alignment, stripe validity and partial feature matching for person
//! search.
//!
//! Detected boxes are stretched to their holistic body region by four
//! boundary offsets; the stripes of the stretched box that were visible in the
//! detection become valid parts, and two boxes are compared only on the parts
//! both of them show. The crate also carries the retrieval evaluation protocol
//! and a seeded synthetic-occlusion benchmark.
//!
//! Geometry, pooling, losses and matching are generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the common double-precision case.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boxgeom;
pub mod error;
pub mod evalkit;
pub mod formats;
pub mod labels;
pub mod matching;
pub mod partfeat;
pub mod scalar;
pub mod simbench;

pub use boxgeom::{iou, offsets_from_boxes, refine_box, validity, ValidityVector};
pub use error::{Error, Result};
pub use matching::{dist_fused, dist_partial, distance_matrix, DistanceBreakdown, MatchOptions, Strategy};
pub use scalar::Scalar;

pub type BoundingBox = boxgeom::BoundingBox<f64>;
pub type OffsetVector = boxgeom::OffsetVector<f64>;
pub type FeatureMap = partfeat::FeatureMap<f64>;
pub type PartDescriptor = partfeat::PartDescriptor<f64>;
pub type RowProjection = partfeat::RowProjection<f64>;
pub type PrototypeBank = partfeat::PrototypeBank<f64>;
pub type KeypointSet = labels::KeypointSet<f64>;

pub type BoundingBoxF32 = boxgeom::BoundingBox<f32>;
pub type OffsetVectorF32 = boxgeom::OffsetVector<f32>;
pub type FeatureMapF32 = partfeat::FeatureMap<f32>;
pub type PartDescriptorF32 = partfeat::PartDescriptor<f32>;
