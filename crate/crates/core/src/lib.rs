//! Anchored stochastic inversion of spatial random fields.
//!
//! The library infers geostatistical structural parameters together with
//! *anchors* — field values at chosen locations — from two kinds of data:
//! direct point measurements of the attribute (type A) and indirect
//! vector-valued observations produced by a deterministic forward model
//! run on the whole field (type B). The likelihood of a candidate
//! parameter set against the type-B data has no tractable form; it is
//! estimated nonparametrically with a k-nearest-neighbor density estimate
//! built from forward-model outputs of conditionally simulated fields.
//! Posterior-predictive field ensembles are then generated by simulation
//! conditional on the anchors alone, with no further forward-model runs.
//!
//! Module layout:
//!
//! * [`geostat`] — covariance/correlation models, Box-Cox transform, trend.
//! * [`fieldsim`] — unconditional and conditional Gaussian field simulation.
//! * [`forward`] — built-in forward models (linear observers, 2-D Darcy flow).
//! * [`likelihood`] — k-nearest-neighbor likelihood estimation.
//! * [`inversion`] — priors, candidate sampling, posterior weighting,
//!   anchor placement and count selection, multi-dataset assimilation.
//! * [`predict`] — posterior-predictive ensembles and summaries.
//! * [`io`] — CSV / raw-grid serialization of fields and ensembles.
//! * [`seed`] — deterministic seed derivation for reproducible runs.

pub mod benchmarks;
pub mod error;
pub mod fieldsim;
pub mod forward;
pub mod geostat;
pub mod inversion;
pub mod io;
pub mod likelihood;
pub mod predict;
pub mod seed;
pub mod special;

pub use error::{Error, Result};
pub use fieldsim::{AnchorSet, Conditioning, Field, PointData, TypeAData};
pub use forward::{ForwardModel, TypeBData};
pub use geostat::{Grid, Location, StructuralParams, TrendBasis};
pub use inversion::{Candidate, PosteriorEnsemble, PriorSpec};
pub use likelihood::{DensityEstimate, SampleCloud};
pub use predict::PredictiveEnsemble;
