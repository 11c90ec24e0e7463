//! Multiscale triangle-excess functionals on finite metric measure spaces.
//!
//! The crate builds dyadic cube filtrations and multiresolution ball families
//! over a finite point set with masses, evaluates the triple-sum flatness
//! coefficient `beta3` on every cube or ball, and sums those coefficients
//! into Carleson packing totals. It also checks the John–Nirenberg–Strömberg
//! packing lemma on trees of cubes.
//!
//! ```
//! use carleson::{carleson::{carleson_sum_cubes, EstimatorConfig}, cubes, generators};
//!
//! let space = generators::gen_circle(64).unwrap();
//! let (k0, k1) = cubes::default_scale_range(&space, None);
//! let nets = cubes::build_nets(&space, k0, k1, 0).unwrap();
//! let filtration = cubes::build_filtration(&space, &nets, 1).unwrap();
//! let root = filtration.root().unwrap();
//! let report = carleson_sum_cubes(&space, &filtration, root, &EstimatorConfig::exact()).unwrap();
//! assert!(report.ratio > 0.0);
//! ```

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleson;
pub mod cli;
pub mod cubes;
pub mod error;
pub mod generators;
pub mod io;
pub mod jns;
pub mod metric;
pub mod rng;
pub mod sum;

pub use error::{Error, Result};
pub use metric::{MetricMeasureSpace, PointSet};
