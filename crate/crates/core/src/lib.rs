//! Local monomialization of real power series, H-set parametrization and
//! fiber geometry of bounded linear projections.

pub mod appendix;
pub mod scalar;
pub mod series;
pub mod fibergeom;
pub mod hsets;
pub mod json;
pub mod monomialize;
pub mod transforms;

pub use scalar::{Rational, Scalar};
pub use series::{Exponent, Normality, Series, SeriesError, Trunc};
pub use transforms::{ElementaryTransform, Lambda, TransformError, TransformPath};

/// Exact rational series.
pub type QSeries = Series<Rational>;
/// Double precision series.
pub type FSeries = Series<f64>;
/// Exact rational elementary transformation.
pub type QTransform = ElementaryTransform<Rational>;
/// Exact rational transform path.
pub type QPath = TransformPath<Rational>;
/// Exact rational H-basic set.
pub type QSet = hsets::HBasicSet<Rational>;
/// Exact rational manifold description.
pub type QManifold = fibergeom::ManifoldSpec<Rational>;
