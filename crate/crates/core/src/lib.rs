//! Curvature engine and numerical verification toolkit for the explicit
//! family of essentially conformally symmetric metrics
//! `κ dt² + dt ds + h`, `κ = f(t)⟨v,v⟩ + ⟨Av,v⟩`.
//!
//! Coordinates are ordered `(t, s, v¹, …, v^{n−2})`.

pub mod charforms;
pub mod curvature;
pub mod dynamics;
pub mod error;
mod exterior;
pub mod json;
pub mod linalg;
pub mod metric;
pub mod olszak;
pub mod profile;
pub mod report;
pub mod suite;
pub mod tensor;

pub use error::{GeomError, Result};
pub use metric::{MetricJet, MetricProvider, RoterSpec};
pub use profile::ScalarProfile;
pub use tensor::{ChartPoint, FibreMetric, Tensor, Variance};
