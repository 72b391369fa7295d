pub mod calibration;
pub mod distributions;
pub mod error;
pub mod greeks;
pub mod ingest;
pub mod pricing;
pub mod quadrature;
pub mod special;

pub use calibration::{CalibrationResult, ChiFit, CurveSource, VolatilityCurve, WindowStudy};
pub use distributions::{ChiParams, ReturnDistribution};
pub use error::{GossetError, Result};
pub use ingest::{ReturnSeries, SeriesFormat};
pub use pricing::{GossetModel, MarketParams, PriceQuote, TailMode, TailPolicy};
pub use quadrature::{Interval, QuadratureConfig};
