//! Functional data tools: B-spline smoothing with GCV, the first functional
//! covariance component and shift registration.

pub mod basis;
pub mod curve;
pub mod fcc;
pub mod quadrature;
pub mod register;
pub mod smooth;

pub use basis::BSplineBasis;
pub use curve::{inner_product, integrate_product, Curve, GridCurve, SmoothedCurve};
pub use fcc::{first_fcc, project_fcc, CurveSet, FccResult};
pub use register::{estimate_shift, register_all, register_pair, register_to_fcc, RegistrationResult};
pub use smooth::{default_lambda_grid, gcv_select, normalize_by_max, penalized_smooth, GcvSelection};
