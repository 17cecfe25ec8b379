//! Certified two-sided estimates for stretch distances between flat surfaces,
//! together with the planar machinery behind them: intrinsic polygon metrics,
//! step-by-step morphing of polygons into 1-Lipschitz comparison maps, and
//! small feasibility kernels for extending partial short maps.

pub mod geom;
pub mod kernel;
pub mod complex;
pub mod morph;
pub mod poly;
pub mod surface;
