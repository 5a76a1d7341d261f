//! Evaluation against ground truth: error curves, the conditional-independence
//! ablation and inference latency.

mod ablation;
mod curves;
mod latency;

pub use ablation::{ablation_ci, CiAblation, ABLATION_GIVEN};
pub use curves::{
    default_givens, error_vs_future_step, error_vs_given, Abscissa, CurvePoint, ErrorCurve, ErrorScope, FnPredictor,
    Predictor, TvaePredictor,
};
pub use latency::{latency_bench, summarize, time_calls, LatencyReport, MIN_REPS, WARMUP_CALLS};
