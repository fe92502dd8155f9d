//! Integrated Gradients along straight-line (and piecewise-linear) paths.

mod engine;
mod path;
mod polarity;

pub use engine::{
    completeness_report, integrated_gradients, integrated_gradients_polyline, sensitivity_probe,
    AttributionMap, CompletenessReport, SensitivityProbe, REL_GAP_FLOOR,
};
pub use path::{interpolate_path, PathSpec, Scheme, DEFAULT_STEPS};
pub use polarity::{split_pixels, split_polarity, split_values, PolarityMaps};
