//! Overlays, tables and charts.

mod chart;
mod overlay;
mod table;

pub use chart::{emit_chart_svg, ChartSpec};
pub use overlay::{render_overlay, OverlaySpec, Polarity};
pub use table::{emit_table, parse_table, TableFormat};
