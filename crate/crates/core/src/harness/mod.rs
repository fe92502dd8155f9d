//! Datasets, quality sweeps, attribution batches and the external provider.

mod attribute;
mod dataset;
mod metrics;
mod provider;
mod recipe;
mod sweep;

pub use attribute::{
    attribute_batch, attribute_item, read_records, write_records, AttributeConfig,
    AttributionRecord, ItemAttribution, QualityAttribution,
};
pub use dataset::{gen_synthetic, load_dataset, Dataset, Item};
pub use metrics::{accuracy, macro_precision, Metric};
pub use provider::{
    decode_f32, encode_f32, handle_request, provider_connect, serve, Message, Provider,
    ProviderSpec, LOSS_TOLERANCE,
};
pub use recipe::SyntheticRecipe;
pub use sweep::{
    classify_sweep, prepare, sweep_precision, PrecisionRow, PrecisionTable, SweepConfig,
};
