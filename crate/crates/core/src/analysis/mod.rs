//! Parameter census, relation collapse, expressiveness, attention
//! inspection and trend data.

mod attention;
mod collapse;
mod expressiveness;
mod params;
mod trend;

pub use attention::{
    attention_from_inputs, extract_attention_matrix, top_metapaths, AttentionMatrix, MetaPath, DEFAULT_THRESHOLD,
};
pub use collapse::{
    collapse_experiment, collapse_graph, mean_combined_statistic, probe_accuracy, CollapseGraph, CollapseReport,
    RELATION_MEANS,
};
pub use expressiveness::{encode, encodings_equal, expressiveness_check, ExpressivenessReport, SmallGraph, OUTPUT_TOLERANCE};
pub use params::{count_params, ParamBreakdown};
pub use trend::{emit_trend_data, parse_trend_csv, trend_csv, trend_rows, TrendRow, TREND_HEADER};
