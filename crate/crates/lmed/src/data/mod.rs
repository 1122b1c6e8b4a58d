//! Longitudinal data handling: schemas, datasets, histories and the pooled
//! mediator-path expansion.

mod dataset;
mod pooled;
pub mod schema;

pub use dataset::{LongitudinalDataset, MISSING_CODE};
pub use pooled::{MediatorPath, PooledLevel, PooledStack};
pub use schema::{canonical_label, Censoring, ColumnRef, HistoryKind, NodeSchema, Role};
