use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::ids::BatchId;
use crate::sketch::{sketch_from_samples, GaussianSketch, LabelHistogram};

/// Bytes per serialized feature or label value.
const BYTES_PER_VALUE: u64 = 4;
/// Fixed per-batch framing overhead.
const BATCH_HEADER_BYTES: u64 = 64;

/// A unit of client sensor data together with its summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBatch {
    pub batch_id: BatchId,
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
    pub bytes: u64,
    pub sketch: GaussianSketch,
    pub label_hist: LabelHistogram,
    pub origin_client: String,
}

impl DataBatch {
    /// Builds a batch, computing its sketch, label histogram and wire size.
    pub fn new(
        batch_id: BatchId,
        origin_client: impl Into<String>,
        samples: Vec<Vec<f64>>,
        labels: Vec<i8>,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(CoreError::LabelCountMismatch { samples: samples.len(), labels: labels.len() });
        }
        let sketch = sketch_from_samples(&samples)?;
        let label_hist = LabelHistogram::from_labels(&labels)?;
        let values = samples.len() as u64 * (sketch.dim() as u64 + 1);
        Ok(Self {
            batch_id,
            bytes: BATCH_HEADER_BYTES + values * BYTES_PER_VALUE,
            samples,
            labels,
            sketch,
            label_hist,
            origin_client: origin_client.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sketch.dim()
    }
}
