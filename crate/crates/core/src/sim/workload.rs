//! Exogenous workload: data arrivals and domain drifts.
//!
//! The workload depends only on the config and the seed, never on what the
//! simulated system does, so a recorded trace replays to the same run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Moments, SimConfig};
use crate::error::{CoreError, Result};
use crate::ids::BatchId;

use super::Labeler;

const ARRIVAL_STREAM: u64 = 0x0100;
const SAMPLE_STREAM: u64 = 0x0200;

/// Independent generator for one purpose and one client.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadEvent {
    Arrival {
        t: f64,
        client: String,
        batch_id: BatchId,
        samples: Vec<Vec<f64>>,
        labels: Vec<i8>,
    },
    Drift {
        t: f64,
        task: String,
        sketch: Moments,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labeler: Option<Labeler>,
        drop: f64,
    },
}

impl WorkloadEvent {
    pub fn t(&self) -> f64 {
        match self {
            WorkloadEvent::Arrival { t, .. } | WorkloadEvent::Drift { t, .. } => *t,
        }
    }
}

/// Input distribution and labeler of `task` in effect at time `t`.
fn domain_at<'a>(config: &'a SimConfig, task: &str, t: f64) -> Option<(&'a Moments, &'a Labeler)> {
    let d = config.domain(task)?;
    let mut moments = &d.sketch;
    let mut labeler = &d.labeler;
    for e in d.drift_schedule.iter().take_while(|e| e.t <= t) {
        moments = &e.sketch;
        if let Some(l) = &e.labeler {
            labeler = l;
        }
    }
    Some((moments, labeler))
}

/// Drift events from the config and Poisson batch arrivals per client, in
/// time order. Batch ids are assigned in that order.
pub fn generate_workload(config: &SimConfig, seed: u64) -> Result<Vec<WorkloadEvent>> {
    // (t, rank, event): drifts sort before arrivals at equal times.
    let mut events: Vec<(f64, u8, WorkloadEvent)> = Vec::new();
    for d in &config.domains {
        for e in d.drift_schedule.iter().filter(|e| e.t <= config.horizon_s) {
            let event = WorkloadEvent::Drift {
                t: e.t,
                task: d.task.clone(),
                sketch: e.sketch.clone(),
                labeler: e.labeler.clone(),
                drop: e.drop,
            };
            events.push((e.t, 0, event));
        }
    }

    for (ci, c) in config.clients.iter().enumerate() {
        if c.arrival_rate <= 0.0 {
            continue;
        }
        let gap = Exp::new(c.arrival_rate).map_err(|e| CoreError::InvalidHistogram(e.to_string()))?;
        let mut times = stream_rng(seed, ARRIVAL_STREAM + ci as u64);
        let mut values = stream_rng(seed, SAMPLE_STREAM + ci as u64);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut times);
            if t > config.horizon_s {
                break;
            }
            let (moments, labeler) =
                domain_at(config, &c.task, t).ok_or_else(|| CoreError::UnknownTask(c.task.clone()))?;
            let samples: Vec<Vec<f64>> = (0..c.batch_size)
                .map(|_| moments.mean.iter().zip(&moments.std).map(|(m, s)| m + s * unit.sample(&mut values)).collect())
                .collect();
            let labels = samples.iter().map(|x| labeler.label(x)).collect();
            let event = WorkloadEvent::Arrival { t, client: c.id.clone(), batch_id: BatchId(0), samples, labels };
            events.push((t, 1, event));
        }
    }

    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut next_id = 0;
    Ok(events
        .into_iter()
        .map(|(_, _, mut e)| {
            if let WorkloadEvent::Arrival { batch_id, .. } = &mut e {
                *batch_id = BatchId(next_id);
                next_id += 1;
            }
            e
        })
        .collect())
}
