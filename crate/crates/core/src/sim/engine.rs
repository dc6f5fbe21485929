//! Discrete-event loop tying clients, network, edge scheduler and the
//! accuracy model together.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::client::{
    combined_score, resample_budget, AccuracyWindow, DataBatch, DriftReport, EvolutionRequest, RemoteView, ScoredBatch,
    ShiftClass,
};
use crate::config::SimConfig;
use crate::error::{CoreError, Result};
use crate::ids::{BatchId, JobId, RequestId};
use crate::planner::RetrainJob;
use crate::proxy::{fit_proxy, MappingProxy};
use crate::scheduler::{DeferredGroup, Gpu, PendingJob, Scheduler, WindowContext};
use crate::sketch::{merge_all, tv_distance, w2_distance, GaussianSketch, LabelHistogram};

use super::curve::{
    apply_retraining, coverage_ceiling, effective_samples, inject_drift, transfer_time, AccuracyState, DomainState,
    DriftEvent,
};
use super::metrics::{Counters, MetricsReport, Mode, TimelineRow};
use super::workload::{generate_workload, WorkloadEvent};

/// One line of the run's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceRecord {
    Drift {
        t: f64,
        task: String,
        acc_before: f64,
        acc_after: f64,
    },
    Request {
        t: f64,
        request_id: RequestId,
        client: String,
        task: String,
        t_arrival: f64,
        drift: DriftReport,
        manifest: Vec<BatchId>,
        bytes: u64,
    },
    /// A task's refreshed proxy, as shared with other clients.
    Publish {
        t: f64,
        proxy: MappingProxy,
    },
    EdgeArrival {
        t: f64,
        request_id: RequestId,
    },
    Window {
        t: f64,
        gpus_before: Vec<Gpu>,
        gpus_after: Vec<Gpu>,
        dispatched: Vec<JobId>,
        deferred: Vec<DeferredGroup>,
        dropped: Vec<RequestId>,
    },
    Dispatch {
        t: f64,
        gpu: u32,
        jobs: Vec<JobId>,
        requests: Vec<RequestId>,
        priority: f64,
        t_start: f64,
        t_end: f64,
        mem_mb: f64,
        dataset: Vec<BatchId>,
        savings_mflop: f64,
        hits: u64,
        misses: u64,
    },
    Complete {
        t: f64,
        gpu: u32,
        jobs: Vec<JobId>,
        requests: Vec<RequestId>,
    },
    Retrain {
        t: f64,
        task: String,
        request_id: RequestId,
        n_eff: f64,
        a_max: f64,
        acc_before: f64,
        acc_after: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: MetricsReport,
    pub events: Vec<TraceRecord>,
}

/// Runs the scenario on a freshly generated workload.
pub fn run(config: &SimConfig, mode: Mode, seed: u64) -> Result<SimOutcome> {
    let workload = generate_workload(config, seed)?;
    run_workload(config, mode, seed, &workload)
}

/// Runs the scenario on a given workload, for example a replayed trace.
pub fn run_workload(config: &SimConfig, mode: Mode, seed: u64, workload: &[WorkloadEvent]) -> Result<SimOutcome> {
    Engine::new(config, mode, workload)?.run(seed)
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Workload(usize),
    Tick,
    Window,
    EdgeArrival(RequestId),
    Completion(JobId),
}

#[derive(Debug)]
struct Entry {
    t: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Reversed so the max-heap pops the earliest, then the first scheduled.
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct Baseline {
    acc: f64,
    sketch: GaussianSketch,
    hist: LabelHistogram,
}

struct ClientState {
    acc: AccuracyState,
    flags: AccuracyWindow,
    /// Bresenham accumulator turning `current_acc` into correctness flags.
    carry: f64,
    /// Newest batches covering at least one accuracy window of samples.
    recent: VecDeque<DataBatch>,
    /// Local batches not yet uploaded.
    buffer: VecDeque<DataBatch>,
    baseline: Option<Baseline>,
    proxy: Option<MappingProxy>,
    outstanding: Option<RequestId>,
}

struct Engine<'a> {
    config: &'a SimConfig,
    mode: Mode,
    workload: &'a [WorkloadEvent],
    clients: Vec<ClientState>,
    client_by_id: BTreeMap<&'a str, usize>,
    client_by_task: BTreeMap<&'a str, usize>,
    domains: BTreeMap<String, DomainState>,
    queue: BinaryHeap<Entry>,
    seq: u64,
    now: f64,
    scheduler: Scheduler,
    /// Batches that reached the edge, with their upload time.
    store: BTreeMap<BatchId, DataBatch>,
    uploaded_at: BTreeMap<BatchId, f64>,
    requests: BTreeMap<RequestId, EvolutionRequest>,
    in_flight: BTreeSet<RequestId>,
    pending: BTreeSet<RequestId>,
    jobs: BTreeMap<JobId, RetrainJob>,
    next_request: u64,
    timeline: Vec<TimelineRow>,
    events: Vec<TraceRecord>,
    counters: Counters,
}

impl<'a> Engine<'a> {
    fn new(config: &'a SimConfig, mode: Mode, workload: &'a [WorkloadEvent]) -> Result<Self> {
        config.validate()?;
        let mut domains = BTreeMap::new();
        for d in &config.domains {
            let state = DomainState {
                task_id: d.task.clone(),
                labeler: d.labeler.clone(),
                domain_sketch: d.sketch.to_sketch()?,
                updated_at: 0.0,
            };
            domains.insert(d.task.clone(), state);
        }
        let clients = config
            .clients
            .iter()
            .map(|c| ClientState {
                acc: AccuracyState::new(c.initial_acc, &config.curve),
                flags: AccuracyWindow::new(c.window),
                carry: 0.5,
                recent: VecDeque::new(),
                buffer: VecDeque::new(),
                baseline: None,
                proxy: None,
                outstanding: None,
            })
            .collect();
        Ok(Self {
            config,
            mode,
            workload,
            clients,
            client_by_id: config.clients.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect(),
            client_by_task: config.clients.iter().enumerate().map(|(i, c)| (c.task.as_str(), i)).collect(),
            domains,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            scheduler: Scheduler::new(config.pool.to_pool()),
            store: BTreeMap::new(),
            uploaded_at: BTreeMap::new(),
            requests: BTreeMap::new(),
            in_flight: BTreeSet::new(),
            pending: BTreeSet::new(),
            jobs: BTreeMap::new(),
            next_request: 0,
            timeline: Vec::new(),
            events: Vec::new(),
            counters: Counters::default(),
        })
    }

    fn push(&mut self, t: f64, event: Event) {
        self.queue.push(Entry { t, seq: self.seq, event });
        self.seq += 1;
    }

    fn run(mut self, seed: u64) -> Result<SimOutcome> {
        let horizon = self.config.horizon_s;
        for (i, e) in self.workload.iter().enumerate() {
            if e.t() <= horizon {
                self.push(e.t(), Event::Workload(i));
            }
        }
        let dt = self.config.profile_interval_s;
        let mut k = 0u64;
        while k as f64 * dt <= horizon {
            self.push(k as f64 * dt, Event::Tick);
            k += 1;
        }
        self.push(self.config.scheduler.window_s, Event::Window);

        while let Some(entry) = self.queue.pop() {
            if entry.t < self.now {
                return Err(CoreError::ClockRegression { from: self.now, to: entry.t });
            }
            self.now = entry.t;
            match entry.event {
                Event::Workload(i) => self.on_workload(i)?,
                Event::Tick => self.on_tick()?,
                Event::Window => self.on_window()?,
                Event::EdgeArrival(id) => self.on_edge_arrival(id),
                Event::Completion(key) => self.on_completion(key)?,
            }
        }
        let report = MetricsReport::build(self.mode, seed, self.timeline, &self.counters);
        Ok(SimOutcome { report, events: self.events })
    }

    fn on_workload(&mut self, i: usize) -> Result<()> {
        match &self.workload[i] {
            WorkloadEvent::Arrival { client, batch_id, samples, labels, .. } => {
                let ci = *self
                    .client_by_id
                    .get(client.as_str())
                    .ok_or_else(|| CoreError::UnknownTask(format!("client {client}")))?;
                let batch = DataBatch::new(*batch_id, client.clone(), samples.clone(), labels.clone())?;
                let config = self.config;
                let cfg = &config.clients[ci];
                let c = &mut self.clients[ci];
                for _ in 0..batch.len() {
                    c.carry += c.acc.current_acc;
                    let ok = c.carry >= 1.0;
                    if ok {
                        c.carry -= 1.0;
                    }
                    c.flags.push(ok);
                }
                c.recent.push_back(batch.clone());
                let mut held: usize = c.recent.iter().map(DataBatch::len).sum();
                while c.recent.len() > 1 && held - c.recent[0].len() >= cfg.window {
                    held -= c.recent[0].len();
                    c.recent.pop_front();
                }
                c.buffer.push_back(batch);
                while c.buffer.len() > cfg.buffer_batches {
                    c.buffer.pop_front();
                }
            }
            WorkloadEvent::Drift { t, task, sketch, labeler, drop } => {
                let event = DriftEvent { t: *t, sketch: sketch.to_sketch()?, labeler: labeler.clone(), drop: *drop };
                let domain = self.domains.get(task).ok_or_else(|| CoreError::UnknownTask(task.clone()))?;
                let ci = *self.client_by_task.get(task.as_str()).ok_or_else(|| CoreError::UnknownTask(task.clone()))?;
                let before = self.clients[ci].acc;
                let (domain, acc) = inject_drift(domain, &before, &event)?;
                self.domains.insert(task.clone(), domain);
                self.clients[ci].acc = acc;
                self.events.push(TraceRecord::Drift {
                    t: *t,
                    task: task.clone(),
                    acc_before: before.current_acc,
                    acc_after: acc.current_acc,
                });
            }
        }
        Ok(())
    }

    fn on_tick(&mut self) -> Result<()> {
        for ci in 0..self.clients.len() {
            let task = self.config.clients[ci].task.clone();
            self.timeline.push(TimelineRow { t: self.now, task_id: task, accuracy: self.clients[ci].acc.current_acc });
            self.profile(ci)?;
        }
        Ok(())
    }

    /// Current summary of the client's newest window of data.
    fn recent_summary(c: &ClientState) -> Result<Option<(GaussianSketch, LabelHistogram)>> {
        let Some(sketch) = merge_all(c.recent.iter().map(|b| &b.sketch))? else {
            return Ok(None);
        };
        let labels: Vec<i8> = c.recent.iter().flat_map(|b| b.labels.iter().copied()).collect();
        Ok(Some((sketch, LabelHistogram::from_labels(&labels)?)))
    }

    fn profile(&mut self, ci: usize) -> Result<()> {
        let config = self.config;
        let cfg = &config.clients[ci];
        let c = &self.clients[ci];
        if !c.flags.is_full() {
            return Ok(());
        }
        let Some((sketch, hist)) = Self::recent_summary(c)? else {
            return Ok(());
        };
        let window_acc = c.flags.accuracy()?;

        let Some(base) = c.baseline.clone() else {
            // First full window since start or since the last retraining.
            let proxy = match &c.proxy {
                Some(p) => p.clone(),
                None => {
                    let samples: Vec<Vec<f64>> = c.recent.iter().flat_map(|b| b.samples.iter().cloned()).collect();
                    let labels: Vec<i8> = c.recent.iter().flat_map(|b| b.labels.iter().copied()).collect();
                    fit_proxy(&cfg.task, &samples, &labels, cfg.proxy_epochs, None)?
                }
            };
            if c.proxy.is_none() {
                self.events.push(TraceRecord::Publish { t: self.now, proxy: proxy.clone() });
            }
            let c = &mut self.clients[ci];
            c.proxy = Some(proxy);
            c.baseline = Some(Baseline { acc: window_acc, sketch, hist });
            return Ok(());
        };
        if c.outstanding.is_some() {
            return Ok(());
        }

        let drift = DriftReport::new(
            base.acc - window_acc,
            w2_distance(&sketch, &base.sketch)?,
            tv_distance(&hist, &base.hist)?,
            &cfg.thresholds,
        );
        if drift.shift_class == ShiftClass::NoDrift {
            return Ok(());
        }

        let own_proxy = c.proxy.as_ref().expect("proxy is fitted with the baseline");
        let remotes: Vec<RemoteView<'_>> = match self.mode {
            Mode::Independent => Vec::new(),
            Mode::Coevolve => self
                .clients
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != ci && self.config.clients[*k].dim == cfg.dim)
                .filter_map(|(_, other)| {
                    let b = other.baseline.as_ref()?;
                    Some(RemoteView { sketch: &b.sketch, proxy: other.proxy.as_ref()? })
                })
                .collect(),
        };
        let mut scored = Vec::with_capacity(c.buffer.len());
        for b in &c.buffer {
            let score = combined_score(b, &base.sketch, own_proxy, &remotes)?;
            scored.push(ScoredBatch { batch_id: b.batch_id, bytes: b.bytes, score });
        }
        let manifest = resample_budget(&scored, cfg.upload_budget_bytes);
        if manifest.is_empty() {
            log::debug!("client {} detected {:?} but has nothing to upload", cfg.id, drift.shift_class);
            return Ok(());
        }

        let request_id = RequestId(self.next_request);
        self.next_request += 1;
        let chosen: BTreeSet<BatchId> = manifest.iter().copied().collect();
        let c = &mut self.clients[ci];
        let (uploaded, kept): (Vec<DataBatch>, Vec<DataBatch>) =
            c.buffer.drain(..).partition(|b| chosen.contains(&b.batch_id));
        c.buffer = kept.into();
        c.outstanding = Some(request_id);
        let bytes_total: u64 = uploaded.iter().map(|b| b.bytes).sum();
        let t_arrival = self.now + transfer_time(bytes_total, &self.config.network);

        self.events.push(TraceRecord::Request {
            t: self.now,
            request_id,
            client: cfg.id.clone(),
            task: cfg.task.clone(),
            t_arrival,
            drift: drift.clone(),
            manifest: manifest.clone(),
            bytes: bytes_total,
        });
        self.counters.request_count += 1;
        self.counters.bytes_uploaded += bytes_total;
        let request = EvolutionRequest {
            request_id,
            client_id: cfg.id.clone(),
            task_id: cfg.task.clone(),
            t_emit: self.now,
            t_arrival,
            drift,
            manifest,
            bytes_total,
        };
        for b in uploaded {
            self.store.insert(b.batch_id, b);
        }
        self.requests.insert(request_id, request);
        self.in_flight.insert(request_id);
        self.push(t_arrival, Event::EdgeArrival(request_id));
        Ok(())
    }

    fn on_edge_arrival(&mut self, id: RequestId) {
        self.in_flight.remove(&id);
        for b in &self.requests[&id].manifest {
            self.uploaded_at.insert(*b, self.now);
        }
        self.pending.insert(id);
        self.events.push(TraceRecord::EdgeArrival { t: self.now, request_id: id });
    }

    /// Training set of one request: its own uploads, plus in co-evolution
    /// recent foreign uploads that lie close to them.
    fn dataset_for(&self, req: &EvolutionRequest) -> Result<Vec<BatchId>> {
        let mut dataset: BTreeSet<BatchId> = req.manifest.iter().copied().collect();
        if self.mode == Mode::Coevolve {
            let own = merge_all(req.manifest.iter().map(|id| &self.store[id].sketch))?.ok_or(CoreError::EmptyBatch)?;
            let since = self.now - self.config.planner.pool_horizon_s;
            for (id, at) in &self.uploaded_at {
                let b = &self.store[id];
                if *at < since || b.origin_client == req.client_id || b.dim() != own.dim() {
                    continue;
                }
                if w2_distance(&b.sketch, &own)? <= self.config.planner.reuse_radius {
                    dataset.insert(*id);
                }
            }
        }
        Ok(dataset.into_iter().collect())
    }

    fn on_window(&mut self) -> Result<()> {
        let mut pending = Vec::with_capacity(self.pending.len());
        for id in &self.pending {
            let req = &self.requests[id];
            let ci = self.client_by_id[req.client_id.as_str()];
            let job = self.config.clients[ci].retrain_job(*id, self.dataset_for(req)?);
            pending.push(PendingJob { request: req.clone(), job });
        }

        let planner = self.config.planner.params(self.scheduler.pool().max_mem_mb());
        let memory = self.config.io.memory_model();
        let ctx = WindowContext {
            batches: &self.store,
            planner: &planner,
            memory: &memory,
            throughput_mflops: self.config.io.throughput_mflops,
            params: &self.config.scheduler,
            fuse: self.mode == Mode::Coevolve,
        };
        let outcome = self.scheduler.dispatch_window(&pending, self.now, &ctx)?;
        let jobs: BTreeMap<JobId, RetrainJob> = pending.into_iter().map(|p| (p.job.job_id, p.job)).collect();

        for s in &outcome.scheduled {
            for (job, req) in s.group.jobs.iter().zip(&s.requests) {
                self.pending.remove(req);
                self.jobs.insert(*job, jobs[job].clone());
            }
            self.counters.gpu_seconds += s.cost.gpu_seconds;
            self.counters.hits += s.cost.hits;
            self.counters.misses += s.cost.misses;
            self.counters.fusion_savings_mflop += s.group.savings_mflop;
            self.counters.jobs_dispatched += 1;
            if s.group.is_fused() {
                self.counters.fused_jobs += 1;
            }
            self.events.push(TraceRecord::Dispatch {
                t: self.now,
                gpu: s.gpu_id,
                jobs: s.group.jobs.clone(),
                requests: s.requests.clone(),
                priority: s.priority_at_dispatch,
                t_start: s.t_start,
                t_end: s.t_end,
                mem_mb: s.group.mem_mb,
                dataset: s.group.dataset.clone(),
                savings_mflop: s.group.savings_mflop,
                hits: s.cost.hits,
                misses: s.cost.misses,
            });
            self.push(s.t_end, Event::Completion(s.key()));
        }
        for id in &outcome.dropped {
            self.pending.remove(id);
            let ci = self.client_by_id[self.requests[id].client_id.as_str()];
            self.clients[ci].outstanding = None;
            self.counters.requests_dropped += 1;
        }
        if !outcome_is_empty(&outcome) {
            self.events.push(TraceRecord::Window {
                t: self.now,
                gpus_before: outcome.gpus_before,
                gpus_after: outcome.gpus_after,
                dispatched: outcome.scheduled.iter().map(|s| s.key()).collect(),
                deferred: outcome.deferred,
                dropped: outcome.dropped,
            });
        }

        let next = self.now + self.config.scheduler.window_s;
        let busy = !self.pending.is_empty() || !self.in_flight.is_empty() || self.scheduler.running().next().is_some();
        if next <= self.config.horizon_s || busy {
            self.push(next, Event::Window);
        }
        Ok(())
    }

    fn on_completion(&mut self, key: JobId) -> Result<()> {
        let config = self.config;
        let (job, outcomes) = self.scheduler.complete_job(key, self.now)?;
        self.events.push(TraceRecord::Complete {
            t: self.now,
            gpu: job.gpu_id,
            jobs: job.group.jobs.clone(),
            requests: job.requests.clone(),
        });
        for out in outcomes {
            let ci = *self
                .client_by_task
                .get(out.task_id.as_str())
                .ok_or_else(|| CoreError::UnknownTask(out.task_id.clone()))?;
            let cfg = &config.clients[ci];
            let retrain = self.jobs.remove(&out.job_id).expect("dispatched job is recorded");
            let dataset: Vec<&DataBatch> = retrain.dataset.iter().map(|id| &self.store[id]).collect();
            let domain = &self.domains[&out.task_id];
            let scale = self.config.curve.scale;
            let before = self.clients[ci].acc;
            let n_eff = effective_samples(&dataset, &domain.domain_sketch, scale)?;
            let a_max = coverage_ceiling(&dataset, &domain.domain_sketch, &before, scale)?;
            let after = apply_retraining(&before, n_eff, a_max);

            // The task's own uploads carry its labels; refit the proxy on them.
            let own = &self.requests[&out.request_id].manifest;
            let samples: Vec<Vec<f64>> = own.iter().flat_map(|id| self.store[id].samples.iter().cloned()).collect();
            let labels: Vec<i8> = own.iter().flat_map(|id| self.store[id].labels.iter().copied()).collect();
            let proxy = fit_proxy(&cfg.task, &samples, &labels, cfg.proxy_epochs, self.clients[ci].proxy.as_ref())?;

            self.events.push(TraceRecord::Publish { t: self.now, proxy: proxy.clone() });
            let c = &mut self.clients[ci];
            c.acc = after;
            c.proxy = Some(proxy);
            c.flags = AccuracyWindow::new(cfg.window);
            c.recent.clear();
            c.baseline = None;
            c.outstanding = None;
            self.counters.requests_completed += 1;
            self.events.push(TraceRecord::Retrain {
                t: self.now,
                task: out.task_id,
                request_id: out.request_id,
                n_eff,
                a_max,
                acc_before: before.current_acc,
                acc_after: after.current_acc,
            });
        }
        Ok(())
    }
}

fn outcome_is_empty(outcome: &crate::scheduler::WindowOutcome) -> bool {
    outcome.scheduled.is_empty() && outcome.deferred.is_empty() && outcome.dropped.is_empty()
}
