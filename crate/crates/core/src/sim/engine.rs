use std::io::Write;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::event::{EventQueue, SimEvent};
use super::radio::{EnergyLedger, EnergyUse};
use super::topology::{generate_topology, Topology};
use crate::protocol::{Message, MessageKind, NodeId, NodeState, ProtocolError};
use crate::scenario::{ConfigError, DropCounts, MessageCounts, NodeReport, RunMetrics, ScenarioConfig};
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("node {node}: {source}")]
    Protocol {
        node: NodeId,
        #[source]
        source: ProtocolError,
    },
    #[error("trace output: {0}")]
    Trace(#[from] std::io::Error),
    #[error("topology has {got} nodes, config expects {expected}")]
    TopologySize { got: usize, expected: usize },
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    t_ns: u64,
    node: u32,
    event: &'a str,
    detail: String,
}

#[derive(Debug, Default)]
struct Counters {
    sent: MessageCounts,
    attempted: u64,
    received: u64,
    dropped: DropCounts,
    err_sq_sum: f64,
    err_count: u64,
    err_max: f64,
}

/// Discrete-event simulation of one deployment.
///
/// Single-threaded and fully determined by the scenario config: every
/// random draw comes from one of the seeded streams and events at the same
/// instant are ordered by kind, node and insertion order.
pub struct Simulation<'w> {
    cfg: ScenarioConfig,
    topology: Topology,
    compromised: Vec<bool>,
    nodes: Vec<NodeState>,
    energy: EnergyLedger,
    alive: Vec<bool>,
    death_time: Vec<Option<SimTime>>,
    /// Air intervals `[start, arrival)` of accepted, undelivered frames per receiver.
    inbound: Vec<Vec<(SimTime, SimTime)>>,
    busy_until: Vec<SimTime>,
    first_notice: Vec<Option<SimTime>>,
    queue: EventQueue,
    field_rng: ChaCha8Rng,
    radio_rng: ChaCha8Rng,
    now: SimTime,
    end: SimTime,
    period: SimTime,
    airtime: SimTime,
    jitter_ns: u64,
    poll_timeout: SimTime,
    counters: Counters,
    trace: Option<Box<dyn Write + 'w>>,
    finished: bool,
}

impl<'w> Simulation<'w> {
    /// Build a simulation with a freshly generated random topology.
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let topology = generate_topology(
            cfg.node_count,
            (cfg.area_m[0], cfg.area_m[1]),
            cfg.range_m,
            cfg.seeds.topology,
        );
        Self::with_topology(cfg, topology)
    }

    /// Build a simulation over a caller-supplied topology.
    pub fn with_topology(cfg: ScenarioConfig, topology: Topology) -> Result<Self, SimError> {
        cfg.validate()?;
        if topology.len() != cfg.node_count {
            return Err(SimError::TopologySize {
                got: topology.len(),
                expected: cfg.node_count,
            });
        }
        let n = cfg.node_count;
        let compromised = cfg.adversary.select(n, cfg.seeds.adversary);
        Ok(Self::assemble(cfg, topology, compromised))
    }

    /// Like [`Simulation::with_topology`] but with an explicit compromised set.
    pub fn with_compromised(
        cfg: ScenarioConfig,
        topology: Topology,
        compromised: Vec<bool>,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        if topology.len() != cfg.node_count || compromised.len() != cfg.node_count {
            return Err(SimError::TopologySize {
                got: topology.len(),
                expected: cfg.node_count,
            });
        }
        Ok(Self::assemble(cfg, topology, compromised))
    }

    fn assemble(cfg: ScenarioConfig, topology: Topology, compromised: Vec<bool>) -> Self {
        let n = cfg.node_count;
        let protocol = cfg.protocol();
        let nodes = (0..n)
            .map(|i| {
                let id = NodeId(i as u32);
                NodeState::new(
                    id,
                    topology.neighbors(id).clone(),
                    topology.two_hop_map(id),
                    protocol.clone(),
                )
            })
            .collect();
        let mut field_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.field);
        let radio_rng = ChaCha8Rng::seed_from_u64(cfg.seeds.loss);
        let period = SimTime::from_secs_f64(cfg.sampling_period_s);
        let end = SimTime::from_secs_f64(cfg.simulation_time_s);

        let mut queue = EventQueue::new();
        for i in 0..n {
            let phase = SimTime(field_rng.random_range(0..period.as_nanos().max(1)));
            if phase < end {
                queue.push(phase, SimEvent::Sample { node: NodeId(i as u32) });
            }
        }
        queue.push(end, SimEvent::End);

        Self {
            energy: EnergyLedger::new(n, cfg.initial_energy_j),
            alive: vec![true; n],
            death_time: vec![None; n],
            inbound: vec![Vec::new(); n],
            busy_until: vec![SimTime::ZERO; n],
            first_notice: vec![None; n],
            queue,
            field_rng,
            radio_rng,
            now: SimTime::ZERO,
            end,
            period,
            airtime: SimTime::from_secs_f64(cfg.radio.airtime_s),
            jitter_ns: SimTime::from_secs_f64(cfg.radio.tx_jitter_s).as_nanos(),
            poll_timeout: SimTime::from_secs_f64(cfg.poll_timeout_s),
            counters: Counters::default(),
            trace: None,
            finished: false,
            cfg,
            topology,
            compromised,
            nodes,
        }
    }

    /// Stream one JSON record per event to `sink`.
    pub fn set_trace(&mut self, sink: impl Write + 'w) {
        self.trace = Some(Box::new(sink));
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut NodeState {
        &mut self.nodes[id.index()]
    }

    pub fn compromised(&self) -> &[bool] {
        &self.compromised
    }

    pub fn energy(&self) -> &EnergyLedger {
        &self.energy
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive[id.index()]
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn sent(&self) -> MessageCounts {
        self.counters.sent
    }

    /// True maximum of the uncorrupted field over alive honest nodes.
    pub fn ground_truth_max(&self, t: SimTime) -> f64 {
        let secs = t.as_secs_f64();
        (0..self.nodes.len())
            .filter(|i| self.alive[*i] && !self.compromised[*i])
            .map(|i| self.cfg.field.true_mean(NodeId(i as u32), secs, &self.topology))
            .reduce(f64::max)
            .unwrap_or(self.cfg.field.base_mean_c)
    }

    fn trace(&mut self, node: NodeId, event: &str, detail: impl FnOnce() -> String) -> Result<(), SimError> {
        if let Some(sink) = self.trace.as_mut() {
            let rec = TraceRecord {
                t_ns: self.now.as_nanos(),
                node: node.0,
                event,
                detail: detail(),
            };
            serde_json::to_writer(&mut *sink, &rec).map_err(std::io::Error::from)?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Process events up to and including time `until`.
    pub fn run_until(&mut self, until: SimTime) -> Result<(), SimError> {
        while !self.finished {
            match self.queue.peek_time() {
                Some(t) if t <= until => {}
                _ => break,
            }
            let (key, event) = self.queue.pop().expect("peeked");
            self.now = key.time;
            self.dispatch(event)?;
        }
        Ok(())
    }

    /// Run to `simulation_time_s` and return the metrics.
    pub fn run(mut self) -> Result<RunMetrics, SimError> {
        self.run_until(SimTime(u64::MAX))?;
        if let Some(sink) = self.trace.as_mut() {
            sink.flush()?;
        }
        Ok(self.metrics())
    }

    fn dispatch(&mut self, event: SimEvent) -> Result<(), SimError> {
        match event {
            SimEvent::Sample { node } => self.on_sample(node),
            SimEvent::Deliver { msg, dst } => self.on_deliver(&msg, dst),
            SimEvent::PollTimeout { node, poll_id } => {
                if !self.alive[node.index()] {
                    return Ok(());
                }
                self.trace(node, "poll_timeout", || format!("poll={}", poll_id.serial))?;
                let out = self.nodes[node.index()]
                    .on_poll_timeout(poll_id)
                    .map_err(|source| SimError::Protocol { node, source })?;
                self.transmit(node, out)
            }
            SimEvent::End => self.finish(),
        }
    }

    fn finish(&mut self) -> Result<(), SimError> {
        // Polls still open at the end are decided on what has arrived; any
        // resulting notices would go out after the run and are not sent.
        for i in 0..self.nodes.len() {
            if !self.alive[i] {
                continue;
            }
            let pending: Vec<_> = self.nodes[i].pending_polls().keys().copied().collect();
            for pid in pending {
                let node = NodeId(i as u32);
                self.nodes[i]
                    .on_poll_timeout(pid)
                    .map_err(|source| SimError::Protocol { node, source })?;
            }
        }
        self.trace(NodeId(u32::MAX), "end", String::new)?;
        self.finished = true;
        Ok(())
    }

    fn kill(&mut self, node: NodeId) -> Result<(), SimError> {
        let i = node.index();
        if self.alive[i] {
            self.alive[i] = false;
            self.death_time[i] = Some(self.now);
            self.trace(node, "death", String::new)?;
        }
        Ok(())
    }

    fn on_sample(&mut self, node: NodeId) -> Result<(), SimError> {
        let i = node.index();
        if !self.alive[i] {
            return Ok(());
        }
        let next = self.now + self.period;
        if next < self.end {
            self.queue.push(next, SimEvent::Sample { node });
        }
        let t = self.now.as_secs_f64();
        let mut value = self.cfg.field.sample(node, t, &self.topology, &mut self.field_rng);
        if self.compromised[i] && t >= self.cfg.adversary.onset_s {
            value = self.cfg.adversary.attack.corrupt(value, &mut self.field_rng);
        }
        let joules = self.cfg.sense_power_w * self.cfg.sample_duration_s;
        if self.energy.debit(i, EnergyUse::Sense, joules) {
            return self.kill(node);
        }
        let out = self.nodes[i]
            .on_sample(value, self.now)
            .map_err(|source| SimError::Protocol { node, source })?;
        if !self.compromised[i] {
            if let Some(est) = self.nodes[i].global_estimate() {
                let err = est.mean_scalar() - self.ground_truth_max(self.now);
                self.counters.err_sq_sum += err * err;
                self.counters.err_count += 1;
                self.counters.err_max = self.counters.err_max.max(err.abs());
            }
        }
        if self.trace.is_some() {
            let mean = self.nodes[i].global_estimate().map(|e| e.mean_scalar());
            self.trace(node, "sample", || match mean {
                Some(m) => format!("value={value:.6} estimate={m:.6}"),
                None => format!("value={value:.6}"),
            })?;
        }
        self.transmit(node, out)
    }

    fn on_deliver(&mut self, msg: &Message, dst: NodeId) -> Result<(), SimError> {
        let i = dst.index();
        if let Some(k) = self.inbound[i].iter().position(|(_, end)| *end == self.now) {
            self.inbound[i].swap_remove(k);
        }
        if !self.alive[i] {
            self.counters.dropped.dead += 1;
            return Ok(());
        }
        self.counters.received += 1;
        let joules = self.cfg.rx_power_w * self.cfg.radio.airtime_s;
        if self.energy.debit(i, EnergyUse::Receive, joules) {
            return self.kill(dst);
        }
        if self.trace.is_some() {
            let src = msg.sender();
            let kind = msg.kind();
            self.trace(dst, "deliver", || format!("kind={kind:?} from={}", src.0))?;
        }
        let out = self.nodes[i]
            .handle(msg, self.now)
            .map_err(|source| SimError::Protocol { node: dst, source })?;
        self.transmit(dst, out)
    }

    fn transmit(&mut self, src: NodeId, msgs: Vec<Message>) -> Result<(), SimError> {
        let s = src.index();
        for msg in msgs {
            if !self.alive[s] {
                break;
            }
            let jitter = if self.jitter_ns > 0 {
                SimTime(self.radio_rng.random_range(0..=self.jitter_ns))
            } else {
                SimTime::ZERO
            };
            let start = (self.now + jitter).max(self.busy_until[s]);
            self.busy_until[s] = start + self.airtime;
            let arrival = start + self.airtime;

            match msg.kind() {
                MessageKind::Estimate => self.counters.sent.estimate += 1,
                MessageKind::PollRequest => self.counters.sent.poll_request += 1,
                MessageKind::PollReply => self.counters.sent.poll_reply += 1,
                MessageKind::IsolationNotice => self.counters.sent.isolation_notice += 1,
            }
            match &msg {
                Message::IsolationNotice { suspect, .. } => {
                    self.first_notice[suspect.index()].get_or_insert(self.now);
                }
                Message::PollRequest { poll_id, .. } => {
                    self.queue.push(
                        self.now + self.poll_timeout,
                        SimEvent::PollTimeout {
                            node: src,
                            poll_id: *poll_id,
                        },
                    );
                }
                _ => {}
            }
            if self.trace.is_some() {
                let line = serde_json::to_string(&msg).map_err(std::io::Error::from)?;
                self.trace(src, "send", || line)?;
            }

            let died = self.energy.debit(
                s,
                EnergyUse::Transmit,
                self.cfg.tx_power_w * self.cfg.radio.airtime_s,
            );
            let msg = Rc::new(msg);
            let recipients: Vec<NodeId> = self.topology.neighbors(src).iter().copied().collect();
            for dst in recipients {
                let d = dst.index();
                if !self.alive[d] {
                    continue;
                }
                self.counters.attempted += 1;
                let p = self.cfg.radio.loss_probability;
                if p > 0.0 && self.radio_rng.random::<f64>() < p {
                    self.counters.dropped.loss += 1;
                    self.trace(dst, "drop", || format!("cause=loss from={}", src.0))?;
                    continue;
                }
                // The receiver buffers frames that are on the air at once.
                let overlapping = self.inbound[d]
                    .iter()
                    .filter(|(s0, e0)| *s0 < arrival && start < *e0)
                    .count();
                if overlapping >= self.cfg.buffer_capacity {
                    self.counters.dropped.buffer += 1;
                    self.trace(dst, "drop", || format!("cause=buffer from={}", src.0))?;
                    continue;
                }
                self.inbound[d].push((start, arrival));
                self.queue.push(
                    arrival,
                    SimEvent::Deliver {
                        msg: Rc::clone(&msg),
                        dst,
                    },
                );
            }
            if died {
                self.kill(src)?;
            }
        }
        Ok(())
    }

    /// Snapshot of the metrics at the current simulation time.
    pub fn metrics(&self) -> RunMetrics {
        let n = self.nodes.len();
        let c = &self.counters;
        let gt = self.ground_truth_max(self.now);
        let tol = 3.0 * self.cfg.field.base_sigma_c;

        let mut reports = Vec::with_capacity(n);
        let (mut tp, mut fp, mut fne) = (0, 0, 0);
        let mut ttd = Vec::new();
        let (mut honest_alive, mut honest_close) = (0usize, 0usize);
        for i in 0..n {
            let id = NodeId(i as u32);
            let alive_neighbors: Vec<NodeId> = self
                .topology
                .neighbors(id)
                .iter()
                .copied()
                .filter(|m| self.alive[m.index()])
                .collect();
            let isolated_by = alive_neighbors
                .iter()
                .filter(|m| self.nodes[m.index()].is_isolated(id))
                .count();
            let flagged = 2 * isolated_by > alive_neighbors.len();
            let est = self.nodes[i].global_estimate();
            match (self.compromised[i], flagged) {
                (true, true) => {
                    tp += 1;
                    if let Some(t) = self.first_notice[i] {
                        let onset = SimTime::from_secs_f64(self.cfg.adversary.onset_s);
                        ttd.push((t - onset).as_secs_f64());
                    }
                }
                (true, false) => fne += 1,
                (false, true) => fp += 1,
                (false, false) => {}
            }
            if !self.compromised[i] && self.alive[i] {
                honest_alive += 1;
                if est.is_some_and(|e| (e.mean_scalar() - gt).abs() <= tol) {
                    honest_close += 1;
                }
            }
            reports.push(NodeReport {
                id: id.0,
                compromised: self.compromised[i],
                alive: self.alive[i],
                death_time_s: self.death_time[i].map(SimTime::as_secs_f64),
                degree: self.topology.neighbors(id).len(),
                final_mean: est.map(|e| e.mean_scalar()),
                final_variance: est.map(|e| e.variance()),
                isolated_by,
                flagged,
                first_notice_s: self.first_notice[i].map(SimTime::as_secs_f64),
                energy: *self.energy.node(i),
                remaining_j: self.energy.remaining_j(i),
                broadcasts: self.nodes[i].stats().broadcasts,
            });
        }

        let compromised_count = self.compromised.iter().filter(|c| **c).count();
        let honest_count = n - compromised_count;
        let sum = |f: fn(&crate::protocol::NodeStats) -> u64| -> u64 {
            self.nodes.iter().map(|s| f(s.stats())).sum()
        };
        let energies = self.energy.nodes();
        let mut dropped = c.dropped;
        dropped.isolation = sum(|s| s.dropped_isolated);
        dropped.unknown = sum(|s| s.dropped_unknown);

        RunMetrics {
            seeds: self.cfg.seeds.clone(),
            security_enabled: self.cfg.security_enabled,
            node_count: n,
            compromised_count,
            honest_count,
            component_count: self.topology.component_count(),
            mean_degree: self.topology.mean_degree(),
            sent: c.sent,
            deliveries_attempted: c.attempted,
            deliveries_received: c.received,
            dropped,
            delivery_ratio: if c.attempted == 0 {
                1.0
            } else {
                c.received as f64 / c.attempted as f64
            },
            energy_total_j: self.energy.total_spent_j(),
            energy_tx_j: energies.iter().map(|e| e.spent_tx_j).sum(),
            energy_rx_j: energies.iter().map(|e| e.spent_rx_j).sum(),
            energy_sense_j: energies.iter().map(|e| e.spent_sense_j).sum(),
            dead_nodes: self.alive.iter().filter(|a| !**a).count(),
            estimate_rmse: if c.err_count == 0 {
                0.0
            } else {
                (c.err_sq_sum / c.err_count as f64).sqrt()
            },
            estimate_max_abs_error: c.err_max,
            converged_fraction: if honest_alive == 0 {
                1.0
            } else {
                honest_close as f64 / honest_alive as f64
            },
            final_ground_truth_max: gt,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fne,
            detection_rate: tp as f64 / compromised_count.max(1) as f64,
            fp_rate: fp as f64 / honest_count.max(1) as f64,
            fn_rate: fne as f64 / compromised_count.max(1) as f64,
            mean_time_to_detection_s: if ttd.is_empty() {
                None
            } else {
                Some(ttd.iter().sum::<f64>() / ttd.len() as f64)
            },
            polls_opened: sum(|s| s.polls_opened),
            verdicts_malicious: sum(|s| s.verdicts_malicious),
            verdicts_benign: sum(|s| s.verdicts_benign),
            verdicts_inconclusive: sum(|s| s.verdicts_inconclusive),
            tainted_broadcasts: sum(|s| s.tainted_broadcasts),
            suspect_self_replies: sum(|s| s.suspect_self_replies),
            duplicate_replies: sum(|s| s.duplicate_replies),
            nodes: reports,
        }
    }
}

/// Generate the topology, run the scenario to completion and collect metrics.
pub fn run(config: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    Simulation::new(config.clone())?.run()
}

/// As [`run`], streaming the per-event trace to `sink` as NDJSON.
pub fn run_traced(config: &ScenarioConfig, sink: impl Write) -> Result<RunMetrics, SimError> {
    let mut sim = Simulation::new(config.clone())?;
    sim.set_trace(sink);
    sim.run()
}
