//! Per-node protocol state machine.
//!
//! A node keeps a running estimate of the network maximum. New samples are
//! folded in with [`combine_local`], estimates heard from neighbours are
//! merged with [`fuse_global`], and the result is rebroadcast only when it
//! would noticeably change what some neighbour believes. An estimate that
//! lands more than `sigma_factor` standard deviations away from the node's
//! own opens a neighbourhood poll; a strict majority of dissenting replies
//! gets the sender isolated.
//!
//! The state machine never touches a network. Every handler returns the
//! messages the node wants broadcast and the simulator does the rest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{
    combine_local, deviation_sigmas, fuse_global, FusionError, FusionParams, GaussianEstimate,
};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Poll identifier; unique network-wide because it carries the accuser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PollId {
    pub accuser: NodeId,
    pub serial: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Message {
    EstimateBroadcast {
        src: NodeId,
        estimate: GaussianEstimate,
        seq: u64,
    },
    PollRequest {
        src: NodeId,
        suspect: NodeId,
        poll_id: PollId,
    },
    PollReply {
        src: NodeId,
        poll_id: PollId,
        estimate: GaussianEstimate,
    },
    IsolationNotice {
        accuser: NodeId,
        suspect: NodeId,
    },
}

impl Message {
    pub fn sender(&self) -> NodeId {
        match self {
            Message::EstimateBroadcast { src, .. }
            | Message::PollRequest { src, .. }
            | Message::PollReply { src, .. } => *src,
            Message::IsolationNotice { accuser, .. } => *accuser,
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self {
            Message::EstimateBroadcast { .. } => MessageKind::Estimate,
            Message::PollRequest { .. } => MessageKind::PollRequest,
            Message::PollReply { .. } => MessageKind::PollReply,
            Message::IsolationNotice { .. } => MessageKind::IsolationNotice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Estimate,
    PollRequest,
    PollReply,
    IsolationNotice,
}

impl MessageKind {
    /// True for traffic that only exists because the security module runs.
    pub fn is_security(self) -> bool {
        !matches!(self, MessageKind::Estimate)
    }
}

/// What the 2 % broadcast gate compares the new estimate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastGate {
    /// Each neighbour's most recent estimate as stored in the table.
    #[default]
    PerNeighbor,
    /// The value this node last broadcast.
    LastSent,
}

/// When an estimate that failed the deviation test enters the global estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuspectFusion {
    /// Fuse on arrival, like any other estimate, while the poll runs.
    #[default]
    Immediate,
    /// Hold it back until the poll returns a benign verdict.
    AfterVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub broadcast_threshold_pct: f64,
    pub sigma_factor: f64,
    /// In standard deviations of the global estimate.
    pub sharp_fall_threshold_sigmas: f64,
    pub poll_timeout: SimTime,
    /// Standard deviation attached to raw samples, in sensed units.
    pub sensor_noise_sigma: f64,
    pub security_enabled: bool,
    pub gate: BroadcastGate,
    pub suspect_fusion: SuspectFusion,
    /// Treat a poll answered by no more than half of the polled neighbours
    /// as inconclusive: nobody is isolated and nothing held is fused.
    pub reply_quorum: bool,
    pub fusion: FusionParams,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            broadcast_threshold_pct: 2.0,
            sigma_factor: 3.0,
            sharp_fall_threshold_sigmas: 1.0,
            poll_timeout: SimTime::from_secs_f64(1.0),
            sensor_noise_sigma: 1.0,
            security_enabled: true,
            gate: BroadcastGate::PerNeighbor,
            suspect_fusion: SuspectFusion::Immediate,
            reply_quorum: false,
            fusion: FusionParams::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let positive = [
            ("broadcast_threshold_pct", self.broadcast_threshold_pct),
            ("sigma_factor", self.sigma_factor),
            ("sharp_fall_threshold_sigmas", self.sharp_fall_threshold_sigmas),
            ("sensor_noise_sigma", self.sensor_noise_sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ProtocolError::InvalidConfig(name));
            }
        }
        if self.poll_timeout == SimTime::ZERO {
            return Err(ProtocolError::InvalidConfig("poll_timeout"));
        }
        self.fusion.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("invalid protocol parameter `{0}`")]
    InvalidConfig(&'static str),
    #[error("non-finite measurement {0}")]
    BadMeasurement(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Malicious,
    Benign,
}

/// Majority vote over poll replies.
///
/// Malicious iff strictly more than half of `replies` sit more than
/// `sigma_factor` of their own standard deviations away from the suspect.
/// No replies means no evidence, so Benign.
pub fn verdict(
    suspect_estimate: &GaussianEstimate,
    replies: &[GaussianEstimate],
    sigma_factor: f64,
) -> Result<Verdict, FusionError> {
    if replies.is_empty() {
        return Ok(Verdict::Benign);
    }
    let mut deviating = 0usize;
    for r in replies {
        if deviation_sigmas(suspect_estimate, r)? > sigma_factor {
            deviating += 1;
        }
    }
    Ok(if 2 * deviating > replies.len() {
        Verdict::Malicious
    } else {
        Verdict::Benign
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PollContext {
    pub suspect: NodeId,
    pub suspect_estimate: GaussianEstimate,
    pub expected: BTreeSet<NodeId>,
    pub replies: BTreeMap<NodeId, GaussianEstimate>,
    pub deadline: SimTime,
}

/// Counters a node accumulates over a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct NodeStats {
    pub broadcasts: u64,
    pub tainted_broadcasts: u64,
    pub polls_opened: u64,
    pub verdicts_malicious: u64,
    pub verdicts_benign: u64,
    pub verdicts_inconclusive: u64,
    pub dropped_isolated: u64,
    pub dropped_unknown: u64,
    pub dropped_stale_poll: u64,
    pub duplicate_replies: u64,
    pub duplicate_broadcasts: u64,
    pub suspect_self_replies: u64,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    me: NodeId,
    neighbors: BTreeSet<NodeId>,
    two_hop: BTreeMap<NodeId, BTreeSet<NodeId>>,
    global_estimate: Option<GaussianEstimate>,
    last_local_mean: Option<f64>,
    last_broadcast: Option<GaussianEstimate>,
    neighbor_table: BTreeMap<NodeId, (GaussianEstimate, SimTime)>,
    last_seq: BTreeMap<NodeId, u64>,
    isolated: BTreeSet<NodeId>,
    muted: bool,
    pending_polls: BTreeMap<PollId, PollContext>,
    next_seq: u64,
    next_poll: u32,
    config: ProtocolConfig,
    stats: NodeStats,
}

const REL_EPS: f64 = 1e-9;

fn relative_change_pct(new: f64, reference: f64) -> f64 {
    (new - reference).abs() / reference.abs().max(REL_EPS) * 100.0
}

impl NodeState {
    /// `two_hop[n]` is the neighbour set of neighbour `n`.
    pub fn new(
        me: NodeId,
        neighbors: BTreeSet<NodeId>,
        two_hop: BTreeMap<NodeId, BTreeSet<NodeId>>,
        config: ProtocolConfig,
    ) -> Self {
        Self {
            me,
            neighbors,
            two_hop,
            global_estimate: None,
            last_local_mean: None,
            last_broadcast: None,
            neighbor_table: BTreeMap::new(),
            last_seq: BTreeMap::new(),
            isolated: BTreeSet::new(),
            muted: false,
            pending_polls: BTreeMap::new(),
            next_seq: 0,
            next_poll: 0,
            config,
            stats: NodeStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.me
    }

    pub fn neighbors(&self) -> &BTreeSet<NodeId> {
        &self.neighbors
    }

    pub fn global_estimate(&self) -> Option<&GaussianEstimate> {
        self.global_estimate.as_ref()
    }

    pub fn last_local_mean(&self) -> Option<f64> {
        self.last_local_mean
    }

    pub fn last_broadcast(&self) -> Option<&GaussianEstimate> {
        self.last_broadcast.as_ref()
    }

    pub fn neighbor_table(&self) -> &BTreeMap<NodeId, (GaussianEstimate, SimTime)> {
        &self.neighbor_table
    }

    pub fn isolated(&self) -> &BTreeSet<NodeId> {
        &self.isolated
    }

    pub fn is_isolated(&self, n: NodeId) -> bool {
        self.isolated.contains(&n)
    }

    /// True once a neighbour has declared this node compromised.
    pub fn is_muted(&self) -> bool {
        self.muted
    }

    pub fn pending_polls(&self) -> &BTreeMap<PollId, PollContext> {
        &self.pending_polls
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    /// Overwrite the current estimate. Used to set up scenarios.
    pub fn set_global_estimate(&mut self, estimate: GaussianEstimate) {
        self.global_estimate = Some(estimate);
    }

    pub fn set_last_local_mean(&mut self, mean: Option<f64>) {
        self.last_local_mean = mean;
    }

    pub fn set_last_broadcast(&mut self, estimate: Option<GaussianEstimate>) {
        self.last_broadcast = estimate;
    }

    /// Store `estimate` as the latest value heard from `from`.
    pub fn record_neighbor(&mut self, from: NodeId, estimate: GaussianEstimate, at: SimTime) {
        self.neighbor_table.insert(from, (estimate, at));
    }

    fn local_observation(&self, mean: f64) -> Result<GaussianEstimate, FusionError> {
        let s = self.config.sensor_noise_sigma;
        GaussianEstimate::scalar(mean, s * s)
    }

    /// Route an incoming message to its handler.
    pub fn handle(&mut self, msg: &Message, now: SimTime) -> Result<Vec<Message>, ProtocolError> {
        match msg {
            Message::EstimateBroadcast { src, estimate, seq } => {
                self.on_estimate(*src, estimate, *seq, now)
            }
            Message::PollRequest {
                src,
                suspect,
                poll_id,
            } => Ok(self.on_poll_request(*src, *suspect, *poll_id)),
            Message::PollReply {
                src,
                poll_id,
                estimate,
            } => self.on_poll_reply(*src, *poll_id, estimate, now),
            Message::IsolationNotice { accuser, suspect } => {
                self.on_isolation_notice(*accuser, *suspect)?;
                Ok(Vec::new())
            }
        }
    }

    /// A new local reading: fold it into the estimate and maybe broadcast.
    pub fn on_sample(
        &mut self,
        measurement: f64,
        _now: SimTime,
    ) -> Result<Vec<Message>, ProtocolError> {
        if !measurement.is_finite() {
            return Err(ProtocolError::BadMeasurement(measurement));
        }
        let local = self.local_observation(measurement)?;
        let new = match &self.global_estimate {
            None => local,
            Some(global) => combine_local(
                &local,
                global,
                self.last_local_mean,
                self.config.sharp_fall_threshold_sigmas,
                &self.config.fusion,
            )?,
        };
        self.last_local_mean = Some(measurement);
        self.global_estimate = Some(new);
        Ok(self.maybe_broadcast(None).into_iter().collect())
    }

    /// An estimate broadcast by neighbour `src`.
    pub fn on_estimate(
        &mut self,
        src: NodeId,
        estimate: &GaussianEstimate,
        seq: u64,
        now: SimTime,
    ) -> Result<Vec<Message>, ProtocolError> {
        if self.isolated.contains(&src) {
            self.stats.dropped_isolated += 1;
            return Ok(Vec::new());
        }
        if !self.neighbors.contains(&src) {
            self.stats.dropped_unknown += 1;
            return Ok(Vec::new());
        }
        if self.last_seq.get(&src).is_some_and(|last| seq <= *last) {
            self.stats.duplicate_broadcasts += 1;
            return Ok(Vec::new());
        }
        self.last_seq.insert(src, seq);
        self.neighbor_table.insert(src, (estimate.clone(), now));

        let mut out = Vec::new();
        // Until the first local reading there is nothing to test against;
        // the table entry is kept for the broadcast gate only.
        let Some(current) = self.global_estimate.take() else {
            return Ok(out);
        };
        let deviation = deviation_sigmas(estimate, &current)?;
        if self.config.security_enabled && deviation > self.config.sigma_factor {
            out.extend(self.open_poll(src, estimate.clone(), now)?);
            if self.is_held(src) {
                self.global_estimate = Some(current);
                return Ok(out);
            }
        }
        self.global_estimate = Some(fuse_global(&current, estimate, &self.config.fusion)?);
        out.extend(self.maybe_broadcast(Some(src)));
        Ok(out)
    }

    /// Whether estimates from `n` are being held back pending a verdict.
    fn is_held(&self, n: NodeId) -> bool {
        self.config.suspect_fusion == SuspectFusion::AfterVerdict
            && self.pending_polls.values().any(|p| p.suspect == n)
    }

    fn open_poll(
        &mut self,
        suspect: NodeId,
        suspect_estimate: GaussianEstimate,
        now: SimTime,
    ) -> Result<Option<Message>, ProtocolError> {
        if self.pending_polls.values().any(|p| p.suspect == suspect) {
            return Ok(None);
        }
        let expected: BTreeSet<NodeId> = self
            .neighbors
            .iter()
            .copied()
            .filter(|n| *n != suspect && !self.isolated.contains(n))
            .collect();
        self.stats.polls_opened += 1;
        if expected.is_empty() {
            // Nobody to ask; settle immediately on zero evidence.
            self.stats.verdicts_benign += 1;
            return Ok(None);
        }
        let poll_id = PollId {
            accuser: self.me,
            serial: self.next_poll,
        };
        self.next_poll += 1;
        self.pending_polls.insert(
            poll_id,
            PollContext {
                suspect,
                suspect_estimate,
                expected,
                replies: BTreeMap::new(),
                deadline: now + self.config.poll_timeout,
            },
        );
        Ok(Some(Message::PollRequest {
            src: self.me,
            suspect,
            poll_id,
        }))
    }

    /// A neighbour asks for this node's current estimate.
    pub fn on_poll_request(&mut self, src: NodeId, _suspect: NodeId, poll_id: PollId) -> Vec<Message> {
        if self.isolated.contains(&src) {
            self.stats.dropped_isolated += 1;
            return Vec::new();
        }
        if !self.neighbors.contains(&src) {
            self.stats.dropped_unknown += 1;
            return Vec::new();
        }
        match &self.global_estimate {
            Some(e) => vec![Message::PollReply {
                src: self.me,
                poll_id,
                estimate: e.clone(),
            }],
            None => Vec::new(),
        }
    }

    pub fn on_poll_reply(
        &mut self,
        src: NodeId,
        poll_id: PollId,
        estimate: &GaussianEstimate,
        now: SimTime,
    ) -> Result<Vec<Message>, ProtocolError> {
        if self.isolated.contains(&src) {
            self.stats.dropped_isolated += 1;
            return Ok(Vec::new());
        }
        let Some(ctx) = self.pending_polls.get_mut(&poll_id) else {
            self.stats.dropped_stale_poll += 1;
            return Ok(Vec::new());
        };
        if src == ctx.suspect {
            self.stats.suspect_self_replies += 1;
        } else if ctx.replies.contains_key(&src) {
            self.stats.duplicate_replies += 1;
        } else {
            ctx.replies.insert(src, estimate.clone());
        }
        let isolated = &self.isolated;
        let complete = ctx
            .expected
            .iter()
            .filter(|n| !isolated.contains(n))
            .all(|n| ctx.replies.contains_key(n));
        if complete || now >= ctx.deadline {
            return self.close_poll(poll_id);
        }
        Ok(Vec::new())
    }

    /// Deadline for `poll_id` reached; decide on whatever arrived.
    pub fn on_poll_timeout(&mut self, poll_id: PollId) -> Result<Vec<Message>, ProtocolError> {
        if self.pending_polls.contains_key(&poll_id) {
            self.close_poll(poll_id)
        } else {
            Ok(Vec::new())
        }
    }

    fn close_poll(&mut self, poll_id: PollId) -> Result<Vec<Message>, ProtocolError> {
        let Some(ctx) = self.pending_polls.remove(&poll_id) else {
            return Ok(Vec::new());
        };
        let replies: Vec<GaussianEstimate> = ctx
            .replies
            .iter()
            .filter(|(n, _)| !self.isolated.contains(n))
            .map(|(_, e)| e.clone())
            .collect();
        if self.config.reply_quorum {
            let polled = ctx.expected.iter().filter(|n| !self.isolated.contains(n)).count();
            if 2 * replies.len() <= polled {
                self.stats.verdicts_inconclusive += 1;
                return Ok(Vec::new());
            }
        }
        match verdict(&ctx.suspect_estimate, &replies, self.config.sigma_factor)? {
            Verdict::Benign => {
                self.stats.verdicts_benign += 1;
                if self.config.suspect_fusion == SuspectFusion::AfterVerdict && !self.is_held(ctx.suspect) {
                    let held = self.neighbor_table.get(&ctx.suspect).map(|(e, _)| e.clone());
                    if let (Some(held), Some(current)) = (held, self.global_estimate.as_ref()) {
                        self.global_estimate = Some(fuse_global(current, &held, &self.config.fusion)?);
                        return Ok(self.maybe_broadcast(Some(ctx.suspect)).into_iter().collect());
                    }
                }
                Ok(Vec::new())
            }
            Verdict::Malicious => {
                self.stats.verdicts_malicious += 1;
                if self.isolated.contains(&ctx.suspect) {
                    return Ok(Vec::new());
                }
                self.isolate(ctx.suspect)?;
                Ok(vec![Message::IsolationNotice {
                    accuser: self.me,
                    suspect: ctx.suspect,
                }])
            }
        }
    }

    /// Cut `suspect` off and rebuild the estimate without it.
    ///
    /// The estimate restarts from the last local reading and re-fuses every
    /// surviving table entry in ascending id order. Idempotent.
    pub fn isolate(&mut self, suspect: NodeId) -> Result<(), ProtocolError> {
        if suspect == self.me || !self.isolated.insert(suspect) {
            return Ok(());
        }
        self.neighbor_table.remove(&suspect);
        let mut rebuilt = match self.last_local_mean {
            Some(m) => Some(self.local_observation(m)?),
            None => None,
        };
        for (n, (est, _)) in &self.neighbor_table {
            if self.is_held(*n) {
                continue;
            }
            rebuilt = Some(match rebuilt {
                None => est.clone(),
                Some(acc) => fuse_global(&acc, est, &self.config.fusion)?,
            });
        }
        if let Some(e) = rebuilt {
            self.global_estimate = Some(e);
        }
        Ok(())
    }

    /// Neighbourhood broadcast declaring `suspect` compromised.
    ///
    /// Accepted from any non-isolated neighbour. A notice naming this node
    /// mutes its estimate broadcasts for the rest of the run.
    pub fn on_isolation_notice(
        &mut self,
        accuser: NodeId,
        suspect: NodeId,
    ) -> Result<(), ProtocolError> {
        if self.isolated.contains(&accuser) {
            self.stats.dropped_isolated += 1;
            return Ok(());
        }
        if !self.neighbors.contains(&accuser) {
            self.stats.dropped_unknown += 1;
            return Ok(());
        }
        if suspect == self.me {
            self.muted = true;
            return Ok(());
        }
        self.isolate(suspect)
    }

    /// Whether broadcasting `new` would tell some neighbour something new.
    ///
    /// With `trigger` set, neighbours that also hear `trigger` directly are
    /// skipped: they already received the information this update came from.
    pub fn decide_broadcast(&self, new: &GaussianEstimate, trigger: Option<NodeId>) -> bool {
        if self.muted {
            return false;
        }
        let mean = new.mean_scalar();
        let pct = self.config.broadcast_threshold_pct;
        let heard_from_trigger = |n: NodeId| match trigger {
            None => false,
            Some(t) => n == t || self.two_hop.get(&t).is_some_and(|s| s.contains(&n)),
        };
        let mut audience = self
            .neighbors
            .iter()
            .copied()
            .filter(|n| !self.isolated.contains(n) && !heard_from_trigger(*n));
        match self.config.gate {
            BroadcastGate::PerNeighbor => audience.any(|n| match self.neighbor_table.get(&n) {
                None => true,
                Some((e, _)) => relative_change_pct(mean, e.mean_scalar()) > pct,
            }),
            BroadcastGate::LastSent => {
                audience.next().is_some()
                    && self
                        .last_broadcast
                        .as_ref()
                        .is_none_or(|last| relative_change_pct(mean, last.mean_scalar()) > pct)
            }
        }
    }

    fn maybe_broadcast(&mut self, trigger: Option<NodeId>) -> Option<Message> {
        let est = self.global_estimate.as_ref()?;
        if !self.decide_broadcast(est, trigger) {
            return None;
        }
        let estimate = est.clone();
        self.next_seq += 1;
        self.stats.broadcasts += 1;
        if !self.pending_polls.is_empty() {
            self.stats.tainted_broadcasts += 1;
        }
        self.last_broadcast = Some(estimate.clone());
        Some(Message::EstimateBroadcast {
            src: self.me,
            estimate,
            seq: self.next_seq,
        })
    }
}
