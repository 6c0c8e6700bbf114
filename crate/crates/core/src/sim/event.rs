use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::rc::Rc;

use crate::protocol::{Message, NodeId, PollId};
use crate::time::SimTime;

#[derive(Debug, Clone)]
pub enum SimEvent {
    Deliver { msg: Rc<Message>, dst: NodeId },
    PollTimeout { node: NodeId, poll_id: PollId },
    Sample { node: NodeId },
    End,
}

impl SimEvent {
    /// Same-instant ordering: deliveries, then timeouts, then samples, then end.
    fn rank(&self) -> u8 {
        match self {
            SimEvent::Deliver { .. } => 0,
            SimEvent::PollTimeout { .. } => 1,
            SimEvent::Sample { .. } => 2,
            SimEvent::End => 3,
        }
    }

    fn node(&self) -> u32 {
        match self {
            SimEvent::Deliver { dst, .. } => dst.0,
            SimEvent::PollTimeout { node, .. } | SimEvent::Sample { node } => node.0,
            SimEvent::End => u32::MAX,
        }
    }
}

/// Total order key: `(time, kind rank, node, insertion seq)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventKey {
    pub time: SimTime,
    pub rank: u8,
    pub node: u32,
    pub seq: u64,
}

#[derive(Debug)]
struct Scheduled {
    key: EventKey,
    event: SimEvent,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Deterministic min-queue of simulation events.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Scheduled>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: SimTime, event: SimEvent) -> EventKey {
        let key = EventKey {
            time,
            rank: event.rank(),
            node: event.node(),
            seq: self.next_seq,
        };
        self.next_seq += 1;
        self.heap.push(Reverse(Scheduled { key, event }));
        key
    }

    pub fn pop(&mut self) -> Option<(EventKey, SimEvent)> {
        self.heap.pop().map(|Reverse(s)| (s.key, s.event))
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(s)| s.key.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
