//! Time-ordered event queue with insertion-order tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::device::TaskKind;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    /// Advance every device's energy by one slot.
    EnergySlot,
    BeaconDue { app: usize },
    /// Encoded beacon reaching the devices of an app.
    BeaconArrival { app: usize, bytes: Vec<u8> },
    /// Encoded sensor packet reaching the aggregator.
    PacketArrival { app: usize, bytes: Vec<u8> },
    TaskComplete { app: usize, module: usize, kind: TaskKind },
    PeriodRollover { app: usize },
    TraceEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the max-heap pops the earliest (time, seq) first.
        other.time.cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.schedule(SimTime(10), EventKind::BeaconDue { app: 0 });
        q.schedule(SimTime(5), EventKind::BeaconDue { app: 1 });
        q.schedule(SimTime(10), EventKind::BeaconDue { app: 2 });
        q.schedule(SimTime(5), EventKind::BeaconDue { app: 3 });
        let order: Vec<_> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::BeaconDue { app } => app,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![1, 3, 0, 2]);
    }
}
