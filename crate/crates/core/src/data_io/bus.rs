//! In-process publish/subscribe bus.
//!
//! Many producers, many consumers. Every subscriber of a topic receives every
//! message published after it subscribed, in per-producer FIFO order.

use std::collections::HashMap;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;

use super::AnomalyRecord;
use crate::detector::Sample;

#[derive(Debug, Clone, PartialEq)]
pub enum BusMessage {
    Sample(Sample),
    Anomaly(AnomalyRecord),
}

impl BusMessage {
    /// View the message as a detector input.
    ///
    /// An anomaly becomes a sample of its KPI whose value is the anomaly score,
    /// which lets one detector consume another detector's output.
    pub fn into_sample(self) -> Sample {
        match self {
            BusMessage::Sample(s) => s,
            BusMessage::Anomaly(a) => Sample::new(a.timestamp_ms, a.kpi, a.score),
        }
    }
}

#[derive(Default)]
pub struct Bus {
    topics: Mutex<HashMap<String, Vec<Sender<BusMessage>>>>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, topic: &str) -> Subscription {
        let (tx, rx) = unbounded();
        self.topics.lock().entry(topic.to_owned()).or_default().push(tx);
        Subscription { rx }
    }

    /// Deliver to every live subscriber; returns how many received it.
    pub fn publish(&self, topic: &str, msg: BusMessage) -> usize {
        let mut topics = self.topics.lock();
        let Some(subs) = topics.get_mut(topic) else {
            return 0;
        };
        subs.retain(|tx| tx.send(msg.clone()).is_ok());
        subs.len()
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        self.topics.lock().get(topic).map_or(0, Vec::len)
    }
}

pub struct Subscription {
    rx: Receiver<BusMessage>,
}

/// The bus dropped every sender for this subscription.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusClosed;

impl Subscription {
    /// `Ok(None)` on timeout; `Err(BusClosed)` if the bus itself is gone.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<BusMessage>, BusClosed> {
        match self.rx.recv_timeout(timeout) {
            Ok(m) => Ok(Some(m)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(BusClosed),
        }
    }

    pub fn try_recv(&self) -> Option<BusMessage> {
        self.rx.try_recv().ok()
    }

    pub fn drain(&self) -> Vec<BusMessage> {
        self.rx.try_iter().collect()
    }
}
