use serde::{Deserialize, Serialize};

use crate::queue::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Beacon,
    Data,
    BsAdvert,
    BsUp,
    BsUpAck,
    BsDown,
}

impl MessageKind {
    pub const ALL: [MessageKind; 6] = [
        MessageKind::Beacon,
        MessageKind::Data,
        MessageKind::BsAdvert,
        MessageKind::BsUp,
        MessageKind::BsUpAck,
        MessageKind::BsDown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MessageKind::Beacon => "BEACON",
            MessageKind::Data => "DATA",
            MessageKind::BsAdvert => "BS_ADVERT",
            MessageKind::BsUp => "BS_UP",
            MessageKind::BsUpAck => "BS_UP_ACK",
            MessageKind::BsDown => "BS_DOWN",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_control(self) -> bool {
        !matches!(self, MessageKind::Data)
    }
}

/// Ordering key of an active BS: a higher term wins, then the lower index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActiveKey {
    pub term: u32,
    pub active: usize,
}

impl ActiveKey {
    pub fn beats(&self, other: &ActiveKey) -> bool {
        self.term > other.term || (self.term == other.term && self.active < other.active)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub key: ActiveKey,
    pub seq: u64,
    pub hop: u32,
    pub timestamp: Micros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advert {
    pub origin: usize,
    pub battery: f64,
    pub timestamp: Micros,
    /// Origin first, then every forwarder in order.
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Beacon(Beacon),
    Advert(Advert),
    /// `route` runs from the first hop after the sender to the target.
    BsUp {
        origin: usize,
        target: usize,
        term: u32,
        attempt: u64,
        route: Vec<usize>,
        pos: usize,
    },
    /// `route` runs from the first hop after the new active to the old one.
    BsUpAck {
        origin: usize,
        dest: usize,
        attempt: u64,
        route: Vec<usize>,
        pos: usize,
    },
    BsDown {
        target: ActiveKey,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub src: usize,
    /// `None` for a broadcast.
    pub dst: Option<usize>,
    pub payload: Payload,
    pub size_bytes: u32,
}

impl Message {
    /// Structural checks on the payload.
    pub fn is_well_formed(&self) -> bool {
        match &self.payload {
            Payload::Advert(a) => {
                let mut seen = a.path.clone();
                seen.sort_unstable();
                seen.dedup();
                !a.path.is_empty() && a.path[0] == a.origin && seen.len() == a.path.len()
            }
            Payload::BsUp { route, target, .. } => route.last() == Some(target),
            Payload::BsUpAck { route, dest, .. } => route.last() == Some(dest),
            Payload::Beacon(_) | Payload::BsDown { .. } => true,
        }
    }
}
