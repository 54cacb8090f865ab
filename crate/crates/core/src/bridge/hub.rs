//! Connection registry shared between I/O threads and the stepping loop.
//!
//! Inbound `publish` and `call` frames are queued with a per-connection
//! sequence number and handed to the stepping loop by [`Hub::drain`] in
//! `(connection id, sequence)` order. Subscriptions take effect at once.
//! Outbound publications are bounded per session; replies are not.

use super::frame::Frame;
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

pub const OUTBOUND_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub frame: Frame,
    pub binary: Option<Arc<Vec<u8>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub conn: u64,
    pub seq: u64,
    pub frame: Frame,
}

#[derive(Debug, Default)]
struct Session {
    subscriptions: BTreeSet<String>,
    next_seq: u64,
    inbound: VecDeque<Inbound>,
    outbound: VecDeque<Outgoing>,
    replies: VecDeque<Outgoing>,
    dropped: u64,
}

#[derive(Debug, Default)]
struct Inner {
    next_conn: u64,
    sessions: BTreeMap<u64, Session>,
}

#[derive(Debug, Default)]
pub struct Hub {
    inner: Mutex<Inner>,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers a connection; ids start at 1 and increase.
    pub fn connect(&self) -> u64 {
        let mut g = self.lock();
        g.next_conn += 1;
        let id = g.next_conn;
        g.sessions.insert(id, Session::default());
        id
    }

    pub fn disconnect(&self, conn: u64) {
        self.lock().sessions.remove(&conn);
    }

    pub fn connections(&self) -> Vec<u64> {
        self.lock().sessions.keys().copied().collect()
    }

    /// Handles one text message from `conn`.
    pub fn receive_text(&self, conn: u64, text: &str) {
        match Frame::decode(text) {
            Ok(f) => self.receive(conn, f),
            Err(e) => self.reply(conn, Frame::error(None, "bad_frame", e.to_string())),
        }
    }

    pub fn receive(&self, conn: u64, frame: Frame) {
        let mut g = self.lock();
        let Some(s) = g.sessions.get_mut(&conn) else {
            return;
        };
        match frame {
            Frame::Subscribe { topic } => {
                s.subscriptions.insert(topic);
            }
            Frame::Unsubscribe { topic } => {
                s.subscriptions.remove(&topic);
            }
            f @ (Frame::Publish { .. } | Frame::Call { .. }) => {
                let seq = s.next_seq;
                s.next_seq += 1;
                s.inbound.push_back(Inbound { conn, seq, frame: f });
            }
            Frame::Result { id, .. } | Frame::Error { id: Some(id), .. } => s.replies.push_back(Outgoing {
                frame: Frame::error(Some(id), "bad_frame", "clients may not send result or error frames"),
                binary: None,
            }),
            Frame::Error { id: None, .. } | Frame::Event { .. } => s.replies.push_back(Outgoing {
                frame: Frame::error(None, "bad_frame", "clients may not send error or event frames"),
                binary: None,
            }),
        }
    }

    /// Takes every queued inbound frame, ordered by `(conn, seq)`.
    pub fn drain(&self) -> Vec<Inbound> {
        let mut g = self.lock();
        let mut out = Vec::new();
        for s in g.sessions.values_mut() {
            out.extend(s.inbound.drain(..));
        }
        out
    }

    /// Inbound frames queued and not yet drained.
    pub fn pending(&self) -> usize {
        self.lock().sessions.values().map(|s| s.inbound.len()).sum()
    }

    pub fn subscriber_count(&self, topic: &str) -> usize {
        self.lock()
            .sessions
            .values()
            .filter(|s| s.subscriptions.contains(topic))
            .count()
    }

    /// Queues a publication for every subscriber; returns the delivery count.
    pub fn publish(&self, topic: &str, payload: serde_json::Value, binary: Option<Vec<u8>>) -> usize {
        self.publish_except(topic, payload, binary, None)
    }

    pub fn publish_except(
        &self,
        topic: &str,
        payload: serde_json::Value,
        binary: Option<Vec<u8>>,
        except: Option<u64>,
    ) -> usize {
        let binary = binary.map(Arc::new);
        let msg = Outgoing {
            frame: Frame::Publish {
                topic: topic.to_string(),
                payload,
                attachment: binary.as_ref().map(|b| b.len()),
            },
            binary,
        };
        let mut g = self.lock();
        let mut n = 0;
        for (id, s) in g.sessions.iter_mut() {
            if Some(*id) == except || !s.subscriptions.contains(topic) {
                continue;
            }
            n += 1;
            s.outbound.push_back(msg.clone());
            if s.outbound.len() > OUTBOUND_CAPACITY {
                s.outbound.pop_front();
                s.dropped += 1;
                s.replies.push_back(Outgoing {
                    frame: Frame::Event {
                        name: "overflow".into(),
                        payload: json!({"topic": topic, "dropped_total": s.dropped}),
                    },
                    binary: None,
                });
            }
        }
        n
    }

    /// Sends an event to every session subscribed to `topic`.
    pub fn event(&self, topic: &str, name: &str, payload: serde_json::Value) {
        let mut g = self.lock();
        for s in g.sessions.values_mut() {
            if s.subscriptions.contains(topic) {
                s.replies.push_back(Outgoing {
                    frame: Frame::Event {
                        name: name.to_string(),
                        payload: payload.clone(),
                    },
                    binary: None,
                });
            }
        }
    }

    pub fn reply(&self, conn: u64, frame: Frame) {
        if let Some(s) = self.lock().sessions.get_mut(&conn) {
            s.replies.push_back(Outgoing { frame, binary: None });
        }
    }

    /// Pending messages for `conn`: replies and events first, then
    /// publications.
    pub fn take_outgoing(&self, conn: u64) -> Vec<Outgoing> {
        let mut g = self.lock();
        let Some(s) = g.sessions.get_mut(&conn) else {
            return Vec::new();
        };
        let mut out: Vec<Outgoing> = s.replies.drain(..).collect();
        out.extend(s.outbound.drain(..));
        out
    }

    pub fn dropped(&self, conn: u64) -> u64 {
        self.lock().sessions.get(&conn).map_or(0, |s| s.dropped)
    }
}
