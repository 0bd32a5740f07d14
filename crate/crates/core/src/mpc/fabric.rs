//! In-process synchronous message fabric.
//!
//! Every call to [`Fabric::exchange`] is one round: all messages of the round
//! are delivered together, and the round counter advances.

use serde::{Deserialize, Serialize};

use super::field::Fp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsgKind {
    /// Fresh shares of a dealt value.
    Share,
    /// Shares sent to a recipient so it can reconstruct.
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: u64,
    pub from: usize,
    pub to: usize,
    pub session: u64,
    pub kind: MsgKind,
    pub payload: Vec<Fp>,
}

#[derive(Debug, Clone)]
pub struct Fabric {
    parties: usize,
    round: u64,
    record: bool,
    transcript: Vec<Message>,
}

/// Outgoing payloads indexed `[from][to]`.
pub type Outbox = Vec<Vec<Vec<Fp>>>;

impl Fabric {
    pub fn new(parties: usize, record: bool) -> Self {
        Fabric { parties, round: 0, record, transcript: Vec::new() }
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
    }

    /// Delivers one round; returns inboxes indexed `[to][from]`.
    pub fn exchange(&mut self, session: u64, kind: MsgKind, outbox: Outbox) -> Outbox {
        debug_assert_eq!(outbox.len(), self.parties);
        let mut inbox: Outbox = vec![vec![Vec::new(); self.parties]; self.parties];
        for (from, row) in outbox.into_iter().enumerate() {
            for (to, payload) in row.into_iter().enumerate() {
                if payload.is_empty() {
                    continue;
                }
                if self.record {
                    self.transcript.push(Message {
                        round: self.round,
                        from,
                        to,
                        session,
                        kind,
                        payload: payload.clone(),
                    });
                }
                inbox[to][from] = payload;
            }
        }
        self.round += 1;
        inbox
    }

    pub fn transcript(&self) -> &[Message] {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Vec<Message> {
        std::mem::take(&mut self.transcript)
    }

    /// Messages received by any party in `coalition`, in delivery order.
    pub fn view_of<'a>(&'a self, coalition: &'a [usize]) -> impl Iterator<Item = &'a Message> + 'a {
        self.transcript.iter().filter(move |m| coalition.contains(&m.to))
    }
}
