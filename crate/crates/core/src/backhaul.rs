//! Simulated backhaul: scalar messages between BSs, counted per round.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    SinrDual,
    CapDual,
    RankBit,
    RandPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackhaulMessage {
    pub round: usize,
    pub sender: usize,
    pub receiver: usize,
    pub kind: MessageKind,
    pub user: Option<usize>,
    pub value: f64,
}

/// Every message carries one real scalar.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BackhaulLog {
    messages: Vec<BackhaulMessage>,
    /// Scalars delivered at each barrier, in delivery order.
    per_round: Vec<(usize, usize)>,
    pending: usize,
}

impl BackhaulLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        round: usize,
        sender: usize,
        receiver: usize,
        kind: MessageKind,
        user: Option<usize>,
        value: f64,
    ) {
        debug_assert_ne!(sender, receiver);
        self.messages.push(BackhaulMessage {
            round,
            sender,
            receiver,
            kind,
            user,
            value,
        });
        self.pending += 1;
    }

    /// Synchronization barrier: everything recorded since the previous
    /// barrier is delivered as round `round`.
    pub fn close_round(&mut self, round: usize) {
        self.per_round.push((round, self.pending));
        self.pending = 0;
    }

    pub fn messages(&self) -> &[BackhaulMessage] {
        &self.messages
    }

    pub fn per_round_counts(&self) -> &[(usize, usize)] {
        &self.per_round
    }

    pub fn total(&self) -> usize {
        self.messages.len()
    }

    pub fn count_kind(&self, kind: MessageKind) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).count()
    }

    /// Messages of the given kinds sent in `round`.
    pub fn count_in_round(&self, round: usize, kinds: &[MessageKind]) -> usize {
        self.messages
            .iter()
            .filter(|m| m.round == round && kinds.contains(&m.kind))
            .count()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for m in &self.messages {
            serde_json::to_writer(&mut out, m)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
