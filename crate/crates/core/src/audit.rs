//! Instrumentation for labeled pairs consumed by training stages.

use alloc::collections::BTreeSet;

/// Training stage that consumed a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Stage {
    History,
    ContentPretrain,
    Fusion,
    Baseline,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::History, Stage::ContentPretrain, Stage::Fusion, Stage::Baseline];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::History => "history",
            Stage::ContentPretrain => "content_pretrain",
            Stage::Fusion => "fusion",
            Stage::Baseline => "baseline",
        }
    }
}

/// Receives every labeled (follower, followee) pair a trainer reads.
pub trait LabelAudit {
    fn consume(&mut self, stage: Stage, follower: u32, followee: u32);
}

/// Discards all records.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoAudit;

impl LabelAudit for NoAudit {
    #[inline]
    fn consume(&mut self, _: Stage, _: u32, _: u32) {}
}

/// Counts consumed labels and flags any pair from a forbidden (test) set.
#[derive(Debug, Clone, Default)]
pub struct PairAudit {
    forbidden: BTreeSet<(u32, u32)>,
    consumed: [u64; 4],
    leaked: [u64; 4],
}

impl PairAudit {
    pub fn new(forbidden: BTreeSet<(u32, u32)>) -> Self {
        PairAudit { forbidden, consumed: [0; 4], leaked: [0; 4] }
    }

    pub fn consumed(&self, stage: Stage) -> u64 {
        self.consumed[stage.slot()]
    }

    pub fn leaked(&self, stage: Stage) -> u64 {
        self.leaked[stage.slot()]
    }

    pub fn total_consumed(&self) -> u64 {
        self.consumed.iter().sum()
    }

    pub fn total_leaked(&self) -> u64 {
        self.leaked.iter().sum()
    }
}

impl LabelAudit for PairAudit {
    fn consume(&mut self, stage: Stage, follower: u32, followee: u32) {
        self.consumed[stage.slot()] += 1;
        if self.forbidden.contains(&(follower, followee)) {
            self.leaked[stage.slot()] += 1;
        }
    }
}
