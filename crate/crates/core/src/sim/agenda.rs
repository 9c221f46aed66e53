//! The user's agenda: a stack of acts waiting to be uttered.
//!
//! Pops are priority-ordered by act class — greetings first, then
//! informs, then requests, then booking intents — and within a class the
//! most recently pushed act wins, so reactions to the latest system turn
//! surface before older business.

use crate::acts::{DialogAct, Intent};

#[derive(Debug, Clone, Default)]
pub struct Agenda {
    stack: Vec<DialogAct>,
}

fn class(act: &DialogAct) -> u8 {
    match act.intent {
        Intent::Greet => 0,
        Intent::Inform => 1,
        Intent::Request => 2,
        Intent::Book => 3,
        _ => 4,
    }
}

impl Agenda {
    pub fn new() -> Self {
        Agenda::default()
    }

    /// Pushes an act unless an identical one is already queued.
    pub fn push(&mut self, act: DialogAct) {
        if !self.stack.contains(&act) {
            self.stack.push(act);
        }
    }

    /// Removes and returns the highest-priority act.
    pub fn pop_priority(&mut self) -> Option<DialogAct> {
        let mut best: Option<(u8, usize)> = None;
        for (i, act) in self.stack.iter().enumerate() {
            let c = class(act);
            best = match best {
                None => Some((c, i)),
                Some((bc, bi)) if c < bc || (c == bc && i > bi) => Some((c, i)),
                keep => keep,
            };
        }
        best.map(|(_, i)| self.stack.remove(i))
    }

    /// Pops up to `k` acts in priority order.
    pub fn pop_up_to(&mut self, k: usize) -> Vec<DialogAct> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            match self.pop_priority() {
                Some(act) => out.push(act),
                None => break,
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn contains(&self, act: &DialogAct) -> bool {
        self.stack.contains(act)
    }
}
