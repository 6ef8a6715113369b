use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Which counter a matrix product is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    /// Query-key score product.
    Qk,
    /// Score-value product.
    Sv,
    /// Everything else: projections, MLP, reducers.
    Other,
}

/// Multiply-accumulate counters for the matrix products of an attention layer.
///
/// Only the `Qk` and `Sv` counters enter the complexity comparison; projection
/// and MLP work lands in `Other`. Counters only grow until [`FlopLedger::clear`].
/// The counters are atomic so one ledger can be shared by kernels running on
/// several threads; totals do not depend on execution order.
#[derive(Debug, Default)]
pub struct FlopLedger {
    qk: AtomicU64,
    sv: AtomicU64,
    other: AtomicU64,
}

/// Plain copy of the ledger counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub qk_macs: u64,
    pub sv_macs: u64,
    pub other_macs: u64,
}

impl LedgerSnapshot {
    /// `qk_macs + sv_macs`.
    pub fn tracked(&self) -> u64 {
        self.qk_macs + self.sv_macs
    }
}

impl FlopLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn counter(&self, slot: Slot) -> &AtomicU64 {
        match slot {
            Slot::Qk => &self.qk,
            Slot::Sv => &self.sv,
            Slot::Other => &self.other,
        }
    }

    pub fn charge(&self, slot: Slot, macs: u64) {
        self.counter(slot).fetch_add(macs, Ordering::Relaxed);
    }

    pub fn get(&self, slot: Slot) -> u64 {
        self.counter(slot).load(Ordering::Relaxed)
    }

    pub fn qk_macs(&self) -> u64 {
        self.get(Slot::Qk)
    }

    pub fn sv_macs(&self) -> u64 {
        self.get(Slot::Sv)
    }

    pub fn other_macs(&self) -> u64 {
        self.get(Slot::Other)
    }

    /// MACs of the two products the complexity formulas count.
    pub fn tracked(&self) -> u64 {
        self.qk_macs() + self.sv_macs()
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot { qk_macs: self.qk_macs(), sv_macs: self.sv_macs(), other_macs: self.other_macs() }
    }

    pub fn clear(&self) {
        for slot in [Slot::Qk, Slot::Sv, Slot::Other] {
            self.counter(slot).store(0, Ordering::Relaxed);
        }
    }
}
