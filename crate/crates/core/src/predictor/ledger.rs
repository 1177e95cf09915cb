//! Budget accounting in epoch-equivalents.

use serde::{Deserialize, Serialize};

use crate::arch_space::Architecture;
use crate::error::{Error, Result};

/// Absolute slack when comparing spend against a budget.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Query,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub phase: Phase,
    pub arch: Option<Architecture>,
    pub what: String,
    pub amount: f64,
}

/// Tracks spend against an initialization budget and a per-query budget.
///
/// Charges go to the current phase. The ledger starts in [`Phase::Init`];
/// [`BudgetLedger::begin_query`] switches to a fresh query allowance.
#[derive(Clone, Debug)]
pub struct BudgetLedger {
    init_budget: f64,
    query_budget: f64,
    init_spent: f64,
    query_spent: f64,
    phase: Phase,
    current: Option<Architecture>,
    log: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(init_budget: f64, query_budget: f64) -> Self {
        assert!(init_budget >= 0.0 && query_budget >= 0.0, "budgets must be non-negative");
        Self { init_budget, query_budget, init_spent: 0.0, query_spent: 0.0, phase: Phase::Init, current: None, log: Vec::new() }
    }

    /// No limits in either phase.
    pub fn unlimited() -> Self {
        Self::new(f64::INFINITY, f64::INFINITY)
    }

    pub fn init_budget(&self) -> f64 {
        self.init_budget
    }

    pub fn query_budget(&self) -> f64 {
        self.query_budget
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn init_spent(&self) -> f64 {
        self.init_spent
    }

    /// Spend of the query in progress.
    pub fn query_spent(&self) -> f64 {
        self.query_spent
    }

    pub fn enter_init(&mut self) {
        self.phase = Phase::Init;
        self.current = None;
    }

    pub fn begin_query(&mut self, arch: &Architecture) {
        self.phase = Phase::Query;
        self.query_spent = 0.0;
        self.current = Some(arch.clone());
    }

    pub fn remaining(&self) -> f64 {
        match self.phase {
            Phase::Init => self.init_budget - self.init_spent,
            Phase::Query => self.query_budget - self.query_spent,
        }
    }

    pub fn can_afford(&self, amount: f64) -> bool {
        amount <= self.remaining() + BUDGET_TOLERANCE
    }

    /// Whole units of `unit_cost` still affordable in the current phase.
    pub fn affordable_units(&self, unit_cost: f64) -> usize {
        if unit_cost <= 0.0 {
            return usize::MAX;
        }
        let r = self.remaining();
        if r.is_infinite() {
            return usize::MAX;
        }
        ((r + BUDGET_TOLERANCE) / unit_cost).floor().max(0.0) as usize
    }

    pub fn charge(&mut self, amount: f64, what: &str) -> Result<()> {
        self.charge_for(self.current.clone(), amount, what)
    }

    pub fn charge_for(&mut self, arch: Option<Architecture>, amount: f64, what: &str) -> Result<()> {
        if !(amount >= 0.0) {
            return Err(Error::invalid("charges must be non-negative"));
        }
        if !self.can_afford(amount) {
            return Err(Error::BudgetExceeded { requested: amount, remaining: self.remaining() });
        }
        match self.phase {
            Phase::Init => self.init_spent += amount,
            Phase::Query => self.query_spent += amount,
        }
        self.log.push(LedgerEntry { phase: self.phase, arch, what: what.to_string(), amount });
        Ok(())
    }

    pub fn log(&self) -> &[LedgerEntry] {
        &self.log
    }

    /// Sum of every logged charge.
    pub fn total_spent(&self) -> f64 {
        self.log.iter().map(|e| e.amount).sum()
    }

    pub fn spent_in(&self, phase: Phase) -> f64 {
        self.log.iter().filter(|e| e.phase == phase).map(|e| e.amount).sum()
    }
}
