//! A tamper-evident, append-only participation ledger.
//!
//! Entries record contributions, changes, artifacts, tests, evaluation runs,
//! vouchers and credits. They are hash-chained ([`integrity`]), stored as
//! JSON lines ([`store`]), linked into an influence graph ([`graph`]) that
//! can be queried ([`query`]), and drive release gating and credit accrual
//! ([`harness`], [`governance`]). [`audit`] codes evidence coverage and
//! checks release exports.

pub mod audit;
pub mod canon;
pub mod cli;
pub mod example;
pub mod governance;
pub mod graph;
pub mod harness;
pub mod integrity;
pub mod model;
pub mod query;
pub mod store;
