//! triplefed: an adaptive distributed RDF triple store.
//!
//! Triples are hash-partitioned across workers by subject. Queries are
//! basic graph patterns answered with distributed semi-joins; each join
//! step exchanges variable projections and candidate rows between all
//! workers. The engine watches query shapes, and when a shape becomes
//! frequent it redistributes the matching subgraphs so that every worker
//! holds complete path groups rooted at a chosen core vertex — after
//! which queries of that shape run on every worker in parallel with no
//! mid-query data exchange.
//!
//! Crate layout:
//!
//! - [`rdf`]: triples, per-node term dictionaries, text parsing.
//! - [`sparql`]: the SELECT/WHERE query language, query graphs, and
//!   canonical query templates.
//! - [`store`]: worker-local storage — predicate-keyed sorted indexes over
//!   a shared pair pool, plus binding tables for join evaluation.
//! - [`stats`]: predicate and vertex scoring used to pick redistribution
//!   cores.
//! - [`planner`]: core selection, redistribution tree construction, and
//!   semi-join ordering.
//! - [`index`]: the master's catalog of redistributed shapes and the
//!   workers' mirror of it.
//! - [`cluster`]: message framing, transports (in-process and TCP), the
//!   barrier-style collector, and traffic metrics.
//! - [`exec`]: the two query execution modes (semi-join and parallel).
//! - [`phd`]: template frequency accounting and redistribution triggering.
//! - [`updates`]: insert/delete batches and replica maintenance.
//! - [`worker`] / [`master`]: the node event loops and the public cluster
//!   facade.
//! - [`config`]: runtime options and the partitioning hash.

pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod exec;
pub mod index;
pub mod master;
pub mod phd;
pub mod planner;
pub mod rdf;
pub mod sparql;
pub mod stats;
pub mod store;
pub mod updates;
pub mod worker;

pub use error::{Error, Result};
