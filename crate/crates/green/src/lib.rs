//! Simulation library for a pollution-resistant P2P content sharing
//! protocol: redundant index publication on an identifier circle,
//! proactive majority filtering of maintainer responses, correlation-based
//! object reputation with a social (friend-history) extension,
//! probabilistic version selection, and probabilistic block verification,
//! together with attacker models and a deterministic experiment harness.

pub mod adversary;
pub mod content;
pub mod filtering;
pub mod harness;
pub mod overlay;
pub mod reputation;
pub mod selection;
pub mod socialgraph;
pub mod verification;
