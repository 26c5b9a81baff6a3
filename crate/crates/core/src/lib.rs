//! Selfish-user service provision: equilibrium averaging by belief
//! propagation, exhaustive and sampling oracles, and activation search.

pub mod bp;
pub mod enumerate;
pub mod error;
pub mod game;
pub mod instance;
pub mod observables;
pub mod optimize;

pub use error::{Error, Result};
pub use game::{EdgeAssignment, Label, PresencePattern, ServiceConfig, StrategyProfile};
pub use instance::{generate_instance, GeneratorParams, Instance, UnitId, UserId};
