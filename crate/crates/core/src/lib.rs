pub mod ambiguity;
pub mod cdgnss;
pub mod config;
pub mod error;
pub mod ins;
pub mod integrity;
pub mod manifold;
pub mod montecarlo;
pub mod pipeline;
pub mod sim;
pub mod sqrt_update;
pub mod ut;
pub mod vdc;
