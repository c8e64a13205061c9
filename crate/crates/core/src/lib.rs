pub mod error;
pub mod linear;
pub mod lq;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod sde;
pub mod special;
pub mod stopping;
pub mod verify;
