pub mod error;
pub mod log;
pub mod media;
pub mod wire;
pub mod sections;
pub mod tagdef;
pub mod lifespan;
pub mod sensors;
pub mod battery;
pub mod tag;
pub mod station;
pub mod sim;
pub mod pipeline;
