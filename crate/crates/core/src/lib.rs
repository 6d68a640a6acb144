//! Simulated world, navigation, skills, knowledge base, planner and mission
//! runtime for a two-tier UAV agent.

pub type Vec3 = nalgebra::Vector3<f64>;

pub mod camera;
pub mod config;
pub mod geonav;
pub mod knowledge;
pub mod mission;
pub mod objectnav;
pub mod onboard;
pub mod planner;
pub mod runtime;
pub mod skills;
pub mod station;
pub mod text;
pub mod wire;
pub mod world;
