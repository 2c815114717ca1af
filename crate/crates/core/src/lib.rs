pub mod agent;
pub mod arena;
pub mod battle;
pub mod config;
pub mod features;
pub mod network;
pub mod rules;
pub mod search;
pub mod td;
