pub mod auth;
pub mod chain;
pub mod config;
pub mod corpus;
pub mod header;
pub mod profile;
pub mod report;
