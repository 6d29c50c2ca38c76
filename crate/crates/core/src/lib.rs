//! Budget-constrained incentive allocation for residential decarbonization.

pub mod acceptance;
pub mod allocate;
pub mod bandit;
pub mod carbon;
pub mod config;
pub mod money;
pub mod pipeline;
pub mod population;
pub mod report;
pub mod retrofit;
pub mod seeding;

pub use money::Cents;
