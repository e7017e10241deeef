pub mod api;
pub mod backend;
pub mod chart;
pub mod imaging;
pub mod refine;
pub mod sketch;
pub mod synthesize;
pub mod workflow;
