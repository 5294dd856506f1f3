pub mod evaluate;
pub mod prepare;
pub mod report;
pub mod train;
