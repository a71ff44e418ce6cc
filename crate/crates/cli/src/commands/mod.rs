pub mod explain;
pub mod optimize;
pub mod prep;
pub mod refs;
pub mod report;
pub mod train;
pub mod tree;
