pub mod trees;
pub mod gradchecks;
