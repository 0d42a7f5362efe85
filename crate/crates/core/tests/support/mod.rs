pub mod analytics_oracle;
pub mod batches;
