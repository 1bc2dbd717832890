pub mod lp_oracle;
pub mod nano_oracle;
