pub mod assign;
pub mod bench;
pub mod gnn;
pub mod pathplan;
pub mod policy;
pub mod ppo;
pub mod tensor;
pub mod world;
