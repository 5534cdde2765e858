pub mod oracles;
pub mod worlds;
