// mdbook cannot run Rust snippets against a local crate, so each chapter is
// included as a module doc and `cargo test --doc` runs its code blocks.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/scenes.md")]
pub mod scenes {}
#[doc = include_str!("src/features.md")]
pub mod features {}
#[doc = include_str!("src/augmentation.md")]
pub mod augmentation {}
#[doc = include_str!("src/learning.md")]
pub mod learning {}
#[doc = include_str!("src/ensemble.md")]
pub mod ensemble {}
#[doc = include_str!("src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("../README.md")]
pub mod readme {}
