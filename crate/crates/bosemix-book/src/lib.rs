//! The guide in `book/` is an mdbook, which cannot run its Rust snippets
//! against this workspace. Each chapter is included here as module docs so
//! `cargo test -p bosemix-book` runs them as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/scattering.md")]
pub mod scattering {}
#[doc = include_str!("../../../book/src/mean_field.md")]
pub mod mean_field {}
#[doc = include_str!("../../../book/src/bogoliubov.md")]
pub mod bogoliubov {}
#[doc = include_str!("../../../book/src/fock.md")]
pub mod fock {}
#[doc = include_str!("../../../book/src/definetti.md")]
pub mod definetti {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
