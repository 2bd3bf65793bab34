//! The guide's chapters, one module each, so that `cargo test` runs every
//! code listing in `book/src` as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/distributions.md")]
pub mod distributions {}

#[doc = include_str!("../../../book/src/stability.md")]
pub mod stability {}

#[doc = include_str!("../../../book/src/linear.md")]
pub mod linear {}

#[doc = include_str!("../../../book/src/nonlinear.md")]
pub mod nonlinear {}

#[doc = include_str!("../../../book/src/finite-n.md")]
pub mod finite_n {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
