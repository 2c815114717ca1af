//! Compiles every chapter of the guide so its examples run as doctests.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/rules.md")]
pub mod rules {}

#[doc = include_str!("../../../book/src/battle.md")]
pub mod battle {}

#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}

#[doc = include_str!("../../../book/src/network.md")]
pub mod network {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}

#[doc = include_str!("../../../book/src/arena.md")]
pub mod arena {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
