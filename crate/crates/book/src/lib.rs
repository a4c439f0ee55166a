//! Runs the listings of the guide in `book/` as doc-tests.

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/quickstart.md")]
mod quickstart {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/demand.md")]
mod demand {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/solving.md")]
mod solving {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/routing.md")]
mod routing {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/evaluation.md")]
mod evaluation {}
