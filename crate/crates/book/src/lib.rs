//! Compiles the guide's code listings as doctests.

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/demand.md")]
    mod demand {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/bundling.md")]
    mod bundling {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
