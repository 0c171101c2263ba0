//! Fixtures shared by the benchmarks.

use martin_core::boundary::BoundaryApproximant;
use martin_core::group::parse_word;
use martin_core::{GroupElement, WalkSpec};

/// Walks the benchmarks run on, by name.
pub const WALKS: [&str; 3] = ["srw-free:2", "drift-z:0.7", "wreath-walk:2,0.7,0.3"];

pub fn walk(name: &str) -> WalkSpec {
    WalkSpec::named(name).expect("built-in walk")
}

/// A word of `F_2` and a tree end it does not dominate.
pub fn free_pair(word: &str, end: &str) -> (GroupElement, BoundaryApproximant) {
    let g = GroupElement::Free(parse_word(word, 2).expect("word"));
    (g, BoundaryApproximant::end(&parse_word(end, 2).expect("end")))
}
