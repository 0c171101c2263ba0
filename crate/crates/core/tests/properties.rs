use std::sync::OnceLock;

use proptest::prelude::*;

use martin_core::boundary::{cocycle_residual, extend_kernel, free_tree_kernel_oracle, BoundaryApproximant};
use martin_core::group::reduce_word;
use martin_core::sampler::sample_path;
use martin_core::{GroupElement, GroupModel, KernelTable, WalkSpec};
use num_traits::ToPrimitive;

fn groups() -> Vec<GroupModel> {
    ["free:2", "lattice:2", "wreath:2", "product(wreath:2,free:2)"]
        .iter()
        .map(|s| s.parse().expect("group spec"))
        .collect()
}

fn element(group: &GroupModel, picks: &[usize]) -> GroupElement {
    let gens = group.kind.default_generators();
    picks.iter().fold(group.identity(), |acc, &i| group.mul(&acc, &gens[i % gens.len()]).unwrap())
}

fn f2_table() -> &'static KernelTable {
    static T: OnceLock<KernelTable> = OnceLock::new();
    T.get_or_init(|| KernelTable::build_default(&WalkSpec::srw_free(2)).unwrap())
}

fn reduced(letters: Vec<u8>) -> Vec<u8> {
    reduce_word(&letters)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_axioms(gi in 0usize..4, a in prop::collection::vec(0usize..8, 0..6), b in prop::collection::vec(0usize..8, 0..6), c in prop::collection::vec(0usize..8, 0..6)) {
        let group = &groups()[gi];
        let (x, y, z) = (element(group, &a), element(group, &b), element(group, &c));
        let e = group.identity();
        prop_assert_eq!(group.mul(&group.mul(&x, &y)?, &z)?, group.mul(&x, &group.mul(&y, &z)?)?);
        prop_assert_eq!(group.mul(&x, &group.inv(&x)?)?, e.clone());
        prop_assert_eq!(group.mul(&e, &x)?, x.clone());
        prop_assert_eq!(group.parse_element(&x.to_string())?, x.clone());
        let xy = group.mul(&x, &y)?;
        prop_assert!(group.word_length(&xy) <= group.word_length(&x) + group.word_length(&y));
        prop_assert_eq!(group.word_length(&x), group.word_length(&group.inv(&x)?));
        prop_assert!(group.word_length(&x) <= a.len());
    }

    #[test]
    fn free_ball_sizes_and_nesting(r in 0usize..5) {
        let g = GroupModel::free(2);
        let small = g.ball(r)?;
        let big = g.ball(r + 1)?;
        prop_assert_eq!(small.len(), 2 * 3usize.pow(r as u32) - 1);
        prop_assert!(small.elements.iter().all(|x| big.contains(x)));
    }

    #[test]
    fn tree_kernel_matches_oracle(g in prop::collection::vec(0u8..4, 0..5), end in prop::collection::vec(0u8..4, 12..16)) {
        let t = f2_table();
        let g = reduced(g);
        let prefix = reduced(end);
        prop_assume!(prefix.len() > g.len());
        let k = extend_kernel(t, &GroupElement::Free(g.clone()), &BoundaryApproximant::end(&prefix))?;
        let exact = free_tree_kernel_oracle(&t.walk, &GroupElement::Free(g), &prefix)?.to_f64().unwrap();
        prop_assert!((k.value - exact).abs() <= 1e-9 * exact.max(1.0));
        prop_assert!(k.error >= 0.0);
    }

    #[test]
    fn cocycle_and_kernel_bounds(g in prop::collection::vec(0u8..4, 0..3), h in prop::collection::vec(0u8..4, 0..3), end in prop::collection::vec(0u8..4, 12..14)) {
        let t = f2_table();
        let (g, h) = (GroupElement::Free(reduced(g)), GroupElement::Free(reduced(h)));
        let xi = BoundaryApproximant::end(&reduced(end));
        prop_assume!(xi.tree_prefix(&t.walk.group.kind, 8).is_some());
        let r = cocycle_residual(t, &g, &h, &xi)?;
        prop_assert!(r.value < 1e-9, "cocycle residual {}", r.value);
        let (lo, hi) = t.kernel_bounds(&g)?;
        let k = extend_kernel(t, &g, &xi)?.value;
        prop_assert!(lo * (1.0 - 1e-9) <= k && k <= hi * (1.0 + 1e-9), "{lo} <= {k} <= {hi}");
    }

    #[test]
    fn green_submultiplicative(a in prop::collection::vec(0u8..4, 0..3), b in prop::collection::vec(0u8..4, 0..3)) {
        let t = f2_table();
        let pair = (GroupElement::Free(reduced(a)), GroupElement::Free(reduced(b)));
        prop_assert!(t.submultiplicativity_violation(&[pair])? < 1e-9);
    }

    #[test]
    fn paths_reproducible(seed in any::<u64>()) {
        let w = WalkSpec::drift_z(0.7)?;
        let e = w.group.identity();
        prop_assert_eq!(sample_path(&w, &e, 40, seed), sample_path(&w, &e, 40, seed));
    }
}
