//! Exact feasibility of invariant measures on cylinder partitions.
//!
//! The system `A x = b, x >= 0` is decided by a phase-one simplex in
//! `BigRational`. Infeasibility comes with a Farkas vector `y` satisfying
//! `y^T A <= 0` and `y^T b > 0`, checked exactly before it is returned.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::boundary::{act_on_boundary, BoundaryApproximant};
use crate::error::{Error, Result};
use crate::group::{format_word, GroupElement, GroupKind, GroupModel};
use crate::measure::reduced_words;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Feasibility {
    /// A nonnegative solution, one rational per unknown.
    Feasible { point: Vec<String> },
    /// Farkas vector over the constraint rows.
    Infeasible { certificate: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub depth: usize,
    /// Cells carrying the unknown masses.
    pub unknowns: Vec<String>,
    /// Constraint rows in text form, the last one being total mass.
    pub constraints: Vec<String>,
    pub result: Feasibility,
    pub note: String,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        matches!(self.result, Feasibility::Feasible { .. })
    }
}

/// Whether the whole cylinder `C(u)` lies in `g C(w)`, lies outside it, or
/// is split by it at the resolution of `|u| + |g|` letters.
fn cell_in_translate(group: &GroupModel, g: &GroupElement, u: &[u8], w: &[u8]) -> Option<bool> {
    let GroupKind::Free { rank } = group.kind else { return None };
    let gi = group.kind.inv_unchecked(g);
    let extra = group.word_length(g) + w.len();
    let mut verdict = None;
    for tail in reduced_words(rank, extra) {
        if u.last().is_some_and(|&l| tail.first() == Some(&crate::group::inverse_letter(l))) {
            continue;
        }
        let mut v = u.to_vec();
        v.extend_from_slice(&tail);
        let moved = act_on_boundary(group, &gi, &BoundaryApproximant::end(&v)).ok()?;
        let p = moved.tree_prefix(&group.kind, w.len())?;
        let inside = p == w;
        match verdict {
            None => verdict = Some(inside),
            Some(b) if b != inside => return None,
            _ => {}
        }
    }
    verdict
}

/// Decides whether a measure on the cylinders of the given depth can satisfy
/// `m(g C) = m(C)` for every generator `g` and every cylinder `C` with `g C`
/// resolved at that depth.
pub fn invariant_measure_feasibility(group: &GroupModel, depth: usize) -> Result<FeasibilityReport> {
    match group.kind {
        GroupKind::Free { rank } => free_feasibility(group, rank, depth),
        GroupKind::Lattice { dim: 1 } => {
            let half = BigRational::new(1.into(), 2.into());
            Ok(FeasibilityReport {
                depth,
                unknowns: vec!["+inf".into(), "-inf".into()],
                constraints: vec!["m(+inf) + m(-inf) = 1".into()],
                result: Feasibility::Feasible { point: vec![half.to_string(), half.to_string()] },
                note: "translations fix both ends, so every mixture is invariant; an invariant verdict still needs the action on the measure".into(),
            })
        }
        _ => Err(Error::Unsupported(format!("no cylinder algebra for {}", group.kind))),
    }
}

fn free_feasibility(group: &GroupModel, rank: usize, depth: usize) -> Result<FeasibilityReport> {
    let leaves = reduced_words(rank, depth);
    let n = leaves.len();
    let mut rows: Vec<Vec<BigRational>> = Vec::new();
    let mut rhs: Vec<BigRational> = Vec::new();
    let mut text = Vec::new();
    let gens: Vec<GroupElement> = (0..rank as u8).map(|i| GroupElement::Free(vec![2 * i])).collect();
    for g in &gens {
        for d in 1..=depth {
            for w in reduced_words(rank, d) {
                let mut row = vec![BigRational::zero(); n];
                let mut resolved = true;
                for (j, u) in leaves.iter().enumerate() {
                    match cell_in_translate(group, g, u, &w) {
                        Some(true) => row[j] += BigRational::one(),
                        Some(false) => {}
                        None => {
                            resolved = false;
                            break;
                        }
                    }
                    if u.starts_with(&w) {
                        row[j] -= BigRational::one();
                    }
                }
                if resolved && row.iter().any(|c| !c.is_zero()) {
                    text.push(format!("m({g} C({})) = m(C({}))", format_word(&w), format_word(&w)));
                    rows.push(row);
                    rhs.push(BigRational::zero());
                }
            }
        }
    }
    rows.push(vec![BigRational::one(); n]);
    rhs.push(BigRational::one());
    text.push("total mass = 1".into());
    let result = match phase_one(&rows, &rhs) {
        Ok(x) => Feasibility::Feasible { point: x.iter().map(ToString::to_string).collect() },
        Err(y) => {
            verify_farkas(&rows, &rhs, &y)?;
            Feasibility::Infeasible { certificate: y.iter().map(ToString::to_string).collect() }
        }
    };
    let unknowns = if depth == 0 { vec!["*".into()] } else { leaves.iter().map(|w| format_word(w)).collect() };
    Ok(FeasibilityReport { depth, unknowns, constraints: text, result, note: String::new() })
}

fn verify_farkas(rows: &[Vec<BigRational>], rhs: &[BigRational], y: &[BigRational]) -> Result<()> {
    let n = rows[0].len();
    for j in 0..n {
        let s: BigRational = rows.iter().zip(y).map(|(r, yi)| &r[j] * yi).sum();
        if s.is_positive() {
            return Err(Error::Convergence(format!("certificate check failed on column {j}")));
        }
    }
    let b: BigRational = rhs.iter().zip(y).map(|(b, yi)| b * yi).sum();
    if !b.is_positive() {
        return Err(Error::Convergence("certificate check failed on the right-hand side".into()));
    }
    Ok(())
}

/// Phase-one simplex with Bland's rule. Returns a feasible point or a
/// Farkas vector.
fn phase_one(a: &[Vec<BigRational>], b: &[BigRational]) -> std::result::Result<Vec<BigRational>, Vec<BigRational>> {
    let m = a.len();
    let n = a[0].len();
    // rows scaled so b >= 0; sign kept to map the duals back
    let sign: Vec<BigRational> =
        b.iter().map(|v| if v.is_negative() { -BigRational::one() } else { BigRational::one() }).collect();
    let width = n + m + 1;
    let mut tab: Vec<Vec<BigRational>> = (0..m)
        .map(|i| {
            let mut row = vec![BigRational::zero(); width];
            for j in 0..n {
                row[j] = &a[i][j] * &sign[i];
            }
            row[n + i] = BigRational::one();
            row[width - 1] = &b[i] * &sign[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..n + m).collect();
    // objective row: reduced costs of sum of artificials
    let mut obj = vec![BigRational::zero(); width];
    for v in &mut obj[n..n + m] {
        *v = BigRational::one();
    }
    for row in &tab {
        for j in 0..width {
            obj[j] -= &row[j];
        }
    }
    while let Some(enter) = (0..n + m).find(|&j| obj[j].is_negative()) {
        let mut leave: Option<(usize, BigRational)> = None;
        for (i, row) in tab.iter().enumerate() {
            if row[enter].is_positive() {
                let ratio = &row[width - 1] / &row[enter];
                let better = match &leave {
                    None => true,
                    Some((k, r)) => ratio < *r || (ratio == *r && basis[i] < basis[*k]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else { break };
        let piv = tab[r][enter].clone();
        for v in tab[r].iter_mut() {
            *v /= &piv;
        }
        let prow = tab[r].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i != r && !row[enter].is_zero() {
                let f = row[enter].clone();
                for j in 0..width {
                    row[j] -= &f * &prow[j];
                }
            }
        }
        let f = obj[enter].clone();
        for j in 0..width {
            obj[j] -= &f * &prow[j];
        }
        basis[r] = enter;
    }
    // optimum of the phase-one objective is -obj[rhs]
    if obj[width - 1].is_zero() {
        let mut x = vec![BigRational::zero(); n];
        for (i, &j) in basis.iter().enumerate() {
            if j < n {
                x[j] = tab[i][width - 1].clone();
            }
        }
        Ok(x)
    } else {
        // reduced cost of artificial i is 1 - y_i
        Err((0..m).map(|i| (BigRational::one() - &obj[n + i]) * &sign[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_group_has_no_invariant_measure() {
        let g = GroupModel::free(2);
        assert!(invariant_measure_feasibility(&g, 0).unwrap().is_feasible());
        for d in [1, 2] {
            let r = invariant_measure_feasibility(&g, d).unwrap();
            assert!(!r.is_feasible(), "depth {d}: {r:?}");
        }
    }

    #[test]
    fn z_ends_feasible() {
        assert!(invariant_measure_feasibility(&GroupModel::lattice(1), 2).unwrap().is_feasible());
        assert!(invariant_measure_feasibility(&GroupModel::wreath(2), 2).is_err());
    }

    #[test]
    fn simplex_small_systems() {
        let r = |v: i64| BigRational::from_integer(v.into());
        // x + y = 1, x - y = 0
        let a = vec![vec![r(1), r(1)], vec![r(1), r(-1)]];
        let x = phase_one(&a, &[r(1), r(0)]).unwrap();
        assert_eq!(x, vec![BigRational::new(1.into(), 2.into()); 2]);
        // x + y = 1, x + y = 2
        let a = vec![vec![r(1), r(1)], vec![r(1), r(1)]];
        let y = phase_one(&a, &[r(1), r(2)]).unwrap_err();
        verify_farkas(&a, &[r(1), r(2)], &y).unwrap();
        // x - y = -1 needs y >= 1; x + y = 0 forbids it
        let a = vec![vec![r(1), r(-1)], vec![r(1), r(1)]];
        let y = phase_one(&a, &[r(-1), r(0)]).unwrap_err();
        verify_farkas(&a, &[r(-1), r(0)], &y).unwrap();
    }
}
