//! Measures on the boundary and the cells used to probe them.
//!
//! Every measure is a finite list of weighted atoms. For cylinder measures the
//! atoms are the cylinders of the finest depth, represented by tree ends; a
//! function evaluated on such an atom must be constant on the cylinder, and
//! the evaluation fails with a partition error otherwise. Monte Carlo
//! estimates carry the sample count, and standard errors of integrals follow
//! the multinomial model over atoms.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{act_on_boundary, extend_kernel, ApproximantKind, BoundaryApproximant, KernelValue, RAY_TERMS};
use crate::error::{Error, Result};
use crate::group::{format_word, parse_word, GroupElement, GroupKind, GroupModel};
use crate::kernel::KernelTable;

/// Measurable cells of the supported boundary models.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cell {
    All,
    /// Ends of a free group starting with the word.
    Cylinder(Vec<u8>),
    /// `+infinity` (1) or `-infinity` (-1) on `Z`.
    End(i64),
    /// Lamplighter points by the sign of the escape direction and the lamps
    /// on `[-W, W]`, `W = (window.len() - 1) / 2`.
    WreathBin {
        sign: i64,
        window: Vec<u32>,
    },
    /// Image of a cell of the second factor under the product map.
    Phi(Box<Cell>),
    /// Product boundary points outside that image.
    Rest,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::All => write!(f, "*"),
            Cell::Cylinder(w) => write!(f, "{}", format_word(w)),
            Cell::End(s) => write!(f, "{}", if *s > 0 { "+inf" } else { "-inf" }),
            Cell::WreathBin { sign, window } => {
                let lamps: Vec<String> = window.iter().map(|v| v.to_string()).collect();
                write!(f, "{}:{}", if *sign > 0 { "+" } else { "-" }, lamps.join(","))
            }
            Cell::Phi(c) => write!(f, "phi({c})"),
            Cell::Rest => write!(f, "rest"),
        }
    }
}

impl Cell {
    pub fn parse(kind: &GroupKind, s: &str) -> Result<Cell> {
        let s = s.trim();
        if s == "*" {
            return Ok(Cell::All);
        }
        match kind {
            GroupKind::Free { rank } => {
                let w = parse_word(s, *rank)?;
                if w.is_empty() {
                    Ok(Cell::All)
                } else {
                    Ok(Cell::Cylinder(w))
                }
            }
            GroupKind::Lattice { dim: 1 } => match s {
                "+inf" => Ok(Cell::End(1)),
                "-inf" => Ok(Cell::End(-1)),
                _ => Err(Error::Parse(format!("Z cells are +inf and -inf, got {s:?}"))),
            },
            GroupKind::Wreath { .. } => {
                let (sign, rest) =
                    s.split_once(':').ok_or_else(|| Error::Parse(format!("wreath bin {s:?} must be sign:lamps")))?;
                let sign = match sign {
                    "+" => 1,
                    "-" => -1,
                    _ => return Err(Error::Parse(format!("bad sign {sign:?}"))),
                };
                let window = rest
                    .split(',')
                    .map(|v| v.trim().parse::<u32>().map_err(|e| Error::Parse(format!("{v:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                if window.len() % 2 == 0 {
                    return Err(Error::Parse("wreath window must have odd length".into()));
                }
                Ok(Cell::WreathBin { sign, window })
            }
            GroupKind::Product(_, b) => {
                if s == "rest" {
                    return Ok(Cell::Rest);
                }
                let inner = s
                    .strip_prefix("phi(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("product cells are phi(..) or rest, got {s:?}")))?;
                Ok(Cell::Phi(Box::new(Cell::parse(b, inner)?)))
            }
            _ => Err(Error::Unsupported(format!("no cell model for {kind}"))),
        }
    }

    /// All cylinders of exactly this depth on `F_rank`, in text order.
    pub fn cylinders(rank: usize, depth: usize) -> Vec<Cell> {
        if depth == 0 {
            return vec![Cell::All];
        }
        reduced_words(rank, depth).into_iter().map(Cell::Cylinder).collect()
    }
}

/// Reduced words of exactly the given length, sorted by text form.
pub fn reduced_words(rank: usize, len: usize) -> Vec<Vec<u8>> {
    let mut words: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::with_capacity(words.len() * (2 * rank - 1));
        for w in &words {
            for l in 0..2 * rank as u8 {
                if w.last().is_some_and(|&x| x == crate::group::inverse_letter(l)) {
                    continue;
                }
                let mut v = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        words = next;
    }
    words.sort_by_cached_key(|w| format_word(w));
    words
}

/// A boundary point, possibly the image of a point of the second factor
/// under the product map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Point {
    Boundary(BoundaryApproximant),
    Phi(BoundaryApproximant),
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Boundary(xi) => write!(f, "{xi}"),
            Point::Phi(xi) => write!(f, "phi({xi})"),
        }
    }
}

fn second_factor(kind: &GroupKind) -> Result<&GroupKind> {
    match kind {
        GroupKind::Product(_, b) => Ok(b),
        _ => Err(Error::Representation(format!("{kind} is not a product"))),
    }
}

fn split_pair(g: &GroupElement) -> Result<(&GroupElement, &GroupElement)> {
    match g {
        GroupElement::Product(a, b) => Ok((a, b)),
        _ => Err(Error::Representation(format!("{g} is not a pair"))),
    }
}

/// `g . p`.
pub fn act_point(group: &GroupModel, g: &GroupElement, p: &Point) -> Result<Point> {
    match p {
        Point::Boundary(xi) => Ok(Point::Boundary(act_on_boundary(group, g, xi)?)),
        Point::Phi(xi) => {
            let (_, h) = split_pair(g)?;
            let factor = GroupModel::new(second_factor(&group.kind)?.clone());
            Ok(Point::Phi(act_on_boundary(&factor, h, xi)?))
        }
    }
}

/// Whether `p` lies in `cell`.
pub fn point_in_cell(kind: &GroupKind, p: &Point, cell: &Cell) -> Result<bool> {
    if *cell == Cell::All {
        return Ok(true);
    }
    match (p, cell) {
        (Point::Phi(_), Cell::Rest) => Ok(false),
        (Point::Phi(xi), Cell::Phi(inner)) => point_in_cell(second_factor(kind)?, &Point::Boundary(xi.clone()), inner),
        (Point::Phi(_), _) => Err(Error::Representation(format!("{cell} is not a product cell"))),
        (Point::Boundary(xi), Cell::Cylinder(w)) => match xi.tree_prefix(kind, w.len()) {
            Some(p) => Ok(p == *w),
            None => Err(Error::Partition { depth: tree_depth(xi), needed: w.len() }),
        },
        (Point::Boundary(xi), Cell::End(s)) => Ok(z_sign(xi)? == *s),
        (Point::Boundary(xi), Cell::WreathBin { sign, window }) => {
            let x = last_term(kind, xi)?;
            let GroupElement::Wreath { lamps, pos } = &x else {
                return Err(Error::Representation(format!("{x} is not a lamplighter element")));
            };
            let w = (window.len() / 2) as i64;
            if pos.abs() <= w {
                return Err(Error::Partition { depth: pos.unsigned_abs() as usize, needed: w as usize + 1 });
            }
            let seen: Vec<u32> = (-w..=w).map(|i| lamps.iter().find(|l| l.0 == i).map_or(0, |l| l.1)).collect();
            Ok(pos.signum() == *sign && seen == *window)
        }
        (Point::Boundary(xi), Cell::Phi(inner)) => match product_projection(kind, xi)? {
            Some(proj) => point_in_cell(second_factor(kind)?, &Point::Boundary(proj), inner),
            None => Ok(false),
        },
        (Point::Boundary(xi), Cell::Rest) => Ok(product_projection(kind, xi)?.is_none()),
        (_, Cell::All) => Ok(true),
    }
}

fn tree_depth(xi: &BoundaryApproximant) -> usize {
    match &xi.kind {
        ApproximantKind::TreeEnd { prefix } => prefix.len(),
        _ => 0,
    }
}

fn last_term(kind: &GroupKind, xi: &BoundaryApproximant) -> Result<GroupElement> {
    match &xi.kind {
        ApproximantKind::Sequence { elements } => {
            elements.last().cloned().ok_or_else(|| Error::Representation("empty sequence".into()))
        }
        ApproximantKind::SpineCandidate { .. } => Ok(xi.term(kind, RAY_TERMS).expect("rays have RAY_TERMS terms")),
        ApproximantKind::TreeEnd { prefix } => Ok(GroupElement::Free(prefix.clone())),
    }
}

fn z_sign(xi: &BoundaryApproximant) -> Result<i64> {
    let s = match &xi.kind {
        ApproximantKind::SpineCandidate { step: GroupElement::Lattice(v), .. } if v.len() == 1 => v[0].signum(),
        ApproximantKind::Sequence { elements } => match elements.last() {
            Some(GroupElement::Lattice(v)) if v.len() == 1 => v[0].signum(),
            _ => 0,
        },
        _ => 0,
    };
    if s == 0 {
        return Err(Error::Representation(format!("{xi} is not an end of Z")));
    }
    Ok(s)
}

/// The second-factor ray of a product ray, `None` when that coordinate stays
/// bounded.
fn product_projection(kind: &GroupKind, xi: &BoundaryApproximant) -> Result<Option<BoundaryApproximant>> {
    let second = second_factor(kind)?;
    match &xi.kind {
        ApproximantKind::SpineCandidate { prefix, step, label } => {
            let (_, p1) = split_pair(prefix)?;
            let (_, s1) = split_pair(step)?;
            if *s1 == second.identity() {
                Ok(None)
            } else {
                Ok(Some(BoundaryApproximant::ray(p1.clone(), s1.clone(), label.clone())))
            }
        }
        _ => Err(Error::Unsupported(format!("product cells need ray approximants, got {xi}"))),
    }
}

/// The group acting on a measure and the table its kernels come from. For
/// images under the product map the group is the product and the table
/// belongs to the second factor.
#[derive(Clone, Copy, Debug)]
pub struct KernelContext<'a> {
    pub group: &'a GroupModel,
    pub table: &'a KernelTable,
}

impl<'a> KernelContext<'a> {
    pub fn product(group: &'a GroupModel, second: &'a KernelTable) -> Self {
        KernelContext { group, table: second }
    }

    /// `K(g, p)`. Points of a product boundary outside the image of the
    /// product map have no kernel in terms of a factor table.
    pub fn kernel(&self, g: &GroupElement, p: &Point) -> Result<KernelValue> {
        if matches!(p, Point::Boundary(_)) && self.group.kind != self.table.walk.group.kind {
            return Err(Error::Unsupported(format!(
                "kernels of {} at {p} are not determined by the table on {}",
                self.group, self.table.walk.group
            )));
        }
        point_kernel(self.table, g, p)
    }
}

impl<'a> From<&'a KernelTable> for KernelContext<'a> {
    fn from(t: &'a KernelTable) -> Self {
        KernelContext { group: &t.walk.group, table: t }
    }
}

/// `K(g, p)`; for images under the product map `K((g0, h), Phi(xi)) = K(h, xi)`
/// with `t` the table of the second factor.
pub fn point_kernel(t: &KernelTable, g: &GroupElement, p: &Point) -> Result<KernelValue> {
    match p {
        Point::Boundary(xi) => extend_kernel(t, g, xi),
        Point::Phi(xi) => extend_kernel(t, split_pair(g)?.1, xi),
    }
}

/// A value with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderMeasure {
    pub rank: usize,
    pub depth: usize,
    /// Masses of the cylinders of exactly `depth`.
    pub leaves: BTreeMap<Vec<u8>, f64>,
    /// Sample count behind the masses; `None` for exact measures.
    pub samples: Option<u64>,
    pub nonconverged: f64,
}

impl CylinderMeasure {
    /// Uniform over the cylinders of the given depth (the law of the end of
    /// simple random walk).
    pub fn uniform(rank: usize, depth: usize) -> Self {
        let words = reduced_words(rank, depth);
        let m = 1.0 / words.len() as f64;
        CylinderMeasure {
            rank,
            depth,
            leaves: words.into_iter().map(|w| (w, m)).collect(),
            samples: None,
            nonconverged: 0.0,
        }
    }

    pub fn from_leaves(rank: usize, depth: usize, leaves: BTreeMap<Vec<u8>, f64>) -> Result<Self> {
        for w in leaves.keys() {
            if w.len() != depth || crate::group::reduce_word(w) != *w {
                return Err(Error::Parameter(format!("{} is not a reduced word of length {depth}", format_word(w))));
            }
        }
        let mut all: BTreeMap<Vec<u8>, f64> = reduced_words(rank, depth).into_iter().map(|w| (w, 0.0)).collect();
        for (w, m) in leaves {
            if m.is_nan() || m < 0.0 {
                return Err(Error::Parameter(format!("negative mass on {}", format_word(&w))));
            }
            all.insert(w, m);
        }
        let total: f64 = all.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("masses sum to {total}")));
        }
        Ok(CylinderMeasure { rank, depth, leaves: all, samples: None, nonconverged: 0.0 })
    }

    /// `m(C(w))` for `|w| <= depth`, summed over the leaves below `w`.
    pub fn mass(&self, w: &[u8]) -> Result<f64> {
        if w.len() > self.depth {
            return Err(Error::Partition { depth: self.depth, needed: w.len() });
        }
        Ok(self.leaves.iter().filter(|(k, _)| k.starts_with(w)).map(|(_, m)| m).sum())
    }

    /// Binomial standard error of `m(C(w))`.
    pub fn mass_se(&self, w: &[u8]) -> Result<f64> {
        let m = self.mass(w)?;
        Ok(self.samples.map_or(0.0, |n| (m * (1.0 - m) / n as f64).sqrt()))
    }

    /// The same measure on coarser cylinders.
    pub fn coarsen(&self, depth: usize) -> Result<Self> {
        if depth > self.depth {
            return Err(Error::Partition { depth: self.depth, needed: depth });
        }
        let mut leaves = BTreeMap::new();
        for (w, m) in &self.leaves {
            *leaves.entry(w[..depth].to_vec()).or_insert(0.0) += m;
        }
        Ok(CylinderMeasure { rank: self.rank, depth, leaves, samples: self.samples, nonconverged: self.nonconverged })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(BoundaryApproximant, f64)>,
    pub samples: Option<u64>,
    pub nonconverged: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasureModel {
    Dirac(BoundaryApproximant),
    Cylinder(CylinderMeasure),
    Empirical(EmpiricalMeasure),
    /// Image of a measure on the second factor under the product map.
    Pushforward(Box<MeasureModel>),
}

impl MeasureModel {
    /// Weighted atoms.
    pub fn atoms(&self) -> Vec<(Point, f64)> {
        match self {
            MeasureModel::Dirac(xi) => vec![(Point::Boundary(xi.clone()), 1.0)],
            MeasureModel::Cylinder(c) => {
                c.leaves.iter().map(|(w, m)| (Point::Boundary(BoundaryApproximant::end(w)), *m)).collect()
            }
            MeasureModel::Empirical(e) => e.atoms.iter().map(|(xi, w)| (Point::Boundary(xi.clone()), *w)).collect(),
            MeasureModel::Pushforward(inner) => inner
                .atoms()
                .into_iter()
                .map(|(p, w)| match p {
                    Point::Boundary(xi) => (Point::Phi(xi), w),
                    Point::Phi(_) => unreachable!("nested product maps are not built"),
                })
                .collect(),
        }
    }

    pub fn samples(&self) -> Option<u64> {
        match self {
            MeasureModel::Dirac(_) => None,
            MeasureModel::Cylinder(c) => c.samples,
            MeasureModel::Empirical(e) => e.samples,
            MeasureModel::Pushforward(inner) => inner.samples(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms().iter().map(|a| a.1).sum()
    }

    /// The Dirac point, if this is a point mass.
    pub fn dirac_point(&self) -> Option<Point> {
        match self {
            MeasureModel::Dirac(xi) => Some(Point::Boundary(xi.clone())),
            MeasureModel::Empirical(e) if e.atoms.len() == 1 => Some(Point::Boundary(e.atoms[0].0.clone())),
            MeasureModel::Pushforward(inner) => match inner.dirac_point()? {
                Point::Boundary(xi) => Some(Point::Phi(xi)),
                Point::Phi(_) => None,
            },
            _ => None,
        }
    }

    /// `int f dm` with the multinomial standard error over atoms.
    pub fn integrate<F>(&self, f: F) -> Result<Estimate>
    where
        F: Fn(&Point) -> Result<f64> + Sync,
    {
        Ok(self.integrate_parts(|p| Ok([f(p)?]))?[0])
    }

    /// Several integrals in one pass over the atoms.
    pub fn integrate_parts<const N: usize, F>(&self, f: F) -> Result<[Estimate; N]>
    where
        F: Fn(&Point) -> Result<[f64; N]> + Sync,
    {
        let atoms = self.atoms();
        let values: Vec<[f64; N]> =
            atoms.par_iter().map(|(p, w)| if *w == 0.0 { Ok([0.0; N]) } else { f(p) }).collect::<Result<_>>()?;
        let mut first = [0.0; N];
        let mut second = [0.0; N];
        for ((_, w), v) in atoms.iter().zip(&values) {
            for k in 0..N {
                first[k] += w * v[k];
                second[k] += w * v[k] * v[k];
            }
        }
        let n = self.samples();
        Ok(std::array::from_fn(|k| {
            let se = match n {
                Some(n) if n > 0 => ((second[k] - first[k] * first[k]).max(0.0) / n as f64).sqrt(),
                _ => 0.0,
            };
            Estimate { value: first[k], se }
        }))
    }

    /// `m(B)`.
    pub fn mass(&self, kind: &GroupKind, cell: &Cell) -> Result<Estimate> {
        self.integrate(|p| Ok(f64::from(u8::from(point_in_cell(kind, p, cell)?))))
    }

    /// `m(g^{-1} B)`.
    pub fn translated_mass(&self, group: &GroupModel, g: &GroupElement, cell: &Cell) -> Result<Estimate> {
        self.integrate(|p| Ok(f64::from(u8::from(point_in_cell(&group.kind, &act_point(group, g, p)?, cell)?))))
    }
}

/// A residual between two estimates with its combined error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Monte Carlo standard error of `lhs - rhs`.
    pub se: f64,
    /// Bound on the contribution of kernel errors.
    pub kernel_error: f64,
    pub z: f64,
}

impl Residual {
    pub fn new(lhs: f64, rhs: f64, diff: f64, se: f64, kernel_error: f64) -> Self {
        let residual = diff.abs();
        let scale = (se * se + kernel_error * kernel_error).sqrt();
        let z = if residual <= 1e-12 {
            0.0
        } else if scale > 0.0 {
            residual / scale
        } else {
            f64::INFINITY
        };
        Residual { lhs, rhs, residual, se, kernel_error, z }
    }
}

/// `m(g^{-1} B)` against `int_B K(g, .)^beta dm`, with the kernel error
/// propagated through the power.
pub fn kernel_identity(
    ctx: KernelContext,
    m: &MeasureModel,
    beta: f64,
    g: &GroupElement,
    b: &Cell,
) -> Result<Residual> {
    let kind = &ctx.group.kind;
    let [lhs, rhs, diff, kerr] = m.integrate_parts(|p| {
        let a = f64::from(u8::from(point_in_cell(kind, &act_point(ctx.group, g, p)?, b)?));
        let (c, e) = if point_in_cell(kind, p, b)? {
            let k = ctx.kernel(g, p)?;
            (k.value.powf(beta), (beta * k.value.powf(beta - 1.0) * k.error).abs())
        } else {
            (0.0, 0.0)
        };
        Ok([a, c, a - c, e])
    })?;
    Ok(Residual::new(lhs.value, rhs.value, diff.value, diff.se, kerr.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<u8> {
        parse_word(s, 2).unwrap()
    }

    #[test]
    fn cylinder_counts_and_consistency() {
        assert_eq!(reduced_words(2, 2).len(), 12);
        let m = CylinderMeasure::uniform(2, 3);
        assert!((m.mass(&w("a")).unwrap() - 0.25).abs() < 1e-15);
        let children: f64 = ["aa", "ab", "aB"].iter().map(|c| m.mass(&w(c)).unwrap()).sum();
        assert!((children - m.mass(&w("a")).unwrap()).abs() < 1e-15);
        assert!(m.mass(&w("abab")).is_err());
        assert_eq!(m.coarsen(1).unwrap().leaves.len(), 4);
    }

    #[test]
    fn translated_cylinders() {
        let g = GroupModel::free(2);
        let m = MeasureModel::Cylinder(CylinderMeasure::uniform(2, 3));
        let a = GroupElement::Free(w("a"));
        // a^{-1} C(a) is everything outside C(A)
        let v = m.translated_mass(&g, &a, &Cell::Cylinder(w("a"))).unwrap();
        assert!((v.value - 0.75).abs() < 1e-12);
        let v = m.translated_mass(&g, &a, &Cell::Cylinder(w("A"))).unwrap();
        assert!((v.value - 1.0 / 12.0).abs() < 1e-12);
        // too deep for the leaves
        let aaa = GroupElement::Free(w("aaa"));
        assert!(matches!(m.translated_mass(&g, &aaa, &Cell::Cylinder(w("ab"))), Err(Error::Partition { .. })));
    }

    #[test]
    fn cell_text() {
        let k = GroupKind::Free { rank: 2 };
        assert_eq!(Cell::parse(&k, "aB").unwrap().to_string(), "aB");
        let p: GroupKind = "product(wreath:2,free:2)".parse().unwrap();
        assert_eq!(Cell::parse(&p, "phi(ab)").unwrap(), Cell::Phi(Box::new(Cell::Cylinder(w("ab")))));
        let wr = GroupKind::Wreath { base: 2 };
        assert_eq!(Cell::parse(&wr, "+:0,1,0,0,0").unwrap().to_string(), "+:0,1,0,0,0");
    }
}
