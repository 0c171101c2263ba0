//! Sample paths, boundary convergence detection and harmonic measure
//! estimation.
//!
//! Randomness comes from ChaCha8 seeded with the run seed, with the path
//! index selecting the stream, so every path is reproducible on its own and
//! estimates do not depend on how paths are split across threads. Counts are
//! aggregated as integers.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{ApproximantKind, BoundaryApproximant};
use crate::error::{Error, Result};
use crate::group::{format_word, GroupElement, GroupKind};
use crate::kernel::KernelTable;
use crate::measure::{
    act_point, kernel_identity, point_in_cell, Cell, CylinderMeasure, EmpiricalMeasure, MeasureModel, Point, Residual,
};
use crate::walk::WalkSpec;

/// Steps a tracked key must stay unchanged to count as converged.
pub const STABLE_STEPS: usize = 50;
/// Distance beyond the depth the walker must reach before tracking starts.
pub const ESCAPE_MARGIN: usize = 20;
/// Half-width of the lamp window for lamplighter bins.
pub const DEFAULT_WINDOW: usize = 2;
/// Step cap per path in harmonic measure estimation.
pub const MAX_STEPS: usize = 20_000;
/// Largest non-convergence rate accepted by the estimator.
pub const MAX_NONCONVERGED: f64 = 0.01;
/// Spacing of the tail positions kept for lamplighter sample points.
const TAIL_STRIDE: usize = 8;
const TAIL_POINTS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub start: GroupElement,
    /// `x_0 = start, x_1, ..`.
    pub positions: Vec<GroupElement>,
    pub seed: u64,
    pub converged: Option<BoundaryApproximant>,
}

/// Draws increments from a walk.
#[derive(Clone, Debug)]
pub struct Stepper<'a> {
    walk: &'a WalkSpec,
    index: WeightedIndex<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(walk: &'a WalkSpec) -> Self {
        let index = WeightedIndex::new(walk.steps.iter().map(|s| s.1)).expect("walk masses are positive");
        Stepper { walk, index }
    }

    pub fn rng(seed: u64, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        rng
    }

    pub fn step(&self, rng: &mut ChaCha8Rng) -> &'a GroupElement {
        &self.walk.steps[self.index.sample(rng)].0
    }

    /// `x s` with an in-place fast path for single letters on free groups.
    fn advance(&self, x: &mut GroupElement, s: &GroupElement) {
        if let (GroupElement::Free(w), GroupElement::Free(l)) = (&mut *x, s) {
            if l.len() == 1 {
                if w.last() == Some(&crate::group::inverse_letter(l[0])) {
                    w.pop();
                } else {
                    w.push(l[0]);
                }
                return;
            }
        }
        *x = self.walk.group.kind.mul_unchecked(x, s);
    }
}

/// The path `(g, g s_1, g s_1 s_2, ..)` of the given seed and path index.
pub fn sample_path_indexed(walk: &WalkSpec, g: &GroupElement, horizon: usize, seed: u64, path: u64) -> PathSample {
    let stepper = Stepper::new(walk);
    let mut rng = Stepper::rng(seed, path);
    let mut positions = Vec::with_capacity(horizon + 1);
    let mut x = g.clone();
    positions.push(x.clone());
    for _ in 0..horizon {
        let s = stepper.step(&mut rng);
        stepper.advance(&mut x, s);
        positions.push(x.clone());
    }
    PathSample { start: g.clone(), positions, seed, converged: None }
}

pub fn sample_path(walk: &WalkSpec, g: &GroupElement, horizon: usize, seed: u64) -> PathSample {
    sample_path_indexed(walk, g, horizon, seed, 0)
}

/// `g . path`, positions multiplied on the left.
pub fn translate_path(kind: &GroupKind, g: &GroupElement, p: &PathSample) -> PathSample {
    PathSample {
        start: kind.mul_unchecked(g, &p.start),
        positions: p.positions.iter().map(|x| kind.mul_unchecked(g, x)).collect(),
        seed: p.seed,
        converged: None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Key {
    Prefix(Vec<u8>),
    Sign(i64),
    Bin(i64, Vec<u32>),
}

/// Tracks whether the coarse boundary position of a path has settled: once
/// the walker is `ESCAPE_MARGIN` beyond the depth, the key must stay fixed for
/// `STABLE_STEPS` steps.
#[derive(Clone, Debug)]
struct Detector {
    depth: usize,
    window: usize,
    key: Option<Key>,
    stable: usize,
}

impl Detector {
    fn new(depth: usize, window: usize) -> Self {
        Detector { depth, window, key: None, stable: 0 }
    }

    fn far(&self, x: &GroupElement) -> bool {
        match x {
            GroupElement::Free(w) => w.len() > self.depth + ESCAPE_MARGIN,
            GroupElement::Lattice(v) => v[0].unsigned_abs() as usize > self.depth + ESCAPE_MARGIN,
            GroupElement::Wreath { pos, .. } => pos.unsigned_abs() as usize > self.window + ESCAPE_MARGIN,
            GroupElement::Product(..) => false,
        }
    }

    fn key(&self, x: &GroupElement) -> Option<Key> {
        match x {
            GroupElement::Free(w) => (w.len() >= self.depth).then(|| Key::Prefix(w[..self.depth].to_vec())),
            GroupElement::Lattice(v) => (v[0] != 0).then(|| Key::Sign(v[0].signum())),
            GroupElement::Wreath { lamps, pos } => {
                let w = self.window as i64;
                if pos.abs() <= w {
                    return None;
                }
                let window = (-w..=w).map(|i| lamps.iter().find(|l| l.0 == i).map_or(0, |l| l.1)).collect();
                Some(Key::Bin(pos.signum(), window))
            }
            GroupElement::Product(..) => None,
        }
    }

    /// Feeds the next position; true once converged.
    fn feed(&mut self, x: &GroupElement) -> bool {
        let k = self.key(x);
        match &self.key {
            Some(cur) if k.as_ref() == Some(cur) => self.stable += 1,
            Some(_) => {
                self.key = None;
                self.stable = 0;
            }
            None => {}
        }
        if self.key.is_none() && self.far(x) {
            self.key = k;
            self.stable = 0;
        }
        self.key.is_some() && self.stable >= STABLE_STEPS
    }
}

fn supported(kind: &GroupKind) -> Result<()> {
    match kind {
        GroupKind::Free { .. } | GroupKind::Lattice { dim: 1 } | GroupKind::Wreath { .. } => Ok(()),
        _ => Err(Error::Unsupported(format!("no boundary detection for {kind}"))),
    }
}

/// `chi(path)`: a tree end on free groups, an end of `Z`, or the tail of the
/// path on lamplighter groups.
pub fn boundary_from_path(p: &PathSample, depth: usize) -> Result<BoundaryApproximant> {
    let mut det = Detector::new(depth, DEFAULT_WINDOW);
    let mut at = None;
    for (n, x) in p.positions.iter().enumerate() {
        if det.feed(x) {
            at = Some(n);
            break;
        }
    }
    let achieved = match p.positions.last() {
        Some(GroupElement::Free(w)) => w.len(),
        Some(GroupElement::Lattice(v)) => v[0].unsigned_abs() as usize,
        Some(GroupElement::Wreath { pos, .. }) => pos.unsigned_abs() as usize,
        _ => return Err(Error::Unsupported("no boundary detection for product paths".into())),
    };
    if at.is_none() {
        return Err(Error::Convergence(format!(
            "path of {} steps did not stabilise to depth {depth}; reached {achieved}",
            p.positions.len() - 1
        )));
    }
    point_from_tail(&p.positions, depth)
}

fn point_from_tail(positions: &[GroupElement], depth: usize) -> Result<BoundaryApproximant> {
    let last = positions.last().expect("paths are nonempty");
    Ok(match last {
        GroupElement::Free(_) => {
            let tail = &positions[positions.len().saturating_sub(STABLE_STEPS + 1)..];
            let words: Vec<&[u8]> = tail.iter().filter_map(|x| x.as_word()).collect();
            let common = words.iter().fold(words[0].len(), |acc, w| acc.min(common_len(words[0], w)));
            if common < depth {
                return Err(Error::Convergence(format!("tail prefix has length {common} < {depth}")));
            }
            BoundaryApproximant::end(&words[0][..common])
        }
        GroupElement::Lattice(v) => BoundaryApproximant::z_end(v[0].signum()),
        _ => {
            let n = positions.len();
            let mut elements: Vec<GroupElement> = (0..TAIL_POINTS)
                .filter_map(|j| n.checked_sub(1 + j * TAIL_STRIDE))
                .map(|i| positions[i].clone())
                .collect();
            elements.reverse();
            BoundaryApproximant::sequence(elements)
        }
    })
}

fn common_len(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Runs one path from `e` until the detector fires; the sample point and the
/// number of steps, or `None` at the cap.
fn run_to_convergence(
    walk: &WalkSpec,
    stepper: &Stepper,
    depth: usize,
    window: usize,
    seed: u64,
    path: u64,
) -> Option<Point> {
    let mut rng = Stepper::rng(seed, path);
    let mut det = Detector::new(depth, window);
    let mut x = walk.group.identity();
    let wreath = matches!(x, GroupElement::Wreath { .. });
    let mut tail: Vec<GroupElement> = Vec::new();
    for n in 0..MAX_STEPS {
        let s = stepper.step(&mut rng);
        stepper.advance(&mut x, s);
        if wreath && n % TAIL_STRIDE == 0 {
            tail.push(x.clone());
            if tail.len() > TAIL_POINTS {
                tail.remove(0);
            }
        }
        if det.feed(&x) {
            let xi = match det.key.take()? {
                Key::Prefix(p) => BoundaryApproximant::end(&p),
                Key::Sign(s) => BoundaryApproximant::z_end(s),
                Key::Bin(..) => {
                    tail.push(x);
                    BoundaryApproximant::sequence(tail)
                }
            };
            return Some(Point::Boundary(xi));
        }
    }
    None
}

/// A harmonic measure estimate with its sampling record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEstimate {
    pub measure: MeasureModel,
    pub depth: usize,
    pub samples: u64,
    pub nonconverged: f64,
}

/// Estimates the hitting distribution of the walk started at `e`: cylinder
/// masses at `depth` on free groups, the ends of `Z`, or an empirical measure
/// of path tails on lamplighter groups.
pub fn harmonic_measure_estimate(walk: &WalkSpec, depth: usize, n_samples: u64, seed: u64) -> Result<HarmonicEstimate> {
    let kind = &walk.group.kind;
    supported(kind)?;
    if n_samples < 1000 {
        return Err(Error::Parameter(format!("need at least 1000 samples, got {n_samples}")));
    }
    if matches!(kind, GroupKind::Free { .. }) && depth == 0 {
        return Err(Error::Parameter("cylinder depth must be positive".into()));
    }
    let stepper = Stepper::new(walk);
    const CHUNK: u64 = 4096;
    let chunks = n_samples.div_ceil(CHUNK);
    let wreath = matches!(kind, GroupKind::Wreath { .. });

    let converged: u64;
    let measure = if wreath {
        let points: Vec<Option<Point>> = (0..n_samples)
            .into_par_iter()
            .map(|i| run_to_convergence(walk, &stepper, depth, DEFAULT_WINDOW, seed, i))
            .collect();
        let atoms: Vec<BoundaryApproximant> = points
            .into_iter()
            .flatten()
            .map(|p| match p {
                Point::Boundary(xi) => xi,
                Point::Phi(_) => unreachable!(),
            })
            .collect();
        converged = atoms.len() as u64;
        let w = 1.0 / converged.max(1) as f64;
        MeasureModel::Empirical(EmpiricalMeasure {
            atoms: atoms.into_iter().map(|a| (a, w)).collect(),
            samples: Some(converged),
            nonconverged: 0.0,
        })
    } else {
        let counts: BTreeMap<String, (BoundaryApproximant, u64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut local: BTreeMap<String, (BoundaryApproximant, u64)> = BTreeMap::new();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                    if let Some(Point::Boundary(xi)) =
                        run_to_convergence(walk, &stepper, depth, DEFAULT_WINDOW, seed, i)
                    {
                        local.entry(xi.to_string()).or_insert((xi, 0)).1 += 1;
                    }
                }
                local
            })
            .reduce(BTreeMap::new, |mut a, b| {
                for (k, (xi, n)) in b {
                    a.entry(k).or_insert((xi, 0)).1 += n;
                }
                a
            });
        converged = counts.values().map(|v| v.1).sum();
        let n = converged.max(1) as f64;
        match kind {
            GroupKind::Free { rank } => {
                let mut leaves: BTreeMap<Vec<u8>, f64> =
                    crate::measure::reduced_words(*rank, depth).into_iter().map(|w| (w, 0.0)).collect();
                for (xi, c) in counts.values() {
                    if let ApproximantKind::TreeEnd { prefix } = &xi.kind {
                        *leaves.get_mut(prefix).expect("prefixes are reduced words of the depth") += *c as f64 / n;
                    }
                }
                MeasureModel::Cylinder(CylinderMeasure {
                    rank: *rank,
                    depth,
                    leaves,
                    samples: Some(converged),
                    nonconverged: 0.0,
                })
            }
            _ => {
                if counts.len() == 1 {
                    MeasureModel::Dirac(counts.into_values().next().expect("one atom").0)
                } else {
                    let atoms = counts.into_values().map(|(xi, c)| (xi, c as f64 / n)).collect();
                    MeasureModel::Empirical(EmpiricalMeasure { atoms, samples: Some(converged), nonconverged: 0.0 })
                }
            }
        }
    };
    let nonconverged = 1.0 - converged as f64 / n_samples as f64;
    if nonconverged > MAX_NONCONVERGED {
        return Err(Error::Sampling(format!("{:.3}% of {n_samples} paths did not converge", 100.0 * nonconverged)));
    }
    let measure = match measure {
        MeasureModel::Cylinder(mut c) => {
            c.nonconverged = nonconverged;
            MeasureModel::Cylinder(c)
        }
        MeasureModel::Empirical(mut e) => {
            e.nonconverged = nonconverged;
            MeasureModel::Empirical(e)
        }
        m => m,
    };
    Ok(HarmonicEstimate { measure, depth, samples: converged, nonconverged })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMass {
    pub cyl: String,
    pub mass: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureExport {
    pub depth: usize,
    pub cells: Vec<CellMass>,
    pub nonconverged: f64,
    /// Set when the cells are a surrogate partition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Cell masses of a measure: leaf cylinders, ends of `Z`, or lamplighter bins.
pub fn export_measure(kind: &GroupKind, m: &MeasureModel, depth: usize) -> Result<MeasureExport> {
    let n = m.samples();
    let se = |p: f64| n.map_or(0.0, |n| (p * (1.0 - p) / n as f64).sqrt());
    let mut nonconverged = 0.0;
    let mut masses: BTreeMap<String, f64> = BTreeMap::new();
    match m {
        MeasureModel::Cylinder(c) => {
            nonconverged = c.nonconverged;
            for (w, p) in &c.leaves {
                masses.insert(format_word(w), *p);
            }
        }
        _ => {
            if let MeasureModel::Empirical(e) = m {
                nonconverged = e.nonconverged;
            }
            for (p, w) in m.atoms() {
                let label = atom_cell(kind, &p)?.to_string();
                *masses.entry(label).or_insert(0.0) += w;
            }
        }
    }
    let cells = masses.into_iter().map(|(cyl, mass)| CellMass { cyl, se: se(mass), mass }).collect();
    let note = matches!(kind, GroupKind::Wreath { .. }).then(|| {
        format!("surrogate partition: sign of the lamplighter drift and lamps within {DEFAULT_WINDOW} of the origin")
    });
    Ok(MeasureExport { depth, cells, nonconverged, note })
}

/// The cell of the export partition containing a point.
pub fn atom_cell(kind: &GroupKind, p: &Point) -> Result<Cell> {
    Ok(match (kind, p) {
        (GroupKind::Lattice { dim: 1 }, Point::Boundary(_)) => {
            if point_in_cell(kind, p, &Cell::End(1))? {
                Cell::End(1)
            } else {
                Cell::End(-1)
            }
        }
        (GroupKind::Wreath { .. }, Point::Boundary(xi)) => {
            let x = match &xi.kind {
                ApproximantKind::Sequence { elements } => elements.last().cloned(),
                _ => xi.term(kind, crate::boundary::RAY_TERMS),
            }
            .ok_or_else(|| Error::Representation(format!("{xi} has no terms")))?;
            let det = Detector::new(0, DEFAULT_WINDOW);
            match det.key(&x) {
                Some(Key::Bin(sign, window)) => Cell::WreathBin { sign, window },
                _ => return Err(Error::Partition { depth: 0, needed: DEFAULT_WINDOW + 1 }),
            }
        }
        (GroupKind::Free { .. }, Point::Boundary(xi)) => match &xi.kind {
            ApproximantKind::TreeEnd { prefix } => Cell::Cylinder(prefix.clone()),
            _ => return Err(Error::Unsupported(format!("{xi} is not a tree end"))),
        },
        (GroupKind::Product(_, b), Point::Phi(xi)) => Cell::Phi(Box::new(atom_cell(b, &Point::Boundary(xi.clone()))?)),
        (GroupKind::Product(..), Point::Boundary(_)) => Cell::Rest,
        _ => return Err(Error::Unsupported(format!("no cells for {kind}"))),
    })
}

/// `nu(g^{-1} B)` against `int_B K(g, .) d nu`.
pub fn rn_identity_check(t: &KernelTable, nu: &MeasureModel, g: &GroupElement, b: &Cell) -> Result<Residual> {
    kernel_identity(t.into(), nu, 1.0, g, b)
}

/// `sum_g mu(g) m(g^{-1} B) - m(B)`.
pub fn stationarity_residual(walk: &WalkSpec, m: &MeasureModel, b: &Cell) -> Result<Residual> {
    let group = &walk.group;
    let [lhs, rhs, diff] = m.integrate_parts(|p| {
        let mut a = 0.0;
        for (g, mu) in &walk.steps {
            if point_in_cell(&group.kind, &act_point(group, g, p)?, b)? {
                a += mu;
            }
        }
        let c = f64::from(u8::from(point_in_cell(&group.kind, p, b)?));
        Ok([a, c, a - c])
    })?;
    Ok(Residual::new(lhs.value, rhs.value, diff.value, diff.se, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{parse_word, GroupModel};

    fn w(s: &str) -> Vec<u8> {
        parse_word(s, 2).unwrap()
    }

    #[test]
    fn zero_horizon_and_reproducible() {
        let walk = WalkSpec::srw_free(2);
        let g = GroupElement::Free(w("ab"));
        let p = sample_path(&walk, &g, 0, 1);
        assert_eq!(p.positions, vec![g.clone()]);
        let a = sample_path_indexed(&walk, &g, 300, 9, 4);
        let b = sample_path_indexed(&walk, &g, 300, 9, 4);
        assert_eq!(a, b);
        assert_ne!(a, sample_path_indexed(&walk, &g, 300, 9, 5));
        for pair in a.positions.windows(2) {
            let inc = walk.group.mul(&walk.group.inv(&pair[0]).unwrap(), &pair[1]).unwrap();
            assert!(walk.prob(&inc) > 0.0);
        }
    }

    #[test]
    fn free_escape_rate() {
        // speed 1/2, per-step variance of the length increment at most 1
        let walk = WalkSpec::srw_free(2);
        let n = 200;
        let lens: Vec<f64> = (0..n)
            .map(|i| {
                sample_path_indexed(&walk, &walk.group.identity(), 1000, 5, i)
                    .positions
                    .last()
                    .unwrap()
                    .as_word()
                    .unwrap()
                    .len() as f64
            })
            .collect();
        let mean = lens.iter().sum::<f64>() / n as f64;
        let sd = (lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 500.0).abs() < 3.0 * sd / (n as f64).sqrt() + 1.0, "mean {mean} sd {sd}");
    }

    #[test]
    fn drift_positive() {
        let walk = WalkSpec::drift_z(0.7).unwrap();
        let positive = (0..200)
            .filter(|&i| {
                match sample_path_indexed(&walk, &GroupElement::Lattice(vec![0]), 10_000, 3, i).positions.last() {
                    Some(GroupElement::Lattice(v)) => v[0] > 0,
                    _ => false,
                }
            })
            .count();
        assert_eq!(positive, 200);
    }

    #[test]
    fn equivariant_detection() {
        let walk = WalkSpec::srw_free(2);
        let kind = &walk.group.kind;
        let g = GroupElement::Free(w("bA"));
        for i in 0..20 {
            let p = sample_path_indexed(&walk, &walk.group.identity(), 400, 11, i);
            let xi = boundary_from_path(&p, 3).unwrap();
            let gp = translate_path(kind, &g, &p);
            let gxi = boundary_from_path(&gp, 3).unwrap();
            let moved = crate::boundary::act_on_boundary(&walk.group, &g, &xi).unwrap();
            let d = 3;
            assert_eq!(gxi.tree_prefix(kind, d), moved.tree_prefix(kind, d));
        }
        let short = sample_path(&walk, &walk.group.identity(), 5, 1);
        assert!(matches!(boundary_from_path(&short, 3), Err(Error::Convergence(_))));
    }

    #[test]
    fn prefix_extraction() {
        let walk = WalkSpec::srw_free(2);
        let mut positions = vec![walk.group.identity()];
        let mut word = w("ab");
        for _ in 0..100 {
            word.push(0);
            positions.push(GroupElement::Free(word.clone()));
        }
        let p = PathSample { start: walk.group.identity(), positions, seed: 0, converged: None };
        assert_eq!(boundary_from_path(&p, 2).unwrap().tree_prefix(&walk.group.kind, 2), Some(w("ab")));
    }

    #[test]
    fn free_harmonic_and_rn() {
        let walk = WalkSpec::srw_free(2);
        let est = harmonic_measure_estimate(&walk, 3, 20_000, 7).unwrap();
        let MeasureModel::Cylinder(c) = &est.measure else { panic!() };
        for l in ["a", "A", "b", "B"] {
            let m = c.mass(&w(l)).unwrap();
            assert!((m - 0.25).abs() < 3.0 * c.mass_se(&w(l)).unwrap() + 1e-12, "{l} {m}");
        }
        let t = KernelTable::build_default(&walk).unwrap();
        let a = GroupElement::Free(w("a"));
        let r = rn_identity_check(&t, &est.measure, &a, &Cell::Cylinder(w("a"))).unwrap();
        assert!(r.z < 3.0, "{r:?}");
        assert!((r.lhs - 0.75).abs() < 0.03);
        let r = rn_identity_check(&t, &est.measure, &t.walk.group.identity(), &Cell::Cylinder(w("ab"))).unwrap();
        assert_eq!(r.residual, 0.0);
        for b in Cell::cylinders(2, 2) {
            assert!(stationarity_residual(&walk, &est.measure, &b).unwrap().z < 3.0);
        }
        let ex = export_measure(&walk.group.kind, &est.measure, 3).unwrap();
        assert_eq!(ex.cells.len(), 36);
    }

    #[test]
    fn z_harmonic_is_dirac() {
        let walk = WalkSpec::drift_z(0.7).unwrap();
        let est = harmonic_measure_estimate(&walk, 1, 10_000, 2).unwrap();
        assert_eq!(est.measure, MeasureModel::Dirac(BoundaryApproximant::z_end(1)));
        let r = stationarity_residual(&walk, &est.measure, &Cell::End(1)).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn asymmetric_walk_not_stationary_for_uniform() {
        let g = GroupModel::free(2);
        let steps = [("a", 0.4), ("A", 0.2), ("b", 0.2), ("B", 0.2)]
            .iter()
            .map(|(s, p)| (g.parse_element(s).unwrap(), *p))
            .collect();
        let walk = WalkSpec::new(g, steps, "asym").unwrap();
        let m = MeasureModel::Cylinder(CylinderMeasure::uniform(2, 2));
        // 0.4 * 3/4 + 3 * 0.2 * 1/12 against 1/4
        let r = stationarity_residual(&walk, &m, &Cell::Cylinder(w("a"))).unwrap();
        assert!((r.lhs - 0.35).abs() < 1e-12 && (r.residual - 0.1).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn wreath_empirical_bins() {
        let walk = WalkSpec::wreath_walk(2, 0.7, 0.3).unwrap();
        let est = harmonic_measure_estimate(&walk, 0, 2000, 4).unwrap();
        let ex = export_measure(&walk.group.kind, &est.measure, 0).unwrap();
        let total: f64 = ex.cells.iter().map(|c| c.mass).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let r = stationarity_residual(&walk, &est.measure, &Cell::parse(&walk.group.kind, &ex.cells[0].cyl).unwrap())
            .unwrap();
        assert!(r.z < 4.0, "{r:?}");
    }
}
