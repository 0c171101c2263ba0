//! Finitely supported step distributions and their convolution powers.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{top_level_split, Ball, GroupElement, GroupModel, DEFAULT_BALL_CAP};

pub const MASS_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_GEN_RADIUS: usize = 3;
pub const DEFAULT_GEN_STEPS: usize = 12;

/// A probability measure `mu` with finite support on a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub group: GroupModel,
    /// Support points with their probabilities, sorted by text form.
    pub steps: Vec<(GroupElement, f64)>,
    pub name: String,
}

/// Witness that the support generates the group as a semigroup: every element
/// of `B(e, radius)` was reached by a product of at most `max_steps` support
/// elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationCertificate {
    pub radius: usize,
    pub max_steps: usize,
    pub ball_size: usize,
    /// Largest number of support elements needed for any ball element.
    pub steps_used: usize,
}

impl WalkSpec {
    /// Builds a walk after checking kinds, positivity and total mass.
    pub fn new(group: GroupModel, steps: Vec<(GroupElement, f64)>, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        let mut merged: BTreeMap<String, (GroupElement, f64)> = BTreeMap::new();
        for (g, p) in steps {
            // round-trips the kind check
            group.mul(&g, &group.identity())?;
            if p.is_nan() || p <= 0.0 || !p.is_finite() {
                return Err(Error::InvalidWalk(format!("probability of {g} must be positive, got {p}")));
            }
            let key = g.to_string();
            if merged.contains_key(&key) {
                return Err(Error::InvalidWalk(format!("duplicate support element {key}")));
            }
            merged.insert(key, (g, p));
        }
        if merged.is_empty() {
            return Err(Error::InvalidWalk("empty support".into()));
        }
        let steps: Vec<(GroupElement, f64)> = merged.into_values().collect();
        let total: f64 = steps.iter().map(|s| s.1).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidWalk(format!("probabilities sum to {total}, not 1")));
        }
        Ok(WalkSpec { group, steps, name })
    }

    /// Builds a walk and checks the generation certificate with default limits.
    pub fn certified(group: GroupModel, steps: Vec<(GroupElement, f64)>, name: impl Into<String>) -> Result<Self> {
        let w = Self::new(group, steps, name)?;
        w.generation_certificate(DEFAULT_GEN_RADIUS, DEFAULT_GEN_STEPS)?;
        Ok(w)
    }

    /// Simple random walk: uniform on the default generators.
    pub fn simple(group: GroupModel) -> Self {
        let gens = group.generators.clone();
        let p = 1.0 / gens.len() as f64;
        let name = format!("srw:{group}");
        WalkSpec::new(group, gens.into_iter().map(|g| (g, p)).collect(), name).expect("uniform law is valid")
    }

    pub fn srw_free(rank: usize) -> Self {
        let mut w = Self::simple(GroupModel::free(rank));
        w.name = format!("srw-free:{rank}");
        w
    }

    /// Nearest-neighbour walk on `Z`: `+1` with probability `p`, `-1` otherwise.
    pub fn drift_z(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!("drift probability must lie in (0,1), got {p}")));
        }
        let z = GroupModel::lattice(1);
        WalkSpec::new(
            z,
            vec![(GroupElement::Lattice(vec![1]), p), (GroupElement::Lattice(vec![-1]), 1.0 - p)],
            format!("drift-z:{p}"),
        )
    }

    /// Lamplighter walk on `Z_q wr Z` of Diestel–Leader type.
    ///
    /// With probability `gamma` the lamp at the current position is set to a
    /// uniform value (the step `a^i`, `i` uniform in `Z_q`, including the
    /// identity). Otherwise the lamplighter moves right with probability
    /// `alpha` and left with probability `1 - alpha`, and every crossing of
    /// the edge `(k, k+1)` resets the lamp at `k` uniformly: the right move is
    /// `a^i t`, the left move is `t^{-1} a^i`.
    pub fn wreath_walk(q: u32, alpha: f64, gamma: f64) -> Result<Self> {
        if q < 2 {
            return Err(Error::Parameter("wreath base must be at least 2".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) || !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Parameter(format!("wreath walk needs alpha, gamma in (0,1), got {alpha}, {gamma}")));
        }
        let g = GroupModel::wreath(q);
        let lamp = |i: u32| if i == 0 { vec![] } else { vec![(0i64, i)] };
        let qf = q as f64;
        let mut steps = Vec::new();
        for i in 0..q {
            // a^i t: switch at k, then move to k+1
            steps.push((GroupElement::Wreath { lamps: lamp(i), pos: 1 }, (1.0 - gamma) * alpha / qf));
            // t^{-1} a^i: move to k-1, then switch there
            let left = if i == 0 { vec![] } else { vec![(-1i64, i)] };
            steps.push((GroupElement::Wreath { lamps: left, pos: -1 }, (1.0 - gamma) * (1.0 - alpha) / qf));
            steps.push((GroupElement::Wreath { lamps: lamp(i), pos: 0 }, gamma / qf));
        }
        WalkSpec::new(g, steps, format!("wreath-walk:{q},{alpha},{gamma}"))
    }

    /// Parses a built-in walk name: `srw-free:k`, `srw:<group>`, `drift-z:p`,
    /// `wreath-walk:q,alpha,gamma` or `product:a,<left>,<right>`.
    pub fn named(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let spec = strip_brackets(spec);
        let (head, arg) =
            spec.split_once(':').ok_or_else(|| Error::Parse(format!("walk name {spec:?} must be name:args")))?;
        let num = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("walk parameter {s:?}: {e}")))
        };
        let w = match head {
            "srw-free" => {
                let k: usize = arg.trim().parse().map_err(|e| Error::Parse(format!("rank {arg:?}: {e}")))?;
                if k < 2 {
                    return Err(Error::Parse("free group rank must be at least 2".into()));
                }
                Self::srw_free(k)
            }
            "srw" => Self::simple(arg.parse()?),
            "drift-z" => Self::drift_z(num(arg)?)?,
            "wreath-walk" => {
                let parts: Vec<&str> = arg.split(',').collect();
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("wreath-walk needs q,alpha,gamma: {arg:?}")));
                }
                let q: u32 = parts[0].trim().parse().map_err(|e| Error::Parse(format!("q {:?}: {e}", parts[0])))?;
                Self::wreath_walk(q, num(parts[1])?, num(parts[2])?)?
            }
            "product" => {
                let split = top_level_split(arg, ',')
                    .ok_or_else(|| Error::Parse(format!("product walk needs a,<left>,<right>: {arg:?}")))?;
                let a = num(&arg[..split])?;
                let rest = &arg[split + 1..];
                let (left, right) = split_walk_pair(rest)?;
                crate::conformal::product_walk(&left, &right, a)?
            }
            other => return Err(Error::Parse(format!("unknown walk {other:?}"))),
        };
        w.generation_certificate(DEFAULT_GEN_RADIUS, DEFAULT_GEN_STEPS)?;
        Ok(w)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WalkFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("walk file: {e}")))?;
        let group: GroupModel = file.group.parse()?;
        let steps = file.steps.iter().map(|s| Ok((group.parse_element(&s.elem)?, s.p))).collect::<Result<Vec<_>>>()?;
        let name = file.name.unwrap_or_else(|| "custom".to_string());
        Self::certified(group, steps, name)
    }

    pub fn to_json(&self) -> String {
        let file = WalkFile {
            group: self.group.to_string(),
            steps: self.steps.iter().map(|(g, p)| StepEntry { elem: g.to_string(), p: *p }).collect(),
            name: Some(self.name.clone()),
        };
        serde_json::to_string_pretty(&file).expect("walk file serializes")
    }

    pub fn prob(&self, g: &GroupElement) -> f64 {
        self.steps.iter().find(|(s, _)| s == g).map_or(0.0, |s| s.1)
    }

    pub fn max_step_length(&self) -> usize {
        self.steps.iter().map(|(g, _)| self.group.word_length(g)).max().unwrap_or(0)
    }

    /// True when every support element is a generator.
    pub fn is_nearest_neighbour(&self) -> bool {
        self.steps.iter().all(|(g, _)| self.group.generators.contains(g))
    }

    /// Mean displacement of the lattice coordinates (concatenated over all
    /// lattice factors of a product).
    pub fn lattice_drift(&self) -> Vec<f64> {
        fn coords(g: &GroupElement, out: &mut Vec<f64>) {
            match g {
                GroupElement::Lattice(v) => out.extend(v.iter().map(|&x| x as f64)),
                GroupElement::Product(a, b) => {
                    coords(a, out);
                    coords(b, out);
                }
                _ => {}
            }
        }
        let mut mean: Vec<f64> = Vec::new();
        for (g, p) in &self.steps {
            let mut c = Vec::new();
            coords(g, &mut c);
            if mean.is_empty() {
                mean = vec![0.0; c.len()];
            }
            for (m, x) in mean.iter_mut().zip(c) {
                *m += p * x;
            }
        }
        mean
    }

    /// Checks transience on grounds that hold at desk scale: exponential or
    /// at least cubic growth, or a nonzero lattice drift.
    pub fn transience_check(&self) -> Result<()> {
        if self.group.kind.growth_degree() >= 3 {
            return Ok(());
        }
        let drift = self.lattice_drift();
        if drift.iter().any(|d| d.abs() > 1e-12) {
            return Ok(());
        }
        Err(Error::TransienceUnverified(format!(
            "{} has growth degree {} and no drift",
            self.name,
            self.group.kind.growth_degree()
        )))
    }

    pub fn generation_certificate(&self, radius: usize, max_steps: usize) -> Result<GenerationCertificate> {
        let ball = self.group.kind.ball(radius, DEFAULT_BALL_CAP)?;
        let mut missing: HashSet<&GroupElement> = ball.elements.iter().collect();
        let e = self.group.identity();
        missing.remove(&e);
        let mut seen: HashSet<GroupElement> = HashSet::from([e.clone()]);
        let mut frontier = vec![e];
        let mut used = 0;
        for k in 1..=max_steps {
            if missing.is_empty() {
                break;
            }
            let mut next = Vec::new();
            for x in &frontier {
                for (s, _) in &self.steps {
                    let y = self.group.kind.mul_unchecked(x, s);
                    if seen.insert(y.clone()) {
                        missing.remove(&y);
                        next.push(y);
                    }
                }
            }
            if seen.len() > DEFAULT_BALL_CAP {
                return Err(Error::BallCap { radius, cap: DEFAULT_BALL_CAP });
            }
            frontier = next;
            used = k;
        }
        if !missing.is_empty() {
            let mut left: Vec<String> = missing.iter().map(|g| g.to_string()).collect();
            left.sort();
            return Err(Error::InvalidWalk(format!(
                "support of {} does not reach {} elements of B(e,{radius}) within {max_steps} steps, e.g. {}",
                self.name,
                left.len(),
                left[0]
            )));
        }
        Ok(GenerationCertificate { radius, max_steps, ball_size: ball.len(), steps_used: used })
    }
}

fn strip_brackets(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('<', '>'), ('(', ')'), ('[', ']')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

/// Splits `left,right` where both halves are walk names that may themselves
/// contain commas: every split point is tried and the unique parse wins.
fn split_walk_pair(s: &str) -> Result<(WalkSpec, WalkSpec)> {
    if let Some(i) = top_level_split(s, ',') {
        if s.trim_start().starts_with(['<', '(', '[']) {
            return Ok((WalkSpec::named(&s[..i])?, WalkSpec::named(&s[i + 1..])?));
        }
    }
    let mut found = None;
    for (i, c) in s.char_indices() {
        if c != ',' {
            continue;
        }
        if let (Ok(l), Ok(r)) = (WalkSpec::named(&s[..i]), WalkSpec::named(&s[i + 1..])) {
            if found.is_some() {
                return Err(Error::Parse(format!("ambiguous product walk components in {s:?}; use <..>")));
            }
            found = Some((l, r));
        }
    }
    found.ok_or_else(|| Error::Parse(format!("cannot split product walk components {s:?}")))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WalkFile {
    group: String,
    steps: Vec<StepEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepEntry {
    elem: String,
    p: f64,
}

pub(crate) const NO_NEIGHBOUR: u32 = u32::MAX;

/// The walk restricted to a ball: for every ball element `x` and support
/// element `s`, the index of `x s` or [`NO_NEIGHBOUR`] when it leaves the ball.
#[derive(Clone, Debug)]
pub struct BallChain {
    pub ball: Ball,
    pub probs: Vec<f64>,
    pub next: Vec<u32>,
}

impl BallChain {
    pub fn new(walk: &WalkSpec, radius: usize) -> Result<Self> {
        let ball = walk.group.kind.ball(radius, DEFAULT_BALL_CAP)?;
        let k = walk.steps.len();
        let kind = &walk.group.kind;
        let next: Vec<u32> = ball
            .elements
            .par_iter()
            .flat_map_iter(|x| {
                walk.steps.iter().map(|(s, _)| {
                    let y = kind.mul_unchecked(x, s);
                    ball.position(&y).map_or(NO_NEIGHBOUR, |i| i as u32)
                })
            })
            .collect();
        debug_assert_eq!(next.len(), ball.len() * k);
        let probs = walk.steps.iter().map(|s| s.1).collect();
        Ok(BallChain { ball, probs, next })
    }

    pub fn len(&self) -> usize {
        self.ball.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ball.is_empty()
    }

    pub fn identity_index(&self) -> usize {
        // the identity always has the smallest length, not necessarily the smallest key
        self.ball.lengths.iter().position(|&l| l == 0).expect("ball contains e")
    }

    #[inline]
    pub fn neighbours(&self, i: usize) -> &[u32] {
        let k = self.probs.len();
        &self.next[i * k..(i + 1) * k]
    }

    /// One step of `v -> Q v` where `Q` is the walk killed on leaving the
    /// ball, restricted to elements of length at most `limit`.
    pub fn apply(&self, v: &[f64], out: &mut [f64], limit: u32) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            if self.ball.lengths[i] > limit {
                *o = 0.0;
                return;
            }
            let mut acc = 0.0;
            for (&j, &p) in self.neighbours(i).iter().zip(&self.probs) {
                if j != NO_NEIGHBOUR && self.ball.lengths[j as usize] <= limit {
                    acc += p * v[j as usize];
                }
            }
            *o = acc;
        });
    }
}

/// The distribution of the walk after `n` steps, restricted to a ball.
#[derive(Clone, Debug)]
pub struct NStepDistribution {
    pub n: usize,
    pub radius: usize,
    pub probs: HashMap<GroupElement, f64>,
    /// Mass that left the ball at some step and was dropped.
    pub escaped: f64,
    /// Whether every retained value equals the unrestricted `mu^n` value.
    pub exact: bool,
}

pub fn n_step_distribution(walk: &WalkSpec, n: usize, radius: usize) -> Result<NStepDistribution> {
    let chain = BallChain::new(walk, radius)?;
    let (probs, escaped) = n_step_on_chain(&chain, n);
    let map = chain.ball.elements.iter().zip(probs).filter(|(_, p)| *p > 0.0).map(|(g, p)| (g.clone(), p)).collect();
    Ok(NStepDistribution { n, radius, probs: map, escaped, exact: n * walk.max_step_length() <= radius })
}

/// Forward propagation of the point mass at `e` on a ball chain.
pub(crate) fn n_step_on_chain(chain: &BallChain, n: usize) -> (Vec<f64>, f64) {
    let mut cur = vec![0.0; chain.len()];
    cur[chain.identity_index()] = 1.0;
    let mut escaped = 0.0;
    for _ in 0..n {
        let mut nxt = vec![0.0; chain.len()];
        for (i, &m) in cur.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (&j, &p) in chain.neighbours(i).iter().zip(&chain.probs) {
                if j == NO_NEIGHBOUR {
                    escaped += m * p;
                } else {
                    nxt[j as usize] += m * p;
                }
            }
        }
        cur = nxt;
    }
    (cur, escaped)
}

/// Exact-rational `mu^n`, restricted to elements of word length at most
/// `radius`. The step probabilities are converted exactly from their binary
/// floating-point values.
pub fn n_step_distribution_exact(
    walk: &WalkSpec,
    n: usize,
    radius: usize,
) -> Result<HashMap<GroupElement, BigRational>> {
    let steps: Vec<(GroupElement, BigRational)> = walk
        .steps
        .iter()
        .map(|(g, p)| {
            BigRational::from_float(*p)
                .map(|r| (g.clone(), r))
                .ok_or_else(|| Error::InvalidWalk(format!("non-finite probability {p}")))
        })
        .collect::<Result<_>>()?;
    let kind = &walk.group.kind;
    let mut cur: HashMap<GroupElement, BigRational> = HashMap::from([(kind.identity(), BigRational::one())]);
    for _ in 0..n {
        let mut nxt: HashMap<GroupElement, BigRational> = HashMap::new();
        for (x, m) in &cur {
            for (s, p) in &steps {
                let y = kind.mul_unchecked(x, s);
                if kind.word_length(&y) <= radius {
                    *nxt.entry(y).or_insert_with(BigRational::zero) += m * p;
                }
            }
        }
        if nxt.len() > DEFAULT_BALL_CAP {
            return Err(Error::BallCap { radius, cap: DEFAULT_BALL_CAP });
        }
        cur = nxt;
    }
    Ok(cur)
}

/// `rho_hat = (mu^{n_max}_{e,e})^{1/n_max}` together with the return
/// probabilities along even times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub n_max: usize,
    pub rho_hat: f64,
    /// `(mu^{2k}_{e,e})^{1/2k}` for `k = 1..=n_max/2`.
    pub even_roots: Vec<f64>,
    /// Whether `even_roots` is nondecreasing. For symmetric walks the limit is
    /// the supremum, so a monotone sequence bounds `rho` from below.
    pub even_monotone: bool,
}

pub fn spectral_radius_estimate(walk: &WalkSpec, n_max: usize) -> Result<SpectralEstimate> {
    if n_max < 4 || !n_max.is_multiple_of(2) {
        return Err(Error::Parameter(format!("n_max must be even and at least 4, got {n_max}")));
    }
    // a closed path of length n never leaves B(e, n L / 2)
    let radius = (n_max * walk.max_step_length()).div_ceil(2);
    let chain = BallChain::new(walk, radius)?;
    let e = chain.identity_index();
    let mut cur = vec![0.0; chain.len()];
    cur[e] = 1.0;
    let mut even_roots = Vec::with_capacity(n_max / 2);
    for step in 1..=n_max {
        let mut nxt = vec![0.0; chain.len()];
        for (i, &m) in cur.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (&j, &p) in chain.neighbours(i).iter().zip(&chain.probs) {
                if j != NO_NEIGHBOUR {
                    nxt[j as usize] += m * p;
                }
            }
        }
        cur = nxt;
        if step % 2 == 0 {
            even_roots.push(cur[e].powf(1.0 / step as f64));
        }
    }
    let rho_hat = *even_roots.last().expect("n_max >= 4");
    let even_monotone = even_roots.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    Ok(SpectralEstimate { n_max, rho_hat, even_roots, even_monotone })
}

/// `sum_g mu(g) C^{|g|}`; always finite for finitely supported walks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCondition {
    pub constant: f64,
    pub value: f64,
    pub satisfied: bool,
}

pub fn tail_condition_check(walk: &WalkSpec, constant: f64) -> Result<TailCondition> {
    if constant.is_nan() || constant < 1.0 {
        return Err(Error::Parameter(format!("tail constant must be at least 1, got {constant}")));
    }
    let value = walk.steps.iter().map(|(g, p)| p * constant.powi(walk.group.word_length(g) as i32)).sum::<f64>();
    Ok(TailCondition { constant, value, satisfied: value.is_finite() })
}

/// Groups the support by kind, for reports.
pub fn describe(walk: &WalkSpec) -> String {
    let parts: Vec<String> = walk.steps.iter().map(|(g, p)| format!("{g}:{p}")).collect();
    format!("{} on {} [{}]", walk.name, walk.group, parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_steps_is_point_mass() {
        let w = WalkSpec::srw_free(2);
        let d = n_step_distribution(&w, 0, 3).unwrap();
        assert_eq!(d.probs.len(), 1);
        assert_eq!(d.probs[&w.group.identity()], 1.0);
    }

    #[test]
    fn one_step_is_uniform() {
        let w = WalkSpec::srw_free(2);
        let d = n_step_distribution(&w, 1, 3).unwrap();
        assert_eq!(d.probs.len(), 4);
        for p in d.probs.values() {
            assert_eq!(*p, 0.25);
        }
    }

    #[test]
    fn two_step_return_is_quarter() {
        let w = WalkSpec::srw_free(2);
        let d = n_step_distribution(&w, 2, 3).unwrap();
        assert_abs_diff_eq!(d.probs[&w.group.identity()], 0.25, epsilon = 1e-15);
        assert!(d.exact);
        let exact = n_step_distribution_exact(&w, 2, 3).unwrap();
        assert_eq!(exact[&w.group.identity()], BigRational::new(1.into(), 4.into()));
    }

    #[test]
    fn escaping_mass_is_reported() {
        let w = WalkSpec::drift_z(0.7).unwrap();
        let d = n_step_distribution(&w, 5, 3).unwrap();
        let kept: f64 = d.probs.values().sum();
        assert!(!d.exact);
        assert_abs_diff_eq!(kept + d.escaped, 1.0, epsilon = 1e-14);
        assert!(d.escaped > 0.0);
    }

    #[test]
    fn invalid_walks_are_rejected() {
        let z = GroupModel::lattice(1);
        let half = vec![(GroupElement::Lattice(vec![1]), 0.5)];
        assert!(matches!(WalkSpec::new(z.clone(), half, "x"), Err(Error::InvalidWalk(_))));
        // +1 only: does not generate Z as a semigroup
        let one = vec![(GroupElement::Lattice(vec![1]), 1.0)];
        let err = WalkSpec::certified(z, one, "up").unwrap_err();
        assert!(matches!(err, Error::InvalidWalk(_)));
        assert!(WalkSpec::drift_z(1.0).is_err());
    }

    #[test]
    fn generation_certificates() {
        let w = WalkSpec::srw_free(2);
        let c = w.generation_certificate(3, 12).unwrap();
        assert_eq!(c.ball_size, 53);
        assert_eq!(c.steps_used, 3);
        let ww = WalkSpec::wreath_walk(2, 0.7, 0.3).unwrap();
        assert!(ww.generation_certificate(3, 12).is_ok());
    }

    #[test]
    fn named_walks_parse() {
        assert_eq!(WalkSpec::named("srw-free:2").unwrap(), WalkSpec::srw_free(2));
        let d = WalkSpec::named("drift-z:0.7").unwrap();
        assert_abs_diff_eq!(d.prob(&GroupElement::Lattice(vec![1])), 0.7);
        let w = WalkSpec::named("wreath-walk:2,0.7,0.3").unwrap();
        assert_eq!(w.steps.len(), 6);
        let p = WalkSpec::named("product:0.5,wreath-walk:2,0.7,0.3,srw-free:2").unwrap();
        // the identity step of the wreath walk becomes a holding step of the product
        assert_eq!(p.steps.len(), 10);
        let p2 = WalkSpec::named("product:0.5,<wreath-walk:2,0.7,0.3>,<srw-free:2>").unwrap();
        assert_eq!(p, p2);
        assert!(WalkSpec::named("bogus:1").is_err());
    }

    #[test]
    fn json_round_trip() {
        let w = WalkSpec::wreath_walk(3, 0.6, 0.2).unwrap();
        let back = WalkSpec::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        let bad = r#"{"group":"free:2","steps":[],"extra":1}"#;
        assert!(WalkSpec::from_json(bad).is_err());
    }

    #[test]
    fn tail_condition_examples() {
        let f2 = WalkSpec::srw_free(2);
        assert_abs_diff_eq!(tail_condition_check(&f2, 1.0).unwrap().value, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(tail_condition_check(&f2, 3.0).unwrap().value, 3.0, epsilon = 1e-14);
        let z = WalkSpec::drift_z(0.7).unwrap();
        let t = tail_condition_check(&z, 2.0).unwrap();
        assert_abs_diff_eq!(t.value, 2.0, epsilon = 1e-15);
        assert!(t.satisfied);
    }

    #[test]
    fn transience_gate() {
        assert!(WalkSpec::simple(GroupModel::lattice(1)).transience_check().is_err());
        assert!(WalkSpec::simple(GroupModel::lattice(2)).transience_check().is_err());
        assert!(WalkSpec::simple(GroupModel::lattice(3)).transience_check().is_ok());
        assert!(WalkSpec::drift_z(0.7).unwrap().transience_check().is_ok());
        assert!(WalkSpec::srw_free(2).transience_check().is_ok());
    }

    #[test]
    fn spectral_radius_drift_z() {
        // closed form 2 sqrt(pq), approached from below like n^{-1/(2n)}
        let est = spectral_radius_estimate(&WalkSpec::drift_z(0.7).unwrap(), 2000).unwrap();
        let rho = 2.0 * (0.21f64).sqrt();
        assert!(est.rho_hat < rho && est.rho_hat > rho - 0.005, "{}", est.rho_hat);
        assert!(est.even_monotone);
    }

    #[test]
    fn spectral_radius_recurrent_z_tends_to_one() {
        let w = WalkSpec::simple(GroupModel::lattice(1));
        let a = spectral_radius_estimate(&w, 100).unwrap().rho_hat;
        let b = spectral_radius_estimate(&w, 1000).unwrap().rho_hat;
        assert!(a < b && b < 1.0 && b > 0.995);
    }
}
