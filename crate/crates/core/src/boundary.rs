//! Boundary points as limits of Martin kernels.
//!
//! A point `xi` is represented by an approximant: a tree end given by a
//! finite prefix (free groups), an explicit sequence `x_n`, or a ray
//! `prefix * step^n`. Kernel values `K(g, xi)` are limits of `K(g, x_n)`; for
//! nearest-neighbour walks on free groups the tree formula is used instead.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{format_word, inverse_letter, reduce_word, GroupElement, GroupKind, GroupModel};
use crate::kernel::KernelTable;
use crate::walk::WalkSpec;

/// Kernel convergence tolerance used when none is given.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
/// Number of consecutive agreements required for a sequence limit.
pub const AGREEMENTS: usize = 3;
/// Longest stretch of a ray that is evaluated.
pub const RAY_TERMS: usize = 48;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApproximantKind {
    /// Ends of a free group starting with `prefix` (reduced); depth is its length.
    TreeEnd {
        prefix: Vec<u8>,
    },
    Sequence {
        elements: Vec<GroupElement>,
    },
    /// The ray `x_n = prefix * step^n`.
    SpineCandidate {
        label: String,
        prefix: GroupElement,
        step: GroupElement,
    },
}

/// A kernel value with an absolute error bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub error: f64,
}

impl KernelValue {
    pub fn exact(value: f64) -> Self {
        KernelValue { value, error: 0.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryApproximant {
    pub kind: ApproximantKind,
    pub tolerance: f64,
    /// `K(g, xi)` keyed by the text form of `g`.
    pub cache: BTreeMap<String, KernelValue>,
}

impl PartialEq for BoundaryApproximant {
    /// Same representation; the cache is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl BoundaryApproximant {
    fn from_kind(kind: ApproximantKind) -> Self {
        BoundaryApproximant { kind, tolerance: DEFAULT_TOLERANCE, cache: BTreeMap::new() }
    }

    pub fn end(prefix: &[u8]) -> Self {
        Self::from_kind(ApproximantKind::TreeEnd { prefix: reduce_word(prefix) })
    }

    pub fn sequence(elements: Vec<GroupElement>) -> Self {
        Self::from_kind(ApproximantKind::Sequence { elements })
    }

    pub fn ray(prefix: GroupElement, step: GroupElement, label: impl Into<String>) -> Self {
        Self::from_kind(ApproximantKind::SpineCandidate { label: label.into(), prefix, step })
    }

    /// `+infinity` or `-infinity` on `Z`.
    pub fn z_end(sign: i64) -> Self {
        let label = if sign > 0 { "+inf" } else { "-inf" };
        Self::ray(GroupElement::Lattice(vec![0]), GroupElement::Lattice(vec![sign.signum()]), label)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ApproximantKind::SpineCandidate { label, .. } if !label.is_empty() => label.clone(),
            _ => self.to_string(),
        }
    }

    /// Parses `end:<word>`, `seq:<x;y;..>` or `spine-scan:<prefix>*<step>`
    /// (`spine-scan:+inf` and `spine-scan:-inf` on `Z`).
    pub fn parse(group: &GroupModel, s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(w) = s.strip_prefix("end:") {
            let GroupKind::Free { rank } = group.kind else {
                return Err(Error::Parse(format!("tree ends need a free group, not {group}")));
            };
            let w = w.trim();
            let word = crate::group::parse_word(w, rank)?;
            if w != "e" && word.len() != w.chars().count() {
                return Err(Error::Parse(format!("end prefix {w:?} is not reduced")));
            }
            return Ok(Self::end(&word));
        }
        if let Some(list) = s.strip_prefix("seq:") {
            let elements = list
                .split(';')
                .filter(|x| !x.trim().is_empty())
                .map(|x| group.parse_element(x))
                .collect::<Result<Vec<_>>>()?;
            if elements.is_empty() {
                return Err(Error::Parse("empty sequence".into()));
            }
            return Ok(Self::sequence(elements));
        }
        if let Some(t) = s.strip_prefix("spine-scan:") {
            let t = t.trim();
            if group.kind == (GroupKind::Lattice { dim: 1 }) && (t == "+inf" || t == "-inf") {
                return Ok(Self::z_end(if t == "+inf" { 1 } else { -1 }));
            }
            let split = crate::group::top_level_split(t, '*')
                .ok_or_else(|| Error::Parse(format!("ray template {t:?} must be <prefix>*<step>")))?;
            let prefix = group.parse_element(&t[..split])?;
            let step = group.parse_element(&t[split + 1..])?;
            if step == group.identity() {
                return Err(Error::Parse("ray step must not be the identity".into()));
            }
            return Ok(Self::ray(prefix, step, t));
        }
        Err(Error::Parse(format!("unknown boundary approximant {s:?}")))
    }

    /// The `n`-th approximating element, if any.
    pub fn term(&self, kind: &GroupKind, n: usize) -> Option<GroupElement> {
        match &self.kind {
            ApproximantKind::TreeEnd { prefix } => {
                (n <= prefix.len()).then(|| GroupElement::Free(prefix[..n].to_vec()))
            }
            ApproximantKind::Sequence { elements } => elements.get(n).cloned(),
            ApproximantKind::SpineCandidate { prefix, step, .. } => (n <= RAY_TERMS).then(|| {
                let mut x = prefix.clone();
                for _ in 0..n {
                    x = kind.mul_unchecked(&x, step);
                }
                x
            }),
        }
    }

    fn terms(&self, kind: &GroupKind) -> Vec<GroupElement> {
        let mut out = Vec::new();
        let mut n = 0;
        while let Some(x) = self.term(kind, n) {
            out.push(x);
            n += 1;
        }
        out
    }

    /// A reduced prefix of length `depth` of the end this approximant converges
    /// to, when it lives on a free group and has stabilised that far.
    pub fn tree_prefix(&self, kind: &GroupKind, depth: usize) -> Option<Vec<u8>> {
        if !matches!(kind, GroupKind::Free { .. }) {
            return None;
        }
        let words: Vec<Vec<u8>> = match &self.kind {
            ApproximantKind::TreeEnd { prefix } => {
                return (prefix.len() >= depth).then(|| prefix[..depth].to_vec());
            }
            ApproximantKind::Sequence { elements } => {
                elements.iter().rev().take(3).filter_map(|x| x.as_word().map(<[u8]>::to_vec)).collect()
            }
            ApproximantKind::SpineCandidate { .. } => {
                let mut ws = Vec::new();
                let mut n = 0;
                while let Some(x) = self.term(kind, n) {
                    let w = x.as_word()?.to_vec();
                    if w.len() >= depth + 2 {
                        ws.push(w);
                        if ws.len() == 3 {
                            break;
                        }
                    }
                    n += 1;
                }
                ws
            }
        };
        if words.len() < 3 {
            return None;
        }
        let common = words.iter().skip(1).fold(words[0].len(), |acc, w| acc.min(common_prefix(&words[0], w)));
        (common >= depth).then(|| words[0][..depth].to_vec())
    }

    /// Fills the cache with `K(g, xi)` for the given elements.
    pub fn cache_kernels(&mut self, t: &KernelTable, elements: &[GroupElement]) -> Result<()> {
        let values: Vec<(String, KernelValue)> =
            elements.par_iter().map(|g| Ok((g.to_string(), extend_kernel(t, g, self)?))).collect::<Result<_>>()?;
        self.cache.extend(values);
        Ok(())
    }
}

impl fmt::Display for BoundaryApproximant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ApproximantKind::TreeEnd { prefix } => write!(f, "end:{}", format_word(prefix)),
            ApproximantKind::Sequence { elements } => {
                let parts: Vec<String> = elements.iter().map(|x| x.to_string()).collect();
                write!(f, "seq:{}", parts.join(";"))
            }
            ApproximantKind::SpineCandidate { prefix, step, .. } => write!(f, "spine-scan:{prefix}*{step}"),
        }
    }
}

fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

fn tree_walk(t: &KernelTable) -> bool {
    matches!(t.walk.group.kind, GroupKind::Free { .. }) && t.walk.is_nearest_neighbour()
}

/// `K(g, xi)` with an error bar.
///
/// Tree ends of nearest-neighbour free walks use the exact tree formula
/// `K(g, xi) = F(g, c) / F(e, c)`, `c` the confluent of `g` and `xi`, with
/// one-step first-visit probabilities read from the table. Everything else is
/// the Cauchy limit of `K(g, x_n)`: the index is accepted once
/// [`AGREEMENTS`] successive differences are below the tolerance, and among
/// such indices the one with the smallest `oscillation + table error` wins.
pub fn extend_kernel(t: &KernelTable, g: &GroupElement, xi: &BoundaryApproximant) -> Result<KernelValue> {
    let kind = &t.walk.group.kind;
    if *g == kind.identity() {
        return Ok(KernelValue::exact(1.0));
    }
    if let Some(v) = xi.cache.get(&g.to_string()) {
        return Ok(*v);
    }
    if tree_walk(t) {
        let g_word = g.as_word().ok_or_else(|| Error::Representation(format!("{g} is not a free word")))?;
        let prefix = match &xi.kind {
            ApproximantKind::TreeEnd { prefix } => Some(prefix.clone()),
            _ => xi.tree_prefix(kind, g_word.len() + 1),
        };
        if let Some(p) = prefix {
            return tree_kernel(t, g_word, &p);
        }
    }
    sequence_limit(t, g, &xi.terms(kind), xi.tolerance)
}

fn tree_kernel(t: &KernelTable, g: &[u8], prefix: &[u8]) -> Result<KernelValue> {
    let c = common_prefix(g, prefix);
    if c == prefix.len() && g.len() > prefix.len() {
        return Err(Error::Partition { depth: prefix.len(), needed: g.len() });
    }
    let e = GroupElement::Free(Vec::new());
    let rel_e = t.relative_error(&e)?;
    let step = |s: u8| -> Result<(f64, f64)> {
        let x = GroupElement::Free(vec![s]);
        Ok((t.green(&x)? / t.green_at_e, t.relative_error(&x)? + rel_e))
    };
    let mut value = 1.0;
    let mut rel = 0.0;
    for &l in &g[c..] {
        let (f, r) = step(inverse_letter(l))?;
        value *= f;
        rel += r;
    }
    for &l in &prefix[..c] {
        let (f, r) = step(l)?;
        value /= f;
        rel += r;
    }
    Ok(KernelValue { value, error: value * rel })
}

fn sequence_limit(t: &KernelTable, g: &GroupElement, terms: &[GroupElement], tol: f64) -> Result<KernelValue> {
    let kind = &t.walk.group.kind;
    let gi = kind.inv_unchecked(g);
    let mut vals: Vec<(f64, f64)> = Vec::new();
    for x in terms {
        let y = kind.mul_unchecked(&gi, x);
        if !(t.covers(x) && t.covers(&y)) {
            continue;
        }
        let v = t.green(&y)? / t.green(x)?;
        let err = v * (t.relative_error(&y)? + t.relative_error(x)?);
        vals.push((v, err));
    }
    let mut best: Option<(f64, KernelValue)> = None;
    for m in AGREEMENTS..vals.len() {
        let agree = (m - AGREEMENTS..m).all(|i| (vals[i + 1].0 - vals[i].0).abs() < tol);
        if !agree {
            continue;
        }
        let osc = (vals[m].0 - vals[m - 1].0).abs();
        let score = osc + vals[m].1;
        if best.as_ref().is_none_or(|b| score < b.0) {
            best = Some((score, KernelValue { value: vals[m].0, error: score }));
        }
    }
    best.map(|b| b.1).ok_or_else(|| {
        Error::Convergence(format!(
            "K({g}, .) along {} covered terms has no {AGREEMENTS} successive agreements within {tol:e}",
            vals.len()
        ))
    })
}

/// `g . xi`: left translation of the approximant.
pub fn act_on_boundary(group: &GroupModel, g: &GroupElement, xi: &BoundaryApproximant) -> Result<BoundaryApproximant> {
    if *g == group.identity() {
        return Ok(BoundaryApproximant { cache: BTreeMap::new(), ..xi.clone() });
    }
    let kind = match &xi.kind {
        ApproximantKind::TreeEnd { prefix } => {
            let gw = g.as_word().ok_or_else(|| Error::Representation(format!("{g} is not a free word")))?;
            let mut cat = gw.to_vec();
            cat.extend_from_slice(prefix);
            let word = reduce_word(&cat);
            let cancelled = (gw.len() + prefix.len() - word.len()) / 2;
            if cancelled >= prefix.len() {
                return Err(Error::Partition { depth: prefix.len(), needed: gw.len() + 1 });
            }
            ApproximantKind::TreeEnd { prefix: word }
        }
        ApproximantKind::Sequence { elements } => {
            ApproximantKind::Sequence { elements: elements.iter().map(|x| group.mul(g, x)).collect::<Result<_>>()? }
        }
        ApproximantKind::SpineCandidate { label, prefix, step } => {
            ApproximantKind::SpineCandidate { label: label.clone(), prefix: group.mul(g, prefix)?, step: step.clone() }
        }
    };
    Ok(BoundaryApproximant { kind, tolerance: xi.tolerance, cache: BTreeMap::new() })
}

/// `D_g(xi) = log K(g^{-1}, xi)` with an absolute error bar.
pub fn cocycle_value(t: &KernelTable, g: &GroupElement, xi: &BoundaryApproximant) -> Result<KernelValue> {
    let gi = t.walk.group.inv(g)?;
    let k = extend_kernel(t, &gi, xi)?;
    Ok(KernelValue { value: k.value.ln(), error: k.error / k.value })
}

/// `|D_{gh}(xi) - D_g(h xi) - D_h(xi)|` and the combined error bar.
pub fn cocycle_residual(
    t: &KernelTable,
    g: &GroupElement,
    h: &GroupElement,
    xi: &BoundaryApproximant,
) -> Result<KernelValue> {
    let group = &t.walk.group;
    let gh = group.mul(g, h)?;
    let hxi = act_on_boundary(group, h, xi)?;
    let a = cocycle_value(t, &gh, xi)?;
    let b = cocycle_value(t, g, &hxi)?;
    let c = cocycle_value(t, h, xi)?;
    Ok(KernelValue { value: (a.value - b.value - c.value).abs(), error: a.error + b.error + c.error })
}

/// `|sum_s mu(s) K(gs, xi) - K(g, xi)|` with its error bar.
pub fn harmonicity_residual(t: &KernelTable, g: &GroupElement, xi: &BoundaryApproximant) -> Result<KernelValue> {
    let kind = &t.walk.group.kind;
    let mut acc = 0.0;
    let mut err = 0.0;
    for (s, p) in &t.walk.steps {
        let k = extend_kernel(t, &kind.mul_unchecked(g, s), xi)?;
        acc += p * k.value;
        err += p * k.error;
    }
    let k = extend_kernel(t, g, xi)?;
    Ok(KernelValue { value: (acc - k.value).abs(), error: err + k.error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineScan {
    pub approximant: String,
    pub label: String,
    pub radius: usize,
    pub tolerance: f64,
    #[serde(rename = "maxDev")]
    pub max_dev: f64,
    #[serde(rename = "isSpine")]
    pub is_spine: bool,
    /// Element attaining `max_dev`.
    pub worst: String,
}

/// `max_{|g| <= radius} |K(g, xi) - 1|`; the verdict holds up to that radius.
pub fn spine_scan(t: &KernelTable, xi: &BoundaryApproximant, radius: usize, tol: f64) -> Result<SpineScan> {
    let ball = t.walk.group.ball(radius)?;
    let devs: Vec<f64> = ball
        .elements
        .par_iter()
        .map(|g| extend_kernel(t, g, xi).map(|k| (k.value - 1.0).abs()))
        .collect::<Result<_>>()?;
    let (i, &max_dev) =
        devs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0))).expect("ball contains e");
    Ok(SpineScan {
        approximant: xi.to_string(),
        label: xi.label(),
        radius,
        tolerance: tol,
        max_dev,
        is_spine: max_dev < tol,
        worst: ball.elements[i].to_string(),
    })
}

/// Ray candidates for a spine on the given group.
///
/// Free groups: `s^n` for cyclically reduced `s` of length 1 and 2. Lattices:
/// `v n` for nonzero `v` in `{-1,0,1}^d`. Lamplighters: `t^n` and `t^{-n}`,
/// each decorated by up to three lamps (value 1) in `[-radius, radius]`.
/// Products: candidates of either factor paired with the identity.
pub fn spine_candidates(kind: &GroupKind, radius: usize) -> Vec<BoundaryApproximant> {
    match kind {
        GroupKind::Free { rank } => {
            let letters: Vec<u8> = (0..2 * *rank as u8).collect();
            let mut out = Vec::new();
            for &l in &letters {
                out.push(vec![l]);
            }
            for &l in &letters {
                for &m in &letters {
                    if m != inverse_letter(l) && m != l {
                        out.push(vec![l, m]);
                    }
                }
            }
            out.into_iter()
                .map(|w| {
                    let label = format!("({})^n", format_word(&w));
                    BoundaryApproximant::ray(GroupElement::Free(Vec::new()), GroupElement::Free(w), label)
                })
                .collect()
        }
        GroupKind::Lattice { dim } => {
            let mut out = Vec::new();
            let total = 3usize.pow(*dim as u32);
            for code in 0..total {
                let mut c = code;
                let v: Vec<i64> = (0..*dim)
                    .map(|_| {
                        let d = (c % 3) as i64 - 1;
                        c /= 3;
                        d
                    })
                    .collect();
                if v.iter().all(|&x| x == 0) {
                    continue;
                }
                let label = if *dim == 1 {
                    if v[0] > 0 {
                        "+inf".to_string()
                    } else {
                        "-inf".to_string()
                    }
                } else {
                    format!("{}n", GroupElement::Lattice(v.clone()))
                };
                out.push(BoundaryApproximant::ray(
                    GroupElement::Lattice(vec![0; *dim]),
                    GroupElement::Lattice(v),
                    label,
                ));
            }
            out
        }
        GroupKind::Wreath { .. } => {
            let r = radius as i64;
            let sites: Vec<i64> = (-r..=r).collect();
            let mut sets: Vec<Vec<i64>> = vec![vec![]];
            for (i, &a) in sites.iter().enumerate() {
                sets.push(vec![a]);
                for (j, &b) in sites.iter().enumerate().skip(i + 1) {
                    sets.push(vec![a, b]);
                    for &c in sites.iter().skip(j + 1) {
                        sets.push(vec![a, b, c]);
                    }
                }
            }
            let mut out = Vec::new();
            for s in sets {
                let prefix = GroupElement::Wreath { lamps: s.iter().map(|&p| (p, 1)).collect(), pos: 0 };
                for dir in [1i64, -1] {
                    let step = GroupElement::Wreath { lamps: vec![], pos: dir };
                    let label = format!("{prefix} then t^{}n", if dir > 0 { "" } else { "-" });
                    out.push(BoundaryApproximant::ray(prefix.clone(), step, label));
                }
            }
            out
        }
        GroupKind::Product(a, b) => {
            let mut out = Vec::new();
            for c in spine_candidates(a, radius) {
                if let ApproximantKind::SpineCandidate { label, prefix, step } = c.kind {
                    out.push(BoundaryApproximant::ray(
                        GroupElement::pair(prefix, b.identity()),
                        GroupElement::pair(step, b.identity()),
                        format!("<{label}|e>"),
                    ));
                }
            }
            for c in spine_candidates(b, radius) {
                if let ApproximantKind::SpineCandidate { label, prefix, step } = c.kind {
                    out.push(BoundaryApproximant::ray(
                        GroupElement::pair(a.identity(), prefix),
                        GroupElement::pair(a.identity(), step),
                        format!("<e|{label}>"),
                    ));
                }
            }
            out
        }
    }
}

/// Result of scanning all candidates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScan {
    pub radius: usize,
    pub tolerance: f64,
    /// Full scans of the most promising candidates, best first.
    pub scans: Vec<SpineScan>,
    /// Candidates whose kernel limits did not converge within the table.
    pub failed: Vec<String>,
    pub screened: usize,
}

impl CandidateScan {
    pub fn best(&self) -> Option<&SpineScan> {
        self.scans.first()
    }

    pub fn spine_found(&self) -> bool {
        self.best().is_some_and(|s| s.is_spine)
    }
}

/// Screens every candidate at its deepest covered term, then runs
/// [`spine_scan`] on the `keep` best.
pub fn scan_candidates(t: &KernelTable, radius: usize, tol: f64, keep: usize) -> Result<CandidateScan> {
    let kind = &t.walk.group.kind;
    let ball = t.walk.group.ball(radius)?;
    let candidates = spine_candidates(kind, radius);
    let screened = candidates.len();
    let mut rough: Vec<(f64, usize)> =
        candidates.par_iter().enumerate().map(|(i, c)| (screen(t, &ball.elements, c), i)).collect();
    rough.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut scans = Vec::new();
    let mut failed = Vec::new();
    for &(_, i) in rough.iter().take(keep) {
        let c = &candidates[i];
        match spine_scan(t, c, radius, tol) {
            Ok(s) => scans.push(s),
            Err(Error::Convergence(_)) | Err(Error::Range(_)) | Err(Error::Partition { .. }) => {
                failed.push(c.to_string())
            }
            Err(e) => return Err(e),
        }
    }
    scans.sort_by(|a, b| a.max_dev.total_cmp(&b.max_dev));
    Ok(CandidateScan { radius, tolerance: tol, scans, failed, screened })
}

/// Rough `max |K(g, x_n) - 1|` at the deepest term where all `g` are covered.
fn screen(t: &KernelTable, ball: &[GroupElement], c: &BoundaryApproximant) -> f64 {
    let kind = &t.walk.group.kind;
    if tree_walk(t) {
        let depth = ball.iter().map(|g| kind.word_length(g)).max().unwrap_or(0) + 1;
        let ok = c.tree_prefix(kind, depth).map(|p| {
            let xi = BoundaryApproximant::end(&p);
            ball.iter()
                .map(|g| extend_kernel(t, g, &xi).map_or(f64::INFINITY, |k| (k.value - 1.0).abs()))
                .fold(0.0, f64::max)
        });
        return ok.unwrap_or(f64::INFINITY);
    }
    let terms = c.terms(kind);
    for x in terms.iter().rev() {
        let mut dev: f64 = 0.0;
        let mut covered = true;
        for g in ball {
            let y = kind.mul_unchecked(&kind.inv_unchecked(g), x);
            match (t.green(&y), t.green(x)) {
                (Ok(a), Ok(b)) => dev = dev.max((a / b - 1.0).abs()),
                _ => {
                    covered = false;
                    break;
                }
            }
        }
        if covered {
            return dev;
        }
    }
    f64::INFINITY
}

/// Exact `K(g, xi) = (2k-1)^{d(e,c) - d(g,c)}` for the simple random walk on
/// `F_k`, `c` the confluent of `g` and the end.
pub fn free_tree_kernel_oracle(walk: &WalkSpec, g: &GroupElement, prefix: &[u8]) -> Result<BigRational> {
    let GroupKind::Free { rank } = walk.group.kind else {
        return Err(Error::Unsupported(format!("tree oracle needs a free group, got {}", walk.group)));
    };
    if *walk != WalkSpec::srw_free(rank) {
        return Err(Error::Unsupported(format!("tree oracle needs the simple random walk, got {}", walk.name)));
    }
    let gw = g.as_word().ok_or_else(|| Error::Representation(format!("{g} is not a free word")))?;
    let c = common_prefix(gw, prefix);
    if c == prefix.len() && gw.len() > prefix.len() {
        return Err(Error::Partition { depth: prefix.len(), needed: gw.len() });
    }
    let exponent = (gw.len() - c) as i64 - c as i64;
    let f = BigRational::new(1.into(), (2 * rank as i64 - 1).into());
    let mut k = BigRational::one();
    for _ in 0..exponent.unsigned_abs() {
        k *= &f;
    }
    if exponent < 0 {
        k = BigRational::one() / k;
    }
    debug_assert!(!k.is_zero());
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::parse_word;
    use crate::kernel::KernelOptions;
    use num_traits::ToPrimitive;

    fn w(s: &str) -> Vec<u8> {
        parse_word(s, 2).unwrap()
    }

    fn fw(s: &str) -> GroupElement {
        GroupElement::Free(w(s))
    }

    fn f2_table() -> KernelTable {
        KernelTable::build(&WalkSpec::srw_free(2), 4, &KernelOptions { margin: 6, ..Default::default() }).unwrap()
    }

    fn z_table() -> KernelTable {
        KernelTable::build_default(&WalkSpec::drift_z(0.7).unwrap()).unwrap()
    }

    #[test]
    fn tree_values() {
        let t = f2_table();
        let xi = BoundaryApproximant::end(&w("abab"));
        assert_eq!(extend_kernel(&t, &fw("e"), &xi).unwrap().value, 1.0);
        let k = extend_kernel(&t, &fw("a"), &xi).unwrap();
        assert!((k.value - 3.0).abs() < 1e-4, "{k:?}");
        let k = extend_kernel(&t, &fw("ba"), &xi).unwrap();
        assert!((k.value - 1.0 / 9.0).abs() < 1e-5);
        // the prefix sequence reaches the same value
        let seq = BoundaryApproximant::ray(fw("e"), fw("ab"), "ab");
        assert!((extend_kernel(&t, &fw("a"), &seq).unwrap().value - 3.0).abs() < 1e-4);
    }

    #[test]
    fn oracle_examples() {
        let walk = WalkSpec::srw_free(2);
        let p = w("abba");
        assert_eq!(free_tree_kernel_oracle(&walk, &fw("e"), &p).unwrap(), BigRational::one());
        assert_eq!(free_tree_kernel_oracle(&walk, &fw("ab"), &p).unwrap().to_f64().unwrap(), 9.0);
        assert_eq!(free_tree_kernel_oracle(&walk, &fw("bb"), &p).unwrap().to_f64().unwrap(), 1.0 / 9.0);
        assert!(free_tree_kernel_oracle(&walk, &fw("abbab"), &p).is_err());
        let lazy = WalkSpec::drift_z(0.7).unwrap();
        assert!(matches!(free_tree_kernel_oracle(&lazy, &fw("a"), &p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn action_on_ends() {
        let g = GroupModel::free(2);
        let xi = BoundaryApproximant::end(&w("Abab"));
        let moved = act_on_boundary(&g, &fw("a"), &xi).unwrap();
        assert_eq!(moved.to_string(), "end:bab");
        assert_eq!(act_on_boundary(&g, &fw("e"), &xi).unwrap(), xi);
        assert!(act_on_boundary(&g, &fw("baBa"), &xi).is_ok());
        assert!(act_on_boundary(&g, &fw("BABa"), &xi).is_err());
    }

    #[test]
    fn cocycle_on_tree() {
        let t = f2_table();
        let xi = BoundaryApproximant::end(&w("abAbaa"));
        let d = cocycle_value(&t, &fw("A"), &xi).unwrap();
        assert!((d.value - 3f64.ln()).abs() < 1e-4);
        assert_eq!(cocycle_value(&t, &fw("e"), &xi).unwrap().value, 0.0);
        let r = cocycle_residual(&t, &fw("ab"), &fw("B"), &xi).unwrap();
        assert!(r.value < 1e-12);
    }

    #[test]
    fn drift_z_ends() {
        let t = z_table();
        let plus = BoundaryApproximant::z_end(1);
        let minus = BoundaryApproximant::z_end(-1);
        let s = spine_scan(&t, &plus, 6, 1e-3).unwrap();
        assert!(s.is_spine, "{s:?}");
        assert!(s.max_dev < 1e-3);
        let k = extend_kernel(&t, &GroupElement::Lattice(vec![1]), &minus).unwrap();
        assert!((k.value - 3.0 / 7.0).abs() < 1e-3, "{k:?}");
        assert!(!spine_scan(&t, &minus, 6, 1e-3).unwrap().is_spine);
        assert_eq!(spine_scan(&t, &minus, 0, 1e-3).unwrap().max_dev, 0.0);
    }

    #[test]
    fn lamplighter_spine_found() {
        let walk = WalkSpec::wreath_walk(2, 0.7, 0.3).unwrap();
        let t = KernelTable::build_default(&walk).unwrap();
        let scan = scan_candidates(&t, 2, 0.05, 3).unwrap();
        let best = scan.best().unwrap();
        assert!(best.is_spine, "{scan:?}");
        // a lamp to the right of the tested ball, walker going left
        let xi = BoundaryApproximant::parse(&walk.group, "spine-scan:[2:1]@0*[]@-1").unwrap();
        let s = spine_scan(&t, &xi, 2, 0.05).unwrap();
        assert!(s.max_dev < 1e-4, "{s:?}");
        // the spine is fixed by the action
        let moved = act_on_boundary(&walk.group, &walk.group.parse_element("[0:1]@1").unwrap(), &xi).unwrap();
        assert!(spine_scan(&t, &moved, 1, 0.05).unwrap().max_dev < 1e-3);
    }

    #[test]
    fn parse_round_trip() {
        let g = GroupModel::free(2);
        for s in ["end:aB", "seq:a;ab;aba", "spine-scan:e*ab"] {
            assert_eq!(BoundaryApproximant::parse(&g, s).unwrap().to_string(), s);
        }
        assert!(BoundaryApproximant::parse(&g, "end:aA").is_err());
        let z = GroupModel::lattice(1);
        assert_eq!(BoundaryApproximant::parse(&z, "spine-scan:+inf").unwrap(), BoundaryApproximant::z_end(1));
    }

    #[test]
    fn free_candidates_all_fail() {
        let t = f2_table();
        let scan = scan_candidates(&t, 3, 1e-3, 40).unwrap();
        assert!(!scan.scans.is_empty());
        assert!(scan.scans.iter().all(|s| s.max_dev > 0.5));
    }
}
