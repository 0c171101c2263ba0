//! Conformality, KMS and product-walk diagnostics.
//!
//! All checks are integrals of pointwise functionals against a
//! [`MeasureModel`], so the same code covers exact cylinder measures, Monte
//! Carlo estimates and point masses. Verdicts hold up to the radius,
//! depth and tolerance they report.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{act_on_boundary, extend_kernel, BoundaryApproximant, SpineScan};
use crate::error::{Error, Result};
use crate::feasibility::{invariant_measure_feasibility, FeasibilityReport};
use crate::group::{random_reduced_word, GroupElement, GroupKind, GroupModel};
use crate::kernel::KernelTable;
use crate::measure::{
    act_point, kernel_identity, point_in_cell, reduced_words, Cell, Estimate, KernelContext, MeasureModel, Point,
    Residual,
};
use crate::sampler::atom_cell;
use crate::walk::{n_step_distribution, WalkSpec};

pub const DEFAULT_BETAS: [f64; 5] = [-1.0, 0.0, 0.5, 1.0, 2.0];
pub const PHI_GRID_POINTS: usize = 21;
pub const PHI_GRID: (f64, f64) = (-1.0, 2.0);
/// Largest z-score accepted as agreement.
pub const Z_PASS: f64 = 3.0;

/// `|m(g^{-1} B) - int_B K(g, .)^beta dm|`.
pub fn conformality_residual<'a>(
    ctx: impl Into<KernelContext<'a>>,
    m: &MeasureModel,
    beta: f64,
    g: &GroupElement,
    b: &Cell,
) -> Result<Residual> {
    kernel_identity(ctx.into(), m, beta, g, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub value: f64,
    pub se: f64,
    pub kernel_error: f64,
}

/// `int K(g^{-1}, .)^beta dm`.
pub fn normalization_check<'a>(
    ctx: impl Into<KernelContext<'a>>,
    m: &MeasureModel,
    beta: f64,
    g: &GroupElement,
) -> Result<Normalization> {
    let ctx = ctx.into();
    let gi = ctx.group.inv(g)?;
    let [v, e] = m.integrate_parts(|p| {
        let k = ctx.kernel(&gi, p)?;
        Ok([k.value.powf(beta), (beta * k.value.powf(beta - 1.0) * k.error).abs()])
    })?;
    Ok(Normalization { value: v.value, se: v.se, kernel_error: e.value })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiPoint {
    pub t: f64,
    pub value: f64,
    pub se: f64,
    pub kernel_error: f64,
}

impl PhiPoint {
    pub fn error(&self) -> f64 {
        (self.se * self.se + self.kernel_error * self.kernel_error).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiCurve {
    pub walk: String,
    pub n: usize,
    pub values: Vec<PhiPoint>,
    /// Divided second differences at the interior grid points with their
    /// error bars.
    pub second_differences: Vec<(f64, f64)>,
    /// No second difference below `-Z_PASS` error bars.
    pub convex: bool,
}

impl PhiCurve {
    pub fn at(&self, t: f64) -> Option<&PhiPoint> {
        self.values.iter().find(|p| (p.t - t).abs() < 1e-12)
    }
}

pub fn default_phi_grid() -> Vec<f64> {
    let (a, b) = PHI_GRID;
    (0..PHI_GRID_POINTS).map(|i| a + (b - a) * i as f64 / (PHI_GRID_POINTS - 1) as f64).collect()
}

/// `Phi(t) = sum_h mu^n(h) int K(h, .)^t dm` on a grid.
pub fn phi_curve<'a>(
    ctx: impl Into<KernelContext<'a>>,
    walk: &WalkSpec,
    m: &MeasureModel,
    n: usize,
    grid: &[f64],
) -> Result<PhiCurve> {
    let ctx = ctx.into();
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("phi grid must be strictly increasing".into()));
    }
    if n == 0 {
        return Err(Error::Parameter("phi curve needs n >= 1".into()));
    }
    let radius = n * walk.max_step_length();
    let dist = n_step_distribution(walk, n, radius)?;
    if !dist.exact || dist.escaped > 0.0 {
        return Err(Error::Range(format!("mu^{n} is not contained in the ball of radius {radius}")));
    }
    let mut support: Vec<(GroupElement, f64)> = dist.probs.into_iter().collect();
    support.sort_by_cached_key(|(g, _)| g.to_string());
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        let [v, e] = m.integrate_parts(|p| {
            let mut acc = 0.0;
            let mut err = 0.0;
            for (h, mu) in &support {
                let k = ctx.kernel(h, p)?;
                acc += mu * k.value.powf(t);
                err += mu * (t * k.value.powf(t - 1.0) * k.error).abs();
            }
            Ok([acc, err])
        })?;
        values.push(PhiPoint { t, value: v.value, se: v.se, kernel_error: e.value });
    }
    let mut second_differences = Vec::new();
    for w in values.windows(3) {
        let (h0, h1) = (w[1].t - w[0].t, w[2].t - w[1].t);
        let d = 2.0 * (w[0].value / (h0 * (h0 + h1)) - w[1].value / (h0 * h1) + w[2].value / (h1 * (h0 + h1)));
        let err = 2.0 * (w[0].error() / (h0 * (h0 + h1)) + w[1].error() / (h0 * h1) + w[2].error() / (h1 * (h0 + h1)));
        second_differences.push((d, err));
    }
    let convex = second_differences.iter().all(|(d, e)| *d >= -Z_PASS * e - 1e-12);
    Ok(PhiCurve { walk: walk.name.clone(), n, values, second_differences, convex })
}

/// One line of a residual battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub beta: f64,
    pub g: String,
    pub cell: String,
    #[serde(flatten)]
    pub residual: Residual,
    pub pass: bool,
}

/// Cells on which a measure can be tested against translations of length up
/// to `reach`.
pub fn test_cells(kind: &GroupKind, m: &MeasureModel, reach: usize) -> Result<Vec<Cell>> {
    Ok(match (kind, m) {
        (GroupKind::Free { rank }, MeasureModel::Cylinder(c)) => {
            let top = c.depth.saturating_sub(reach).min(2);
            (1..=top).flat_map(|d| Cell::cylinders(*rank, d)).collect()
        }
        (GroupKind::Free { rank }, _) => (1..=2).flat_map(|d| Cell::cylinders(*rank, d)).collect(),
        (GroupKind::Lattice { dim: 1 }, _) => vec![Cell::End(1), Cell::End(-1)],
        (GroupKind::Product(_, b), _) => {
            let mut cells: Vec<Cell> = match (&**b, m) {
                (GroupKind::Free { .. }, MeasureModel::Pushforward(inner)) => {
                    test_cells(b, inner, reach)?.into_iter().map(|c| Cell::Phi(Box::new(c))).collect()
                }
                (GroupKind::Free { rank }, _) => {
                    (1..=2).flat_map(|d| Cell::cylinders(*rank, d)).map(|c| Cell::Phi(Box::new(c))).collect()
                }
                _ => Vec::new(),
            };
            cells.push(Cell::Rest);
            cells
        }
        _ => {
            let mut cells: Vec<Cell> = Vec::new();
            for (p, w) in m.atoms() {
                if w > 0.0 {
                    let c = atom_cell(kind, &p)?;
                    if !cells.contains(&c) {
                        cells.push(c);
                    }
                }
            }
            cells.sort();
            cells
        }
    })
}

/// Residuals over the walk support (without `e`), the given cells and betas.
pub fn residual_battery<'a>(
    ctx: impl Into<KernelContext<'a>>,
    walk: &WalkSpec,
    m: &MeasureModel,
    betas: &[f64],
    cells: &[Cell],
) -> Result<Vec<ResidualRow>> {
    let ctx = ctx.into();
    let e = walk.group.identity();
    let mut rows = Vec::new();
    for &beta in betas {
        for (g, _) in walk.steps.iter().filter(|(g, _)| *g != e) {
            for b in cells {
                let r = conformality_residual(ctx, m, beta, g, b)?;
                rows.push(ResidualRow { beta, g: g.to_string(), cell: b.to_string(), pass: r.z < Z_PASS, residual: r });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Point mass at a spine, conformal for every beta tested.
    A,
    /// Invariant measure, conformal at beta = 0.
    B,
    /// Conformal at beta = 1.
    C,
    #[serde(rename = "none")]
    None,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::A => "A",
            Verdict::B => "B",
            Verdict::C => "C",
            Verdict::None => "none",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaVerdict {
    pub verdict: Verdict,
    #[serde(rename = "spineFound")]
    pub spine_found: bool,
    pub radius: usize,
    pub tolerance: f64,
    /// `"all real beta"` with a spine, otherwise a subset of `{0, 1}`.
    pub admissible: String,
    /// Betas with a conformal measure in evidence.
    pub evidence: Vec<f64>,
    /// Betas ruled out by a certificate.
    pub excluded: Vec<f64>,
    pub qualifier: String,
    pub residuals: Vec<ResidualRow>,
}

/// Grades a measure against the alternatives: point mass at a spine,
/// invariant, or conformal at beta = 1.
pub fn classify(t: &KernelTable, m: &MeasureModel, spine: Option<&SpineScan>) -> Result<BetaVerdict> {
    let walk = &t.walk;
    let kind = &walk.group.kind;
    let reach = walk.max_step_length();
    let cells = test_cells(kind, m, reach)?;
    let spine_found = spine.is_some_and(|s| s.is_spine);
    let (radius, tolerance) = spine.map_or((0, 0.0), |s| (s.radius, s.tolerance));

    let mut residuals = residual_battery(t, walk, m, &[0.0, 1.0], &cells)?;
    let passes = |rows: &[ResidualRow], beta: f64| rows.iter().filter(|r| r.beta == beta).all(|r| r.pass);
    let at_spine = match (m.dirac_point(), spine) {
        (Some(Point::Boundary(xi)), Some(s)) => s.is_spine && xi.to_string() == s.approximant,
        _ => false,
    };
    let mut verdict = Verdict::None;
    if at_spine {
        let rest: Vec<f64> = DEFAULT_BETAS.iter().copied().filter(|b| *b != 0.0 && *b != 1.0).collect();
        residuals.extend(residual_battery(t, walk, m, &rest, &cells)?);
        if residuals.iter().all(|r| r.pass) {
            verdict = Verdict::A;
        }
    }
    if verdict == Verdict::None {
        if passes(&residuals, 0.0) {
            verdict = Verdict::B;
        } else if passes(&residuals, 1.0) {
            verdict = Verdict::C;
        }
    }

    let mut evidence = Vec::new();
    let mut excluded = Vec::new();
    let mut qualifier = format!("cells {}, |z| < {Z_PASS}", cells.len());
    if spine_found {
        qualifier = format!("spine up to radius {radius} at tolerance {tolerance:e}; {qualifier}");
    }
    if passes(&residuals, 1.0) {
        evidence.push(1.0);
    }
    if passes(&residuals, 0.0) {
        evidence.insert(0, 0.0);
    } else if let Ok(f) = invariant_measure_feasibility(&walk.group, 2) {
        if !f.is_feasible() {
            excluded.push(0.0);
            qualifier.push_str("; no invariant measure at cylinder depth 2");
        }
    }
    let admissible = if spine_found {
        "all real beta".to_string()
    } else {
        let allowed: Vec<String> =
            [0.0, 1.0].iter().filter(|b| !excluded.contains(b)).map(|b| format!("{b}")).collect();
        format!("subset of {{{}}}", allowed.join(", "))
    };
    Ok(BetaVerdict { verdict, spine_found, radius, tolerance, admissible, evidence, excluded, qualifier, residuals })
}

/// A finite combination `sum c_i 1_{C_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub terms: Vec<(f64, Cell)>,
}

impl StepFunction {
    pub fn one() -> Self {
        StepFunction { terms: vec![(1.0, Cell::All)] }
    }

    pub fn indicator(c: Cell) -> Self {
        StepFunction { terms: vec![(1.0, c)] }
    }

    pub fn eval(&self, kind: &GroupKind, p: &Point) -> Result<f64> {
        let mut v = 0.0;
        for (c, cell) in &self.terms {
            if point_in_cell(kind, p, cell)? {
                v += c;
            }
        }
        Ok(v)
    }
}

impl fmt::Display for StepFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|(c, cell)| format!("{c}*1[{cell}]")).collect();
        write!(f, "{}", if parts.is_empty() { "0".to_string() } else { parts.join(" + ") })
    }
}

/// `f_1 U_{g_1} f_2 U_{g_2} ..`; empty for the unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmsWord {
    pub factors: Vec<(StepFunction, GroupElement)>,
}

impl fmt::Display for KmsWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.factors.iter().map(|(s, g)| format!("({s}) U[{g}]")).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Reduces the word to `F U_g` and returns `F` at `p` with `g`:
/// `F(p) = prod_i f_i((g_1 .. g_{i-1})^{-1} p)`.
fn reduced_value(group: &GroupModel, w: &KmsWord, p: &Point) -> Result<(f64, GroupElement)> {
    let mut prefix = group.identity();
    let mut value = 1.0;
    for (f, g) in &w.factors {
        let q = act_point(group, &group.inv(&prefix)?, p)?;
        value *= f.eval(&group.kind, &q)?;
        prefix = group.mul(&prefix, g)?;
    }
    Ok((value, prefix))
}

/// `omega_m(w)`: the integral of the reduced function when the group part is
/// trivial, zero otherwise. Coefficients are real, so the value is real.
pub fn kms_word_eval(group: &GroupModel, m: &MeasureModel, w: &KmsWord) -> Result<Estimate> {
    let total = w.factors.iter().try_fold(group.identity(), |acc, (_, g)| group.mul(&acc, g))?;
    if total != group.identity() {
        return Ok(Estimate { value: 0.0, se: 0.0 });
    }
    m.integrate(|p| Ok(reduced_value(group, w, p)?.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmsRow {
    pub beta: f64,
    pub word: String,
    #[serde(flatten)]
    pub residual: Residual,
    pub pass: bool,
}

/// `omega(f1 U_g1 f2 U_g2)` against `omega(f2 U_g2 f1 U_g1 e^{beta D_g1})`
/// with `e^{beta D_g}(xi) = K(g^{-1}, xi)^beta`.
pub fn kms_residual<'a>(
    ctx: impl Into<KernelContext<'a>>,
    m: &MeasureModel,
    beta: f64,
    f1: &StepFunction,
    g1: &GroupElement,
    f2: &StepFunction,
    g2: &GroupElement,
) -> Result<Residual> {
    let ctx = ctx.into();
    let group = ctx.group;
    let kind = &group.kind;
    if group.mul(g1, g2)? != group.identity() {
        return Ok(Residual::new(0.0, 0.0, 0.0, 0.0, 0.0));
    }
    let g1i = group.inv(g1)?;
    let [lhs, rhs, diff, kerr] = m.integrate_parts(|p| {
        let l = f1.eval(kind, p)? * f2.eval(kind, &act_point(group, &g1i, p)?)?;
        let w = f2.eval(kind, p)? * f1.eval(kind, &act_point(group, g1, p)?)?;
        let (r, e) = if w == 0.0 {
            (0.0, 0.0)
        } else {
            let k = ctx.kernel(&g1i, p)?;
            (w * k.value.powf(beta), (w * beta * k.value.powf(beta - 1.0) * k.error).abs())
        };
        Ok([l, r, l - r, e])
    })?;
    Ok(Residual::new(lhs.value, rhs.value, diff.value, diff.se, kerr.value))
}

/// Random two-factor words `f1 U_g f2 U_{g^{-1}}` on a free group: `g` of odd
/// length at most 3, `f1` a positive combination of two cylinders of depth
/// at most 2, `f2` a positive constant plus one such cylinder.
///
/// Draws are rejected unless the Busemann function of `g^{-1}` keeps one sign
/// on the support of `f1 o g`, so that `K - K^beta` cannot cancel there.
pub fn random_kms_words(
    rank: usize,
    count: usize,
    seed: u64,
) -> Vec<(StepFunction, GroupElement, StepFunction, GroupElement)> {
    let kind = GroupKind::Free { rank };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<Cell> = (1..=2).flat_map(|d| Cell::cylinders(rank, d)).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = if rng.gen_bool(0.7) { 1 } else { 3 };
        let g = GroupElement::Free(random_reduced_word(&mut rng, rank, len));
        let mut pick = || cells.choose(&mut rng).expect("cells").clone();
        let (c1, c2, c3) = (pick(), pick(), pick());
        let f1 = StepFunction { terms: vec![(rng.gen_range(0.5..1.5), c1), (rng.gen_range(0.5..1.5), c2)] };
        let f2 = StepFunction { terms: vec![(rng.gen_range(0.5..1.5), Cell::All), (rng.gen_range(0.5..1.5), c3)] };
        if !one_sided(&kind, &g, &f1) {
            continue;
        }
        let gi = kind.inv_unchecked(&g);
        out.push((f1, g, f2, gi));
    }
    out
}

/// Whether `2 |c(g^{-1}, xi)| - |g|` has one sign over `xi` with `g xi` in
/// the support of `f`, `c` being the confluent.
fn one_sided(kind: &GroupKind, g: &GroupElement, f: &StepFunction) -> bool {
    let GroupKind::Free { rank } = *kind else { return false };
    let gw = g.as_word().unwrap_or_default();
    let gi = kind.inv_unchecked(g);
    let giw = gi.as_word().unwrap_or_default();
    let mut side = None;
    for u in reduced_words(rank, gw.len() + 2) {
        let moved = kind.mul_unchecked(g, &GroupElement::Free(u.clone()));
        let v = moved.as_word().unwrap_or_default();
        let hit = f.terms.iter().any(|(_, c)| match c {
            Cell::All => true,
            Cell::Cylinder(w) => v.starts_with(w),
            _ => false,
        });
        if !hit {
            continue;
        }
        let c = giw.iter().zip(&u).take_while(|(a, b)| a == b).count();
        let s = 2 * c > gw.len();
        if *side.get_or_insert(s) != s {
            return false;
        }
    }
    true
}

/// The walk on `G0 x G1` that moves in the first factor with probability `a`
/// and in the second otherwise:
///
/// * `mu2(e,e) = a mu0(e) + (1-a) mu1(e)`
/// * `mu2(g,e) = a mu0(g)` for `g != e`
/// * `mu2(e,h) = (1-a) mu1(h)` for `h != e`
pub fn product_walk(mu0: &WalkSpec, mu1: &WalkSpec, a: f64) -> Result<WalkSpec> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Parameter(format!("mixing weight must lie in (0,1), got {a}")));
    }
    let group = GroupModel::product(mu0.group.clone(), mu1.group.clone());
    let (e0, e1) = (mu0.group.identity(), mu1.group.identity());
    let mut steps = Vec::new();
    let at_e = a * mu0.prob(&e0) + (1.0 - a) * mu1.prob(&e1);
    if at_e > 0.0 {
        steps.push((GroupElement::pair(e0.clone(), e1.clone()), at_e));
    }
    for (g, p) in mu0.steps.iter().filter(|(g, _)| *g != e0) {
        steps.push((GroupElement::pair(g.clone(), e1.clone()), a * p));
    }
    for (h, p) in mu1.steps.iter().filter(|(h, _)| *h != e1) {
        steps.push((GroupElement::pair(e0.clone(), h.clone()), (1.0 - a) * p));
    }
    WalkSpec::new(group, steps, format!("product:{a},<{}>,<{}>", mu0.name, mu1.name))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceRow {
    pub g: String,
    pub h: String,
    pub xi: String,
    /// `K(h, g xi)` on the second factor, i.e. `K(h, (g0, g) Phi(xi))`.
    pub direct: f64,
    /// `K(g^{-1} h, xi) / K(g^{-1}, xi)`.
    pub cocycle: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiMapReport {
    /// `max |K((g, e), Phi(xi)) - 1|` over the sampled points.
    pub first_factor_deviation: f64,
    pub equivariance: Vec<EquivarianceRow>,
    pub max_equivariance: f64,
    pub conformality: Vec<ResidualRow>,
    pub conformal: bool,
}

/// Checks the product map `Phi` on kernels and the conformality of the
/// pushforward of `m1` at beta = 1 on the given product cells. Kernels on
/// the product are defined through `K((g, h), Phi(xi)) = K(h, xi)`.
pub fn phi_map_pushforward_check(
    mu2: &WalkSpec,
    t1: &KernelTable,
    m1: &MeasureModel,
    cells: &[Cell],
    samples: usize,
    seed: u64,
) -> Result<PhiMapReport> {
    let GroupKind::Product(k0, k1) = &mu2.group.kind else {
        return Err(Error::Representation(format!("{} is not a product", mu2.group)));
    };
    if **k1 != t1.walk.group.kind {
        return Err(Error::Representation(format!("table is on {}, second factor is {k1}", t1.walk.group)));
    }
    let g1 = &t1.walk.group;
    let ctx = KernelContext::product(&mu2.group, t1);
    let GroupKind::Free { rank } = **k1 else {
        return Err(Error::Unsupported(format!("product map checks need a free second factor, got {k1}")));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = 0.0_f64;
    let mut equivariance = Vec::with_capacity(samples);
    for _ in 0..samples {
        let xi = BoundaryApproximant::end(&random_reduced_word(&mut rng, rank, 12));
        let len0 = rng.gen_range(1..=3);
        let g0 = k0.random_element(&mut rng, len0);
        let p = Point::Phi(xi.clone());
        let k = ctx.kernel(&GroupElement::pair(g0, g1.identity()), &p)?;
        first = first.max((k.value - 1.0).abs());

        let (lg, lh) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let g = k1.random_element(&mut rng, lg);
        let h = k1.random_element(&mut rng, lh);
        let moved = act_on_boundary(g1, &g, &xi)?;
        let direct = extend_kernel(t1, &h, &moved)?.value;
        let gi = g1.inv(&g)?;
        let cocycle = extend_kernel(t1, &g1.mul(&gi, &h)?, &xi)?.value / extend_kernel(t1, &gi, &xi)?.value;
        equivariance.push(EquivarianceRow {
            g: g.to_string(),
            h: h.to_string(),
            xi: xi.to_string(),
            direct,
            cocycle,
            residual: (direct - cocycle).abs(),
        });
    }
    let max_equivariance = equivariance.iter().map(|r| r.residual).fold(0.0, f64::max);
    let pushed = MeasureModel::Pushforward(Box::new(m1.clone()));
    let conformality = residual_battery(ctx, mu2, &pushed, &[1.0], cells)?;
    let conformal = conformality.iter().all(|r| r.pass);
    Ok(PhiMapReport { first_factor_deviation: first, equivariance, max_equivariance, conformality, conformal })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub name: String,
    /// `None` when the conformality battery could not be evaluated.
    pub conformal: Option<bool>,
    pub max_z: Option<f64>,
    pub max_cell_mass: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvBound {
    pub a: String,
    pub b: String,
    /// `1/2 sum_c max(0, |a(c) - b(c)| - 3 se_c)` over the shared partition.
    pub lower_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub beta: f64,
    pub partition: Vec<String>,
    pub measures: Vec<MeasureSummary>,
    pub tv: Vec<TvBound>,
    /// Classes of conformal measures pairwise separated by a TV lower bound
    /// above one half.
    pub distinguished: usize,
}

/// Runs the conformality battery on each named measure and bounds the total
/// variation between every pair on a shared partition.
pub fn multiplicity_report<'a>(
    ctx: impl Into<KernelContext<'a>>,
    walk: &WalkSpec,
    measures: &[(String, MeasureModel)],
    partition: &[Cell],
    beta: f64,
) -> Result<MultiplicityReport> {
    let ctx = ctx.into();
    let kind = &ctx.group.kind;
    let mut summaries = Vec::new();
    let mut masses: Vec<Vec<Estimate>> = Vec::new();
    for (name, m) in measures {
        let cell_masses = partition.iter().map(|c| m.mass(kind, c)).collect::<Result<Vec<_>>>()?;
        let max_cell_mass = cell_masses.iter().map(|e| e.value).fold(0.0, f64::max);
        let (conformal, max_z, note) = match residual_battery(ctx, walk, m, &[beta], partition) {
            Ok(rows) => {
                let z = rows.iter().map(|r| r.residual.z).fold(0.0, f64::max);
                (Some(rows.iter().all(|r| r.pass)), Some(z), String::new())
            }
            Err(e) => (None, None, format!("not evaluated: {e}")),
        };
        summaries.push(MeasureSummary { name: name.clone(), conformal, max_z, max_cell_mass, note });
        masses.push(cell_masses);
    }
    let mut tv = Vec::new();
    let tv_between = |i: usize, j: usize| -> f64 {
        0.5 * masses[i]
            .iter()
            .zip(&masses[j])
            .map(|(a, b)| ((a.value - b.value).abs() - 3.0 * (a.se * a.se + b.se * b.se).sqrt()).max(0.0))
            .sum::<f64>()
    };
    for i in 0..measures.len() {
        for j in i + 1..measures.len() {
            tv.push(TvBound { a: measures[i].0.clone(), b: measures[j].0.clone(), lower_bound: tv_between(i, j) });
        }
    }
    let mut classes: Vec<usize> = Vec::new();
    for i in (0..measures.len()).filter(|&i| summaries[i].conformal == Some(true)) {
        if classes.iter().all(|&c| tv_between(c, i) > 0.5) {
            classes.push(i);
        }
    }
    Ok(MultiplicityReport {
        beta,
        partition: partition.iter().map(ToString::to_string).collect(),
        measures: summaries,
        tv,
        distinguished: classes.len(),
    })
}

/// Report layout shared by the command line and the suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalReport {
    pub verdict: Verdict,
    pub spine: Option<SpineScan>,
    pub spectrum: BetaVerdict,
    pub residuals: Vec<ResidualRow>,
    pub phi: Option<PhiCurve>,
    pub kms: Vec<KmsRow>,
    pub feasibility: Option<FeasibilityReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::parse_word;
    use crate::measure::CylinderMeasure;
    use std::collections::BTreeMap;

    fn w(s: &str) -> Vec<u8> {
        parse_word(s, 2).unwrap()
    }

    fn f2() -> KernelTable {
        KernelTable::build_default(&WalkSpec::srw_free(2)).unwrap()
    }

    #[test]
    fn free_group_two_cell_values() {
        let t = f2();
        let m = MeasureModel::Cylinder(CylinderMeasure::uniform(2, 3));
        let a = GroupElement::Free(w("a"));
        let c = Cell::Cylinder(w("a"));
        let r1 = conformality_residual(&t, &m, 1.0, &a, &c).unwrap();
        assert!(r1.residual < 1e-5, "{r1:?}");
        let r2 = conformality_residual(&t, &m, 2.0, &a, &c).unwrap();
        assert!((r2.residual - 1.5).abs() < 1e-4, "{r2:?}");
        let n = normalization_check(&t, &m, 1.0, &a).unwrap();
        assert!((n.value - 1.0).abs() < 1e-5);
        let n = normalization_check(&t, &m, 1.0, &t.walk.group.identity()).unwrap();
        assert!((n.value - 1.0).abs() < 1e-12 && n.kernel_error == 0.0);
    }

    #[test]
    fn phi_curve_closed_form() {
        let t = f2();
        let m = MeasureModel::Cylinder(CylinderMeasure::uniform(2, 1));
        let c = phi_curve(&t, &t.walk, &m, 1, &default_phi_grid()).unwrap();
        for p in &c.values {
            let exact = 0.25 * 3f64.powf(p.t) + 0.75 * 3f64.powf(-p.t);
            assert!((p.value - exact).abs() < 1e-4, "{p:?}");
        }
        assert!((c.at(0.5).unwrap().value - 3f64.sqrt() / 2.0).abs() < 1e-5);
        assert!(c.convex);
        assert!(phi_curve(&t, &t.walk, &m, 1, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn kms_words() {
        let t = f2();
        let g = &t.walk.group;
        let m = MeasureModel::Cylinder(CylinderMeasure::uniform(2, 3));
        let unit = KmsWord { factors: vec![] };
        assert!((kms_word_eval(g, &m, &unit).unwrap().value - 1.0).abs() < 1e-12);
        let a = GroupElement::Free(w("a"));
        let ai = GroupElement::Free(w("A"));
        let ind = StepFunction::indicator(Cell::Cylinder(w("ab")));
        let wd = KmsWord { factors: vec![(ind.clone(), g.identity())] };
        assert!((kms_word_eval(g, &m, &wd).unwrap().value - 1.0 / 12.0).abs() < 1e-12);
        let wd = KmsWord { factors: vec![(StepFunction::one(), a.clone())] };
        assert_eq!(kms_word_eval(g, &m, &wd).unwrap().value, 0.0);
        let f1 = StepFunction::indicator(Cell::Cylinder(w("a")));
        let r = kms_residual(&t, &m, 1.0, &f1, &a, &StepFunction::one(), &ai).unwrap();
        assert!(r.residual < 1e-5);
        let r = kms_residual(&t, &m, 2.0, &f1, &a, &StepFunction::one(), &ai).unwrap();
        assert!((r.lhs - 0.25).abs() < 1e-12 && (r.rhs - 1.0 / 12.0).abs() < 1e-5, "{r:?}");
        let r = kms_residual(&t, &m, 2.0, &f1, &g.identity(), &StepFunction::one(), &g.identity()).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn classify_free_and_lopsided() {
        let t = f2();
        let m = MeasureModel::Cylinder(CylinderMeasure::uniform(2, 3));
        let v = classify(&t, &m, None).unwrap();
        assert_eq!(v.verdict, Verdict::C);
        assert_eq!(v.evidence, vec![1.0]);
        assert_eq!(v.excluded, vec![0.0]);
        // half the mass on C(a)
        let mut leaves = BTreeMap::new();
        for word in crate::measure::reduced_words(2, 3) {
            let m = if word[0] == 0 { 0.5 / 9.0 } else { 0.5 / 27.0 };
            leaves.insert(word, m);
        }
        let lop = MeasureModel::Cylinder(CylinderMeasure::from_leaves(2, 3, leaves).unwrap());
        let v = classify(&t, &lop, None).unwrap();
        assert_eq!(v.verdict, Verdict::None);
        for beta in DEFAULT_BETAS {
            let rows = residual_battery(&t, &t.walk, &lop, &[beta], &test_cells(&t.walk.group.kind, &lop, 1).unwrap())
                .unwrap();
            assert!(rows.iter().any(|r| !r.pass), "beta {beta}");
        }
    }

    #[test]
    fn product_walk_masses() {
        let mu0 = WalkSpec::wreath_walk(2, 0.7, 0.3).unwrap();
        let mu1 = WalkSpec::srw_free(2);
        let mu2 = product_walk(&mu0, &mu1, 0.5).unwrap();
        let total: f64 = mu2.steps.iter().map(|s| s.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((mu2.prob(&mu2.group.identity()) - 0.5 * mu0.prob(&mu0.group.identity())).abs() < 1e-15);
        assert!(product_walk(&mu0, &mu1, 1.0).is_err());
        // first marginal is a mu0 + (1 - a) delta_e
        let e1 = mu1.group.identity();
        for (g, p) in &mu0.steps {
            assert!((mu2.prob(&GroupElement::pair(g.clone(), e1.clone())) - 0.5 * p).abs() < 1e-15);
        }
    }

    #[test]
    fn drifted_z_has_one_conformal_class() {
        let walk = WalkSpec::drift_z(0.7).unwrap();
        let t = KernelTable::build_default(&walk).unwrap();
        let measures = vec![
            ("+inf".to_string(), MeasureModel::Dirac(BoundaryApproximant::z_end(1))),
            ("-inf".to_string(), MeasureModel::Dirac(BoundaryApproximant::z_end(-1))),
        ];
        let cells = vec![Cell::End(1), Cell::End(-1)];
        let r = multiplicity_report(&t, &walk, &measures, &cells, 1.0).unwrap();
        assert_eq!(r.measures[0].conformal, Some(true));
        assert_eq!(r.measures[1].conformal, Some(false));
        assert_eq!(r.distinguished, 1);
        assert!((r.tv[0].lower_bound - 1.0).abs() < 1e-12);
        let r0 = multiplicity_report(&t, &walk, &measures, &cells, 0.0).unwrap();
        assert_eq!(r0.distinguished, 2);
    }
}
