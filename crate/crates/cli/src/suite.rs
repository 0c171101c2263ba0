//! The acceptance battery run by `martin suite`.
//!
//! Every criterion is computed from fixed walks and the configured seed, so
//! the report is a pure function of the configuration. Wall-clock times are
//! returned separately.

use std::time::Instant;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use martin_core::boundary::{
    cocycle_residual, extend_kernel, free_tree_kernel_oracle, harmonicity_residual, scan_candidates, spine_candidates,
    spine_scan, BoundaryApproximant,
};
use martin_core::conformal::{
    classify, default_phi_grid, kms_residual, multiplicity_report, phi_curve, phi_map_pushforward_check, product_walk,
    random_kms_words, Verdict,
};
use martin_core::feasibility::invariant_measure_feasibility;
use martin_core::group::{random_reduced_word, GroupElement, GroupKind};
use martin_core::kernel::{self, KernelOptions, KernelTable};
use martin_core::measure::{Cell, CylinderMeasure, KernelContext, MeasureModel};
use martin_core::sampler::{harmonic_measure_estimate, rn_identity_check};
use martin_core::{Result, WalkSpec};

/// Lamplighter walk used wherever the battery needs one.
pub const WREATH_WALK: &str = "wreath-walk:2,0.7,0.3";
/// Cylinder depth of the harmonic measure estimate.
pub const ESTIMATE_DEPTH: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub paths: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { seed: 1, paths: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    /// Wall-clock limit in seconds, checked against the run metadata.
    #[serde(rename = "timeLimit", skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub paths: u64,
    pub criteria: Vec<Criterion>,
    pub passed: usize,
    pub total: usize,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

/// Seconds spent per criterion, in report order.
pub type Timings = Vec<f64>;

struct Shared {
    f2: WalkSpec,
    f2_table: KernelTable,
    estimate: Option<MeasureModel>,
    estimate_secs: f64,
}

fn fmt(x: f64) -> String {
    format!("{x:.6e}")
}

fn word(s: &str) -> Vec<u8> {
    martin_core::group::parse_word(s, 2).expect("literal word")
}

/// Runs criteria 1 to 12. Criterion 13 compares two runs of this function
/// and is checked by the caller.
pub fn run_suite(cfg: &SuiteConfig) -> Result<(SuiteReport, Timings)> {
    let f2 = WalkSpec::srw_free(2);
    let f2_table = KernelTable::build_default(&f2)?;
    let mut shared = Shared { f2, f2_table, estimate: None, estimate_secs: 0.0 };
    type Check = fn(&SuiteConfig, &mut Shared) -> Result<Criterion>;
    let checks: [Check; 12] = [c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11, c12];
    let mut criteria = Vec::new();
    let mut timings = Vec::new();
    for check in checks {
        let start = Instant::now();
        let c = check(cfg, &mut shared)?;
        let mut secs = start.elapsed().as_secs_f64();
        if c.id == 6 {
            secs += shared.estimate_secs;
        }
        criteria.push(c);
        timings.push(secs);
    }
    let passed = criteria.iter().filter(|c| c.pass).count();
    let total = criteria.len();
    Ok((SuiteReport { seed: cfg.seed, paths: cfg.paths, criteria, passed, total }, timings))
}

fn estimate<'a>(cfg: &SuiteConfig, s: &'a mut Shared) -> Result<&'a MeasureModel> {
    if s.estimate.is_none() {
        let start = Instant::now();
        let est = harmonic_measure_estimate(&s.f2, ESTIMATE_DEPTH, cfg.paths, cfg.seed)?;
        s.estimate_secs = start.elapsed().as_secs_f64();
        s.estimate = Some(est.measure);
    }
    Ok(s.estimate.as_ref().expect("estimate computed"))
}

fn c1(_: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let e = s.f2.group.identity();
    let g = kernel::green(&s.f2, &e, 0, 1e-5, 16)?;
    let pass = (g.value - 1.5).abs() <= 1e-5 && (g.series - 1.5).abs() <= 1e-5 && g.methods_agree;
    Ok(Criterion {
        id: 1,
        name: "Green function of F_2 SRW at e".into(),
        pass,
        time_limit: Some(10.0),
        detail: format!(
            "solve {} series {} error {} agree {} solve radius {}",
            fmt(g.value),
            fmt(g.series),
            fmt(g.error),
            g.methods_agree,
            g.solve_radius
        ),
    })
}

fn c2(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x02);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let len = rng.gen_range(0..=4);
        let g = GroupElement::Free(random_reduced_word(&mut rng, 2, len));
        let prefix = random_reduced_word(&mut rng, 2, 10);
        let k = extend_kernel(&s.f2_table, &g, &BoundaryApproximant::end(&prefix))?;
        let exact = free_tree_kernel_oracle(&s.f2, &g, &prefix)?.to_f64().unwrap_or(f64::NAN);
        worst = worst.max((k.value - exact).abs());
    }
    Ok(Criterion {
        id: 2,
        name: "Martin kernel of F_2 against the exact tree formula".into(),
        pass: worst < 1e-4,
        time_limit: Some(30.0),
        detail: format!("max |K - K_exact| over 200 pairs {}", fmt(worst)),
    })
}

/// Random pairs `(g, xi)` for the kernel identities on one group.
fn kernel_samples(
    t: &KernelTable,
    rng: &mut ChaCha8Rng,
    n: usize,
    reach: usize,
) -> Vec<(GroupElement, GroupElement, BoundaryApproximant)> {
    let kind = &t.walk.group.kind;
    let rays: Vec<BoundaryApproximant> = match kind {
        GroupKind::Free { .. } => Vec::new(),
        GroupKind::Lattice { .. } => vec![BoundaryApproximant::z_end(1), BoundaryApproximant::z_end(-1)],
        _ => spine_candidates(kind, 2),
    };
    (0..n)
        .map(|_| {
            let (lg, lh) = (rng.gen_range(0..=reach), rng.gen_range(0..=reach));
            let g = kind.random_element(rng, lg);
            let h = kind.random_element(rng, lh);
            let xi = match kind {
                GroupKind::Free { rank } => BoundaryApproximant::end(&random_reduced_word(rng, *rank, 12)),
                _ => rays[rng.gen_range(0..rays.len())].clone(),
            };
            (g, h, xi.with_tolerance(1e-10))
        })
        .collect()
}

struct Groups {
    tables: Vec<KernelTable>,
}

fn identity_groups(s: &Shared) -> Result<Groups> {
    let z = KernelTable::build_default(&WalkSpec::drift_z(0.7)?)?;
    let w = KernelTable::build_default(&WalkSpec::named(WREATH_WALK)?)?;
    Ok(Groups { tables: vec![s.f2_table.clone(), z, w] })
}

fn c3(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let groups = identity_groups(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x03);
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    let counts = [167, 167, 166];
    for (t, n) in groups.tables.iter().zip(counts) {
        let mut w = 0.0_f64;
        for (g, h, xi) in kernel_samples(t, &mut rng, n, 2) {
            w = w.max(cocycle_residual(t, &g, &h, &xi)?.value);
        }
        parts.push(format!("{} {}", t.walk.name, fmt(w)));
        worst = worst.max(w);
    }
    Ok(Criterion {
        id: 3,
        name: "cocycle identity on 500 triples".into(),
        pass: worst < 1e-6,
        time_limit: None,
        detail: format!("max residual per walk: {}", parts.join(", ")),
    })
}

fn c4(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let groups = identity_groups(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x04);
    let mut worst = 0.0_f64;
    let mut parts = Vec::new();
    for t in &groups.tables {
        let mut w = 0.0_f64;
        for (g, _, xi) in kernel_samples(t, &mut rng, 200, 3) {
            w = w.max(harmonicity_residual(t, &g, &xi)?.value);
        }
        parts.push(format!("{} {}", t.walk.name, fmt(w)));
        worst = worst.max(w);
    }
    Ok(Criterion {
        id: 4,
        name: "harmonicity of extended kernels, 200 pairs per group".into(),
        pass: worst < 1e-4,
        time_limit: None,
        detail: format!("max residual per walk: {}", parts.join(", ")),
    })
}

fn c5(_: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let t = KernelTable::build(&s.f2, 6, &KernelOptions { margin: 4, ..Default::default() })?;
    let c = t.harnack_scan(3)?;
    Ok(Criterion {
        id: 5,
        name: "Harnack constant of F_2 at radius 3".into(),
        pass: (c - 3.0).abs() <= 0.03,
        time_limit: None,
        detail: format!("C {}", fmt(c)),
    })
}

fn c6(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let m = estimate(cfg, s)?;
    let MeasureModel::Cylinder(c) = m else { unreachable!("free groups give cylinder measures") };
    let mut worst_z = 0.0_f64;
    for (d, exact) in [(1, 0.25), (2, 1.0 / 12.0)] {
        for cell in Cell::cylinders(2, d) {
            let Cell::Cylinder(w) = cell else { continue };
            let (mass, se) = (c.mass(&w)?, c.mass_se(&w)?);
            worst_z = worst_z.max((mass - exact).abs() / se);
        }
    }
    let pass = worst_z < 3.0 && c.nonconverged < 1e-3;
    Ok(Criterion {
        id: 6,
        name: "harmonic measure of F_2 SRW on depth 1 and 2 cylinders".into(),
        pass,
        time_limit: Some(120.0),
        detail: format!(
            "paths {} converged {} max z {:.3} nonconverged {}",
            cfg.paths,
            c.samples.unwrap_or(0),
            worst_z,
            fmt(c.nonconverged)
        ),
    })
}

fn c7(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let m = estimate(cfg, s)?.clone();
    let t = &s.f2_table;
    let mut worst = 0.0_f64;
    for g in s.f2.group.kind.default_generators().iter().flat_map(|g| [g.clone(), s.f2.group.inv(g).expect("free")]) {
        for b in (1..=2).flat_map(|d| Cell::cylinders(2, d)) {
            worst = worst.max(rn_identity_check(t, &m, &g, &b)?.z);
        }
    }
    let a = GroupElement::Free(word("a"));
    let r = rn_identity_check(t, &m, &a, &Cell::Cylinder(word("a")))?;
    let anchor = (r.lhs - 0.75).abs() < 3.0 * r.se.max(1e-12) + r.kernel_error && (r.rhs - 0.75).abs() < 0.01;
    Ok(Criterion {
        id: 7,
        name: "Radon-Nikodym identity for generators and depth <= 2 cylinders".into(),
        pass: worst < 3.0 && anchor,
        time_limit: None,
        detail: format!("max z {:.3}; nu(a^-1 C(a)) {} vs int {}", worst, fmt(r.lhs), fmt(r.rhs)),
    })
}

fn c8(_: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let m = MeasureModel::Cylinder(CylinderMeasure::uniform(2, 1));
    let mut grid = default_phi_grid();
    grid.extend([0.0, 0.5, 1.0]);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let curve = phi_curve(&s.f2_table, &s.f2, &m, 1, &grid)?;
    let within = |t: f64, v: f64| {
        let p = curve.at(t).expect("grid point");
        ((p.value - v).abs() <= 3.0 * p.error() + 1e-12, p.value)
    };
    let (ok0, p0) = within(0.0, 1.0);
    let (ok1, p1) = within(1.0, 1.0);
    let (okh, ph) = within(0.5, 3f64.sqrt() / 2.0);
    let min_d2 = curve.second_differences.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    Ok(Criterion {
        id: 8,
        name: "Phi curve of the uniform depth-1 measure on F_2".into(),
        pass: ok0 && ok1 && okh && curve.convex,
        time_limit: None,
        detail: format!(
            "Phi(0) {} Phi(1) {} Phi(1/2) {} min second difference {}",
            fmt(p0),
            fmt(p1),
            fmt(ph),
            fmt(min_d2)
        ),
    })
}

fn c9(_: &SuiteConfig, _: &mut Shared) -> Result<Criterion> {
    let walk = WalkSpec::drift_z(0.7)?;
    let t = KernelTable::build_default(&walk)?;
    let plus = BoundaryApproximant::z_end(1);
    let scan = spine_scan(&t, &plus, 6, 1e-3)?;
    let k = extend_kernel(&t, &GroupElement::Lattice(vec![1]), &BoundaryApproximant::z_end(-1))?;
    let verdict = classify(&t, &MeasureModel::Dirac(plus), Some(&scan))?;
    let pass = scan.is_spine
        && scan.max_dev < 1e-3
        && (k.value - 3.0 / 7.0).abs() < 1e-3
        && verdict.verdict == Verdict::A
        && verdict.admissible == "all real beta";
    Ok(Criterion {
        id: 9,
        name: "spine of drifted Z at +inf".into(),
        pass,
        time_limit: None,
        detail: format!(
            "isSpine {} maxDev {} K(1,-inf) {} verdict {} spectrum {}",
            scan.is_spine,
            fmt(scan.max_dev),
            fmt(k.value),
            verdict.verdict,
            verdict.admissible
        ),
    })
}

fn c10(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let m = estimate(cfg, s)?.clone();
    let t = &s.f2_table;
    let keep = spine_candidates(&s.f2.group.kind, 3).len();
    let scans = scan_candidates(t, 3, 1e-3, keep)?;
    let min_dev = scans.scans.iter().map(|x| x.max_dev).fold(f64::INFINITY, f64::min);
    let all_fail = scans.failed.is_empty() && !scans.scans.is_empty() && min_dev > 0.5;
    let feas = invariant_measure_feasibility(&s.f2.group, 2)?;
    let verdict = classify(t, &m, scans.best())?;
    let pass = all_fail && !feas.is_feasible() && verdict.evidence == vec![1.0] && verdict.verdict == Verdict::C;
    Ok(Criterion {
        id: 10,
        name: "no spine and beta = 1 only on F_2".into(),
        pass,
        time_limit: None,
        detail: format!(
            "{} candidates, min maxDev {}; invariant measure at depth 2 feasible {}; verdict {} evidence {:?} spectrum {}",
            scans.scans.len(),
            fmt(min_dev),
            feas.is_feasible(),
            verdict.verdict,
            verdict.evidence,
            verdict.admissible
        ),
    })
}

fn c11(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let m = estimate(cfg, s)?.clone();
    let t = &s.f2_table;
    let words = random_kms_words(2, 100, cfg.seed ^ 0x0b);
    let mut max_z1 = 0.0_f64;
    let mut min_z2 = f64::INFINITY;
    for (f1, g1, f2, g2) in &words {
        max_z1 = max_z1.max(kms_residual(t, &m, 1.0, f1, g1, f2, g2)?.z);
        min_z2 = min_z2.min(kms_residual(t, &m, 2.0, f1, g1, f2, g2)?.z);
    }
    Ok(Criterion {
        id: 11,
        name: "KMS residuals on 100 random two-factor words".into(),
        pass: max_z1 < 3.0 && min_z2 >= 10.0,
        time_limit: None,
        detail: format!("beta 1 max z {max_z1:.3}; beta 2 min residual/error {min_z2:.3}"),
    })
}

/// `x_n = (delta_2, -n)` in the first factor, `e` in the second.
pub fn product_spine_direction() -> BoundaryApproximant {
    let prefix = GroupElement::pair(GroupElement::Wreath { lamps: vec![(2, 1)], pos: 0 }, GroupElement::Free(vec![]));
    let step = GroupElement::pair(GroupElement::Wreath { lamps: vec![], pos: -1 }, GroupElement::Free(vec![]));
    BoundaryApproximant::ray(prefix, step, "spine direction")
}

fn c12(cfg: &SuiteConfig, s: &mut Shared) -> Result<Criterion> {
    let m1 = estimate(cfg, s)?.clone();
    let mu0 = WalkSpec::named(WREATH_WALK)?;
    let mu2 = product_walk(&mu0, &s.f2, 0.5)?;
    let total: f64 = mu2.steps.iter().map(|x| x.1).sum();
    let mass_ok = (total - 1.0).abs() < 1e-12 && mu2.steps.iter().all(|x| x.1 > 0.0);
    let generation = mu2.generation_certificate(2, 12);
    let mut cells: Vec<Cell> = (1..=2).flat_map(|d| Cell::cylinders(2, d)).map(|c| Cell::Phi(Box::new(c))).collect();
    cells.push(Cell::Rest);
    let phi = phi_map_pushforward_check(&mu2, &s.f2_table, &m1, &cells, 100, cfg.seed ^ 0x0c)?;
    let max_z = phi.conformality.iter().map(|r| r.residual.z).fold(0.0, f64::max);
    let mut partition: Vec<Cell> = Cell::cylinders(2, 2).into_iter().map(|c| Cell::Phi(Box::new(c))).collect();
    partition.push(Cell::Rest);
    let measures = vec![
        ("pushforward of the F_2 harmonic estimate".to_string(), MeasureModel::Pushforward(Box::new(m1))),
        ("spine-direction Dirac".to_string(), MeasureModel::Dirac(product_spine_direction())),
    ];
    let report =
        multiplicity_report(KernelContext::product(&mu2.group, &s.f2_table), &mu2, &measures, &partition, 1.0)?;
    let tv = report.tv[0].lower_bound;
    let w = KernelTable::build_default(&mu0)?;
    let spine0 = spine_scan(&w, &BoundaryApproximant::parse(&mu0.group, "spine-scan:[2:1]@0*[]@-1")?, 2, 1e-4)?;
    let pass = mass_ok && generation.is_ok() && phi.conformal && phi.max_equivariance < 1e-4 && tv > 0.9;
    Ok(Criterion {
        id: 12,
        name: "product walk, pushforward conformality and multiplicity".into(),
        pass,
        time_limit: None,
        detail: format!(
            "mass {} generation {}; pushforward max z {:.3}, equivariance {}; TV lower bound {}; first-factor spine maxDev {}",
            fmt(total),
            generation.map(|g| format!("{} steps", g.steps_used)).unwrap_or_else(|e| e.to_string()),
            max_z,
            fmt(phi.max_equivariance),
            fmt(tv),
            fmt(spine0.max_dev)
        ),
    })
}
