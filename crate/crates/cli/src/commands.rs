//! One function per subcommand. Each returns an [`Outcome`] whose report is
//! a pure function of the resolved configuration.

use serde::Serialize;

use martin_core::boundary::{
    extend_kernel, harmonicity_residual, scan_candidates, spine_candidates, spine_scan, BoundaryApproximant,
    CandidateScan,
};
use martin_core::conformal::{
    classify, default_phi_grid, kms_residual, multiplicity_report, phi_curve, phi_map_pushforward_check, product_walk,
    random_kms_words, residual_battery, test_cells, ConformalReport, KmsRow, KmsWord, MultiplicityReport, PhiCurve,
    PhiMapReport, ResidualRow, DEFAULT_BETAS, Z_PASS,
};
use martin_core::feasibility::invariant_measure_feasibility;
use martin_core::kernel::{self, KernelOptions};
use martin_core::measure::{Cell, CylinderMeasure, KernelContext, MeasureModel};
use martin_core::sampler::{export_measure, harmonic_measure_estimate, MeasureExport};
use martin_core::walk::GenerationCertificate;
use martin_core::{GroupKind, KernelTable, WalkSpec};

use crate::config::{resolve_walk, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{num, Outcome, Table, Timing};
use crate::suite::{self, product_spine_direction, SuiteConfig, ESTIMATE_DEPTH, WREATH_WALK};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SAMPLES: u64 = 100_000;

fn table_for(cfg: &ExperimentConfig, walk: &WalkSpec) -> CliResult<KernelTable> {
    let (radius, mut opts) = KernelOptions::for_group(&walk.group.kind);
    if let Some(m) = cfg.margin {
        opts.margin = m;
    }
    Ok(KernelTable::build(walk, cfg.radius.unwrap_or(radius), &opts)?)
}

fn scan_radius(kind: &GroupKind) -> usize {
    match kind {
        GroupKind::Free { .. } => 3,
        GroupKind::Lattice { .. } => 6,
        GroupKind::Wreath { .. } => 4,
        GroupKind::Product(..) => 1,
    }
}

/// Spine tolerance unless configured; looser on wreath products.
fn scan_tolerance(cfg: &ExperimentConfig, kind: &GroupKind) -> f64 {
    cfg.tolerance.unwrap_or(match kind {
        GroupKind::Wreath { .. } => 0.05,
        _ => 1e-3,
    })
}

fn boundary(cfg: &ExperimentConfig, walk: &WalkSpec) -> CliResult<Option<BoundaryApproximant>> {
    cfg.boundary
        .as_deref()
        .map(|s| BoundaryApproximant::parse(&walk.group, s).map_err(|e| CliError::field("boundary", e.to_string())))
        .transpose()
}

/// `harmonic`, `uniform:<depth>` or `dirac:<approximant>`.
fn measure(cfg: &ExperimentConfig, walk: &WalkSpec) -> CliResult<MeasureModel> {
    let spec = cfg.measure.as_deref().unwrap_or("harmonic");
    if spec == "harmonic" {
        let depth = cfg.depth.unwrap_or(ESTIMATE_DEPTH);
        let n = cfg.samples.unwrap_or(DEFAULT_SAMPLES);
        return Ok(harmonic_measure_estimate(walk, depth, n, cfg.seed.unwrap_or(DEFAULT_SEED))?.measure);
    }
    if let Some(d) = spec.strip_prefix("uniform:") {
        let GroupKind::Free { rank } = walk.group.kind else {
            return Err(CliError::field("measure", "uniform cylinder measures need a free group"));
        };
        let depth: usize = d.parse().map_err(|_| CliError::field("measure", format!("bad depth {d:?}")))?;
        if !(1..=crate::config::MAX_DEPTH).contains(&depth) {
            return Err(CliError::field("measure", "depth out of range"));
        }
        return Ok(MeasureModel::Cylinder(CylinderMeasure::uniform(rank, depth)));
    }
    if let Some(a) = spec.strip_prefix("dirac:") {
        let xi = BoundaryApproximant::parse(&walk.group, a).map_err(|e| CliError::field("measure", e.to_string()))?;
        return Ok(MeasureModel::Dirac(xi));
    }
    Err(CliError::field("measure", format!("expected harmonic, uniform:<depth> or dirac:<approximant>, got {spec:?}")))
}

fn residual_table(rows: &[ResidualRow]) -> Table {
    let mut t = Table::new(&["beta", "g", "cell", "lhs", "rhs", "residual", "z", "pass"]);
    for r in rows {
        t.push(vec![
            num(r.beta),
            r.g.clone(),
            r.cell.clone(),
            num(r.residual.lhs),
            num(r.residual.rhs),
            num(r.residual.residual),
            num(r.residual.z),
            r.pass.to_string(),
        ]);
    }
    t
}

pub fn green(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let walk = cfg.walk_or("srw-free:2")?;
    let y = match &cfg.element {
        Some(s) => walk.group.parse_element(s).map_err(|e| CliError::field("element", e.to_string()))?,
        None => walk.group.identity(),
    };
    let (default_radius, opts) = KernelOptions::for_group(&walk.group.kind);
    let radius = cfg.radius.unwrap_or(default_radius);
    let eps = cfg.tolerance.unwrap_or(1e-5);
    let cap = cfg.max_solve_radius.unwrap_or(radius + opts.margin + 6);
    let g = kernel::green(&walk, &y, radius, eps, cap)?;
    let mut t = Table::new(&["target", "value", "extrapolated", "series", "error", "methods_agree", "solve_radius"]);
    t.push(vec![
        g.target.clone(),
        num(g.value),
        num(g.extrapolated),
        num(g.series),
        num(g.error),
        g.methods_agree.to_string(),
        g.solve_radius.to_string(),
    ]);
    let summary = format!("G(e, {}) = {} +- {:e}", g.target, g.value, g.error);
    Ok(Outcome::new("green", &g, t, g.methods_agree, summary))
}

#[derive(Serialize)]
struct MartinRow {
    g: String,
    boundary: String,
    value: f64,
    error: f64,
    harmonicity: f64,
    pass: bool,
}

#[derive(Serialize)]
struct MartinReport {
    walk: String,
    tolerance: f64,
    rows: Vec<MartinRow>,
}

pub fn martin(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let walk = cfg.walk_or("srw-free:2")?;
    let xi = boundary(cfg, &walk)?.ok_or_else(|| CliError::field("boundary", "required by martin"))?;
    let table = table_for(cfg, &walk)?;
    let kind = &walk.group.kind;
    let elements = match &cfg.elements {
        Some(list) => list
            .iter()
            .map(|s| walk.group.parse_element(s).map_err(|e| CliError::field("elements", e.to_string())))
            .collect::<CliResult<Vec<_>>>()?,
        None => match &cfg.element {
            Some(s) => vec![walk.group.parse_element(s).map_err(|e| CliError::field("element", e.to_string()))?],
            None => kind.default_generators(),
        },
    };
    let tol = cfg.tolerance.unwrap_or(1e-4);
    let mut rows = Vec::new();
    for g in &elements {
        let k = extend_kernel(&table, g, &xi)?;
        let h = harmonicity_residual(&table, g, &xi)?;
        rows.push(MartinRow {
            g: g.to_string(),
            boundary: xi.to_string(),
            value: k.value,
            error: k.error,
            harmonicity: h.value,
            pass: h.value < tol,
        });
    }
    let mut t = Table::new(&["g", "boundary", "value", "error", "harmonicity", "pass"]);
    for r in &rows {
        t.push(vec![
            r.g.clone(),
            r.boundary.clone(),
            num(r.value),
            num(r.error),
            num(r.harmonicity),
            r.pass.to_string(),
        ]);
    }
    let passed = rows.iter().all(|r| r.pass);
    let summary = format!("{} kernel values at {xi}", rows.len());
    Ok(Outcome::new("martin", &MartinReport { walk: walk.name.clone(), tolerance: tol, rows }, t, passed, summary))
}

pub fn harmonic(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let walk = cfg.walk_or("srw-free:2")?;
    let depth = cfg.depth.unwrap_or(2);
    let est = harmonic_measure_estimate(
        &walk,
        depth,
        cfg.samples.unwrap_or(DEFAULT_SAMPLES),
        cfg.seed.unwrap_or(DEFAULT_SEED),
    )?;
    let export: MeasureExport = export_measure(&walk.group.kind, &est.measure, depth)?;
    let mut t = Table::new(&["cyl", "mass", "se"]);
    for c in &export.cells {
        t.push(vec![c.cyl.clone(), num(c.mass), num(c.se)]);
    }
    let summary =
        format!("{} cells from {} paths, nonconverged {}", export.cells.len(), est.samples, export.nonconverged);
    Ok(Outcome::new("harmonic", &export, t, true, summary))
}

pub fn spine(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let walk = cfg.walk_or("drift-z:0.7")?;
    let table = table_for(&ExperimentConfig { radius: None, ..cfg.clone() }, &walk)?;
    let radius = cfg.radius.unwrap_or_else(|| scan_radius(&walk.group.kind));
    let tol = scan_tolerance(cfg, &walk.group.kind);
    let scan = match boundary(cfg, &walk)? {
        Some(xi) => {
            let s = spine_scan(&table, &xi, radius, tol)?;
            CandidateScan { radius, tolerance: tol, scans: vec![s], failed: Vec::new(), screened: 1 }
        }
        None => scan_candidates(&table, radius, tol, usize::MAX)?,
    };
    let mut t = Table::new(&["approximant", "label", "radius", "tolerance", "maxDev", "isSpine", "worst"]);
    for s in &scan.scans {
        t.push(vec![
            s.approximant.clone(),
            s.label.clone(),
            s.radius.to_string(),
            num(s.tolerance),
            num(s.max_dev),
            s.is_spine.to_string(),
            s.worst.clone(),
        ]);
    }
    let summary = match scan.best() {
        Some(b) => format!("best {} maxDev {:e} isSpine {}", b.label, b.max_dev, b.is_spine),
        None => "no candidate could be evaluated".to_string(),
    };
    Ok(Outcome::new("spine-scan", &scan, t, true, summary))
}

pub fn conformal(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let walk = cfg.walk_or("srw-free:2")?;
    let table = table_for(cfg, &walk)?;
    let m = measure(cfg, &walk)?;
    let kind = &walk.group.kind;
    let tol = scan_tolerance(cfg, kind);
    let scan = scan_candidates(&table, scan_radius(kind), tol, usize::MAX)?;
    let spine = scan.best().cloned();
    let spectrum = classify(&table, &m, spine.as_ref())?;
    let betas = cfg.betas.clone().unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    let cells = test_cells(kind, &m, walk.max_step_length())?;
    let residuals = residual_battery(&table, &walk, &m, &betas, &cells)?;
    let grid = cfg.grid.clone().unwrap_or_else(default_phi_grid);
    let phi = phi_curve(&table, &walk, &m, cfg.n.unwrap_or(1), &grid).ok();
    let kms = match kind {
        GroupKind::Free { rank } => {
            kms_rows(&table, &m, *rank, cfg.words.unwrap_or(20), &[1.0], cfg.seed.unwrap_or(DEFAULT_SEED))?
        }
        _ => Vec::new(),
    };
    let feasibility = invariant_measure_feasibility(&walk.group, 2).ok();
    let report = ConformalReport { verdict: spectrum.verdict, spine, spectrum, residuals, phi, kms, feasibility };
    let summary = format!("verdict {} spectrum {}", report.verdict, report.spectrum.admissible);
    let passed = report.verdict != martin_core::conformal::Verdict::None;
    Ok(Outcome::new("conformal", &report, residual_table(&report.residuals), passed, summary))
}

pub fn phi(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let walk = cfg.walk_or("srw-free:2")?;
    let table = table_for(cfg, &walk)?;
    let m = measure(cfg, &walk)?;
    let grid = cfg.grid.clone().unwrap_or_else(default_phi_grid);
    let curve: PhiCurve = phi_curve(&table, &walk, &m, cfg.n.unwrap_or(1), &grid)?;
    let mut t = Table::new(&["t", "value", "se", "kernel_error"]);
    for p in &curve.values {
        t.push(vec![num(p.t), num(p.value), num(p.se), num(p.kernel_error)]);
    }
    let summary = format!("{} grid points, convex {}", curve.values.len(), curve.convex);
    Ok(Outcome::new("phi", &curve, t, curve.convex, summary))
}

fn kms_rows(
    t: &KernelTable,
    m: &MeasureModel,
    rank: usize,
    count: usize,
    betas: &[f64],
    seed: u64,
) -> CliResult<Vec<KmsRow>> {
    let mut rows = Vec::new();
    for (f1, g1, f2, g2) in random_kms_words(rank, count, seed) {
        let word = KmsWord { factors: vec![(f1.clone(), g1.clone()), (f2.clone(), g2.clone())] }.to_string();
        for &beta in betas {
            let residual = kms_residual(t, m, beta, &f1, &g1, &f2, &g2)?;
            let pass = residual.z < Z_PASS;
            rows.push(KmsRow { beta, word: word.clone(), residual, pass });
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct KmsReport {
    walk: String,
    rows: Vec<KmsRow>,
}

pub fn kms(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let walk = cfg.walk_or("srw-free:2")?;
    let GroupKind::Free { rank } = walk.group.kind else {
        return Err(CliError::field("walk", "random KMS words are drawn on free groups"));
    };
    let table = table_for(cfg, &walk)?;
    let m = measure(cfg, &walk)?;
    let betas = cfg.betas.clone().unwrap_or_else(|| vec![1.0]);
    let rows = kms_rows(&table, &m, rank, cfg.words.unwrap_or(100), &betas, cfg.seed.unwrap_or(DEFAULT_SEED))?;
    let mut t = Table::new(&["beta", "word", "lhs", "rhs", "residual", "z", "pass"]);
    for r in &rows {
        t.push(vec![
            num(r.beta),
            r.word.clone(),
            num(r.residual.lhs),
            num(r.residual.rhs),
            num(r.residual.residual),
            num(r.residual.z),
            r.pass.to_string(),
        ]);
    }
    let passed = rows.iter().all(|r| r.pass);
    let failing = rows.iter().filter(|r| !r.pass).count();
    let summary = format!("{} rows, {failing} above z = {Z_PASS}", rows.len());
    Ok(Outcome::new("kms", &KmsReport { walk: walk.name.clone(), rows }, t, passed, summary))
}

#[derive(Serialize)]
struct ProductReport {
    walk: String,
    mass: f64,
    #[serde(rename = "massOk")]
    mass_ok: bool,
    generation: Option<GenerationCertificate>,
    #[serde(rename = "generationError", skip_serializing_if = "Option::is_none")]
    generation_error: Option<String>,
    #[serde(rename = "phiMap")]
    phi_map: PhiMapReport,
    multiplicity: MultiplicityReport,
}

pub fn product(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let mu0 = match &cfg.first {
        Some(w) => resolve_walk(w, "first")?,
        None => WalkSpec::named(WREATH_WALK)?,
    };
    let mu1 = match &cfg.second {
        Some(w) => resolve_walk(w, "second")?,
        None => WalkSpec::srw_free(2),
    };
    if !matches!(mu1.group.kind, GroupKind::Free { .. }) {
        return Err(CliError::field("second", "the second factor must be a free group"));
    }
    let mu2 = product_walk(&mu0, &mu1, cfg.mix.unwrap_or(0.5))?;
    let mass: f64 = mu2.steps.iter().map(|x| x.1).sum();
    let mass_ok = (mass - 1.0).abs() < 1e-12 && mu2.steps.iter().all(|x| x.1 > 0.0);
    let (generation, generation_error) = match mu2.generation_certificate(2, 12) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let t1 = table_for(cfg, &mu1)?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let m1 = harmonic_measure_estimate(
        &mu1,
        cfg.depth.unwrap_or(ESTIMATE_DEPTH),
        cfg.samples.unwrap_or(DEFAULT_SAMPLES),
        seed,
    )?
    .measure;
    let GroupKind::Free { rank } = mu1.group.kind else { unreachable!("checked above") };
    let mut cells: Vec<Cell> = (1..=2).flat_map(|d| Cell::cylinders(rank, d)).map(|c| Cell::Phi(Box::new(c))).collect();
    cells.push(Cell::Rest);
    let phi_map = phi_map_pushforward_check(&mu2, &t1, &m1, &cells, 100, seed ^ 0x0c)?;
    let mut partition: Vec<Cell> = Cell::cylinders(rank, 2).into_iter().map(|c| Cell::Phi(Box::new(c))).collect();
    partition.push(Cell::Rest);
    let direction = match mu0.group.kind {
        GroupKind::Wreath { .. } => product_spine_direction(),
        _ => spine_candidates(&mu2.group.kind, 1)
            .into_iter()
            .next()
            .ok_or_else(|| CliError::field("first", "no ray candidates in the first factor"))?,
    };
    let measures = vec![
        ("pushforward of the second-factor harmonic estimate".to_string(), MeasureModel::Pushforward(Box::new(m1))),
        ("first-factor direction Dirac".to_string(), MeasureModel::Dirac(direction)),
    ];
    let multiplicity = multiplicity_report(KernelContext::product(&mu2.group, &t1), &mu2, &measures, &partition, 1.0)?;
    let passed = mass_ok && generation.is_some() && phi_map.conformal;
    let mut t = Table::new(&["g", "cell", "lhs", "rhs", "residual", "z", "pass"]);
    for r in &phi_map.conformality {
        t.push(vec![
            r.g.clone(),
            r.cell.clone(),
            num(r.residual.lhs),
            num(r.residual.rhs),
            num(r.residual.residual),
            num(r.residual.z),
            r.pass.to_string(),
        ]);
    }
    let summary = format!(
        "mass ok {mass_ok}, pushforward conformal {}, distinguished {}",
        phi_map.conformal, multiplicity.distinguished
    );
    let report =
        ProductReport { walk: mu2.name.clone(), mass, mass_ok, generation, generation_error, phi_map, multiplicity };
    Ok(Outcome::new("product", &report, t, passed, summary))
}

pub fn suite(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let sc = SuiteConfig {
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        paths: cfg.paths.or(cfg.samples).unwrap_or(SuiteConfig::default().paths),
    };
    let (report, secs) = suite::run_suite(&sc)?;
    let mut t = Table::new(&["id", "name", "pass", "detail"]);
    for c in &report.criteria {
        t.push(vec![c.id.to_string(), c.name.clone(), c.pass.to_string(), c.detail.clone()]);
    }
    let timings: Vec<Timing> = report
        .criteria
        .iter()
        .zip(&secs)
        .map(|(c, s)| Timing { label: format!("criterion {}", c.id), seconds: *s, limit: c.time_limit })
        .collect();
    let in_time = timings.iter().all(|t| t.limit.is_none_or(|l| t.seconds < l));
    let summary = format!(
        "{}/{} criteria passed{}",
        report.passed,
        report.total,
        if in_time { "" } else { ", time limit exceeded" }
    );
    let mut out = Outcome::new("suite", &report, t, report.all_passed() && in_time, summary);
    out.timings = timings;
    Ok(out)
}
