use crate::config::{points_of, Config, Model, OrbitConfig, SymmetryConfig, SCHEMA_VERSION};
use crate::error::{CliError, EXIT_NOT_STABILIZED, EXIT_OK};
use crate::report::*;
use hillkit_core::continuous::{continuous_report, exponent, ContinuousSystem, FourierData};
use hillkit_core::dls::{action, orbit_chain, refine_orbit, PeriodicOrbit};
use hillkit_core::hill::{analyze_orbit, HillReport, Verdict, JOINT_DEGENERACY_TOL};
use hillkit_core::linalg::C64;
use hillkit_core::models::Billiard;
use hillkit_core::reversible::{classify_reversible, refine_reversible, reversible_verdicts, split_hessian, InvolutionSpec, ReversibleOrbit};
use hillkit_core::routh::{
    factorization_residuals, generalized_unit_eigendata, index_relation_report, linear_routh, orthogonality_checks, rho_reduction_check,
};
use hillkit_core::{Chain, DiscreteLagrangian, Error};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Everything a command produces; written once at the end.
pub struct Outcome {
    pub stdout: String,
    pub files: Vec<(PathBuf, String)>,
    pub status: u8,
    pub diagnostic: Option<String>,
}

struct Discrete<'a> {
    lagrangian: Arc<dyn DiscreteLagrangian>,
    billiard: Option<Billiard>,
    cfg: &'a Config,
}

fn discrete(cfg: &Config) -> Result<Discrete<'_>, CliError> {
    match cfg.model.build()? {
        Model::Discrete { lagrangian, billiard } => Ok(Discrete { lagrangian, billiard, cfg }),
        Model::Continuous(_) => Err(CliError::config("this command needs a discrete model; use hill-continuous")),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

struct Found {
    orbit: PeriodicOrbit,
    residual: f64,
    iterations: usize,
    log: Vec<f64>,
    reversible: Option<(InvolutionSpec, ReversibleOrbit)>,
}

impl Discrete<'_> {
    fn m(&self) -> usize {
        self.lagrangian.dim()
    }

    fn orbit_cfg(&self) -> Result<&OrbitConfig, CliError> {
        self.cfg.orbit.as_ref().ok_or_else(|| CliError::config("missing [orbit] block"))
    }

    fn involution(&self) -> Result<Option<(InvolutionSpec, Option<usize>, &'static str)>, CliError> {
        let Some(orbit) = &self.cfg.orbit else {
            return Ok(None);
        };
        orbit
            .reversible
            .as_ref()
            .map(|r| Ok((r.build(self.m(), self.billiard.as_ref())?, r.orbit_type(), r.name())))
            .transpose()
    }

    fn classify(&self, orbit: &PeriodicOrbit) -> Result<Option<(InvolutionSpec, ReversibleOrbit)>, CliError> {
        match self.involution()? {
            Some((s, expected, _)) => {
                let rev = classify_reversible(self.lagrangian.as_ref(), orbit, &s)?;
                if let Some(t) = expected {
                    if t != rev.orbit_type {
                        return Err(CliError::config(format!("orbit has reversible type {}, configuration says {t}", rev.orbit_type)));
                    }
                }
                Ok(Some((s, rev)))
            }
            None => Ok(None),
        }
    }

    /// Newton refinement from the configured guess: the half orbit when one
    /// is given, else the full list of points.
    fn find(&self) -> Result<Found, CliError> {
        let l = self.lagrangian.as_ref();
        let oc = self.orbit_cfg()?;
        let opts = self.cfg.analysis.newton();
        if let Some((half, charts)) = oc.half_guess(self.m())? {
            let (s, t, _) = self.involution()?.ok_or_else(|| CliError::config("orbit.half needs [orbit.reversible]"))?;
            let t = t.ok_or_else(|| CliError::config("orbit.half needs orbit.reversible.type"))?;
            if t > 2 {
                return Err(CliError::config("orbit.reversible.type must be 0, 1 or 2"));
            }
            let r = refine_reversible(l, &s, t, &half, &charts, &opts)?;
            let orbit = r.orbit.orbit.clone();
            return Ok(Found { orbit, residual: r.residual, iterations: r.iterations, log: r.log, reversible: Some((s, r.orbit)) });
        }
        let guess = oc.guess(self.m())?.ok_or_else(|| CliError::config("orbit needs points or half"))?;
        self.polish(&guess)
    }

    fn polish(&self, guess: &PeriodicOrbit) -> Result<Found, CliError> {
        let r = refine_orbit(self.lagrangian.as_ref(), guess, &self.cfg.analysis.newton())?;
        let reversible = self.classify(&r.orbit)?;
        Ok(Found { orbit: r.orbit, residual: r.residual, iterations: r.iterations, log: r.log, reversible })
    }
}

fn orbit_record(d: &Discrete, f: &Found) -> Result<OrbitRecord, CliError> {
    let name = d.involution()?.map(|(_, _, n)| n).unwrap_or("none");
    Ok(OrbitRecord {
        schema_version: SCHEMA_VERSION,
        model: d.cfg.model.kind().to_string(),
        n: f.orbit.n(),
        m: d.m(),
        points: f.orbit.points.iter().map(|p| p.iter().copied().collect()).collect(),
        charts: f.orbit.charts.clone(),
        action: action(d.lagrangian.as_ref(), &f.orbit)?,
        residual_norm: Checked::new(f.residual, d.cfg.analysis.newton_tolerance),
        iterations: f.iterations,
        log: f.log.clone(),
        reversible: f.reversible.as_ref().map(|(_, r)| ReversibleRecord {
            involution: name.to_string(),
            orbit_type: r.orbit_type,
            shift: r.shift,
            offset: r.offset,
            half: r.half.iter().map(|p| p.iter().copied().collect()).collect(),
            half_charts: r.half_charts.clone(),
        }),
    })
}

pub fn find_orbit(cfg: &Config, base: &Path, output: Option<&Path>) -> Result<Outcome, CliError> {
    let d = discrete(cfg)?;
    let found = d.find()?;
    let record = orbit_record(&d, &found)?;
    let json = to_json(&record)?;
    let mut files = Vec::new();
    if let Some(p) = output.map(Path::to_path_buf).or_else(|| cfg.output.orbit.as_ref().map(|p| resolve(base, p))) {
        files.push((p, json.clone()));
    }
    let diagnostic = (!record.residual_norm.pass).then(|| {
        format!("residual {:e} stagnated above the tolerance {:e}", record.residual_norm.value, record.residual_norm.tolerance)
    });
    Ok(Outcome { stdout: json, files, status: EXIT_OK, diagnostic })
}

/// The fields of an orbit file that `analyze --orbit` reads.
#[derive(Deserialize)]
struct OrbitFile {
    points: Vec<Vec<f64>>,
    charts: Option<Vec<usize>>,
}

fn load_orbit(path: &Path, m: usize) -> Result<PeriodicOrbit, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let f: OrbitFile = serde_json::from_str(&text).map_err(|e| CliError::config(format!("invalid orbit file: {e}")))?;
    let pts = points_of(&f.points, m, "orbit file")?;
    let charts = f.charts.unwrap_or_else(|| vec![0; pts.len()]);
    if charts.len() != pts.len() || pts.is_empty() {
        return Err(CliError::config("orbit file: charts and points differ in length"));
    }
    Ok(PeriodicOrbit::with_charts(pts, charts))
}

fn predictions(report: &HillReport, split: Option<&SplitSection>) -> Vec<String> {
    let v = &report.verdicts;
    let mut out = Vec::new();
    let mut push = |fired: bool, text: &str| {
        if fired {
            out.push(text.to_string());
        }
    };
    let yes = |x: Verdict| x == Verdict::Predicted;
    push(yes(v.multiplier_above_one), "real multiplier > 1");
    push(yes(v.negative_characteristic_at_one), "det(P - I) < 0");
    push(yes(v.multiplier_below_minus_one), "real multiplier < -1");
    push(yes(v.doubling_instability), "real multiplier < -1 (index jump under doubling)");
    push(v.hyperbolic_by_doubled_parity == Some(true), "hyperbolic (doubled index even)");
    push(v.hyperbolic_by_doubled_parity == Some(false), "elliptic (doubled index odd)");
    if let Some(s) = split {
        let r = &s.verdicts;
        push(yes(r.full_minimum), "nondegenerate minimum of the action (reversible criterion)");
        push(yes(r.full_maximum), "nondegenerate maximum of the action (reversible criterion)");
        push(yes(r.multiplier_above_one), "real multiplier > 1 (reversible minimum)");
        push(yes(r.billiard_parity_rule), "real multiplier > 1 (billiard parity rule)");
        push(yes(r.hyperbolic), "hyperbolic (twisted forms positive on the unit circle)");
        push(yes(r.unit_multiplier), "multiplier 1 (degenerate even form)");
    }
    out
}

fn stacked_fields(spec: &hillkit_core::routh::SymmetrySpec, orbit: &PeriodicOrbit) -> DMatrix<f64> {
    let (n, m, k) = (orbit.n(), spec.dim, spec.k());
    let mut gamma = DMatrix::zeros(n * m, k);
    for i in 0..n {
        for a in 0..k {
            gamma.view_mut((i * m, a), (m, 1)).copy_from(&spec.field(a, &orbit.points[i]));
        }
    }
    gamma
}

fn reduction_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::ConditionAFailed(_) | Error::ConditionBFailed | Error::ExcessDegeneracy { .. } | Error::NonIsotropic(_) | Error::DegenerateG
    )
}

fn routh_section(
    d: &Discrete,
    sym: &SymmetryConfig,
    orbit: &PeriodicOrbit,
    chain: &Chain,
    grid: &[C64],
) -> Result<(RouthSection, Option<Vec<f64>>), CliError> {
    let a = &d.cfg.analysis;
    let spec = sym.build(d.m())?;
    sym.check(&spec, d.lagrangian.as_ref(), orbit)?;
    let mut section = RouthSection {
        cyclic: sym.cyclic.clone(),
        k: spec.k(),
        status: "ok".into(),
        condition_c: None,
        a_perp_smallest_singular: None,
        kernel_dim: None,
        generalized_dim: None,
        reduced: None,
        relations: None,
        factorization_residual: None,
        rho_reduction: Vec::new(),
        rho_reduction_residual: None,
        orthogonality: None,
        orthogonality_residual: None,
    };
    let gamma = stacked_fields(&spec, orbit);
    let routh = match linear_routh(chain, &gamma) {
        Ok(r) => r,
        Err(e) if reduction_failure(&e) => {
            section.status = e.to_string();
            return Ok((section, None));
        }
        Err(e) => return Err(e.into()),
    };
    let eig = match generalized_unit_eigendata(chain, &routh) {
        Ok(x) => x,
        Err(e) if reduction_failure(&e) => {
            section.status = e.to_string();
            return Ok((section, None));
        }
        Err(e) => return Err(e.into()),
    };
    section.condition_c = Some(eig.condition_c);
    section.a_perp_smallest_singular = Some(eig.a_perp_smallest_singular);
    section.kernel_dim = Some(eig.kernel_dim);
    section.generalized_dim = Some(eig.generalized_dim);
    if let Some(r) = &routh.reduced {
        let mults = hillkit_core::hill::multipliers(r)?;
        section.reduced = Some(ReducedRecord { m: r.m(), multipliers: mults.iter().map(|z| [z.re, z.im]).collect(), twist_sign: r.twist_sign() });
    }
    let relations = index_relation_report(chain, &routh, &eig, grid)?;
    let factorization = factorization_residuals(chain, &routh, grid)?;
    section.factorization_residual = Some(Checked::new(relations.factorization_residual, a.routh_tolerance));
    section.relations = Some(relations);
    for &rho in grid {
        if (rho.norm() - 1.0).abs() <= 1e-12 && (rho - C64::new(1.0, 0.0)).norm() >= 1e-12 {
            section.rho_reduction.push(rho_reduction_check(chain, &routh, rho)?);
        }
    }
    if !section.rho_reduction.is_empty() {
        let worst = section.rho_reduction.iter().map(|r| r.residual).fold(0.0, f64::max);
        section.rho_reduction_residual = Some(Checked::new(worst, a.routh_tolerance));
    }
    let dim = chain.n() * chain.m();
    let samples: Vec<DVector<f64>> = (0..dim).map(|j| DVector::from_fn(dim, |i, _| if i == j { 1.0 } else { 0.0 })).collect();
    match orthogonality_checks(chain, &routh, &eig, &samples) {
        Ok(o) => {
            let worst = [o.hat_q_orthogonal, o.hat_q_gram, o.perp_q_orthogonal, o.perp_q_gram, o.hat_q_periodicity]
                .into_iter()
                .fold(0.0, f64::max);
            section.orthogonality_residual = Some(Checked::new(worst, a.orthogonality_tolerance));
            section.orthogonality = Some(o);
        }
        Err(e) if reduction_failure(&e) => {}
        Err(e) => return Err(e.into()),
    }
    Ok((section, Some(factorization)))
}

fn split_section(d: &Discrete, s: &InvolutionSpec, rev: &ReversibleOrbit, report: &HillReport) -> Result<SplitSection, CliError> {
    let a = &d.cfg.analysis;
    let split = split_hessian(d.lagrangian.as_ref(), s, rev)?;
    let verdicts = reversible_verdicts(rev, s, &split, report)?;
    let name = d.involution()?.map(|(_, _, n)| n).unwrap_or("none");
    Ok(SplitSection {
        involution: name.to_string(),
        orbit_type: rev.orbit_type,
        shift: rev.shift,
        offset: rev.offset,
        k: rev.k(),
        half: rev.half.iter().map(|p| p.iter().copied().collect()).collect(),
        half_charts: rev.half_charts.clone(),
        det_full: split.det_full,
        det_plus: split.det_plus,
        det_minus: split.det_minus,
        det_residual: (split.inertia_full.zero == 0).then(|| Checked::new(split.det_residual, a.split_tolerance)),
        restriction_residual: Checked::new(split.restriction_residual, a.form_tolerance),
        cross_term: Checked::new(split.cross_term, a.form_tolerance),
        c_asymmetry: Checked::new(split.c_asymmetry, a.form_tolerance),
        c_first: split.c_first.as_ref().map(rows),
        c_last: split.c_last.as_ref().map(rows),
        inertia_full: split.inertia_full,
        inertia_plus: split.inertia_plus,
        inertia_minus: split.inertia_minus,
        verdicts,
    })
}

pub struct AnalyzeOptions<'a> {
    pub orbit: Option<&'a Path>,
    pub rho_grid: Option<usize>,
}

fn analysis_report(cfg: &Config, opts: &AnalyzeOptions) -> Result<(AnalysisReport, Option<Vec<f64>>), CliError> {
    let d = discrete(cfg)?;
    let l = d.lagrangian.as_ref();
    let found = match opts.orbit {
        Some(p) => d.polish(&load_orbit(p, d.m())?)?,
        None => d.find()?,
    };
    let mut analysis = cfg.analysis.clone();
    if let Some(n) = opts.rho_grid {
        analysis.rho_grid = n;
        analysis.rho = None;
    }
    let grid = analysis.grid();
    if grid.is_empty() {
        return Err(CliError::config("empty rho grid"));
    }
    let orbit = &found.orbit;
    let hill = analyze_orbit(l, orbit, &grid)?;
    let (chain, _) = orbit_chain(l, orbit)?;

    let mut checks = Vec::new();
    let max_residual = Checked::new(hill.max_residual, analysis.hill_tolerance);
    checks.push(record("hill identity residual", max_residual));

    let (routh, factorization) = match &cfg.symmetry {
        Some(sym) => {
            let (sec, f) = routh_section(&d, sym, orbit, &chain, &grid)?;
            for (name, c) in [
                ("factorization residual", sec.factorization_residual),
                ("twisted reduction residual", sec.rho_reduction_residual),
                ("orthogonality residual", sec.orthogonality_residual),
            ] {
                if let Some(c) = c {
                    checks.push(record(name, c));
                }
            }
            (Some(sec), f)
        }
        None => (None, None),
    };

    let splitting = match &found.reversible {
        Some((s, rev)) => {
            let sec = split_section(&d, s, rev, &hill)?;
            if let Some(c) = sec.det_residual {
                checks.push(record("split determinant residual", c));
            }
            checks.push(record("split restriction residual", sec.restriction_residual));
            checks.push(record("split cross term", sec.cross_term));
            checks.push(record("boundary form asymmetry", sec.c_asymmetry));
            Some(sec)
        }
        None => None,
    };

    let at_one = hill.checks.iter().find(|c| c.rho == [1.0, 0.0]).map(|c| c.hessian_side).unwrap_or_else(|| {
        let z = chain.det_rho_hessian(C64::new(1.0, 0.0)).div(&chain.det_b_rho(C64::new(1.0, 0.0))).value();
        [z.re, z.im]
    });
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        command: "analyze".into(),
        model: cfg.model.kind().into(),
        n: hill.n,
        m: hill.m,
        points: orbit.points.iter().map(|p| p.iter().copied().collect()).collect(),
        charts: orbit.charts.clone(),
        residual_norm: Checked::new(found.residual, analysis.newton_tolerance),
        finite_difference: hill.finite_difference,
        monodromy: rows(&hill.monodromy),
        trace: hill.monodromy.trace(),
        multipliers: hill.multipliers.clone(),
        twist_sign: hill.twist_sign,
        beta: hill.log_beta.exp(),
        log_beta: hill.log_beta,
        characteristic_at_one: at_one,
        verdicts: hill.verdicts.clone(),
        predictions: predictions(&hill, splitting.as_ref()),
        billiard_sign: hill.billiard_sign,
        hill: HillSection { grid_size: grid.len(), max_residual, checks: hill.checks.clone() },
        routh,
        splitting,
        checks,
    };
    Ok((report, factorization))
}

fn render_analysis(report: &AnalysisReport, factorization: Option<&[f64]>, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => analysis_csv(report, factorization),
    }
}

fn check_status(checks: &[CheckRecord]) -> (u8, Option<String>) {
    match failures(checks) {
        Ok(()) => (EXIT_OK, None),
        Err(e) => (e.exit_code(), Some(e.to_string())),
    }
}

pub fn analyze(cfg: &Config, base: &Path, opts: &AnalyzeOptions, format: Format, write_files: bool) -> Result<Outcome, CliError> {
    let (report, factorization) = analysis_report(cfg, opts)?;
    let f = factorization.as_deref();
    let mut files = Vec::new();
    if write_files {
        if let Some(p) = &cfg.output.report {
            files.push((resolve(base, p), to_json(&report)?));
        }
        if let Some(p) = &cfg.output.table {
            files.push((resolve(base, p), analysis_csv(&report, f)?));
        }
    }
    let (status, diagnostic) = check_status(&report.checks);
    Ok(Outcome { stdout: render_analysis(&report, f, format)?, files, status, diagnostic })
}

fn continuous_system(cfg: &Config) -> Result<ContinuousSystem, CliError> {
    match cfg.model.build()? {
        Model::Continuous(sys) => Ok(sys),
        Model::Discrete { .. } => Err(CliError::config("hill-continuous needs a continuous model")),
    }
}

fn continuous(cfg: &Config, max_order: Option<usize>) -> Result<ContinuousReport, CliError> {
    let sys = continuous_system(cfg)?;
    let a = &cfg.analysis;
    let ladder: Vec<usize> = a.ladder.iter().copied().filter(|&n| max_order.is_none_or(|m| n <= m)).collect();
    if ladder.is_empty() {
        return Err(CliError::config("no ladder order is within --max-order"));
    }
    let grid = a.grid();
    let report = continuous_report(&sys, &grid, &ladder)?;
    let data = FourierData::new(&sys, *ladder.last().unwrap())?;
    let scale_of = |rho: C64| -> f64 { report.multipliers.iter().map(|z| C64::new(z[0], z[1]).norm() + rho.norm()).product() };
    let rows: Vec<ContinuousRow> = report
        .checks
        .iter()
        .map(|c| {
            let rho = C64::new(c.rho[0], c.rho[1]);
            let det = data.truncated_det(c.order, exponent(rho, sys.tau)).value();
            let small = |z: [f64; 2]| C64::new(z[0], z[1]).norm() <= JOINT_DEGENERACY_TOL * scale_of(rho);
            ContinuousRow { check: c.clone(), det: [det.re, det.im], jointly_degenerate: small(c.characteristic) && small(c.extrapolated_side) }
        })
        .collect();
    let by_order: Vec<Checked> = report.max_residual_by_order.iter().map(|&r| Checked::new(r, a.continuous_tolerance)).collect();
    let monotone = report.max_residual_by_order.windows(2).all(|w| w[1] <= w[0] || w[1] < 1e-11);
    let checks = vec![record(&format!("continuous identity residual at N = {}", ladder.last().unwrap()), *by_order.last().unwrap())];
    Ok(ContinuousReport {
        schema_version: SCHEMA_VERSION,
        command: "hill-continuous".into(),
        tau: report.tau,
        m: report.m,
        orientation_sign: report.orientation_sign,
        beta: report.beta,
        multipliers: report.multipliers,
        ladder,
        max_residual_by_order: by_order,
        residual_monotone: monotone,
        converged: report.converged,
        index: report.index,
        nullity: report.nullity,
        rows,
        checks,
    })
}

pub fn hill_continuous(cfg: &Config, base: &Path, max_order: Option<usize>, format: Format, write_files: bool) -> Result<Outcome, CliError> {
    let report = continuous(cfg, max_order)?;
    let tol = cfg.analysis.continuous_tolerance;
    let mut files = Vec::new();
    if write_files {
        if let Some(p) = &cfg.output.report {
            files.push((resolve(base, p), to_json(&report)?));
        }
        if let Some(p) = &cfg.output.table {
            files.push((resolve(base, p), continuous_csv(&report, tol)?));
        }
    }
    let stdout = match format {
        Format::Json => to_json(&report)?,
        Format::Csv => continuous_csv(&report, tol)?,
    };
    let (status, diagnostic) = if !report.converged {
        let e = CliError::Core(Error::NotStabilized(*report.ladder.last().unwrap()));
        debug_assert_eq!(e.exit_code(), EXIT_NOT_STABILIZED);
        (e.exit_code(), Some(e.to_string()))
    } else {
        check_status(&report.checks)
    };
    Ok(Outcome { stdout, files, status, diagnostic })
}

/// Analysis printed to stdout only; continuous models get the convergence
/// report.
pub fn report(cfg: &Config, base: &Path, opts: &AnalyzeOptions, format: Format) -> Result<Outcome, CliError> {
    match cfg.model.build()? {
        Model::Continuous(_) => hill_continuous(cfg, base, None, format, false),
        Model::Discrete { .. } => analyze(cfg, base, opts, format, false),
    }
}
