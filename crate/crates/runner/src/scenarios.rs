//! The runs behind each subcommand.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use dce_core::cavity::{build_coupling_tables, InstantaneousSpectrum, MirrorTrajectory};
use dce_core::field::{extract_bogoliubov, integrate_modes};
use dce_core::fock::{coherence_and_particles, evolve_vacuum, EvolveOptions, FockBasis, Propagator};
use dce_core::gaussian::{
    mode_diagonal_entropy, populations, renyi2_entropy, variances_by_ode, variances_from_bogoliubov, ModeCovariance,
    NCut,
};
use dce_core::perturbative::{diagonal_entropy_closed_form, particle_number};
use dce_core::resonance::{integrate, ResonanceTrajectory, SvaConfig};

use crate::config::{Pipeline, PropagatorKind, ScenarioConfig};
use crate::report::{Cell, RunReport, Table, VERSION};
use crate::RunError;

/// Dispatches on the bound pipeline.
pub fn run_pipeline(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    match cfg.pipeline {
        Some(Pipeline::ShortTime) => run_entropy_sweep(cfg),
        Some(Pipeline::FockOracle) => run_fock_oracle(cfg),
        Some(Pipeline::Resonance) => run_resonance_study(cfg),
        Some(Pipeline::Gaussian) => run_gaussian_study(cfg),
        Some(Pipeline::FieldOracle) => run_field_oracle(cfg),
        Some(Pipeline::Crosscheck) => run_crosscheck(cfg),
        None => Err(RunError::Config("no pipeline selected".into())),
    }
}

fn bind(cfg: &ScenarioConfig, pipeline: Pipeline) -> Result<ScenarioConfig, RunError> {
    cfg.clone().for_pipeline(pipeline)
}

/// Runs `f` on a pool sized by `cfg.threads` (0: available parallelism).
fn in_pool<T: Send>(cfg: &ScenarioConfig, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn finish(
    cfg: ScenarioConfig,
    started: Instant,
    tables: Vec<Table>,
    records: Vec<Value>,
    summary: Value,
    diagnostics: Value,
    passed: Option<bool>,
) -> RunReport {
    RunReport {
        version: VERSION,
        pipeline: cfg.pipeline.expect("bound config"),
        config: cfg,
        records,
        summary,
        diagnostics,
        wall_time_s: started.elapsed().as_secs_f64(),
        passed,
        tables,
    }
}

/// Closed-form particle number and diagonal entropy over `p` and `tau`.
pub fn run_entropy_sweep(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let cfg = bind(cfg, Pipeline::ShortTime)?;
    let ps = cfg.p_list();
    let taus = cfg.tau_values();
    let mut table = Table::new("sweep", &["p", "tau", "N", "S_d"]);
    let mut records = Vec::new();
    let mut grid: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &p in &ps {
        for &tau in &taus {
            let n = particle_number(p, tau);
            let s = diagonal_entropy_closed_form(p, tau)
                .map_err(|e| RunError::Regime(format!("p = {p}, tau = {tau}: {e}")))?;
            table.push(vec![p.into(), tau.into(), n.into(), s.into()]);
            records.push(json!({"pipeline": "short-time", "p": p, "tau": tau, "N": n, "S_d": s}));
            grid.entry(p).or_default().push(s);
        }
    }
    // entropy must increase with p at every tau (p = 1 creates nothing)
    let mut violations = Vec::new();
    let active: Vec<(&u32, &Vec<f64>)> = grid.iter().filter(|(p, _)| **p >= 2).collect();
    for w in active.windows(2) {
        for (i, &tau) in taus.iter().enumerate() {
            if !(w[1].1[i] > w[0].1[i]) {
                violations.push(json!({"tau": tau, "p_low": w[0].0, "p_high": w[1].0}));
            }
        }
    }
    let ordered = violations.is_empty();
    let summary = json!({"monotone_in_p": ordered, "violations": violations});
    Ok(finish(cfg, started, vec![table], records, summary, json!({}), Some(ordered)))
}

fn trajectory_for(cfg: &ScenarioConfig, p: u32, tau: f64) -> Result<MirrorTrajectory, RunError> {
    Ok(MirrorTrajectory::from_tau(cfg.physics.epsilon, p, tau)?)
}

fn evolve_options(cfg: &ScenarioConfig) -> EvolveOptions {
    EvolveOptions {
        steps: cfg.tolerances.fock_steps,
        tol: cfg.tolerances.fock,
        propagator: match cfg.propagator {
            PropagatorKind::Magnus4 => Propagator::Magnus4,
            PropagatorKind::Midpoint => Propagator::Midpoint,
        },
        ..Default::default()
    }
}

struct FockPoint {
    n: f64,
    s_d: f64,
    coherence: f64,
    s_vn: f64,
    purity: f64,
    steps: usize,
    error_estimate: f64,
    diagonal: Vec<(usize, String, f64)>,
}

fn fock_point(cfg: &ScenarioConfig, p: u32, tau: f64) -> Result<FockPoint, RunError> {
    let c = &cfg.cutoffs;
    let tables = build_coupling_tables(c.fock_modes, cfg.l_sum_max(c.fock_modes))?;
    let basis = FockBasis::new(c.fock_modes, c.n_max, true)?;
    let tr = trajectory_for(cfg, p, tau)?;
    let rho = evolve_vacuum(&tables, &InstantaneousSpectrum::new(tr), &basis, tr.duration, &evolve_options(cfg))?;
    let r = coherence_and_particles(&rho)?;
    let diagonal = if cfg.outputs.fock_diagonal {
        rho.diagonal()
            .iter()
            .enumerate()
            .map(|(i, &pr)| {
                let occ: Vec<String> = basis.state(i).iter().map(|n| n.to_string()).collect();
                (i, occ.join("-"), pr)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(FockPoint {
        n: r.n,
        s_d: r.s_d,
        coherence: r.coherence,
        s_vn: r.s_vn,
        purity: rho.purity(),
        steps: rho.steps,
        error_estimate: rho.error_estimate,
        diagonal,
    })
}

/// Exact Fock-space evolution of the vacuum at each (snapped) `tau`.
pub fn run_fock_oracle(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let cfg = bind(cfg, Pipeline::FockOracle)?;
    let p = cfg.p_list()[0];
    let taus = cfg.snapped_taus();
    let points =
        in_pool(&cfg, || taus.par_iter().map(|&(_, t)| fock_point(&cfg, p, t)).collect::<Result<Vec<_>, _>>())??;
    let mut table = Table::new("fock", &["tau_requested", "tau", "N", "S_d", "C", "S_vn", "purity", "steps"]);
    let mut diag = Table::new("fock_diagonal", &["tau", "index", "occupation", "probability"]);
    let mut records = Vec::new();
    let mut worst_c = 0.0f64;
    for (&(req, tau), f) in taus.iter().zip(&points) {
        table.push(vec![
            req.into(),
            tau.into(),
            f.n.into(),
            f.s_d.into(),
            f.coherence.into(),
            f.s_vn.into(),
            f.purity.into(),
            f.steps.into(),
        ]);
        for (i, occ, pr) in &f.diagonal {
            diag.push(vec![tau.into(), (*i).into(), Cell::Text(occ.clone()), (*pr).into()]);
        }
        worst_c = worst_c.max((f.coherence - f.s_d).abs());
        records.push(json!({
            "pipeline": "fock-oracle", "tau_requested": req, "tau": tau, "N": f.n, "S_d": f.s_d,
            "C": f.coherence, "S_vn": f.s_vn, "purity": f.purity, "steps": f.steps,
            "error_estimate": f.error_estimate,
        }));
    }
    let ok = worst_c <= cfg.tolerances.coherence;
    let mut tables = vec![table];
    if cfg.outputs.fock_diagonal {
        tables.push(diag);
    }
    let summary = json!({"max_abs_c_minus_s_d": worst_c, "coherence_identity_holds": ok});
    Ok(finish(cfg, started, tables, records, summary, json!({}), Some(ok)))
}

struct FieldPoint {
    n: f64,
    beta_11: f64,
    defect: f64,
    steps: usize,
}

fn field_point(cfg: &ScenarioConfig, p: u32, tau: f64) -> Result<FieldPoint, RunError> {
    let k = cfg.cutoffs.field_k_max;
    let tables = build_coupling_tables(k, cfg.l_sum_max(k))?;
    let tr = trajectory_for(cfg, p, tau)?;
    let st = integrate_modes(&tr, &tables, k, cfg.tolerances.field)?;
    let b = extract_bogoliubov(&st, &tr, &tables)?;
    Ok(FieldPoint {
        n: b.particle_number(),
        beta_11: b.beta[(0, 0)].norm(),
        defect: b.unitarity_defect_out(k).max(b.unitarity_defect_in(k)),
        steps: st.steps,
    })
}

/// Bogoliubov coefficients from the full mode-function equations.
pub fn run_field_oracle(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let cfg = bind(cfg, Pipeline::FieldOracle)?;
    let p = cfg.p_list()[0];
    let taus = cfg.snapped_taus();
    let points =
        in_pool(&cfg, || taus.par_iter().map(|&(_, t)| field_point(&cfg, p, t)).collect::<Result<Vec<_>, _>>())??;
    let mut table =
        Table::new("field", &["tau_requested", "tau", "N", "N_closed", "abs_beta_11", "unitarity_defect", "steps"]);
    let mut records = Vec::new();
    let mut worst = 0.0f64;
    for (&(req, tau), f) in taus.iter().zip(&points) {
        let nc = particle_number(p, tau);
        table.push(vec![req.into(), tau.into(), f.n.into(), nc.into(), f.beta_11.into(), f.defect.into(), f.steps.into()]);
        worst = worst.max(f.defect);
        records.push(json!({
            "pipeline": "field-oracle", "tau_requested": req, "tau": tau, "N": f.n, "N_closed": nc,
            "abs_beta_11": f.beta_11, "unitarity_defect": f.defect, "steps": f.steps,
        }));
    }
    let ok = worst <= 10.0 * cfg.tolerances.field;
    let summary = json!({"max_unitarity_defect": worst, "unitarity_within_10_tol": ok});
    Ok(finish(cfg, started, vec![table], records, summary, json!({}), Some(ok)))
}

/// Amplitude-equation runs, one per mode, on the shared sample grid.
struct ModeRuns {
    samples: Vec<f64>,
    runs: Vec<(usize, ResonanceTrajectory)>,
}

impl ModeRuns {
    fn run(&self, m: usize) -> Option<&ResonanceTrajectory> {
        self.runs.iter().find(|(x, _)| *x == m).map(|(_, r)| r)
    }

    fn index(&self, tau: f64) -> usize {
        self.samples.iter().position(|&t| t == tau).expect("sample present")
    }

    fn cov(&self, m: usize, tau: f64) -> Result<ModeCovariance, RunError> {
        let r = self.run(m).ok_or_else(|| RunError::Config(format!("mode {m} not integrated")))?;
        Ok(variances_from_bogoliubov(&r.samples[self.index(tau)], m)?)
    }
}

fn sva_config(cfg: &ScenarioConfig, k_max: usize, tol: f64, m: usize) -> SvaConfig {
    SvaConfig { k_max, tol, closure: cfg.closure.to_core(), columns: Some(vec![m]) }
}

fn integrate_modes_parallel(
    cfg: &ScenarioConfig,
    modes: &[usize],
    samples: &[f64],
    k_max: usize,
    tol: f64,
) -> Result<ModeRuns, RunError> {
    let runs = modes
        .par_iter()
        .map(|&m| integrate(&sva_config(cfg, k_max, tol, m), samples).map(|r| (m, r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModeRuns { samples: samples.to_vec(), runs })
}

fn merged_samples(grid: &[f64], extra: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = grid.iter().chain(extra).copied().filter(|t| *t >= 0.0).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

fn n_cut_rule(cfg: &ScenarioConfig) -> NCut {
    match cfg.cutoffs.n_cut {
        0 => NCut::Adaptive,
        n => NCut::Fixed(n),
    }
}

/// Per-mode statistics at one sample.
struct ModeRow {
    cov: ModeCovariance,
    s_d: f64,
    s_r2: f64,
    n_cut: usize,
    total: f64,
}

fn mode_row(cfg: &ScenarioConfig, cov: ModeCovariance) -> Result<ModeRow, RunError> {
    let pop = populations(&cov, n_cut_rule(cfg))?;
    let ent = mode_diagonal_entropy(&pop)?;
    Ok(ModeRow { cov, s_d: ent.s_d, s_r2: renyi2_entropy(&cov)?, n_cut: pop.n_cut(), total: pop.total() })
}

/// Maximum disagreement between direct summation and the rate equations.
fn variance_path_gap(runs: &ModeRuns) -> Result<f64, RunError> {
    let mut gap = 0.0f64;
    for (m, r) in &runs.runs {
        let ode = variances_by_ode(r, *m)?;
        for (s, o) in r.samples.iter().zip(&ode) {
            let d = variances_from_bogoliubov(s, *m)?;
            gap = gap.max((d.sigma_q - o.sigma_q).abs()).max((d.sigma_p - o.sigma_p).abs());
        }
    }
    Ok(gap)
}

/// Long-time residuals against the asymptotic laws at `tau_end`.
fn asymptote_residuals(runs: &ModeRuns, tau_end: f64) -> Result<BTreeMap<String, f64>, RunError> {
    let mut out = BTreeMap::new();
    let half = 0.5 * tau_end;
    let back = tau_end - 1.0;
    if let Some(r1) = runs.run(1) {
        let s = &r1.samples[runs.index(tau_end)];
        let two_pi = 2.0 / PI;
        out.insert("alpha_11_rel".into(), (s.alpha(1, 1) - two_pi) / two_pi);
        out.insert("beta_11_rel".into(), (s.beta(1, 1) + two_pi) / two_pi);
        let c = runs.cov(1, tau_end)?;
        let target = 2.0 / (PI * PI);
        out.insert("sigma_q_1_rel".into(), (c.sigma_q - target) / target);
        let slope = c.sigma_p - runs.cov(1, back)?.sigma_p;
        let target = 16.0 / (PI * PI);
        out.insert("sigma_p_1_slope_rel".into(), (slope - target) / target);
        let sr = renyi2_entropy(&c)?;
        out.insert("S_R_1_offset".into(), sr - 0.5 * (32.0 * tau_end / PI.powi(4)).ln());
        let growth = sr - renyi2_entropy(&runs.cov(1, half)?)?;
        out.insert("S_R_1_growth_rel".into(), growth / (0.5 * LN_2) - 1.0);
    }
    if runs.run(3).is_some() {
        let c = runs.cov(3, tau_end)?;
        let sr = renyi2_entropy(&c)?;
        out.insert("S_R_3_offset".into(), sr - 0.5 * (608.0 * tau_end / (27.0 * PI.powi(4))).ln());
        let growth = sr - renyi2_entropy(&runs.cov(3, half)?)?;
        out.insert("S_R_3_growth_rel".into(), growth / (0.5 * LN_2) - 1.0);
    }
    Ok(out)
}

fn resonance_common(
    cfg: &ScenarioConfig,
    with_residuals: bool,
) -> Result<(ModeRuns, Vec<Vec<ModeRow>>, Value), RunError> {
    let grid = cfg.tau_values();
    let tau_end = grid[grid.len() - 1];
    let residuals_on = with_residuals && tau_end >= 2.0;
    let extra = if residuals_on { vec![0.5 * tau_end, tau_end - 1.0] } else { Vec::new() };
    let samples = merged_samples(&grid, &extra);
    let modes = cfg.physics.modes.clone();
    let k = cfg.cutoffs.resonance_k_max;
    let tol = cfg.tolerances.resonance;

    let (runs, rows) = in_pool(cfg, || -> Result<_, RunError> {
        let runs = integrate_modes_parallel(cfg, &modes, &samples, k, tol)?;
        let rows = grid
            .par_iter()
            .map(|&t| modes.iter().map(|&m| mode_row(cfg, runs.cov(m, t)?)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok((runs, rows))
    })??;

    let gap = variance_path_gap(&runs)?;
    let mut diag = json!({
        "variance_path_gap": gap,
        "variance_paths_agree": gap <= cfg.tolerances.variance_paths,
        "accepted_steps": runs.runs.iter().map(|(_, r)| r.accepted_steps).sum::<usize>(),
        "rejected_steps": runs.runs.iter().map(|(_, r)| r.rejected_steps).sum::<usize>(),
    });
    if residuals_on {
        let base = asymptote_residuals(&runs, tau_end)?;
        diag["asymptote_residuals"] = json!(base);
        if cfg.outputs.convergence_study {
            let key_modes: Vec<usize> = modes.iter().copied().filter(|m| *m == 1 || *m == 3).collect();
            let study = in_pool(cfg, || -> Result<_, RunError> {
                let wide = integrate_modes_parallel(cfg, &key_modes, &samples, 2 * k, tol)?;
                let tight = integrate_modes_parallel(cfg, &key_modes, &samples, k, (tol / 10.0).max(1e-12))?;
                Ok((asymptote_residuals(&wide, tau_end)?, asymptote_residuals(&tight, tau_end)?))
            })??;
            let change = |other: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
                base.iter().map(|(k, v)| (k.clone(), (other[k] - v).abs())).collect()
            };
            diag["convergence"] = json!({
                "k_max": k,
                "doubled_k_max_change": change(&study.0),
                "tenfold_tol_change": change(&study.1),
            });
        }
    }
    Ok((runs, rows, diag))
}

fn checkpoint_table(cfg: &ScenarioConfig, runs: &ModeRuns) -> Table {
    let mut t = Table::new("sva_checkpoints", &["tau", "m", "k", "alpha_km", "beta_km"]);
    for &tau in &cfg.tau_values() {
        let i = runs.index(tau);
        for (m, r) in &runs.runs {
            let s = &r.samples[i];
            for k in (1..2 * s.k_max).step_by(2) {
                t.push(vec![tau.into(), (*m).into(), k.into(), s.alpha(k, *m).into(), s.beta(k, *m).into()]);
            }
        }
    }
    t
}

/// Amplitude equations plus per-mode Gaussian statistics, with residuals
/// against the long-time laws.
pub fn run_resonance_study(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let cfg = bind(cfg, Pipeline::Resonance)?;
    let (runs, rows, diag) = resonance_common(&cfg, true)?;
    let header = ["tau", "m", "alpha_1m", "beta_1m", "sigma_q", "sigma_p", "N_m", "S_d", "S_R2"];
    let mut table = Table::new("resonance", &header);
    let mut records = Vec::new();
    for (&tau, row) in cfg.tau_values().iter().zip(&rows) {
        let i = runs.index(tau);
        for (r, &m) in row.iter().zip(&cfg.physics.modes) {
            let s = &runs.run(m).expect("mode integrated").samples[i];
            let (a, b) = (s.alpha(1, m), s.beta(1, m));
            let n = r.cov.particle_number();
            table.push(vec![
                tau.into(),
                m.into(),
                a.into(),
                b.into(),
                r.cov.sigma_q.into(),
                r.cov.sigma_p.into(),
                n.into(),
                r.s_d.into(),
                r.s_r2.into(),
            ]);
            records.push(json!({
                "pipeline": "resonance", "tau": tau, "m": m, "alpha_1m": a, "beta_1m": b,
                "sigma_q": r.cov.sigma_q, "sigma_p": r.cov.sigma_p, "N_m": n, "S_d": r.s_d, "S_R2": r.s_r2,
            }));
        }
    }
    let summary = diag.get("asymptote_residuals").cloned().unwrap_or(Value::Null);
    let ok = diag["variance_paths_agree"].as_bool();
    let mut tables = vec![table];
    if cfg.outputs.sva_checkpoints {
        tables.push(checkpoint_table(&cfg, &runs));
    }
    Ok(finish(cfg, started, tables, records, summary, diag, ok))
}

/// Per-mode covariance, populations and entropies along the trajectory.
pub fn run_gaussian_study(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let cfg = bind(cfg, Pipeline::Gaussian)?;
    let (runs, rows, mut diag) = resonance_common(&cfg, false)?;
    let header = ["tau", "m", "sigma_q", "sigma_p", "N_m", "S_d", "S_R2", "n_cut"];
    let mut table = Table::new("gaussian", &header);
    let mut records = Vec::new();
    let (mut worst_norm, mut min_excess) = (0.0f64, f64::INFINITY);
    for (&tau, row) in cfg.tau_values().iter().zip(&rows) {
        for (r, &m) in row.iter().zip(&cfg.physics.modes) {
            let c = &r.cov;
            let n = c.particle_number();
            worst_norm = worst_norm.max((r.total - 1.0).abs());
            min_excess = min_excess.min(c.sigma_q * c.sigma_p - 0.25);
            table.push(vec![
                tau.into(),
                m.into(),
                c.sigma_q.into(),
                c.sigma_p.into(),
                n.into(),
                r.s_d.into(),
                r.s_r2.into(),
                r.n_cut.into(),
            ]);
            records.push(json!({
                "pipeline": "gaussian", "tau": tau, "m": m, "sigma_q": c.sigma_q, "sigma_p": c.sigma_p,
                "N_m": n, "S_d": r.s_d, "S_R2": r.s_r2, "n_cut": r.n_cut,
            }));
        }
    }
    let normalized = worst_norm <= 1e-8;
    let uncertainty = min_excess >= -dce_core::gaussian::UNCERTAINTY_SLACK;
    diag["max_normalization_error"] = json!(worst_norm);
    diag["min_uncertainty_excess"] = json!(min_excess);
    let summary = json!({"normalized": normalized, "uncertainty_holds": uncertainty});
    let ok = normalized && uncertainty && diag["variance_paths_agree"].as_bool() == Some(true);
    let mut tables = vec![table];
    if cfg.outputs.sva_checkpoints {
        tables.push(checkpoint_table(&cfg, &runs));
    }
    Ok(finish(cfg, started, tables, records, summary, diag, Some(ok)))
}

struct CrossPoint {
    closed: (f64, f64),
    fock: FockPoint,
    field: FieldPoint,
    gauss: (f64, f64),
}

fn cross_point(cfg: &ScenarioConfig, tau: f64) -> Result<CrossPoint, RunError> {
    let closed = (particle_number(2, tau), diagonal_entropy_closed_form(2, tau)?);
    let (fock, field) = rayon::join(|| fock_point(cfg, 2, tau), || field_point(cfg, 2, tau));
    let sva = integrate(&sva_config(cfg, cfg.cutoffs.resonance_k_max, cfg.tolerances.resonance, 1), &[tau])?;
    let row = mode_row(cfg, variances_from_bogoliubov(&sva.samples[0], 1)?)?;
    Ok(CrossPoint { closed, fock: fock?, field: field?, gauss: (row.cov.particle_number(), row.s_d) })
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn max_pairwise(v: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            m = m.max(rel(v[i], v[j]));
        }
    }
    m
}

/// All four backends at the same `tau`: closed form, Fock oracle, field
/// oracle and the Gaussian pipeline. `passed` is false when any pairwise
/// deviation exceeds its bound.
pub fn run_crosscheck(cfg: &ScenarioConfig) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let cfg = bind(cfg, Pipeline::Crosscheck)?;
    let taus = cfg.snapped_taus();
    let points =
        in_pool(&cfg, || taus.par_iter().map(|&(_, t)| cross_point(&cfg, t)).collect::<Result<Vec<_>, _>>())??;
    let eps = cfg.physics.epsilon;
    let tl = &cfg.tolerances;
    let mut table = Table::new("crosscheck", &["tau_requested", "tau", "backend", "N", "S_d", "C"]);
    let mut records = Vec::new();
    let mut checks = Vec::new();
    let mut all_ok = true;
    for (&(req, tau), x) in taus.iter().zip(&points) {
        let rows: [(&str, f64, Option<f64>, Option<f64>); 4] = [
            ("closed-form", x.closed.0, Some(x.closed.1), None),
            ("fock-oracle", x.fock.n, Some(x.fock.s_d), Some(x.fock.coherence)),
            ("field-oracle", x.field.n, None, None),
            ("gaussian", x.gauss.0, Some(x.gauss.1), None),
        ];
        for (name, n, s, c) in rows {
            let opt = |v: Option<f64>| v.map(Cell::Real).unwrap_or(Cell::Empty);
            table.push(vec![req.into(), tau.into(), name.into(), n.into(), opt(s), opt(c)]);
            records.push(json!({"pipeline": name, "tau_requested": req, "tau": tau, "N": n, "S_d": s, "C": c}));
        }
        let dn = max_pairwise(&[x.closed.0, x.fock.n, x.field.n, x.gauss.0]);
        let ds = max_pairwise(&[x.closed.1, x.fock.s_d, x.gauss.1]);
        let dc = (x.fock.coherence - x.fock.s_d).abs();
        let bn = tl.crosscheck_n_eps * eps + tl.crosscheck_n_tau2 * tau * tau;
        let bs = tl.crosscheck_sd_eps * eps + tl.crosscheck_sd_n * x.closed.0;
        let ok = (tau == 0.0 || (dn <= bn && ds <= bs)) && dc <= tl.coherence;
        all_ok &= ok;
        checks.push(json!({
            "tau": tau, "max_rel_dev_N": dn, "bound_N": bn, "max_rel_dev_S_d": ds, "bound_S_d": bs,
            "abs_c_minus_s_d": dc, "bound_c": tl.coherence, "passed": ok,
        }));
    }
    let summary = json!({"passed": all_ok, "checks": checks});
    Ok(finish(cfg, started, vec![table], records, summary, json!({}), Some(all_ok)))
}
