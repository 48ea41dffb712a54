//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::{LN_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use dce_core::cavity::{build_coupling_tables, fundamental_period_tau, MirrorTrajectory};
use dce_core::field::{extract_bogoliubov, integrate_modes};
use dce_core::gaussian::{renyi2_entropy, variances_by_ode, variances_from_bogoliubov};
use dce_core::perturbative::{diagonal_entropy_closed_form, particle_number, resonant_entropy_report};
use dce_core::resonance::{integrate, AsymptoticReference, SvaConfig};
use dce_runner::config::{Grid, ScenarioConfig, TauSnap};
use dce_runner::{run_entropy_sweep, run_field_oracle, run_fock_oracle, run_gaussian_study};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn column(report: &dce_runner::RunReport, table: &str, name: &str) -> Vec<f64> {
    let t = report.table(table).expect("table present");
    let c = t.column(name).expect("column present");
    t.rows.iter().map(|r| r[c].as_f64().expect("numeric cell")).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_slope(&lx, &ly)
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn base(pipeline_taus: Vec<f64>) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.physics.tau_grid = Some(Grid::List(pipeline_taus));
    cfg
}

fn coherence_identity() -> Outcome {
    let mut cfg = base(vec![0.01, 0.02, 0.05]);
    cfg.physics.tau_snap = TauSnap::None;
    let r = run_fock_oracle(&cfg).map_err(|e| e.to_string())?;
    let (c, s) = (column(&r, "fock", "C"), column(&r, "fock", "S_d"));
    let worst = c.iter().zip(&s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(worst <= 1e-8, format!("max |C - S_d| = {worst:.2e} (bound 1e-8)"))
}

fn particle_number_oracles() -> Outcome {
    let eps = 1e-3;
    let cfg = base(vec![0.01, 0.02, 0.05]);
    let fock = run_fock_oracle(&cfg).map_err(|e| e.to_string())?;
    let field = run_field_oracle(&cfg).map_err(|e| e.to_string())?;
    let taus = column(&fock, "fock", "tau");
    let rel = |n: &[f64]| {
        n.iter().zip(&taus).map(|(n, t)| ((n - particle_number(2, *t)) / particle_number(2, *t)).abs()).fold(0.0, f64::max)
    };
    let (rf, rq) = (rel(&column(&fock, "fock", "N")), rel(&column(&field, "field", "N")));
    check(
        rf <= 5.0 * eps && rq <= 5.0 * eps,
        format!("tau = {taus:.5?}: max rel N error fock {rf:.2e}, field {rq:.2e} (bound {:.1e})", 5.0 * eps),
    )
}

fn entropy_closed_form() -> Outcome {
    let grid: Vec<f64> = (1..=50).map(|i| 0.1 * i as f64 / 50.0).collect();
    let mut worst = 0.0f64;
    for p in 2..=6u32 {
        for &tau in &grid {
            let r = resonant_entropy_report(p, tau).map_err(|e| e.to_string())?;
            let c = diagonal_entropy_closed_form(p, tau).map_err(|e| e.to_string())?;
            worst = worst.max(((r.s_d - c) / c).abs() / (5.0 * r.n));
        }
    }
    let mut cfg = base(grid);
    cfg.physics.p = Some(vec![1, 2, 3, 4, 5, 6]);
    let sweep = run_entropy_sweep(&cfg).map_err(|e| e.to_string())?;
    let ordered = sweep.passed == Some(true);
    check(
        worst <= 1.0 && ordered,
        format!("max |rel diff| / (5N) = {worst:.3}; S_d increasing in p on 50-point grid: {ordered}"),
    )
}

fn short_time_laws() -> Outcome {
    let taus: Vec<f64> = (0..8).map(|i| 0.01 * 2f64.powf(0.5 * i as f64)).collect();
    let cfg = SvaConfig { k_max: 32, tol: 1e-12, columns: Some(vec![1, 3]), ..Default::default() };
    let tr = integrate(&cfg, &taus).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (mu, m) in [(0usize, 1usize), (1, 3)] {
        let r = AsymptoticReference::new(mu);
        let ode = variances_by_ode(&tr, m).map_err(|e| e.to_string())?;
        let (mut rq, mut rp) = (Vec::new(), Vec::new());
        for (c, &t) in ode.iter().zip(&taus) {
            let lead = t.powi(2 * mu as i32 + 1) * r.j * r.j;
            rq.push(c.sigma_q - (0.5 - lead * (1.0 - r.k * r.k * t)));
            rp.push(c.sigma_p - (0.5 + lead * (1.0 + r.k * r.k * t)));
        }
        let expect = (2 * mu + 3) as f64;
        let (sq, sp) = (log_slope(&taus, &rq), log_slope(&taus, &rp));
        ok &= (sq - expect).abs() <= 0.3 && (sp - expect).abs() <= 0.3;
        parts.push(format!("m={m}: residual slopes q {sq:.2}, p {sp:.2} (expect {expect})"));
    }
    check(ok, parts.join("; "))
}

fn long_time_asymptotes() -> Outcome {
    let fit: Vec<f64> = (0..=20).map(|i| 9.0 + 0.1 * i as f64).collect();
    let mut samples = vec![8.0];
    samples.extend(&fit);
    samples.push(16.0);
    let i10 = samples.iter().position(|&t| t == 10.0).expect("tau = 10 sampled");
    let mut lines = Vec::new();
    let mut values = Vec::new();
    for k in [128usize, 256] {
        let cfg = SvaConfig { k_max: k, tol: 1e-10, columns: Some(vec![1, 3]), ..Default::default() };
        let tr = integrate(&cfg, &samples).map_err(|e| e.to_string())?;
        let cov = |i: usize, m: usize| variances_from_bogoliubov(&tr.samples[i], m).map_err(|e| e.to_string());
        let a11 = tr.samples[i10].alpha(1, 1);
        let sq = cov(i10, 1)?.sigma_q;
        let sp: Vec<f64> = (1..=fit.len()).map(|i| cov(i, 1).map(|c| c.sigma_p)).collect::<Result<_, _>>()?;
        let slope = linear_slope(&fit, &sp);
        let last = samples.len() - 1;
        let growth = |m: usize| -> Result<f64, String> {
            let hi = renyi2_entropy(&cov(last, m)?).map_err(|e| e.to_string())?;
            let lo = renyi2_entropy(&cov(0, m)?).map_err(|e| e.to_string())?;
            Ok((hi - lo) / (0.5 * LN_2) - 1.0)
        };
        let v = [
            (a11 - 2.0 / PI) / (2.0 / PI),
            (sq - 2.0 / (PI * PI)) / (2.0 / (PI * PI)),
            (slope - 16.0 / (PI * PI)) / (16.0 / (PI * PI)),
            growth(1)?,
            growth(3)?,
        ];
        lines.push(format!(
            "K={k}: alpha_11 {:+.2e}, sigma_q {:+.2e}, dsigma_p/dtau {:+.2e}, S_R^1 growth {:+.2e}, S_R^3 growth {:+.2e}",
            v[0], v[1], v[2], v[3], v[4]
        ));
        values.push(v);
    }
    let fine = values[1];
    let drift = values[0].iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ok = fine.iter().all(|r| r.abs() <= 0.05);
    lines.push(format!("max change K=128 -> 256: {drift:.1e}"));
    check(ok, lines.join("; "))
}

fn normalization_uncertainty() -> Outcome {
    let mut cfg = base((0..=100).map(|i| 0.1 * i as f64).collect());
    cfg.physics.modes = vec![1, 3, 5];
    let r = run_gaussian_study(&cfg).map_err(|e| e.to_string())?;
    let norm = r.diagnostics["max_normalization_error"].as_f64().unwrap_or(f64::NAN);
    let excess = r.diagnostics["min_uncertainty_excess"].as_f64().unwrap_or(f64::NAN);
    check(
        norm <= 1e-8 && excess >= -1e-12,
        format!("max |sum rho - 1| = {norm:.2e}; min (sigma_q sigma_p - 1/4) = {excess:.2e}"),
    )
}

fn oracle_consensus() -> Outcome {
    let dir = std::env::temp_dir().join(format!("dce-acceptance-crosscheck-{}", std::process::id()));
    let out = Command::new(env!("CARGO_BIN_EXE_dce"))
        .args(["crosscheck", "--out"])
        .arg(&dir)
        .env("DCE_PHYSICS__EPSILON", "1e-3")
        .env("DCE_PHYSICS__TAU_GRID", "[0.02]")
        .output()
        .map_err(|e| e.to_string())?;
    let code = out.status.code().unwrap_or(-1);
    let report = std::fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&report).map_err(|e| e.to_string())?;
    let c = &v["summary"]["checks"][0];
    let _ = std::fs::remove_dir_all(&dir);
    check(
        code == 0,
        format!(
            "exit {code}; N dev {:.2e} (bound {:.2e}), S_d dev {:.2e} (bound {:.2e}), |C - S_d| {:.1e}",
            c["max_rel_dev_N"].as_f64().unwrap_or(f64::NAN),
            c["bound_N"].as_f64().unwrap_or(f64::NAN),
            c["max_rel_dev_S_d"].as_f64().unwrap_or(f64::NAN),
            c["bound_S_d"].as_f64().unwrap_or(f64::NAN),
            c["abs_c_minus_s_d"].as_f64().unwrap_or(f64::NAN),
        ),
    )
}

fn structural_invariants() -> Outcome {
    let tables = build_coupling_tables(64, 640).map_err(|e| e.to_string())?;
    let g = tables.g_matrix();
    let antisym = (0..64).all(|i| (0..64).all(|j| g[(i, j)] == -g[(j, i)]));

    let sva = integrate(&SvaConfig { k_max: 32, columns: Some(vec![1, 3]), ..Default::default() }, &[0.5, 3.0])
        .map_err(|e| e.to_string())?;
    let even_zero = sva.samples.iter().all(|s| {
        (1..=64).all(|k| (1..=4).all(|j| (k % 2 == 1 && j % 2 == 1) || (s.alpha(k, j) == 0.0 && s.beta(k, j) == 0.0)))
    });

    let tol = 1e-10;
    let (_, tau) = fundamental_period_tau(1e-3, 0.02);
    let tr = MirrorTrajectory::from_tau(1e-3, 2, tau).map_err(|e| e.to_string())?;
    let ft = build_coupling_tables(16, 160).map_err(|e| e.to_string())?;
    let st = integrate_modes(&tr, &ft, 16, tol).map_err(|e| e.to_string())?;
    let b = extract_bogoliubov(&st, &tr, &ft).map_err(|e| e.to_string())?;
    let defect = b.unitarity_defect_out(16).max(b.unitarity_defect_in(16));

    let dir = std::env::temp_dir().join(format!("dce-acceptance-determinism-{}", std::process::id()));
    let run = |threads: &str, sub: &str| -> Result<Vec<u8>, String> {
        let d = dir.join(format!("{sub}-{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_dce"))
            .args([sub, "--threads", threads, "--out"])
            .arg(&d)
            .env("DCE_OUTPUTS__CONVERGENCE_STUDY", "false")
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("{sub} failed"));
        }
        let name = if sub == "sweep-entropy" { "sweep" } else { sub };
        std::fs::read(d.join(format!("{name}.csv"))).map_err(|e| e.to_string())
    };
    let mut identical = true;
    for sub in ["sweep-entropy", "gaussian", "resonance"] {
        let a = run("1", sub)?;
        identical &= a == run("1", sub)? && a == run("4", sub)?;
    }
    let _ = std::fs::remove_dir_all(&dir);
    check(
        antisym && even_zero && defect <= 10.0 * tol && identical,
        format!(
            "g antisymmetric {antisym}; even-index SVA entries zero {even_zero}; \
             field unitarity defect {defect:.1e} (bound {:.0e}); bit-identical CSV reruns {identical}",
            10.0 * tol
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 coherence identity", coherence_identity, Duration::from_secs(10)),
        ("2 particle number", particle_number_oracles, Duration::from_secs(60)),
        ("3 entropy closed form", entropy_closed_form, Duration::from_secs(5)),
        ("4 short-time mode laws", short_time_laws, Duration::from_secs(30)),
        ("5 long-time asymptotes", long_time_asymptotes, Duration::from_secs(300)),
        ("6 normalization and uncertainty", normalization_uncertainty, Duration::from_secs(60)),
        ("7 oracle consensus", oracle_consensus, Duration::from_secs(120)),
        ("8 structural invariants", structural_invariants, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, f, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (tag, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over time budget")),
            Err(d) => ("FAIL", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} criterion {name}: {detail} [{:.2} s / {} s]", elapsed.as_secs_f64(), budget.as_secs());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
