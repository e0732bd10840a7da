//! Pipeline orchestration for scenario runs: synthesis, verification,
//! thresholds and on-disk artifacts.
//!
//! A solution directory contains `scenario.toml`, `solution.json` (the full
//! [`SolutionGrid`]), `summary.json` and the requested CSV exports.

use crate::error::{Error, Result};
use crate::flow::{FlowDiagnostics, PhaseGrid};
use crate::operator::Lambda;
use crate::poly::Poly;
use crate::scenario::{OutputKind, Scenario};
use crate::stackel::StackelSystem;
use crate::synth::{closed_form_kb, synthesize, SolutionGrid, Synthesis};
use crate::verify::{
    conservation_report, residual_base, residual_bkm_finite, residual_bkm_infinite, residual_solitonic,
    separation_oracle, ResidualReport,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SOLUTION_FILE: &str = "solution.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const CSV_FILE: &str = "solution.csv";
pub const FRAMES_DIR: &str = "frames";

/// One threshold comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, value: f64, threshold: f64) -> Self {
        CheckOutcome {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

/// Integration statistics copied from the phase grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub steps: usize,
    pub rejected: usize,
    pub max_cond: f64,
    pub warnings: Vec<String>,
}

impl From<&FlowDiagnostics<f64>> for FlowSummary {
    fn from(d: &FlowDiagnostics<f64>) -> Self {
        FlowSummary {
            steps: d.steps,
            rejected: d.rejected,
            max_cond: d.max_cond,
            warnings: d.warnings.clone(),
        }
    }
}

/// Machine-readable result of `run` or `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    pub reports: Vec<ResidualReport>,
    /// Reports that could not be computed, with the reason.
    #[serde(default)]
    pub skipped: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_new: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSummary>,
}

impl Summary {
    fn new(scenario: &str) -> Self {
        Summary {
            scenario: scenario.into(),
            passed: true,
            checks: Vec::new(),
            reports: Vec::new(),
            skipped: Vec::new(),
            c_new: None,
            flow: None,
        }
    }

    fn check(&mut self, name: &str, value: f64, threshold: Option<f64>) {
        if let Some(th) = threshold {
            let c = CheckOutcome::new(name, value, th);
            self.passed &= c.passed;
            self.checks.push(c);
        }
    }

    /// Adds a report; a threshold also registers a check on its max residual.
    fn report(&mut self, rep: Result<ResidualReport>, threshold: Option<f64>) -> Result<()> {
        match rep {
            Ok(r) => {
                if let Some(th) = threshold {
                    let mut c = CheckOutcome::new(&r.name, r.max_abs, th);
                    c.passed &= !r.inconclusive;
                    self.passed &= c.passed;
                    self.checks.push(c);
                }
                self.reports.push(r);
                Ok(())
            }
            Err(Error::GridTooCoarse(msg)) => {
                self.skipped.push(msg);
                self.passed &= threshold.is_none();
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

/// Everything produced by a run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub synthesis: Synthesis<f64>,
    pub summary: Summary,
}

/// Merges per-sample reports into one (max of max, pooled rms).
pub fn merge_reports(name: &str, reps: &[ResidualReport]) -> ResidualReport {
    let samples: usize = reps.iter().map(|r| r.samples).sum();
    let sq: f64 = reps.iter().map(|r| r.rms * r.rms * r.samples as f64).sum();
    ResidualReport {
        name: name.into(),
        max_abs: reps.iter().fold(0.0, |m, r| m.max(r.max_abs)),
        rms: if samples == 0 { 0.0 } else { (sq / samples as f64).sqrt() },
        dt: reps.first().map_or(0.0, |r| r.dt),
        dx: reps.first().map_or(0.0, |r| r.dx),
        convergence_order: None,
        samples,
        skipped: reps.iter().map(|r| r.skipped).sum(),
        inconclusive: reps.is_empty() || reps.iter().any(|r| r.inconclusive),
    }
}

/// Max |u − u_closed-form| over the grid.
pub fn closed_form_kb_error(sol: &SolutionGrid<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (ti, &t) in sol.t_nodes.iter().enumerate() {
        for (xi, &x) in sol.x_nodes.iter().enumerate() {
            let (_, _, u1, u2) = closed_form_kb(t, x);
            let u = sol.u_at(ti, xi);
            worst = worst.max((u[0] - u1).abs()).max((u[1] - u2).abs());
        }
    }
    worst
}

/// max over t nodes and both x ends of |u(t, x_end) − u(t₀, x_max)|, with
/// t₀ the node closest to zero.
pub fn asymptotic_deviation(sol: &SolutionGrid<f64>) -> f64 {
    let nx = sol.nx();
    let t0 = (0..sol.nt())
        .min_by(|&a, &b| sol.t_nodes[a].abs().total_cmp(&sol.t_nodes[b].abs()))
        .unwrap_or(0);
    let reference = sol.u_at(t0, nx - 1);
    let mut worst = 0.0f64;
    for ti in 0..sol.nt() {
        for xi in [0, nx - 1] {
            for (a, b) in sol.u_at(ti, xi).iter().zip(&reference) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Residuals that only need the solution grid (shared by `run` and `verify`).
fn solution_checks(sc: &Scenario, sol: &SolutionGrid<f64>, summary: &mut Summary) -> Result<()> {
    let bkm = match sol.meta.spec.lambda {
        Lambda::Infinity => residual_bkm_infinite(sol),
        Lambda::Finite(_) => residual_bkm_finite(sol),
    };
    match bkm {
        Ok(r) => {
            summary.report(Ok(r.evolution), sc.checks.bkm_residual)?;
            summary.report(Ok(r.constraint), sc.checks.bkm_residual)?;
        }
        Err(e) => summary.report(Err(e), sc.checks.bkm_residual)?,
    }
    if let Some(tol) = sc.checks.closed_form_kb {
        summary.check("closed-form-kb", closed_form_kb_error(sol), Some(tol));
    }
    if let Some(tol) = sc.checks.asymptotic {
        summary.check("asymptotic", asymptotic_deviation(sol), Some(tol));
    }
    Ok(())
}

fn phase_checks(
    sc: &Scenario,
    grid: &PhaseGrid<f64>,
    c_new: &Poly<f64>,
    m: &Poly<f64>,
    summary: &mut Summary,
) -> Result<()> {
    let ch = &sc.checks;
    let cons = conservation_report(grid, c_new, m)?;
    summary.check("drift", cons.max_abs, Some(ch.max_drift));
    summary.report(Ok(cons), None)?;
    summary.report(residual_base(grid, &ch.mu_samples, c_new, m), ch.base_residual)?;

    let mut solitonic = Vec::new();
    for &mu in &ch.mu_samples {
        match residual_solitonic(grid, mu, grid.lambda) {
            Ok(r) => solitonic.push(r),
            Err(Error::MuEqualsLambda) => {}
            Err(e) => {
                summary.report(Err(e), ch.solitonic_residual)?;
                solitonic.clear();
                break;
            }
        }
    }
    if !solitonic.is_empty() {
        summary.report(Ok(merge_reports("solitonic", &solitonic)), ch.solitonic_residual)?;
    }
    summary.report(separation_oracle(grid, c_new, m), ch.separation_residual)?;
    Ok(())
}

/// Runs repair → grid → synthesis → verification for a validated scenario.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput> {
    sc.validate()?;
    let spec = sc.bkm_spec()?;
    let c = sc.c_poly()?;
    let start = sc.start_point()?;
    let synthesis = synthesize(
        &spec,
        &c,
        &start,
        &sc.grid.t.nodes(),
        &sc.grid.x.nodes(),
        &sc.flow,
        sc.grid.order,
    )?;
    let mut summary = Summary::new(&sc.name);
    summary.c_new = Some(synthesis.c_new.coeffs().to_vec());
    summary.flow = Some((&synthesis.grid.diagnostics).into());

    let sys = StackelSystem::new(synthesis.c_new.clone(), spec.m.clone());
    let level = sys.integral_coefficients(&start)?.max_abs();
    summary.check("level-set", level, Some(sc.checks.max_level_set));
    phase_checks(sc, &synthesis.grid, &synthesis.c_new, &spec.m, &mut summary)?;
    solution_checks(sc, &synthesis.solution, &mut summary)?;
    Ok(RunOutput { synthesis, summary })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "x".to_string()];
    h.extend((1..=n).map(|i| format!("u_{i}")));
    h.push("q".into());
    h
}

/// Writes rows for the given t indices; `Display` for f64 is the shortest
/// representation that round-trips.
fn write_csv(path: &Path, sol: &SolutionGrid<f64>, rows: impl Iterator<Item = usize>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(csv_header(sol.n())).map_err(|e| io_err(path, e))?;
    for ti in rows {
        for xi in 0..sol.nx() {
            let mut rec = vec![sol.t_nodes[ti].to_string(), sol.x_nodes[xi].to_string()];
            rec.extend(sol.u_at(ti, xi).iter().map(|v| v.to_string()));
            rec.push(sol.q_at(ti, xi).to_string());
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Export formats of a stored solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Frames,
}

impl From<OutputKind> for ExportFormat {
    fn from(k: OutputKind) -> Self {
        match k {
            OutputKind::Csv => ExportFormat::Csv,
            OutputKind::Frames => ExportFormat::Frames,
        }
    }
}

/// Writes `sol` in the given format into `dir`; returns the written paths.
pub fn export(sol: &SolutionGrid<f64>, format: ExportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    match format {
        ExportFormat::Csv => {
            let path = dir.join(CSV_FILE);
            write_csv(&path, sol, 0..sol.nt())?;
            Ok(vec![path])
        }
        ExportFormat::Frames => {
            let fdir = dir.join(FRAMES_DIR);
            std::fs::create_dir_all(&fdir).map_err(|e| io_err(&fdir, e))?;
            (0..sol.nt())
                .map(|ti| {
                    let path = fdir.join(format!("frame_{ti:04}.csv"));
                    write_csv(&path, sol, std::iter::once(ti)).map(|_| path)
                })
                .collect()
        }
    }
}

/// Writes all artifacts of a run into `dir`.
pub fn write_run(dir: &Path, sc: &Scenario, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let sc_path = dir.join(SCENARIO_FILE);
    std::fs::write(&sc_path, sc.to_toml_string()).map_err(|e| io_err(&sc_path, e))?;
    write_json(&dir.join(SOLUTION_FILE), &out.synthesis.solution)?;
    write_json(&dir.join(SUMMARY_FILE), &out.summary)?;
    for &kind in &sc.outputs {
        export(&out.synthesis.solution, kind.into(), dir)?;
    }
    Ok(())
}

pub fn load_solution(dir: &Path) -> Result<SolutionGrid<f64>> {
    read_json(&dir.join(SOLUTION_FILE))
}

/// Re-checks a stored solution against its scenario's thresholds and writes
/// `verify.json`.
pub fn verify_dir(dir: &Path) -> Result<Summary> {
    let sc = Scenario::from_file(&dir.join(SCENARIO_FILE))?;
    let sol = load_solution(dir)?;
    if sol.n() != sc.bkm.n || sol.q.len() != sol.nt() * sol.nx() {
        return Err(Error::InvalidInput("stored solution does not match its scenario".into()));
    }
    let mut summary = Summary::new(&sc.name);
    solution_checks(&sc, &sol, &mut summary)?;
    write_json(&dir.join(VERIFY_FILE), &summary)?;
    Ok(summary)
}
