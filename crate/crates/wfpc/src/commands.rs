//! Subcommand pipelines. Each writes its artifacts into the output directory
//! and returns a one-paragraph summary for the terminal.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use wfpc_core::dynamics::{synthesize, ExactOptions, FreeEvolution, Method, TimeGrid, Trajectory};
use wfpc_core::exec::Executor;
use wfpc_core::models::{block_report, CorrelatedState, SystemModel};
use wfpc_core::pulses::{SpectralPulse, TimeField};
use wfpc_core::qrf::{intermediate_wfpc_witness, qrf_scan, QrfReport};
use wfpc_core::tensor::ComplexMatrix;
use wfpc_core::witness::{
    check_nogo_conditions, run_witness_protocol_with, PhaseControlReport, ProtocolOptions, WitnessVerdict,
};

use crate::config::{Format, MethodName, OperatorName, ProtocolKind, Scenario};
use crate::io::{self, Provenance, TrajectoryRow};
use crate::{Error, Result};

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub method: Option<MethodName>,
    pub verify_grid: bool,
}

/// A scenario with every model object built.
pub struct Prepared {
    pub scenario: Scenario,
    pub model: SystemModel,
    pub state: CorrelatedState,
    pub base: Option<SpectralPulse>,
    pub family: Vec<SpectralPulse>,
    pub grid: TimeGrid,
    pub method: Method,
    pub out_dir: PathBuf,
    pub provenance: Provenance,
}

impl Prepared {
    /// `base_dir` resolves relative paths inside the scenario.
    pub fn new(mut scenario: Scenario, overrides: &Overrides, base_dir: &Path) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            scenario.seed = Some(seed);
        }
        if let Some(method) = overrides.method {
            scenario.protocol.method = method;
        }
        if overrides.verify_grid {
            scenario.protocol.verify_grid = true;
        }
        scenario.validate()?;
        let model = scenario.build_model()?;
        let state = scenario.build_state(&model, base_dir)?;
        let base = scenario.base_pulse()?;
        let family = match &base {
            Some(p) => scenario.family(p)?,
            None => Vec::new(),
        };
        let grid = scenario.time_grid(base.as_ref())?;
        let out_dir = overrides
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&scenario.output.dir));
        let provenance = Provenance {
            config_hash: scenario.config_hash(),
            seed: scenario.seed_or_default(),
        };
        Ok(Self {
            method: scenario.protocol.method.into(),
            scenario,
            model,
            state,
            base,
            family,
            grid,
            out_dir,
            provenance,
        })
    }

    fn expect_protocol(&self, kind: ProtocolKind) -> Result<()> {
        let found = self.scenario.protocol.kind;
        if found != kind {
            return Err(Error::Usage(format!(
                "scenario declares protocol `{}`, not `{}`",
                found.name(),
                kind.name()
            )));
        }
        Ok(())
    }

    fn exact_options(&self) -> ExactOptions {
        self.scenario.exact_options()
    }

    fn protocol_options(&self) -> ProtocolOptions {
        ProtocolOptions {
            thresholds: self.scenario.thresholds(),
            method: self.method,
            exact: self.exact_options(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_common(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        if self.scenario.wants(Format::Matrix) {
            io::write_matrix(
                &self.path("initial_state.mat"),
                self.state.matrix(),
                self.model.layout(),
            )?;
        }
        if let (Some(base), true) = (&self.base, self.scenario.wants(Format::Csv)) {
            io::write_field(
                &self.path("field.csv"),
                &self.provenance,
                &synthesize(base, &self.grid)?,
            )?;
        }
        Ok(())
    }

    /// Final yields of every mask on `grid`.
    fn final_yields(&self, free: &FreeEvolution, grid: &TimeGrid, exec: &impl Executor) -> Result<Vec<f64>> {
        let opts = ExactOptions {
            keep_final_state: false,
            ..self.exact_options()
        };
        let runs = run_masks(free, &self.state, &self.family, grid, self.method, &opts, exec);
        Ok(runs
            .into_iter()
            .map(|r| r.map(|t| t.final_population()))
            .collect::<wfpc_core::Result<_>>()?)
    }

    /// Largest change of any final yield when the step is halved.
    fn grid_check(&self, free: &FreeEvolution, coarse: &[f64], exec: &impl Executor) -> Result<Option<GridCheck>> {
        if !self.scenario.protocol.verify_grid {
            return Ok(None);
        }
        let fine = self.final_yields(free, &self.grid.refined(), exec)?;
        let max_change = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let tolerance = self.scenario.protocol.grid_tolerance;
        Ok(Some(GridCheck {
            steps: self.grid.steps,
            refined_steps: self.grid.refined().steps,
            max_change,
            tolerance,
            passed: max_change <= tolerance,
        }))
    }

    fn manifest(&self, command: &str, started: Instant, grid_check: Option<&GridCheck>) -> Value {
        json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.provenance.config_hash,
            "seed": self.provenance.seed,
            "config": self.scenario.to_toml(),
            "method": self.method.name(),
            "grid": { "t0": self.grid.t0, "t1": self.grid.t1, "steps": self.grid.steps },
            "grid_check": grid_check,
            "wall_time_s": started.elapsed().as_secs_f64(),
        })
    }

    fn finish(
        &self,
        command: &str,
        started: Instant,
        grid_check: Option<GridCheck>,
        summary: String,
    ) -> Result<String> {
        io::write_json(
            &self.path("manifest.json"),
            &self.manifest(command, started, grid_check.as_ref()),
        )?;
        if let Some(check) = grid_check.filter(|c| !c.passed) {
            return Err(Error::GridCheck {
                change: check.max_change,
                tolerance: check.tolerance,
            });
        }
        Ok(summary)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridCheck {
    pub steps: usize,
    pub refined_steps: usize,
    pub max_change: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn run_masks(
    free: &FreeEvolution,
    state: &CorrelatedState,
    family: &[SpectralPulse],
    grid: &TimeGrid,
    method: Method,
    opts: &ExactOptions,
    exec: &impl Executor,
) -> Vec<wfpc_core::Result<Trajectory>> {
    exec.map(family.len(), |i| free.run(state, &family[i], grid, method, opts))
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

pub fn cmd_simulate(prep: &Prepared, exec: &impl Executor) -> Result<String> {
    let started = Instant::now();
    prep.expect_protocol(ProtocolKind::Simulate)?;
    prep.write_common()?;
    let free = FreeEvolution::new(&prep.model)?;
    let opts = prep.exact_options();
    let trajectories: Vec<Trajectory> = if prep.family.is_empty() {
        let zero = TimeField::zeros(prep.grid.field_samples())?;
        vec![free.run_field(&prep.state, &zero, &prep.grid, prep.method, &opts)?]
    } else {
        run_masks(&free, &prep.state, &prep.family, &prep.grid, prep.method, &opts, exec)
            .into_iter()
            .collect::<wfpc_core::Result<_>>()?
    };
    let finals: Vec<f64> = trajectories.iter().map(Trajectory::final_population).collect();
    if prep.scenario.wants(Format::Csv) {
        let rows: Vec<TrajectoryRow> = trajectories
            .iter()
            .enumerate()
            .map(|(mask_id, trajectory)| TrajectoryRow {
                experiment: "",
                mask_id,
                trajectory,
            })
            .collect();
        io::write_trajectories(&prep.path("trajectories.csv"), &prep.provenance, &rows)?;
    }
    let contrast = spread(&finals);
    let max_trace_drift = trajectories.iter().map(|t| t.trace_drift).fold(0.0, f64::max);
    let min_eigenvalue = trajectories.iter().filter_map(|t| t.min_eigenvalue).reduce(f64::min);
    if prep.scenario.wants(Format::Json) {
        io::write_json(
            &prep.path("summary.json"),
            &json!({
                "config_hash": prep.provenance.config_hash,
                "seed": prep.provenance.seed,
                "method": prep.method.name(),
                "p0": trajectories[0].p0,
                "final_yields": finals,
                "contrast": contrast,
                "max_trace_drift": max_trace_drift,
                "min_eigenvalue": min_eigenvalue,
            }),
        )?;
    }
    let check = if prep.family.is_empty() {
        None
    } else {
        prep.grid_check(&free, &finals, exec)?
    };
    let summary = format!(
        "simulated {} trajectories ({}), contrast {:.3e}",
        trajectories.len(),
        prep.method.name(),
        contrast
    );
    prep.finish("simulate", started, check, summary)
}

fn report_json(r: &PhaseControlReport) -> Value {
    json!({
        "contrast": r.contrast,
        "threshold": r.threshold,
        "detected": r.detected,
        "scaling_ok": r.scaling_ok,
        "scaling_ratio": r.scaling_ratio,
        "yields": r.yields.iter().map(|y| y.1).collect::<Vec<_>>(),
        "profile": r.profile,
        "max_trace_drift": r.max_trace_drift,
        "min_eigenvalue": r.min_eigenvalue,
    })
}

pub fn verdict_json(v: &WitnessVerdict) -> Value {
    json!({
        "quadrant": v.quadrant.name(),
        "outcome": v.quadrant.outcome(),
        "correlations_witnessed": v.quadrant.correlations_witnessed(),
        "statement": v.statement(),
        "profile_distance": v.profile_distance,
        "condition2": { "norm": v.conditions.condition2.norm, "passed": v.conditions.condition2.passed },
        "condition3": { "norm": v.conditions.condition3.norm, "passed": v.conditions.condition3.passed },
        "condition2_caveat": v.condition2_caveat,
        "before": report_json(&v.report_before),
        "after": report_json(&v.report_after),
    })
}

pub fn cmd_witness(prep: &Prepared, exec: &impl Executor) -> Result<String> {
    let started = Instant::now();
    prep.expect_protocol(ProtocolKind::Witness)?;
    prep.write_common()?;
    let free = FreeEvolution::new(&prep.model)?;
    let verdict = run_witness_protocol_with(
        &free,
        &prep.model,
        &prep.state,
        &prep.family,
        &prep.grid,
        &prep.protocol_options(),
        exec,
    )?;
    if prep.scenario.wants(Format::Json) {
        let mut body = verdict_json(&verdict);
        body["config_hash"] = json!(prep.provenance.config_hash);
        body["seed"] = json!(prep.provenance.seed);
        io::write_json(&prep.path("verdict.json"), &body)?;
    }
    if prep.scenario.wants(Format::Csv) {
        let mut rows = Vec::new();
        for (experiment, report) in [("before", &verdict.report_before), ("after", &verdict.report_after)] {
            rows.extend(
                report
                    .trajectories
                    .iter()
                    .enumerate()
                    .map(|(mask_id, trajectory)| TrajectoryRow {
                        experiment,
                        mask_id,
                        trajectory,
                    }),
            );
        }
        io::write_trajectories(&prep.path("trajectories.csv"), &prep.provenance, &rows)?;
    }
    let finals: Vec<f64> = verdict.report_before.yields.iter().map(|y| y.1).collect();
    let check = prep.grid_check(&free, &finals, exec)?;
    let summary = format!(
        "{}: {} (contrast {:.3e} -> {:.3e}, profile distance {:.3e})",
        verdict.quadrant.name(),
        verdict.statement(),
        verdict.report_before.contrast,
        verdict.report_after.contrast,
        verdict.profile_distance
    );
    prep.finish("witness", started, check, summary)
}

fn operator(model: &SystemModel, name: OperatorName) -> ComplexMatrix {
    match name {
        OperatorName::Dipole => model.dipole().clone(),
        OperatorName::Projector => model.proj_excited().clone(),
        OperatorName::Identity => ComplexMatrix::identity(model.layout().system_dim()),
    }
}

pub fn cmd_qrf(prep: &Prepared, exec: &impl Executor) -> Result<String> {
    let started = Instant::now();
    prep.expect_protocol(ProtocolKind::Qrf)?;
    let q = prep
        .scenario
        .protocol
        .qrf
        .as_ref()
        .ok_or_else(|| Error::Usage("protocol.qrf section missing".into()))?;
    prep.write_common()?;
    let (a, b) = (operator(&prep.model, q.a), operator(&prep.model, q.b));
    let reports = qrf_scan(
        &prep.model,
        &prep.state,
        &a,
        &b,
        &q.t1_grid,
        &q.dt_grid,
        q.threshold,
        exec,
    )?;
    if prep.scenario.wants(Format::Csv) {
        io::write_qrf_scan(&prep.path("qrf_scan.csv"), &prep.provenance, &reports)?;
    }
    let max_deviation = reports.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let first_violated = reports.iter().find(|r| r.violated);
    let violated = reports.iter().filter(|r| r.violated).count();

    let mut intermediate = Vec::new();
    for &t1 in &q.intermediate_t1 {
        let rt1 = FreeEvolution::new(&prep.model)?.evolve(prep.state.matrix(), t1);
        let rt1 = CorrelatedState::from_matrix(&(&rt1 + &rt1.adjoint()).scale_real(0.5), prep.model.layout())?;
        let chi_ge_norm = block_report(&rt1).norm_ge_chi;
        let verdict = intermediate_wfpc_witness(
            &prep.model,
            &prep.state,
            t1,
            &prep.family,
            &prep.grid,
            &prep.protocol_options(),
            exec,
        )?;
        let mut entry = verdict_json(&verdict);
        entry["t1"] = json!(t1);
        entry["chi_ge_norm"] = json!(chi_ge_norm);
        intermediate.push(entry);
    }

    if prep.scenario.wants(Format::Json) {
        io::write_json(
            &prep.path("summary.json"),
            &json!({
                "config_hash": prep.provenance.config_hash,
                "seed": prep.provenance.seed,
                "cells": reports.len(),
                "violated_cells": violated,
                "max_deviation": max_deviation,
                "first_violated": first_violated.map(|r: &QrfReport| json!({ "t1": r.t1, "t2": r.t2, "deviation": r.deviation, "chi_norm": r.chi_norm })),
                "intermediate_witness": intermediate,
            }),
        )?;
    }
    let mut summary = format!(
        "qrf scan: {} cells, {} violated, max deviation {:.3e}",
        reports.len(),
        violated,
        max_deviation
    );
    for entry in &intermediate {
        summary.push_str(&format!(
            "\nintermediate witness at t1={}: {}",
            entry["t1"], entry["quadrant"]
        ));
    }
    prep.finish("qrf", started, None, summary)
}

pub fn cmd_nogo(prep: &Prepared) -> Result<String> {
    let started = Instant::now();
    prep.expect_protocol(ProtocolKind::Nogo)?;
    let base = prep
        .base
        .as_ref()
        .ok_or_else(|| Error::Usage("the nogo protocol needs a pulse".into()))?;
    prep.write_common()?;
    let report = check_nogo_conditions(&prep.model, &prep.state, base, &prep.grid)?;
    let verdict = |p: bool| if p { "pass" } else { "fail" };
    let body = json!({
        "config_hash": prep.provenance.config_hash,
        "seed": prep.provenance.seed,
        "condition1": { "scaling_ratio": report.condition1.ratio, "passed": report.condition1.passed },
        "condition2": { "norm": report.condition2.norm, "passed": report.condition2.passed },
        "condition3": { "norm": report.condition3.norm, "passed": report.condition3.passed },
        "all_passed": report.condition1.passed && report.condition2.passed && report.condition3.passed,
    });
    if prep.scenario.wants(Format::Json) {
        io::write_json(&prep.path("conditions.json"), &body)?;
    }
    let ratio = report.condition1.ratio.map_or("n/a".to_string(), |r| format!("{r:.4}"));
    let summary = format!(
        "condition 1 (weak field, ratio {ratio}): {}\ncondition 2 (|[P,H0]| = {:.3e}): {}\ncondition 3 (|[H0,R]| = {:.3e}): {}",
        verdict(report.condition1.passed),
        report.condition2.norm,
        verdict(report.condition2.passed),
        report.condition3.norm,
        verdict(report.condition3.passed)
    );
    prep.finish("nogo", started, None, summary)
}

/// Text summary of the artifacts found in `dir`.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let read = |name: &str| -> Result<Option<Value>> {
        let path = dir.join(name);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    };
    let manifest =
        read("manifest.json")?.ok_or_else(|| Error::Usage(format!("{}: no manifest.json", dir.display())))?;
    let mut out = format!(
        "command {} (config {}, seed {}, method {})",
        manifest["command"].as_str().unwrap_or("?"),
        manifest["config_hash"].as_str().unwrap_or("?"),
        manifest["seed"],
        manifest["method"].as_str().unwrap_or("?"),
    );
    if let Some(check) = manifest.get("grid_check").filter(|c| !c.is_null()) {
        out.push_str(&format!(
            "\ngrid check: max change {} (tolerance {}), passed {}",
            check["max_change"], check["tolerance"], check["passed"]
        ));
    }
    if let Some(s) = read("summary.json")? {
        if let Some(c) = s.get("contrast") {
            out.push_str(&format!("\ncontrast {c}, final yields {}", s["final_yields"]));
        }
        if let Some(c) = s.get("cells") {
            out.push_str(&format!(
                "\nqrf cells {c}, violated {}, max deviation {}",
                s["violated_cells"], s["max_deviation"]
            ));
            for w in s["intermediate_witness"].as_array().into_iter().flatten() {
                out.push_str(&format!("\nintermediate witness at t1={}: {}", w["t1"], w["quadrant"]));
            }
        }
    }
    if let Some(v) = read("verdict.json")? {
        out.push_str(&format!(
            "\nverdict {}: {}\ncontrast before {} after {}, profile distance {}",
            v["quadrant"], v["statement"], v["before"]["contrast"], v["after"]["contrast"], v["profile_distance"]
        ));
    }
    if let Some(c) = read("conditions.json")? {
        for key in ["condition1", "condition2", "condition3"] {
            out.push_str(&format!("\n{key}: passed {}", c[key]["passed"]));
        }
    }
    Ok(out)
}
