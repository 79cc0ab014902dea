//! Command bodies behind the `kbe` verbs.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use kbe_core::kgrid::KGrid;
use kbe_core::model::Model;
use kbe_core::propagator::{Propagation, StepReport};
use kbe_core::state::Observables;
use serde::Serialize;

use crate::bench::{run_bench, run_scaling, run_sweep, write_csv, BenchSpec, ScalingMode};
use crate::config::{Limit, OnOff, Quadrature, RunConfig};
use crate::error::{CliError, CliResult};
use crate::trajectory::{read_header, write_trajectory, FLAG_HF, FLAG_LANGRETH, FLAG_SIMPSON};

/// One row of the observables table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableRow {
    pub t: f64,
    pub mean_n_v: f64,
    pub mean_n_c: f64,
    pub density: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl ObservableRow {
    fn new(o: &Observables, residual: f64, iterations: usize) -> Self {
        ObservableRow {
            t: o.t,
            mean_n_v: o.mean_n_v(),
            mean_n_c: o.mean_n_c(),
            density: o.density,
            residual,
            iterations,
        }
    }
}

/// One row of the step-report log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub step: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub drift: f64,
    pub density: f64,
    pub polarization_s: f64,
    pub sigma_first_s: f64,
    pub sigma_second_s: f64,
    pub collision_s: f64,
    pub propagate_s: f64,
    pub gather_s: f64,
    pub wall_s: f64,
}

impl From<&StepReport> for ReportRow {
    fn from(r: &StepReport) -> Self {
        ReportRow {
            step: r.step,
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
            drift: r.drift,
            density: r.density,
            polarization_s: r.timings.polarization,
            sigma_first_s: r.timings.sigma_first,
            sigma_second_s: r.timings.sigma_second,
            collision_s: r.timings.collision,
            propagate_s: r.timings.propagate,
            gather_s: r.timings.gather,
            wall_s: r.wall_s,
        }
    }
}

pub fn trajectory_flags(cfg: &RunConfig) -> u32 {
    let mut f = 0;
    if cfg.limit_mode == Limit::Langreth {
        f |= FLAG_LANGRETH;
    }
    if cfg.quadrature == Quadrature::Simpson {
        f |= FLAG_SIMPSON;
    }
    if cfg.hf_mode == OnOff::On {
        f |= FLAG_HF;
    }
    f
}

#[derive(Debug)]
pub struct RunOutcome {
    pub observables: Vec<ObservableRow>,
    pub reports: Vec<StepReport>,
    pub propagation: Propagation,
}

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Propagates a validated configuration without writing anything.
pub fn propagate(cfg: &RunConfig) -> (CliResult<()>, Option<RunOutcome>) {
    let setup = || -> CliResult<Propagation> {
        cfg.validate()?;
        let grid = KGrid::new(cfg.n_k)?;
        let model = Model::new(cfg.model_config(), &grid, cfg.dt);
        Ok(Propagation::new(model, &grid, cfg.schedule(), cfg.step_config())?)
    };
    let mut prop = match setup() {
        Ok(p) => p,
        Err(e) => return (Err(e), None),
    };
    let mut observables = vec![ObservableRow::new(&prop.observables(0), 0.0, 0)];
    let mut reports = Vec::with_capacity(cfg.n_t);
    let mut status = Ok(());
    for _ in 0..cfg.n_t {
        match prop.step() {
            Ok(r) => {
                if !r.converged {
                    eprintln!(
                        "warning: step {} did not converge after {} iterations (residual {:e})",
                        r.step, r.iterations, r.residual
                    );
                }
                observables.push(ObservableRow::new(&prop.observables(r.step), r.residual, r.iterations));
                reports.push(r);
            }
            Err(e) => {
                status = Err(e.into());
                break;
            }
        }
    }
    let outcome = RunOutcome {
        observables,
        reports,
        propagation: prop,
    };
    (status, Some(outcome))
}

/// Runs and writes every configured output. Outputs covering the steps
/// completed before a numerical failure are still written.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let (status, outcome) = propagate(cfg);
    let outcome = match outcome {
        Some(o) => o,
        None => return Err(status.unwrap_err()),
    };
    if let Some(p) = &cfg.observables {
        write_csv(create(p)?, &outcome.observables)?;
    }
    if let Some(p) = &cfg.report {
        let rows: Vec<ReportRow> = outcome.reports.iter().map(ReportRow::from).collect();
        write_csv(create(p)?, &rows)?;
    }
    if let Some(p) = &cfg.trajectory {
        write_trajectory(p, &outcome.propagation.gathered_state(), trajectory_flags(cfg))?;
    }
    status.map(|_| outcome)
}

fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn cmd_bench(spec: &BenchSpec, out: Option<&Path>) -> CliResult<()> {
    let row = run_bench(spec)?;
    write_csv(sink(out)?, &[row])
}

pub fn cmd_sweep(base: &BenchSpec, block_sizes: &[usize], workers: &[usize], out: Option<&Path>) -> CliResult<()> {
    if block_sizes.is_empty() || workers.is_empty() {
        return Err(CliError::Config("sweep needs at least one block size and one worker count".into()));
    }
    let rows = run_sweep(base, block_sizes, workers)?;
    write_csv(sink(out)?, &rows)
}

pub fn cmd_scaling(base: &BenchSpec, mode: ScalingMode, shards: &[usize], out: Option<&Path>) -> CliResult<()> {
    if shards.is_empty() {
        return Err(CliError::Config("scaling needs at least one shard count".into()));
    }
    let rows = run_scaling(mode, shards, base.n_k, base.n_t, &base.schedule, base.warmup, base.reps)?;
    write_csv(sink(out)?, &rows)
}

/// Prints a trajectory header as JSON.
pub fn cmd_inspect(path: &Path, mut out: impl Write) -> CliResult<()> {
    let h = read_header(path)?;
    let text = serde_json::to_string_pretty(&h).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::read_trajectory;

    #[test]
    fn zero_steps_gives_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(4, 0, 0.1);
        cfg.observables = Some(dir.path().join("obs.csv"));
        cfg.trajectory = Some(dir.path().join("g.kbe"));
        cmd_run(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("obs.csv")).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,mean_n_v,mean_n_c,density,residual,iterations");
        assert_eq!(lines.len(), 2);
        let (h, g) = read_trajectory(&dir.path().join("g.kbe")).unwrap();
        assert_eq!((h.n_k, h.n_t, h.frontier), (4, 0, 0));
        assert_eq!(g.n_k(), 4);
    }

    #[test]
    fn flags_follow_config() {
        let mut cfg = RunConfig::new(4, 1, 0.1);
        assert_eq!(trajectory_flags(&cfg), 0);
        cfg.limit_mode = Limit::Langreth;
        cfg.hf_mode = OnOff::On;
        assert_eq!(trajectory_flags(&cfg), FLAG_LANGRETH | FLAG_HF);
    }

    #[test]
    fn run_writes_one_report_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::new(4, 3, 0.05);
        cfg.u = crate::config::UValue::Constant(1.0);
        cfg.pulse_intensity = 0.2;
        cfg.pulse_center = 0.05;
        cfg.report = Some(dir.path().join("r.csv"));
        let out = cmd_run(&cfg).unwrap();
        assert_eq!(out.reports.len(), 3);
        assert_eq!(out.observables.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("step,iterations,residual,converged"));
    }
}
