//! The four study drivers behind the CLI subcommands: a single timed run,
//! the normalized critical-time-step table, the conditioning table, and the
//! order sweep. Every CSV cell is written with 17 significant digits so a
//! repeated run can be compared bitwise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{RunConfig, Study};
use crate::CliError;
use wavecell::linalg::{cond_inv, cond_mvp};
use wavecell::scenarios::{l2_error, Scenario, ScenarioError};
use wavecell::solver::{MassRepr, SolverError};

/// 17-significant-digit float formatting shared by every CSV writer.
fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

fn write_artifact(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// File-system-safe artifact stem from a probe or scenario name.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

/// Run independent jobs on up to `workers` threads, returning results in
/// input order regardless of scheduling. Jobs are processed in batches so
/// at most `workers` run at once.
fn run_batched<T, F>(jobs: Vec<F>, workers: usize) -> Vec<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let workers = workers.max(1);
    let mut out: Vec<Option<T>> = Vec::new();
    for _ in 0..jobs.len() {
        out.push(None);
    }
    let mut jobs: Vec<Option<F>> = jobs.into_iter().map(Some).collect();
    for batch_start in (0..jobs.len()).step_by(workers) {
        let batch_end = (batch_start + workers).min(jobs.len());
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for job in jobs[batch_start..batch_end].iter_mut() {
                let f = job.take().unwrap();
                handles.push(scope.spawn(f));
            }
            for (k, h) in handles.into_iter().enumerate() {
                out[batch_start + k] = Some(h.join().expect("study worker panicked"));
            }
        });
    }
    out.into_iter().map(|v| v.unwrap()).collect()
}

// ---------------------------------------------------------------------------
// single run
// ---------------------------------------------------------------------------

/// Execute the scenario once: per-probe displacement histories as CSV plus
/// a TOML summary (critical step, conditioning when the system is small
/// enough for a dense decomposition, cut fractions, wall time).
pub fn single_run(cfg: &RunConfig, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    cfg.expect_study(Study::SingleRun)?;
    let scn = cfg.resolve_scenario()?;

    let started = Instant::now();
    let outcome = scn.run(workers)?;
    let runtime = started.elapsed().as_secs_f64();

    let mut written = Vec::new();
    for probe in &outcome.probes {
        let mut csv = String::from("t_s,ux_m,uy_m\n");
        for s in probe.samples() {
            let _ = writeln!(csv, "{},{},{}", fmt17(s[0]), fmt17(s[1]), fmt17(s[2]));
        }
        let file = format!("probe_{}.csv", slug(&probe.name));
        written.push(write_artifact(&cfg.output_dir, &file, &csv)?);
    }

    // Conditioning diagnostics need dense spectral decompositions; guard
    // them behind the configured size limit so big runs stay cheap.
    let stats = &outcome.stats;
    let conditioning = if stats.n_dof_free <= cfg.conditioning_max_dofs {
        let (sys, _mesh) = scn.assemble(workers)?;
        let k = sys.dense_stiffness();
        let cond_k = cond_inv(&k).map_err(SolverError::from).map_err(ScenarioError::from)?;
        let cond_m = match sys.mass() {
            MassRepr::Diagonal(d) => {
                let hi = d.iter().cloned().fold(0.0_f64, f64::max);
                let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
                hi / lo
            }
            MassRepr::Dense(m) => {
                cond_inv(m).map_err(SolverError::from).map_err(ScenarioError::from)?
            }
        };
        let ones = vec![1.0; sys.n_dof()];
        let mvp = cond_mvp(&k, &ones).map_err(SolverError::from).map_err(ScenarioError::from)?;
        Some((cond_k, cond_m, mvp))
    } else {
        None
    };

    let mut toml_out = String::new();
    let _ = writeln!(toml_out, "scenario = {:?}", scn.name);
    let _ = writeln!(toml_out, "p = {}", scn.p);
    let _ = writeln!(toml_out, "depth = {}", scn.depth);
    let _ = writeln!(toml_out, "dt-s = {}", fmt17(outcome.dt));
    let _ = writeln!(toml_out, "t-end-s = {}", fmt17(scn.t_end));
    let _ = writeln!(toml_out, "steps = {}", outcome.steps);
    let _ = writeln!(toml_out, "critical-dt-s = {}", fmt17(outcome.critical_dt));
    let _ = writeln!(toml_out, "runtime-s = {:.3}", runtime);
    let _ = writeln!(toml_out);
    let _ = writeln!(toml_out, "[counts]");
    let _ = writeln!(toml_out, "cut = {}", stats.n_cut);
    let _ = writeln!(toml_out, "uncut = {}", stats.n_uncut);
    let _ = writeln!(toml_out, "fictitious = {}", stats.n_fictitious);
    let _ = writeln!(toml_out, "nodes-total = {}", stats.n_nodes_total);
    let _ = writeln!(toml_out, "nodes-active = {}", stats.n_nodes_active);
    let _ = writeln!(toml_out, "dof-free = {}", stats.n_dof_free);
    let _ = writeln!(toml_out, "dof-fixed = {}", stats.n_dof_fixed);
    let _ = writeln!(toml_out, "evs-warnings = {}", stats.n_evs_warnings);
    match conditioning {
        Some((cond_k, cond_m, mvp)) => {
            let _ = writeln!(toml_out);
            let _ = writeln!(toml_out, "[conditioning]");
            let _ = writeln!(toml_out, "cond-k = {}", fmt17(cond_k));
            let _ = writeln!(toml_out, "cond-m = {}", fmt17(cond_m));
            let _ = writeln!(toml_out, "cond-mvp = {}", fmt17(mvp));
        }
        None => {
            let _ = writeln!(
                toml_out,
                "conditioning-skipped = \"dof-free {} above conditioning-max-dofs {}\"",
                stats.n_dof_free, cfg.conditioning_max_dofs
            );
        }
    }
    for ((ex, ey), chi) in &stats.chi_cut {
        let _ = writeln!(toml_out);
        let _ = writeln!(toml_out, "[[cut-elements]]");
        let _ = writeln!(toml_out, "element = [{ex}, {ey}]");
        let _ = writeln!(toml_out, "chi = {}", fmt17(*chi));
    }
    written.push(write_artifact(&cfg.output_dir, "summary.toml", &toml_out)?);
    Ok(written)
}

// ---------------------------------------------------------------------------
// critical-time-step table
// ---------------------------------------------------------------------------

/// Critical step of one scenario cell, or the reason it has none.
fn cell_dtcr(scn: &Scenario, code: &str, p: usize, workers: usize) -> Result<f64, String> {
    let cell = scn
        .clone()
        .with_variant(code)
        .map_err(|e| e.to_string())
        .map(|mut s| {
            s.p = p;
            s
        })?;
    let (sys, _mesh) = cell.assemble(workers).map_err(|e| e.to_string())?;
    sys.critical_dt().map_err(|e| e.to_string())
}

/// Critical-step table over variant rows and order columns, each cell
/// normalized by the plain lumped-mass variant (`0e`) at the same order.
/// Cells whose mass matrix is singular are marked instead of aborting the
/// whole table.
pub fn dtcr_table(cfg: &RunConfig, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    cfg.expect_study(Study::DtcrTable)?;
    let scn = cfg.resolve_scenario()?;
    let orders = cfg.table.orders.clone().unwrap_or_else(|| (1..=8).collect());
    let variants = cfg
        .table
        .variants
        .clone()
        .unwrap_or_else(|| vec!["0e".to_string(), "2b".to_string()]);
    if orders.is_empty() || variants.is_empty() {
        return Err(CliError::Config("table needs at least one order and one variant".into()));
    }
    // Validate the variant codes up front so a typo is a config error, not
    // a page of marked cells.
    for code in &variants {
        scn.clone()
            .with_variant(code)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }

    // Baselines first: the 0e value at each order is the denominator for
    // the whole column.
    let base_jobs: Vec<_> = orders
        .iter()
        .map(|&p| {
            let scn = &scn;
            move || cell_dtcr(scn, "0e", p, 1)
        })
        .collect();
    let baselines = run_batched(base_jobs, workers);
    for (i, b) in baselines.iter().enumerate() {
        if let Err(e) = b {
            return Err(CliError::Config(format!(
                "normalization baseline (variant 0e, p={}) failed: {e}",
                orders[i]
            )));
        }
    }
    let baselines: Vec<f64> = baselines.into_iter().map(|b| b.unwrap()).collect();

    let mut jobs = Vec::new();
    for code in &variants {
        for &p in &orders {
            let scn = &scn;
            let code = code.clone();
            jobs.push(move || cell_dtcr(scn, &code, p, 1));
        }
    }
    let cells = run_batched(jobs, workers);

    let mut csv = String::from("variant");
    for &p in &orders {
        let _ = write!(csv, ",p={p}");
    }
    csv.push('\n');
    for (r, code) in variants.iter().enumerate() {
        let _ = write!(csv, "{code}");
        for (c, _) in orders.iter().enumerate() {
            match &cells[r * orders.len() + c] {
                Ok(dtcr) => {
                    let _ = write!(csv, ",{}", fmt17(dtcr / baselines[c]));
                }
                Err(_) => csv.push_str(",singular"),
            }
        }
        csv.push('\n');
    }
    Ok(vec![write_artifact(&cfg.output_dir, "dtcr_table.csv", &csv)?])
}

// ---------------------------------------------------------------------------
// conditioning table
// ---------------------------------------------------------------------------

/// The six stabilization settings of the conditioning study; the label
/// appears verbatim in the CSV.
const KAPPA_SETTINGS: [(&str, bool, f64); 6] = [
    ("unstabilized", false, 0.0),
    ("alpha-1e-12", false, 1e-12),
    ("alpha-1e-5", false, 1e-5),
    ("evs", true, 0.0),
    ("evs-alpha-1e-12", true, 1e-12),
    ("evs-alpha-1e-5", true, 1e-5),
];

fn kappa_row(scn: &Scenario, p: usize, evs_on: bool, alpha0: f64) -> Result<[f64; 3], String> {
    let mut cell = scn.clone();
    cell.p = p;
    if !evs_on {
        cell.evs.stabilize_k = false;
        cell.evs.stabilize_m = false;
    }
    cell.evs.alpha0 = alpha0;
    let (sys, _mesh) = cell.assemble(1).map_err(|e| e.to_string())?;
    let k = sys.dense_stiffness();
    let cond_k = cond_inv(&k).map_err(|e| e.to_string())?;
    let cond_m = match sys.mass() {
        MassRepr::Diagonal(d) => {
            let hi = d.iter().cloned().fold(0.0_f64, f64::max);
            let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
            hi / lo
        }
        MassRepr::Dense(m) => cond_inv(m).map_err(|e| e.to_string())?,
    };
    let ones = vec![1.0; sys.n_dof()];
    let mvp = cond_mvp(&k, &ones).map_err(|e| e.to_string())?;
    Ok([cond_k, cond_m, mvp])
}

/// Conditioning of the assembled operators across the six stabilization
/// settings, one row per (order, setting). Infinite values (an exactly
/// singular stiffness) print as `inf`.
pub fn kappa_table(cfg: &RunConfig, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    cfg.expect_study(Study::KappaTable)?;
    let scn = cfg.resolve_scenario()?;
    let orders = cfg.table.orders.clone().unwrap_or_else(|| vec![1, 2]);
    if orders.is_empty() {
        return Err(CliError::Config("table needs at least one order".into()));
    }

    let mut jobs = Vec::new();
    for &p in &orders {
        for &(_, evs_on, alpha0) in KAPPA_SETTINGS.iter() {
            let scn = &scn;
            jobs.push(move || kappa_row(scn, p, evs_on, alpha0));
        }
    }
    let rows = run_batched(jobs, workers);

    let mut csv = String::from("p,setting,cond_k,cond_m,cond_mvp\n");
    let mut idx = 0;
    for &p in &orders {
        for &(label, _, _) in KAPPA_SETTINGS.iter() {
            let row = rows[idx]
                .as_ref()
                .map_err(|e| CliError::Config(format!("conditioning cell p={p} {label}: {e}")))?;
            let _ = writeln!(
                csv,
                "{p},{label},{},{},{}",
                fmt17(row[0]),
                fmt17(row[1]),
                fmt17(row[2])
            );
            idx += 1;
        }
    }
    Ok(vec![write_artifact(&cfg.output_dir, "kappa_table.csv", &csv)?])
}

// ---------------------------------------------------------------------------
// order sweep
// ---------------------------------------------------------------------------

/// Accuracy-versus-order sweep: each order runs the scenario unchanged and
/// is scored against a self-reference at a higher order and a finer step.
/// Rows are `(p, e_L2 percent, critical dt)`.
pub fn p_sweep(cfg: &RunConfig, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    cfg.expect_study(Study::PSweep)?;
    let scn = cfg.resolve_scenario()?;
    if scn.probes.is_empty() {
        return Err(CliError::Config(format!(
            "scenario '{}' has no probes; the sweep error needs one",
            scn.name
        )));
    }
    let orders = cfg.sweep.orders.clone().unwrap_or_else(|| vec![2, 3, 4, 5]);
    if orders.is_empty() {
        return Err(CliError::Config("sweep needs at least one order".into()));
    }
    let ref_p = cfg.sweep.reference_p.unwrap_or(6);
    let divisor = cfg.sweep.reference_dt_divisor.unwrap_or(4.0);
    if !(divisor.is_finite() && divisor >= 1.0) {
        return Err(CliError::Config(format!(
            "reference-dt-divisor must be >= 1, got {divisor}"
        )));
    }
    let component = match cfg.sweep.component.as_deref() {
        None | Some("x") => 0,
        Some("y") => 1,
        Some(other) => {
            return Err(CliError::Config(format!(
                "sweep component must be \"x\" or \"y\", got \"{other}\""
            )))
        }
    };

    // The reference: same scenario, elevated order, refined step.
    let mut reference = scn.clone();
    reference.p = ref_p;
    reference.dt = scn.dt / divisor;
    let ref_out = reference.run(workers)?;
    let ref_probe = &ref_out.probes[0];
    let (mut t_ref, mut u_ref) = (ref_probe.times(), ref_probe.component(component));
    if let Some(end) = cfg.sweep.window_end {
        let keep = t_ref.partition_point(|&t| t <= end);
        if keep < 2 {
            return Err(CliError::Config(format!(
                "window-end {end:e} s leaves fewer than two reference samples"
            )));
        }
        t_ref.truncate(keep);
        u_ref.truncate(keep);
    }

    let jobs: Vec<_> = orders
        .iter()
        .map(|&p| {
            let scn = &scn;
            let (t_ref, u_ref) = (&t_ref, &u_ref);
            move || -> Result<(f64, f64), String> {
                let mut run = scn.clone();
                run.p = p;
                let out = run.run(1).map_err(|e| e.to_string())?;
                let probe = &out.probes[0];
                let err = l2_error(t_ref, u_ref, &probe.times(), &probe.component(component))
                    .map_err(|e| e.to_string())?;
                Ok((out.critical_dt, err))
            }
        })
        .collect();
    let results = run_batched(jobs, workers);

    let mut csv = String::from("p,e_l2_percent,dtcr_s\n");
    for (i, r) in results.into_iter().enumerate() {
        let (dtcr, err) =
            r.map_err(|e| CliError::Config(format!("sweep cell p={}: {e}", orders[i])))?;
        let _ = writeln!(csv, "{},{},{}", orders[i], fmt17(err), fmt17(dtcr));
    }
    Ok(vec![write_artifact(&cfg.output_dir, "sweep.csv", &csv)?])
}
