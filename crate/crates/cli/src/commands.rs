//! One function per subcommand. Each writes its files into the output
//! directory and returns the summary that was written as `summary.json`.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use serde_json::{json, Value};

use exitfsp::{
    build_truncation, etfsp_solve, fsp_error_trace, fsp_solve, lv_deterministic_trajectory, monte_carlo_exit, sweep,
    uniform_grid, wilson_interval, DomainPredicate, EtfspSolution, LvFixation, State, SweepRow,
};

use crate::config::{Resolved, RunConfig};
use crate::output::{fmt_f, header, OutputDir};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Etfsp,
    Fsp,
    Simulate,
    Sweep,
    LvPhase,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Etfsp => "etfsp",
            Command::Fsp => "fsp",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::LvPhase => "lv-phase",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Value, CliError> {
    let start = Instant::now();
    let mut out = OutputDir::create(Path::new(&cfg.output.dir))?;
    let mut summary = match cmd {
        Command::Etfsp => cmd_etfsp(cfg, &mut out)?,
        Command::Fsp => cmd_fsp(cfg, &mut out)?,
        Command::Simulate => cmd_simulate(cfg, &mut out)?,
        Command::Sweep => cmd_sweep(cfg, &mut out)?,
        Command::LvPhase => cmd_lv_phase(cfg, &mut out)?,
    };
    summary["command"] = json!(cmd.name());
    summary["elapsed_seconds"] = json!(start.elapsed().as_secs_f64());
    let mut files = out.written().to_vec();
    files.push("summary.json".into());
    summary["files"] = json!(files);
    summary["config"] = serde_json::to_value(cfg).map_err(|e| CliError::Io(e.to_string()))?;
    out.json("summary.json", &summary)?;
    info!("wrote {} files to {}", files.len(), out.path().display());
    Ok(summary)
}

fn state_header(res: &Resolved) -> Vec<String> {
    header(&["state"], res.model.species().iter().cloned())
}

fn state_cells(res: &Resolved, x: &State) -> Vec<String> {
    let mut row = vec![res.model.label(x)];
    row.extend(x.coords().iter().map(|c| c.to_string()));
    row
}

fn time_header(res: &Resolved, grid: &[f64]) -> Vec<String> {
    let mut h = state_header(res);
    h.extend(grid.iter().map(|&t| fmt_f(t)));
    h
}

/// Boundary states of `sol` matching each configured selector.
fn conditional_targets(cfg: &RunConfig, res: &Resolved, sol: &EtfspSolution) -> Result<Vec<(String, Vec<State>)>, CliError> {
    cfg.output
        .conditional
        .iter()
        .map(|c| {
            let pred = DomainPredicate::parse(&c.select, res.model.species())?;
            Ok((c.name.clone(), sol.boundary_where(|x| pred.contains(x))))
        })
        .collect()
}

fn solution_summary(sol: &EtfspSolution) -> Value {
    json!({
        "r": sol.truncation.r(),
        "t_final": sol.t_final,
        "states": sol.truncation.len(),
        "interior": sol.truncation.interior_len(),
        "boundary": sol.truncation.boundary_len(),
        "epsilon": sol.epsilon,
        "atom_mass": sol.atom_mass(),
        "exit_mass": sol.mu_cum.iter().sum::<f64>(),
        "occupation_total": sol.nu_cum.iter().sum::<f64>(),
        "initial_mass_lost": [sol.initial_lost.0, sol.initial_lost.1],
        "solver": sol.stats,
        "atol": sol.atol,
        "rtol": sol.rtol,
        "warnings": sol.warnings,
    })
}

fn cmd_etfsp(cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let res = cfg.resolve()?;
    let (r, tf) = (cfg.r()?, cfg.t_final()?);
    let spec = cfg.integration(cfg.grid(tf)?);
    let trunc = build_truncation(&res.model, &res.domain, &res.family, r, Some(&res.gamma))?;
    let sol = etfsp_solve(&res.model, Arc::new(trunc), &res.gamma, tf, &spec)?;
    let mut summary = solution_summary(&sol);
    summary["occupation_error_bound"] = json!(sol.occupation_error_bound(cfg.output.mean_exit_upper)?);
    if res.lv.is_some() {
        summary["fixation"] = json!(LvFixation::from_solution(&sol));
    }
    let targets = conditional_targets(cfg, &res, &sol)?;
    let mut conds = Vec::new();
    let mut cond_data = Vec::new();
    for (name, states) in &targets {
        let c = sol.conditional_exit_density(states)?;
        conds.push(json!({
            "name": name,
            "targets": states.len(),
            "target_mass": c.target_mass,
            "target_atom": c.target_atom,
            "tv_error_bound": c.tv_error_bound,
        }));
        cond_data.push((name.clone(), c));
    }
    summary["conditional"] = json!(conds);

    if sol.grid.is_empty() {
        return Ok(summary);
    }
    let tr = &sol.truncation;
    let interior: Vec<&State> = tr.interior_states().collect();
    let boundary: Vec<&State> = tr.boundary_states().collect();
    out.csv(
        "nu.csv",
        &time_header(&res, &sol.grid),
        interior.iter().enumerate().map(|(i, x)| {
            let mut row = state_cells(&res, x);
            row.extend(sol.nu.iter().map(|v| fmt_f(v[i])));
            row
        }),
    )?;
    out.csv(
        "mu.csv",
        &time_header(&res, &sol.grid),
        boundary.iter().enumerate().map(|(b, x)| {
            let mut row = state_cells(&res, x);
            row.extend(sol.mu.iter().map(|v| fmt_f(v[b])));
            row
        }),
    )?;
    let mg = sol.marginals();
    let cdf = sol.exit_cdf();
    let occ = sol.occupied_mass();
    let leak = sol.leak_trace();
    out.csv(
        "mu_t.csv",
        &header(&["t", "mu_t", "exit_cdf", "occupied", "leak"], []),
        (0..sol.grid.len()).map(|k| {
            vec![fmt_f(sol.grid[k]), fmt_f(mg.mu_t[k]), fmt_f(cdf[k]), fmt_f(occ[k]), fmt_f(leak[k])]
        }),
    )?;
    out.csv(
        "mu_s.csv",
        &header(&[], state_header(&res).into_iter().chain(["mu_s".into(), "atom".into()])),
        boundary.iter().enumerate().map(|(b, x)| {
            let mut row = state_cells(&res, x);
            row.push(fmt_f(mg.mu_s[b]));
            row.push(fmt_f(sol.atom[b]));
            row
        }),
    )?;
    out.csv(
        "nu_s.csv",
        &header(&[], state_header(&res).into_iter().chain(["nu_s".into()])),
        interior.iter().enumerate().map(|(i, x)| {
            let mut row = state_cells(&res, x);
            row.push(fmt_f(mg.nu_s[i]));
            row
        }),
    )?;
    for (name, c) in &cond_data {
        out.csv(
            &format!("conditional_{}.csv", file_safe(name)),
            &header(&["t", "density"], []),
            sol.grid.iter().zip(&c.density).map(|(&t, &d)| vec![fmt_f(t), fmt_f(d)]),
        )?;
    }
    Ok(summary)
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_fsp(cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let res = cfg.resolve()?;
    let (r, tf) = (cfg.r()?, cfg.t_final()?);
    let spec = cfg.integration(cfg.grid(tf)?);
    let trunc = build_truncation(&res.model, &res.domain, &res.family, r, Some(&res.gamma))?;
    let sol = fsp_solve(&res.model, Arc::new(trunc), &res.gamma, tf, &spec)?;
    let trace = fsp_error_trace(&sol)?;
    let summary = json!({
        "r": r,
        "t_final": tf,
        "states": sol.truncation.len(),
        "final_error_bound": sol.final_error_bound,
        "solver": sol.stats,
        "atol": sol.atol,
        "rtol": sol.rtol,
        "warnings": sol.warnings,
    });
    if sol.grid.is_empty() {
        return Ok(summary);
    }
    out.csv(
        "p.csv",
        &time_header(&res, &sol.grid),
        sol.truncation.states().iter().enumerate().map(|(i, x)| {
            let mut row = state_cells(&res, x);
            row.extend(sol.p.iter().map(|p| fmt_f(p[i])));
            row
        }),
    )?;
    out.csv(
        "error_trace.csv",
        &header(&["t", "mass", "error_bound"], []),
        (0..sol.grid.len()).map(|k| vec![fmt_f(sol.grid[k]), fmt_f(sol.mass[k]), fmt_f(trace[k])]),
    )?;
    Ok(summary)
}

fn cmd_simulate(cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let res = cfg.resolve()?;
    let o = cfg.oracle()?;
    let caps = cfg.caps()?;
    let set = monte_carlo_exit(&res.model, &res.domain, &res.gamma, o.samples, o.seed, caps)?;
    let n = set.len();
    let times = set.exit_times();
    let mean = if times.is_empty() {
        None
    } else {
        Some(times.iter().sum::<f64>() / times.len() as f64)
    };
    let mut summary = json!({
        "samples": n,
        "seed": o.seed,
        "time_cap": caps.time_cap,
        "jump_cap": caps.jump_cap,
        "censored": set.censored(),
        "censored_fraction": set.censored_fraction(),
        "alpha": o.alpha,
        "dkw_half_width": set.dkw_half_width(o.alpha),
        "mean_exit_time_uncensored": mean,
    });
    if res.lv.is_some() {
        let class = |f: &dyn Fn(u32, u32) -> bool| {
            let k = set.count_where(|s| s.exited() && f(s.state.coords()[0], s.state.coords()[1]));
            let (lo, hi) = wilson_interval(k, n, o.alpha);
            json!({ "count": k, "estimate": k as f64 / n as f64, "ci": [lo, hi] })
        };
        summary["fixation"] = json!({
            "species1": class(&|a, b| a > 0 && b == 0),
            "species2": class(&|a, b| a == 0 && b > 0),
            "extinction": class(&|a, b| a == 0 && b == 0),
        });
    }

    let mut h = header(&["index", "exit_time"], res.model.species().iter().cloned());
    h.extend(["jumps".to_string(), "censored".to_string()]);
    out.csv(
        "samples.csv",
        &h,
        set.samples.iter().enumerate().map(|(i, s)| {
            let mut row = vec![i.to_string(), fmt_f(s.exit_time)];
            row.extend(s.state.coords().iter().map(|c| c.to_string()));
            row.push(s.jumps.to_string());
            row.push(match s.censored {
                None => String::new(),
                Some(exitfsp::CensorReason::TimeCap) => "time_cap".into(),
                Some(exitfsp::CensorReason::JumpCap) => "jump_cap".into(),
            });
            row
        }),
    )?;
    let t_end = cfg
        .times
        .t_final
        .unwrap_or_else(|| times.last().copied().unwrap_or(0.0).min(caps.time_cap));
    let grid = uniform_grid(t_end, o.ecdf_points);
    let ecdf = set.ecdf(&grid);
    let w = set.dkw_half_width(o.alpha);
    out.csv(
        "ecdf.csv",
        &header(&["t", "ecdf", "lower", "upper"], []),
        grid.iter().zip(&ecdf).map(|(&t, &f)| {
            vec![fmt_f(t), fmt_f(f), fmt_f((f - w).max(0.0)), fmt_f((f + w).min(1.0))]
        }),
    )?;
    out.csv(
        "exit_counts.csv",
        &header(&[], state_header(&res).into_iter().chain(["count", "frequency", "ci_low", "ci_high"].map(String::from))),
        set.exit_counts().iter().map(|(x, &k)| {
            let (lo, hi) = wilson_interval(k, n, o.alpha);
            let mut row = state_cells(&res, x);
            row.extend([k.to_string(), fmt_f(k as f64 / n as f64), fmt_f(lo), fmt_f(hi)]);
            row
        }),
    )?;
    Ok(summary)
}

fn cmd_sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let res = cfg.resolve()?;
    let rs = cfg
        .truncation
        .as_ref()
        .and_then(|t| t.schedule.clone())
        .ok_or_else(|| CliError::Config("truncation: 'schedule' is required for sweep".into()))?;
    let tfs = match (&cfg.times.t_final_schedule, cfg.times.t_final) {
        (Some(s), _) if s.len() == rs.len() => s.clone(),
        (Some(_), _) => {
            return Err(CliError::Config(
                "times: 't_final_schedule' must have one entry per truncation".into(),
            ))
        }
        (None, Some(t)) => vec![t; rs.len()],
        (None, None) => return Err(CliError::Config("times: 't_final' or 't_final_schedule' is required".into())),
    };
    let schedule: Vec<(u32, f64)> = rs.iter().copied().zip(tfs.iter().copied()).collect();
    let t_max = tfs.iter().copied().fold(0.0, f64::max);
    let spec = cfg.integration(cfg.grid(t_max)?);
    let sols = sweep(&res.model, &res.domain, &res.family, &schedule, &res.gamma, &spec)?;

    let mut rows_json = Vec::new();
    let mut rows = Vec::new();
    let mut h = header(
        &["r", "t_final", "states", "interior", "boundary", "epsilon", "atom_mass", "exit_mass", "occupation_total", "accepted_steps"],
        [],
    );
    if res.lv.is_some() {
        h.extend(["fix_species1", "fix_species2", "extinction"].map(String::from));
    }
    for sol in &sols {
        let row = SweepRow::from_solution(sol.truncation.r(), sol);
        let mut cells = vec![
            row.r.to_string(),
            fmt_f(row.t_final),
            row.states.to_string(),
            row.interior.to_string(),
            row.boundary.to_string(),
            fmt_f(row.epsilon),
            fmt_f(row.atom_mass),
            fmt_f(row.exit_mass),
            fmt_f(row.occupation_total),
            row.accepted_steps.to_string(),
        ];
        let mut j = serde_json::to_value(&row).map_err(|e| CliError::Io(e.to_string()))?;
        if res.lv.is_some() {
            let f = LvFixation::from_solution(sol);
            cells.extend([fmt_f(f.species1), fmt_f(f.species2), fmt_f(f.extinction)]);
            j["fixation"] = json!(f);
        }
        rows.push(cells);
        rows_json.push(j);
    }
    out.csv("sweep.csv", &h, rows)?;

    // Exit mass per boundary state, one column per truncation.
    let all: BTreeSet<State> = sols
        .iter()
        .flat_map(|s| s.truncation.boundary_states().cloned().collect::<Vec<_>>())
        .collect();
    let mut h = state_header(&res);
    h.extend(sols.iter().map(|s| format!("r={}", s.truncation.r())));
    out.csv(
        "mu_s_sweep.csv",
        &h,
        all.iter().map(|x| {
            let mut row = state_cells(&res, x);
            row.extend(sols.iter().map(|s| {
                let v = s.truncation.boundary_position(x).map_or(0.0, |b| s.mu_cum[b] + s.atom[b]);
                fmt_f(v)
            }));
            row
        }),
    )?;

    let mut tv_rows = Vec::new();
    let mut tv_json = Vec::new();
    for sol in &sols {
        for (name, states) in conditional_targets(cfg, &res, sol)? {
            // Small truncations may not reach every target yet.
            if states.is_empty() {
                continue;
            }
            let c = sol.conditional_exit_density(&states)?;
            tv_rows.push(vec![
                name.clone(),
                sol.truncation.r().to_string(),
                fmt_f(c.target_mass),
                fmt_f(c.tv_error_bound),
            ]);
            tv_json.push(json!({
                "name": name,
                "r": sol.truncation.r(),
                "target_mass": c.target_mass,
                "tv_error_bound": c.tv_error_bound,
            }));
        }
    }
    if !tv_rows.is_empty() {
        out.csv("conditional_sweep.csv", &header(&["name", "r", "target_mass", "tv_error_bound"], []), tv_rows)?;
    }
    Ok(json!({ "rows": rows_json, "conditional": tv_json }))
}

fn cmd_lv_phase(cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, CliError> {
    let res = cfg.resolve()?;
    let params = res
        .lv
        .ok_or_else(|| CliError::Config("lv-phase needs model kind 'lotka_volterra'".into()))?;
    let phase = cfg
        .phase
        .as_ref()
        .ok_or_else(|| CliError::Config("phase: section is required for lv-phase".into()))?;
    let mut rows = Vec::new();
    let mut ends = Vec::new();
    for (i, &x0) in phase.x0.iter().enumerate() {
        let tr = lv_deterministic_trajectory(&params, x0, phase.t_final, phase.dt)?;
        ends.push(json!({ "x0": x0, "end": tr.last().map(|e| e.1) }));
        rows.extend(
            tr.iter()
                .map(|(t, x)| vec![i.to_string(), fmt_f(*t), fmt_f(x[0]), fmt_f(x[1])]),
        );
    }
    out.csv("trajectories.csv", &header(&["trajectory", "t", "x1", "x2"], []), rows)?;
    Ok(json!({
        "growth_difference": params.growth_difference(),
        "params": params,
        "trajectories": ends,
    }))
}
