//! Executes a parsed configuration and records artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use parisi_core::eval::{local_parisi_f, recursion_x0, EvalConfig, MeasureSpec, TerminalCondition};
use parisi_core::gaussian::{equivalence_check, rs_table, u_star, UStar};
use parisi_core::matrix::SymMatrix;
use parisi_core::order::{DiscretePath, UnitPartition};
use parisi_core::pde::{solve_pde_1d, GridSpec};
use parisi_core::rpc::{overlap_distribution_check, pair_sum_check, rpc_parisi_representation};
use parisi_core::saddle::{outer_sup, stationarity_residual, SaddleProblem};
use parisi_core::seeds::{child_seed, derive_seed};
use parisi_core::sk::{exact_local_free_energy, mc_free_energy, Disorder, McSchedule, SpinSpace};
use parisi_core::stats::Estimate;
use parisi_core::verify::run_criterion;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Command, EngineSpec, RunConfig, SkMethod};
use crate::error::CliError;

pub const DEFAULT_VERIFY_SEED: u64 = 20240601;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub core_version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub master_seed: Option<u64>,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<Artifact>,
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
    seeds: BTreeMap<String, u64>,
}

impl Output {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.write(name, &bytes)
    }

    fn seed(&mut self, master: u64, label: &str) -> u64 {
        let s = derive_seed(master, label);
        self.seeds.insert(label.to_string(), s);
        s
    }
}

/// Summary handed back to `main`.
pub struct Report {
    pub manifest: Manifest,
    pub lines: Vec<String>,
    pub failures: Vec<String>,
}

fn config_err(at: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("at `{at}`: {e}"))
}

fn build_measure(spec: &MeasureSpec) -> Result<parisi_core::eval::AprioriMeasure, CliError> {
    spec.build().map_err(|e| config_err("params.measure", e))
}

/// Runs `cfg` writing into `out`; `config_text` is hashed into the manifest.
pub fn execute(cfg: &RunConfig, config_text: &str, out: &Path) -> Result<Report, CliError> {
    let kind = cfg.command.kind();
    if kind.stochastic() && cfg.seed.is_none() {
        return Err(CliError::Config(format!(
            "at `seed`: command `{}` needs a master seed",
            kind.name()
        )));
    }
    fs::create_dir_all(out)?;
    let mut o = Output {
        dir: out.to_path_buf(),
        artifacts: Vec::new(),
        seeds: BTreeMap::new(),
    };
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let seed = cfg.seed.unwrap_or(DEFAULT_VERIFY_SEED);
    match &cfg.command {
        Command::Eval(p) => eval(p, seed, &mut o, &mut lines)?,
        Command::Pde(p) => pde(p, &mut o, &mut lines)?,
        Command::Rpc(p) => rpc(p, seed, &mut o, &mut lines, &mut failures)?,
        Command::Sk(p) => sk(p, seed, &mut o, &mut lines)?,
        Command::Gaussian(p) => gaussian(p, seed, &mut o, &mut lines)?,
        Command::Saddle(p) => saddle(p, seed, &mut o, &mut lines)?,
        Command::VerifyAll(p) => verify(p, seed, &mut o, &mut lines, &mut failures)?,
    }
    let manifest = Manifest {
        tool: "parisi-lab",
        tool_version: env!("CARGO_PKG_VERSION"),
        core_version: parisi_core::VERSION,
        command: kind.name(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        master_seed: cfg.seed.or((kind == crate::config::CommandKind::VerifyAll).then_some(seed)),
        seeds: o.seeds.clone(),
        artifacts: o.artifacts.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out.join("manifest.json"), text)?;
    Ok(Report {
        manifest,
        lines,
        failures,
    })
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    inputs_sha256: String,
    path: usize,
    quantity: &'a str,
    engine: &'a EngineSpec,
    seed: Option<u64>,
    value: f64,
    std_error: f64,
}

fn eval(p: &crate::config::EvalParams, master: u64, o: &mut Output, lines: &mut Vec<String>) -> Result<(), CliError> {
    let mu = build_measure(&p.measure)?;
    let d = mu.dim();
    let lambda = match &p.lambda {
        Some(rows) => SymMatrix::from_rows(rows).map_err(|e| config_err("params.lambda", e))?,
        None => SymMatrix::zeros(d),
    };
    let tc = TerminalCondition::new(p.beta, lambda, mu).map_err(|e| config_err("params", e))?;
    let (cfg, seed) = match p.engine {
        EngineSpec::GaussHermite { nodes } => (EvalConfig::gauss_hermite(nodes), None),
        EngineSpec::MonteCarlo { samples, replicas } => {
            let s = o.seed(master, "eval");
            (EvalConfig::monte_carlo(samples, replicas, s), Some(s))
        }
    };
    let mut out = String::new();
    for (i, rec) in p.paths.iter().enumerate() {
        let path = DiscretePath::from_record(rec).map_err(|e| config_err(&format!("params.paths[{i}]"), e))?;
        let inputs = serde_json::json!({
            "measure": p.measure,
            "beta": p.beta,
            "lambda": p.lambda,
            "path": rec,
        });
        let hash = sha256_hex(serde_json::to_string(&inputs)?.as_bytes());
        let x0 = recursion_x0(path.partition(), path.chain(), &tc, &cfg)?;
        let f = local_parisi_f(path.partition(), path.chain(), &tc, &cfg)?;
        for (quantity, e) in [("x0", x0), ("local_parisi_f", f)] {
            let r = EvalRecord {
                inputs_sha256: hash.clone(),
                path: i,
                quantity,
                engine: &p.engine,
                seed,
                value: e.value,
                std_error: e.std_error,
            };
            out.push_str(&serde_json::to_string(&r)?);
            out.push('\n');
            lines.push(format!("path {i} {quantity} = {:.10} +- {:.2e}", e.value, e.std_error));
        }
    }
    o.write("eval.jsonl", out.as_bytes())
}

#[derive(Serialize)]
struct PdeRow {
    h: f64,
    pde: f64,
    recursion: f64,
    error: f64,
}

fn pde(p: &crate::config::PdeParams, o: &mut Output, lines: &mut Vec<String>) -> Result<(), CliError> {
    let mu = build_measure(&p.measure)?;
    if mu.dim() != 1 {
        return Err(config_err("params.measure", "the PDE solver is one-dimensional"));
    }
    let path = DiscretePath::scalar(&p.x, &p.q, p.u).map_err(|e| config_err("params", e))?;
    let tc = TerminalCondition::new(p.beta, SymMatrix::scalar(p.lambda), mu).map_err(|e| config_err("params", e))?;
    let exact = recursion_x0(path.partition(), path.chain(), &tc, &EvalConfig::default())?.value;
    let mut rows = Vec::new();
    for (i, &h) in p.h.iter().enumerate() {
        if !(h > 0.0) {
            return Err(config_err(&format!("params.h[{i}]"), "grid step must be positive"));
        }
        let sol = solve_pde_1d(&path, &tc, &GridSpec::new(h))?;
        let v = sol.value_at_origin();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf)?;
        o.write(&format!("pde_grid_{i}.csv"), &buf)?;
        lines.push(format!("h = {h}: f(0,0) = {v:.10}, recursion {exact:.10}, error {:.3e}", (v - exact).abs()));
        rows.push(PdeRow {
            h,
            pde: v,
            recursion: exact,
            error: (v - exact).abs(),
        });
    }
    o.write_csv("pde.csv", &rows)
}

fn rpc(
    p: &crate::config::RpcParams,
    master: u64,
    o: &mut Output,
    lines: &mut Vec<String>,
    failures: &mut Vec<String>,
) -> Result<(), CliError> {
    let x = UnitPartition::new(&p.x).map_err(|e| config_err("params.x", e))?;
    let s = o.seed(master, "rpc");
    let overlap = overlap_distribution_check(&x, p.m, p.replicas, p.pairs, s)?;
    let pairs = pair_sum_check(&x, p.m, p.replicas, s)?;
    for (label, rows) in [("P(q_L <= k)", &overlap), ("pair sums", &pairs)] {
        for r in rows.iter() {
            let ok = r.within(3.0);
            lines.push(format!(
                "{label} k={}: {:.4} +- {:.4} target {:.4}{}",
                r.k,
                r.estimate,
                r.se,
                r.target,
                if ok { "" } else { "  (outside 3 SE)" }
            ));
            if !ok {
                failures.push(format!("{label} k={}", r.k));
            }
        }
    }
    o.write_csv("rpc_overlap.csv", &overlap)?;
    o.write_csv("rpc_pairs.csv", &pairs)?;
    if let Some(rep) = &p.representation {
        let path = DiscretePath::scalar(&p.x, &rep.q, rep.u).map_err(|e| config_err("params.representation", e))?;
        let tc = TerminalCondition::plain(rep.beta, parisi_core::eval::AprioriMeasure::rademacher())
            .map_err(|e| config_err("params.representation", e))?;
        let rs = o.seed(master, "rpc-representation");
        let est = rpc_parisi_representation(path.partition(), path.chain(), &tc, p.m, p.replicas, rs)?;
        let target = recursion_x0(path.partition(), path.chain(), &tc, &EvalConfig::default())?.value;
        lines.push(format!(
            "representation {:.6} +- {:.6}, recursion {target:.6}",
            est.estimate.value, est.estimate.std_error
        ));
        o.write_json(
            "rpc_representation.json",
            &serde_json::json!({ "estimate": est, "recursion": target }),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SkRow {
    n: usize,
    beta: f64,
    replica: usize,
    seed: u64,
    estimate: f64,
    se: f64,
    converged: bool,
}

#[derive(Serialize)]
struct SkSummary {
    n: usize,
    beta: f64,
    replicas: usize,
    mean: f64,
    se: f64,
}

fn sk(p: &crate::config::SkParams, master: u64, o: &mut Output, lines: &mut Vec<String>) -> Result<(), CliError> {
    let mu = build_measure(&p.measure)?;
    let space = SpinSpace::from_measure(&mu, p.nodes).map_err(|e| config_err("params.measure", e))?;
    p.constraint
        .check_dim(space.d)
        .map_err(|e| config_err("params.constraint", e))?;
    if p.replicas == 0 {
        return Err(config_err("params.replicas", "need at least one replica"));
    }
    let base = o.seed(master, "sk");
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &n in &p.ns {
        for &beta in &p.betas {
            let out: Vec<SkRow> = (0..p.replicas)
                .into_par_iter()
                .map(|i| -> Result<SkRow, CliError> {
                    let seed = child_seed(base, &format!("disorder-{n}"), i as u64);
                    let dis = Disorder::sample(n, seed);
                    let (estimate, se, converged) = match p.method {
                        SkMethod::Exact => (exact_local_free_energy(&dis, beta, &p.constraint, &space)?, 0.0, true),
                        SkMethod::Tempering => {
                            let mut sched = McSchedule::new(child_seed(base, "tempering", i as u64));
                            if let Some(t) = &p.tempering {
                                sched.rungs = t.rungs.unwrap_or(sched.rungs);
                                sched.sweeps = t.sweeps.unwrap_or(sched.sweeps);
                                sched.burn_in = t.burn_in.unwrap_or(sched.burn_in);
                                sched.swap_every = t.swap_every.unwrap_or(sched.swap_every);
                                sched.chains = t.chains.unwrap_or(sched.chains);
                            }
                            let e = mc_free_energy(&dis, beta, &p.constraint, &space, &sched)?;
                            (e.estimate.value, e.estimate.std_error, e.converged)
                        }
                    };
                    Ok(SkRow {
                        n,
                        beta,
                        replica: i,
                        seed,
                        estimate,
                        se,
                        converged,
                    })
                })
                .collect::<Result<_, _>>()?;
            let e = Estimate::from_samples(&out.iter().map(|r| r.estimate).collect::<Vec<_>>());
            lines.push(format!("N = {n}, beta = {beta}: E p_N = {:.6} +- {:.6}", e.value, e.std_error));
            summary.push(SkSummary {
                n,
                beta,
                replicas: p.replicas,
                mean: e.value,
                se: e.std_error,
            });
            rows.extend(out);
        }
    }
    o.write_csv("sk.csv", &rows)?;
    o.write_csv("sk_summary.csv", &summary)
}

#[derive(Serialize)]
struct UStarRow {
    c: f64,
    beta: f64,
    u_star: Option<f64>,
    value: Option<f64>,
}

fn gaussian(
    p: &crate::config::GaussianParams,
    master: u64,
    o: &mut Output,
    lines: &mut Vec<String>,
) -> Result<(), CliError> {
    if p.c.iter().any(|&c| !(c > 0.0)) || p.u.iter().any(|&u| !(u > 0.0)) || !(p.beta >= 0.0) {
        return Err(config_err("params", "need c > 0, u > 0 and beta >= 0"));
    }
    let table = rs_table(&p.c, &p.u, p.beta);
    o.write_csv("rs_table.csv", &table)?;
    let stars: Vec<UStarRow> = p
        .c
        .iter()
        .map(|&c| match u_star(c, p.beta) {
            UStar::Attained { u, value } => UStarRow {
                c,
                beta: p.beta,
                u_star: Some(u),
                value: Some(value),
            },
            UStar::Divergent => UStarRow {
                c,
                beta: p.beta,
                u_star: None,
                value: None,
            },
        })
        .collect();
    for s in &stars {
        match (s.u_star, s.value) {
            (Some(u), Some(v)) => lines.push(format!("c = {}: u* = {u:.10}, sup value {v:.10}", s.c)),
            _ => lines.push(format!("c = {}: supremum diverges", s.c)),
        }
    }
    o.write_csv("u_star.csv", &stars)?;
    if let Some(eq) = &p.equivalence {
        let s = o.seed(master, "equivalence");
        let reports = eq
            .levels
            .iter()
            .map(|&n| equivalence_check(eq.c, eq.u, eq.h, p.beta, n, s))
            .collect::<Result<Vec<_>, _>>()?;
        for r in &reports {
            lines.push(format!("n = {}: inf P {:.10}, inf CS {:.10}, gap {:.2e}", r.n, r.inf_p, r.inf_cs, r.gap));
        }
        o.write_json("equivalence.json", &reports)?;
    }
    Ok(())
}

fn saddle(p: &crate::config::SaddleParams, master: u64, o: &mut Output, lines: &mut Vec<String>) -> Result<(), CliError> {
    let mu = build_measure(&p.measure)?;
    let mut problem = SaddleProblem::new(p.beta, mu, p.levels, p.domain.clone());
    problem.scenario = p.scenario;
    problem.hadamard = p.hadamard;
    if let Some(r) = p.restarts {
        problem.restarts = r;
    }
    problem.seed = o.seed(master, "saddle");
    let result = outer_sup(&problem)?;
    lines.push(format!("saddle value {:.10} (inner {:.10})", result.value, result.inner_value));
    o.write_json("saddle.json", &result)?;
    if p.residual {
        let r = stationarity_residual(&result, &problem)?;
        lines.push(format!("stationarity residual {:.3e}", r.residual));
        o.write_json("saddle_residual.json", &r)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyRow<'a> {
    id: usize,
    name: &'a str,
    pass: bool,
    detail: &'a str,
}

fn verify(
    p: &crate::config::VerifyParams,
    master: u64,
    o: &mut Output,
    lines: &mut Vec<String>,
    failures: &mut Vec<String>,
) -> Result<(), CliError> {
    let ids = p.criteria.clone().unwrap_or_else(|| (1..=11).collect());
    if let Some(bad) = ids.iter().find(|&&i| !(1..=11).contains(&i)) {
        return Err(config_err("params.criteria", format!("no criterion {bad}")));
    }
    o.seeds.insert("verify".into(), master);
    let mut outcomes = Vec::new();
    for id in ids {
        let out = run_criterion(id, master)?;
        lines.push(out.line());
        if !out.pass {
            failures.push(format!("criterion {id}"));
        }
        outcomes.push(out);
    }
    let rows: Vec<VerifyRow> = outcomes
        .iter()
        .map(|r| VerifyRow {
            id: r.id,
            name: &r.name,
            pass: r.pass,
            detail: &r.detail,
        })
        .collect();
    o.write_csv("verify.csv", &rows)
}
