//! Scenario orchestration: builds and caches solver artifacts, evaluates
//! every (control, stopping) pair on the shared path batch, and emits the
//! result tables.
//!
//! Stopping rules that are trained on paths (deep optimal stopping) are
//! fitted on a separate training batch and reported on the shared
//! evaluation batch, so reported values are out of sample; the
//! `[deepos] eval_on_train` switch restores single-batch reporting.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use anyhow::{anyhow, bail, Context, Result};

use super::config::ExperimentConfig;
use super::report::ReportRow;
use crate::deepos::{train_deepos, DeepOsConfig, StoppingNetSet};
use crate::fd::{solve, FdSolution, GridSpec, SolveMode, SolveOptions};
use crate::model::{
    biomass_peak_step, BiologicalControl, ControlPolicy, FeedingStrategy, ModelParams, ZeroControl,
};
use crate::nn::Mlp;
use crate::paths::PathBatch;
use crate::payoff::{
    evaluate_farm_value, replay_path, EvaluationReport, StopAtHorizon, StopAtStep, StoppingRule,
};
use crate::pinn::{train_value, ControlApproach, PinnConfig, PinnSolution, SamplingBox};

/// One run: resolved configuration, artifact cache, shared path batches.
///
/// The farm value is linear in the initial population, so all internal
/// work uses `h0 = 1` and reported values are rescaled by the true `h0`.
pub struct Session {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    params: ModelParams,
    h0_scale: f64,
    feeding: FeedingStrategy,
    eval_paths: OnceLock<PathBatch>,
    train_paths: OnceLock<PathBatch>,
    fd_cache: Mutex<HashMap<String, std::sync::Arc<FdSolution>>>,
    pinn_cache: Mutex<HashMap<String, std::sync::Arc<PinnSolution>>>,
    deepos_cache: Mutex<HashMap<String, std::sync::Arc<StoppingNetSet>>>,
}

impl Session {
    pub fn new(cfg: ExperimentConfig, out_dir: PathBuf) -> Result<Self> {
        cfg.model.validate()?;
        cfg.grid.validate().map_err(anyhow::Error::msg)?;
        let feeding = cfg.feeding_strategy()?;
        let (params, h0_scale) = cfg.model.normalized_population();
        fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Self {
            cfg,
            out_dir,
            params,
            h0_scale,
            feeding,
            eval_paths: OnceLock::new(),
            train_paths: OnceLock::new(),
            fd_cache: Mutex::new(HashMap::new()),
            pinn_cache: Mutex::new(HashMap::new()),
            deepos_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Normalized model parameters (`h0 = 1`).
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn h0_scale(&self) -> f64 {
        self.h0_scale
    }

    pub fn feeding(&self) -> &FeedingStrategy {
        &self.feeding
    }

    /// The shared evaluation batch (common random numbers).
    pub fn eval_paths(&self) -> &PathBatch {
        self.eval_paths.get_or_init(|| {
            PathBatch::simulate(&self.params, self.cfg.run.n_paths, self.cfg.run.n_steps, self.cfg.run.seed)
        })
    }

    /// The batch stopping rules are trained on.
    pub fn train_paths(&self) -> &PathBatch {
        if self.cfg.deepos.eval_on_train {
            return self.eval_paths();
        }
        self.train_paths.get_or_init(|| {
            PathBatch::simulate(
                &self.params,
                self.cfg.run.n_paths,
                self.cfg.run.n_steps,
                self.cfg.run.seed.wrapping_add(1),
            )
        })
    }

    /// Biomass-peak step on the evaluation grid.
    pub fn tau1_step(&self) -> usize {
        biomass_peak_step(&self.feeding, &self.params, self.eval_paths().dt)
    }

    fn grid_key(&self) -> String {
        let g = &self.cfg.grid;
        format!(
            "{}x{}x{}x{}t{}u{}",
            g.w.n, g.h.n, g.p_f.n, g.p_b.n, g.n_time_steps, g.control.n
        )
    }

    fn sampling_box(&self) -> SamplingBox {
        SamplingBox::from_grid(&self.cfg.grid, &self.params)
    }

    fn fd_solution(&self, mode: SolveMode, horizon: Option<f64>) -> Result<std::sync::Arc<FdSolution>> {
        let mode_tag = match mode {
            SolveMode::VariationalInequality => "vi",
            SolveMode::ControlOnly => "ctrl",
        };
        let horizon_tag = horizon.map(|h| format!("-h{h:.4}")).unwrap_or_default();
        let key = format!("fd_{mode_tag}{horizon_tag}_{}_{}", self.feeding.tag(), self.grid_key());
        if let Some(sol) = self.fd_cache.lock().unwrap().get(&key) {
            return Ok(sol.clone());
        }
        let path = self.out_dir.join(format!("{key}.bin"));
        let sol = if path.exists() {
            std::sync::Arc::new(FdSolution::load(&path)?)
        } else {
            let mut opts = SolveOptions::new(mode);
            opts.horizon = horizon;
            let sol = solve(&self.cfg.grid, &self.params, &self.feeding, &opts)?;
            sol.save(&path)?;
            std::sync::Arc::new(sol)
        };
        self.fd_cache.lock().unwrap().insert(key, sol.clone());
        Ok(sol)
    }

    /// Joint-problem solution (value floored by the harvest reward).
    pub fn fd_vi(&self) -> Result<std::sync::Arc<FdSolution>> {
        self.fd_solution(SolveMode::VariationalInequality, None)
    }

    /// Pure-control solution over the full horizon.
    pub fn fd_control_full(&self) -> Result<std::sync::Arc<FdSolution>> {
        self.fd_solution(SolveMode::ControlOnly, None)
    }

    /// Pure-control solution truncated at the biomass peak.
    pub fn fd_control_truncated(&self) -> Result<std::sync::Arc<FdSolution>> {
        let tau1 = self.tau1_step() as f64 * self.eval_paths().dt;
        self.fd_solution(SolveMode::ControlOnly, Some(tau1))
    }

    fn pinn_config(&self) -> PinnConfig {
        let c = &self.cfg.pinn;
        PinnConfig {
            bounds: self.sampling_box(),
            epochs: c.epochs,
            batch: c.batch,
            fuzzy_eps: c.fuzzy_eps,
            inner_steps: c.inner_steps,
            inner_lr: c.inner_lr,
            control_grid: c.control_grid,
            stop_eps: c.stop_eps,
            lr0: c.lr0,
            hidden: c.hidden.clone(),
            seed: self.cfg.run.seed.wrapping_add(100),
            literal_hinge: c.literal_hinge,
            max_sample_rounds: c.max_sample_rounds,
        }
    }

    /// Trained (or reloaded) network solution for one control approach.
    pub fn pinn(&self, approach: ControlApproach) -> Result<std::sync::Arc<PinnSolution>> {
        let cfg = self.pinn_config();
        let key = format!(
            "pinn_{}_{}_e{}b{}s{}",
            approach.label(),
            self.feeding.tag(),
            cfg.epochs,
            cfg.batch,
            cfg.seed
        );
        if let Some(sol) = self.pinn_cache.lock().unwrap().get(&key) {
            return Ok(sol.clone());
        }
        let value_path = self.out_dir.join(format!("{key}_value.ckpt"));
        let control_path = self.out_dir.join(format!("{key}_control.ckpt"));
        let sol = if value_path.exists() {
            let value_net = Mlp::load(&value_path)?;
            let control_net = if control_path.exists() {
                Some(Mlp::load(&control_path)?)
            } else {
                None
            };
            std::sync::Arc::new(PinnSolution {
                approach,
                value_net,
                control_net,
                bounds: cfg.bounds,
                stop_eps: cfg.stop_eps,
                loss_history: Vec::new(),
            })
        } else {
            let sol = train_value(&cfg, approach, &self.params, &self.feeding)?;
            sol.value_net.save(&value_path)?;
            if let Some(net) = &sol.control_net {
                net.save(&control_path)?;
            }
            let mut csv = String::from("epoch,lr,L_PDE,L_FB,L_T,L_ctrl\n");
            for r in &sol.loss_history {
                let ctrl = r.control.map(|c| c.to_string()).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.epoch, r.lr, r.pde, r.boundary, r.terminal, ctrl
                ));
            }
            fs::write(self.out_dir.join(format!("{key}_loss.csv")), csv)?;
            std::sync::Arc::new(sol)
        };
        self.pinn_cache.lock().unwrap().insert(key, sol.clone());
        Ok(sol)
    }

    fn deepos_config(&self) -> DeepOsConfig {
        let c = &self.cfg.deepos;
        DeepOsConfig {
            stride: c.stride,
            hidden: c.hidden.clone(),
            steps_per_time: c.steps_per_time,
            minibatch: c.minibatch,
            lr: c.lr,
            seed: self.cfg.run.seed.wrapping_add(200),
            bounds: self.sampling_box(),
        }
    }

    /// Deep-optimal-stopping rule trained for `policy` (cache key `tag`).
    pub fn deepos_rule(
        &self,
        policy: &dyn ControlPolicy,
        tag: &str,
    ) -> Result<std::sync::Arc<StoppingNetSet>> {
        let cfg = self.deepos_config();
        let key = format!(
            "deepos_{tag}_{}_k{}n{}s{}",
            self.feeding.tag(),
            cfg.stride,
            cfg.steps_per_time,
            cfg.seed
        );
        if let Some(rule) = self.deepos_cache.lock().unwrap().get(&key) {
            return Ok(rule.clone());
        }
        let dir = self.out_dir.join(&key);
        let rule = if dir.join("meta.toml").exists() {
            std::sync::Arc::new(load_stopping_nets(&dir)?)
        } else {
            let trained = train_deepos(self.train_paths(), policy, &self.params, &self.feeding, &cfg)
                .map_err(|e| anyhow!("deep optimal stopping training failed: {e}"))?;
            if !trained.improved {
                eprintln!(
                    "note: learned stopping rule ({key}) trails the best fixed time in sample: \
                     {:.5} < {:.5} at step {}",
                    trained.train_value, trained.best_fixed_value, trained.best_fixed_step
                );
            }
            save_stopping_nets(&dir, &trained.rule)?;
            std::sync::Arc::new(trained.rule)
        };
        self.deepos_cache.lock().unwrap().insert(key, rule.clone());
        Ok(rule)
    }

    /// Evaluates a strategy pair on the shared batch (population-rescaled
    /// values are applied by [`ReportRow`]).
    pub fn evaluate(
        &self,
        policy: &dyn ControlPolicy,
        rule: &dyn StoppingRule,
    ) -> Result<EvaluationReport> {
        Ok(evaluate_farm_value(self.eval_paths(), policy, rule, &self.params, &self.feeding)?)
    }

    fn row(&self, scenario: &str, report: &EvaluationReport) -> ReportRow {
        ReportRow::new(scenario, report, self.h0_scale)
    }
}

fn save_stopping_nets(dir: &std::path::Path, rule: &StoppingNetSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, net) in rule.nets().iter().enumerate() {
        net.save(&dir.join(format!("net_{i:04}.ckpt")))?;
    }
    let steps: Vec<String> = rule.decision_steps().iter().map(|s| s.to_string()).collect();
    fs::write(
        dir.join("meta.toml"),
        format!("decision_steps = [{}]\n", steps.join(", ")),
    )?;
    Ok(())
}

fn load_stopping_nets(dir: &std::path::Path) -> Result<StoppingNetSet> {
    let meta: toml::Value = toml::from_str(&fs::read_to_string(dir.join("meta.toml"))?)?;
    let steps: Vec<usize> = meta
        .get("decision_steps")
        .and_then(|v| v.as_array())
        .context("meta.toml missing decision_steps")?
        .iter()
        .map(|v| v.as_integer().map(|i| i as usize).context("bad step"))
        .collect::<Result<_>>()?;
    let mut nets = Vec::with_capacity(steps.len().saturating_sub(1));
    for i in 0..steps.len() - 1 {
        nets.push(Mlp::load(&dir.join(format!("net_{i:04}.ckpt")))?);
    }
    Ok(StoppingNetSet::from_parts(nets, steps))
}

/// The benchmark matrix: {u ≡ 0, u ≡ f} × {horizon, biomass peak,
/// learned stopping}.
pub fn run_benchmarks(session: &Session) -> Result<Vec<ReportRow>> {
    let s = session.feeding().clone();
    let bio = BiologicalControl(s);
    let tau1 = session.tau1_step();
    let n_steps = session.eval_paths().n_steps;
    let mut rows = Vec::new();
    for (utag, policy) in [("u0", &ZeroControl as &dyn ControlPolicy), ("uf", &bio)] {
        let rep = session.evaluate(policy, &StopAtStep(n_steps))?;
        rows.push(session.row(&format!("bench-tau0-{utag}"), &rep));
    }
    for (utag, policy) in [("u0", &ZeroControl as &dyn ControlPolicy), ("uf", &bio)] {
        let rep = session.evaluate(policy, &StopAtStep(tau1))?;
        rows.push(session.row(&format!("bench-tau1-{utag}"), &rep));
    }
    for (utag, policy) in [("u0", &ZeroControl as &dyn ControlPolicy), ("uf", &bio)] {
        let rule = session.deepos_rule(policy, &format!("bench-{utag}"))?;
        let rep = session.evaluate(policy, rule.as_ref())?;
        rows.push(session.row(&format!("bench-tau2-{utag}"), &rep));
    }
    Ok(rows)
}

/// The six solver scenarios: pure control over the horizon, its
/// combinations with fixed and learned stopping, the truncated-horizon
/// control, and the joint solution.
pub fn run_fd_scenarios(session: &Session) -> Result<Vec<ReportRow>> {
    let tau1 = session.tau1_step();
    let hat = session.fd_control_full()?;
    let tilde = session.fd_control_truncated()?;
    let vi = session.fd_vi()?;
    let mut rows = Vec::new();

    let rep = session.evaluate(&hat.policy(), &StopAtHorizon)?;
    rows.push(session.row("fd-1", &rep));
    let rep = session.evaluate(&hat.policy(), &StopAtStep(tau1))?;
    rows.push(session.row("fd-2", &rep));
    let rule = session.deepos_rule(&hat.policy(), "fdhat")?;
    let rep = session.evaluate(&hat.policy(), rule.as_ref())?;
    rows.push(session.row("fd-3", &rep));
    let rep = session.evaluate(&tilde.policy(), &StopAtStep(tau1))?;
    rows.push(session.row("fd-4", &rep));
    let rule = session.deepos_rule(&tilde.policy(), "fdtilde")?;
    let rep = session.evaluate(&tilde.policy(), rule.as_ref())?;
    rows.push(session.row("fd-5", &rep));
    let rep = session.evaluate(&vi.policy(), &vi.threshold_stopping(session.cfg.run.fd_stop_eps))?;
    rows.push(session.row("fd-6", &rep));
    Ok(rows)
}

/// The joint-optimum value used in the difference columns.
pub fn fd6_value(session: &Session) -> Result<f64> {
    let vi = session.fd_vi()?;
    let rep = session.evaluate(&vi.policy(), &vi.threshold_stopping(session.cfg.run.fd_stop_eps))?;
    Ok(session.h0_scale() * rep.mean)
}

/// Network-solver rows: the three control approaches under threshold
/// stopping (`refined = false`) or refined by deep optimal stopping
/// (`refined = true`), with the gap to the joint optimum.
pub fn run_pinn_tables(session: &Session, refined: bool) -> Result<Vec<ReportRow>> {
    let reference = fd6_value(session)?;
    let mut rows = Vec::new();
    for (i, approach) in [
        ControlApproach::Feedback,
        ControlApproach::MeanError,
        ControlApproach::HingeGrid,
    ]
    .into_iter()
    .enumerate()
    {
        let sol = session.pinn(approach)?;
        let policy = sol.policy(session.params(), session.feeding());
        let (rep, id) = if refined {
            let rule = session.deepos_rule(&policy, &format!("pinn-{}", approach.label()))?;
            (
                session.evaluate(&policy, rule.as_ref())?,
                format!("pinn-deepos-{}", i + 1),
            )
        } else {
            (
                session.evaluate(&policy, &sol.threshold_stopping(session.params()))?,
                format!("pinn-{}", i + 1),
            )
        };
        rows.push(session.row(&id, &rep).with_diff(reference));
    }
    Ok(rows)
}

/// Appendix table for the session's feeding variant: the biological
/// benchmark with learned stopping, the grid solver, and the three
/// network approaches refined by deep optimal stopping.
pub fn run_appendix(session: &Session) -> Result<Vec<ReportRow>> {
    let tag = session.feeding().tag();
    let bio = BiologicalControl(session.feeding().clone());
    let mut rows = Vec::new();

    let rule = session.deepos_rule(&bio, "bench-uf")?;
    let rep = session.evaluate(&bio, rule.as_ref())?;
    rows.push(session.row(&format!("{tag}-bench"), &rep));

    let reference = fd6_value(session)?;
    let vi = session.fd_vi()?;
    let rep = session.evaluate(&vi.policy(), &vi.threshold_stopping(session.cfg.run.fd_stop_eps))?;
    rows.push(session.row(&format!("{tag}-fd"), &rep));

    for (i, approach) in [
        ControlApproach::Feedback,
        ControlApproach::MeanError,
        ControlApproach::HingeGrid,
    ]
    .into_iter()
    .enumerate()
    {
        let sol = session.pinn(approach)?;
        let policy = sol.policy(session.params(), session.feeding());
        let rule = session.deepos_rule(&policy, &format!("pinn-{}", approach.label()))?;
        let rep = session.evaluate(&policy, rule.as_ref())?;
        rows.push(session.row(&format!("{tag}-u{}", i + 1), &rep).with_diff(reference));
    }
    Ok(rows)
}

/// Replays one path of a scenario and writes the figure CSV
/// (`t,w,h,pF,pB,u,running_value,stopped`).
pub fn emit_trajectory<W: Write>(session: &Session, scenario: &str, path: usize, mut out: W) -> Result<()> {
    if path >= session.eval_paths().n_paths {
        bail!(
            "path index {path} out of range (batch has {} paths)",
            session.eval_paths().n_paths
        );
    }
    let bio = BiologicalControl(session.feeding().clone());
    let tau1 = session.tau1_step();
    let n_steps = session.eval_paths().n_steps;

    // Each scenario id maps onto its (policy, stopping rule) pair.
    let rows = match scenario {
        "bench-tau0-u0" => replay(session, path, &ZeroControl, &StopAtStep(n_steps))?,
        "bench-tau0-uf" => replay(session, path, &bio, &StopAtStep(n_steps))?,
        "bench-tau1-u0" => replay(session, path, &ZeroControl, &StopAtStep(tau1))?,
        "bench-tau1-uf" => replay(session, path, &bio, &StopAtStep(tau1))?,
        "bench-tau2-u0" => {
            let rule = session.deepos_rule(&ZeroControl, "bench-u0")?;
            replay(session, path, &ZeroControl, rule.as_ref())?
        }
        "bench-tau2-uf" => {
            let rule = session.deepos_rule(&bio, "bench-uf")?;
            replay(session, path, &bio, rule.as_ref())?
        }
        "fd-1" => replay(session, path, &session.fd_control_full()?.policy(), &StopAtHorizon)?,
        "fd-2" => replay(session, path, &session.fd_control_full()?.policy(), &StopAtStep(tau1))?,
        "fd-3" => {
            let hat = session.fd_control_full()?;
            let rule = session.deepos_rule(&hat.policy(), "fdhat")?;
            replay(session, path, &hat.policy(), rule.as_ref())?
        }
        "fd-4" => replay(session, path, &session.fd_control_truncated()?.policy(), &StopAtStep(tau1))?,
        "fd-5" => {
            let tilde = session.fd_control_truncated()?;
            let rule = session.deepos_rule(&tilde.policy(), "fdtilde")?;
            replay(session, path, &tilde.policy(), rule.as_ref())?
        }
        "fd-6" => {
            let vi = session.fd_vi()?;
            let rule = vi.threshold_stopping(session.cfg.run.fd_stop_eps);
            replay(session, path, &vi.policy(), &rule)?
        }
        other => {
            let (kind, idx) = parse_pinn_id(other)?;
            let approach = [
                ControlApproach::Feedback,
                ControlApproach::MeanError,
                ControlApproach::HingeGrid,
            ][idx - 1];
            let sol = session.pinn(approach)?;
            let policy = sol.policy(session.params(), session.feeding());
            match kind {
                PinnRowKind::Threshold => {
                    let rule = sol.threshold_stopping(session.params());
                    replay(session, path, &policy, &rule)?
                }
                PinnRowKind::Refined => {
                    let rule = session.deepos_rule(&policy, &format!("pinn-{}", approach.label()))?;
                    replay(session, path, &policy, rule.as_ref())?
                }
            }
        }
    };

    writeln!(out, "t,w,h,pF,pB,u,running_value,stopped")?;
    for r in rows {
        let u = if r.control.is_finite() {
            r.control.to_string()
        } else {
            String::new()
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.w,
            r.h,
            r.p_f,
            r.p_b,
            u,
            session.h0_scale() * r.running_value,
            u8::from(r.stopped)
        )?;
    }
    Ok(())
}

enum PinnRowKind {
    Threshold,
    Refined,
}

fn parse_pinn_id(id: &str) -> Result<(PinnRowKind, usize)> {
    if let Some(idx) = id.strip_prefix("pinn-deepos-") {
        let i: usize = idx.parse()?;
        if (1..=3).contains(&i) {
            return Ok((PinnRowKind::Refined, i));
        }
    }
    if let Some(idx) = id.strip_prefix("pinn-") {
        let i: usize = idx.parse()?;
        if (1..=3).contains(&i) {
            return Ok((PinnRowKind::Threshold, i));
        }
    }
    bail!("unknown scenario id {id:?}")
}

fn replay(
    session: &Session,
    path: usize,
    policy: &dyn ControlPolicy,
    rule: &dyn StoppingRule,
) -> Result<Vec<crate::payoff::TrajectoryRow>> {
    Ok(replay_path(session.eval_paths(), path, policy, rule, session.params(), session.feeding())?)
}

/// Convenience wrapper used by the reproduce command.
pub fn table_rows(session: &Session, table: u32) -> Result<Vec<ReportRow>> {
    match table {
        2 => run_benchmarks(session),
        4 => run_fd_scenarios(session),
        5 => run_pinn_tables(session, false),
        6 => run_pinn_tables(session, true),
        7 | 8 | 9 => {
            let expected = match table {
                7 => "efr",
                8 => "lfr",
                _ => "sfr",
            };
            if session.feeding().tag() != expected {
                bail!(
                    "table {table} needs the {expected} feeding variant; configure [feeding] accordingly \
                     (current: {})",
                    session.feeding().tag()
                );
            }
            run_appendix(session)
        }
        other => bail!("no table {other}; choose one of 2, 4, 5, 6, 7, 8, 9"),
    }
}

/// Grid signature used in artifact names (exposed for tests).
pub fn grid_signature(grid: &GridSpec) -> String {
    format!(
        "{}x{}x{}x{}t{}u{}",
        grid.w.n, grid.h.n, grid.p_f.n, grid.p_b.n, grid.n_time_steps, grid.control.n
    )
}
