//! Outer design loop: evaluate, update with MMA, tighten the projection.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{project, project_derivative, DensityField};
use crate::error::{Error, Result};
use crate::objective::{DesignProblem, Objective};
use crate::optimizer::mma::{Constraints, MmaParams, MmaState};

/// Projection sharpness continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSchedule {
    pub initial: f64,
    pub multiplier: f64,
    /// Iterations spent at each sharpness before it is raised.
    pub period: usize,
    pub max: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            initial: 4.0,
            multiplier: 2.0,
            period: 50,
            max: 64.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub max_iterations: usize,
    pub beta: BetaSchedule,
    /// Stop once the largest design change drops below this at maximal beta.
    pub tolerance: f64,
    /// Raise beta early when the objective changed by less than
    /// `stagnation_tolerance` (relative) over this many iterations.
    pub stagnation_window: usize,
    pub stagnation_tolerance: f64,
    /// Upper bound on the mean physical density, if any.
    pub volume_fraction: Option<f64>,
    pub initial_density: f64,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub mma: MmaParams,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            beta: BetaSchedule::default(),
            tolerance: 1e-3,
            stagnation_window: 10,
            stagnation_tolerance: 1e-3,
            volume_fraction: None,
            initial_density: 0.5,
            checkpoint_every: 10,
            mma: MmaParams::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.beta;
        if !(b.multiplier > 1.0) {
            return Err(Error::Config(format!("beta multiplier {} must exceed 1", b.multiplier)));
        }
        if !(b.initial >= 1.0 && b.max >= b.initial) || b.period == 0 {
            return Err(Error::Config(format!("invalid beta schedule {b:?}")));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!("tolerance {} must be positive", self.tolerance)));
        }
        if !(0.0..=1.0).contains(&self.initial_density) {
            return Err(Error::Config(format!("initial density {} not in [0, 1]", self.initial_density)));
        }
        if let Some(v) = self.volume_fraction {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("volume fraction {v} not in (0, 1]")));
            }
        }
        self.mma.validate()
    }
}

/// One row of the convergence history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub phi: f64,
    pub max_gradient: f64,
    pub beta: f64,
    pub per_frequency_phi: Vec<f64>,
    /// Largest absolute change of the design variables in the update that
    /// followed this evaluation.
    pub change: f64,
}

impl IterationRecord {
    pub fn log_line(&self) -> String {
        format!("{},{:e},{:e},{}", self.iter, self.phi, self.max_gradient, self.beta)
    }
}

pub const LOG_HEADER: &str = "iter,phi,max_gradient,beta";

/// Convergence log text for a history.
pub fn format_log(history: &[IterationRecord]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&r.log_line());
        s.push('\n');
    }
    s
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Completed iterations.
    pub iteration: usize,
    pub beta: f64,
    /// Iteration at which the current beta was set.
    pub stage_start: usize,
    pub phi_scale: f64,
    pub mma: MmaState<f64>,
    pub history: Vec<IterationRecord>,
    /// Lowest-objective feasible iterate seen at the maximal beta.
    #[serde(default)]
    pub best: Option<BestIterate>,
    #[serde(skip)]
    pub xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestIterate {
    pub iteration: usize,
    pub phi: f64,
    pub xi: Vec<f64>,
}

pub const CHECKPOINT_DENSITY: &str = "checkpoint_density.txt";
pub const CHECKPOINT_STATE: &str = "checkpoint_state.json";

impl Checkpoint {
    /// Writes the design variables as a grid matrix and the rest as JSON.
    pub fn save(&self, problem: &DesignProblem, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let field = DensityField::from_design_vars(&problem.domain, &self.xi)?;
        field.write_text(&dir.join(CHECKPOINT_DENSITY))?;
        let state = dir.join(CHECKPOINT_STATE);
        let json = serde_json::to_string(self).map_err(|e| Error::parse("checkpoint", e.to_string()))?;
        crate::io::write_string(&state, &json)?;
        Ok(state)
    }

    /// Loads from the state file or from the directory holding both files.
    pub fn load(problem: &DesignProblem, path: &Path) -> Result<Self> {
        let (dir, state) = if path.is_dir() {
            (path.to_path_buf(), path.join(CHECKPOINT_STATE))
        } else {
            (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
        };
        let text = fs::read_to_string(&state)?;
        let mut cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::parse(state.display().to_string(), e.to_string()))?;
        let field = DensityField::read_text(&dir.join(CHECKPOINT_DENSITY))?;
        field.check_domain(&problem.domain)?;
        cp.xi = field.design_vars(&problem.domain);
        if cp.mma.low.len() != cp.xi.len() {
            return Err(Error::ShapeMismatch {
                context: "checkpoint optimizer state",
                expected: cp.xi.len(),
                actual: cp.mma.low.len(),
            });
        }
        Ok(cp)
    }
}

/// Hooks called by [`run_design`] as it progresses.
pub trait DesignObserver {
    fn on_iteration(&mut self, _record: &IterationRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

impl DesignObserver for () {}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub xi: Vec<f64>,
    pub physical: DensityField<f64>,
    pub beta: f64,
    pub history: Vec<IterationRecord>,
    /// Objective of the returned design, `None` after zero iterations.
    pub objective: Option<Objective>,
    pub converged: bool,
    /// Iteration whose design is returned: the last one, or an earlier
    /// iterate at the maximal beta with a lower objective.
    pub selected_iteration: usize,
}

fn volume_constraint(problem: &DesignProblem, xi: &[f64], beta: f64, bound: f64) -> Constraints<f64> {
    let f = problem.filter.apply(xi);
    let n = f.len() as f64;
    let eta = problem.eta;
    let value = f.iter().map(|&x| project(x.clamp(0.0, 1.0), beta, eta)).sum::<f64>() / (n * bound) - 1.0;
    let d: Vec<f64> = f
        .iter()
        .map(|&x| project_derivative(x.clamp(0.0, 1.0), beta, eta) / (n * bound))
        .collect();
    Constraints {
        values: vec![value],
        gradients: vec![problem.filter.apply_transpose(&d)],
    }
}

fn stagnated(history: &[IterationRecord], stage_start: usize, cfg: &LoopConfig) -> bool {
    let w = cfg.stagnation_window;
    if w == 0 || history.len() < stage_start + w + 1 {
        return false;
    }
    let last = history[history.len() - 1].phi;
    let then = history[history.len() - 1 - w].phi;
    (last - then).abs() <= cfg.stagnation_tolerance * then.abs()
}

/// Runs the optimization from the uniform initial design, or from a
/// checkpoint.
pub fn run_design(
    problem: &DesignProblem,
    cfg: &LoopConfig,
    resume: Option<Checkpoint>,
    observer: &mut dyn DesignObserver,
) -> Result<DesignResult> {
    cfg.validate()?;
    let n = problem.design_len();
    let (lo, hi) = (vec![0.0; n], vec![1.0; n]);
    let mut cp = match resume {
        Some(cp) => {
            if cp.xi.len() != n {
                return Err(Error::ShapeMismatch {
                    context: "checkpoint design",
                    expected: n,
                    actual: cp.xi.len(),
                });
            }
            cp
        }
        None => Checkpoint {
            iteration: 0,
            beta: cfg.beta.initial,
            stage_start: 0,
            phi_scale: 0.0,
            mma: MmaState::new(n, cfg.mma),
            history: Vec::new(),
            best: None,
            xi: vec![cfg.initial_density; n],
        },
    };
    let mut converged = false;
    while cp.iteration < cfg.max_iterations {
        let it = cp.iteration;
        let wrap = |e: Error| Error::Iteration {
            iteration: it,
            source: Box::new(e),
        };
        let eval = problem.evaluate(&cp.xi, cp.beta, true).map_err(wrap)?;
        let grad = eval.gradient.expect("gradient requested");
        let phi = eval.objective.phi;
        if !phi.is_finite() {
            return Err(wrap(Error::Optimizer(format!("objective is {phi}"))));
        }
        if cp.phi_scale == 0.0 {
            cp.phi_scale = if phi > 0.0 { phi } else { 1.0 };
        }
        let df0: Vec<f64> = grad.dphi_dxi.iter().map(|g| g / cp.phi_scale).collect();
        let cons = match cfg.volume_fraction {
            Some(v) => volume_constraint(problem, &cp.xi, cp.beta, v),
            None => Constraints::none(),
        };
        let feasible = cons.values.iter().all(|&g| g <= 0.0);
        if cp.beta >= cfg.beta.max && feasible && cp.best.as_ref().is_none_or(|b| phi < b.phi) {
            cp.best = Some(BestIterate {
                iteration: it,
                phi,
                xi: cp.xi.clone(),
            });
        }
        let next = cp.mma.update(&cp.xi, (&lo, &hi), &df0, &cons).map_err(wrap)?;
        let change = next
            .iter()
            .zip(&cp.xi)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let record = IterationRecord {
            iter: it,
            phi,
            max_gradient: grad.dphi_dxi.iter().fold(0.0f64, |a, g| a.max(g.abs())),
            beta: cp.beta,
            per_frequency_phi: eval.objective.per_frequency_phi.clone(),
            change,
        };
        log::info!("iter {it} phi {phi:.6e} beta {} change {change:.3e}", cp.beta);
        observer.on_iteration(&record)?;
        cp.history.push(record);
        cp.xi = next;
        cp.iteration += 1;

        let at_max = cp.beta >= cfg.beta.max;
        if at_max && change < cfg.tolerance {
            converged = true;
        } else if !at_max
            && (cp.iteration - cp.stage_start >= cfg.beta.period
                || change < cfg.tolerance
                || stagnated(&cp.history, cp.stage_start, cfg))
        {
            cp.beta = (cp.beta * cfg.beta.multiplier).min(cfg.beta.max);
            cp.stage_start = cp.iteration;
            log::info!("beta raised to {}", cp.beta);
        }
        if converged || (cfg.checkpoint_every > 0 && cp.iteration % cfg.checkpoint_every == 0) {
            observer.on_checkpoint(&cp)?;
        }
        if converged {
            break;
        }
    }
    let final_eval = |xi: &[f64]| -> Result<(DensityField<f64>, Objective)> {
        let physical = problem.physical_density(xi, cp.beta)?;
        let (obj, _) = problem.evaluate_physical(&physical, false).map_err(|e| Error::Iteration {
            iteration: cp.iteration,
            source: Box::new(e),
        })?;
        Ok((physical, obj))
    };
    if cp.iteration == 0 {
        return Ok(DesignResult {
            physical: problem.physical_density(&cp.xi, cp.beta)?,
            xi: cp.xi,
            beta: cp.beta,
            history: cp.history,
            objective: None,
            converged,
            selected_iteration: 0,
        });
    }
    let (mut physical, mut objective) = final_eval(&cp.xi)?;
    let mut xi = cp.xi;
    let mut selected_iteration = cp.iteration;
    if let Some(best) = cp.best.filter(|b| cp.beta >= cfg.beta.max && b.phi < objective.phi) {
        (physical, objective) = final_eval(&best.xi)?;
        xi = best.xi;
        selected_iteration = best.iteration;
    }
    Ok(DesignResult {
        xi,
        physical,
        beta: cp.beta,
        history: cp.history,
        objective: Some(objective),
        converged,
        selected_iteration,
    })
}
