//! Risk-curve experiments on the Gaussian examples: maximum likelihood,
//! minimax and minimax-deviation strategies against the per-model Bayes risk.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{
    build_example1_capped, build_example2_capped, example1_defaults, example2_defaults,
    finest_fitting_cells, Example1Grids, ExampleInstance, ExampleLearning, ExampleMeta, GridSpec,
    LearnMode,
};
use crate::model::{multiset_count, LearningData, Strategy, DEFAULT_ENUMERATION_CAP};
use crate::optimizer::{SolveReport, SolverConfig};
use crate::risk::{fmt_sig, RiskEngine};
use crate::simulate::{
    estimate_risk_mc, DecisionRule, LearnSampler, PosteriorKind, PosteriorRule, RebinnedRule,
    StrategyRule,
};
use crate::strategies::{ml_strategy, scaled_minimax_strategy, Preset};

/// Largest `|Z|` solved exactly in automatic mode.
pub const DEFAULT_SOLVE_BUDGET: u128 = 5_000;
pub const DEFAULT_MC_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Enumerate the learning data at the requested grid.
    Exact,
    /// Solve on a learn grid that fits the budget; estimate curves by
    /// sampling at the requested grid.
    Mc,
    /// `Exact` when the requested grid fits the budget, otherwise `Mc`.
    Auto,
}

impl EvalMode {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exact" => Some(EvalMode::Exact),
            "mc" => Some(EvalMode::Mc),
            "auto" => Some(EvalMode::Auto),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleConfig {
    pub example: u8,
    pub n: usize,
    pub theta_cells: Option<usize>,
    /// Example 1 only; Example 2's models are priors on `[0, 1]`.
    pub theta_range: Option<(f64, f64)>,
    /// Overrides every signal axis.
    pub signal_cells: Option<usize>,
    pub signal_range: Option<(f64, f64)>,
    pub learn_cells: Option<usize>,
    pub solver: SolverConfig,
    pub seed: u64,
    pub samples: usize,
    pub mode: EvalMode,
    pub solve_budget: u128,
}

impl ExampleConfig {
    pub fn new(example: u8, n: usize) -> Self {
        Self {
            example,
            n,
            theta_cells: None,
            theta_range: None,
            signal_cells: None,
            signal_range: None,
            learn_cells: None,
            solver: SolverConfig::default(),
            seed: 0,
            samples: DEFAULT_MC_SAMPLES,
            mode: EvalMode::Auto,
            solve_budget: DEFAULT_SOLVE_BUDGET,
        }
    }
}

/// The four curves, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub theta: Vec<f64>,
    pub ml: Vec<f64>,
    pub minimax: Vec<f64>,
    pub mindev: Vec<f64>,
    pub bayes: Vec<f64>,
}

pub const CSV_HEADER: &str = "theta,risk_ml,risk_minimax,risk_mindev,bayes_risk";

impl Curves {
    pub fn series(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("risk_ml", &self.ml),
            ("risk_minimax", &self.minimax),
            ("risk_mindev", &self.mindev),
            ("bayes_risk", &self.bayes),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for i in 0..self.theta.len() {
            let row = [
                self.theta[i],
                self.ml[i],
                self.minimax[i],
                self.mindev[i],
                self.bayes[i],
            ];
            let cells: Vec<String> = row.iter().map(|v| fmt_sig(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn max_dev(&self, curve: &[f64]) -> f64 {
        curve
            .iter()
            .zip(&self.bayes)
            .map(|(r, b)| r - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_dev_ml(&self) -> f64 {
        self.max_dev(&self.ml)
    }

    pub fn max_dev_minimax(&self) -> f64 {
        self.max_dev(&self.minimax)
    }

    pub fn max_dev_mindev(&self) -> f64 {
        self.max_dev(&self.mindev)
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub config: ExampleConfig,
    pub instance: ExampleMeta,
    pub mode: EvalMode,
    /// Learn cells of the instance the strategies were solved on.
    pub solve_learn_cells: Option<usize>,
    pub minimax: SolveReport,
    pub mindev: SolveReport,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExampleRun {
    pub curves: Curves,
    pub meta: RunMeta,
}

impl ExampleRun {
    pub fn converged(&self) -> bool {
        self.meta.minimax.converged && self.meta.mindev.converged
    }
}

fn grid_or(
    default: (f64, f64, usize),
    range: Option<(f64, f64)>,
    cells: Option<usize>,
) -> Result<GridSpec> {
    let (lo, hi) = range.unwrap_or((default.0, default.1));
    GridSpec::new(lo, hi, cells.unwrap_or(default.2))
}

fn build(cfg: &ExampleConfig, learn_cells: usize, mode: LearnMode) -> Result<ExampleInstance> {
    match cfg.example {
        1 => {
            let d = Example1Grids::default();
            let grids = Example1Grids {
                theta_range: cfg.theta_range.unwrap_or(d.theta_range),
                theta_cells: cfg.theta_cells.unwrap_or(d.theta_cells),
                x1: grid_or(
                    example1_defaults::X1_GRID,
                    cfg.signal_range,
                    cfg.signal_cells,
                )?,
                x2: grid_or(
                    example1_defaults::X2_GRID,
                    cfg.signal_range,
                    cfg.signal_cells,
                )?,
                learn: grid_or(example1_defaults::LEARN_GRID, None, Some(learn_cells))?,
            };
            build_example1_capped(cfg.n, &grids, true, DEFAULT_ENUMERATION_CAP)
        }
        2 => {
            if cfg.theta_range.is_some() {
                return Err(Error::arg(
                    "Example 2 models are priors on [0, 1]; the model range is fixed",
                ));
            }
            let signal = grid_or(
                example2_defaults::SIGNAL_GRID,
                cfg.signal_range,
                cfg.signal_cells,
            )?;
            let learn = grid_or(example2_defaults::LEARN_GRID, None, Some(learn_cells))?;
            build_example2_capped(
                cfg.n,
                cfg.theta_cells.unwrap_or(example2_defaults::THETA_CELLS),
                &signal,
                &learn,
                mode,
                DEFAULT_ENUMERATION_CAP,
            )
        }
        other => Err(Error::arg(format!(
            "unknown example {other}; expected 1 or 2"
        ))),
    }
}

fn default_learn_cells(example: u8) -> usize {
    if example == 1 {
        example1_defaults::LEARN_GRID.2
    } else {
        example2_defaults::LEARN_GRID.2
    }
}

/// The enumerated instance an exact run of `cfg` would solve.
pub fn build_instance(cfg: &ExampleConfig) -> Result<ExampleInstance> {
    let learn_cells = cfg
        .learn_cells
        .unwrap_or_else(|| default_learn_cells(cfg.example));
    build(cfg, learn_cells, LearnMode::Multiset)
}

struct Solved {
    ml: Strategy,
    minimax: (Strategy, SolveReport),
    mindev: (Strategy, SolveReport),
}

fn solve_all(inst: &ExampleInstance, solver: &SolverConfig) -> Result<Solved> {
    let ld = inst.learning_data()?;
    let (obj, loss) = (&inst.object, &inst.loss);
    let profile = |p: Preset| p.profile(obj, loss);
    Ok(Solved {
        ml: ml_strategy(obj, ld, loss)?,
        minimax: scaled_minimax_strategy(&profile(Preset::Minimax)?, obj, ld, loss, solver)?,
        mindev: scaled_minimax_strategy(&profile(Preset::Mindev)?, obj, ld, loss, solver)?,
    })
}

fn mc_curve(
    rule: &dyn DecisionRule,
    inst: &ExampleInstance,
    learn: LearnSampler<'_>,
    cfg: &ExampleConfig,
) -> Result<Vec<f64>> {
    (0..inst.object.n_models())
        .map(|t| {
            estimate_risk_mc(
                rule,
                t,
                &inst.object,
                learn,
                &inst.loss,
                cfg.samples,
                cfg.seed,
            )
            .map(|e| e.mean)
        })
        .collect()
}

/// Maps each fine learn cell to the coarse cell containing its center.
fn rebin_map(fine: &GridSpec, coarse: &GridSpec) -> Vec<usize> {
    (0..fine.cells)
        .map(|g| coarse.cell_of(fine.center(g)))
        .collect()
}

/// Builds an example, solves the three strategies and computes the curves.
pub fn run_example(cfg: &ExampleConfig) -> Result<ExampleRun> {
    let learn_cells = cfg
        .learn_cells
        .unwrap_or_else(|| default_learn_cells(cfg.example));
    // only Example 2 has learning data that grows with n
    let z_size = if cfg.example == 2 && cfg.n > 0 {
        multiset_count(learn_cells, cfg.n)
    } else {
        learn_cells as u128
    };
    let mode = match cfg.mode {
        EvalMode::Auto if z_size > cfg.solve_budget => EvalMode::Mc,
        EvalMode::Auto => EvalMode::Exact,
        m => m,
    };
    let mut notes = Vec::new();

    if mode == EvalMode::Exact {
        let inst = build(cfg, learn_cells, LearnMode::Multiset)?;
        let solved = solve_all(&inst, &cfg.solver)?;
        let ld = inst.learning_data()?;
        let engine = RiskEngine::new(&inst.object, ld, &inst.loss)?;
        let curves = Curves {
            theta: inst.meta.theta.clone(),
            ml: engine.risks(&solved.ml)?,
            minimax: engine.risks(&solved.minimax.0)?,
            mindev: engine.risks(&solved.mindev.0)?,
            bayes: engine.model_bayes_risks(),
        };
        return Ok(ExampleRun {
            curves,
            meta: RunMeta {
                config: cfg.clone(),
                instance: inst.meta,
                mode,
                solve_learn_cells: Some(learn_cells),
                minimax: solved.minimax.1,
                mindev: solved.mindev.1,
                notes,
            },
        });
    }

    // sampled evaluation
    let fine = build(cfg, learn_cells, LearnMode::Mc)?;
    let solve_cells = if cfg.example == 2 && cfg.n > 0 {
        let c = finest_fitting_cells(cfg.n, learn_cells, cfg.solve_budget);
        if c < learn_cells {
            notes.push(format!(
                "{} learning samples over {} cells give {} values, above the solve budget of {}; \
                 strategies were solved on {} learn cells and risk curves estimated by Monte \
                 Carlo with {} samples per model (seed {})",
                cfg.n, learn_cells, z_size, cfg.solve_budget, c, cfg.samples, cfg.seed
            ));
        }
        c
    } else {
        learn_cells
    };
    let coarse = build(cfg, solve_cells, LearnMode::Multiset)?;
    let solved = solve_all(&coarse, &cfg.solver)?;
    let coarse_ld: &LearningData = coarse.learning_data()?;

    let curves = match &fine.learning {
        ExampleLearning::Sampled(src) => {
            let learn = LearnSampler::Iid(src);
            let map = rebin_map(&fine.meta.learn_grid, &coarse.meta.learn_grid);
            let ml = PosteriorRule::new(
                PosteriorKind::MaxLikelihood,
                &fine.object,
                &fine.loss,
                learn,
            )?;
            let minimax = RebinnedRule::new(&solved.minimax.0, coarse_ld, map.clone())?;
            let mindev = RebinnedRule::new(&solved.mindev.0, coarse_ld, map)?;
            Curves {
                theta: fine.meta.theta.clone(),
                ml: mc_curve(&ml, &fine, learn, cfg)?,
                minimax: mc_curve(&minimax, &fine, learn, cfg)?,
                mindev: mc_curve(&mindev, &fine, learn, cfg)?,
                bayes: bayes_floor(&fine)?,
            }
        }
        ExampleLearning::Enumerated(ld) => {
            let learn = LearnSampler::for_learning(ld);
            let rules = [
                StrategyRule::new(&solved.ml, ld)?,
                StrategyRule::new(&solved.minimax.0, ld)?,
                StrategyRule::new(&solved.mindev.0, ld)?,
            ];
            Curves {
                theta: fine.meta.theta.clone(),
                ml: mc_curve(&rules[0], &fine, learn, cfg)?,
                minimax: mc_curve(&rules[1], &fine, learn, cfg)?,
                mindev: mc_curve(&rules[2], &fine, learn, cfg)?,
                bayes: bayes_floor(&fine)?,
            }
        }
    };
    Ok(ExampleRun {
        curves,
        meta: RunMeta {
            config: cfg.clone(),
            instance: fine.meta,
            mode,
            solve_learn_cells: Some(solve_cells),
            minimax: solved.minimax.1,
            mindev: solved.mindev.1,
            notes,
        },
    })
}

fn bayes_floor(inst: &ExampleInstance) -> Result<Vec<f64>> {
    Ok((0..inst.object.n_models())
        .map(|t| crate::risk::model_bayes_risk(t, &inst.object, &inst.loss))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(example: u8, n: usize) -> ExampleConfig {
        let mut cfg = ExampleConfig::new(example, n);
        cfg.theta_cells = Some(9);
        cfg.signal_cells = Some(17);
        cfg.learn_cells = Some(9);
        cfg
    }

    #[test]
    fn csv_layout() {
        let run = run_example(&small(2, 1)).unwrap();
        let csv = run.curves.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 10);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[9].starts_with("1,"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn curves_lie_in_the_loss_range_and_above_the_floor() {
        for (ex, n) in [(1, 0), (1, 2), (2, 0), (2, 2)] {
            let run = run_example(&small(ex, n)).unwrap();
            let c = &run.curves;
            for (_, s) in c.series() {
                assert!(s.iter().all(|v| (0.0..=1.0).contains(v)), "{ex} {n} {s:?}");
            }
            for curve in [&c.ml, &c.minimax, &c.mindev] {
                for (r, b) in curve.iter().zip(&c.bayes) {
                    assert!(r + 1e-12 >= *b);
                }
            }
        }
    }

    #[test]
    fn auto_switches_to_sampling_over_budget() {
        let mut cfg = small(2, 4);
        cfg.solve_budget = 100;
        cfg.samples = 500;
        let run = run_example(&cfg).unwrap();
        assert_eq!(run.meta.mode, EvalMode::Mc);
        assert!(run.meta.solve_learn_cells.unwrap() < 9);
        assert_eq!(run.meta.notes.len(), 1);
        assert_eq!(run.curves.theta.len(), 9);
    }

    #[test]
    fn identical_configs_give_identical_csv() {
        let mut cfg = small(2, 3);
        cfg.mode = EvalMode::Mc;
        cfg.solve_budget = 50;
        cfg.samples = 300;
        let a = run_example(&cfg).unwrap().curves.to_csv();
        let b = run_example(&cfg).unwrap().curves.to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn example2_rejects_model_range() {
        let mut cfg = small(2, 1);
        cfg.theta_range = Some((0.0, 0.5));
        assert!(run_example(&cfg).is_err());
    }
}
