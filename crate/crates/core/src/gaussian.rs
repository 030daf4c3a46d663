//! Finite discretizations of the two Gaussian recognition examples.
//!
//! Example 1: two equiprobable states emitting 2-D unit-variance Gaussian
//! signals with means `(2, 0)` and `(0, θ)`; learning data is a sample from the
//! second state with variance 16 per coordinate.
//!
//! Example 2: states with signals `N(−1, 1)` and `N(1, 1)` and unknown prior
//! `θ = p(y = 1)`; learning data is an unlabelled sample from the mixture.
//!
//! Signals are discretized on a uniform grid whose two edge cells extend to
//! infinity, so no probability mass is lost.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    iid_product, multiset_count, FiniteObject, IidSource, LearningData, LossMatrix, ModelLabel,
    Representation, SampleMode, DEFAULT_ENUMERATION_CAP,
};
use crate::risk::fmt_sig;

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// `erfc(x)` for `x ≥ 0`: power series below 2.5, continued fraction above.
fn erfc_nonneg(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 2.5 {
        // erf(x) = 2/√π e^{−x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term > sum * 1e-17 {
            k += 1.0;
            term *= 2.0 * x2 / (2.0 * k + 1.0);
            sum += term;
        }
        1.0 - 2.0 * FRAC_1_SQRT_PI * (-x2).exp() * sum
    } else {
        // erfc(x) = e^{−x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))
        // evaluated with the modified Lentz method
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = x + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() * FRAC_1_SQRT_PI / f
    }
}

/// Upper tail `1 − Φ(z)` of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 0.0 } else { 1.0 };
    }
    if z >= 0.0 {
        0.5 * erfc_nonneg(z / std::f64::consts::SQRT_2)
    } else {
        1.0 - 0.5 * erfc_nonneg(-z / std::f64::consts::SQRT_2)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    normal_sf(-z)
}

/// Mass of the standard normal on `(lo, hi]`, computed on the side where it
/// does not cancel.
fn normal_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else if hi <= 0.0 {
        normal_sf(-hi) - normal_sf(-lo)
    } else {
        1.0 - normal_sf(-lo) - normal_sf(hi)
    }
}

/// Uniform grid on `[lo, hi]`; the first and last cells extend to ±∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        let g = Self { lo, hi, cells };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::arg(format!(
                "grid range [{}, {}] is empty or not finite",
                self.lo, self.hi
            )));
        }
        if self.cells < 2 {
            return Err(Error::arg("a grid needs at least 2 cells"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    /// Inner boundary `j` for `j = 1..cells`; `0` and `cells` are ∓∞.
    pub fn boundary(&self, j: usize) -> f64 {
        if j == 0 {
            f64::NEG_INFINITY
        } else if j >= self.cells {
            f64::INFINITY
        } else {
            self.lo + j as f64 * self.width()
        }
    }

    pub fn center(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.width()
    }

    /// Index of the cell containing `v`; cells are right-closed.
    pub fn cell_of(&self, v: f64) -> usize {
        let k = ((v - self.lo) / self.width()).ceil() as i64 - 1;
        k.clamp(0, self.cells as i64 - 1) as usize
    }

    pub fn labels(&self, prefix: &str) -> Vec<String> {
        (0..self.cells)
            .map(|j| format!("{prefix}{}", fmt_sig(self.center(j))))
            .collect()
    }
}

/// Cell masses of `N(mean, var)` on a grid; they sum to one up to rounding.
pub fn discretize_gaussian_1d(mean: f64, var: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    grid.check()?;
    if !(var > 0.0 && var.is_finite()) || !mean.is_finite() {
        return Err(Error::arg(
            "gaussian needs a finite mean and positive variance",
        ));
    }
    let sd = var.sqrt();
    Ok((0..grid.cells)
        .map(|j| {
            let lo = (grid.boundary(j) - mean) / sd;
            let hi = (grid.boundary(j + 1) - mean) / sd;
            normal_interval(lo, hi)
        })
        .collect())
}

/// Default discretization of Example 1.
pub mod example1_defaults {
    pub const THETA_RANGE: (f64, f64) = (-4.0, 4.0);
    pub const THETA_CELLS: usize = 41;
    pub const X1_GRID: (f64, f64, usize) = (-6.0, 8.0, 57);
    pub const X2_GRID: (f64, f64, usize) = (-8.0, 8.0, 65);
    pub const LEARN_GRID: (f64, f64, usize) = (-10.0, 10.0, 33);
    pub const LEARN_VARIANCE: f64 = 16.0;
}

/// Default discretization of Example 2.
pub mod example2_defaults {
    pub const THETA_CELLS: usize = 41;
    pub const SIGNAL_GRID: (f64, f64, usize) = (-8.0, 8.0, 65);
    pub const LEARN_GRID: (f64, f64, usize) = (-10.0, 10.0, 33);
}

/// Whether the learning data is enumerated or left to sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnMode {
    Multiset,
    Mc,
}

/// Learning data of a built example.
#[derive(Debug, Clone)]
pub enum ExampleLearning {
    Enumerated(LearningData),
    /// Too large to enumerate: `n` i.i.d. draws from a scalar source.
    Sampled(IidSource),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleMeta {
    pub example: u8,
    pub n: usize,
    pub theta: Vec<f64>,
    pub signal_grids: Vec<GridSpec>,
    pub learn_grid: GridSpec,
    pub learn_mode: LearnMode,
    pub sufficient_statistic: bool,
    pub learning_values: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExampleInstance {
    pub object: FiniteObject,
    pub learning: ExampleLearning,
    pub loss: LossMatrix,
    pub meta: ExampleMeta,
}

impl ExampleInstance {
    pub fn learning_data(&self) -> Result<&LearningData> {
        match &self.learning {
            ExampleLearning::Enumerated(ld) => Ok(ld),
            ExampleLearning::Sampled(_) => Err(Error::arg(
                "learning data of this instance is sampled, not enumerated",
            )),
        }
    }

    /// Per-draw source, when the learning data is an i.i.d. sample.
    pub fn iid_source(&self) -> Option<&IidSource> {
        match &self.learning {
            ExampleLearning::Enumerated(ld) => ld.iid_source(),
            ExampleLearning::Sampled(src) => Some(src),
        }
    }
}

fn theta_grid(lo: f64, hi: f64, m: usize) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::arg("the model grid needs at least 2 points"));
    }
    Ok((0..m)
        .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
        .collect())
}

fn model_labels(theta: &[f64]) -> Vec<ModelLabel> {
    theta
        .iter()
        .map(|&t| ModelLabel::with_param(format!("theta={}", fmt_sig(t)), t))
        .collect()
}

fn states() -> Vec<String> {
    vec!["1".to_string(), "2".to_string()]
}

/// Builds the learning data for `n` draws from a per-model base distribution.
fn iid_learning(
    labels: Vec<String>,
    base_by_model: Vec<f64>,
    m: usize,
    n: usize,
    mode: LearnMode,
    cap: u128,
) -> Result<ExampleLearning> {
    if n == 0 {
        return Ok(ExampleLearning::Enumerated(LearningData::none(m)));
    }
    match mode {
        LearnMode::Multiset => {
            let base = LearningData::new(labels, m, &base_by_model)?;
            match iid_product(&base, n, SampleMode::Multiset, cap) {
                Ok(ld) => Ok(ExampleLearning::Enumerated(ld)),
                Err(Error::SizeCap {
                    what,
                    required,
                    cap,
                }) => Err(Error::SizeCap {
                    what: format!("{what} (use the mc learning mode or fewer learn cells)"),
                    required,
                    cap,
                }),
                Err(e) => Err(e),
            }
        }
        LearnMode::Mc => Ok(ExampleLearning::Sampled(IidSource {
            labels,
            p: base_by_model,
            n,
        })),
    }
}

/// Example 2 with `θ_i = i / (m − 1)`.
pub fn build_example2(
    n: usize,
    theta_cells: usize,
    signal: &GridSpec,
    learn: &GridSpec,
    mode: LearnMode,
) -> Result<ExampleInstance> {
    build_example2_capped(n, theta_cells, signal, learn, mode, DEFAULT_ENUMERATION_CAP)
}

pub fn build_example2_capped(
    n: usize,
    theta_cells: usize,
    signal: &GridSpec,
    learn: &GridSpec,
    mode: LearnMode,
    cap: u128,
) -> Result<ExampleInstance> {
    let theta = theta_grid(0.0, 1.0, theta_cells)?;
    let f1 = discretize_gaussian_1d(-1.0, 1.0, signal)?;
    let f2 = discretize_gaussian_1d(1.0, 1.0, signal)?;
    let nx = signal.cells;
    let m = theta.len();
    let mut p_xy = Vec::with_capacity(m * nx * 2);
    for &t in &theta {
        for x in 0..nx {
            p_xy.push(t * f1[x]);
            p_xy.push((1.0 - t) * f2[x]);
        }
    }
    let mut object = FiniteObject::new(signal.labels("x="), states(), model_labels(&theta), p_xy)?;
    object.renormalize();

    let g1 = discretize_gaussian_1d(-1.0, 1.0, learn)?;
    let g2 = discretize_gaussian_1d(1.0, 1.0, learn)?;
    let mut base = Vec::with_capacity(m * learn.cells);
    for &t in &theta {
        let row: Vec<f64> = g1
            .iter()
            .zip(&g2)
            .map(|(a, b)| t * a + (1.0 - t) * b)
            .collect();
        let s: f64 = row.iter().sum();
        base.extend(row.into_iter().map(|v| v / s));
    }
    let learning = iid_learning(learn.labels("s="), base, m, n, mode, cap)?;
    let learning_values = match &learning {
        ExampleLearning::Enumerated(ld) => Some(ld.len()),
        ExampleLearning::Sampled(_) => None,
    };
    Ok(ExampleInstance {
        object,
        learning,
        loss: LossMatrix::zero_one(2),
        meta: ExampleMeta {
            example: 2,
            n,
            theta,
            signal_grids: vec![*signal],
            learn_grid: *learn,
            learn_mode: mode,
            sufficient_statistic: false,
            learning_values,
        },
    })
}

/// Example 1 options beyond the sample size.
#[derive(Debug, Clone, Copy)]
pub struct Example1Grids {
    pub theta_range: (f64, f64),
    pub theta_cells: usize,
    pub x1: GridSpec,
    pub x2: GridSpec,
    pub learn: GridSpec,
}

impl Default for Example1Grids {
    fn default() -> Self {
        use example1_defaults::*;
        Self {
            theta_range: THETA_RANGE,
            theta_cells: THETA_CELLS,
            x1: GridSpec {
                lo: X1_GRID.0,
                hi: X1_GRID.1,
                cells: X1_GRID.2,
            },
            x2: GridSpec {
                lo: X2_GRID.0,
                hi: X2_GRID.1,
                cells: X2_GRID.2,
            },
            learn: GridSpec {
                lo: LEARN_GRID.0,
                hi: LEARN_GRID.1,
                cells: LEARN_GRID.2,
            },
        }
    }
}

/// Example 1. Signals are indexed `x = i1 · |x2 cells| + i2`.
///
/// With `use_sufficient_statistic` the learning data is the discretized mean
/// of the sample's second coordinates, `N(θ, 16/n)`. The first coordinates of
/// the sample have a model-independent law and are dropped. Without it, the
/// learning data is the multiset of `n` discretized 2-D draws from
/// `N((0, θ), 16·I)`, both axes on the learn grid.
pub fn build_example1(
    n: usize,
    grids: &Example1Grids,
    use_sufficient_statistic: bool,
) -> Result<ExampleInstance> {
    build_example1_capped(n, grids, use_sufficient_statistic, DEFAULT_ENUMERATION_CAP)
}

pub fn build_example1_capped(
    n: usize,
    grids: &Example1Grids,
    use_sufficient_statistic: bool,
    cap: u128,
) -> Result<ExampleInstance> {
    use example1_defaults::LEARN_VARIANCE;
    let theta = theta_grid(grids.theta_range.0, grids.theta_range.1, grids.theta_cells)?;
    let (n1, n2) = (grids.x1.cells, grids.x2.cells);
    let a1 = discretize_gaussian_1d(2.0, 1.0, &grids.x1)?;
    let b1 = discretize_gaussian_1d(0.0, 1.0, &grids.x2)?;
    let a2 = discretize_gaussian_1d(0.0, 1.0, &grids.x1)?;
    let m = theta.len();
    let mut p_xy = Vec::with_capacity(m * n1 * n2 * 2);
    for &t in &theta {
        let b2 = discretize_gaussian_1d(t, 1.0, &grids.x2)?;
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                p_xy.push(0.5 * a1[i1] * b1[i2]);
                p_xy.push(0.5 * a2[i1] * b2[i2]);
            }
        }
    }
    let mut signals = Vec::with_capacity(n1 * n2);
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            signals.push(format!(
                "({},{})",
                fmt_sig(grids.x1.center(i1)),
                fmt_sig(grids.x2.center(i2))
            ));
        }
    }
    let mut object = FiniteObject::new(signals, states(), model_labels(&theta), p_xy)?;
    object.renormalize();

    let learn = grids.learn;
    let learning = if n == 0 {
        ExampleLearning::Enumerated(LearningData::none(m))
    } else if use_sufficient_statistic {
        let var = LEARN_VARIANCE / n as f64;
        let mut p = Vec::with_capacity(m * learn.cells);
        for &t in &theta {
            p.extend(discretize_gaussian_1d(t, var, &learn)?);
        }
        let mut ld = LearningData::new(learn.labels("mean="), m, &p)?
            .with_representation(Representation::SufficientStatistic);
        ld.renormalize();
        ExampleLearning::Enumerated(ld)
    } else {
        let g = learn.cells;
        let first = discretize_gaussian_1d(0.0, LEARN_VARIANCE, &learn)?;
        let mut labels = Vec::with_capacity(g * g);
        for j1 in 0..g {
            for j2 in 0..g {
                labels.push(format!(
                    "({},{})",
                    fmt_sig(learn.center(j1)),
                    fmt_sig(learn.center(j2))
                ));
            }
        }
        let mut base = Vec::with_capacity(m * g * g);
        for &t in &theta {
            let second = discretize_gaussian_1d(t, LEARN_VARIANCE, &learn)?;
            for a in &first {
                for b in &second {
                    base.push(a * b);
                }
            }
        }
        iid_learning(labels, base, m, n, LearnMode::Multiset, cap)?
    };
    let learning_values = match &learning {
        ExampleLearning::Enumerated(ld) => Some(ld.len()),
        ExampleLearning::Sampled(_) => None,
    };
    Ok(ExampleInstance {
        object,
        learning,
        loss: LossMatrix::zero_one(2),
        meta: ExampleMeta {
            example: 1,
            n,
            theta,
            signal_grids: vec![grids.x1, grids.x2],
            learn_grid: learn,
            learn_mode: LearnMode::Multiset,
            sufficient_statistic: use_sufficient_statistic,
            learning_values,
        },
    })
}

/// Largest learn-cell count `≤ max_cells` whose multiset size for `n` draws
/// stays within `budget`, never below 2.
pub fn finest_fitting_cells(n: usize, max_cells: usize, budget: u128) -> usize {
    (2..=max_cells)
        .rev()
        .find(|&g| multiset_count(g, n) <= budget)
        .unwrap_or(2)
}
