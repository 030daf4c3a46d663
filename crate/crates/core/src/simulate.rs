//! Seeded Monte-Carlo estimation of strategy risks.
//!
//! Sample `i` draws everything from its own ChaCha stream `(seed, i)`, and the
//! per-chunk sums are combined by a fixed binary tree, so estimates do not
//! depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FiniteObject, IidSource, LearningData, LossMatrix, Strategy};
use crate::risk::pairwise_sum;

pub const MIN_SAMPLES: usize = 100;
const SAMPLE_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub seed: u64,
}

/// What a rule sees of the learning data.
#[derive(Debug, Clone, Copy)]
pub enum LearnObs<'a> {
    /// Index of a value of an explicitly tabulated `Z`.
    Value(usize),
    /// Raw draws, as indices into the per-draw source.
    Draws(&'a [usize]),
}

/// A decision rule over `(x, learning data)`.
pub trait DecisionRule: Sync {
    fn n_decisions(&self) -> usize;

    /// Writes the decision distribution into `out`.
    fn decide(&self, x: usize, obs: LearnObs<'_>, out: &mut [f64]);
}

/// How learning data is drawn for one model.
#[derive(Debug, Clone, Copy)]
pub enum LearnSampler<'a> {
    /// Draw a value of `Z` from `p_Z(·; θ)`.
    Table(&'a LearningData),
    /// Draw `n` independent values from the source.
    Iid(&'a IidSource),
}

impl<'a> LearnSampler<'a> {
    /// Draws from the per-draw source when the data is an i.i.d. sample.
    pub fn for_learning(ld: &'a LearningData) -> Self {
        match ld.iid_source() {
            Some(src) => LearnSampler::Iid(src),
            None => LearnSampler::Table(ld),
        }
    }

    fn n_models(&self) -> usize {
        match self {
            LearnSampler::Table(ld) => ld.n_models(),
            LearnSampler::Iid(src) => src.p.len() / src.n_values().max(1),
        }
    }
}

/// A tabulated strategy applied to sampled data.
pub struct StrategyRule<'a> {
    q: &'a Strategy,
    ld: &'a LearningData,
}

impl<'a> StrategyRule<'a> {
    pub fn new(q: &'a Strategy, ld: &'a LearningData) -> Result<Self> {
        if q.n_values() != ld.len() {
            return Err(Error::dim("strategy and learning data disagree on |Z|"));
        }
        Ok(Self { q, ld })
    }
}

impl DecisionRule for StrategyRule<'_> {
    fn n_decisions(&self) -> usize {
        self.q.n_decisions()
    }

    fn decide(&self, x: usize, obs: LearnObs<'_>, out: &mut [f64]) {
        let z = match obs {
            LearnObs::Value(z) => z,
            LearnObs::Draws(d) => self
                .ld
                .index_of_draws(d)
                .expect("draws require sample-valued learning data"),
        };
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.q.prob(x, z, k);
        }
    }
}

/// A strategy tabulated over a coarser per-draw value set, applied to draws
/// from a finer one through a value map.
pub struct RebinnedRule<'a> {
    inner: StrategyRule<'a>,
    map: Vec<usize>,
}

impl<'a> RebinnedRule<'a> {
    /// `map[g]` is the coarse value that fine value `g` falls into.
    pub fn new(q: &'a Strategy, coarse: &'a LearningData, map: Vec<usize>) -> Result<Self> {
        let g = coarse
            .iid_source()
            .ok_or_else(|| Error::arg("rebinning needs sample-valued learning data"))?
            .n_values();
        if map.iter().any(|&c| c >= g) {
            return Err(Error::dim("value map points outside the coarse value set"));
        }
        Ok(Self {
            inner: StrategyRule::new(q, coarse)?,
            map,
        })
    }
}

impl DecisionRule for RebinnedRule<'_> {
    fn n_decisions(&self) -> usize {
        self.inner.n_decisions()
    }

    fn decide(&self, x: usize, obs: LearnObs<'_>, out: &mut [f64]) {
        match obs {
            LearnObs::Draws(d) => {
                let coarse: Vec<usize> = d.iter().map(|&g| self.map[g]).collect();
                self.inner.decide(x, LearnObs::Draws(&coarse), out);
            }
            LearnObs::Value(_) => panic!("rebinned rules need raw draws"),
        }
    }
}

/// How a [`PosteriorRule`] turns the model likelihood into a decision.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorKind {
    /// Minimize the expected loss under weights `w(θ)·p_Z(z;θ)`.
    Bayes(Vec<f64>),
    /// Act Bayes-optimally for the maximum-likelihood model.
    MaxLikelihood,
}

/// Bayes and maximum-likelihood rules computed directly from the likelihood
/// of the observed data, so they apply to samples of any size.
pub struct PosteriorRule<'a> {
    kind: PosteriorKind,
    /// `Σ_y p_XY(x, y; θ) ω(y, d)`, layout `[x][d][θ]`.
    cond: Vec<f64>,
    n_models: usize,
    n_decisions: usize,
    table: Option<&'a LearningData>,
    source: Option<&'a IidSource>,
}

impl<'a> PosteriorRule<'a> {
    pub fn new(
        kind: PosteriorKind,
        obj: &FiniteObject,
        loss: &LossMatrix,
        learn: LearnSampler<'a>,
    ) -> Result<Self> {
        let m = obj.n_models();
        if learn.n_models() != m {
            return Err(Error::dim("learning data and object disagree on |Θ|"));
        }
        if loss.size() != obj.n_states() {
            return Err(Error::dim("loss matrix does not match |Y|"));
        }
        if let PosteriorKind::Bayes(w) = &kind {
            if w.len() != m || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::arg(
                    "Bayes weights must be m finite nonnegative values",
                ));
            }
        }
        let ny = obj.n_states();
        let mut cond = vec![0.0; obj.n_signals() * ny * m];
        for x in 0..obj.n_signals() {
            for d in 0..ny {
                for t in 0..m {
                    cond[(x * ny + d) * m + t] =
                        (0..ny).map(|y| obj.p(t, x, y) * loss.get(y, d)).sum();
                }
            }
        }
        let (table, source) = match learn {
            LearnSampler::Table(ld) => (Some(ld), None),
            LearnSampler::Iid(src) => (None, Some(src)),
        };
        Ok(Self {
            kind,
            cond,
            n_models: m,
            n_decisions: ny,
            table,
            source,
        })
    }

    fn cond(&self, x: usize, d: usize) -> &[f64] {
        let at = (x * self.n_decisions + d) * self.n_models;
        &self.cond[at..at + self.n_models]
    }

    /// Likelihood of the observation per model, rescaled so its maximum is 1.
    fn likelihood(&self, obs: LearnObs<'_>) -> Vec<f64> {
        match obs {
            LearnObs::Value(z) => {
                let ld = self.table.expect("value observations need a table");
                ld.likelihood(z).to_vec()
            }
            LearnObs::Draws(d) => {
                let src = self.source.expect("draw observations need a source");
                let logs: Vec<f64> = (0..self.n_models)
                    .map(|t| {
                        let row = src.row(t);
                        d.iter().map(|&g| row[g].ln()).sum()
                    })
                    .collect();
                let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if top == f64::NEG_INFINITY {
                    return vec![0.0; self.n_models];
                }
                logs.iter().map(|l| (l - top).exp()).collect()
            }
        }
    }

    fn best(&self, x: usize, wz: &[f64]) -> usize {
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for d in 0..self.n_decisions {
            let c: f64 = wz.iter().zip(self.cond(x, d)).map(|(a, b)| a * b).sum();
            if c < best_cost {
                best_cost = c;
                best = d;
            }
        }
        best
    }
}

impl DecisionRule for PosteriorRule<'_> {
    fn n_decisions(&self) -> usize {
        self.n_decisions
    }

    fn decide(&self, x: usize, obs: LearnObs<'_>, out: &mut [f64]) {
        let lik = self.likelihood(obs);
        let d = match &self.kind {
            PosteriorKind::Bayes(w) => {
                let wz: Vec<f64> = w.iter().zip(&lik).map(|(a, b)| a * b).collect();
                self.best(x, &wz)
            }
            PosteriorKind::MaxLikelihood => {
                let mut t_hat = 0;
                for (t, &l) in lik.iter().enumerate() {
                    if l > lik[t_hat] {
                        t_hat = t;
                    }
                }
                let mut e = vec![0.0; self.n_models];
                e[t_hat] = 1.0;
                self.best(x, &e)
            }
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        out[d] = 1.0;
    }
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Index `k` with `cdf[k-1] ≤ u < cdf[k]`, skipping zero-mass entries.
fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cdf.last().expect("nonempty distribution");
    let u = rng.gen::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Monte-Carlo estimate of `R(rule, θ)` from `samples` draws.
pub fn estimate_risk_mc(
    rule: &dyn DecisionRule,
    model: usize,
    obj: &FiniteObject,
    learn: LearnSampler<'_>,
    loss: &LossMatrix,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < MIN_SAMPLES {
        return Err(Error::arg(format!(
            "at least {MIN_SAMPLES} samples are required, got {samples}"
        )));
    }
    if model >= obj.n_models() || learn.n_models() != obj.n_models() {
        return Err(Error::dim(
            "model index or learning data does not match the object",
        ));
    }
    if rule.n_decisions() != loss.size() || loss.size() != obj.n_states() {
        return Err(Error::dim("rule, loss and object disagree on |Y|"));
    }
    let ny = obj.n_states();
    let xy_cdf = cumulative(obj.model_table(model));
    let learn_cdf = match learn {
        LearnSampler::Table(ld) => {
            cumulative(&(0..ld.len()).map(|z| ld.p(model, z)).collect::<Vec<_>>())
        }
        LearnSampler::Iid(src) => cumulative(src.row(model)),
    };

    let chunks: Vec<Vec<f64>> = (0..samples.div_ceil(SAMPLE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut probs = vec![0.0; ny];
            let mut draws = Vec::new();
            for i in c * SAMPLE_CHUNK..((c + 1) * SAMPLE_CHUNK).min(samples) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let obs = match learn {
                    LearnSampler::Table(_) => LearnObs::Value(draw(&learn_cdf, &mut rng)),
                    LearnSampler::Iid(src) => {
                        draws.clear();
                        draws.extend((0..src.n).map(|_| draw(&learn_cdf, &mut rng)));
                        LearnObs::Draws(&draws)
                    }
                };
                let cell = draw(&xy_cdf, &mut rng);
                let (x, y) = (cell / ny, cell % ny);
                rule.decide(x, obs, &mut probs);
                let l: f64 = probs
                    .iter()
                    .enumerate()
                    .map(|(d, p)| p * loss.get(y, d))
                    .sum();
                sum += l;
                sum_sq += l * l;
            }
            vec![sum, sum_sq]
        })
        .collect();
    let totals = pairwise_sum(chunks, 2);
    let n = samples as f64;
    let mean = totals[0] / n;
    let var = ((totals[1] - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        samples,
        seed,
    })
}
