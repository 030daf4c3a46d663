//! Exact risks, Bayes strategies and per-model Bayes risks.
//!
//! The heavy lifting goes through [`RiskEngine`], which precomputes the
//! conditional loss table `L(θ, x, y') = Σ_y p(x, y; θ) ω(y, y')` once and
//! then evaluates strategies chunk by chunk over the learning data values.
//! Chunk boundaries do not depend on the thread count and chunk partials are
//! reduced with a fixed pairwise tree, so results are bit-identical across
//! runs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    FiniteObject, LearningData, LossMatrix, ScalingProfile, Strategy, StrategyTable,
};

/// Learning data values per parallel work item.
const Z_CHUNK: usize = 128;

/// Risk of one strategy at every model, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub strategy: String,
    pub values: Vec<f64>,
}

impl RiskCurve {
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `theta_label,theta_param,risk` rows with a header line.
    pub fn to_csv(&self, obj: &FiniteObject) -> String {
        let mut out = String::from("theta_label,theta_param,risk\n");
        for (model, r) in obj.models().iter().zip(&self.values) {
            let param = model.param.map(fmt_sig).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", model.label, param, fmt_sig(*r)));
        }
        out
    }
}

/// Formats with 10 significant digits, no exponent for ordinary magnitudes.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let mag = v.abs().log10().floor() as i32;
    if (-5..=15).contains(&mag) {
        let decimals = (9 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{v:.9e}")
    }
}

/// Precomputed evaluator for one `(object, learning data, loss)` triple.
#[derive(Debug)]
pub struct RiskEngine<'a> {
    obj: &'a FiniteObject,
    ld: &'a LearningData,
    n_models: usize,
    n_signals: usize,
    n_decisions: usize,
    /// `L(θ, x, y')` with layout `[x][y'][θ]`.
    cond_loss: Vec<f64>,
    loss_min: f64,
    loss_max: f64,
}

impl<'a> RiskEngine<'a> {
    pub fn new(obj: &'a FiniteObject, ld: &'a LearningData, loss: &'a LossMatrix) -> Result<Self> {
        let (m, nx, ny) = (obj.n_models(), obj.n_signals(), obj.n_states());
        if ld.n_models() != m {
            return Err(Error::dim(format!(
                "learning data has {} models, object has {m}",
                ld.n_models()
            )));
        }
        if loss.size() != ny {
            return Err(Error::dim(format!(
                "loss matrix is {0}x{0}, object has {ny} states",
                loss.size()
            )));
        }
        let mut cond_loss = vec![0.0; nx * ny * m];
        for t in 0..m {
            for x in 0..nx {
                for d in 0..ny {
                    let mut s = 0.0;
                    for y in 0..ny {
                        s += obj.p(t, x, y) * loss.get(y, d);
                    }
                    cond_loss[(x * ny + d) * m + t] = s;
                }
            }
        }
        Ok(Self {
            obj,
            ld,
            n_models: m,
            n_signals: nx,
            n_decisions: ny,
            cond_loss,
            loss_min: loss.min(),
            loss_max: loss.max(),
        })
    }

    pub fn object(&self) -> &FiniteObject {
        self.obj
    }

    pub fn learning(&self) -> &LearningData {
        self.ld
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn loss_range(&self) -> (f64, f64) {
        (self.loss_min, self.loss_max)
    }

    #[inline]
    fn cond(&self, x: usize, d: usize) -> &[f64] {
        let m = self.n_models;
        let at = (x * self.n_decisions + d) * m;
        &self.cond_loss[at..at + m]
    }

    fn check_strategy(&self, q: &Strategy) -> Result<()> {
        if q.n_signals() != self.n_signals
            || q.n_values() != self.ld.len()
            || q.n_decisions() != self.n_decisions
        {
            return Err(Error::dim(format!(
                "strategy is over |X|={}, |Z|={}, |Y|={}; problem has |X|={}, |Z|={}, |Y|={}",
                q.n_signals(),
                q.n_values(),
                q.n_decisions(),
                self.n_signals,
                self.ld.len(),
                self.n_decisions
            )));
        }
        Ok(())
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.n_models {
            return Err(Error::dim(format!(
                "{} weights given for {} models",
                weights.len(),
                self.n_models
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::arg("weights must be finite and nonnegative"));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::arg("weights are all zero"));
        }
        Ok(())
    }

    /// `R(q, θ)` for every model.
    pub fn risks(&self, q: &Strategy) -> Result<Vec<f64>> {
        self.check_strategy(q)?;
        let nz = self.ld.len();
        let chunks: Vec<Vec<f64>> = (0..nz.div_ceil(Z_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; self.n_models];
                let mut inner = vec![0.0; self.n_models];
                for z in c * Z_CHUNK..((c + 1) * Z_CHUNK).min(nz) {
                    inner.iter_mut().for_each(|v| *v = 0.0);
                    match q.table() {
                        StrategyTable::Deterministic(dec) => {
                            let row = &dec[z * self.n_signals..(z + 1) * self.n_signals];
                            for (x, &d) in row.iter().enumerate() {
                                add_assign(&mut inner, self.cond(x, d as usize));
                            }
                        }
                        StrategyTable::Randomized(p) => {
                            let ny = self.n_decisions;
                            for x in 0..self.n_signals {
                                let at = (z * self.n_signals + x) * ny;
                                for (d, &w) in p[at..at + ny].iter().enumerate() {
                                    if w != 0.0 {
                                        add_scaled(&mut inner, self.cond(x, d), w);
                                    }
                                }
                            }
                        }
                    }
                    let lik = self.ld.likelihood(z);
                    for t in 0..self.n_models {
                        acc[t] += lik[t] * inner[t];
                    }
                }
                acc
            })
            .collect();
        Ok(self.clamp(pairwise_sum(chunks, self.n_models)))
    }

    /// Removes rounding excursions outside `[min ω, max ω]`.
    fn clamp(&self, mut risks: Vec<f64>) -> Vec<f64> {
        for r in &mut risks {
            *r = r.clamp(self.loss_min, self.loss_max);
        }
        risks
    }

    /// Deterministic strategy minimizing `Σ_θ w(θ) R(q, θ)`, together with its
    /// risk at every model. Weights need not be normalized.
    pub fn bayes_with_risks(&self, weights: &[f64]) -> Result<(Strategy, Vec<f64>)> {
        self.check_weights(weights)?;
        self.bayes_impl(weights, None)
    }

    /// Bayes strategy for `primary` whose near-ties are broken by minimizing
    /// the `secondary`-weighted risk. A decision counts as tied when its
    /// primary cost exceeds the cell minimum by at most `rel_tol` times the
    /// cell's weighted loss range.
    pub fn tied_bayes_with_risks(
        &self,
        primary: &[f64],
        secondary: &[f64],
        rel_tol: f64,
    ) -> Result<(Strategy, Vec<f64>)> {
        self.check_weights(primary)?;
        if secondary.len() != self.n_models || secondary.iter().any(|w| !w.is_finite()) {
            return Err(Error::arg(
                "secondary weights must be finite, one per model",
            ));
        }
        if rel_tol.is_nan() || rel_tol < 0.0 {
            return Err(Error::arg("tie tolerance must be nonnegative"));
        }
        self.bayes_impl(primary, Some((secondary, rel_tol)))
    }

    fn bayes_impl(
        &self,
        weights: &[f64],
        tie: Option<(&[f64], f64)>,
    ) -> Result<(Strategy, Vec<f64>)> {
        let nz = self.ld.len();
        let nx = self.n_signals;
        let mut decisions = vec![0u16; nz * nx];
        let chunks: Vec<Vec<f64>> = decisions
            .par_chunks_mut(Z_CHUNK * nx)
            .enumerate()
            .map(|(c, out)| {
                let m = self.n_models;
                let mut acc = vec![0.0; m];
                let mut inner = vec![0.0; m];
                let mut wz = vec![0.0; m];
                let mut sz = vec![0.0; m];
                for (k, z) in (c * Z_CHUNK..((c + 1) * Z_CHUNK).min(nz)).enumerate() {
                    let lik = self.ld.likelihood(z);
                    for t in 0..m {
                        wz[t] = weights[t] * lik[t];
                    }
                    if let Some((sec, _)) = tie {
                        for t in 0..m {
                            sz[t] = sec[t] * lik[t];
                        }
                    }
                    inner.iter_mut().for_each(|v| *v = 0.0);
                    let row = &mut out[k * nx..(k + 1) * nx];
                    for (x, slot) in row.iter_mut().enumerate() {
                        let d = match tie {
                            None => self.best_decision(&wz, x),
                            Some((_, rel)) => {
                                let slack =
                                    rel * (self.loss_max - self.loss_min) * wz.iter().sum::<f64>();
                                self.tied_decision(&wz, &sz, slack, x)
                            }
                        };
                        *slot = d as u16;
                        add_assign(&mut inner, self.cond(x, d));
                    }
                    for t in 0..m {
                        acc[t] += lik[t] * inner[t];
                    }
                }
                acc
            })
            .collect();
        let risks = self.clamp(pairwise_sum(chunks, self.n_models));
        let q = Strategy::deterministic(nx, nz, self.n_decisions, decisions)?;
        Ok((q, risks))
    }

    /// Lowest-index minimizer of `c(y' | x, z) = Σ_θ wz(θ) L(θ, x, y')`.
    #[inline]
    fn best_decision(&self, wz: &[f64], x: usize) -> usize {
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for d in 0..self.n_decisions {
            let c = dot(wz, self.cond(x, d));
            if c < best_cost {
                best_cost = c;
                best = d;
            }
        }
        best
    }

    /// Lowest-index minimizer of the `sz` cost among decisions whose `wz`
    /// cost is within `slack` of the best.
    fn tied_decision(&self, wz: &[f64], sz: &[f64], slack: f64, x: usize) -> usize {
        let primary: Vec<f64> = (0..self.n_decisions)
            .map(|d| dot(wz, self.cond(x, d)))
            .collect();
        let floor = primary.iter().copied().fold(f64::INFINITY, f64::min) + slack;
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for (d, p) in primary.iter().enumerate() {
            if *p <= floor {
                let c = dot(sz, self.cond(x, d));
                if c < best_cost {
                    best_cost = c;
                    best = d;
                }
            }
        }
        best
    }

    pub fn bayes(&self, weights: &[f64]) -> Result<Strategy> {
        Ok(self.bayes_with_risks(weights)?.0)
    }

    /// `Σ_z Σ_x min_{y'} c(y' | x, z)`.
    pub fn weighted_bayes_value(&self, weights: &[f64]) -> Result<f64> {
        self.check_weights(weights)?;
        let nz = self.ld.len();
        let parts: Vec<Vec<f64>> = (0..nz.div_ceil(Z_CHUNK))
            .into_par_iter()
            .map(|c| {
                let m = self.n_models;
                let mut wz = vec![0.0; m];
                let mut s = 0.0;
                for z in c * Z_CHUNK..((c + 1) * Z_CHUNK).min(nz) {
                    let lik = self.ld.likelihood(z);
                    for t in 0..m {
                        wz[t] = weights[t] * lik[t];
                    }
                    for x in 0..self.n_signals {
                        let mut best = f64::INFINITY;
                        for d in 0..self.n_decisions {
                            best = best.min(dot(&wz, self.cond(x, d)));
                        }
                        s += best;
                    }
                }
                vec![s]
            })
            .collect();
        Ok(pairwise_sum(parts, 1)[0])
    }

    /// `min_q R(q, θ)` for every model.
    pub fn model_bayes_risks(&self) -> Vec<f64> {
        (0..self.n_models)
            .map(|t| {
                (0..self.n_signals)
                    .map(|x| {
                        (0..self.n_decisions)
                            .map(|d| self.cond(x, d)[t])
                            .fold(f64::INFINITY, f64::min)
                    })
                    .sum()
            })
            .collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent lanes so the loop vectorizes
    let mut lanes = [0.0; 4];
    let (ac, ar) = a.split_at(a.len() - a.len() % 4);
    let (bc, br) = b[..a.len()].split_at(ac.len());
    for (x, y) in ac.chunks_exact(4).zip(bc.chunks_exact(4)) {
        for k in 0..4 {
            lanes[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

#[inline]
fn add_assign(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

#[inline]
fn add_scaled(acc: &mut [f64], v: &[f64], w: f64) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += w * b);
}

/// Elementwise sum of equally sized vectors, reduced as a balanced binary tree.
pub(crate) fn pairwise_sum(mut parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    if parts.is_empty() {
        return vec![0.0; len];
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                add_assign(&mut a, &b);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_else(|| vec![0.0; len])
}

/// `R(q, θ)` evaluated literally as the quadruple sum over `z, x, y, y'`.
pub fn risk(
    q: &Strategy,
    model: usize,
    obj: &FiniteObject,
    ld: &LearningData,
    loss: &LossMatrix,
) -> Result<f64> {
    RiskEngine::new(obj, ld, loss)?.check_strategy(q)?;
    if model >= obj.n_models() {
        return Err(Error::dim(format!("model index {model} out of range")));
    }
    let ny = obj.n_states();
    let mut total = 0.0;
    for z in 0..ld.len() {
        let pz = ld.p(model, z);
        if pz == 0.0 {
            continue;
        }
        let mut sz = 0.0;
        for x in 0..obj.n_signals() {
            for y in 0..ny {
                let pxy = obj.p(model, x, y);
                let mut expected = 0.0;
                for d in 0..ny {
                    expected += q.prob(x, z, d) * loss.get(y, d);
                }
                sz += pxy * expected;
            }
        }
        total += pz * sz;
    }
    Ok(total)
}

/// Deterministic Bayes strategy for a nonnegative, not all-zero weight table.
pub fn bayes_strategy(
    weights: &[f64],
    obj: &FiniteObject,
    ld: &LearningData,
    loss: &LossMatrix,
) -> Result<Strategy> {
    RiskEngine::new(obj, ld, loss)?.bayes(weights)
}

/// `min_q Σ_θ w(θ) R(q, θ)`.
pub fn weighted_bayes_value(
    weights: &[f64],
    obj: &FiniteObject,
    ld: &LearningData,
    loss: &LossMatrix,
) -> Result<f64> {
    RiskEngine::new(obj, ld, loss)?.weighted_bayes_value(weights)
}

/// `min_q R(q, θ)`, computed from signals alone since learning data cannot
/// help when the model is known.
pub fn model_bayes_risk(model: usize, obj: &FiniteObject, loss: &LossMatrix) -> f64 {
    let ny = obj.n_states();
    (0..obj.n_signals())
        .map(|x| {
            (0..ny)
                .map(|d| {
                    (0..ny)
                        .map(|y| obj.p(model, x, y) * loss.get(y, d))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

pub fn risk_curve(
    q: &Strategy,
    obj: &FiniteObject,
    ld: &LearningData,
    loss: &LossMatrix,
) -> Result<RiskCurve> {
    Ok(RiskCurve {
        strategy: String::from("strategy"),
        values: RiskEngine::new(obj, ld, loss)?.risks(q)?,
    })
}

/// `(R(q, θ) − α(θ)) / β(θ)`.
pub fn scaled_deviation(
    q: &Strategy,
    model: usize,
    profile: &ScalingProfile,
    obj: &FiniteObject,
    ld: &LearningData,
    loss: &LossMatrix,
) -> Result<f64> {
    if profile.len() != obj.n_models() {
        return Err(Error::dim("profile must have one entry per model"));
    }
    let beta = profile.beta()[model];
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::arg(format!("beta must be positive, got {beta}")));
    }
    let r = risk(q, model, obj, ld, loss)?;
    Ok((r - profile.alpha()[model]) / beta)
}
