//! Problem data: the recognized object, learning data, losses, strategies
//! and weight functions.
//!
//! Every table is stored densely in linear scale. Index order always follows
//! the order in which labels were supplied.

use std::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance for "sums to one" checks.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Default cap on the number of enumerated learning-data values.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelLabel {
    pub label: String,
    /// Numeric value of the model, used only as a plot coordinate.
    pub param: Option<f64>,
}

impl ModelLabel {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            param: None,
        }
    }

    pub fn with_param(label: impl Into<String>, param: f64) -> Self {
        Self {
            label: label.into(),
            param: Some(param),
        }
    }
}

/// Signals `X`, hidden states `Y`, models `Θ` and the joint
/// probabilities `p(x, y; θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteObject {
    signals: Vec<String>,
    states: Vec<String>,
    models: Vec<ModelLabel>,
    /// Layout `[θ][x][y]`.
    p_xy: Vec<f64>,
}

impl FiniteObject {
    /// Builds an object from a flat `[θ][x][y]` table. Only the shape is
    /// checked here; use [`validate_object`] for the probability invariants.
    pub fn new(
        signals: Vec<String>,
        states: Vec<String>,
        models: Vec<ModelLabel>,
        p_xy: Vec<f64>,
    ) -> Result<Self> {
        let expected = signals.len() * states.len() * models.len();
        if p_xy.len() != expected {
            return Err(Error::dim(format!(
                "p_xy has {} entries, expected |Θ|·|X|·|Y| = {}",
                p_xy.len(),
                expected
            )));
        }
        Ok(Self {
            signals,
            states,
            models,
            p_xy,
        })
    }

    pub fn signals(&self) -> &[String] {
        &self.signals
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn models(&self) -> &[ModelLabel] {
        &self.models
    }

    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    #[inline]
    pub fn p(&self, model: usize, x: usize, y: usize) -> f64 {
        self.p_xy[(model * self.signals.len() + x) * self.states.len() + y]
    }

    /// The `[x][y]` block of one model.
    pub fn model_table(&self, model: usize) -> &[f64] {
        let block = self.signals.len() * self.states.len();
        &self.p_xy[model * block..(model + 1) * block]
    }

    pub fn raw(&self) -> &[f64] {
        &self.p_xy
    }

    pub(crate) fn renormalize(&mut self) {
        let block = self.signals.len() * self.states.len();
        for row in self.p_xy.chunks_mut(block.max(1)) {
            let s: f64 = row.iter().sum();
            if off_unit_sum(s, row.len()) {
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
    }
}

/// Whether a positive sum of `len` terms differs from 1 by more than rounding,
/// so renormalizing an already normalized table leaves it bit-identical.
fn off_unit_sum(s: f64, len: usize) -> bool {
    s > 0.0 && (s - 1.0).abs() > 4.0 * f64::EPSILON * len as f64
}

/// How a learning-data set was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Explicit,
    IidProduct { n: usize },
    Multiset { n: usize },
    SufficientStatistic,
}

/// A scalar distribution that is sampled `n` times independently.
#[derive(Debug, Clone, PartialEq)]
pub struct IidSource {
    pub labels: Vec<String>,
    /// Layout `[θ][g]`.
    pub p: Vec<f64>,
    pub n: usize,
}

impl IidSource {
    pub fn n_values(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, model: usize) -> &[f64] {
        let g = self.labels.len();
        &self.p[model * g..(model + 1) * g]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ZValues {
    Labels(Vec<String>),
    /// Ordered samples; value index is the mixed-radix number of the draws,
    /// first draw most significant.
    Tuples(IidSource),
    /// Unordered samples as count vectors, stride `|base|`.
    Multisets {
        source: IidSource,
        counts: Vec<u16>,
    },
}

/// Learning data `⟨Z, p_Z⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningData {
    values: ZValues,
    n_values: usize,
    n_models: usize,
    /// Layout `[z][θ]` so that the likelihood vector of one value is contiguous.
    p_z: Vec<f64>,
    representation: Representation,
}

impl LearningData {
    /// Explicit learning data from a `[θ][z]` table.
    pub fn new(labels: Vec<String>, n_models: usize, p_z_by_model: &[f64]) -> Result<Self> {
        let nz = labels.len();
        if p_z_by_model.len() != nz * n_models {
            return Err(Error::dim(format!(
                "p_z has {} entries, expected |Θ|·|Z| = {}",
                p_z_by_model.len(),
                nz * n_models
            )));
        }
        let mut p_z = vec![0.0; nz * n_models];
        for t in 0..n_models {
            for z in 0..nz {
                p_z[z * n_models + t] = p_z_by_model[t * nz + z];
            }
        }
        Ok(Self {
            values: ZValues::Labels(labels),
            n_values: nz,
            n_models,
            p_z,
            representation: Representation::Explicit,
        })
    }

    /// The trivial `|Z| = 1` learning data, equivalent to having none.
    pub fn none(n_models: usize) -> Self {
        Self {
            values: ZValues::Labels(vec!["none".to_string()]),
            n_values: 1,
            n_models,
            p_z: vec![1.0; n_models],
            representation: Representation::Explicit,
        }
    }

    pub fn with_representation(mut self, representation: Representation) -> Self {
        self.representation = representation;
        self
    }

    pub fn len(&self) -> usize {
        self.n_values
    }

    pub fn is_empty(&self) -> bool {
        self.n_values == 0
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn values(&self) -> &ZValues {
        &self.values
    }

    #[inline]
    pub fn p(&self, model: usize, z: usize) -> f64 {
        self.p_z[z * self.n_models + model]
    }

    /// `θ ↦ p_Z(z; θ)` for one value `z`.
    #[inline]
    pub fn likelihood(&self, z: usize) -> &[f64] {
        &self.p_z[z * self.n_models..(z + 1) * self.n_models]
    }

    pub fn label(&self, z: usize) -> String {
        match &self.values {
            ZValues::Labels(l) => l[z].clone(),
            ZValues::Tuples(src) => {
                let g = src.labels.len();
                let mut digits = vec![0usize; src.n];
                let mut rest = z;
                for d in digits.iter_mut().rev() {
                    *d = rest % g;
                    rest /= g;
                }
                let parts: Vec<&str> = digits.iter().map(|&d| src.labels[d].as_str()).collect();
                format!("({})", parts.join(","))
            }
            ZValues::Multisets { source, counts } => {
                let g = source.labels.len();
                let row = &counts[z * g..(z + 1) * g];
                let mut parts = Vec::with_capacity(source.n);
                for (j, &c) in row.iter().enumerate() {
                    for _ in 0..c {
                        parts.push(source.labels[j].as_str());
                    }
                }
                format!("{{{}}}", parts.join(","))
            }
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.n_values).map(|z| self.label(z)).collect()
    }

    /// Source of independent draws when the data is an i.i.d. sample.
    pub fn iid_source(&self) -> Option<&IidSource> {
        match &self.values {
            ZValues::Labels(_) => None,
            ZValues::Tuples(src) => Some(src),
            ZValues::Multisets { source, .. } => Some(source),
        }
    }

    /// Multiset count vector of value `z`, if this is multiset data.
    pub fn counts(&self, z: usize) -> Option<&[u16]> {
        match &self.values {
            ZValues::Multisets { source, counts } => {
                let g = source.labels.len();
                Some(&counts[z * g..(z + 1) * g])
            }
            _ => None,
        }
    }

    /// Index of the value generated by the given draws (indices into the base
    /// set), or `None` for explicit data.
    pub fn index_of_draws(&self, draws: &[usize]) -> Option<usize> {
        match &self.values {
            ZValues::Labels(_) => None,
            ZValues::Tuples(src) => {
                let g = src.labels.len();
                Some(draws.iter().fold(0usize, |acc, &d| acc * g + d))
            }
            ZValues::Multisets { source, .. } => {
                let mut sorted: Vec<usize> = draws.to_vec();
                sorted.sort_unstable();
                Some(rank_sorted_tuple(&sorted, source.labels.len()))
            }
        }
    }

    pub(crate) fn renormalize(&mut self) {
        let m = self.n_models;
        for t in 0..m {
            let s: f64 = (0..self.n_values).map(|z| self.p_z[z * m + t]).sum();
            if off_unit_sum(s, self.n_values) {
                for z in 0..self.n_values {
                    self.p_z[z * m + t] /= s;
                }
            }
        }
    }
}

/// Construction mode of an i.i.d. sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Explicit,
    Multiset,
}

/// Number of multisets of size `n` over `g` values, `C(g+n-1, n)`,
/// saturating at `u128::MAX`.
pub fn multiset_count(g: usize, n: usize) -> u128 {
    if g == 0 {
        return u128::from(n == 0);
    }
    let mut acc: u128 = 1;
    for i in 1..=n as u128 {
        acc = match acc.checked_mul(g as u128 - 1 + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of ordered samples `g^n`, saturating.
pub fn tuple_count(g: usize, n: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = match acc.checked_mul(g as u128) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic rank of a nondecreasing tuple over `0..g`.
pub fn rank_sorted_tuple(tuple: &[usize], g: usize) -> usize {
    let n = tuple.len();
    let mut rank: u128 = 0;
    let mut lo = 0usize;
    for (i, &v) in tuple.iter().enumerate() {
        let remaining = n - i - 1;
        for u in lo..v {
            // nondecreasing tails of length `remaining` over u..g
            rank += multiset_count(g - u, remaining);
        }
        lo = v;
    }
    rank as usize
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Learning data of `n` independent draws from a scalar learning data set.
///
/// Explicit mode enumerates ordered samples; multiset mode enumerates count
/// vectors and weights them with the multinomial coefficient. Products are
/// accumulated in log scale.
pub fn iid_product(
    base: &LearningData,
    n: usize,
    mode: SampleMode,
    cap: u128,
) -> Result<LearningData> {
    let labels = match &base.values {
        ZValues::Labels(l) => l.clone(),
        _ => {
            return Err(Error::arg(
                "iid_product needs scalar base learning data with explicit labels",
            ))
        }
    };
    if n == 0 {
        return Err(Error::arg("sample size must be at least 1"));
    }
    let g = labels.len();
    let m = base.n_models;
    let mut p_by_model = vec![0.0; m * g];
    for t in 0..m {
        for j in 0..g {
            p_by_model[t * g + j] = base.p(t, j);
        }
    }
    let ln_base: Vec<f64> = p_by_model.iter().map(|p| p.ln()).collect();
    let source = IidSource {
        labels,
        p: p_by_model,
        n,
    };

    match mode {
        SampleMode::Explicit => {
            let required = tuple_count(g, n);
            if required > cap {
                return Err(Error::SizeCap {
                    what: format!("explicit sample of size {n} over {g} values"),
                    required,
                    cap,
                });
            }
            let nz = required as usize;
            let mut p_z = vec![0.0; nz * m];
            let mut digits = vec![0usize; n];
            for z in 0..nz {
                for t in 0..m {
                    let row = &ln_base[t * g..(t + 1) * g];
                    let s: f64 = digits.iter().map(|&d| row[d]).sum();
                    p_z[z * m + t] = s.exp();
                }
                // increment mixed-radix counter, last digit fastest
                for d in digits.iter_mut().rev() {
                    *d += 1;
                    if *d < g {
                        break;
                    }
                    *d = 0;
                }
            }
            Ok(LearningData {
                values: ZValues::Tuples(source),
                n_values: nz,
                n_models: m,
                p_z,
                representation: Representation::IidProduct { n },
            })
        }
        SampleMode::Multiset => {
            let required = multiset_count(g, n);
            if required > cap {
                return Err(Error::SizeCap {
                    what: format!("multiset sample of size {n} over {g} values"),
                    required,
                    cap,
                });
            }
            let nz = required as usize;
            let lnf = ln_factorials(n);
            let mut counts = Vec::with_capacity(nz * g);
            let mut p_z = Vec::with_capacity(nz * m);
            let mut tuple = vec![0usize; n];
            let mut row = vec![0u16; g];
            loop {
                row.iter_mut().for_each(|c| *c = 0);
                for &v in &tuple {
                    row[v] += 1;
                }
                let ln_mult = lnf[n] - row.iter().map(|&c| lnf[c as usize]).sum::<f64>();
                for t in 0..m {
                    let lb = &ln_base[t * g..(t + 1) * g];
                    let mut s = ln_mult;
                    for (j, &c) in row.iter().enumerate() {
                        if c > 0 {
                            s += c as f64 * lb[j];
                        }
                    }
                    p_z.push(s.exp());
                }
                counts.extend_from_slice(&row);
                // next nondecreasing tuple in lexicographic order
                let Some(pos) = tuple.iter().rposition(|&v| v + 1 < g) else {
                    break;
                };
                let next = tuple[pos] + 1;
                tuple[pos..].iter_mut().for_each(|v| *v = next);
            }
            debug_assert_eq!(counts.len(), nz * g);
            Ok(LearningData {
                values: ZValues::Multisets { source, counts },
                n_values: nz,
                n_models: m,
                p_z,
                representation: Representation::Multiset { n },
            })
        }
    }
}

/// Loss `ω(y, y')` of deciding `y'` when the true state is `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    n: usize,
    w: Vec<f64>,
}

impl LossMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dim("loss matrix must be square"));
        }
        Ok(Self {
            n,
            w: rows.into_iter().flatten().collect(),
        })
    }

    pub fn zero_one(n: usize) -> Self {
        let mut w = vec![1.0; n * n];
        for i in 0..n {
            w[i * n + i] = 0.0;
        }
        Self { n, w }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            w: vec![0.0; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, y: usize, decision: usize) -> f64 {
        self.w[y * self.n + decision]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.w.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn min(&self) -> f64 {
        self.w.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Decision probabilities `q(y' | x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyTable {
    /// One decision index per `(z, x)`.
    Deterministic(Vec<u16>),
    /// Probabilities with layout `[z][x][y']`.
    Randomized(Vec<f64>),
}

/// A strategy over a fixed `(X, Z, Y)` index space.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    n_signals: usize,
    n_values: usize,
    n_decisions: usize,
    table: StrategyTable,
}

impl Strategy {
    /// Deterministic strategy from decisions laid out `[z][x]`.
    pub fn deterministic(
        n_signals: usize,
        n_values: usize,
        n_decisions: usize,
        decisions: Vec<u16>,
    ) -> Result<Self> {
        if decisions.len() != n_signals * n_values {
            return Err(Error::dim("decision table must have |Z|·|X| entries"));
        }
        if let Some(d) = decisions.iter().find(|&&d| d as usize >= n_decisions) {
            return Err(Error::dim(format!("decision {d} out of range")));
        }
        Ok(Self {
            n_signals,
            n_values,
            n_decisions,
            table: StrategyTable::Deterministic(decisions),
        })
    }

    /// Randomized strategy from probabilities laid out `[z][x][y']`.
    pub fn randomized(
        n_signals: usize,
        n_values: usize,
        n_decisions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if probs.len() != n_signals * n_values * n_decisions {
            return Err(Error::dim(
                "probability table must have |Z|·|X|·|Y| entries",
            ));
        }
        let s = Self {
            n_signals,
            n_values,
            n_decisions,
            table: StrategyTable::Randomized(probs),
        };
        s.check()?;
        Ok(s)
    }

    /// Same decision distribution for every `(x, z)`.
    pub fn constant(n_signals: usize, n_values: usize, dist: &[f64]) -> Result<Self> {
        let mut probs = Vec::with_capacity(n_signals * n_values * dist.len());
        for _ in 0..n_signals * n_values {
            probs.extend_from_slice(dist);
        }
        Self::randomized(n_signals, n_values, dist.len(), probs)
    }

    fn check(&self) -> Result<()> {
        if let StrategyTable::Randomized(p) = &self.table {
            for (cell, row) in p.chunks(self.n_decisions).enumerate() {
                if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::arg(format!(
                        "strategy cell {cell} has a negative or non-finite probability"
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::arg(format!(
                        "strategy cell {cell} sums to {s}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals
    }

    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn n_decisions(&self) -> usize {
        self.n_decisions
    }

    pub fn table(&self) -> &StrategyTable {
        &self.table
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.table, StrategyTable::Deterministic(_))
    }

    /// `q(decision | x, z)`.
    #[inline]
    pub fn prob(&self, x: usize, z: usize, decision: usize) -> f64 {
        match &self.table {
            StrategyTable::Deterministic(d) => {
                f64::from(u8::from(d[z * self.n_signals + x] as usize == decision))
            }
            StrategyTable::Randomized(p) => {
                p[(z * self.n_signals + x) * self.n_decisions + decision]
            }
        }
    }

    /// Decision of a deterministic strategy.
    pub fn decision(&self, x: usize, z: usize) -> Option<usize> {
        match &self.table {
            StrategyTable::Deterministic(d) => Some(d[z * self.n_signals + x] as usize),
            StrategyTable::Randomized(_) => None,
        }
    }

    /// Decision distribution at `(x, z)`.
    pub fn row(&self, x: usize, z: usize) -> Vec<f64> {
        (0..self.n_decisions).map(|d| self.prob(x, z, d)).collect()
    }

    /// Dense `[z][x][y']` probabilities.
    pub fn to_probs(&self) -> Vec<f64> {
        match &self.table {
            StrategyTable::Randomized(p) => p.clone(),
            StrategyTable::Deterministic(d) => {
                let mut out = vec![0.0; d.len() * self.n_decisions];
                for (cell, &dec) in d.iter().enumerate() {
                    out[cell * self.n_decisions + dec as usize] = 1.0;
                }
                out
            }
        }
    }

    /// Adds `weight · q` into a dense `[z][x][y']` accumulator.
    pub fn accumulate(&self, acc: &mut [f64], weight: f64) {
        match &self.table {
            StrategyTable::Randomized(p) => {
                acc.iter_mut().zip(p).for_each(|(a, v)| *a += weight * v);
            }
            StrategyTable::Deterministic(d) => {
                for (cell, &dec) in d.iter().enumerate() {
                    acc[cell * self.n_decisions + dec as usize] += weight;
                }
            }
        }
    }

    /// The mixture `λ·a + (1−λ)·b`.
    pub fn mix(lambda: f64, a: &Strategy, b: &Strategy) -> Result<Strategy> {
        if !a.same_shape(b) {
            return Err(Error::dim("mixed strategies have different shapes"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::arg("mixture weight must lie in [0, 1]"));
        }
        let mut acc = vec![0.0; a.n_signals * a.n_values * a.n_decisions];
        a.accumulate(&mut acc, lambda);
        b.accumulate(&mut acc, 1.0 - lambda);
        Strategy::randomized(a.n_signals, a.n_values, a.n_decisions, acc)
    }

    pub fn same_shape(&self, other: &Strategy) -> bool {
        self.n_signals == other.n_signals
            && self.n_values == other.n_values
            && self.n_decisions == other.n_decisions
    }
}

/// A weight function: a point of the probability simplex over models.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::arg("weights need at least one model"));
        }
        if tau.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::arg("weights must be finite and nonnegative"));
        }
        let s: f64 = tau.iter().sum();
        if (s - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::arg(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self(tau))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn point_mass(m: usize, model: usize) -> Self {
        let mut v = vec![0.0; m];
        v[model] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Weights {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Offsets `α(θ)` and positive scales `β(θ)` of a scaled worst-case criterion
/// `max_θ (R(q,θ) − α(θ)) / β(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingProfile {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl ScalingProfile {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::dim("alpha and beta must have one entry per model"));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::arg("alpha entries must be finite"));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::arg(format!(
                "beta entries must be positive, got {b}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// `α ≡ 0, β ≡ 1`: the plain minimax criterion.
    pub fn identity(m: usize) -> Self {
        Self {
            alpha: vec![0.0; m],
            beta: vec![1.0; m],
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Which table a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Pxy,
    Pz,
    Loss,
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Table::Pxy => "p_xy",
            Table::Pz => "p_z",
            Table::Loss => "loss",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFew {
        what: &'static str,
        count: usize,
        min: usize,
    },
    Negative {
        table: Table,
        index: Vec<usize>,
        value: f64,
    },
    NonFinite {
        table: Table,
        index: Vec<usize>,
    },
    Normalization {
        table: Table,
        model: usize,
        sum: f64,
        deficit: f64,
    },
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFew { what, count, min } => {
                write!(f, "{what}: {count} given, at least {min} required")
            }
            Violation::Negative {
                table,
                index,
                value,
            } => write!(f, "{table}{index:?} is negative ({value})"),
            Violation::NonFinite { table, index } => write!(f, "{table}{index:?} is not finite"),
            Violation::Normalization {
                table,
                model,
                sum,
                deficit,
            } => write!(
                f,
                "{table} for model {model} sums to {sum} (deficit {deficit:.3e})"
            ),
            Violation::Shape {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
        }
    }
}

/// Every invariant violation found in a problem; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Checks all probability and loss invariants and reports each violation.
pub fn validate_object(
    obj: &FiniteObject,
    ld: &LearningData,
    loss: &LossMatrix,
) -> ValidationReport {
    let mut out = Vec::new();
    let (nx, ny, m) = (obj.n_signals(), obj.n_states(), obj.n_models());
    if nx < 1 {
        out.push(Violation::TooFew {
            what: "signals",
            count: nx,
            min: 1,
        });
    }
    if ny < 2 {
        out.push(Violation::TooFew {
            what: "states",
            count: ny,
            min: 2,
        });
    }
    if m < 1 {
        out.push(Violation::TooFew {
            what: "models",
            count: m,
            min: 1,
        });
    }

    for t in 0..m {
        let mut sum = 0.0;
        let mut finite = true;
        for x in 0..nx {
            for y in 0..ny {
                let p = obj.p(t, x, y);
                if !p.is_finite() {
                    finite = false;
                    out.push(Violation::NonFinite {
                        table: Table::Pxy,
                        index: vec![t, x, y],
                    });
                } else if p < 0.0 {
                    out.push(Violation::Negative {
                        table: Table::Pxy,
                        index: vec![t, x, y],
                        value: p,
                    });
                }
                sum += p;
            }
        }
        if finite && (sum - 1.0).abs() > NORMALIZATION_TOL {
            out.push(Violation::Normalization {
                table: Table::Pxy,
                model: t,
                sum,
                deficit: 1.0 - sum,
            });
        }
    }

    if ld.n_models() != m {
        out.push(Violation::Shape {
            what: "learning data models",
            expected: m,
            found: ld.n_models(),
        });
    } else {
        if ld.is_empty() {
            out.push(Violation::TooFew {
                what: "learning data values",
                count: 0,
                min: 1,
            });
        }
        for t in 0..m {
            let mut sum = 0.0;
            let mut finite = true;
            for z in 0..ld.len() {
                let p = ld.p(t, z);
                if !p.is_finite() {
                    finite = false;
                    out.push(Violation::NonFinite {
                        table: Table::Pz,
                        index: vec![t, z],
                    });
                } else if p < 0.0 {
                    out.push(Violation::Negative {
                        table: Table::Pz,
                        index: vec![t, z],
                        value: p,
                    });
                }
                sum += p;
            }
            if finite && (sum - 1.0).abs() > NORMALIZATION_TOL {
                out.push(Violation::Normalization {
                    table: Table::Pz,
                    model: t,
                    sum,
                    deficit: 1.0 - sum,
                });
            }
        }
    }

    if loss.size() != ny {
        out.push(Violation::Shape {
            what: "loss matrix size",
            expected: ny,
            found: loss.size(),
        });
    }
    for y in 0..loss.size() {
        for d in 0..loss.size() {
            let w = loss.get(y, d);
            if !w.is_finite() {
                out.push(Violation::NonFinite {
                    table: Table::Loss,
                    index: vec![y, d],
                });
            } else if w < 0.0 {
                out.push(Violation::Negative {
                    table: Table::Loss,
                    index: vec![y, d],
                    value: w,
                });
            }
        }
    }
    ValidationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn t1() -> FiniteObject {
        FiniteObject::new(
            vec!["a".into()],
            vec!["1".into(), "2".into()],
            vec![ModelLabel::new("t")],
            vec![0.3, 0.7],
        )
        .unwrap()
    }

    fn coin(m: usize) -> LearningData {
        let p: Vec<f64> = (0..m).flat_map(|_| [0.5, 0.5]).collect();
        LearningData::new(labels("c", 2), m, &p).unwrap()
    }

    #[test]
    fn valid_object_has_empty_report() {
        let obj = t1();
        let ld = LearningData::new(labels("z", 4), 1, &[0.25; 4]).unwrap();
        let report = validate_object(&obj, &ld, &LossMatrix::zero_one(2));
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn negative_entry_is_reported_with_index() {
        let obj = FiniteObject::new(
            labels("x", 2),
            labels("y", 2),
            vec![ModelLabel::new("t")],
            vec![0.5, -0.1, 0.3, 0.3],
        )
        .unwrap();
        let report = validate_object(&obj, &LearningData::none(1), &LossMatrix::zero_one(2));
        assert!(report.violations.contains(&Violation::Negative {
            table: Table::Pxy,
            index: vec![0, 0, 1],
            value: -0.1
        }));
    }

    #[test]
    fn normalization_deficit_is_reported() {
        let ld = LearningData::new(labels("z", 2), 1, &[0.4, 0.5]).unwrap();
        let report = validate_object(&t1(), &ld, &LossMatrix::zero_one(2));
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::Normalization {
                table,
                model,
                deficit,
                ..
            } => {
                assert_eq!(*table, Table::Pz);
                assert_eq!(*model, 0);
                assert!((deficit - 0.1).abs() < 1e-12);
            }
            v => panic!("unexpected {v}"),
        }
    }

    #[test]
    fn too_few_states_and_bad_loss_shape() {
        let obj = FiniteObject::new(
            labels("x", 1),
            labels("y", 1),
            vec![ModelLabel::new("t")],
            vec![1.0],
        )
        .unwrap();
        let report = validate_object(&obj, &LearningData::none(1), &LossMatrix::zero_one(2));
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn explicit_fair_coin_pairs() {
        let ld = iid_product(&coin(1), 2, SampleMode::Explicit, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(ld.len(), 4);
        for z in 0..4 {
            assert!((ld.p(0, z) - 0.25).abs() < 1e-15);
        }
        assert_eq!(ld.representation(), Representation::IidProduct { n: 2 });
        assert_eq!(ld.label(1), "(c0,c1)");
    }

    #[test]
    fn multiset_fair_coin_pairs_is_binomial() {
        let ld = iid_product(&coin(1), 2, SampleMode::Multiset, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(ld.len(), 3);
        let p: Vec<f64> = (0..3).map(|z| ld.p(0, z)).collect();
        for (a, b) in p.iter().zip([0.25, 0.5, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ld.counts(1), Some(&[1u16, 1][..]));
    }

    /// Aggregating all 27 ordered triples by their count vector.
    #[test]
    fn multiset_probabilities_match_enumeration_of_ordered_triples() {
        let base_p = [0.2, 0.3, 0.5];
        let base = LearningData::new(labels("g", 3), 1, &base_p).unwrap();
        let ld = iid_product(&base, 3, SampleMode::Multiset, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(ld.len(), 10);

        let mut oracle = std::collections::BTreeMap::<Vec<u16>, f64>::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut counts = vec![0u16; 3];
                    counts[a] += 1;
                    counts[b] += 1;
                    counts[c] += 1;
                    *oracle.entry(counts).or_default() += base_p[a] * base_p[b] * base_p[c];
                }
            }
        }
        assert_eq!(oracle.len(), 10);
        for z in 0..ld.len() {
            let expected = oracle[ld.counts(z).unwrap()];
            assert!((ld.p(0, z) - expected).abs() < 1e-15);
        }
        let z111 = (0..ld.len())
            .find(|&z| ld.counts(z) == Some(&[1, 1, 1][..]))
            .unwrap();
        assert!((ld.p(0, z111) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn caps_are_enforced() {
        let base = LearningData::new(labels("g", 10), 1, &[0.1; 10]).unwrap();
        let err = iid_product(&base, 3, SampleMode::Explicit, 999).unwrap_err();
        match err {
            Error::SizeCap { required, .. } => assert_eq!(required, 1000),
            e => panic!("{e}"),
        }
        let err = iid_product(&base, 3, SampleMode::Multiset, 219).unwrap_err();
        match err {
            Error::SizeCap { required, .. } => assert_eq!(required, 220),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn ranking_agrees_with_enumeration_order() {
        let base = LearningData::new(labels("g", 4), 1, &[0.25; 4]).unwrap();
        let ld = iid_product(&base, 3, SampleMode::Multiset, DEFAULT_ENUMERATION_CAP).unwrap();
        for z in 0..ld.len() {
            let counts = ld.counts(z).unwrap();
            let mut draws = Vec::new();
            for (j, &c) in counts.iter().enumerate().rev() {
                draws.extend(std::iter::repeat_n(j, c as usize));
            }
            assert_eq!(ld.index_of_draws(&draws), Some(z));
        }
        let ex = iid_product(&base, 2, SampleMode::Explicit, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(ex.index_of_draws(&[2, 3]), Some(11));
    }

    #[test]
    fn counts_formulas() {
        assert_eq!(multiset_count(3, 3), 10);
        assert_eq!(multiset_count(33, 2), 561);
        assert_eq!(multiset_count(17, 10), 5_311_735);
        assert_eq!(tuple_count(3, 3), 27);
    }

    #[test]
    fn strategy_checks_normalization() {
        assert!(Strategy::randomized(1, 1, 2, vec![0.5, 0.6]).is_err());
        assert!(Strategy::deterministic(1, 1, 2, vec![2]).is_err());
        let q = Strategy::mix(
            0.25,
            &Strategy::deterministic(1, 1, 2, vec![0]).unwrap(),
            &Strategy::deterministic(1, 1, 2, vec![1]).unwrap(),
        )
        .unwrap();
        assert_eq!(q.row(0, 0), vec![0.25, 0.75]);
    }

    #[test]
    fn weights_and_profiles_validate() {
        assert!(Weights::new(vec![0.5, 0.6]).is_err());
        assert!(Weights::new(vec![-0.1, 1.1]).is_err());
        assert!(ScalingProfile::new(vec![0.0], vec![0.0]).is_err());
        assert!(ScalingProfile::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    proptest! {
        #[test]
        fn multiset_mass_sums_to_one(raw in proptest::collection::vec(0.01f64..1.0, 2..5), n in 1usize..5) {
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let base = LearningData::new(labels("g", p.len()), 1, &p).unwrap();
            let ld = iid_product(&base, n, SampleMode::Multiset, DEFAULT_ENUMERATION_CAP).unwrap();
            let total: f64 = (0..ld.len()).map(|z| ld.p(0, z)).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert_eq!(ld.len() as u128, multiset_count(p.len(), n));
        }
    }
}
