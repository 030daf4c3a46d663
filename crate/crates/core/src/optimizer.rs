//! Maximization of concave piecewise-linear functions over the probability
//! simplex.
//!
//! The objectives handled here all have the form
//! `Φ(τ) = min_q Σ_θ τ(θ) G(q)(θ)` where `G(q)` is the payoff vector of a
//! witness `q`. At any `τ` the payoff vector of the minimizing witness is a
//! supergradient of `Φ`, and `max_θ G(q)(θ)` is an upper bound on `max Φ`
//! for every `q`. The solver runs projected subgradient ascent and keeps a
//! running mixture of witnesses, so each iteration yields both a lower and an
//! upper bound on the optimal value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Strategy;
use crate::model::Weights;

/// What an oracle returns at one point of the simplex.
#[derive(Debug, Clone)]
pub struct OracleOutput<W> {
    /// `Φ(τ)`; equals `Σ_θ τ(θ) subgradient(θ)`.
    pub value: f64,
    /// Payoff vector of the witness.
    pub subgradient: Vec<f64>,
    pub witness: W,
}

pub trait SimplexOracle {
    type Witness: Witness;

    fn dim(&self) -> usize;

    fn evaluate(&self, tau: &[f64]) -> Result<OracleOutput<Self::Witness>>;

    /// `Φ(τ)` alone; override when it is cheaper than a full evaluation.
    fn value(&self, tau: &[f64]) -> Result<f64> {
        Ok(self.evaluate(tau)?.value)
    }
}

/// Witnesses that can be averaged into a mixture.
pub trait Witness: Clone {
    fn zero_mixture(&self) -> Vec<f64>;
    fn accumulate(&self, acc: &mut [f64], weight: f64);
    /// Witness shaped like `self` holding the averaged table `acc`.
    fn rebuild(&self, acc: Vec<f64>) -> Result<Self>;
}

impl Witness for Strategy {
    fn zero_mixture(&self) -> Vec<f64> {
        vec![0.0; self.n_signals() * self.n_values() * self.n_decisions()]
    }

    fn accumulate(&self, acc: &mut [f64], weight: f64) {
        Strategy::accumulate(self, acc, weight);
    }

    fn rebuild(&self, mut acc: Vec<f64>) -> Result<Self> {
        // the running sums drift off the simplex by rounding only
        for row in acc.chunks_mut(self.n_decisions()) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        Strategy::randomized(self.n_signals(), self.n_values(), self.n_decisions(), acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Target duality gap.
    pub tol: f64,
    /// Initial step; `None` means `1 / (1 + ‖g₀‖)`.
    pub step0: Option<f64>,
    /// Stop as soon as the best lower bound reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_lower: Option<f64>,
    /// A value known to bound `max Φ` from above. When set, steps follow
    /// Polyak's rule toward it instead of the diminishing schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known_max: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-3,
            step0: None,
            stop_at_lower: None,
            known_max: None,
        }
    }
}

/// Which candidate became the returned witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessSource {
    Mixture,
    BestLower,
    /// Mixture restricted to strategies tied at the best weights.
    Tied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub phi: f64,
    pub best_phi: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub tau: Vec<f64>,
    /// Best lower bound `Φ(τ̂)`.
    pub phi: f64,
    /// Worst-case payoff of the returned witness.
    pub upper: f64,
    pub gap: f64,
    pub iters: usize,
    pub converged: bool,
    #[serde(skip)]
    pub source: Option<WitnessSource>,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct Solution<W> {
    pub report: SolveReport,
    pub witness: W,
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_to_simplex(v: &[f64]) -> Weights {
    assert!(!v.is_empty(), "projection needs at least one coordinate");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut threshold = (sorted[0] - 1.0) / 1.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        } else {
            break;
        }
    }
    let mut tau: Vec<f64> = v.iter().map(|&x| (x - threshold).max(0.0)).collect();
    // remove rounding drift so the result passes the simplex check exactly
    let s: f64 = tau.iter().sum();
    tau.iter_mut().for_each(|t| *t /= s);
    Weights::new(tau).expect("projection lies on the simplex")
}

/// Main-sequence iterations between two lower-bound probes.
const PROBE_EVERY: usize = 400;
/// Iterations spent in one probe.
const PROBE_LEN: usize = 100;
/// Consecutive non-improving probe steps before the target is lowered.
const PROBE_PATIENCE: usize = 10;

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `g` minus its mean; a common shift does not change the projection.
fn centered(g: &[f64]) -> Vec<f64> {
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    g.iter().map(|x| x - mean).collect()
}

/// Polyak step from `tau` along `dir` toward the level `target`. `None` when
/// the direction vanishes.
fn polyak_step(tau: &[f64], dir: &[f64], value: f64, target: f64) -> Option<Vec<f64>> {
    let sq: f64 = dir.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return None;
    }
    let step = (target - value).max(0.0) / sq;
    let moved: Vec<f64> = tau.iter().zip(dir).map(|(t, x)| t + step * x).collect();
    Some(project_to_simplex(&moved).into_vec())
}

/// Deflects `g` by the previous direction when the two disagree, which damps
/// the zigzag across narrow ridges.
fn deflect(g: Vec<f64>, prev: &[f64]) -> Vec<f64> {
    let sq: f64 = prev.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return g;
    }
    let dot: f64 = g.iter().zip(prev).map(|(a, b)| a * b).sum();
    let beta = (-1.5 * dot / sq).max(0.0);
    g.iter().zip(prev).map(|(a, b)| a + beta * b).collect()
}

/// Projected subgradient ascent from the uniform point with steps
/// `s₀ / √(k+1)`.
///
/// Before the ascent every vertex of the simplex is evaluated once; saddle
/// points at a vertex are common (a single model is least favourable) and the
/// ascent would only approach them asymptotically. A vertex whose own witness
/// closes the gap is returned directly. `iters` counts oracle evaluations.
///
/// The diminishing schedule crawls along narrow ridges, so every
/// [`PROBE_EVERY`] steps a short probe starts from the best point with
/// deflected Polyak steps aimed a little above the best lower bound. Probes only sharpen the
/// lower bound: the main sequence resumes where it left off and probe
/// witnesses stay out of the mixture.
///
/// Returns whichever of the running uniform mixture of ascent witnesses and
/// the witness at the best lower bound has the smaller worst-case payoff.
pub fn maximize_on_simplex<O: SimplexOracle>(
    oracle: &O,
    cfg: &SolverConfig,
) -> Result<Solution<O::Witness>> {
    let m = oracle.dim();
    if m == 0 {
        return Err(Error::arg("oracle dimension must be positive"));
    }
    if cfg.max_iters == 0 {
        return Err(Error::arg("at least one iteration is required"));
    }
    let mut tau = Weights::uniform(m).into_vec();
    let mut step0 = cfg.step0;

    let mut best_phi = f64::NEG_INFINITY;
    let mut best_tau = tau.clone();
    let mut best: Option<(O::Witness, f64)> = None;

    let mut mix_acc: Option<Vec<f64>> = None;
    let mut mix_payoff = vec![0.0; m];
    let mut mix_count = 0usize;
    let mut mix_template: Option<O::Witness> = None;

    let mut trace = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    let reached = |phi: f64| cfg.stop_at_lower.is_some_and(|t| phi >= t);

    if m > 1 {
        for v in 0..m {
            let mut e = vec![0.0; m];
            e[v] = 1.0;
            let out = oracle.evaluate(&e)?;
            check_output(&out, m, iters)?;
            iters += 1;
            let upper = max_of(&out.subgradient);
            if out.value > best_phi {
                best_phi = out.value;
                best_tau = e;
                best = Some((out.witness, upper));
            }
            if upper - out.value <= cfg.tol || reached(best_phi) {
                let (witness, upper) = best.expect("vertex evaluated");
                trace.push(TracePoint {
                    phi: out.value,
                    best_phi,
                    upper,
                });
                return Ok(Solution {
                    report: SolveReport {
                        tau: best_tau,
                        phi: best_phi,
                        upper,
                        gap: upper - best_phi,
                        iters,
                        converged: upper - best_phi <= cfg.tol,
                        source: Some(WitnessSource::BestLower),
                        trace,
                    },
                    witness,
                });
            }
        }
    }

    let mut k = 0usize;
    let mut probe_left = 0usize;
    let mut probe_tau = Vec::new();
    let mut probe_dir: Vec<f64> = Vec::new();
    let mut delta = 0.0f64;
    let mut misses = 0usize;
    for _ in 0..cfg.max_iters {
        let probing = probe_left > 0;
        let at = if probing { &probe_tau } else { &tau };
        let out = oracle.evaluate(at)?;
        check_output(&out, m, iters)?;
        iters += 1;
        let upper_here = max_of(&out.subgradient);

        if !probing {
            mix_count += 1;
            let acc = mix_acc.get_or_insert_with(|| out.witness.zero_mixture());
            out.witness.accumulate(acc, 1.0);
            for (a, g) in mix_payoff.iter_mut().zip(&out.subgradient) {
                *a += g;
            }
            if mix_template.is_none() {
                mix_template = Some(out.witness.clone());
            }
        }
        let mix_upper = if mix_count == 0 {
            f64::INFINITY
        } else {
            max_of(&mix_payoff) / mix_count as f64
        };

        let improved = out.value > best_phi;
        if improved {
            best_phi = out.value;
            best_tau.clone_from(at);
            best = Some((out.witness, upper_here));
        }
        let best_upper = best.as_ref().map_or(f64::INFINITY, |b| b.1);
        let upper = mix_upper.min(best_upper);
        trace.push(TracePoint {
            phi: out.value,
            best_phi,
            upper,
        });
        if upper - best_phi <= cfg.tol {
            converged = true;
            break;
        }
        if reached(best_phi) {
            break;
        }

        if probing {
            // the target sits too high once the probe stops improving
            if improved {
                misses = 0;
                delta = (1.5 * delta).min(upper - best_phi);
            } else {
                misses += 1;
                if misses == PROBE_PATIENCE {
                    misses = 0;
                    delta = (0.5 * delta).max(cfg.tol / 8.0);
                }
            }
            probe_left -= 1;
            if probe_left > 0 {
                probe_dir = deflect(centered(&out.subgradient), &probe_dir);
                match polyak_step(&probe_tau, &probe_dir, out.value, best_phi + delta) {
                    Some(next) => probe_tau = next,
                    None => probe_left = 0,
                }
            }
            continue;
        }

        tau = if let Some(f) = cfg.known_max {
            match polyak_step(&tau, &centered(&out.subgradient), out.value, f) {
                Some(next) => next,
                None => break,
            }
        } else {
            let norm = out.subgradient.iter().map(|g| g * g).sum::<f64>().sqrt();
            let s0 = *step0.get_or_insert(1.0 / (1.0 + norm));
            let step = s0 / ((k + 1) as f64).sqrt();
            let moved: Vec<f64> = tau
                .iter()
                .zip(&out.subgradient)
                .map(|(t, g)| t + step * g)
                .collect();
            project_to_simplex(&moved).into_vec()
        };
        k += 1;
        if cfg.known_max.is_none() && k.is_multiple_of(PROBE_EVERY) {
            probe_left = PROBE_LEN;
            probe_tau.clone_from(&best_tau);
            probe_dir.clear();
            delta = (upper - best_phi) / 2.0;
            misses = 0;
        }
    }

    let (best_witness, best_upper) = best.expect("at least one iteration ran");
    let mix_upper = if mix_count == 0 {
        f64::INFINITY
    } else {
        max_of(&mix_payoff) / mix_count as f64
    };
    let (witness, upper, source) = if mix_upper < best_upper {
        let template = mix_template.expect("mixture initialized");
        let mixed = if mix_count == 1 {
            template
        } else {
            let mut acc = mix_acc.expect("mixture initialized");
            acc.iter_mut().for_each(|a| *a /= mix_count as f64);
            template.rebuild(acc)?
        };
        (mixed, mix_upper, WitnessSource::Mixture)
    } else {
        (best_witness, best_upper, WitnessSource::BestLower)
    };
    Ok(Solution {
        report: SolveReport {
            tau: best_tau,
            phi: best_phi,
            upper,
            gap: upper - best_phi,
            iters,
            converged,
            source: Some(source),
            trace,
        },
        witness,
    })
}

fn check_output<W>(out: &OracleOutput<W>, m: usize, iteration: usize) -> Result<()> {
    if !out.value.is_finite() || out.subgradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { iteration });
    }
    if out.subgradient.len() != m {
        return Err(Error::dim("oracle subgradient has the wrong length"));
    }
    Ok(())
}

/// Number of points of the simplex grid with `resolution` steps per edge.
fn grid_size(m: usize, resolution: usize) -> u128 {
    crate::model::multiset_count(m, resolution)
}

/// Exhaustive search over the regular simplex grid `{τ : τ(θ)·resolution ∈ ℕ}`.
pub fn grid_oracle<O: SimplexOracle>(oracle: &O, resolution: usize) -> Result<(Weights, f64)> {
    let m = oracle.dim();
    if m == 0 || m > 4 {
        return Err(Error::arg(format!(
            "grid search supports 1 to 4 models, got {m}"
        )));
    }
    if resolution == 0 {
        return Err(Error::arg("grid resolution must be positive"));
    }
    debug_assert!(grid_size(m, resolution) < u128::from(u32::MAX));
    let mut counts = vec![0usize; m];
    counts[0] = resolution;
    let mut tau = vec![0.0; m];
    let mut best_val = f64::NEG_INFINITY;
    let mut best_tau = vec![0.0; m];
    loop {
        for (t, &c) in tau.iter_mut().zip(&counts) {
            *t = c as f64 / resolution as f64;
        }
        let v = oracle.value(&tau)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { iteration: 0 });
        }
        if v > best_val {
            best_val = v;
            best_tau.clone_from(&tau);
        }
        // next composition of `resolution` into m parts
        if m == 1 {
            break;
        }
        let Some(pos) = (0..m - 1).rev().find(|&i| counts[i] > 0) else {
            break;
        };
        counts[pos] -= 1;
        let tail: usize = counts[pos + 1..].iter().sum::<usize>() + 1;
        counts[pos + 1..].iter_mut().for_each(|c| *c = 0);
        counts[pos + 1] = tail;
    }
    Ok((Weights::new(best_tau)?, best_val))
}
