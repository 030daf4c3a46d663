#![allow(dead_code)]

use mindev::model::{iid_product, SampleMode};
use mindev::{FiniteObject, LearningData, LossMatrix, ModelLabel, Strategy};
use rand::Rng;

pub fn labels(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

/// Point on the simplex with every coordinate at least `floor` before
/// normalization.
pub fn random_simplex(rng: &mut impl Rng, k: usize, floor: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.gen_range(floor..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random object, optionally with some zero cells in `p_xy`.
pub fn random_object(rng: &mut impl Rng, nx: usize, ny: usize, m: usize) -> FiniteObject {
    let mut p = Vec::with_capacity(m * nx * ny);
    for _ in 0..m {
        let mut row: Vec<f64> = (0..nx * ny)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        if row.iter().all(|v| *v == 0.0) {
            row[0] = 1.0;
        }
        let s: f64 = row.iter().sum();
        p.extend(row.into_iter().map(|v| v / s));
    }
    FiniteObject::new(
        labels("x", nx),
        labels("y", ny),
        labels("t", m).into_iter().map(ModelLabel::new).collect(),
        p,
    )
    .unwrap()
}

pub fn random_learning(rng: &mut impl Rng, nz: usize, m: usize) -> LearningData {
    let mut p = Vec::with_capacity(m * nz);
    for _ in 0..m {
        p.extend(random_simplex(rng, nz, 0.0));
    }
    LearningData::new(labels("z", nz), m, &p).unwrap()
}

pub fn random_loss(rng: &mut impl Rng, ny: usize) -> LossMatrix {
    let rows = (0..ny)
        .map(|y| {
            (0..ny)
                .map(|d| if y == d { 0.0 } else { rng.gen_range(0.1..2.0) })
                .collect()
        })
        .collect();
    LossMatrix::new(rows).unwrap()
}

pub fn random_strategy(rng: &mut impl Rng, nx: usize, nz: usize, ny: usize) -> Strategy {
    let mut p = Vec::with_capacity(nx * nz * ny);
    for _ in 0..nx * nz {
        p.extend(random_simplex(rng, ny, 0.0));
    }
    Strategy::randomized(nx, nz, ny, p).unwrap()
}

pub struct Instance {
    pub obj: FiniteObject,
    pub ld: LearningData,
    pub loss: LossMatrix,
}

/// Tiny random instance with `|X|, |Y| ≤ 3`, `|Z| ≤ 3` and the given model count.
pub fn tiny_instance(rng: &mut impl Rng, m: usize) -> Instance {
    let nx = rng.gen_range(1..=3);
    let ny = rng.gen_range(2..=3);
    let nz = rng.gen_range(1..=3);
    Instance {
        obj: random_object(rng, nx, ny, m),
        ld: random_learning(rng, nz, m),
        loss: LossMatrix::zero_one(ny),
    }
}

/// Learning data of `n` draws from a random base of `g` values, in both modes.
pub fn paired_samples(
    rng: &mut impl Rng,
    g: usize,
    m: usize,
    n: usize,
) -> (LearningData, LearningData) {
    let base = random_learning(rng, g, m);
    (
        iid_product(&base, n, SampleMode::Explicit, 1 << 20).unwrap(),
        iid_product(&base, n, SampleMode::Multiset, 1 << 20).unwrap(),
    )
}
