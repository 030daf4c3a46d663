//! JSON documents: model specs and strategy tables.
//!
//! Model spec:
//!
//! ```json
//! {"signals": ["a"], "states": ["1", "2"],
//!  "models": [{"label": "t1", "param": 0.5}],
//!  "p_xy": {"t1": [[0.3, 0.7]]},
//!  "learning": {"values": ["z"], "p_z": {"t1": [1.0]}},
//!  "loss": [[0, 1], [1, 0]]}
//! ```
//!
//! `learning` and `loss` are optional (no learning data, 0/1 loss). Label
//! order in the document is index order.
//!
//! Strategy document: `{"x-label": {"z-label": [prob per decision]}}`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{
    validate_object, FiniteObject, LearningData, LossMatrix, ModelLabel, Strategy,
    NORMALIZATION_TOL,
};

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct LearningDoc {
    values: Vec<String>,
    p_z: Map<String, Value>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    signals: Vec<String>,
    states: Vec<String>,
    models: Vec<ModelDoc>,
    p_xy: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    learning: Option<LearningDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss: Option<Vec<Vec<f64>>>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema(e.to_string()),
        _ => Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })
}

fn check_unique<'a>(what: &str, labels: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::Schema(format!("duplicate {what} label \"{l}\"")));
        }
    }
    Ok(())
}

/// Looks up one entry per model in a label-keyed map and rejects extra keys.
fn per_model<'m>(
    field: &str,
    map: &'m Map<String, Value>,
    models: &[ModelDoc],
) -> Result<Vec<&'m Value>> {
    let known: HashSet<&str> = models.iter().map(|m| m.label.as_str()).collect();
    if let Some(extra) = map.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::Schema(format!(
            "{field} has an entry for unknown model \"{extra}\""
        )));
    }
    models
        .iter()
        .map(|m| {
            map.get(&m.label)
                .ok_or_else(|| Error::Schema(format!("{field} is missing model \"{}\"", m.label)))
        })
        .collect()
}

fn number(v: &Value, at: impl Fn() -> String) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Schema(format!("{} must be a number", at())))
}

/// Parses and validates a model spec; tables within the normalization
/// tolerance are renormalized once.
pub fn load_model_spec(text: &str) -> Result<(FiniteObject, LearningData, LossMatrix)> {
    let doc: SpecDoc = parse_json(text)?;
    check_unique("signal", doc.signals.iter().map(String::as_str))?;
    check_unique("state", doc.states.iter().map(String::as_str))?;
    check_unique("model", doc.models.iter().map(|m| m.label.as_str()))?;
    let (nx, ny) = (doc.signals.len(), doc.states.len());

    let mut p_xy = Vec::with_capacity(doc.models.len() * nx * ny);
    for (m, table) in doc
        .models
        .iter()
        .zip(per_model("p_xy", &doc.p_xy, &doc.models)?)
    {
        let rows = table.as_array().filter(|r| r.len() == nx).ok_or_else(|| {
            Error::Schema(format!(
                "p_xy[\"{}\"] must have one row per signal ({nx})",
                m.label
            ))
        })?;
        for (x, row) in rows.iter().enumerate() {
            let cols = row.as_array().filter(|c| c.len() == ny).ok_or_else(|| {
                Error::Schema(format!(
                    "p_xy[\"{}\"][{x}] must have one entry per state ({ny})",
                    m.label
                ))
            })?;
            for (y, v) in cols.iter().enumerate() {
                p_xy.push(number(v, || format!("p_xy[\"{}\"][{x}][{y}]", m.label))?);
            }
        }
    }
    let models: Vec<ModelLabel> = doc
        .models
        .iter()
        .map(|m| ModelLabel {
            label: m.label.clone(),
            param: m.param,
        })
        .collect();
    let mut obj = FiniteObject::new(doc.signals, doc.states, models, p_xy)?;

    let mut ld = match &doc.learning {
        None => LearningData::none(doc.models.len()),
        Some(l) => {
            check_unique("learning value", l.values.iter().map(String::as_str))?;
            let nz = l.values.len();
            let mut p = Vec::with_capacity(doc.models.len() * nz);
            for (m, row) in doc
                .models
                .iter()
                .zip(per_model("p_z", &l.p_z, &doc.models)?)
            {
                let row = row.as_array().filter(|r| r.len() == nz).ok_or_else(|| {
                    Error::Schema(format!(
                        "p_z[\"{}\"] must have one entry per learning value ({nz})",
                        m.label
                    ))
                })?;
                for (z, v) in row.iter().enumerate() {
                    p.push(number(v, || format!("p_z[\"{}\"][{z}]", m.label))?);
                }
            }
            LearningData::new(l.values.clone(), doc.models.len(), &p)?
        }
    };

    let loss = match doc.loss {
        None => LossMatrix::zero_one(ny),
        Some(rows) => {
            if rows.len() != ny || rows.iter().any(|r| r.len() != ny) {
                return Err(Error::Schema(format!("loss must be a {ny}×{ny} matrix")));
            }
            LossMatrix::new(rows)?
        }
    };

    let report = validate_object(&obj, &ld, &loss);
    if !report.is_valid() {
        return Err(Error::Validation(report));
    }
    obj.renormalize();
    ld.renormalize();
    Ok((obj, ld, loss))
}

/// Serializes a problem as a model spec. Structured learning values are
/// written out as their labels.
pub fn emit_model_spec(obj: &FiniteObject, ld: &LearningData, loss: &LossMatrix) -> String {
    let mut p_xy = Map::new();
    for (t, m) in obj.models().iter().enumerate() {
        let rows: Vec<Value> = (0..obj.n_signals())
            .map(|x| (0..obj.n_states()).map(|y| obj.p(t, x, y)).collect())
            .collect();
        p_xy.insert(m.label.clone(), Value::Array(rows));
    }
    let trivial = *ld == LearningData::none(ld.n_models());
    let learning = (!trivial).then(|| {
        let mut p_z = Map::new();
        for (t, m) in obj.models().iter().enumerate() {
            let row: Vec<f64> = (0..ld.len()).map(|z| ld.p(t, z)).collect();
            p_z.insert(m.label.clone(), row.into());
        }
        LearningDoc {
            values: ld.labels(),
            p_z,
        }
    });
    let doc = SpecDoc {
        signals: obj.signals().to_vec(),
        states: obj.states().to_vec(),
        models: obj
            .models()
            .iter()
            .map(|m| ModelDoc {
                label: m.label.clone(),
                param: m.param,
            })
            .collect(),
        p_xy,
        learning,
        loss: (loss != &LossMatrix::zero_one(obj.n_states())).then(|| loss.rows()),
    };
    serde_json::to_string_pretty(&doc).expect("spec serializes")
}

/// Serializes a strategy keyed by signal and learning-value labels.
pub fn emit_strategy(q: &Strategy, obj: &FiniteObject, ld: &LearningData) -> Result<String> {
    if q.n_signals() != obj.n_signals() || q.n_values() != ld.len() {
        return Err(Error::dim("strategy does not match the problem"));
    }
    let z_labels = ld.labels();
    let mut doc = Map::new();
    for (x, xl) in obj.signals().iter().enumerate() {
        let mut per_z = Map::new();
        for (z, zl) in z_labels.iter().enumerate() {
            per_z.insert(zl.clone(), q.row(x, z).into());
        }
        doc.insert(xl.clone(), Value::Object(per_z));
    }
    Ok(serde_json::to_string_pretty(&Value::Object(doc)).expect("strategy serializes"))
}

/// Parses a strategy document against a problem's labels. Every `(x, z)`
/// pair must be present; rows within the normalization tolerance are
/// renormalized. All-one-hot documents load as deterministic strategies.
pub fn load_strategy(text: &str, obj: &FiniteObject, ld: &LearningData) -> Result<Strategy> {
    let doc: Map<String, Value> = parse_json(text)?;
    let (nx, nz, ny) = (obj.n_signals(), ld.len(), obj.n_states());
    let z_labels = ld.labels();
    if let Some(extra) = doc.keys().find(|k| !obj.signals().contains(k)) {
        return Err(Error::Schema(format!("unknown signal \"{extra}\"")));
    }
    let mut probs = vec![0.0; nz * nx * ny];
    for (x, xl) in obj.signals().iter().enumerate() {
        let per_z = doc
            .get(xl)
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Schema(format!("missing signal \"{xl}\"")))?;
        if let Some(extra) = per_z.keys().find(|k| !z_labels.contains(k)) {
            return Err(Error::Schema(format!(
                "unknown learning value \"{extra}\" under signal \"{xl}\""
            )));
        }
        for (z, zl) in z_labels.iter().enumerate() {
            let row = per_z
                .get(zl)
                .and_then(Value::as_array)
                .filter(|r| r.len() == ny)
                .ok_or_else(|| {
                    Error::Schema(format!(
                        "\"{xl}\" → \"{zl}\" must list one probability per decision ({ny})"
                    ))
                })?;
            let at = (z * nx + x) * ny;
            for (d, v) in row.iter().enumerate() {
                probs[at + d] = number(v, || format!("\"{xl}\" → \"{zl}\"[{d}]"))?;
            }
            let cell = &mut probs[at..at + ny];
            let sum: f64 = cell.iter().sum();
            if cell.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Schema(format!(
                    "\"{xl}\" → \"{zl}\" is not a probability distribution (sum {sum})"
                )));
            }
            cell.iter_mut().for_each(|p| *p /= sum);
        }
    }
    let one_hot: Option<Vec<u16>> = probs
        .chunks(ny)
        .map(|c| c.iter().position(|&p| p == 1.0).map(|d| d as u16))
        .collect();
    match one_hot {
        Some(dec) => Strategy::deterministic(nx, nz, ny, dec),
        None => Strategy::randomized(nx, nz, ny, probs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T1: &str = r#"{
  "signals": ["a"],
  "states": ["1", "2"],
  "models": [{"label": "t1"}],
  "p_xy": {"t1": [[0.3, 0.7]]}
}"#;

    const T2_LEARN: &str = r#"{
  "signals": ["a", "b"],
  "states": ["1", "2"],
  "models": [{"label": "t1", "param": 1.0}, {"label": "t2", "param": 2.0}],
  "p_xy": {"t1": [[0.4, 0.1], [0.2, 0.3]], "t2": [[0.1, 0.2], [0.3, 0.4]]},
  "learning": {"values": ["h", "t"], "p_z": {"t1": [0.3, 0.7], "t2": [0.6, 0.4]}},
  "loss": [[0, 2], [1, 0]]
}"#;

    #[test]
    fn t1_loads_with_defaults() {
        let (obj, ld, loss) = load_model_spec(T1).unwrap();
        assert_eq!((obj.n_signals(), obj.n_states(), obj.n_models()), (1, 2, 1));
        assert_eq!(ld.len(), 1);
        assert_eq!(loss, LossMatrix::zero_one(2));
    }

    #[test]
    fn explicit_identity_loss_equals_default() {
        let text = T1.replace("\n}", ",\n  \"loss\": [[0, 1], [1, 0]]\n}");
        let (_, _, loss) = load_model_spec(&text).unwrap();
        assert_eq!(loss, LossMatrix::zero_one(2));
    }

    #[test]
    fn round_trip_is_identical() {
        for text in [T1, T2_LEARN] {
            let a = load_model_spec(text).unwrap();
            let b = load_model_spec(&emit_model_spec(&a.0, &a.1, &a.2)).unwrap();
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
            assert_eq!(a.2, b.2);
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        match load_model_spec("{\n  \"signals\": [\"a\",\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let missing = T1.replace("\"signals\": [\"a\"],", "");
        let err = load_model_spec(&missing).unwrap_err().to_string();
        assert!(err.contains("signals"), "{err}");
        let extra = T1.replace("\"signals\"", "\"colour\": 1, \"signals\"");
        let err = load_model_spec(&extra).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        let unknown = T1.replace(
            "{\"t1\": [[0.3, 0.7]]}",
            "{\"t1\": [[0.3, 0.7]], \"t9\": []}",
        );
        let err = load_model_spec(&unknown).unwrap_err().to_string();
        assert!(err.contains("t9"), "{err}");
        let short = T1.replace("[[0.3, 0.7]]", "[[0.3]]");
        assert!(matches!(load_model_spec(&short), Err(Error::Schema(_))));
    }

    #[test]
    fn validation_failure_embeds_report() {
        let bad = T1.replace("[[0.3, 0.7]]", "[[-0.1, 1.1]]");
        match load_model_spec(&bad) {
            Err(Error::Validation(r)) => assert_eq!(r.violations.len(), 1),
            other => panic!("{other:?}"),
        }
        let deficit = T1.replace("[[0.3, 0.7]]", "[[0.3, 0.6]]");
        assert!(matches!(
            load_model_spec(&deficit),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn near_normalized_tables_are_renormalized() {
        let near = T1.replace("[[0.3, 0.7]]", "[[0.3, 0.7000000000005]]");
        let (obj, _, _) = load_model_spec(&near).unwrap();
        assert!((obj.p(0, 0, 0) + obj.p(0, 0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_numbers_are_rejected() {
        let text = T1.replace("0.3", "NaN");
        assert!(matches!(load_model_spec(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn strategy_round_trip() {
        let (obj, ld, _) = load_model_spec(T2_LEARN).unwrap();
        let q =
            Strategy::randomized(2, 2, 2, vec![0.5, 0.5, 1.0, 0.0, 0.25, 0.75, 0.0, 1.0]).unwrap();
        let back = load_strategy(&emit_strategy(&q, &obj, &ld).unwrap(), &obj, &ld).unwrap();
        assert_eq!(q.to_probs(), back.to_probs());
        let d = Strategy::deterministic(2, 2, 2, vec![0, 1, 1, 0]).unwrap();
        let back = load_strategy(&emit_strategy(&d, &obj, &ld).unwrap(), &obj, &ld).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn strategy_documents_must_cover_every_cell() {
        let (obj, ld, _) = load_model_spec(T2_LEARN).unwrap();
        let text = r#"{"a": {"h": [1, 0], "t": [1, 0]}}"#;
        let err = load_strategy(text, &obj, &ld).unwrap_err().to_string();
        assert!(err.contains("\"b\""), "{err}");
        let text = r#"{"a": {"h": [0.5, 0.6], "t": [1, 0]}, "b": {"h": [1, 0], "t": [1, 0]}}"#;
        assert!(load_strategy(text, &obj, &ld).is_err());
    }
}
