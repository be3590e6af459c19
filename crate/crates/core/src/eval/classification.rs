use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct LabelPair {
    pub predicted: String,
    #[serde(rename = "true")]
    pub truth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ClassAccuracy {
    /// `None` when the class never occurs as a true label.
    pub accuracy: Option<f64>,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AccuracyReport {
    pub overall: f64,
    pub per_class: BTreeMap<String, ClassAccuracy>,
}

/// Micro-averaged accuracy plus accuracy per true class.
///
/// Classes listed in `classes` but absent from the data are reported with no
/// accuracy rather than zero.
pub fn accuracy_table(pairs: &[LabelPair], classes: &[String]) -> Result<AccuracyReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut per_class: BTreeMap<String, ClassAccuracy> = classes
        .iter()
        .map(|c| {
            (
                c.clone(),
                ClassAccuracy {
                    accuracy: None,
                    correct: 0,
                    total: 0,
                },
            )
        })
        .collect();
    let mut correct = 0;
    for p in pairs {
        let entry = per_class.entry(p.truth.clone()).or_insert(ClassAccuracy {
            accuracy: None,
            correct: 0,
            total: 0,
        });
        entry.total += 1;
        if p.predicted == p.truth {
            entry.correct += 1;
            correct += 1;
        }
    }
    for c in per_class.values_mut() {
        c.accuracy = (c.total > 0).then(|| c.correct as f64 / c.total as f64);
    }
    Ok(AccuracyReport {
        overall: correct as f64 / pairs.len() as f64,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(p: &str, t: &str) -> LabelPair {
        LabelPair { predicted: p.into(), truth: t.into() }
    }

    #[test]
    fn all_correct() {
        let r = accuracy_table(&[pair("left", "left"), pair("rear", "rear")], &[]).unwrap();
        assert_eq!(r.overall, 1.0);
        assert!(r.per_class.values().all(|c| c.accuracy == Some(1.0)));
    }

    #[test]
    fn three_of_four() {
        let pairs = [pair("left", "left"), pair("left", "left"), pair("left", "left"), pair("right", "left")];
        let r = accuracy_table(&pairs, &[]).unwrap();
        assert_eq!(r.per_class["left"].accuracy, Some(0.75));
        assert_eq!(r.overall, 0.75);
    }

    #[test]
    fn absent_class_is_not_zero() {
        let r = accuracy_table(&[pair("front", "front")], &["front".into(), "rear".into()]).unwrap();
        assert_eq!(r.per_class["rear"].accuracy, None);
        assert_eq!(r.per_class["rear"].total, 0);
    }

    #[test]
    fn empty_input() {
        assert_eq!(accuracy_table(&[], &[]), Err(EvalError::Empty));
    }
}
