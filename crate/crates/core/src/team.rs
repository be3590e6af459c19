//! Team identification from color-scheme embeddings.
//!
//! Embeddings of cars whose number was read with high confidence become
//! reference embeddings for that number's team. Once a team has collected
//! enough references its centroid (the mean reference vector) is published,
//! and any later embedding closer than the assignment threshold to a centroid
//! is labelled with that team.
//!
//! The module also hosts the three clustering quality metrics: mean cluster
//! deviation, mean centroid deviation and the intra/outra distance delta.

use std::collections::BTreeMap;

use parking_lot::RwLock;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Embedding, NumberValidity};
use crate::number::NumberReading;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeamError {
    #[error("cosine distance is undefined for an all-zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cluster `{0}` is empty")]
    EmptyCluster(String),
    #[error("need at least two centroids, got {0}")]
    FewerThanTwoCentroids(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
}

/// `1 - cos(a, b)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, TeamError> {
    if a.len() != b.len() {
        return Err(TeamError::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(TeamError::ZeroVector);
    }
    Ok((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0))
}

fn mean_vector(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut sum = vec![0.0; vectors[0].len()];
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    sum.iter().map(|s| s / n).collect()
}

/// Team id mapped to member vectors.
pub type Clusters = BTreeMap<String, Vec<Vec<f64>>>;

fn check_clusters(clusters: &Clusters) -> Result<(), TeamError> {
    if let Some((team, _)) = clusters.iter().find(|(_, v)| v.is_empty()) {
        return Err(TeamError::EmptyCluster(team.clone()));
    }
    Ok(())
}

/// Mean over clusters of the mean member-to-centroid distance. Lower is better.
pub fn mean_cluster_deviation(clusters: &Clusters) -> Result<f64, TeamError> {
    check_clusters(clusters)?;
    if clusters.is_empty() {
        return Err(TeamError::InsufficientData("no clusters"));
    }
    let mut total = 0.0;
    for members in clusters.values() {
        let centroid = mean_vector(members);
        let mut within = 0.0;
        for m in members {
            within += cosine_distance(m, &centroid)?;
        }
        total += within / members.len() as f64;
    }
    Ok(total / clusters.len() as f64)
}

/// Mean distance over all unordered centroid pairs. Higher is better.
pub fn mean_centroid_deviation(centroids: &[Vec<f64>]) -> Result<f64, TeamError> {
    if centroids.len() < 2 {
        return Err(TeamError::FewerThanTwoCentroids(centroids.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            total += cosine_distance(&centroids[i], &centroids[j])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Centroids of each cluster, in team-id order.
pub fn cluster_centroids(clusters: &Clusters) -> Result<Vec<Vec<f64>>, TeamError> {
    check_clusters(clusters)?;
    Ok(clusters.values().map(|m| mean_vector(m)).collect())
}

/// Mean cross-class pairwise distance minus mean within-class pairwise
/// distance. Higher means better separated classes.
///
/// Classes with a single member contribute no within-class pairs.
pub fn mean_intra_outra_delta(clusters: &Clusters) -> Result<f64, TeamError> {
    check_clusters(clusters)?;
    if clusters.len() < 2 {
        return Err(TeamError::InsufficientData("need at least two clusters"));
    }
    let groups: Vec<&Vec<Vec<f64>>> = clusters.values().collect();

    let mut intra_sum = 0.0;
    let mut intra_classes = 0usize;
    for members in &groups {
        if members.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                sum += cosine_distance(&members[i], &members[j])?;
                n += 1;
            }
        }
        intra_sum += sum / n as f64;
        intra_classes += 1;
    }
    if intra_classes == 0 {
        return Err(TeamError::InsufficientData(
            "no cluster has two or more members",
        ));
    }

    let mut outra_sum = 0.0;
    let mut class_pairs = 0usize;
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let mut sum = 0.0;
            for x in groups[a] {
                for y in groups[b] {
                    sum += cosine_distance(x, y)?;
                }
            }
            outra_sum += sum / (groups[a].len() * groups[b].len()) as f64;
            class_pairs += 1;
        }
    }
    Ok(outra_sum / class_pairs as f64 - intra_sum / intra_classes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct TeamConfig {
    /// Number-reading confidence required to admit a reference embedding.
    pub min_number_confidence: f64,
    /// References needed before a team's centroid is published.
    pub reference_threshold: usize,
    /// Assignment requires a centroid distance strictly below this.
    pub assign_distance_threshold: f64,
}

impl Default for TeamConfig {
    fn default() -> Self {
        Self {
            min_number_confidence: 0.8,
            reference_threshold: 10,
            assign_distance_threshold: 0.3,
        }
    }
}

impl TeamConfig {
    /// Whether a number reading qualifies its embedding as a reference.
    pub fn is_reference(&self, reading: &NumberReading) -> bool {
        reading.validity == NumberValidity::Valid && reading.confidence >= self.min_number_confidence
    }
}

#[derive(Debug, Clone, Default)]
struct TeamState {
    count: usize,
    sum: Vec<f64>,
    centroid: Option<Vec<f64>>,
}

/// Exportable view of one team.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TeamSummary {
    pub team_id: String,
    pub reference_count: usize,
    pub finalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<Vec<f64>>,
    /// Running sum of references; lets a restored store continue exactly.
    #[serde(default)]
    pub reference_sum: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TeamSnapshot {
    pub dim: usize,
    pub config: TeamConfig,
    pub teams: Vec<TeamSummary>,
}

/// Reference embeddings and centroids per team.
///
/// Mutations take the write lock, so observations from concurrent workers are
/// applied one at a time; assignment queries share the read lock.
#[derive(Debug)]
pub struct TeamCentroidStore {
    dim: usize,
    config: TeamConfig,
    teams: RwLock<BTreeMap<String, TeamState>>,
}

impl TeamCentroidStore {
    pub fn new(dim: usize, config: TeamConfig) -> Self {
        Self {
            dim,
            config,
            teams: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &TeamConfig {
        &self.config
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), TeamError> {
        if v.len() != self.dim {
            return Err(TeamError::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Adds a reference embedding for `team` and refreshes its centroid.
    pub fn add_reference(&self, team: &str, vector: &[f64]) -> Result<(), TeamError> {
        self.check_dim(vector)?;
        let mut teams = self.teams.write();
        let state = teams.entry(team.to_string()).or_insert_with(|| TeamState {
            count: 0,
            sum: vec![0.0; self.dim],
            centroid: None,
        });
        for (s, x) in state.sum.iter_mut().zip(vector) {
            *s += x;
        }
        state.count += 1;
        if state.count >= self.config.reference_threshold {
            let n = state.count as f64;
            state.centroid = Some(state.sum.iter().map(|s| s / n).collect());
        }
        Ok(())
    }

    /// Records one car observation and returns its team assignment.
    pub fn observe(
        &self,
        embedding: &Embedding,
        number: Option<&NumberReading>,
    ) -> Result<Option<String>, TeamError> {
        self.check_dim(&embedding.vector)?;
        if let Some(reading) = number.filter(|r| self.config.is_reference(r)) {
            self.add_reference(&reading.number, &embedding.vector)?;
            return Ok(Some(reading.number.clone()));
        }
        self.assign(&embedding.vector)
    }

    /// Nearest published centroid under the distance threshold.
    /// Ties go to the lowest team id.
    pub fn assign(&self, vector: &[f64]) -> Result<Option<String>, TeamError> {
        self.check_dim(vector)?;
        let teams = self.teams.read();
        let mut best: Option<(&String, f64)> = None;
        for (team, state) in teams.iter() {
            let Some(c) = &state.centroid else { continue };
            let d = cosine_distance(vector, c)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((team, d));
            }
        }
        Ok(best
            .filter(|(_, d)| *d < self.config.assign_distance_threshold)
            .map(|(t, _)| t.clone()))
    }

    pub fn centroid(&self, team: &str) -> Option<Vec<f64>> {
        self.teams.read().get(team).and_then(|s| s.centroid.clone())
    }

    pub fn reference_count(&self, team: &str) -> usize {
        self.teams.read().get(team).map_or(0, |s| s.count)
    }

    pub fn finalized_teams(&self) -> Vec<String> {
        self.teams
            .read()
            .iter()
            .filter(|(_, s)| s.centroid.is_some())
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn snapshot(&self) -> TeamSnapshot {
        let teams = self
            .teams
            .read()
            .iter()
            .map(|(team, s)| TeamSummary {
                team_id: team.clone(),
                reference_count: s.count,
                finalized: s.centroid.is_some(),
                centroid: s.centroid.clone(),
                reference_sum: s.sum.clone(),
            })
            .collect();
        TeamSnapshot {
            dim: self.dim,
            config: self.config,
            teams,
        }
    }

    pub fn restore(snapshot: &TeamSnapshot) -> Result<Self, TeamError> {
        let store = Self::new(snapshot.dim, snapshot.config);
        {
            let mut teams = store.teams.write();
            for t in &snapshot.teams {
                store.check_dim(&t.reference_sum)?;
                let mut state = TeamState {
                    count: t.reference_count,
                    sum: t.reference_sum.clone(),
                    centroid: None,
                };
                if state.count >= snapshot.config.reference_threshold && state.count > 0 {
                    let n = state.count as f64;
                    state.centroid = Some(state.sum.iter().map(|s| s / n).collect());
                }
                teams.insert(t.team_id.clone(), state);
            }
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reading(n: &str, c: f64) -> NumberReading {
        NumberReading {
            number: n.into(),
            confidence: c,
            validity: NumberValidity::Valid,
        }
    }

    fn clusters(items: &[(&str, Vec<Vec<f64>>)]) -> Clusters {
        items.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn cosine_fixtures() {
        let v = [0.3, -1.2, 4.0];
        assert!(cosine_distance(&v, &v).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(TeamError::ZeroVector));
        assert!(matches!(
            cosine_distance(&[1.0], &[1.0, 0.0]),
            Err(TeamError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn first_reference_does_not_finalize() {
        let store = TeamCentroidStore::new(
            2,
            TeamConfig {
                reference_threshold: 3,
                ..TeamConfig::default()
            },
        );
        let e = Embedding::new(vec![1.0, 0.5], "p1");
        assert_eq!(store.observe(&e, Some(&reading("43", 0.99))).unwrap().as_deref(), Some("43"));
        assert_eq!(store.reference_count("43"), 1);
        assert!(store.centroid("43").is_none());
        store.observe(&e, Some(&reading("43", 0.99))).unwrap();
        store.observe(&e, Some(&reading("43", 0.99))).unwrap();
        assert_eq!(store.centroid("43").unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn low_confidence_assigned_without_becoming_reference() {
        let store = TeamCentroidStore::new(
            2,
            TeamConfig {
                reference_threshold: 1,
                assign_distance_threshold: 0.2,
                ..TeamConfig::default()
            },
        );
        store.add_reference("t", &[1.0, 0.0]).unwrap();
        // cos(theta) = 0.95 gives distance 0.05.
        let c = 0.95f64;
        let v = vec![c, (1.0 - c * c).sqrt()];
        assert_relative_eq!(cosine_distance(&v, &[1.0, 0.0]).unwrap(), 0.05, epsilon = 1e-12);
        let got = store
            .observe(&Embedding::new(v, "p"), Some(&reading("t", 0.4)))
            .unwrap();
        assert_eq!(got.as_deref(), Some("t"));
        assert_eq!(store.reference_count("t"), 1);
        // Far away: unassigned.
        let far = store.assign(&[0.0, 1.0]).unwrap();
        assert_eq!(far, None);
    }

    #[test]
    fn off_roster_reading_is_not_a_reference() {
        let store = TeamCentroidStore::new(1, TeamConfig::default());
        let r = NumberReading {
            number: "99".into(),
            confidence: 1.0,
            validity: NumberValidity::OffRoster,
        };
        assert_eq!(store.observe(&Embedding::new(vec![1.0], "p"), Some(&r)).unwrap(), None);
        assert_eq!(store.reference_count("99"), 0);
    }

    #[test]
    fn dimension_checked() {
        let store = TeamCentroidStore::new(3, TeamConfig::default());
        assert!(matches!(
            store.observe(&Embedding::new(vec![1.0], "p"), None),
            Err(TeamError::DimensionMismatch { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn tie_goes_to_lowest_team_id() {
        let store = TeamCentroidStore::new(
            2,
            TeamConfig {
                reference_threshold: 1,
                assign_distance_threshold: 0.5,
                ..TeamConfig::default()
            },
        );
        store.add_reference("b", &[1.0, 0.0]).unwrap();
        store.add_reference("a", &[0.0, 1.0]).unwrap();
        let v = [1.0, 1.0];
        for _ in 0..5 {
            assert_eq!(store.assign(&v).unwrap().as_deref(), Some("a"));
        }
    }

    #[test]
    fn snapshot_restore_continues_exactly() {
        let cfg = TeamConfig {
            reference_threshold: 2,
            ..TeamConfig::default()
        };
        let a = TeamCentroidStore::new(2, cfg);
        a.add_reference("1", &[0.1, 0.7]).unwrap();
        let b = TeamCentroidStore::restore(&a.snapshot()).unwrap();
        a.add_reference("1", &[0.3, 0.2]).unwrap();
        b.add_reference("1", &[0.3, 0.2]).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
        assert!(b.snapshot().teams[0].finalized);
    }

    #[test]
    fn mcld_fixtures() {
        let singles = clusters(&[("a", vec![vec![1.0, 2.0]]), ("b", vec![vec![-3.0, 1.0]])]);
        assert!(mean_cluster_deviation(&singles).unwrap().abs() < 1e-15);

        let one = clusters(&[("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]])]);
        assert_relative_eq!(
            mean_cluster_deviation(&one).unwrap(),
            1.0 - 1.0 / 2f64.sqrt(),
            epsilon = 1e-12
        );

        assert_eq!(
            mean_cluster_deviation(&clusters(&[("x", vec![])])),
            Err(TeamError::EmptyCluster("x".into()))
        );
    }

    #[test]
    fn mcld_is_mean_of_cluster_means() {
        // Two-member clusters at angle theta around their centroid have
        // per-member distance 1 - cos(theta / 2).
        let pair = |target: f64| {
            let half = (1.0 - target).acos();
            vec![vec![half.cos(), half.sin()], vec![half.cos(), -half.sin()]]
        };
        let c = clusters(&[("a", pair(0.1)), ("b", pair(0.3))]);
        assert_relative_eq!(mean_cluster_deviation(&c).unwrap(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn mced_fixtures() {
        assert_eq!(mean_centroid_deviation(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(mean_centroid_deviation(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), 1.0);
        assert_eq!(
            mean_centroid_deviation(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap(),
            4.0 / 3.0
        );
        assert_eq!(
            mean_centroid_deviation(&[vec![1.0]]),
            Err(TeamError::FewerThanTwoCentroids(1))
        );
    }

    #[test]
    fn miodd_fixtures() {
        let c = clusters(&[
            ("a", vec![vec![1.0, 0.0], vec![2.0, 0.0]]),
            ("b", vec![vec![0.0, 1.0], vec![0.0, 3.0]]),
        ]);
        assert_relative_eq!(mean_intra_outra_delta(&c).unwrap(), 1.0, epsilon = 1e-15);
        let same = clusters(&[
            ("a", vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            ("b", vec![vec![1.0, 1.0]]),
        ]);
        assert!(mean_intra_outra_delta(&same).unwrap().abs() < 1e-12);
        let singles = clusters(&[("a", vec![vec![1.0, 1.0]]), ("b", vec![vec![1.0, 0.0]])]);
        assert!(matches!(
            mean_intra_outra_delta(&singles),
            Err(TeamError::InsufficientData(_))
        ));
        let lonely = clusters(&[("a", vec![vec![1.0, 1.0], vec![1.0, 0.0]])]);
        assert!(matches!(
            mean_intra_outra_delta(&lonely),
            Err(TeamError::InsufficientData(_))
        ));
    }

    proptest! {
        #[test]
        fn scale_invariance(
            vs in proptest::collection::vec(proptest::collection::vec(0.05..1.0f64, 3), 4..10),
            k in prop_oneof![Just(1e-3), Just(1.0), Just(1e3), 1e-3..1e3f64],
        ) {
            let mut c = Clusters::new();
            for (i, v) in vs.iter().enumerate() {
                c.entry(format!("t{}", i % 2)).or_default().push(v.clone());
            }
            let scaled: Clusters = c
                .iter()
                .map(|(t, m)| (t.clone(), m.iter().map(|v| v.iter().map(|x| x * k).collect()).collect()))
                .collect();
            let pairs = [
                (mean_cluster_deviation(&c).unwrap(), mean_cluster_deviation(&scaled).unwrap()),
                (
                    mean_centroid_deviation(&cluster_centroids(&c).unwrap()).unwrap(),
                    mean_centroid_deviation(&cluster_centroids(&scaled).unwrap()).unwrap(),
                ),
                (mean_intra_outra_delta(&c).unwrap(), mean_intra_outra_delta(&scaled).unwrap()),
            ];
            for (a, b) in pairs {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
