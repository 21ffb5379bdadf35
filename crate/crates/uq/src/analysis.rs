//! Cluster-and-score for one sample set. The CLI scorer and the HTTP service
//! both go through [`analyze`], so their numbers cannot drift apart.

use serde::{Deserialize, Serialize};
use uq_core::entropy::{annotate_clusters, uncertainty_report};
use uq_core::harness::EvalError;
use uq_core::{greedy_cluster, EntropyConfig, EntropyVariant, EquivalenceOracle, MeaningCluster, SampleSet, UncertaintyReport};

/// A cluster with its members' texts inlined for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    #[serde(flatten)]
    pub cluster: MeaningCluster,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub report: UncertaintyReport,
    pub clusters: Vec<ClusterView>,
}

/// The entropy settings exposed by the CLI and the HTTP API.
pub fn entropy_config(variant: EntropyVariant, normalize: bool) -> EntropyConfig {
    EntropyConfig { variant, length_normalize: normalize, ..EntropyConfig::default() }
}

pub fn analyze<O: EquivalenceOracle + ?Sized>(
    set: &SampleSet,
    oracle: &O,
    config: &EntropyConfig,
) -> Result<Analysis, EvalError<O::Error>> {
    let mut partition = greedy_cluster(set, oracle).map_err(EvalError::Cluster)?;
    let mut report = uncertainty_report(set, &partition, config).map_err(EvalError::Entropy)?;
    report.oracle = Some(oracle.kind());
    annotate_clusters(set, &mut partition, config).map_err(EvalError::Entropy)?;
    Ok(Analysis { report, clusters: cluster_views(set, partition) })
}

pub fn cluster_views(set: &SampleSet, partition: Vec<MeaningCluster>) -> Vec<ClusterView> {
    partition
        .into_iter()
        .map(|cluster| {
            let texts = cluster.member_indices.iter().map(|&i| set.samples[i].text.clone()).collect();
            ClusterView { cluster, texts }
        })
        .collect()
}
