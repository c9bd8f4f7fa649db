//! Hamming-space search and retrieval metrics.
//!
//! Distances run on the packed bitmaps via XOR + popcount. Average precision
//! at N uses the number of relevant items found within the top N as its
//! normalizer, which follows prevailing self-supervised video hashing
//! practice; this choice changes absolute mAP values and is therefore
//! documented here and in FORMATS.md.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::CodeDatabase;

/// Ranking cut-offs reported by the evaluation, as used for the aggregate.
pub const MAP_CUTOFFS: [usize; 6] = [5, 20, 40, 60, 80, 100];

/// Hamming distance between two packed codes of equal width.
pub fn hamming_distance(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Database indices ordered by ascending Hamming distance to the query,
/// ties broken by ascending index.
pub fn rank(query: &[u8], database: &CodeDatabase) -> Result<Vec<usize>> {
    if database.is_empty() {
        return Err(Error::invalid("rank", "empty database"));
    }
    if query.len() != database.stride() {
        return Err(Error::shape(
            "rank",
            format!(
                "query of {} bytes against database stride {}",
                query.len(),
                database.stride()
            ),
        ));
    }
    let mut order: Vec<(u32, usize)> = (0..database.len())
        .map(|i| (hamming_distance(query, database.row(i)), i))
        .collect();
    order.sort_unstable();
    Ok(order.into_iter().map(|(_, i)| i).collect())
}

/// Average precision over a binary relevance sequence truncated at N:
/// `AP@N = (1 / |Rel(N)|) * sum_n P(n) r(n)`, zero when nothing relevant
/// appears in the top N.
pub fn ap_at_n(relevance: &[bool], n: usize) -> f64 {
    let top = relevance.len().min(n);
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (pos, &rel) in relevance[..top].iter().enumerate() {
        if rel {
            hits += 1;
            precision_sum += hits as f64 / (pos + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        precision_sum / hits as f64
    }
}

/// Root-sum-of-squares aggregate over the six mAP cut-offs.
pub fn gmap(map_values: &[f64]) -> f64 {
    map_values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Labeled query set evaluated against a labeled database.
pub struct EvalInputs<'a> {
    pub queries: &'a CodeDatabase,
    pub database: &'a CodeDatabase,
    /// Category label per id; relevance is label equality.
    pub labels: &'a BTreeMap<String, i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_queries: usize,
    pub num_database: usize,
    pub code_bits: usize,
    /// mAP@N keyed by the cut-off.
    pub map_at: BTreeMap<usize, f64>,
    pub gmap: f64,
    /// Micro-averaged (precision, recall) per Hamming radius 0..=K.
    pub pr_curve: Vec<(f64, f64)>,
}

fn label_of(labels: &BTreeMap<String, i64>, id: &str) -> Result<i64> {
    labels
        .get(id)
        .copied()
        .ok_or_else(|| Error::invalid("eval", format!("no label for id `{id}`")))
}

/// Relevance sequences for every query under the documented ranking rule.
fn relevance_lists(inputs: &EvalInputs) -> Result<Vec<Vec<bool>>> {
    if inputs.queries.code_bits != inputs.database.code_bits {
        return Err(Error::shape(
            "eval",
            format!(
                "query codes of {} bits vs database {} bits",
                inputs.queries.code_bits, inputs.database.code_bits
            ),
        ));
    }
    let db_labels: Vec<i64> = inputs
        .database
        .ids
        .iter()
        .map(|id| label_of(inputs.labels, id))
        .collect::<Result<_>>()?;
    let mut lists = Vec::with_capacity(inputs.queries.len());
    for q in 0..inputs.queries.len() {
        let q_label = label_of(inputs.labels, &inputs.queries.ids[q])?;
        let order = rank(inputs.queries.row(q), inputs.database)?;
        lists.push(order.into_iter().map(|i| db_labels[i] == q_label).collect());
    }
    Ok(lists)
}

/// mAP at one cut-off.
pub fn map_at_n(inputs: &EvalInputs, n: usize) -> Result<f64> {
    let lists = relevance_lists(inputs)?;
    Ok(lists.iter().map(|r| ap_at_n(r, n)).sum::<f64>() / lists.len().max(1) as f64)
}

/// Micro-averaged precision-recall at every Hamming radius 0..=K.
///
/// Precision at a radius where nothing is retrieved is 1 by convention.
/// Recall is monotone non-decreasing in the radius and reaches 1 at K.
pub fn pr_curve(inputs: &EvalInputs) -> Result<Vec<(f64, f64)>> {
    let k = inputs.database.code_bits;
    let db_labels: Vec<i64> = inputs
        .database
        .ids
        .iter()
        .map(|id| label_of(inputs.labels, id))
        .collect::<Result<_>>()?;
    // Histogram of (distance -> retrieved, relevant-retrieved) over queries.
    let mut retrieved_at = vec![0u64; k + 1];
    let mut relevant_at = vec![0u64; k + 1];
    let mut total_relevant = 0u64;
    for q in 0..inputs.queries.len() {
        let q_label = label_of(inputs.labels, &inputs.queries.ids[q])?;
        for i in 0..inputs.database.len() {
            let d = hamming_distance(inputs.queries.row(q), inputs.database.row(i)) as usize;
            let d = d.min(k);
            retrieved_at[d] += 1;
            if db_labels[i] == q_label {
                relevant_at[d] += 1;
                total_relevant += 1;
            }
        }
    }
    let mut curve = Vec::with_capacity(k + 1);
    let mut retrieved = 0u64;
    let mut relevant = 0u64;
    for radius in 0..=k {
        retrieved += retrieved_at[radius];
        relevant += relevant_at[radius];
        let precision = if retrieved == 0 {
            1.0
        } else {
            relevant as f64 / retrieved as f64
        };
        let recall = if total_relevant == 0 {
            0.0
        } else {
            relevant as f64 / total_relevant as f64
        };
        curve.push((precision, recall));
    }
    Ok(curve)
}

/// Full evaluation: mAP table, the aggregate, and the PR curve.
pub fn evaluate(inputs: &EvalInputs) -> Result<EvalReport> {
    if inputs.queries.is_empty() {
        return Err(Error::invalid("eval", "empty query set"));
    }
    let lists = relevance_lists(inputs)?;
    let mut map_at = BTreeMap::new();
    for n in MAP_CUTOFFS {
        let value = lists.iter().map(|r| ap_at_n(r, n)).sum::<f64>() / lists.len() as f64;
        map_at.insert(n, value);
    }
    let map_values: Vec<f64> = MAP_CUTOFFS.iter().map(|n| map_at[n]).collect();
    Ok(EvalReport {
        num_queries: inputs.queries.len(),
        num_database: inputs.database.len(),
        code_bits: inputs.database.code_bits,
        gmap: gmap(&map_values),
        map_at,
        pr_curve: pr_curve(inputs)?,
    })
}
