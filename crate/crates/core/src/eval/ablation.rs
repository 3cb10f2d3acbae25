use serde::{Deserialize, Serialize};

use super::metrics::weighted_metrics;
use super::EvalError;
use crate::annotate::DatasetRow;
use crate::bench::{train_and_predict, FineTuneAdapter, LabeledText, SeedPredictions};
use crate::geo::Region;
use crate::label::Label;

/// Region order used for the ablation table.
pub const TABLE_REGION_ORDER: [Region; 6] = [
    Region::Africa,
    Region::Europe,
    Region::NorthAmerica,
    Region::Oceania,
    Region::SouthAsia,
    Region::Other,
];

/// Regions kept by default when ablating: the two largest pools.
pub const DOMINANT_REGIONS: [Region; 2] = [Region::NorthAmerica, Region::Other];

/// One row of the ablation table; all values are seed means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Region display name, or "All".
    pub region: String,
    pub support: usize,
    pub direct_f1: f64,
    pub reporting_f1: f64,
    pub none_f1: f64,
    pub overall_f1: f64,
    pub baseline_overall_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub regions_kept: Vec<Region>,
    pub train_size_full: usize,
    pub train_size_ablated: usize,
    pub rows: Vec<AblationRow>,
    pub ablated: Vec<SeedPredictions<Label>>,
    pub baseline: Vec<SeedPredictions<Label>>,
}

impl AblationReport {
    pub fn all_row(&self) -> &AblationRow {
        self.rows.last().expect("table has an All row")
    }

    /// Ablated overall F1 not above the full-training baseline.
    pub fn directional_check(&self) -> bool {
        let all = self.all_row();
        all.overall_f1 <= all.baseline_overall_f1
    }
}

fn labeled(rows: &[&DatasetRow]) -> Vec<LabeledText<Label>> {
    rows.iter()
        .map(|r| LabeledText {
            id: r.id.clone(),
            text: r.text.clone(),
            label: r.label,
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// (per-class F1 ×3, overall weighted F1) for the items selected by `keep`,
/// averaged over seeds.
fn scores(test: &[DatasetRow], preds: &[SeedPredictions<Label>], keep: &dyn Fn(&DatasetRow) -> bool) -> Result<[f64; 4], EvalError> {
    let idx: Vec<usize> = (0..test.len()).filter(|i| keep(&test[*i])).collect();
    if idx.is_empty() {
        return Ok([0.0; 4]);
    }
    let gold: Vec<Label> = idx.iter().map(|i| test[*i].label).collect();
    let mut per_seed = Vec::new();
    for sp in preds {
        let pred: Vec<Label> = idx.iter().map(|i| sp.predictions[*i]).collect();
        let m = weighted_metrics(&gold, &pred)?;
        per_seed.push([m.per_class[0].f1, m.per_class[1].f1, m.per_class[2].f1, m.f1]);
    }
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = mean(&per_seed.iter().map(|s| s[k]).collect::<Vec<_>>());
    }
    Ok(out)
}

/// Train on the train rows from `regions_kept` only, evaluate on the whole
/// test set, and tabulate per-region F1 next to a full-training baseline.
/// Pass `baseline` to reuse predictions from an earlier full run.
pub fn region_ablation<A: FineTuneAdapter<Label>>(
    train: &[DatasetRow],
    test: &[DatasetRow],
    regions_kept: &[Region],
    make_adapter: &mut dyn FnMut() -> A,
    seeds: &[u64],
    baseline: Option<Vec<SeedPredictions<Label>>>,
) -> Result<AblationReport, EvalError> {
    if test.is_empty() || seeds.is_empty() {
        return Err(EvalError::Empty);
    }
    let kept: Vec<&DatasetRow> = train.iter().filter(|r| regions_kept.contains(&r.region)).collect();
    if kept.is_empty() {
        return Err(EvalError::EmptyTrain);
    }
    let texts: Vec<&str> = test.iter().map(|r| r.text.as_str()).collect();
    let baseline = match baseline {
        Some(b) => b,
        None => {
            let all: Vec<&DatasetRow> = train.iter().collect();
            train_and_predict(make_adapter, &labeled(&all), &texts, seeds)?
        }
    };
    let ablated = train_and_predict(make_adapter, &labeled(&kept), &texts, seeds)?;
    for sp in ablated.iter().chain(&baseline) {
        if sp.predictions.len() != test.len() {
            return Err(EvalError::LengthMismatch {
                gold: test.len(),
                pred: sp.predictions.len(),
            });
        }
    }
    let mut rows = Vec::new();
    let regions = TABLE_REGION_ORDER.iter().map(|r| (r.display_name().to_string(), Some(*r)));
    for (name, region) in regions.chain(std::iter::once(("All".to_string(), None))) {
        let keep = move |r: &DatasetRow| region.is_none_or(|g| r.region == g);
        let a = scores(test, &ablated, &keep)?;
        let b = scores(test, &baseline, &keep)?;
        rows.push(AblationRow {
            region: name,
            support: test.iter().filter(|r| keep(r)).count(),
            direct_f1: a[0],
            reporting_f1: a[1],
            none_f1: a[2],
            overall_f1: a[3],
            baseline_overall_f1: b[3],
        });
    }
    let mut regions_kept = regions_kept.to_vec();
    regions_kept.sort();
    regions_kept.dedup();
    Ok(AblationReport {
        regions_kept,
        train_size_full: train.len(),
        train_size_ablated: kept.len(),
        rows,
        ablated,
        baseline,
    })
}
