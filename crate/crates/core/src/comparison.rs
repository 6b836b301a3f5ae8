//! Pipeline-versus-joint comparison: trains every derived model once,
//! chains them into the pipeline systems, and scores each system.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::error::Result;
use crate::metrics::{EvalReport, Prf};
use crate::model::{ModelVariant, Network, Pipeline};
use crate::training::{evaluate_pipeline, train, ModelSpec, TrainConfig};

/// A row of the comparison table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    PredicateFrameRole,
    PredicateFrameComposedRole,
    PredicateFrameRoleComposed,
    PredicateFrameSemiCrf,
    NodeEdge,
    Joint,
}

impl System {
    pub const ALL: [System; 6] = [
        System::PredicateFrameRole,
        System::PredicateFrameComposedRole,
        System::PredicateFrameRoleComposed,
        System::PredicateFrameSemiCrf,
        System::NodeEdge,
        System::Joint,
    ];

    pub fn label(self) -> &'static str {
        match self {
            System::PredicateFrameRole => "Predicate+Frame+Role",
            System::PredicateFrameComposedRole => "Predicate∘Frame+Role",
            System::PredicateFrameRoleComposed => "Predicate+Frame∘Role",
            System::PredicateFrameSemiCrf => "Predicate∘Frame+Semi-CRF",
            System::NodeEdge => "Node+Edge",
            System::Joint => "Joint",
        }
    }

    /// Separately trained models chained by this system, in order.
    pub fn components(self) -> &'static [ModelVariant] {
        use ModelVariant::*;
        match self {
            System::PredicateFrameRole => &[Predicate, Frame, Role],
            System::PredicateFrameComposedRole => &[PredicateFrame, Role],
            System::PredicateFrameRoleComposed => &[Predicate, FrameRole],
            System::PredicateFrameSemiCrf => &[PredicateFrame, SemiCrf],
            System::NodeEdge => &[NodeEdge],
            System::Joint => &[Joint],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub system: System,
    pub label: String,
    pub target: Prf,
    pub frame: Prf,
    pub role: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Markdown table with Target, Frame and Role P/R/F1 columns
    /// (percentages).
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Model | Target P | Target R | Target F1 | Frame P | Frame R | Frame F1 | Role P | Role R | Role F1 |\n\
             |---|---|---|---|---|---|---|---|---|---|\n",
        );
        for row in &self.rows {
            let _ = write!(out, "| {} ", row.label);
            for prf in [&row.target, &row.frame, &row.role] {
                let _ = write!(
                    out,
                    "| {:.2} | {:.2} | {:.2} ",
                    100.0 * prf.precision,
                    100.0 * prf.recall,
                    100.0 * prf.f1
                );
            }
            out.push_str("|\n");
        }
        out
    }
}

/// Trains each model the systems need (once each), then evaluates every
/// system on `test_set`. Every model shares `base` apart from its variant.
/// Also returns each model's own test report.
pub fn compare_systems(
    spec: &ModelSpec,
    train_set: &[AnnotatedSentence],
    dev_set: &[AnnotatedSentence],
    test_set: &[AnnotatedSentence],
    base: &TrainConfig,
) -> Result<(ComparisonTable, BTreeMap<ModelVariant, EvalReport>)> {
    let mut trained: BTreeMap<ModelVariant, Vec<Network>> = BTreeMap::new();
    let mut single: BTreeMap<ModelVariant, EvalReport> = BTreeMap::new();
    for system in System::ALL {
        for &variant in system.components() {
            if trained.contains_key(&variant) {
                continue;
            }
            let config = TrainConfig {
                model_variant: variant,
                ..base.clone()
            };
            let outcome = train(spec, train_set, dev_set, &config, |_| {})?;
            single.insert(
                variant,
                evaluate_pipeline(&outcome.pipeline, test_set, false)?,
            );
            trained.insert(variant, outcome.pipeline.stages);
        }
    }
    let mut rows = Vec::new();
    for system in System::ALL {
        let mut stages = Vec::new();
        for variant in system.components() {
            stages.extend(trained.remove(variant).expect("trained above"));
        }
        let pipeline = Pipeline::new(stages)?;
        // Strip gold tuples so the first stage sees raw text only.
        let stripped: Vec<AnnotatedSentence> = test_set.iter().map(|s| s.stripped()).collect();
        let mut evaluator = crate::metrics::Evaluator::new(false);
        for (raw, gold) in stripped.iter().zip(test_set) {
            let prediction = pipeline.parse(raw)?;
            evaluator.add(gold.id.as_deref(), &prediction.tuples, &gold.tuples, None);
        }
        let report = evaluator.report();
        rows.push(ComparisonRow {
            system,
            label: system.label().to_string(),
            target: report.target,
            frame: report.frame,
            role: report.role,
        });
        // Hand the networks back for the next system.
        let mut stages = pipeline.stages.into_iter();
        for variant in system.components() {
            let n = variant.stages().len();
            trained.insert(*variant, stages.by_ref().take(n).collect());
        }
    }
    Ok((ComparisonTable { rows }, single))
}
