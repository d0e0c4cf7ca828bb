use std::fmt::Write;

use ecg_guard::evalharness::{auroc, precision_at_recall};
use serde::{Deserialize, Serialize};

use crate::commands::SimulationOutput;

/// Machine-readable digest of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub n_initial_patients: usize,
    pub n_probe: usize,
    pub mistake_rate: f64,
    pub threshold: f64,
    pub calibrated: bool,
    pub mistakes: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: f64,
    pub correction_rate: Option<f64>,
    pub corrupted_insertions: usize,
    /// Ranking quality of `1 - likelihood` as a mistake score.
    pub detection_auroc: Option<f64>,
    /// Precision at the target recall, calibrated on this run itself.
    pub oracle_precision_at_recall: Option<f64>,
}

pub fn summary(o: &SimulationOutput) -> Summary {
    let r = &o.report;
    let c = &r.confusion;
    let (likelihoods, mistakes) = r.detection_scores();
    let scores: Vec<f64> = likelihoods.iter().map(|l| 1.0 - l).collect();
    Summary {
        strategy: o.simulation.strategy.name().into(),
        n_initial_patients: o.simulation.n_initial_patients,
        n_probe: r.steps.len(),
        mistake_rate: o.simulation.mistake_rate,
        threshold: o.threshold,
        calibrated: o.calibration.is_some(),
        mistakes: r.mistakes(),
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        tn: c.tn,
        precision: c.precision(),
        recall: c.recall(),
        f1: c.f1(),
        correction_rate: r.correction_rate(),
        corrupted_insertions: r.corrupted_insertions,
        detection_auroc: auroc(&scores, &mistakes).ok(),
        oracle_precision_at_recall: precision_at_recall(&likelihoods, &mistakes, o.simulation.target_recall).ok(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

pub fn text(o: &SimulationOutput, s: &Summary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "overseer simulation");
    let _ = writeln!(
        t,
        "  patients {}  probes {}  mistake rate {}  strategy {}",
        s.n_initial_patients, s.n_probe, s.mistake_rate, s.strategy
    );
    match &o.calibration {
        Some(c) => {
            let _ = writeln!(
                t,
                "  threshold {:.6} (dev: {} runs, {} steps, {} mistakes, recall target {}, dev precision {:.4})",
                s.threshold, c.runs, c.steps, c.mistakes, c.target_recall, c.dev_precision
            );
        }
        None => {
            let _ = writeln!(t, "  threshold {:.6} (fixed)", s.threshold);
        }
    }
    let _ = writeln!(t, "\n                 mistake   correct");
    let _ = writeln!(t, "  flagged      {:>8}  {:>8}", s.tp, s.fp);
    let _ = writeln!(t, "  not flagged  {:>8}  {:>8}", s.fn_, s.tn);
    let _ = writeln!(t);
    let _ = writeln!(t, "  mistakes             {}", s.mistakes);
    let _ = writeln!(t, "  precision            {}", opt(s.precision));
    let _ = writeln!(t, "  recall               {}", opt(s.recall));
    let _ = writeln!(t, "  f1                   {:.4}", s.f1);
    let _ = writeln!(t, "  correction rate      {}", opt(s.correction_rate));
    let _ = writeln!(t, "  detection auroc      {}", opt(s.detection_auroc));
    let _ = writeln!(t, "  corrupted insertions {}", s.corrupted_insertions);
    t
}
