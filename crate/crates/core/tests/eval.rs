mod common;

use common::random_dialogue;
use dcd_core::eval::{
    ablation_table, confusion, export_latents, latents_table, median, metrics, predict_all,
    time_batch_accuracy, AblationResult, ConfusionMatrix, EvalReport, ABLATION_GRID,
    IEMOCAP_TIME_BATCH, MELD_TIME_BATCH,
};
use dcd_core::model::{Model, ModelConfig, TopicSource};
use dcd_core::Dialogue;

fn cm(rows: Vec<Vec<u64>>) -> ConfusionMatrix {
    ConfusionMatrix::from_counts(rows).unwrap()
}

#[test]
fn hand_computed_two_class_matrix() {
    let m = metrics(&cm(vec![vec![1, 1], vec![0, 2]])).unwrap();
    assert!((m.accuracy - 0.75).abs() < 1e-9);
    assert!((m.f1[0] - 2.0 / 3.0).abs() < 1e-9);
    assert!((m.f1[1] - 0.8).abs() < 1e-9);
    // Rows are true classes, so each class has support 2.
    let weighted = (2.0 * (2.0 / 3.0) + 2.0 * 0.8) / 4.0;
    assert!((m.weighted_f1 - weighted).abs() < 1e-9);
    assert_eq!(m.support, vec![2, 2]);
    assert_eq!(m.recall, vec![0.5, 1.0]);
}

#[test]
fn perfect_predictor_scores_one_everywhere() {
    let m = metrics(&cm(vec![vec![3, 0, 0], vec![0, 1, 0], vec![0, 0, 5]])).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert_eq!(m.weighted_f1, 1.0);
    assert!(m.f1.iter().chain(&m.recall).all(|&x| x == 1.0));
}

#[test]
fn zero_support_class_has_no_weight() {
    let m = metrics(&cm(vec![vec![2, 0, 0], vec![0, 0, 0], vec![0, 0, 2]])).unwrap();
    assert_eq!(m.f1[1], 0.0);
    assert_eq!(m.weighted_f1, 1.0);
    let never_predicted = metrics(&cm(vec![vec![0, 2], vec![0, 2]])).unwrap();
    assert_eq!(never_predicted.f1[0], 0.0);
}

#[test]
fn empty_or_ragged_matrices_are_errors() {
    assert!(metrics(&ConfusionMatrix::new(3)).is_err());
    assert!(ConfusionMatrix::from_counts(vec![vec![1, 2], vec![3]]).is_err());
    assert!(ConfusionMatrix::new(2).add(2, 0).is_err());
}

fn labelled(lengths: &[usize]) -> Vec<Dialogue> {
    let cfg = ModelConfig::toy();
    lengths
        .iter()
        .enumerate()
        .map(|(i, &t)| random_dialogue(&cfg, t, &["a", "b"], i as u64))
        .collect()
}

fn truth(ds: &[Dialogue]) -> Vec<Vec<usize>> {
    ds.iter()
        .map(|d| d.turns.iter().map(|t| t.label).collect())
        .collect()
}

#[test]
fn time_batch_protocols_emit_eight_points() {
    let ds = labelled(&[45, 12, 3]);
    let preds = truth(&ds);
    let (b, t) = IEMOCAP_TIME_BATCH;
    assert_eq!((b, t), (5, 40));
    let iemocap = time_batch_accuracy(&preds, &ds, b, t).unwrap();
    assert_eq!(iemocap.len(), 8);
    assert_eq!((iemocap[7].start, iemocap[7].end), (35, 40));
    let (b, t) = MELD_TIME_BATCH;
    assert_eq!((b, t), (1, 8));
    let meld = time_batch_accuracy(&preds, &ds, b, t).unwrap();
    assert_eq!(meld.len(), 8);
    assert!(iemocap.iter().chain(&meld).all(|p| p.accuracy == 1.0));
    assert_eq!(iemocap.iter().map(|p| p.total).sum::<u64>(), 40 + 12 + 3);
    assert_eq!(meld[2].total, 3);
    assert_eq!(meld[3].total, 2);
}

#[test]
fn time_batches_count_only_their_window() {
    let ds = labelled(&[10]);
    let mut preds = truth(&ds);
    preds[0][1] = (preds[0][1] + 1) % 3;
    let pts = time_batch_accuracy(&preds, &ds, 3, 7).unwrap();
    assert_eq!(pts.len(), 3);
    assert_eq!((pts[0].correct, pts[0].total), (2, 3));
    assert_eq!((pts[2].start, pts[2].end, pts[2].total), (6, 7, 1));
    assert!(time_batch_accuracy(&preds, &ds, 0, 7).is_err());
}

#[test]
fn stored_predictions_reproduce_metrics_bitwise() {
    let model = Model::new(ModelConfig::toy(), 4).unwrap();
    let ds = labelled(&[5, 7, 2]);
    let preds = predict_all(&model, &ds).unwrap();
    let report = dcd_core::eval::evaluate(&model, &ds, (2, 6)).unwrap();
    let again = metrics(&confusion(&preds, &ds, 3).unwrap()).unwrap();
    assert_eq!(report.metrics, again);
    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}

#[test]
fn latent_export_shape_and_determinism() {
    let model = Model::new(ModelConfig::toy(), 4).unwrap();
    let ds = labelled(&[5, 7]);
    let table = latents_table(&model, &ds).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 1 + 12);
    let c = &model.config;
    let cols = c.s_dim + c.v_dim + c.z_dim + 1;
    assert!(lines.iter().all(|l| l.split('\t').count() == cols));
    assert!(lines[0].starts_with("s0\t"));
    assert!(lines[0].ends_with("\tlabel"));

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
    export_latents(&model, &ds, &a).unwrap();
    export_latents(&model, &ds, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn ablation_grid_has_the_six_component_rows() {
    let rows: Vec<(TopicSource, bool, bool)> = ABLATION_GRID
        .iter()
        .map(|r| {
            (
                r.switches.topic,
                r.switches.attributes,
                r.switches.disentangle,
            )
        })
        .collect();
    use TopicSource::*;
    assert_eq!(
        rows,
        [
            (External, true, false),
            (None, false, true),
            (Recurrent, false, true),
            (None, true, true),
            (Recurrent, true, true),
            (External, true, true),
        ]
    );
    for row in &ABLATION_GRID {
        let cfg = ModelConfig {
            switches: row.switches,
            ..ModelConfig::toy()
        };
        assert!(Model::new(cfg, 0).is_ok(), "{}", row.label);
    }
}

#[test]
fn ablation_table_echoes_switches() {
    let model = Model::new(ModelConfig::toy(), 0).unwrap();
    let ds = labelled(&[4]);
    let test = dcd_core::eval::evaluate(&model, &ds, (1, 4)).unwrap();
    let r = AblationResult {
        label: ABLATION_GRID[2].label.into(),
        switches: ABLATION_GRID[2].switches,
        seed: 9,
        epochs: 1,
        best_val: 0.5,
        test,
    };
    let table = ablation_table(&[r]);
    let row = table.lines().nth(1).unwrap();
    assert!(row.contains("\trecurrent\tfalse\ttrue\t9\t"), "{row}");
}

#[test]
fn median_of_odd_and_even() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    assert_eq!(median(&[]), None);
}
