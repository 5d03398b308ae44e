//! Published confusion matrix pushed through the metrics code.

use morphomap_core::evalx::{confusion, metrics};
use morphomap_core::EnvironmentClass;

const TABLE: [[u64; 3]; 3] = [[3901, 7, 0], [5, 17893, 0], [0, 0, 913]];

fn labels_from(table: &[[u64; 3]; 3]) -> (Vec<EnvironmentClass>, Vec<EnvironmentClass>) {
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for (a, row) in table.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            for _ in 0..n {
                actual.push(EnvironmentClass::TRAINING[a]);
                predicted.push(EnvironmentClass::TRAINING[p]);
            }
        }
    }
    (actual, predicted)
}

#[test]
fn confusion_rebuilt_from_labels() {
    let (a, p) = labels_from(&TABLE);
    assert_eq!(confusion(&a, &p).unwrap().counts, TABLE);
}

#[test]
fn precision_recall_and_accuracy() {
    let (a, p) = labels_from(&TABLE);
    let m = metrics(&confusion(&a, &p).unwrap()).unwrap();
    let round4 = |v: f64| (v * 1e4).round() / 1e4;
    let precision: Vec<f64> = m.precision.iter().map(|v| round4(v.unwrap())).collect();
    let recall: Vec<f64> = m.recall.iter().map(|v| round4(v.unwrap())).collect();
    assert_eq!(precision, [0.9987, 0.9996, 1.0]);
    assert_eq!(recall, [0.9982, 0.9997, 1.0]);
    // Exact ratios behind the rounded values.
    assert_eq!(m.precision[0], Some(3901.0 / 3906.0));
    assert_eq!(m.recall[0], Some(3901.0 / 3908.0));
    assert_eq!(m.precision[1], Some(17893.0 / 17900.0));
    assert_eq!(m.recall[1], Some(17893.0 / 17898.0));
    assert_eq!(m.accuracy, 22707.0 / 22719.0);
    assert!((m.accuracy - 0.9995).abs() <= 5e-5);
}
