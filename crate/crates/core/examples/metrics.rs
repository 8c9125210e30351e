//! Confusion matrix, per-label F1 and macro-F1 on a skewed label set.

use erc_context::corpus::EmotionLabelSet;
use erc_context::evaluation::{confusion, confusion_csv, macro_f1_from, per_label_f1, render_table};

fn main() -> erc_context::Result<()> {
    let labels = EmotionLabelSet::dailydialog();
    // mostly neutral gold, a classifier that over-predicts neutral
    let gold = [0, 0, 0, 0, 0, 0, 0, 0, 4, 4, 4, 5, 5, 1, 6];
    let pred = [0, 0, 0, 0, 0, 0, 0, 4, 4, 4, 0, 0, 5, 0, 0];
    let cm = confusion(&gold, &pred, labels.len())?;
    print!("{}", confusion_csv(&cm, &labels));

    let f1 = per_label_f1(&cm);
    let headers: Vec<String> = (0..labels.len()).map(|k| labels.short_name(k)).chain(["macro".into()]).collect();
    let row: Vec<String> = f1
        .iter()
        .chain([macro_f1_from(&cm)].iter())
        .map(|f| format!("{:.3}", f))
        .collect();
    print!("{}", render_table(&headers, &[row]));

    let accuracy = (0..labels.len()).map(|k| cm.true_positives(k)).sum::<u64>() as f64 / cm.total() as f64;
    // classes absent from both gold and predictions still count, as zero
    println!("accuracy {accuracy:.3} vs macro-F1 {:.3}", macro_f1_from(&cm));
    Ok(())
}
