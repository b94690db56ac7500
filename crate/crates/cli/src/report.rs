//! Text renderings of metrics and training curves.

use std::fmt::Write as _;

use ssvep_core::mazebot::Command;
use ssvep_core::ssvepnet::{EpochRecord, FoldResult, Metrics};

pub const METRICS_CSV_HEADER: &str = "class,label,support,correct,recall,pred_0,pred_1,pred_2";

fn label(class: usize) -> &'static str {
    u8::try_from(class)
        .ok()
        .and_then(|c| Command::try_from(c).ok())
        .map_or("?", Command::name)
}

/// Per-class rows of the confusion matrix followed by an `all` row whose
/// recall is the overall accuracy.
pub fn metrics_csv(m: &Metrics) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    let n = m.confusion.len();
    let mut col_totals = vec![0usize; n];
    for (c, row) in m.confusion.iter().enumerate() {
        let support: usize = row.iter().sum();
        let correct = row[c];
        let recall = if support == 0 {
            0.0
        } else {
            correct as f64 / support as f64
        };
        let _ = write!(out, "{c},{},{support},{correct},{recall:.6}", label(c));
        for (t, v) in col_totals.iter_mut().zip(row) {
            *t += v;
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    let total = m.total();
    let correct: usize = (0..n).map(|c| m.confusion[c][c]).sum();
    let _ = write!(out, "all,all,{total},{correct},{:.6}", m.accuracy);
    for t in col_totals {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    out
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(EpochRecord::CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn folds_history_csv(folds: &[FoldResult]) -> String {
    let mut out = format!("fold,{}\n", EpochRecord::CSV_HEADER);
    for f in folds {
        for r in &f.history {
            let _ = writeln!(out, "{},{}", f.fold, r.csv_row());
        }
    }
    out
}

pub fn folds_summary_csv(folds: &[FoldResult]) -> String {
    let mut out = String::from("fold,train_acc,train_loss,val_acc,val_loss,val_support\n");
    for f in folds {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{}",
            f.fold,
            f.train.accuracy,
            f.train.mean_cross_entropy,
            f.val.accuracy,
            f.val.mean_cross_entropy,
            f.val.total()
        );
    }
    out
}

/// Confusion matrix and per-class recall for a terminal.
pub fn metrics_table(title: &str, m: &Metrics) -> String {
    let mut out = format!(
        "{title}: accuracy {:.4} ({} examples), cross-entropy {:.4}\n",
        m.accuracy,
        m.total(),
        m.mean_cross_entropy
    );
    let n = m.confusion.len();
    let _ = write!(out, "  {:<10}", "true\\pred");
    for c in 0..n {
        let _ = write!(out, "{:>9}", label(c));
    }
    let _ = writeln!(out, "{:>9}", "recall");
    for (c, row) in m.confusion.iter().enumerate() {
        let _ = write!(out, "  {:<10}", label(c));
        for v in row {
            let _ = write!(out, "{v:>9}");
        }
        let support: usize = row.iter().sum();
        let recall = if support == 0 {
            0.0
        } else {
            row[c] as f64 / support as f64
        };
        let _ = writeln!(out, "{recall:>9.4}");
    }
    out
}
