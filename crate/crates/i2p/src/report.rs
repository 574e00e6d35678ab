//! Metric CSVs. Floats print in shortest round-trip form so equal runs give
//! equal bytes.

use std::fmt::Write as _;

use i2p_core::train::MetricReport;

pub fn metrics_csv(r: &MetricReport) -> String {
    let mut s = String::from("metric,value\n");
    writeln!(s, "top1,{}", r.top1).expect("string write");
    writeln!(s, "miou,{}", r.miou).expect("string write");
    for (c, iou) in r.per_class_iou.iter().enumerate() {
        match iou {
            Some(v) => writeln!(s, "iou_{c},{v}"),
            None => writeln!(s, "iou_{c},"),
        }
        .expect("string write");
    }
    writeln!(s, "samples,{}", r.confusion.total()).expect("string write");
    s
}

pub fn loss_csv(r: &MetricReport) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in r.loss_curve.iter().enumerate() {
        writeln!(s, "{e},{l}").expect("string write");
    }
    s
}

/// Rows are truth, columns predictions.
pub fn confusion_csv(r: &MetricReport) -> String {
    let cm = &r.confusion;
    let n = cm.classes();
    let mut s = String::from("truth");
    for p in 0..n {
        write!(s, ",pred_{p}").expect("string write");
    }
    s.push('\n');
    for t in 0..n {
        write!(s, "{t}").expect("string write");
        for p in 0..n {
            write!(s, ",{}", cm.get(t, p)).expect("string write");
        }
        s.push('\n');
    }
    s
}
