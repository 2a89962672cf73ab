use std::fmt;

/// One metrics-log record, written at every evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub train_mrr: Option<f64>,
    pub valid_mrr: Option<f64>,
    pub triples_per_second: f64,
    pub bytes_per_step: f64,
}

impl MetricsRecord {
    pub const HEADER: &'static str = "step\tlr\tloss\ttrain_mrr\tvalid_mrr\ttriples_per_s\tbytes_per_step";
}

impl fmt::Display for MetricsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
        write!(
            f,
            "{}\t{:.6e}\t{:.6}\t{}\t{}\t{:.1}\t{:.0}",
            self.step,
            self.lr,
            self.loss,
            opt(self.train_mrr),
            opt(self.valid_mrr),
            self.triples_per_second,
            self.bytes_per_step
        )
    }
}
