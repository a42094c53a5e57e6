use std::io::{self, Write};

use serde::Serialize;

use crate::kg::ElementKind;

/// One line of the prediction export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub kind: ElementKind,
    pub left: String,
    pub right: String,
    pub similarity: f64,
    pub probability: f64,
}

/// Writes `kind<TAB>left<TAB>right<TAB>similarity<TAB>probability` lines.
pub fn write_predictions<W: Write>(mut out: W, rows: &[PredictionRow]) -> io::Result<()> {
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.kind.as_str(),
            r.left,
            r.right,
            r.similarity,
            r.probability
        )?;
    }
    out.flush()
}
