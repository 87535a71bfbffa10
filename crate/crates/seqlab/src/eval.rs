//! Chunk-level precision/recall/F1 per entity type with a micro-averaged
//! total row, under exact-boundary exact-type matching.

use std::collections::HashSet;

use crate::data::{Sentence, ENTITY_TYPES};
use crate::error::{Error, Result};

/// One entity occurrence: type plus half-open token range.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkSpan {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

/// Extracts maximal `B-X (I-X)*` runs as spans. An orphan `I-X` starts a
/// new span of type X; `O` (or any non-entity tag) closes any open span.
pub fn extract_chunks<S: AsRef<str>>(tags: &[S]) -> Vec<ChunkSpan> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (prefix, kind) = match tag.split_once('-') {
            Some((p @ ("B" | "I"), k)) => (p, k),
            _ => ("O", ""),
        };
        let continues = prefix == "I" && matches!(&open, Some((t, _)) if t == kind);
        if continues {
            continue;
        }
        if let Some((t, s)) = open.take() {
            spans.push(ChunkSpan {
                entity_type: t,
                start: s,
                end: i,
            });
        }
        if prefix == "B" || prefix == "I" {
            open = Some((kind.to_string(), i));
        }
    }
    if let Some((t, s)) = open {
        spans.push(ChunkSpan {
            entity_type: t,
            start: s,
            end: tags.len(),
        });
    }
    spans
}

/// Renders spans back to an IOB2 sequence of the given length. Spans must
/// be within bounds and non-overlapping.
pub fn render_iob2(spans: &[ChunkSpan], len: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for span in spans {
        for (offset, tag) in tags[span.start..span.end].iter_mut().enumerate() {
            let prefix = if offset == 0 { "B" } else { "I" };
            *tag = format!("{}-{}", prefix, span.entity_type);
        }
    }
    tags
}

/// Raw match counts for one entity type or the pooled total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    /// False negatives.
    pub missed: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.missed)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-type and micro-averaged chunk metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Rows in presentation order; the four standard types always appear.
    pub per_type: Vec<(String, Counts)>,
    /// Pooled counts; the `Avg/total` row is recomputed from these, never
    /// from averaged percentages.
    pub micro: Counts,
}

impl MetricsReport {
    pub fn counts_for(&self, entity_type: &str) -> Option<Counts> {
        self.per_type
            .iter()
            .find(|(t, _)| t == entity_type)
            .map(|(_, c)| *c)
    }

    /// Percentage rounded half-up to two decimals, for presentation only.
    pub fn pct(fraction: f64) -> f64 {
        (fraction * 10_000.0 + 0.5).floor() / 100.0
    }

    /// Plain-text table mirroring the per-type rows plus `Avg/total`,
    /// followed by machine-readable counts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>9} {:>9} {:>9}\n",
            "", "Precision", "Recall", "F1-Score"
        ));
        for (name, c) in &self.per_type {
            out.push_str(&render_row(name, c));
        }
        out.push_str(&render_row("Avg/total", &self.micro));
        out.push('\n');
        for (name, c) in &self.per_type {
            out.push_str(&format!(
                "counts: {} tp={} fp={} fn={}\n",
                name, c.tp, c.fp, c.missed
            ));
        }
        out.push_str(&format!(
            "counts: Avg/total tp={} fp={} fn={}\n",
            self.micro.tp, self.micro.fp, self.micro.missed
        ));
        out
    }
}

fn row_of(types: &mut Vec<String>, rows: &mut Vec<Counts>, ty: &str) -> usize {
    match types.iter().position(|t| t == ty) {
        Some(i) => i,
        None => {
            types.push(ty.to_string());
            rows.push(Counts::default());
            rows.len() - 1
        }
    }
}

fn render_row(name: &str, c: &Counts) -> String {
    format!(
        "{:<10} {:>9.2} {:>9.2} {:>9.2}\n",
        name,
        MetricsReport::pct(c.precision()),
        MetricsReport::pct(c.recall()),
        MetricsReport::pct(c.f1())
    )
}

/// Scores predictions against gold annotations sentence by sentence.
/// A predicted span counts as a true positive only when an identical
/// `(type, start, end)` span exists in the gold sentence.
pub fn f1_report(gold: &[Sentence], pred: &[Vec<String>]) -> Result<MetricsReport> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidParameter(format!(
            "gold has {} sentences, predictions {}",
            gold.len(),
            pred.len()
        )));
    }
    // presentation order of the standard rows
    let mut types: Vec<String> = ["LOC", "PER", "ORG", "MISC"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows: Vec<Counts> = vec![Counts::default(); types.len()];
    let mut micro = Counts::default();

    for (si, (gs, ps)) in gold.iter().zip(pred).enumerate() {
        if gs.len() != ps.len() {
            return Err(Error::InvalidParameter(format!(
                "sentence {}: gold has {} tokens, prediction {}",
                si + 1,
                gs.len(),
                ps.len()
            )));
        }
        let gold_tags: Vec<&str> = gs.iter().map(|t| t.ner.as_str()).collect();
        let gold_spans: HashSet<ChunkSpan> = extract_chunks(&gold_tags).into_iter().collect();
        let pred_spans: HashSet<ChunkSpan> = extract_chunks(ps).into_iter().collect();

        for span in &pred_spans {
            let i = row_of(&mut types, &mut rows, &span.entity_type);
            if gold_spans.contains(span) {
                rows[i].tp += 1;
                micro.tp += 1;
            } else {
                rows[i].fp += 1;
                micro.fp += 1;
            }
        }
        for span in &gold_spans {
            if !pred_spans.contains(span) {
                let i = row_of(&mut types, &mut rows, &span.entity_type);
                rows[i].missed += 1;
                micro.missed += 1;
            }
        }
    }

    // keep the four standard rows first, any extra types after them
    let (standard, extra): (Vec<_>, Vec<_>) = types
        .into_iter()
        .zip(rows)
        .partition(|(t, _)| ENTITY_TYPES.contains(&t.as_str()));
    let mut extra = extra;
    extra.sort_by(|a, b| a.0.cmp(&b.0));
    let per_type = standard.into_iter().chain(extra).collect();
    Ok(MetricsReport { per_type, micro })
}
