use std::io::Write;

use super::{augment_with_virtual, InteractionGraph, ResistanceMatrix, Result};

/// Effective resistance of one real pair before and after adding hubs.
/// `None` marks a pair that is disconnected in that graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ResistanceRow {
    pub i: usize,
    pub j: usize,
    pub r_before: Option<f64>,
    pub r_after: Option<f64>,
}

impl ResistanceRow {
    /// Relative reduction in percent, when both sides are defined.
    pub fn reduction_pct(&self) -> Option<f64> {
        match (self.r_before, self.r_after) {
            (Some(b), Some(a)) if b > 0.0 => Some(100.0 * (b - a) / b),
            _ => None,
        }
    }
}

/// All unordered real pairs `i < j` with resistances over `graph` and over
/// `graph` plus `n_virtual` hubs.
pub fn resistance_report(graph: &InteractionGraph, n_virtual: usize) -> Result<Vec<ResistanceRow>> {
    let n = graph.n_real();
    let augmented = augment_with_virtual(graph, n_virtual)?;
    let before = ResistanceMatrix::new(graph);
    let after = ResistanceMatrix::new(&augmented);
    let mut rows = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            rows.push(ResistanceRow {
                i,
                j,
                r_before: before.get(i, j).ok(),
                r_after: after.get(i, j).ok(),
            });
        }
    }
    Ok(rows)
}

fn field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with header `i,j,r_before,r_after,reduction_pct`, plus a leading
/// `scene_id` column when `scene_id` is given. Undefined values are empty.
pub fn write_resistance_csv<W: Write>(
    out: W,
    rows: &[ResistanceRow],
    scene_id: Option<&str>,
    header: bool,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if header {
        let mut cols = vec!["i", "j", "r_before", "r_after", "reduction_pct"];
        if scene_id.is_some() {
            cols.insert(0, "scene_id");
        }
        w.write_record(&cols)?;
    }
    for r in rows {
        let mut rec = vec![
            r.i.to_string(),
            r.j.to_string(),
            field(r.r_before),
            field(r.r_after),
            field(r.reduction_pct()),
        ];
        if let Some(id) = scene_id {
            rec.insert(0, id.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_endpoint_row() {
        let rows = resistance_report(&InteractionGraph::chain(5), 1).unwrap();
        assert_eq!(rows.len(), 10);
        let r = rows.iter().find(|r| (r.i, r.j) == (0, 4)).unwrap();
        assert!((r.r_before.unwrap() - 4.0).abs() < 1e-9);
        assert!((r.r_after.unwrap() - 1.2).abs() < 1e-9);
        assert!((r.reduction_pct().unwrap() - 70.0).abs() < 1e-7);
    }

    #[test]
    fn triangle_pairs() {
        // one unit edge in parallel with a two-edge path: 1 * 2 / 3
        for r in resistance_report(&InteractionGraph::complete(3), 1).unwrap() {
            assert!((r.r_before.unwrap() - 2.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_node_report_is_empty() {
        let g = InteractionGraph::from_edges(1, vec![]).unwrap();
        assert!(resistance_report(&g, 2).unwrap().is_empty());
    }

    #[test]
    fn disconnected_rows_have_empty_fields() {
        let g = InteractionGraph::from_edges(3, vec![(0, 1)]).unwrap();
        let rows = resistance_report(&g, 1).unwrap();
        let r = rows.iter().find(|r| (r.i, r.j) == (0, 2)).unwrap();
        assert_eq!(r.r_before, None);
        assert!(r.r_after.is_some());
        let mut buf = Vec::new();
        write_resistance_csv(&mut buf, &rows, None, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,r_before,r_after,reduction_pct\n"));
        assert!(text.lines().any(|l| l.starts_with("0,2,,") && l.ends_with(',')));
    }
}
