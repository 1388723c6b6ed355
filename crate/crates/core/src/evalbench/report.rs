//! Plain-text comparison tables.

use std::fmt::Write as _;

use super::VotScores;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VotRow {
    pub tracker: String,
    pub scores: VotScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtbRow {
    pub tracker: String,
    pub precision_20: f64,
    pub auc: f64,
}

fn name_width<'a>(names: impl Iterator<Item = &'a str>) -> usize {
    names.map(str::len).max().unwrap_or(0).max("Tracker".len())
}

/// `Tracker  EAO  ACC  ROB` with EAO to three decimals and the others to two.
pub fn render_vot_table(rows: &[VotRow]) -> String {
    let w = name_width(rows.iter().map(|r| r.tracker.as_str()));
    let mut s = format!("{:<w$}  {:>5}  {:>4}  {:>5}\n", "Tracker", "EAO", "ACC", "ROB");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<w$}  {:>5.3}  {:>4.2}  {:>5.2}",
            r.tracker, r.scores.eao, r.scores.accuracy, r.scores.robustness
        );
    }
    s
}

/// Reads back a table written by [`render_vot_table`]. Tracker names may not
/// contain whitespace.
pub fn parse_vot_table(text: &str) -> Result<Vec<VotRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.split_whitespace().collect::<Vec<_>>() == ["Tracker", "EAO", "ACC", "ROB"] => {}
        _ => return Err(Error::Data("VOT table must start with `Tracker EAO ACC ROB`".into())),
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Data(format!("bad VOT table row `{l}`")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad number `{s}` in VOT table")))
            };
            Ok(VotRow {
                tracker: f[0].to_string(),
                scores: VotScores {
                    eao: num(f[1])?,
                    accuracy: num(f[2])?,
                    robustness: num(f[3])?,
                },
            })
        })
        .collect()
}

pub fn render_otb_table(rows: &[OtbRow]) -> String {
    let w = name_width(rows.iter().map(|r| r.tracker.as_str()));
    let mut s = format!("{:<w$}  {:>5}  {:>5}\n", "Tracker", "P@20", "AUC");
    for r in rows {
        let _ = writeln!(s, "{:<w$}  {:>5.3}  {:>5.3}", r.tracker, r.precision_20, r.auc);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vot_table_round_trip() {
        let rows = vec![VotRow {
            tracker: "Ours".into(),
            scores: VotScores {
                eao: 0.335,
                accuracy: 0.54,
                robustness: 0.87,
            },
        }];
        let text = render_vot_table(&rows);
        assert_eq!(text, "Tracker    EAO   ACC    ROB\nOurs     0.335  0.54   0.87\n");
        assert_eq!(parse_vot_table(&text).unwrap(), rows);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(parse_vot_table("Name EAO\n").is_err());
        assert!(parse_vot_table("Tracker EAO ACC ROB\nOurs 0.3 x 0.8\n").is_err());
    }
}
