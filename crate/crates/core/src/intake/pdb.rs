//! Fixed-column PDB coordinate records.

use std::collections::BTreeMap;
use std::fmt::Write;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PdbSummary {
    pub atom_records: usize,
    pub hetatm_records: usize,
    /// Chain identifiers in order of first appearance.
    pub chain_ids: Vec<char>,
    /// Lowest and highest residue number per chain.
    pub residue_spans: BTreeMap<char, (i32, i32)>,
    pub models: usize,
    pub title: Option<String>,
    /// Coordinate records too short or with an unparsable residue number.
    pub malformed_records: usize,
}

impl PdbSummary {
    pub fn scan(text: &str) -> Self {
        let mut summary = PdbSummary::default();
        for line in text.lines() {
            let record = line.get(..6).unwrap_or(line);
            match record {
                "ATOM  " => summary.atom_records += 1,
                "HETATM" => summary.hetatm_records += 1,
                _ => {
                    if record.starts_with("MODEL") {
                        summary.models += 1;
                    } else if record.starts_with("HEADER") && summary.title.is_none() {
                        let title = line.get(10..50).unwrap_or("").trim();
                        if !title.is_empty() {
                            summary.title = Some(title.to_string());
                        }
                    }
                    continue;
                }
            }
            let chain = line.as_bytes().get(21).map(|&b| b as char);
            let residue = line.get(22..26).and_then(|s| s.trim().parse::<i32>().ok());
            let (Some(chain), Some(residue)) = (chain, residue) else {
                summary.malformed_records += 1;
                continue;
            };
            if !summary.chain_ids.contains(&chain) {
                summary.chain_ids.push(chain);
            }
            summary
                .residue_spans
                .entry(chain)
                .and_modify(|(lo, hi)| {
                    *lo = (*lo).min(residue);
                    *hi = (*hi).max(residue);
                })
                .or_insert((residue, residue));
        }
        summary.models = summary.models.max(1);
        summary
    }

    pub fn coordinate_records(&self) -> usize {
        self.atom_records + self.hetatm_records
    }

    pub fn chain_list(&self) -> String {
        self.chain_ids
            .iter()
            .map(|c| if *c == ' ' { "_".to_string() } else { c.to_string() })
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(title) = &self.title {
            let _ = writeln!(out, "title: {title}");
        }
        let _ = writeln!(out, "records: ATOM {}, HETATM {}", self.atom_records, self.hetatm_records);
        let _ = writeln!(out, "models: {}", self.models);
        let _ = writeln!(out, "chains: {}", self.chain_list());
        let spans: Vec<String> = self
            .chain_ids
            .iter()
            .filter_map(|c| self.residue_spans.get(c).map(|(lo, hi)| format!("{c} {lo}-{hi}")))
            .collect();
        let _ = writeln!(out, "residues: {}", spans.join(", "));
        if self.malformed_records > 0 {
            let _ = writeln!(out, "malformed coordinate records skipped: {}", self.malformed_records);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
HEADER    PLANT PROTEIN                           30-APR-81   1CRN
ATOM      1  N   THR A   1      17.047  14.099   3.625  1.00 13.79           N
ATOM      2  CA  THR A   1      16.967  12.784   4.338  1.00 10.80           C
ATOM      3  CA  ASN A  46      16.967  12.784   4.338  1.00 10.80           C
HETATM    4  O   HOH B 101      10.000  10.000  10.000  1.00 20.00           O
ATOM      5  CA
END
";

    #[test]
    fn counts_chains_and_spans() {
        let s = PdbSummary::scan(SAMPLE);
        assert_eq!(s.atom_records, 4);
        assert_eq!(s.hetatm_records, 1);
        assert_eq!(s.chain_ids, ['A', 'B']);
        assert_eq!(s.residue_spans[&'A'], (1, 46));
        assert_eq!(s.residue_spans[&'B'], (101, 101));
        assert_eq!(s.malformed_records, 1);
        assert_eq!(s.title.as_deref(), Some("PLANT PROTEIN"));
        assert!(s.render().contains("residues: A 1-46, B 101-101"));
    }
}
