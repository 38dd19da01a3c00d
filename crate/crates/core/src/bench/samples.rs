//! Deterministic sample files for the intake suite.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GENES: &[&str] = &["BRCA1", "TP53", "EGFR", "KRAS", "MYC", "PTEN", "ALK", "BRAF", "CDK4", "ERBB2"];
const TISSUES: &[&str] = &["liver", "lung", "kidney", "brain", "heart", "spleen"];

/// Header plus `rows` records: integer, real, date and two text columns.
pub fn csv_sample(rows: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("sample_id,gene,tissue,expression,collected,replicate\n");
    for i in 0..rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},2024-{:02}-{:02},{}",
            i + 1,
            GENES.choose(&mut rng).unwrap(),
            TISSUES.choose(&mut rng).unwrap(),
            rng.gen_range(0.0..250.0f64),
            rng.gen_range(1..=12),
            rng.gen_range(1..=28),
            rng.gen_range(1..=4),
        );
    }
    out.into_bytes()
}

const RESIDUES: &[(&str, &[&str])] = &[
    ("ALA", &["N", "CA", "C", "O", "CB"]),
    ("GLY", &["N", "CA", "C", "O"]),
    ("SER", &["N", "CA", "C", "O", "CB", "OG"]),
    ("LEU", &["N", "CA", "C", "O", "CB", "CG", "CD1", "CD2"]),
    ("LYS", &["N", "CA", "C", "O", "CB", "CG", "CD", "CE", "NZ"]),
    ("PHE", &["N", "CA", "C", "O", "CB", "CG", "CD1", "CD2", "CE1", "CE2", "CZ"]),
];

/// A multi-chain coordinate file of roughly `lines` lines.
pub fn pdb_sample(lines: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(lines * 81);
    out.push_str("HEADER    SYNTHETIC ASSEMBLY                      01-JAN-24   0SYN\n");
    out.push_str("TITLE     BENCHMARK ASSEMBLY FOR INTAKE LATENCY\n");
    let chains = ['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H'];
    let per_chain = lines / chains.len();
    let mut serial = 1usize;
    for chain in chains {
        let mut res_seq = 1i32;
        let mut chain_lines = 0;
        while chain_lines < per_chain {
            let (name, atoms) = RESIDUES.choose(&mut rng).unwrap();
            for atom in *atoms {
                let element = &atom[..1];
                let _ = writeln!(
                    out,
                    "ATOM  {:>5} {:<4} {} {}{:>4}    {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}          {:>2}",
                    serial % 100_000,
                    atom,
                    name,
                    chain,
                    res_seq % 10_000,
                    rng.gen_range(-80.0..80.0f64),
                    rng.gen_range(-80.0..80.0f64),
                    rng.gen_range(-80.0..80.0f64),
                    1.0,
                    rng.gen_range(10.0..90.0f64),
                    element,
                );
                serial += 1;
                chain_lines += 1;
            }
            res_seq += 1;
        }
        let _ = writeln!(out, "TER   {:>5}      {} {}{:>4}", serial % 100_000, "GLY", chain, res_seq - 1);
        serial += 1;
    }
    out.push_str("END\n");
    out.into_bytes()
}

const SENTENCES: &[&str] = &[
    "Protein folding determines the function of most enzymes studied here.",
    "We measured binding affinities across a panel of kinase inhibitors.",
    "The resulting structures were refined against high resolution diffraction data.",
    "Molecular dynamics trajectories were sampled for two hundred nanoseconds.",
    "Residues lining the pocket showed reduced flexibility upon ligand binding.",
    "Control experiments used a catalytically inactive mutant of the enzyme.",
    "Statistical significance was assessed with a two sided permutation test.",
    "Expression levels were normalised to the housekeeping gene in each tissue.",
    "The docking poses agreed with the crystallographic ligand within two angstroms.",
    "These observations suggest an allosteric route to selective inhibition.",
];

/// A paper-shaped PDF: title, abstract, then numbered sections spread over
/// `pages` pages of body text.
pub fn pdf_sample(pages: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paragraph = |n: usize| -> Vec<String> {
        let text: Vec<&str> = (0..n).map(|_| *SENTENCES.choose(&mut rng).unwrap()).collect();
        wrap(&text.join(" "), 90)
    };
    let mut page_lines: Vec<Vec<String>> = Vec::new();
    let mut first = vec!["Allosteric Inhibition of a Model Kinase".to_string(), String::new(), "Abstract".to_string()];
    first.extend(paragraph(6));
    first.push(String::new());
    first.push("1 Introduction".to_string());
    while first.len() < 60 {
        first.extend(paragraph(4));
    }
    page_lines.push(first);
    for page in 1..pages.max(1) {
        let mut lines = vec![format!("{} Results and Discussion, part {}", page + 1, page)];
        while lines.len() < 60 {
            lines.extend(paragraph(4));
        }
        page_lines.push(lines);
    }
    write_pdf(&page_lines)
}

fn wrap(text: &str, width: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut line = String::new();
    for word in text.split_whitespace() {
        if !line.is_empty() && line.len() + 1 + word.len() > width {
            lines.push(std::mem::take(&mut line));
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(word);
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}

fn pdf_escape(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    for c in line.chars() {
        if matches!(c, '(' | ')' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Minimal single-font PDF 1.4 with a correct cross-reference table.
pub fn write_pdf(pages: &[Vec<String>]) -> Vec<u8> {
    let n = pages.len();
    // 1 catalog, 2 pages, 3 font, then (page, content) pairs.
    let mut objects: Vec<String> = Vec::new();
    objects.push("<< /Type /Catalog /Pages 2 0 R >>".into());
    let kids: Vec<String> = (0..n).map(|i| format!("{} 0 R", 4 + 2 * i)).collect();
    objects.push(format!("<< /Type /Pages /Kids [{}] /Count {n} >>", kids.join(" ")));
    objects.push("<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>".into());
    for (i, lines) in pages.iter().enumerate() {
        let content_id = 5 + 2 * i;
        objects.push(format!(
            "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Resources << /Font << /F1 3 0 R >> >> /Contents {content_id} 0 R >>"
        ));
        let mut stream = String::from("BT\n/F1 10 Tf\n12 TL\n50 760 Td\n");
        for line in lines {
            let _ = writeln!(stream, "({}) Tj T*", pdf_escape(line));
        }
        stream.push_str("ET\n");
        objects.push(format!("<< /Length {} >>\nstream\n{stream}endstream", stream.len()));
    }

    let mut out = b"%PDF-1.4\n".to_vec();
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n{body}\nendobj\n", i + 1).as_bytes());
    }
    let xref = out.len();
    let mut table = format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1);
    for offset in offsets {
        let _ = writeln!(table, "{offset:010} 00000 n ");
    }
    let _ = write!(
        table,
        "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{xref}\n%%EOF\n",
        objects.len() + 1
    );
    out.extend_from_slice(table.as_bytes());
    out
}
