use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ClaimRecord, EvidenceSnippet, LabelScheme, SNIPPET_SLOTS};
use crate::error::{Error, Result};

/// Lowercases a host name and strips a leading `www.`.
pub fn normalize_domain(domain: &str) -> String {
    let d = domain.trim().trim_end_matches('.').to_ascii_lowercase();
    match d.strip_prefix("www.") {
        Some(rest) => rest.to_string(),
        None => d,
    }
}

/// Validates a parsed record and brings it into canonical shape: snippets
/// from the claim's own site are dropped, vacated and missing ranks are
/// filled with padded slots, and slots are ordered by rank.
pub fn normalize_record(mut record: ClaimRecord, scheme: &LabelScheme) -> Result<ClaimRecord> {
    let invalid = |msg: String| Error::InvalidRecord {
        id: record.id.clone(),
        message: msg,
    };
    if record.claim_text.trim().is_empty() {
        return Err(invalid("empty claim text".into()));
    }
    if scheme.index_of(&record.label).is_none() && !scheme.is_excluded(&record.label) {
        return Err(Error::UnknownLabel {
            label: record.label.clone(),
            scheme: scheme.name.clone(),
        });
    }
    let mut ranks = BTreeSet::new();
    for s in &record.snippets {
        if s.rank == 0 || s.rank as usize > SNIPPET_SLOTS {
            return Err(invalid(format!("snippet rank {} outside 1..={SNIPPET_SLOTS}", s.rank)));
        }
        if !ranks.insert(s.rank) {
            return Err(invalid(format!("duplicate snippet rank {}", s.rank)));
        }
    }

    let origin = normalize_domain(&record.origin_domain);
    let mut slots: Vec<Option<EvidenceSnippet>> = vec![None; SNIPPET_SLOTS];
    for s in std::mem::take(&mut record.snippets) {
        let from_origin = !origin.is_empty() && normalize_domain(&s.source_domain) == origin;
        if s.padded || from_origin {
            continue;
        }
        let idx = s.rank as usize - 1;
        slots[idx] = Some(s);
    }
    record.snippets = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.unwrap_or_else(|| EvidenceSnippet::pad(i as u8 + 1)))
        .collect();
    Ok(record)
}

pub fn read_corpus<R: BufRead>(reader: R, scheme: &LabelScheme) -> Result<Vec<ClaimRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ClaimRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(normalize_record(record, scheme)?);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path, scheme: &LabelScheme) -> Result<Vec<ClaimRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), scheme)
}

pub fn write_corpus(path: &Path, records: &[ClaimRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// SHA-256 of the serialized records, independent of file location.
pub fn content_hash(records: &[ClaimRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_string(r).expect("record serializes").as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, label: &str, snippets: &[(u8, &str, &str)]) -> String {
        let snips: Vec<String> = snippets
            .iter()
            .map(|(rank, text, dom)| {
                format!(r#"{{"rank":{rank},"title":"t","text":"{text}","source_domain":"{dom}"}}"#)
            })
            .collect();
        format!(
            r#"{{"id":"{id}","claim":"the claim","label":"{label}","origin_domain":"snopes.com","snippets":[{}]}}"#,
            snips.join(",")
        )
    }

    fn ten(dom_for_rank2: &str) -> Vec<(u8, &str, &str)> {
        (1..=10u8)
            .map(|r| (r, "snippet", if r == 2 { dom_for_rank2 } else { "news.com" }))
            .collect()
    }

    #[test]
    fn three_lines_three_records() {
        let text = [
            line("a", "true", &ten("x.org")),
            line("b", "false", &ten("x.org")),
            line("c", "mixture", &ten("x.org")),
        ]
        .join("\n");
        let recs = read_corpus(text.as_bytes(), &LabelScheme::snopes()).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs
            .iter()
            .all(|r| r.snippets.len() == 10 && r.real_snippets().count() == 10));
    }

    #[test]
    fn short_records_are_padded() {
        let snips: Vec<_> = (1..=7u8).map(|r| (r, "s", "news.com")).collect();
        let recs = read_corpus(line("a", "true", &snips).as_bytes(), &LabelScheme::snopes()).unwrap();
        let r = &recs[0];
        assert_eq!(r.snippets.len(), 10);
        assert_eq!(r.real_snippets().count(), 7);
        assert!(r.snippets[7..].iter().all(|s| s.padded && s.text.is_empty()));
        let ranks: Vec<u8> = r.snippets.iter().map(|s| s.rank).collect();
        assert_eq!(ranks, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn origin_snippet_removed_and_ranks_kept() {
        let text = line("a", "true", &ten("www.Snopes.com"));
        let r = &read_corpus(text.as_bytes(), &LabelScheme::snopes()).unwrap()[0];
        assert_eq!(r.snippets.len(), 10);
        let pads: Vec<u8> = r.snippets.iter().filter(|s| s.padded).map(|s| s.rank).collect();
        assert_eq!(pads, vec![2]);
        let real: Vec<u8> = r.real_snippets().map(|s| s.rank).collect();
        assert_eq!(real, vec![1, 3, 4, 5, 6, 7, 8, 9, 10]);
        assert!(r
            .real_snippets()
            .all(|s| normalize_domain(&s.source_domain) != "snopes.com"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n{{not json\n", line("a", "true", &ten("x.org")));
        match read_corpus(text.as_bytes(), &LabelScheme::snopes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_is_named() {
        let text = line("a", "pants on fire!", &ten("x.org"));
        match read_corpus(text.as_bytes(), &LabelScheme::snopes()) {
            Err(Error::UnknownLabel { label, .. }) => assert_eq!(label, "pants on fire!"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn excluded_labels_load_for_later_filtering() {
        let text = line("a", "legend", &ten("x.org"));
        assert_eq!(read_corpus(text.as_bytes(), &LabelScheme::snopes()).unwrap().len(), 1);
    }

    #[test]
    fn duplicate_rank_rejected() {
        let text = line("a", "true", &[(1, "s", "a.com"), (1, "s", "b.com")]);
        assert!(matches!(
            read_corpus(text.as_bytes(), &LabelScheme::snopes()),
            Err(Error::InvalidRecord { .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let snips: Vec<_> = (1..=6u8).map(|r| (r, "s", "news.com")).collect();
        let text = [line("a", "true", &snips), line("b", "false", &ten("snopes.com"))].join("\n");
        let recs = read_corpus(text.as_bytes(), &LabelScheme::snopes()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &recs).unwrap();
        let back = load_corpus(&path, &LabelScheme::snopes()).unwrap();
        assert_eq!(recs, back);
        assert_eq!(content_hash(&recs), content_hash(&back));
    }
}
