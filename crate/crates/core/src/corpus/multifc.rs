use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{ClaimRecord, EvidenceSnippet, SNIPPET_SLOTS};
use crate::error::{Error, Result};

/// The columns of a MultiFC export row that the converter keeps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiFcRow {
    pub claim_id: String,
    pub claim: String,
    pub label: String,
    pub claim_url: String,
}

fn host_of(url_text: &str) -> String {
    url::Url::parse(url_text.trim())
        .ok()
        .and_then(|u| u.host_str().map(super::normalize_domain))
        .unwrap_or_default()
}

fn parse_row(line: &str, line_no: usize) -> Result<MultiFcRow> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() < 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected at least 4 tab-separated columns, found {}", cols.len()),
        });
    }
    Ok(MultiFcRow {
        claim_id: cols[0].trim().to_string(),
        claim: cols[1].trim().to_string(),
        label: cols[2].trim().to_string(),
        claim_url: cols[3].trim().to_string(),
    })
}

/// Snippet files hold one hit per line: `rank \t title \t snippet \t url`.
fn read_snippets(path: &Path) -> Result<Vec<EvidenceSnippet>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut by_rank: BTreeMap<u8, EvidenceSnippet> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let rank = cols
            .first()
            .and_then(|r| r.trim().parse::<usize>().ok())
            .unwrap_or(i + 1);
        if rank == 0 || rank > SNIPPET_SLOTS {
            continue;
        }
        let title = cols.get(1).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        let body = cols.get(2).map(|s| s.trim()).unwrap_or_default();
        let domain = cols.get(3).map(|u| host_of(u)).unwrap_or_default();
        by_rank.entry(rank as u8).or_insert(EvidenceSnippet {
            rank: rank as u8,
            title,
            text: body.to_string(),
            source_domain: domain,
            padded: false,
        });
    }
    Ok(by_rank.into_values().collect())
}

/// Converts a MultiFC tab-separated export plus its per-claim snippet
/// directory into claim records. Only rows whose claim id starts with
/// `id_prefix` are kept (e.g. `pomt-` for PolitiFact, `snes-` for Snopes).
/// Records are returned raw; pass them through
/// [`normalize_record`](super::normalize_record) to validate and pad.
pub fn convert_multifc(tsv: &Path, snippets_dir: &Path, id_prefix: &str) -> Result<Vec<ClaimRecord>> {
    let text = fs::read_to_string(tsv).map_err(|e| Error::io(tsv, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_row(line, i + 1)?;
        if !row.claim_id.starts_with(id_prefix) {
            continue;
        }
        let snippets = read_snippets(&snippets_dir.join(&row.claim_id))?;
        out.push(ClaimRecord {
            origin_domain: host_of(&row.claim_url),
            id: row.claim_id,
            claim_text: row.claim,
            label: row.label,
            snippets,
        });
    }
    Ok(out)
}
