use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use super::graph::{GraphBuilder, KnowledgeGraph};
use crate::{Error, Result};

/// Line accounting for one ingest run.
///
/// `lines_read = edges_kept + duplicates + malformed + filtered` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines_read: u64,
    pub edges_kept: u64,
    /// Well-formed lines repeating an already-seen `(src, rel, dst)` triple.
    pub duplicates: u64,
    pub malformed: u64,
    /// Well-formed lines with at least one endpoint outside the language filter.
    pub filtered: u64,
    pub nodes: u64,
    pub relations: u64,
}

impl IngestReport {
    pub fn skipped(&self) -> u64 {
        self.duplicates + self.malformed
    }

    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self) -> String {
        format!(
            "lines_read={}\nedges_kept={}\nduplicates={}\nmalformed={}\nfiltered={}\nnodes={}\nrelations={}\n",
            self.lines_read,
            self.edges_kept,
            self.duplicates,
            self.malformed,
            self.filtered,
            self.nodes,
            self.relations
        )
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "nodes={} edges={} relations={} (read {} lines: {} duplicate, {} malformed, {} outside language filter)",
            self.nodes,
            self.edges_kept,
            self.relations,
            self.lines_read,
            self.duplicates,
            self.malformed,
            self.filtered
        )
    }
}

/// Opens an assertions file, transparently decompressing gzip input.
pub fn open_assertions(path: &Path) -> Result<Box<dyn BufRead>> {
    let open_err = |source| Error::Open {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::open(path).map_err(open_err)?;
    let mut magic = [0u8; 2];
    let n = read_prefix(&mut file, &mut magic).map_err(open_err)?;
    let file = File::open(path).map_err(open_err)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::with_capacity(
            1 << 20,
            MultiGzDecoder::new(file),
        )))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 20, file)))
    }
}

fn read_prefix(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled)
}

/// `/c/<lang>/<term>[/...]` → `(lang, term)`.
fn parse_concept_uri(uri: &str) -> Option<(&str, &str)> {
    let mut parts = uri.strip_prefix("/c/")?.split('/');
    let lang = parts.next().filter(|s| !s.is_empty())?;
    let term = parts.next().filter(|s| !s.is_empty())?;
    Some((lang, term))
}

/// `/r/<Name>` → `name` (lowercased).
fn parse_relation_uri(uri: &str) -> Option<String> {
    let name = uri.strip_prefix("/r/")?.trim_end_matches('/');
    if name.is_empty() {
        return None;
    }
    Some(name.to_lowercase())
}

enum Line<'a> {
    Edge {
        rel: String,
        start: &'a str,
        end: &'a str,
    },
    Filtered,
    Malformed,
}

fn classify<'a>(line: &'a str, lang: &str) -> Line<'a> {
    let mut fields = line.split('\t');
    let (Some(_assertion), Some(rel), Some(start), Some(end)) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Line::Malformed;
    };
    let (Some(rel), Some((start_lang, start)), Some((end_lang, end))) = (
        parse_relation_uri(rel),
        parse_concept_uri(start),
        parse_concept_uri(end),
    ) else {
        return Line::Malformed;
    };
    if start_lang != lang || end_lang != lang {
        return Line::Filtered;
    }
    Line::Edge { rel, start, end }
}

/// Builds a graph from a ConceptNet assertions TSV stream.
///
/// Only edges whose start and end concepts are both in `language` are kept.
/// Concept labels are the lowercased term segment of the URI (sense suffixes
/// such as `/n` are dropped). Metadata weights are ignored. Malformed lines
/// are counted and skipped; only I/O failures abort.
pub fn ingest_conceptnet<R: BufRead>(
    mut reader: R,
    language: &str,
) -> Result<(KnowledgeGraph, IngestReport)> {
    let mut builder = GraphBuilder::new();
    let mut report = IngestReport::default();
    let mut buf = Vec::with_capacity(512);
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        report.lines_read += 1;
        let Ok(line) = std::str::from_utf8(&buf) else {
            report.malformed += 1;
            continue;
        };
        let line = line.trim_end_matches(['\n', '\r']);
        match classify(line, language) {
            Line::Malformed => report.malformed += 1,
            Line::Filtered => report.filtered += 1,
            Line::Edge { rel, start, end } => {
                if builder.add_edge(start, &rel, end) {
                    report.edges_kept += 1;
                } else {
                    report.duplicates += 1;
                }
            }
        }
    }
    let graph = builder.build();
    report.nodes = graph.node_count() as u64;
    report.relations = graph.relation_count() as u64;
    Ok((graph, report))
}
