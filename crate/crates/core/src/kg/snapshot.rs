//! Versioned binary graph snapshot.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "KGCTXSNP"
//! version  u32      1
//! counts   u64 x 3  nodes, relations, edges
//! labels   (u32 byte length + UTF-8) per node, then per relation
//! offsets  u64 x (nodes + 1)     CSR row offsets
//! edges    (u32 relation, u32 destination) per edge
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::graph::{ConceptId, KnowledgeGraph, LabeledEdge, RelationId};
use crate::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"KGCTXSNP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Writer adapter that feeds every byte into a SHA-256 state.
pub(crate) struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> HashingWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: Sha256::new(),
        }
    }

    pub(crate) fn finish(self) -> (W, [u8; 32]) {
        (self.inner, self.hasher.finalize().into())
    }
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub(crate) fn fingerprint(graph: &KnowledgeGraph) -> [u8; 32] {
    let mut w = HashingWriter::new(io::sink());
    encode(graph, &mut w).expect("writing to a sink cannot fail");
    w.finish().1
}

fn put_label(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn encode(graph: &KnowledgeGraph, w: &mut impl Write) -> io::Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    for count in [graph.nodes.len(), graph.relations.len(), graph.edges.len()] {
        w.write_all(&(count as u64).to_le_bytes())?;
    }
    for label in graph.nodes.iter().chain(&graph.relations) {
        put_label(w, label)?;
    }
    for &off in &graph.offsets {
        w.write_all(&(off as u64).to_le_bytes())?;
    }
    for e in &graph.edges {
        w.write_all(&e.rel.0.to_le_bytes())?;
        w.write_all(&e.dst.0.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_snapshot(graph: &KnowledgeGraph, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    encode(graph, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn save_snapshot(graph: &KnowledgeGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    write_snapshot(graph, file)
}

pub(crate) fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_label(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| Error::Format("label is not valid UTF-8".into()))
}

fn format_err(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated snapshot".into())
    } else {
        Error::Io(e)
    }
}

/// Reads a snapshot, validating structure. The graph's fingerprint is the
/// SHA-256 of the bytes consumed.
pub fn read_snapshot(r: impl Read) -> Result<KnowledgeGraph> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(format_err)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a graph snapshot (bad magic)".into()));
    }
    let version = read_u32(&mut r).map_err(format_err)?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    let n = read_u64(&mut r).map_err(format_err)? as usize;
    let m = read_u64(&mut r).map_err(format_err)? as usize;
    let e = read_u64(&mut r).map_err(format_err)? as usize;
    if n > u32::MAX as usize || m > u32::MAX as usize {
        return Err(Error::Format("id space overflow".into()));
    }

    let read_labels = |r: &mut BufReader<_>, count: usize| -> Result<Vec<String>> {
        (0..count)
            .map(|_| read_label(r).map_err(|e| match e {
                Error::Io(io) => format_err(io),
                other => other,
            }))
            .collect()
    };
    let nodes = read_labels(&mut r, n)?;
    let relations = read_labels(&mut r, m)?;

    let mut offsets = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        offsets.push(read_u64(&mut r).map_err(format_err)? as usize);
    }
    if offsets[0] != 0 || offsets[n] != e || offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Format("inconsistent adjacency offsets".into()));
    }

    let mut edges = Vec::with_capacity(e);
    for src in 0..n {
        for _ in offsets[src]..offsets[src + 1] {
            let rel = read_u32(&mut r).map_err(format_err)?;
            let dst = read_u32(&mut r).map_err(format_err)?;
            if rel as usize >= m || dst as usize >= n {
                return Err(Error::Format(format!(
                    "edge from node {src} references an invalid id"
                )));
            }
            edges.push(LabeledEdge {
                src: ConceptId(src as u32),
                rel: RelationId(rel),
                dst: ConceptId(dst),
            });
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after snapshot".into()));
    }
    Ok(KnowledgeGraph::from_parts(nodes, relations, offsets, edges))
}

pub fn load_snapshot(path: &Path) -> Result<KnowledgeGraph> {
    let file = File::open(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    read_snapshot(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::GraphBuilder;

    fn sample() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_edge("waves", "causesdesire", "surf");
        b.add_edge("surf", "isa", "wave");
        b.add_edge("wave", "partof", "ocean");
        b.add_edge("wave", "relatedto", "ocean");
        b.add_node("isolated");
        b.build()
    }

    #[test]
    fn roundtrip_preserves_graph_and_fingerprint() {
        let g = sample();
        let mut bytes = Vec::new();
        write_snapshot(&g, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], SNAPSHOT_MAGIC);
        let back = read_snapshot(&bytes[..]).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.fingerprint(), g.fingerprint());
        let direct: [u8; 32] = Sha256::digest(&bytes).into();
        assert_eq!(&direct, g.fingerprint());
    }

    #[test]
    fn rejects_corruption() {
        let g = sample();
        let mut bytes = Vec::new();
        write_snapshot(&g, &mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_snapshot(&bad_magic[..]), Err(Error::Format(_))));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_snapshot(truncated), Err(Error::Format(_))));

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(matches!(read_snapshot(&trailing[..]), Err(Error::Format(_))));

        let mut bad_dst = bytes.clone();
        let len = bad_dst.len();
        bad_dst[len - 4..].copy_from_slice(&999u32.to_le_bytes());
        assert!(matches!(read_snapshot(&bad_dst[..]), Err(Error::Format(_))));
    }
}
