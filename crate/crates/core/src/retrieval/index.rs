use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{split_text, Chunk, Document, Embedder, EmbeddingVector, RetrievalError, RetrievalQuery, SplitterParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

/// Exact-scan index over one document's chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub doc_id: String,
    pub doc_version: String,
    pub dims: usize,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: usize,
    pub score: f64,
}

pub fn build_index(doc: &Document, params: &SplitterParams, embedder: &dyn Embedder) -> VectorIndex {
    let entries = split_text(&doc.text, params)
        .into_iter()
        .map(|chunk| {
            let vector = embedder.embed(&chunk.text);
            IndexEntry { chunk, vector }
        })
        .collect();
    VectorIndex {
        doc_id: doc.doc_id.clone(),
        doc_version: doc.version.clone(),
        dims: embedder.dims(),
        entries,
    }
}

/// Scores closer than this are tied. Mathematically equal cosines can come
/// out an ulp or two apart depending on summation order.
pub const SCORE_TIE_EPSILON: f64 = 1e-12;

/// Top `k` chunks by cosine similarity, best first; tied scores (see
/// [`SCORE_TIE_EPSILON`]) go to the lower chunk id. Scans every entry.
pub fn search(
    index: &VectorIndex,
    query: &RetrievalQuery,
    embedder: &dyn Embedder,
) -> Result<Vec<SearchHit>, RetrievalError> {
    if index.entries.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let q = embedder.embed(&query.text);
    if q.dims() != index.dims {
        return Err(RetrievalError::DimensionMismatch { query: q.dims(), index: index.dims });
    }
    let mut hits: Vec<SearchHit> = index
        .entries
        .iter()
        .map(|e| SearchHit { chunk_id: e.chunk.chunk_id, score: q.cosine(&e.vector) })
        .collect();
    hits.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.chunk_id.cmp(&b.chunk_id),
        o => o,
    });
    // Runs of near-equal scores are reordered by chunk id.
    let mut start = 0;
    for i in 1..=hits.len() {
        if i == hits.len() || hits[i - 1].score - hits[i].score > SCORE_TIE_EPSILON {
            hits[start..i].sort_by_key(|h| h.chunk_id);
            start = i;
        }
    }
    hits.truncate(query.k);
    Ok(hits)
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    version: u32,
    doc_id: String,
    doc_version: String,
    dims: usize,
    entries: usize,
}

const DUMP_FORMAT: &str = "smartclass-vector-index";

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chunk(&self, chunk_id: usize) -> Option<&Chunk> {
        self.entries.get(chunk_id).map(|e| &e.chunk)
    }

    /// Writes the index as JSON lines: a header object, then one
    /// `IndexEntry` per line in chunk order.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = DumpHeader {
            format: DUMP_FORMAT.into(),
            version: 1,
            doc_id: self.doc_id.clone(),
            doc_version: self.doc_version.clone(),
            dims: self.dims,
            entries: self.entries.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self, RetrievalError> {
        let err = |m: String| RetrievalError::Dump(m);
        let mut lines = r.lines();
        let header: DumpHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l.map_err(|e| err(e.to_string()))?).map_err(|e| err(e.to_string()))?,
            None => return Err(err("missing header".into())),
        };
        if header.format != DUMP_FORMAT || header.version != 1 {
            return Err(err(format!("unsupported format {} v{}", header.format, header.version)));
        }
        let mut entries = Vec::with_capacity(header.entries);
        for (i, line) in lines.enumerate() {
            let e: IndexEntry = serde_json::from_str(&line.map_err(|e| err(e.to_string()))?)
                .map_err(|e| err(format!("entry {i}: {e}")))?;
            if e.chunk.chunk_id != i || e.vector.dims() != header.dims {
                return Err(err(format!("entry {i} is out of order or has wrong dimension")));
            }
            entries.push(e);
        }
        if entries.len() != header.entries {
            return Err(err(format!("expected {} entries, found {}", header.entries, entries.len())));
        }
        Ok(Self { doc_id: header.doc_id, doc_version: header.doc_version, dims: header.dims, entries })
    }
}

#[cfg(test)]
mod tests {
    use super::super::HashingEmbedder;
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d", "t", text).unwrap()
    }

    #[test]
    fn single_chunk_document() {
        let e = HashingEmbedder::default();
        let idx = build_index(&doc("tiny text"), &SplitterParams::default(), &e);
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn chunk_ids_dense() {
        let e = HashingEmbedder::default();
        let text = (0..40).map(|i| format!("sentence number {i} about sensors.")).collect::<Vec<_>>().join(" ");
        let idx = build_index(&doc(&text), &SplitterParams::with_sizes(100, 10).unwrap(), &e);
        assert!(idx.len() > 5);
        for (i, entry) in idx.entries.iter().enumerate() {
            assert_eq!(entry.chunk.chunk_id, i);
        }
    }

    #[test]
    fn rebuild_is_identical() {
        let e = HashingEmbedder::default();
        let p = SplitterParams::with_sizes(50, 5).unwrap();
        let text = "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi omicron pi rho";
        let a = build_index(&doc(text), &p, &e);
        let b = build_index(&doc(text), &p, &e);
        assert_eq!(a.doc_version, b.doc_version);
        assert_eq!(a, b);
    }

    #[test]
    fn self_query_ranks_first() {
        let e = HashingEmbedder::default();
        let text = "Sensors report temperature.\n\nRelays switch the fans.\n\nQuizzes test recall.";
        let idx = build_index(&doc(text), &SplitterParams::with_sizes(30, 0).unwrap(), &e);
        assert_eq!(idx.len(), 3);
        let q = RetrievalQuery::new("Relays switch the fans.", 2).unwrap();
        let hits = search(&idx, &q, &e).unwrap();
        assert_eq!(hits[0].chunk_id, 1);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn k_beyond_size_returns_everything_sorted() {
        let e = HashingEmbedder::default();
        let text = "a b c\n\nb c d\n\nc d e\n\nx y z";
        let idx = build_index(&doc(text), &SplitterParams::with_sizes(6, 0).unwrap(), &e);
        let hits = search(&idx, &RetrievalQuery::new("c d", 10).unwrap(), &e).unwrap();
        assert_eq!(hits.len(), idx.len());
        for w in hits.windows(2) {
            let tied = (w[0].score - w[1].score).abs() <= SCORE_TIE_EPSILON;
            assert!(if tied { w[0].chunk_id < w[1].chunk_id } else { w[0].score > w[1].score });
        }
    }

    #[test]
    fn zero_query_scores_zero_in_id_order() {
        let e = HashingEmbedder::default();
        let idx = build_index(&doc("one\n\ntwo\n\nthree"), &SplitterParams::with_sizes(5, 0).unwrap(), &e);
        let hits = search(&idx, &RetrievalQuery::new("?!", 4).unwrap(), &e).unwrap();
        assert_eq!(hits.iter().map(|h| h.chunk_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(hits.iter().all(|h| h.score == 0.0));
    }

    #[test]
    fn near_equal_scores_tie_by_chunk_id() {
        // Chunk 1 scores about 1e-15 higher than chunk 0: a tie.
        let e = HashingEmbedder::new(2);
        let entry = |chunk_id: usize, x: f64| IndexEntry {
            chunk: Chunk { chunk_id, start_offset: chunk_id, end_offset: chunk_id + 1, text: String::new() },
            vector: EmbeddingVector::normalized(vec![x, 0.8]),
        };
        let index = VectorIndex {
            doc_id: "d".into(),
            doc_version: "v".into(),
            dims: 2,
            entries: vec![entry(0, 0.6), entry(1, 0.6 - 1e-15), entry(2, 0.9)],
        };
        let q = (0..).map(|i| format!("w{i}")).find(|w| e.bucket(w) == (1, 1.0)).unwrap();
        let hits = search(&index, &RetrievalQuery::new(&q, 3).unwrap(), &e).unwrap();
        assert!(hits[1].score > hits[0].score);
        assert_eq!(hits.iter().map(|h| h.chunk_id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_index_errors() {
        let e = HashingEmbedder::default();
        let idx = VectorIndex { doc_id: "d".into(), doc_version: "v".into(), dims: 1024, entries: vec![] };
        assert_eq!(search(&idx, &RetrievalQuery::new("x", 1).unwrap(), &e), Err(RetrievalError::EmptyIndex));
    }

    #[test]
    fn dump_round_trip() {
        let e = HashingEmbedder::new(16);
        let idx = build_index(&doc("alpha beta\n\ngamma delta"), &SplitterParams::with_sizes(10, 0).unwrap(), &e);
        let mut buf = Vec::new();
        idx.write_dump(&mut buf).unwrap();
        let back = VectorIndex::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        let truncated = &buf[..buf.len() - 20];
        assert!(VectorIndex::read_dump(truncated).is_err());
    }
}
