use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use super::{build_index, Document, Embedder, SplitterParams, VectorIndex};

type Slot = Arc<OnceLock<Arc<VectorIndex>>>;

/// Per-document index cache keyed by `(doc_id, version)`.
///
/// Only the latest version of each document is kept. Concurrent callers
/// asking for the same key wait on a single build.
pub struct IndexCache {
    params: SplitterParams,
    embedder: Arc<dyn Embedder>,
    slots: Mutex<BTreeMap<String, (String, Slot)>>,
    builds: AtomicU64,
}

impl IndexCache {
    pub fn new(params: SplitterParams, embedder: Arc<dyn Embedder>) -> Self {
        Self { params, embedder, slots: Mutex::new(BTreeMap::new()), builds: AtomicU64::new(0) }
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn params(&self) -> &SplitterParams {
        &self.params
    }

    pub fn get_or_build(&self, doc: &Document) -> Arc<VectorIndex> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock");
            match slots.get(&doc.doc_id) {
                Some((version, slot)) if *version == doc.version => slot.clone(),
                _ => {
                    let slot: Slot = Arc::new(OnceLock::new());
                    slots.insert(doc.doc_id.clone(), (doc.version.clone(), slot.clone()));
                    slot
                }
            }
        };
        slot.get_or_init(|| {
            self.builds.fetch_add(1, Ordering::SeqCst);
            Arc::new(build_index(doc, &self.params, self.embedder.as_ref()))
        })
        .clone()
    }

    /// Number of index builds performed so far.
    pub fn builds(&self) -> u64 {
        self.builds.load(Ordering::SeqCst)
    }

    pub fn keys(&self) -> Vec<(String, String)> {
        let slots = self.slots.lock().expect("cache lock");
        slots.iter().map(|(id, (v, _))| (id.clone(), v.clone())).collect()
    }
}
