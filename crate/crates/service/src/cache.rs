//! Per-class buffers of pre-generated captions.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use memeify_core::GeneratedCaption;
use serde::Serialize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Store of ready-to-serve captions, keyed by class.
///
/// Implementations must never return a caption under a class other than the
/// one it was stored with, and never return an expired entry.
pub trait CaptionCache: Send + Sync {
    /// Removes and returns the oldest live caption of `class` accepted by
    /// `accept`, counting a hit or a miss.
    fn take(&self, class: &str, accept: &mut dyn FnMut(&GeneratedCaption) -> bool) -> Option<GeneratedCaption>;

    /// Stores a caption; returns false when the buffer is full or already
    /// holds the same caption.
    fn put(&self, caption: GeneratedCaption) -> bool;

    /// Live entries for `class`.
    fn len(&self, class: &str) -> usize;

    fn capacity(&self) -> usize;

    fn stats(&self) -> CacheStats;
}

struct Entry {
    added: Instant,
    digest: String,
    caption: GeneratedCaption,
}

/// In-process ring buffers with a time-to-live.
pub struct MemeCache {
    capacity: usize,
    ttl: Duration,
    buffers: Mutex<HashMap<String, VecDeque<Entry>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl MemeCache {
    pub fn new(capacity: usize, ttl: Duration) -> Self {
        MemeCache {
            capacity,
            ttl,
            buffers: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    fn expire(&self, buf: &mut VecDeque<Entry>, now: Instant) {
        buf.retain(|e| now.duration_since(e.added) < self.ttl);
    }

    pub fn take_at(
        &self,
        class: &str,
        now: Instant,
        accept: &mut dyn FnMut(&GeneratedCaption) -> bool,
    ) -> Option<GeneratedCaption> {
        let mut buffers = self.buffers.lock().unwrap();
        let found = buffers.get_mut(class).and_then(|buf| {
            self.expire(buf, now);
            let pos = buf.iter().position(|e| accept(&e.caption))?;
            buf.remove(pos).map(|e| e.caption)
        });
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn put_at(&self, caption: GeneratedCaption, now: Instant) -> bool {
        let mut buffers = self.buffers.lock().unwrap();
        let buf = buffers.entry(caption.class_name.clone()).or_default();
        self.expire(buf, now);
        let digest = caption.digest();
        if buf.len() >= self.capacity || buf.iter().any(|e| e.digest == digest) {
            return false;
        }
        buf.push_back(Entry {
            added: now,
            digest,
            caption,
        });
        true
    }

    pub fn len_at(&self, class: &str, now: Instant) -> usize {
        let mut buffers = self.buffers.lock().unwrap();
        buffers.get_mut(class).map_or(0, |buf| {
            self.expire(buf, now);
            buf.len()
        })
    }
}

impl CaptionCache for MemeCache {
    fn take(&self, class: &str, accept: &mut dyn FnMut(&GeneratedCaption) -> bool) -> Option<GeneratedCaption> {
        self.take_at(class, Instant::now(), accept)
    }

    fn put(&self, caption: GeneratedCaption) -> bool {
        self.put_at(caption, Instant::now())
    }

    fn len(&self, class: &str) -> usize {
        self.len_at(class, Instant::now())
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}
