//! Cookie sessions that remember which captions each visitor has seen.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;

pub const COOKIE_NAME: &str = "memeify_session";

#[derive(Debug, Clone)]
pub struct SessionState {
    pub created_at: Instant,
    pub last_seen: Instant,
    /// Caption digests already served, per class.
    pub seen: HashMap<String, HashSet<String>>,
}

/// Internally synchronized session table with idle eviction.
pub struct SessionStore {
    idle: Duration,
    sessions: Mutex<HashMap<String, SessionState>>,
}

fn new_id() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl SessionStore {
    pub fn new(idle: Duration) -> Self {
        SessionStore {
            idle,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    /// Resolves the cookie value to a live session, creating one when it is
    /// absent, unknown or evicted. Returns the id and whether it is new.
    pub fn resolve_at(&self, cookie: Option<&str>, now: Instant) -> (String, bool) {
        let mut sessions = self.sessions.lock().unwrap();
        sessions.retain(|_, s| now.duration_since(s.last_seen) <= self.idle);
        if let Some(id) = cookie {
            if let Some(s) = sessions.get_mut(id) {
                s.last_seen = now;
                return (id.to_string(), false);
            }
        }
        let id = new_id();
        sessions.insert(
            id.clone(),
            SessionState {
                created_at: now,
                last_seen: now,
                seen: HashMap::new(),
            },
        );
        (id, true)
    }

    pub fn resolve(&self, cookie: Option<&str>) -> (String, bool) {
        self.resolve_at(cookie, Instant::now())
    }

    pub fn has_seen(&self, id: &str, class: &str, digest: &str) -> bool {
        let sessions = self.sessions.lock().unwrap();
        sessions
            .get(id)
            .and_then(|s| s.seen.get(class))
            .is_some_and(|set| set.contains(digest))
    }

    /// Records `digest` as served; false when it was already recorded. The
    /// check and the insert are one atomic step.
    pub fn mark_seen(&self, id: &str, class: &str, digest: &str) -> bool {
        let mut sessions = self.sessions.lock().unwrap();
        match sessions.get_mut(id) {
            Some(s) => s
                .seen
                .entry(class.to_string())
                .or_default()
                .insert(digest.to_string()),
            // evicted mid-request: nothing to repeat against
            None => true,
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Value of the session cookie in a `Cookie` header.
pub fn cookie_value(header: &str) -> Option<&str> {
    header.split(';').find_map(|pair| {
        let (k, v) = pair.trim().split_once('=')?;
        (k == COOKIE_NAME && !v.is_empty()).then_some(v)
    })
}

pub fn set_cookie_header(id: &str) -> String {
    format!("{COOKIE_NAME}={id}; Path=/; HttpOnly; SameSite=Lax")
}
