use std::ops::{Deref, DerefMut};
use std::sync::{Condvar, Mutex};

use super::AdapterSession;

/// Fixed set of sessions shared by worker threads; each checkout holds one
/// session exclusively until the guard drops.
pub struct AdapterPool {
    idle: Mutex<Vec<Box<dyn AdapterSession>>>,
    available: Condvar,
    size: usize,
}

impl AdapterPool {
    pub fn new(sessions: Vec<Box<dyn AdapterSession>>) -> Self {
        let size = sessions.len();
        Self {
            idle: Mutex::new(sessions),
            available: Condvar::new(),
            size,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Blocks until a session is free.
    pub fn checkout(&self) -> PooledSession<'_> {
        assert!(self.size > 0, "checkout from an empty adapter pool");
        let mut idle = self.idle.lock().expect("adapter pool poisoned");
        loop {
            if let Some(session) = idle.pop() {
                return PooledSession {
                    pool: self,
                    session: Some(session),
                };
            }
            idle = self.available.wait(idle).expect("adapter pool poisoned");
        }
    }

    /// Shuts every idle session down. Call once all checkouts are returned.
    pub fn shutdown(&self) {
        let mut idle = self.idle.lock().expect("adapter pool poisoned");
        for s in idle.iter_mut() {
            if let Err(e) = s.shutdown() {
                log::warn!("adapter shutdown: {e}");
            }
        }
    }
}

pub struct PooledSession<'a> {
    pool: &'a AdapterPool,
    session: Option<Box<dyn AdapterSession>>,
}

impl Deref for PooledSession<'_> {
    type Target = dyn AdapterSession;

    fn deref(&self) -> &Self::Target {
        self.session.as_deref().expect("session present until drop")
    }
}

impl DerefMut for PooledSession<'_> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        self.session.as_deref_mut().expect("session present until drop")
    }
}

impl Drop for PooledSession<'_> {
    fn drop(&mut self) {
        if let Some(s) = self.session.take() {
            self.pool.idle.lock().expect("adapter pool poisoned").push(s);
            self.pool.available.notify_one();
        }
    }
}
