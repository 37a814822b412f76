//! Shared plumbing for external backends (encoder, commonsense, UMLS, LLM).

use std::sync::{Condvar, Mutex};

use thiserror::Error;

/// Failure reported by an external backend.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("{backend} is unreachable: {message}")]
    Unreachable { backend: String, message: String },
    #[error("{backend} timed out")]
    Timeout { backend: String },
    #[error("{backend} failed: {message}")]
    Failed { backend: String, message: String },
}

impl BackendError {
    /// Unreachable and timed-out backends may succeed on a later attempt.
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            BackendError::Unreachable { .. } | BackendError::Timeout { .. }
        )
    }
}

/// Counting gate that bounds how many callers may use a backend at once.
///
/// A limit of 1 serializes every call; `usize::MAX` never blocks.
#[derive(Debug)]
pub struct Throttle {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl Throttle {
    pub fn new(limit: usize) -> Self {
        Throttle {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Run `f` while holding one slot of the gate.
    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        if self.limit == usize::MAX {
            return f();
        }
        {
            let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
            while *active >= self.limit {
                active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
            }
            *active += 1;
        }
        let _slot = Slot(self);
        f()
    }
}

struct Slot<'a>(&'a Throttle);

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}


/// A backend wrapped in a [`Throttle`] sized to its declared parallelism.
///
/// The backend traits are implemented for `Gated<B>` in their own modules.
#[derive(Debug)]
pub struct Gated<B> {
    inner: B,
    gate: Throttle,
}

impl<B> Gated<B> {
    pub fn new(inner: B, max_parallelism: usize) -> Self {
        Gated {
            inner,
            gate: Throttle::new(max_parallelism),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn gate(&self) -> &Throttle {
        &self.gate
    }
}
