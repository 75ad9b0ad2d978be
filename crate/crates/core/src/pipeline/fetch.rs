//! Locator-to-bytes fetchers.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("fetch {locator:?} failed: {reason}")]
pub struct FetchError {
    pub locator: String,
    pub reason: String,
}

pub trait Fetcher: Send + Sync {
    fn fetch(&self, locator: &str) -> Result<Vec<u8>, FetchError>;
}

/// Offline fetcher: reads `file:` locators and plain paths, resolving
/// relative paths against a base directory.
#[derive(Debug, Clone)]
pub struct FileFetcher {
    base: PathBuf,
}

impl FileFetcher {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self { base: base.into() }
    }

    pub fn resolve(&self, locator: &str) -> Option<PathBuf> {
        let path = match locator.strip_prefix("file://").or_else(|| locator.strip_prefix("file:")) {
            Some(p) => p,
            None if locator.contains("://") => return None,
            None => locator,
        };
        let path = Path::new(path);
        Some(if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        })
    }
}

impl Fetcher for FileFetcher {
    fn fetch(&self, locator: &str) -> Result<Vec<u8>, FetchError> {
        let err = |reason: String| FetchError {
            locator: locator.to_owned(),
            reason,
        };
        let path = self
            .resolve(locator)
            .ok_or_else(|| err("unsupported scheme for file fetcher".into()))?;
        fs::read(&path).map_err(|e| err(e.to_string()))
    }
}

#[cfg(feature = "http")]
pub use http::HttpFetcher;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use super::{FetchError, Fetcher, FileFetcher};

    /// HTTP(S) fetcher with a per-request timeout and two retries. Other
    /// locators fall through to a [`FileFetcher`].
    pub struct HttpFetcher {
        agent: ureq::Agent,
        files: FileFetcher,
        retries: usize,
    }

    impl HttpFetcher {
        pub fn new(timeout: Duration, files: FileFetcher) -> Self {
            let agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .into();
            Self {
                agent,
                files,
                retries: 2,
            }
        }
    }

    impl Fetcher for HttpFetcher {
        fn fetch(&self, locator: &str) -> Result<Vec<u8>, FetchError> {
            if !(locator.starts_with("http://") || locator.starts_with("https://")) {
                return self.files.fetch(locator);
            }
            let mut last = String::new();
            for _ in 0..=self.retries {
                match self.agent.get(locator).call() {
                    Ok(mut resp) => match resp.body_mut().read_to_vec() {
                        Ok(bytes) => return Ok(bytes),
                        Err(e) => last = e.to_string(),
                    },
                    Err(e) => last = e.to_string(),
                }
            }
            Err(FetchError {
                locator: locator.to_owned(),
                reason: last,
            })
        }
    }
}
