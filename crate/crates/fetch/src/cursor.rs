//! Resume state persisted as `fetch_cursor.json` beside the output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::FetchError;

pub const CURSOR_FILE: &str = "fetch_cursor.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchCursor {
    pub repo_full_name: String,
    pub since: Option<DateTime<Utc>>,
    pub page_size: u32,
    /// Per listing endpoint: first page not yet known to be full. A short
    /// final page is fetched again on the next run so new items are picked up.
    pub next_page: BTreeMap<String, u32>,
    /// PR numbers whose reviews have been staged.
    pub reviews_done: BTreeSet<u64>,
}

impl FetchCursor {
    pub fn new(repo_full_name: &str, since: Option<DateTime<Utc>>, page_size: u32) -> Self {
        FetchCursor {
            repo_full_name: repo_full_name.to_string(),
            since,
            page_size,
            next_page: BTreeMap::new(),
            reviews_done: BTreeSet::new(),
        }
    }

    /// Page numbers only mean something for the same listing parameters.
    pub fn matches(&self, repo_full_name: &str, since: Option<DateTime<Utc>>, page_size: u32) -> bool {
        self.repo_full_name == repo_full_name && self.since == since && self.page_size == page_size
    }

    pub fn start_page(&self, stage: &str) -> u32 {
        self.next_page.get(stage).copied().unwrap_or(1)
    }

    pub fn record_page(&mut self, stage: &str, page: u32, items: usize) {
        let next = if items >= self.page_size as usize { page + 1 } else { page };
        self.next_page.insert(stage.to_string(), next);
    }

    pub fn load(dir: &Path) -> Result<Option<FetchCursor>, FetchError> {
        let path = dir.join(CURSOR_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(FetchError::io(&path))?;
        match serde_json::from_str(&text) {
            Ok(c) => Ok(Some(c)),
            Err(e) => {
                log::warn!("ignoring unreadable cursor {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    /// Write-then-rename so a crash never leaves a half-written cursor.
    pub fn save(&self, dir: &Path) -> Result<(), FetchError> {
        let path = dir.join(CURSOR_FILE);
        let tmp = dir.join(format!("{CURSOR_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).expect("cursor serializes");
        std::fs::write(&tmp, text).map_err(FetchError::io(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(FetchError::io(&path))
    }
}
