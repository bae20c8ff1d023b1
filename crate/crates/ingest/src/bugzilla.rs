//! Bugzilla REST client.
//!
//! Bugs are requested newest first inside a creation-time window and paged
//! with `limit`/`offset` until a short page comes back.

use std::collections::HashSet;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{IngestError, Result};

/// Fields requested for every bug.
pub const BUGZILLA_FIELDS: [&str; 7] = [
    "id",
    "summary",
    "description",
    "creation_time",
    "resolution",
    "dupe_of",
    "depends_on",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugRecord {
    pub id: u64,
    pub summary: String,
    #[serde(default)]
    pub description: String,
    pub creation_time: DateTime<Utc>,
    /// Blank while the bug is unresolved.
    #[serde(default, deserialize_with = "null_as_empty")]
    pub resolution: String,
    /// Bugzilla sends a single id or null; lists are accepted too.
    #[serde(default, deserialize_with = "id_or_ids")]
    pub dupe_of: Vec<u64>,
    #[serde(default, deserialize_with = "id_or_ids")]
    pub depends_on: Vec<u64>,
}

impl BugRecord {
    pub fn is_open(&self) -> bool {
        self.resolution.trim().is_empty()
    }
}

fn null_as_empty<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<String, D::Error> {
    Ok(Option::<String>::deserialize(d)?.unwrap_or_default())
}

fn id_or_ids<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ids {
        One(u64),
        Many(Vec<u64>),
    }
    Ok(match Option::<Ids>::deserialize(d)? {
        None => Vec::new(),
        Some(Ids::One(i)) => vec![i],
        Some(Ids::Many(v)) => v,
    })
}

/// Inclusive range of creation dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestionWindow {
    pub earliest: NaiveDate,
    pub latest: NaiveDate,
}

impl IngestionWindow {
    pub fn new(earliest: NaiveDate, latest: NaiveDate) -> Result<Self> {
        if earliest > latest {
            return Err(IngestError::Window(format!("{earliest} is after {latest}")));
        }
        Ok(Self { earliest, latest })
    }

    /// From `YYYY-MM-DD` strings.
    pub fn parse(earliest: &str, latest: &str) -> Result<Self> {
        let date = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| IngestError::Window(format!("`{s}`: {e}")))
        };
        Self::new(date(earliest)?, date(latest)?)
    }

    /// 2019-01-01 through 2021-12-31.
    pub fn bugzilla() -> Self {
        Self {
            earliest: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            latest: NaiveDate::from_ymd_opt(2021, 12, 31).expect("valid date"),
        }
    }

    /// 2008-01-01 (the site's launch year) through 2021-12-31.
    pub fn stackoverflow() -> Self {
        Self {
            earliest: NaiveDate::from_ymd_opt(2008, 1, 1).expect("valid date"),
            latest: NaiveDate::from_ymd_opt(2021, 12, 31).expect("valid date"),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.earliest <= date && date <= self.latest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchConfig {
    /// Bug collection URL, e.g. `https://bugzilla.mozilla.org/rest/bug`.
    pub endpoint: String,
    pub page_size: usize,
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub timeout_secs: u64,
    pub api_key: Option<String>,
}

impl FetchConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            page_size: 100,
            max_attempts: 5,
            backoff_base_ms: 200,
            backoff_cap_ms: 10_000,
            timeout_secs: 60,
            api_key: None,
        }
    }

    /// Delay before retry number `attempt` (1-based): base·2^(attempt-1),
    /// capped.
    pub fn backoff(&self, attempt: usize) -> Duration {
        let exp = self
            .backoff_base_ms
            .saturating_mul(1u64 << (attempt.saturating_sub(1)).min(32));
        Duration::from_millis(exp.min(self.backoff_cap_ms))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchReport {
    pub records: Vec<BugRecord>,
    pub requests: usize,
    pub retries: usize,
    pub malformed: usize,
    pub duplicate_ids: usize,
    pub outside_window: usize,
}

/// Query parameters for one page.
pub fn page_query(window: &IngestionWindow, page_size: usize, offset: usize) -> Vec<(String, String)> {
    [
        ("include_fields", BUGZILLA_FIELDS.join(",")),
        ("f1", "creation_ts".into()),
        ("o1", "greaterthaneq".into()),
        ("v1", format!("{} 00:00:00", window.earliest)),
        ("f2", "creation_ts".into()),
        ("o2", "lessthaneq".into()),
        ("v2", format!("{} 23:59:59", window.latest)),
        ("order", "creation_ts DESC".into()),
        ("limit", page_size.to_string()),
        ("offset", offset.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn get_page(
    agent: &ureq::Agent,
    config: &FetchConfig,
    query: &[(String, String)],
    retries: &mut usize,
) -> Result<serde_json::Value> {
    let mut last = String::new();
    for attempt in 1..=config.max_attempts.max(1) {
        if attempt > 1 {
            *retries += 1;
            std::thread::sleep(config.backoff(attempt - 1));
        }
        let mut req = agent
            .get(&config.endpoint)
            .query_pairs(query.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        if let Some(key) = &config.api_key {
            req = req.header("X-BUGZILLA-API-KEY", key);
        }
        match req.call() {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if status >= 500 || status == 429 {
                    last = format!("HTTP {status}");
                    log::warn!("{}: {last} (attempt {attempt})", config.endpoint);
                    continue;
                }
                let body = resp.body_mut().read_to_string().map_err(|e| IngestError::Response {
                    url: config.endpoint.clone(),
                    detail: e.to_string(),
                })?;
                if status != 200 {
                    return Err(IngestError::Response {
                        url: config.endpoint.clone(),
                        detail: format!("HTTP {status}: {body}"),
                    });
                }
                return serde_json::from_str(&body).map_err(|e| IngestError::Response {
                    url: config.endpoint.clone(),
                    detail: e.to_string(),
                });
            }
            Err(e) => {
                last = e.to_string();
                log::warn!("{}: {last} (attempt {attempt})", config.endpoint);
            }
        }
    }
    Err(IngestError::Transport {
        url: config.endpoint.clone(),
        attempts: config.max_attempts.max(1),
        last,
    })
}

/// Fetch every bug created inside `window`, newest first. Malformed records
/// are skipped and counted; repeated ids are kept once.
pub fn fetch_bugs(config: &FetchConfig, window: &IngestionWindow) -> Result<FetchReport> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let page_size = config.page_size.max(1);
    let mut report = FetchReport::default();
    let mut seen = HashSet::new();
    let mut offset = 0;
    loop {
        let body = get_page(
            &agent,
            config,
            &page_query(window, page_size, offset),
            &mut report.retries,
        )?;
        report.requests += 1;
        let bugs = body
            .get("bugs")
            .and_then(|b| b.as_array())
            .ok_or_else(|| IngestError::Response {
                url: config.endpoint.clone(),
                detail: "missing `bugs` array".into(),
            })?;
        for raw in bugs {
            match serde_json::from_value::<BugRecord>(raw.clone()) {
                Ok(bug) if !window.contains(bug.creation_time.date_naive()) => report.outside_window += 1,
                Ok(bug) => {
                    if seen.insert(bug.id) {
                        report.records.push(bug);
                    } else {
                        report.duplicate_ids += 1;
                    }
                }
                Err(e) => {
                    report.malformed += 1;
                    log::warn!(
                        "skipping malformed bug record {}: {e}",
                        raw.get("id").unwrap_or(&serde_json::Value::Null)
                    );
                }
            }
        }
        offset += bugs.len();
        if bugs.len() < page_size {
            break;
        }
    }
    Ok(report)
}
