//! Deterministic Bugzilla fixture: 250 bugs created between 2019 and 2021,
//! two resolvable duplicate links and three dependency links (one of them
//! half of a cycle).

use chrono::{Duration, NaiveDate};
use serde_json::{json, Value};

pub const FIXTURE_SIZE: usize = 250;
pub const FIXTURE_FIRST_ID: u64 = 1_600_000;

/// (bug, duplicate target)
pub const FIXTURE_DUPLICATES: [(u64, u64); 2] = [(1_600_010, 1_600_020), (1_600_030, 1_600_040)];

/// (bug, bug it depends on)
pub const FIXTURE_DEPENDENCIES: [(u64, u64); 3] =
    [(1_600_050, 1_600_060), (1_600_060, 1_600_050), (1_600_070, 1_600_080)];

const COMPONENTS: [&str; 10] = [
    "preferences dialog",
    "download manager",
    "tab strip",
    "address bar",
    "bookmark sidebar",
    "print preview",
    "developer console",
    "video player",
    "spell checker",
    "sync settings",
];

const SYMPTOMS: [&str; 8] = [
    "crashes on open",
    "renders blank after resume",
    "ignores keyboard shortcuts",
    "leaks memory over time",
    "shows stale data",
    "freezes when scrolling",
    "loses focus unexpectedly",
    "flickers on high-DPI screens",
];

fn summary(i: usize) -> String {
    format!(
        "{} {} (case {})",
        COMPONENTS[i % COMPONENTS.len()],
        SYMPTOMS[(i / COMPONENTS.len()) % SYMPTOMS.len()],
        i
    )
}

pub fn fixture_records() -> Vec<Value> {
    let start = NaiveDate::from_ymd_opt(2019, 1, 2)
        .expect("valid date")
        .and_hms_opt(9, 30, 0)
        .expect("valid time");
    (0..FIXTURE_SIZE)
        .map(|i| {
            let id = FIXTURE_FIRST_ID + i as u64;
            let created = (start + Duration::days(4 * i as i64)).and_utc();
            let dupe = FIXTURE_DUPLICATES.iter().find(|(b, _)| *b == id).map(|(_, t)| *t);
            let depends: Vec<u64> = FIXTURE_DEPENDENCIES.iter().filter(|(b, _)| *b == id).map(|(_, t)| *t).collect();
            let resolution = if dupe.is_some() {
                "DUPLICATE"
            } else if i % 5 == 4 {
                "FIXED"
            } else {
                ""
            };
            json!({
                "id": id,
                "summary": summary(i),
                "description": format!("Steps to reproduce for case {i}: open the {} and wait.", COMPONENTS[i % COMPONENTS.len()]),
                "creation_time": created.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                "resolution": resolution,
                "dupe_of": dupe,
                "depends_on": depends,
            })
        })
        .collect()
}
