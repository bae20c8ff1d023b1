//! Cloze patterns, verbalizers and rendering.
//!
//! A pattern is a list of segments. Sentence slots, the mask and the segment
//! separator are kept abstract: the separator string comes from the backend
//! at render time, and the mask is written as [`MASK_PLACEHOLDER`], which a
//! backend adapter swaps for its own mask token using `mask_position`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::data::{LabelSet, SentencePair};
use crate::error::{Error, Result};

pub const MASK_PLACEHOLDER: &str = "<mask>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Literal(String),
    SlotU,
    SlotV,
    Mask,
    Separator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct PatternTemplate {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for PatternTemplate {
    type Error = Error;
    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        PatternTemplate::new(segments)
    }
}

impl From<PatternTemplate> for Vec<Segment> {
    fn from(p: PatternTemplate) -> Self {
        p.segments
    }
}

impl PatternTemplate {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let count = |want: &Segment| segments.iter().filter(|s| *s == want).count();
        if count(&Segment::Mask) != 1 {
            return Err(Error::Pattern(format!(
                "expected exactly one mask, found {}",
                count(&Segment::Mask)
            )));
        }
        if count(&Segment::SlotU) + count(&Segment::SlotV) == 0 {
            return Err(Error::Pattern("pattern has no sentence slot".into()));
        }
        if count(&Segment::Separator) > 1 {
            return Err(Error::Pattern("more than one separator".into()));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }
}

/// Label name to a single vocabulary token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Verbalizer(BTreeMap<String, String>);

impl Verbalizer {
    pub fn new<L: Into<String>, T: Into<String>>(pairs: impl IntoIterator<Item = (L, T)>) -> Result<Self> {
        let map: BTreeMap<String, String> = pairs.into_iter().map(|(l, t)| (l.into(), t.into())).collect();
        let mut tokens: Vec<&String> = map.values().collect();
        tokens.sort();
        tokens.dedup();
        if tokens.len() != map.len() {
            return Err(Error::Pattern("verbalizer maps two labels to the same token".into()));
        }
        Ok(Self(map))
    }

    pub fn token(&self, label: &str) -> Option<&str> {
        self.0.get(label).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pvp {
    pub id: u32,
    pub pattern: PatternTemplate,
    pub verbalizer: Verbalizer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClozeInput {
    pub text: String,
    /// Byte offset of [`MASK_PLACEHOLDER`] in `text`.
    pub mask_position: usize,
    /// Byte offset of the rendered separator, when the pattern has one.
    pub segment_boundary: Option<usize>,
}

/// Tokens of `pvp`'s verbalizer in label-set order.
pub fn verbalizer_tokens(pvp: &Pvp, labels: &LabelSet) -> Result<Vec<String>> {
    labels
        .labels()
        .iter()
        .map(|l| {
            pvp.verbalizer
                .token(l)
                .map(str::to_string)
                .ok_or_else(|| Error::IncompleteVerbalizer(l.clone()))
        })
        .collect()
}

/// Whitespace token count; the default length function.
pub fn whitespace_len(text: &str) -> usize {
    text.split_whitespace().count()
}

fn assemble(pattern: &PatternTemplate, u: &str, v: &str, separator: &str) -> ClozeInput {
    let mut text = String::new();
    let mut mask_position = 0;
    let mut segment_boundary = None;
    for seg in pattern.segments() {
        match seg {
            Segment::Literal(s) => text.push_str(s),
            Segment::SlotU => text.push_str(u),
            Segment::SlotV => text.push_str(v),
            Segment::Mask => {
                mask_position = text.len();
                text.push_str(MASK_PLACEHOLDER);
            }
            Segment::Separator => {
                segment_boundary = Some(text.len());
                text.push_str(separator);
            }
        }
    }
    ClozeInput {
        text,
        mask_position,
        segment_boundary,
    }
}

fn scrub(s: &str) -> String {
    s.replace(MASK_PLACEHOLDER, " ")
}

/// Drop whole words from the end of the longer of `u` and `v` (alternating
/// u, v on ties) until `attempt` accepts the pair. Returns `None` when both
/// are empty and still rejected.
fn shrink_to_fit<T>(
    u: &str,
    v: &str,
    length_fn: &dyn Fn(&str) -> usize,
    mut attempt: impl FnMut(&str, &str) -> Option<T>,
) -> Option<T> {
    let mut uw: Vec<&str> = u.split_whitespace().collect();
    let mut vw: Vec<&str> = v.split_whitespace().collect();
    let mut next_tie_u = true;
    loop {
        let (ut, vt) = (uw.join(" "), vw.join(" "));
        if let Some(t) = attempt(&ut, &vt) {
            return Some(t);
        }
        let (lu, lv) = (length_fn(&ut), length_fn(&vt));
        let cut_u = if uw.is_empty() {
            false
        } else if vw.is_empty() || lu > lv {
            true
        } else if lv > lu {
            false
        } else {
            let t = next_tie_u;
            next_tie_u = !next_tie_u;
            t
        };
        if cut_u {
            uw.pop();
        } else if vw.pop().is_none() {
            return None;
        }
    }
}

/// Render `pair` through `pvp`'s pattern. When the result is longer than
/// `max_len` under `length_fn`, whole words are dropped from the end of the
/// longer sentence (alternating u, v on ties) until it fits.
pub fn render(
    pvp: &Pvp,
    pair: &SentencePair,
    separator: &str,
    max_len: usize,
    length_fn: &dyn Fn(&str) -> usize,
) -> Result<ClozeInput> {
    let pattern = &pvp.pattern;
    let skeleton = assemble(pattern, "", "", separator);
    let needed = length_fn(&skeleton.text);
    if needed > max_len {
        return Err(Error::Budget { max_len, needed });
    }

    let (u, v) = (scrub(&pair.u), scrub(&pair.v));
    let full = assemble(pattern, &u, &v, separator);
    if length_fn(&full.text) <= max_len {
        return Ok(full);
    }
    let u = if pattern.segments().contains(&Segment::SlotU) {
        u
    } else {
        String::new()
    };
    let v = if pattern.segments().contains(&Segment::SlotV) {
        v
    } else {
        String::new()
    };
    Ok(shrink_to_fit(&u, &v, length_fn, |ut, vt| {
        let cloze = assemble(pattern, ut, vt, separator);
        (length_fn(&cloze.text) <= max_len).then_some(cloze)
    })
    .unwrap_or(skeleton))
}

/// `u <sep> v` with single spaces. Returns the text and the byte offset of
/// the separator.
pub fn join_pair(pair: &SentencePair, separator: &str) -> (String, usize) {
    let boundary = pair.u.len() + 1;
    (format!("{} {} {}", pair.u, separator, pair.v), boundary)
}

/// [`join_pair`] truncated like [`render`] to at most `max_len` tokens when
/// the sentences allow it.
pub fn join_within(pair: &SentencePair, separator: &str, max_len: usize, length_fn: &dyn Fn(&str) -> usize) -> String {
    let full = join_pair(pair, separator).0;
    if length_fn(&full) <= max_len {
        return full;
    }
    shrink_to_fit(&pair.u, &pair.v, length_fn, |u, v| {
        let t = join_pair(&SentencePair::new(u, v), separator).0;
        (length_fn(&t) <= max_len).then_some(t)
    })
    .unwrap_or_else(|| join_pair(&SentencePair::new("", ""), separator).0)
}

/// Separator, length budget and token counter used to turn pairs into model
/// inputs. Lengths are counted with the backend's tokenizer, or by
/// whitespace without a backend.
#[derive(Clone, Copy)]
pub struct InputContext<'a> {
    pub separator: &'a str,
    pub max_len: usize,
    pub backend: Option<&'a dyn Backend>,
}

impl<'a> InputContext<'a> {
    pub fn for_backend(backend: &'a dyn Backend, max_len: usize) -> Self {
        Self {
            separator: backend.separator(),
            max_len,
            backend: Some(backend),
        }
    }

    pub fn plain(separator: &'a str, max_len: usize) -> Self {
        Self {
            separator,
            max_len,
            backend: None,
        }
    }

    fn len(&self, s: &str) -> usize {
        match self.backend {
            Some(b) => b.count_tokens(s),
            None => whitespace_len(s),
        }
    }

    pub fn render(&self, pvp: &Pvp, pair: &SentencePair) -> Result<ClozeInput> {
        render(pvp, pair, self.separator, self.max_len, &|s: &str| self.len(s))
    }

    pub fn join(&self, pair: &SentencePair) -> String {
        join_within(pair, self.separator, self.max_len, &|s: &str| self.len(s))
    }
}

/// The four software-engineering pair tasks with built-in patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BugzillaDuplicate,
    BugzillaEntailment,
    SoDuplicate,
    SrsConflict,
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::BugzillaDuplicate,
        Task::BugzillaEntailment,
        Task::SoDuplicate,
        Task::SrsConflict,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Task::BugzillaDuplicate => "bugzilla_duplicate",
            Task::BugzillaEntailment => "bugzilla_entailment",
            Task::SoDuplicate => "so_duplicate",
            Task::SrsConflict => "srs_conflict",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.id() == id)
            .ok_or_else(|| Error::UnknownTask(id.to_string()))
    }

    pub fn label_names(self) -> &'static [&'static str] {
        match self {
            Task::BugzillaDuplicate | Task::SoDuplicate => &["Neutral", "Duplicate"],
            Task::BugzillaEntailment => &["Not Entailment", "Entailment"],
            Task::SrsConflict => &["Neutral", "Duplicate", "Conflict"],
        }
    }

    pub fn label_set(self) -> LabelSet {
        LabelSet::new(self.id(), self.label_names().iter().copied()).expect("static label set")
    }

    /// Label for pairs that are not linked (neutral / not-entailment).
    pub fn neutral_label(self) -> &'static str {
        self.label_names()[0]
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

fn lit(s: &str) -> Segment {
    Segment::Literal(s.to_string())
}

fn pvp(id: u32, segments: Vec<Segment>, verbalizer: &[(&str, &str)]) -> Pvp {
    Pvp {
        id,
        pattern: PatternTemplate::new(segments).expect("built-in pattern"),
        verbalizer: Verbalizer::new(verbalizer.iter().copied()).expect("built-in verbalizer"),
    }
}

pub fn builtin_pvps_for(task: Task) -> Vec<Pvp> {
    use Segment::{Mask, Separator, SlotU, SlotV};
    match task {
        Task::BugzillaEntailment => {
            let verb = [("Not Entailment", "No"), ("Entailment", "Yes")];
            vec![
                // "v" ? || _ , "u"
                pvp(
                    1,
                    vec![
                        lit("\""),
                        SlotV,
                        lit("\" ? "),
                        Separator,
                        lit(" "),
                        Mask,
                        lit(" , \""),
                        SlotU,
                        lit("\""),
                    ],
                    &verb,
                ),
                // v ? || _ , u
                pvp(
                    2,
                    vec![SlotV, lit(" ? "), Separator, lit(" "), Mask, lit(" , "), SlotU],
                    &verb,
                ),
                // "v" ? || _ . "u"
                pvp(
                    3,
                    vec![
                        lit("\""),
                        SlotV,
                        lit("\" ? "),
                        Separator,
                        lit(" "),
                        Mask,
                        lit(" . \""),
                        SlotU,
                        lit("\""),
                    ],
                    &verb,
                ),
            ]
        }
        Task::SoDuplicate | Task::BugzillaDuplicate => {
            let verb = [("Neutral", "No"), ("Duplicate", "Yes")];
            let same = if task == Task::SoDuplicate {
                "\" the same question? "
            } else {
                "\" the same problem? "
            };
            vec![
                // "v"? || _. "u".
                pvp(
                    1,
                    vec![
                        lit("\""),
                        SlotV,
                        lit("\"? "),
                        Separator,
                        lit(" "),
                        Mask,
                        lit(". \""),
                        SlotU,
                        lit("\"."),
                    ],
                    &verb,
                ),
                // Are "u" and "v" the same question/problem? _ .
                pvp(
                    2,
                    vec![
                        lit("Are \""),
                        SlotU,
                        lit("\" and \""),
                        SlotV,
                        lit(same),
                        Mask,
                        lit(" ."),
                    ],
                    &verb,
                ),
                // Are "u" and "v" duplicates? _ .
                pvp(
                    3,
                    vec![
                        lit("Are \""),
                        SlotU,
                        lit("\" and \""),
                        SlotV,
                        lit("\" duplicates? "),
                        Mask,
                        lit(" ."),
                    ],
                    &verb,
                ),
            ]
        }
        Task::SrsConflict => vec![
            // "u"? || _, "v".
            pvp(
                1,
                vec![
                    lit("\""),
                    SlotU,
                    lit("\"? "),
                    Separator,
                    lit(" "),
                    Mask,
                    lit(", \""),
                    SlotV,
                    lit("\"."),
                ],
                &[("Neutral", "Maybe"), ("Duplicate", "Yes"), ("Conflict", "No")],
            ),
            // Given "u", we can conclude that "v" is _.
            pvp(
                2,
                vec![
                    lit("Given \""),
                    SlotU,
                    lit("\", we can conclude that \""),
                    SlotV,
                    lit("\" is "),
                    Mask,
                    lit("."),
                ],
                &[("Neutral", "neither"), ("Duplicate", "true"), ("Conflict", "false")],
            ),
            // "u" means "v". || _.
            pvp(
                3,
                vec![
                    lit("\""),
                    SlotU,
                    lit("\" means \""),
                    SlotV,
                    lit("\". "),
                    Separator,
                    lit(" "),
                    Mask,
                    lit("."),
                ],
                &[("Neutral", "Neither"), ("Duplicate", "True"), ("Conflict", "False")],
            ),
        ],
    }
}

pub fn builtin_pvps(task_id: &str) -> Result<Vec<Pvp>> {
    Ok(builtin_pvps_for(Task::from_id(task_id)?))
}

/// Load a PVP list from a JSON file (an array of PVP objects, or a single
/// object).
pub fn load_pvps(path: &Path) -> Result<Vec<Pvp>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let pvps: Vec<Pvp> = if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    };
    for (i, p) in pvps.iter().enumerate() {
        if pvps[..i].iter().any(|q| q.id == p.id) {
            return Err(Error::Pattern(format!("duplicate pvp id {}", p.id)));
        }
    }
    Ok(pvps)
}
