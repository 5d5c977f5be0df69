//! Scene descriptions at three levels of detail.
//!
//! A description is produced in two stages: a provider writes an initial
//! text, then [`refine`] checks it against the level's rules and budget and
//! emits the version that is read aloud. The default provider renders
//! templates from the POIs the sensor can see; an external multimodal model
//! can be plugged in through [`ExternalProvider`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose, Side};
use crate::gridworld::PoiSighting;
use crate::interaction::Mode;
use crate::planner::MotionStatus;

pub const DETAILED_PROMPT: &str = include_str!("../assets/prompts/detailed.txt");
pub const BALANCED_PROMPT: &str = include_str!("../assets/prompts/balanced.txt");
pub const CONCISE_PROMPT: &str = include_str!("../assets/prompts/concise.txt");

/// Bounds of the pause between two descriptions, seconds.
pub const GAP_BOUNDS: (f64, f64) = (5.0, 10.0);

/// Adjectives the shorter levels must not use.
pub const SUBJECTIVE_ADJECTIVES: &[&str] = &[
    "futuristic",
    "stylish",
    "modern",
    "classic",
    "beautiful",
    "elegant",
    "charming",
    "cozy",
    "impressive",
    "lovely",
];

/// Words that mark a sentence as talking about light or brightness.
pub const LIGHTING_WORDS: &[&str] = &[
    "bright",
    "brightly",
    "brightness",
    "dim",
    "dimly",
    "dark",
    "darkness",
    "lighting",
    "lit",
    "sunlight",
    "daylight",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DescriptionLevel {
    Concise,
    Balanced,
    Detailed,
}

impl DescriptionLevel {
    pub const ALL: [DescriptionLevel; 3] = [
        DescriptionLevel::Concise,
        DescriptionLevel::Balanced,
        DescriptionLevel::Detailed,
    ];

    pub fn prompt(self) -> &'static str {
        match self {
            DescriptionLevel::Detailed => DETAILED_PROMPT,
            DescriptionLevel::Balanced => BALANCED_PROMPT,
            DescriptionLevel::Concise => CONCISE_PROMPT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DescriptionLevel::Concise => "concise",
            DescriptionLevel::Balanced => "balanced",
            DescriptionLevel::Detailed => "detailed",
        }
    }
}

/// Character and sentence limits of one level, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelBudget {
    pub min_chars: usize,
    pub max_chars: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
}

impl LevelBudget {
    pub fn admits(&self, text: &str) -> bool {
        let chars = text.chars().count();
        let n = split_sentences(text).len();
        (self.min_chars..=self.max_chars).contains(&chars)
            && (self.min_sentences..=self.max_sentences).contains(&n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub concise: LevelBudget,
    pub balanced: LevelBudget,
    pub detailed: LevelBudget,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            concise: LevelBudget {
                min_chars: 1,
                max_chars: 59,
                min_sentences: 1,
                max_sentences: 2,
            },
            balanced: LevelBudget {
                min_chars: 60,
                max_chars: 120,
                min_sentences: 2,
                max_sentences: 3,
            },
            detailed: LevelBudget {
                min_chars: 120,
                max_chars: 240,
                min_sentences: 3,
                max_sentences: 4,
            },
        }
    }
}

impl Budgets {
    pub fn for_level(&self, level: DescriptionLevel) -> LevelBudget {
        match level {
            DescriptionLevel::Concise => self.concise,
            DescriptionLevel::Balanced => self.balanced,
            DescriptionLevel::Detailed => self.detailed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Initial,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub text: String,
    pub level: DescriptionLevel,
    /// Names of the POIs the text mentions.
    pub scene_tags: Vec<String>,
    pub pose_at_capture: Pose,
    pub timestamp: f64,
    pub stage: Stage,
}

/// What the robot saw when a description was triggered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCapture {
    pub sightings: Vec<PoiSighting>,
    pub pose: Pose,
    pub timestamp: f64,
}

impl SceneCapture {
    fn by_side(&self, side: Side) -> Vec<&PoiSighting> {
        self.sightings.iter().filter(|s| s.side == side).collect()
    }

    fn describable(&self) -> Vec<&PoiSighting> {
        self.sightings
            .iter()
            .filter(|s| s.side != Side::Behind)
            .collect()
    }
}

/// Splits text after `.`, `!` or `?` followed by whitespace or the end.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_none_or(|n| n.is_ascii_whitespace()) {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn meters(d: f64) -> u32 {
    d.round().max(1.0) as u32
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

fn side_opening(side: Side) -> &'static str {
    match side {
        Side::Left => "On the left",
        Side::Front => "In front",
        Side::Right => "On the right",
        Side::Behind => "Behind you",
    }
}

fn fact_sentence(fact: &str) -> String {
    let fact = fact.trim().trim_end_matches(['.', '!', '?']);
    if fact.chars().next().is_some_and(char::is_lowercase) {
        format!("It {fact}.")
    } else {
        format!("{fact}.")
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.random_range(0..options.len())]
}

const DETAILED_FILLER: &[&str] = &[
    "The walkway continues, and I will point out more places as we go.",
    "Please keep holding the handle and I will keep describing the way.",
    "There is open floor around you for the robot to move through.",
    "Ask me about anything you would like to know more about.",
];

const BALANCED_FILLER: &[&str] = &[
    "The way ahead is clear for now.",
    "I will describe more as we move on.",
    "More places may come into view as we go.",
];

const CONCISE_FILLER: &[&str] = &["The way is clear.", "No landmarks nearby."];

fn filler(level: DescriptionLevel) -> &'static [&'static str] {
    match level {
        DescriptionLevel::Detailed => DETAILED_FILLER,
        DescriptionLevel::Balanced => BALANCED_FILLER,
        DescriptionLevel::Concise => CONCISE_FILLER,
    }
}

fn detailed_sentences(capture: &SceneCapture, rng: &mut ChaCha8Rng) -> Vec<String> {
    let seen = capture.describable();
    let mut out = Vec::new();
    let overview = match seen.len() {
        0 => pick(
            rng,
            &[
                "Around you is an open indoor space with no named places in view.",
                "Around you the hall is open, and no named places are in view yet.",
            ],
        )
        .to_string(),
        1 => format!(
            "Around you is an indoor space with one place in view, {} meters away.",
            meters(seen[0].distance)
        ),
        n => format!(
            "Around you is an indoor space with {n} places in view, the nearest {} meters {}.",
            meters(seen[0].distance),
            if seen[0].side == Side::Front { "ahead" } else { "away" }
        ),
    };
    out.push(overview);

    for side in [Side::Left, Side::Front, Side::Right] {
        for s in capture.by_side(side).into_iter().take(2) {
            let adjective = s
                .poi
                .tags
                .iter()
                .find(|t| SUBJECTIVE_ADJECTIVES.contains(&t.to_lowercase().as_str()));
            let kind = match adjective {
                Some(adj) => format!("{} {adj} {}", article(adj), s.poi.category),
                None => format!("{} {}", article(&s.poi.category), s.poi.category),
            };
            out.push(format!(
                "{}, {} meters away, there is {}, {kind}.",
                side_opening(side),
                meters(s.distance),
                s.poi.name
            ));
            if let Some(fact) = s.poi.facts.first() {
                out.push(fact_sentence(fact));
            }
        }
    }
    out
}

fn balanced_sentences(capture: &SceneCapture) -> Vec<String> {
    let mut out = Vec::new();
    for side in [Side::Left, Side::Front, Side::Right] {
        let here = capture.by_side(side);
        let Some(first) = here.first() else { continue };
        let mut s = format!(
            "{} at {} m, {}, {} {}",
            side_opening(side),
            meters(first.distance),
            first.poi.name,
            article(&first.poi.category),
            first.poi.category
        );
        if let Some(second) = here.get(1) {
            s.push_str(&format!(", then {} at {} m", second.poi.name, meters(second.distance)));
        }
        s.push('.');
        out.push(s);
    }
    if out.is_empty() {
        out.push("No named places are in view.".into());
    }
    out
}

fn concise_sentences(capture: &SceneCapture) -> Vec<String> {
    let mut seen = capture.describable();
    seen.truncate(2);
    // keep left/front/right order among the (at most two) nearest
    seen.sort_by_key(|s| s.side);
    seen.iter()
        .map(|s| {
            let full = format!("{} {} m {}.", s.poi.name, meters(s.distance), s.side.word());
            if full.chars().count() <= 40 {
                full
            } else {
                format!("{} {} m {}.", capitalize(&s.poi.category), meters(s.distance), s.side.word())
            }
        })
        .collect()
}

/// Renders the initial (unrefined) description of a scene.
///
/// Detailed opens with an overview, then covers left, front and right with
/// names, categories, distances and one fact per place. Balanced covers the
/// three sides with names and categories. Concise names at most the two
/// nearest places. Sides with nothing visible are skipped.
pub fn compose_description(capture: &SceneCapture, level: DescriptionLevel, seed: u64) -> Description {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = match level {
        DescriptionLevel::Detailed => detailed_sentences(capture, &mut rng),
        DescriptionLevel::Balanced => balanced_sentences(capture),
        DescriptionLevel::Concise => concise_sentences(capture),
    };
    let default_budget = Budgets::default().for_level(level);
    let mut bank: Vec<&str> = filler(level).to_vec();
    // rotate the filler bank so repeated scenes do not always sound the same
    let shift = rng.random_range(0..bank.len());
    bank.rotate_left(shift);
    let mut bank = bank.into_iter();
    while (sentences.join(" ").chars().count() < default_budget.min_chars
        || sentences.len() < default_budget.min_sentences)
        && sentences.len() < default_budget.max_sentences
    {
        match bank.next() {
            Some(f) => sentences.push(f.to_string()),
            None => break,
        }
    }
    let text = sentences.join(" ");
    let scene_tags = mentioned(&text, capture);
    Description {
        text,
        level,
        scene_tags,
        pose_at_capture: capture.pose,
        timestamp: capture.timestamp,
        stage: Stage::Initial,
    }
}

fn mentioned(text: &str, capture: &SceneCapture) -> Vec<String> {
    let mut tags: Vec<String> = capture
        .sightings
        .iter()
        .filter(|s| text.contains(&s.poi.name))
        .map(|s| s.poi.name.clone())
        .collect();
    tags.dedup();
    tags
}

fn contains_word(sentence: &str, words: &[&str]) -> bool {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .any(|w| words.contains(&w.to_lowercase().as_str()))
}

fn strip_words(sentence: &str, words: &[&str]) -> String {
    let kept: Vec<&str> = sentence
        .split(' ')
        .filter(|tok| {
            let core = tok.trim_matches(|c: char| !c.is_alphanumeric());
            !(words.contains(&core.to_lowercase().as_str()) && !tok.ends_with(['.', ',', '!', '?', ';', ':']))
        })
        .collect();
    let mut s = kept.join(" ");
    // a removed word may have carried the sentence's punctuation
    for w in words {
        for punct in [".", ",", "!", "?", ";", ":"] {
            for cased in [w.to_string(), capitalize(w)] {
                s = s.replace(&format!(" {cased}{punct}"), punct);
                if let Some(rest) = s.strip_prefix(&format!("{cased}{punct}")) {
                    s = rest.trim_start().to_string();
                }
            }
        }
    }
    let s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    // re-capitalise if the first word was dropped
    capitalize(&s)
}

/// Second stage: applies the level's content rules, then enforces its
/// budget by dropping whole sentences from the end (never cutting one in
/// half) and, if the text became too short, appending neutral sentences.
pub fn refine(d: &Description, budgets: &Budgets) -> Description {
    let budget = budgets.for_level(d.level);
    let mut sentences: Vec<String> = split_sentences(&d.text).iter().map(|s| s.to_string()).collect();

    if d.level != DescriptionLevel::Detailed {
        sentences.retain(|s| !contains_word(s, LIGHTING_WORDS));
        sentences = sentences
            .iter()
            .map(|s| {
                if contains_word(s, SUBJECTIVE_ADJECTIVES) {
                    strip_words(s, SUBJECTIVE_ADJECTIVES)
                } else {
                    s.clone()
                }
            })
            .filter(|s| !s.is_empty())
            .collect();
    }

    let joined = sentences.join(" ");
    let text = if budget.admits(&joined) {
        if joined == d.text.trim() {
            d.text.clone()
        } else {
            joined
        }
    } else {
        fit_budget(&sentences, budget, filler(d.level))
    };

    Description {
        scene_tags: d
            .scene_tags
            .iter()
            .filter(|t| text.contains(t.as_str()))
            .cloned()
            .collect(),
        text,
        stage: Stage::Refined,
        ..d.clone()
    }
}

fn fit_budget(sentences: &[String], budget: LevelBudget, bank: &[&str]) -> String {
    let len = |v: &[String]| v.join(" ").chars().count();
    for keep in (0..=sentences.len().min(budget.max_sentences)).rev() {
        let mut out: Vec<String> = sentences[..keep].to_vec();
        if len(&out) > budget.max_chars {
            continue;
        }
        for f in bank {
            if len(&out) >= budget.min_chars && out.len() >= budget.min_sentences {
                break;
            }
            if out.len() >= budget.max_sentences {
                break;
            }
            let mut trial = out.clone();
            trial.push(f.to_string());
            if len(&trial) <= budget.max_chars {
                out = trial;
            }
        }
        let text = out.join(" ");
        if budget.admits(&text) {
            return text;
        }
    }
    // only reachable with budgets tighter than any filler sentence
    bank.iter()
        .copied()
        .filter(|f| f.chars().count() <= budget.max_chars)
        .min_by_key(|f| f.chars().count())
        .unwrap_or("")
        .to_string()
}

/// Uniform pause before the next description.
pub fn draw_gap(rng: &mut impl Rng) -> f64 {
    rng.random_range(GAP_BOUNDS.0..=GAP_BOUNDS.1)
}

/// Time at which the next description is due.
pub fn schedule_next(prev_end: f64, rng: &mut impl Rng) -> f64 {
    prev_end + draw_gap(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarrationSchedule {
    pub prev_end: f64,
    pub next_due: f64,
    pub gap_bounds: (f64, f64),
}

/// Descriptions are spoken only while the robot is moving, in auto or
/// manual mode, and once the schedule is due.
pub fn should_emit(status: MotionStatus, now: f64, sched: &NarrationSchedule, mode: &Mode) -> bool {
    now >= sched.next_due
        && status == MotionStatus::Navigating
        && matches!(mode, Mode::Auto | Mode::Manual)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("description provider unavailable: {0}")]
    Unavailable(String),
    #[error("malformed provider reply: {0}")]
    MalformedReply(String),
}

/// One camera view handed to an external model. The simulator has no
/// pixels, so a view is described by the labels of what it contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMeta {
    pub view: String,
    pub labels: Vec<String>,
}

impl ViewMeta {
    /// Left, front and right views plus an overview, built from sightings.
    pub fn from_capture(capture: &SceneCapture) -> Vec<ViewMeta> {
        let label = |s: &PoiSighting| {
            format!(
                "{} ({}, {} m)",
                s.poi.name,
                s.poi.category,
                meters(s.distance)
            )
        };
        let mut views: Vec<ViewMeta> = [("left", Side::Left), ("front", Side::Front), ("right", Side::Right)]
            .iter()
            .map(|(name, side)| ViewMeta {
                view: name.to_string(),
                labels: capture.by_side(*side).into_iter().map(label).collect(),
            })
            .collect();
        views.push(ViewMeta {
            view: "overview".into(),
            labels: capture.sightings.iter().map(label).collect(),
        });
        views
    }
}

/// Request document sent to an external model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub v: u32,
    pub level: DescriptionLevel,
    pub prompt: String,
    pub views: Vec<ViewMeta>,
}

/// Builds the request for `level`, carrying that level's prompt verbatim.
pub fn external_provider_request(views: Vec<ViewMeta>, level: DescriptionLevel) -> ProviderRequest {
    ProviderRequest {
        v: 1,
        level,
        prompt: level.prompt().to_string(),
        views,
    }
}

/// Reply envelope the prompts ask the model to produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReply {
    #[serde(default)]
    pub initial_description: String,
    #[serde(default)]
    pub improve_thoughts: String,
    pub description: String,
}

/// Parses a model reply. Tolerates a surrounding code fence and trailing
/// commas, as in the prompt's own example.
pub fn parse_provider_reply(raw: &str) -> Result<ProviderReply, ProviderError> {
    let start = raw
        .find('{')
        .ok_or_else(|| ProviderError::MalformedReply("no JSON object".into()))?;
    let end = raw
        .rfind('}')
        .ok_or_else(|| ProviderError::MalformedReply("no JSON object".into()))?;
    if end < start {
        return Err(ProviderError::MalformedReply("no JSON object".into()));
    }
    let body = &raw[start..=end];
    let value: serde_json::Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(_) => serde_json::from_str(&strip_trailing_commas(body))
            .map_err(|e| ProviderError::MalformedReply(e.to_string()))?,
    };
    if value.get("description").and_then(|d| d.as_str()).is_none() {
        return Err(ProviderError::MalformedReply("missing `description` key".into()));
    }
    serde_json::from_value(value).map_err(|e| ProviderError::MalformedReply(e.to_string()))
}

fn strip_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut in_str = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '"' && (i == 0 || chars[i - 1] != '\\') {
            in_str = !in_str;
        }
        if !in_str && c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                i += 1;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Carries a request to a model endpoint and returns the raw reply body.
pub trait Transport {
    fn exchange(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

/// Produces the initial stage of a description.
pub trait DescriptionProvider {
    fn initial(
        &mut self,
        capture: &SceneCapture,
        level: DescriptionLevel,
        seed: u64,
    ) -> Result<Description, ProviderError>;
}

/// Deterministic template renderer; never fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateProvider;

impl DescriptionProvider for TemplateProvider {
    fn initial(
        &mut self,
        capture: &SceneCapture,
        level: DescriptionLevel,
        seed: u64,
    ) -> Result<Description, ProviderError> {
        Ok(compose_description(capture, level, seed))
    }
}

/// Calls an external model through a [`Transport`].
pub struct ExternalProvider<T> {
    pub transport: T,
}

impl<T: Transport> DescriptionProvider for ExternalProvider<T> {
    fn initial(
        &mut self,
        capture: &SceneCapture,
        level: DescriptionLevel,
        _seed: u64,
    ) -> Result<Description, ProviderError> {
        let request = external_provider_request(ViewMeta::from_capture(capture), level);
        let reply = parse_provider_reply(&self.transport.exchange(&request)?)?;
        let text = reply.description.trim().to_string();
        Ok(Description {
            scene_tags: mentioned(&text, capture),
            text,
            level,
            pose_at_capture: capture.pose,
            timestamp: capture.timestamp,
            stage: Stage::Initial,
        })
    }
}

/// Runs a provider and the refinement stage, falling back to templates
/// when the provider fails. Returns the refined description and the
/// provider error, if one occurred.
pub fn narrate(
    provider: &mut dyn DescriptionProvider,
    capture: &SceneCapture,
    level: DescriptionLevel,
    seed: u64,
    budgets: &Budgets,
) -> (Description, Option<ProviderError>) {
    match provider.initial(capture, level, seed) {
        Ok(d) => (refine(&d, budgets), None),
        Err(e) => {
            let d = compose_description(capture, level, seed);
            (refine(&d, budgets), Some(e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::gridworld::Poi;

    fn sighting(id: &str, name: &str, cat: &str, side: Side, d: f64, facts: &[&str]) -> PoiSighting {
        PoiSighting {
            poi: Poi {
                id: id.into(),
                name: name.into(),
                category: cat.into(),
                anchor: Point::new(0.0, 0.0),
                facts: facts.iter().map(|s| s.to_string()).collect(),
                tags: vec![],
            },
            distance: d,
            bearing: side.center_bearing(),
            side,
        }
    }

    fn capture(s: Vec<PoiSighting>) -> SceneCapture {
        SceneCapture {
            sightings: s,
            pose: Pose::new(0.0, 0.0, 0.0),
            timestamp: 12.0,
        }
    }

    fn three() -> SceneCapture {
        capture(vec![
            sighting("a", "Lumo Cafe", "cafe", Side::Left, 3.0, &["serves hot soup"]),
            sighting("b", "Star Globe", "exhibit", Side::Front, 5.0, &["may be touched"]),
            sighting("c", "Gift Shop", "shop", Side::Right, 6.0, &[]),
        ])
    }

    #[test]
    fn detailed_orders_overview_left_front_right() {
        let d = refine(&compose_description(&three(), DescriptionLevel::Detailed, 7), &Budgets::default());
        let t = &d.text;
        let n = t.chars().count();
        assert!((120..=240).contains(&n), "{n}: {t}");
        let pos = |m: &str| t.find(m).unwrap_or(usize::MAX);
        assert_eq!(pos("Around you"), 0);
        assert!(pos("On the left") < pos("In front"), "{t}");
        assert!(pos("In front") < pos("On the right") || pos("On the right") == usize::MAX, "{t}");
        assert_eq!(d.stage, Stage::Refined);
    }

    #[test]
    fn empty_concise_is_a_short_layout_sentence() {
        let d = refine(&compose_description(&capture(vec![]), DescriptionLevel::Concise, 1), &Budgets::default());
        assert!(d.text.chars().count() < 60);
        assert!(!d.text.is_empty());
        assert!(d.scene_tags.is_empty());
    }

    #[test]
    fn composition_is_deterministic() {
        for level in DescriptionLevel::ALL {
            let a = compose_description(&three(), level, 42);
            let b = compose_description(&three(), level, 42);
            assert_eq!(a.text, b.text);
        }
    }

    fn initial(text: &str, level: DescriptionLevel) -> Description {
        Description {
            text: text.into(),
            level,
            scene_tags: vec![],
            pose_at_capture: Pose::default(),
            timestamp: 0.0,
            stage: Stage::Initial,
        }
    }

    #[test]
    fn refine_truncates_long_detailed_at_sentence_boundary() {
        let s = "There is a long hallway here with many doors along both walls today.";
        let text = format!("{s} {s} {s} {s} {s}");
        assert!(text.chars().count() >= 300);
        let r = refine(&initial(&text, DescriptionLevel::Detailed), &Budgets::default());
        assert!(r.text.chars().count() <= 240);
        assert!(r.text.ends_with('.'));
        assert!(text.starts_with(&r.text));
    }

    #[test]
    fn refine_keeps_compliant_text() {
        let text = "On the left at 3 m, Lumo Cafe, a cafe. In front at 5 m, Star Globe, an exhibit.";
        let r = refine(&initial(text, DescriptionLevel::Balanced), &Budgets::default());
        assert_eq!(r.text, text);
        assert_eq!(r.stage, Stage::Refined);
    }

    #[test]
    fn refine_strips_subjective_adjectives_and_lighting() {
        let text = "On the left at 3 m, a stylish cafe with tables. The hall is brightly lit. In front, a shop.";
        let r = refine(&initial(text, DescriptionLevel::Balanced), &Budgets::default());
        assert!(!r.text.to_lowercase().contains("stylish"), "{}", r.text);
        assert!(!r.text.contains("lit"), "{}", r.text);
        assert!(Budgets::default().balanced.admits(&r.text), "{}", r.text);
        let r = refine(&initial("A stylish, modern kiosk. A shop.", DescriptionLevel::Concise), &Budgets::default());
        assert!(!r.text.to_lowercase().contains("stylish") && !r.text.contains("modern"), "{}", r.text);
    }

    #[test]
    fn detailed_may_keep_adjectives() {
        let text = "Around you is a stylish modern hall with many exhibits and a quiet atmosphere today. On the left there is a classic clock tower model. In front is a cafe.";
        let r = refine(&initial(text, DescriptionLevel::Detailed), &Budgets::default());
        assert!(r.text.contains("stylish"));
    }

    #[test]
    fn gap_is_within_bounds_and_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let x = schedule_next(100.0, &mut a);
        assert!((105.0..=110.0).contains(&x));
        assert_eq!(x, schedule_next(100.0, &mut b));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws: Vec<f64> = (0..1000).map(|_| draw_gap(&mut rng)).collect();
        let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= 5.0 && hi <= 10.0);
        assert!(lo < 5.1 && hi > 9.9, "draws should cover the interval");
    }

    #[test]
    fn emission_gating() {
        let sched = NarrationSchedule {
            prev_end: 0.0,
            next_due: 5.0,
            gap_bounds: GAP_BOUNDS,
        };
        use crate::planner::PauseReason;
        assert!(should_emit(MotionStatus::Navigating, 6.0, &sched, &Mode::Auto));
        assert!(should_emit(MotionStatus::Navigating, 6.0, &sched, &Mode::Manual));
        assert!(!should_emit(MotionStatus::Navigating, 4.0, &sched, &Mode::Auto));
        assert!(!should_emit(
            MotionStatus::Paused(PauseReason::HandleReleased),
            6.0,
            &sched,
            &Mode::Auto
        ));
        assert!(!should_emit(
            MotionStatus::Navigating,
            6.0,
            &sched,
            &Mode::Conversation { prior: crate::interaction::BaseMode::Auto }
        ));
    }

    #[test]
    fn provider_request_carries_prompt_verbatim() {
        let r = external_provider_request(ViewMeta::from_capture(&three()), DescriptionLevel::Detailed);
        assert_eq!(r.prompt, DETAILED_PROMPT);
        assert!(r.prompt.contains("Keep the description to 3-4 sentences at most (120-240 characters)."));
        let b = external_provider_request(vec![], DescriptionLevel::Balanced);
        assert!(b.prompt.contains("Keep the description to 2-3 sentences at most (60-120 characters)."));
        assert_eq!(r.views.len(), 4);
    }

    #[test]
    fn reply_parsing() {
        let raw = "```json\n{\n\"initial_description\": \"a\",\n\"improve_thoughts\": \"b\",\n\"description\": \"c\",\n}\n```";
        let r = parse_provider_reply(raw).unwrap();
        assert_eq!(r.description, "c");
        assert_eq!(r.improve_thoughts, "b");
        let missing = r#"{"initial_description": "a", "improve_thoughts": "b"}"#;
        assert!(matches!(parse_provider_reply(missing), Err(ProviderError::MalformedReply(_))));
        assert!(matches!(parse_provider_reply("no json"), Err(ProviderError::MalformedReply(_))));
    }

    struct Timeout;
    impl Transport for Timeout {
        fn exchange(&self, _: &ProviderRequest) -> Result<String, ProviderError> {
            Err(ProviderError::Unavailable("timed out".into()))
        }
    }

    struct Canned(String);
    impl Transport for Canned {
        fn exchange(&self, _: &ProviderRequest) -> Result<String, ProviderError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn provider_failure_falls_back_to_templates() {
        let mut p = ExternalProvider { transport: Timeout };
        let (d, err) = narrate(&mut p, &three(), DescriptionLevel::Balanced, 5, &Budgets::default());
        assert!(matches!(err, Some(ProviderError::Unavailable(_))));
        let expected = refine(&compose_description(&three(), DescriptionLevel::Balanced, 5), &Budgets::default());
        assert_eq!(d, expected);
    }

    #[test]
    fn external_reply_is_refined() {
        let reply = r#"{"initial_description":"x","improve_thoughts":"y","description":"On the left is Lumo Cafe, a stylish cafe. In front is Star Globe, an exhibit to touch."}"#;
        let mut p = ExternalProvider { transport: Canned(reply.into()) };
        let (d, err) = narrate(&mut p, &three(), DescriptionLevel::Balanced, 5, &Budgets::default());
        assert!(err.is_none());
        assert!(!d.text.contains("stylish"));
        assert_eq!(d.scene_tags, vec!["Lumo Cafe".to_string(), "Star Globe".to_string()]);
    }
}
