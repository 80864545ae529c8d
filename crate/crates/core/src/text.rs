//! Dictionary-based content analysis: greedy longest-match keyword counts,
//! category shares and round-level drift.
//!
//! Category shares are a dictionary-share proxy, not topic-model estimates.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    UsageGap,
    ApplianceContext,
    PlanningAction,
    SocialNorms,
    EncouragingEfficacy,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::UsageGap,
        Category::ApplianceContext,
        Category::PlanningAction,
        Category::SocialNorms,
        Category::EncouragingEfficacy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::UsageGap => "usage_gap",
            Category::ApplianceContext => "appliance_context",
            Category::PlanningAction => "planning_action",
            Category::SocialNorms => "social_norms",
            Category::EncouragingEfficacy => "encouraging_efficacy",
        }
    }
}

/// Whether a message came from a feedback-only arm or the personalized arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmClass {
    Conventional,
    Personalized,
}

impl ArmClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ArmClass::Conventional => "conventional",
            ArmClass::Personalized => "personalized",
        }
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF)
}

/// Lowercased tokens with punctuation and digits removed. CJK characters
/// become one token each, so phrases match on raw character spans.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphabetic() {
            cur.extend(c.to_lowercase());
        } else if c == '\'' || c == '\u{2019}' {
            // Apostrophes join contractions rather than split them.
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct Phrase {
    text: String,
    tokens: Vec<String>,
    categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordDictionary {
    /// Longest first, then by text.
    phrases: Vec<Phrase>,
}

pub const DEFAULT_DICTIONARIES: &str = include_str!("../data/dictionaries.txt");

impl KeywordDictionary {
    pub fn new(entries: &[(Category, &str)]) -> Result<Self, TextError> {
        let mut by_text: BTreeMap<Vec<String>, (String, BTreeSet<Category>)> = BTreeMap::new();
        for (i, (cat, phrase)) in entries.iter().enumerate() {
            let tokens = tokenize(phrase);
            if tokens.is_empty() {
                return Err(TextError::Parse { line: i + 1, message: format!("phrase `{phrase}` has no tokens") });
            }
            let entry = by_text.entry(tokens).or_insert_with(|| (phrase.trim().to_lowercase(), BTreeSet::new()));
            if !entry.1.insert(*cat) {
                return Err(TextError::Parse { line: i + 1, message: format!("duplicate phrase `{phrase}` in {}", cat.as_str()) });
            }
        }
        let mut phrases: Vec<Phrase> = by_text
            .into_iter()
            .map(|(tokens, (text, cats))| Phrase { text, tokens, categories: cats.into_iter().collect() })
            .collect();
        phrases.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()).then_with(|| a.tokens.cmp(&b.tokens)));
        Ok(KeywordDictionary { phrases })
    }

    /// `[category]` headers followed by one phrase per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut current = None;
        let mut entries: Vec<(Category, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(Category::ALL.into_iter().find(|c| c.as_str() == name.trim()).ok_or_else(|| {
                    TextError::Parse { line: i + 1, message: format!("unknown category `{name}`") }
                })?);
                continue;
            }
            let cat = current.ok_or_else(|| TextError::Parse { line: i + 1, message: "phrase before any category header".into() })?;
            entries.push((cat, line.to_string()));
        }
        let refs: Vec<(Category, &str)> = entries.iter().map(|(c, s)| (*c, s.as_str())).collect();
        Self::new(&refs)
    }

    pub fn default_dictionaries() -> Self {
        Self::parse(DEFAULT_DICTIONARIES).expect("bundled dictionaries parse")
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentProfile {
    pub message_id: String,
    pub round: u32,
    pub class: ArmClass,
    pub counts: [usize; 5],
    pub phrase_counts: BTreeMap<String, usize>,
    pub matched_tokens: usize,
    pub total_tokens: usize,
}

impl ContentProfile {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Category shares, or `None` when nothing matched.
    pub fn shares(&self) -> Option<[f64; 5]> {
        let t = self.total();
        (t > 0).then(|| self.counts.map(|c| c as f64 / t as f64))
    }
}

/// Greedy longest-match-first counting.
///
/// Longer phrases are matched first and their tokens consumed; a consumed
/// span also separates its neighbours, so a later match cannot bridge it.
/// A phrase listed under several categories counts once for each.
pub fn count_keywords(message_id: &str, text: &str, round: u32, class: ArmClass, dict: &KeywordDictionary) -> ContentProfile {
    let tokens = tokenize(text);
    let mut used = vec![false; tokens.len()];
    let mut counts = [0usize; 5];
    let mut phrase_counts = BTreeMap::new();
    let mut matched_tokens = 0;
    for p in &dict.phrases {
        let k = p.tokens.len();
        if k > tokens.len() {
            continue;
        }
        let mut i = 0;
        let mut hits = 0;
        while i + k <= tokens.len() {
            if used[i..i + k].iter().all(|u| !u) && tokens[i..i + k] == p.tokens[..] {
                used[i..i + k].fill(true);
                hits += 1;
                i += k;
            } else {
                i += 1;
            }
        }
        if hits > 0 {
            matched_tokens += hits * k;
            for c in &p.categories {
                counts[c.index()] += hits;
            }
            phrase_counts.insert(p.text.clone(), hits);
        }
    }
    ContentProfile {
        message_id: message_id.to_string(),
        round,
        class,
        counts,
        phrase_counts,
        matched_tokens,
        total_tokens: tokens.len(),
    }
}

/// Mean counts per category in early (rounds 1-2), middle (3-4) and final (5) stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftTable {
    /// `stage_means[stage][category]`; `None` for a stage without messages.
    pub stage_means: [Option<[f64; 5]>; 3],
    /// Strictly increasing early < middle < final.
    pub increasing: [bool; 5],
}

pub fn stage_of_round(round: u32) -> Option<usize> {
    match round {
        1 | 2 => Some(0),
        3 | 4 => Some(1),
        5 => Some(2),
        _ => None,
    }
}

pub fn round_drift(profiles: &[ContentProfile]) -> DriftTable {
    let mut sums = [[0.0; 5]; 3];
    let mut n = [0usize; 3];
    for p in profiles {
        if let Some(s) = stage_of_round(p.round) {
            n[s] += 1;
            for c in 0..5 {
                sums[s][c] += p.counts[c] as f64;
            }
        }
    }
    let stage_means: [Option<[f64; 5]>; 3] = std::array::from_fn(|s| (n[s] > 0).then(|| sums[s].map(|v| v / n[s] as f64)));
    let increasing = std::array::from_fn(|c| match stage_means {
        [Some(a), Some(b), Some(f)] => a[c] < b[c] && b[c] < f[c],
        _ => false,
    });
    DriftTable { stage_means, increasing }
}

/// Mean per-message shares by class; `None` when no message in the class matched anything.
pub fn group_shares(profiles: &[ContentProfile]) -> BTreeMap<ArmClass, Option<[f64; 5]>> {
    let mut acc: BTreeMap<ArmClass, ([f64; 5], usize)> = BTreeMap::new();
    for p in profiles {
        let e = acc.entry(p.class).or_insert(([0.0; 5], 0));
        if let Some(s) = p.shares() {
            for c in 0..5 {
                e.0[c] += s[c];
            }
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, (n > 0).then(|| s.map(|v| v / n as f64)))).collect()
}

pub fn write_profiles_csv<W: Write>(profiles: &[ContentProfile], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["message_id".to_string(), "round".into(), "class".into()];
    header.extend(Category::ALL.iter().map(|c| c.as_str().to_string()));
    header.push("total_tokens".into());
    w.write_record(&header)?;
    for p in profiles {
        let mut rec = vec![p.message_id.clone(), p.round.to_string(), p.class.as_str().to_string()];
        rec.extend(p.counts.iter().map(|c| c.to_string()));
        rec.push(p.total_tokens.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(entries: &[(Category, &str)]) -> KeywordDictionary {
        KeywordDictionary::new(entries).unwrap()
    }

    fn count(text: &str, d: &KeywordDictionary) -> ContentProfile {
        count_keywords("m", text, 1, ArmClass::Personalized, d)
    }

    #[test]
    fn nested_phrase_greedy_trace() {
        let d = dict(&[(Category::ApplianceContext, "air conditioner"), (Category::ApplianceContext, "air")]);
        let p = count("air conditioner air", &d);
        assert_eq!(p.phrase_counts["air conditioner"], 1);
        assert_eq!(p.phrase_counts["air"], 1);
        assert_eq!(p.counts[Category::ApplianceContext.index()], 2);
    }

    #[test]
    fn empty_and_repeated() {
        let d = dict(&[(Category::UsageGap, "went up")]);
        assert_eq!(count("", &d).total(), 0);
        assert_eq!(count("Went up, went UP; went up!", &d).counts[0], 3);
    }

    #[test]
    fn digits_and_punctuation_are_stripped() {
        assert_eq!(tokenize("Set it to 26°C, don't wait!"), vec!["set", "it", "to", "c", "dont", "wait"]);
        assert_eq!(tokenize("节约用电"), vec!["节", "约", "用", "电"]);
    }

    #[test]
    fn cjk_phrases_match_character_spans() {
        let d = dict(&[(Category::ApplianceContext, "空调"), (Category::PlanningAction, "关掉")]);
        let p = count("请关掉空调,空调温度", &d);
        assert_eq!(p.counts[Category::ApplianceContext.index()], 2);
        assert_eq!(p.counts[Category::PlanningAction.index()], 1);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(KeywordDictionary::parse("orphan").is_err());
        assert!(KeywordDictionary::parse("[nope]\nx").is_err());
        assert!(KeywordDictionary::parse("[usage_gap]\nabc\nABC").is_err());
        assert!(KeywordDictionary::parse("[usage_gap]\n123").is_err());
        assert!(KeywordDictionary::default_dictionaries().len() > 40);
    }

    #[test]
    fn shares_and_drift() {
        let d = dict(&[(Category::UsageGap, "gap"), (Category::PlanningAction, "plan"), (Category::SocialNorms, "peer")]);
        let mut ps = Vec::new();
        for (round, text) in [(1, "gap plan"), (2, "gap"), (3, "gap gap"), (4, "gap gap plan"), (5, "gap gap gap")] {
            ps.push(count_keywords(&format!("m{round}"), text, round, ArmClass::Personalized, &d));
        }
        ps.push(count_keywords("c1", "peer", 1, ArmClass::Conventional, &d));
        let drift = round_drift(&ps[..5]);
        assert!(drift.increasing[Category::UsageGap.index()]);
        let shares = group_shares(&ps);
        let conv = shares[&ArmClass::Conventional].unwrap();
        assert_eq!(conv[Category::SocialNorms.index()], 1.0);
        let pers = shares[&ArmClass::Personalized].unwrap();
        assert!((pers.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(conv.iter().zip(pers).all(|(a, b)| a * b == 0.0));
    }
}
