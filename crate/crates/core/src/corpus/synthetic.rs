//! Seeded synthetic KB and mention corpus.
//!
//! Terminologies are `site + modifier + type + 术`, coded
//! `SS.TTMM` so the prefix before the dot groups entries by site. The KB is
//! filled one (site, type) family at a time, each contributing a few
//! randomly chosen modifier variants. Mentions
//! paraphrase their gold terminologies with alias substitution, optional
//! descriptors and keyword-preserving reordering; multi-gold mentions join
//! paraphrases with a connector such as `+`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kb::{KnowledgeBase, Terminology};
use super::keywords::{KeywordEntry, KeywordKind, KeywordVocab};
use super::mentions::MentionRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub term: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// Probabilities of each paraphrase rule firing on one gold terminology.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParaphraseWeights {
    pub alias: f64,
    pub descriptor: f64,
    pub reorder: f64,
}

impl Default for ParaphraseWeights {
    fn default() -> Self {
        Self {
            alias: 0.5,
            descriptor: 0.4,
            reorder: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub sites: Vec<PoolEntry>,
    pub types: Vec<PoolEntry>,
    /// Optional middle segment between site and type; an empty term is allowed.
    pub modifiers: Vec<PoolEntry>,
    /// Ignorable modifiers prefixed to mentions.
    pub descriptors: Vec<String>,
    /// Separators joining the parts of a multi-gold mention.
    pub connectors: Vec<String>,
    pub kb_size: usize,
    /// Modifier variants drawn for each (site, type) pair placed in the KB.
    pub modifiers_per_family: usize,
    pub mention_count: usize,
    pub multi_fraction: f64,
    /// Share of mentions placed in the test split.
    pub test_fraction: f64,
    /// Among multi-gold mentions, share with three golds.
    pub three_gold_fraction: f64,
    /// Probability that an additional gold shares the first gold's site.
    pub same_site_fraction: f64,
    pub rules: ParaphraseWeights,
    pub seed: u64,
}

fn pool(items: &[(&str, &[&str])]) -> Vec<PoolEntry> {
    items
        .iter()
        .map(|(t, a)| PoolEntry {
            term: t.to_string(),
            aliases: a.iter().map(|s| s.to_string()).collect(),
        })
        .collect()
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            sites: pool(&[
                ("肾", &["肾脏"]),
                ("肾上腺", &["副肾"]),
                ("甲状腺", &["甲腺"]),
                ("甲状旁腺", &["副甲状腺"]),
                ("胆囊", &["胆"]),
                ("胆管", &["胆道"]),
                ("结肠", &["大肠"]),
                ("直肠", &["肛肠"]),
                ("小肠", &["空回肠"]),
                ("十二指肠", &["小肠上段"]),
                ("食管", &["食道"]),
                ("尿道", &["尿路"]),
                ("输尿管", &["尿管"]),
                ("子宫", &["宫体"]),
                ("宫颈", &["子宫颈"]),
                ("脑膜", &["硬脑膜"]),
            ]),
            types: pool(&[
                ("切除", &["摘除", "去除"]),
                ("切开", &["剖开"]),
                ("检查", &["探查"]),
                ("活检", &["活组织检查"]),
                ("修补", &["修复"]),
                ("缝合", &["缝补"]),
                ("引流", &["导流"]),
                ("造口", &["造瘘"]),
                ("成形", &["整形"]),
                ("固定", &["内固定"]),
                ("置换", &["替换"]),
                ("移植", &["植入"]),
                ("结扎", &["套扎"]),
                ("吻合", &["接合"]),
                ("松解", &["分离"]),
                ("扩张", &["扩开"]),
            ]),
            modifiers: pool(&[
                ("", &[]),
                ("病损", &["肿物", "包块"]),
                ("部分", &["局部"]),
                ("全", &["完全"]),
                ("扩大", &["扩展"]),
                ("根治性", &["根治"]),
                ("次全", &["大部"]),
                ("激光", &["镭射"]),
                ("射频", &["电波"]),
                ("冷冻", &["冷凝"]),
                ("微波", &["微波热"]),
                ("显微", &["镜下"]),
                ("姑息性", &["姑息"]),
                ("预防性", &["预防"]),
                ("矫正性", &["矫正"]),
            ]),
            descriptors: ["右侧", "左侧", "双侧", "急诊", "择期", "二次", "门诊", "术中"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            connectors: vec!["+".to_string()],
            kb_size: 300,
            modifiers_per_family: 3,
            mention_count: 1500,
            multi_fraction: 0.05,
            test_fraction: 0.2,
            three_gold_fraction: 0.2,
            same_site_fraction: 0.5,
            rules: ParaphraseWeights::default(),
            seed: 0,
        }
    }
}

fn check_pool(name: &str, entries: &[PoolEntry], allow_empty_term: bool) -> Result<()> {
    if entries.is_empty() {
        return Err(Error::Spec(format!("{name} pool is empty")));
    }
    if entries.len() > 99 {
        return Err(Error::Spec(format!("{name} pool exceeds 99 entries")));
    }
    let mut seen = HashSet::new();
    for e in entries {
        if (!allow_empty_term && e.term.is_empty()) || e.aliases.iter().any(String::is_empty) {
            return Err(Error::Spec(format!("{name} pool has an empty term or alias")));
        }
        if !seen.insert(e.term.as_str()) {
            return Err(Error::Spec(format!("{name} pool repeats {:?}", e.term)));
        }
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        check_pool("site", &self.sites, false)?;
        check_pool("type", &self.types, false)?;
        check_pool("modifier", &self.modifiers, true)?;
        if self.descriptors.is_empty() || self.descriptors.iter().any(String::is_empty) {
            return Err(Error::Spec("descriptor pool is empty or has an empty entry".into()));
        }
        if self.connectors.is_empty() || self.connectors.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::Spec("connector pool is empty or has a blank entry".into()));
        }
        for (name, p) in [
            ("multi_fraction", self.multi_fraction),
            ("three_gold_fraction", self.three_gold_fraction),
            ("same_site_fraction", self.same_site_fraction),
            ("rules.alias", self.rules.alias),
            ("rules.descriptor", self.rules.descriptor),
            ("rules.reorder", self.rules.reorder),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Spec(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.multi_fraction >= 1.0 {
            return Err(Error::Spec("multi_fraction must be below 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Spec(format!("test_fraction = {} outside (0, 1)", self.test_fraction)));
        }
        if self.modifiers_per_family == 0 {
            return Err(Error::Spec("modifiers_per_family must be at least 1".into()));
        }
        let capacity = self.sites.len() * self.types.len() * self.modifiers_per_family.min(self.modifiers.len());
        if self.kb_size == 0 || self.kb_size > capacity {
            return Err(Error::Spec(format!(
                "kb_size {} not in 1..={capacity} allowed by the site/type/modifier pools",
                self.kb_size
            )));
        }
        if self.multi_fraction > 0.0 && self.kb_size < 2 {
            return Err(Error::Spec("multi-gold mentions need at least 2 terminologies".into()));
        }
        if self.mention_count < 2 {
            return Err(Error::Spec("mention_count must be at least 2".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub kb: KnowledgeBase,
    pub train: Vec<MentionRecord>,
    pub test: Vec<MentionRecord>,
    pub keywords: KeywordVocab,
}

#[derive(Clone, Copy)]
struct Slot {
    site: usize,
    kind: usize,
    modifier: usize,
}

fn pick<'a, R: Rng>(entry: &'a PoolEntry, p: f64, rng: &mut R) -> &'a str {
    if !entry.aliases.is_empty() && rng.random_bool(p) {
        entry.aliases.choose(rng).expect("non-empty aliases")
    } else {
        &entry.term
    }
}

fn paraphrase<R: Rng>(spec: &SyntheticSpec, slot: Slot, rng: &mut R) -> String {
    let w = spec.rules;
    let site = pick(&spec.sites[slot.site], w.alias, rng);
    let modifier = pick(&spec.modifiers[slot.modifier], w.alias, rng);
    let kind = pick(&spec.types[slot.kind], w.alias, rng);
    let mut out = String::new();
    if rng.random_bool(w.descriptor) {
        out.push_str(spec.descriptors.choose(rng).expect("non-empty descriptors"));
    }
    if rng.random_bool(w.reorder) {
        out.push_str(kind);
        out.push_str(site);
        out.push_str(modifier);
    } else {
        out.push_str(site);
        out.push_str(modifier);
        out.push_str(kind);
        out.push('术');
    }
    out
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // (site, type) families in random order, each with a random subset of
    // modifiers, so every terminology has near-duplicate siblings.
    let mut families: Vec<(usize, usize)> = Vec::new();
    for site in 0..spec.sites.len() {
        for kind in 0..spec.types.len() {
            families.push((site, kind));
        }
    }
    families.shuffle(&mut rng);
    let text_of = |s: Slot| {
        format!(
            "{}{}{}术",
            spec.sites[s.site].term, spec.modifiers[s.modifier].term, spec.types[s.kind].term
        )
    };
    let mut texts = HashSet::new();
    let mut chosen: Vec<Slot> = Vec::with_capacity(spec.kb_size);
    let mut modifier_order: Vec<usize> = (0..spec.modifiers.len()).collect();
    'outer: for (site, kind) in families {
        modifier_order.shuffle(&mut rng);
        let mut taken = modifier_order[..spec.modifiers_per_family.min(modifier_order.len())].to_vec();
        taken.sort_unstable();
        for modifier in taken {
            if chosen.len() == spec.kb_size {
                break 'outer;
            }
            let s = Slot { site, kind, modifier };
            if texts.insert(text_of(s)) {
                chosen.push(s);
            }
        }
    }
    chosen.sort_by_key(|s| (s.site, s.kind, s.modifier));
    let terms: Vec<Terminology> = chosen
        .iter()
        .map(|&s| Terminology::new(format!("{:02}.{:02}{:02}", s.site + 1, s.kind + 1, s.modifier), text_of(s)))
        .collect();
    let kb = KnowledgeBase::new(terms)?;

    let max_attempts = spec.mention_count.saturating_mul(50).max(1000);
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(spec.mention_count);
    let mut attempts = 0;
    while records.len() < spec.mention_count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Spec(format!(
                "could not produce {} distinct mentions (got {})",
                spec.mention_count,
                records.len()
            )));
        }
        let n_gold = if spec.multi_fraction > 0.0 && rng.random_bool(spec.multi_fraction) {
            if kb.len() >= 3 && rng.random_bool(spec.three_gold_fraction) {
                3
            } else {
                2
            }
        } else {
            1
        };
        let first = rng.random_range(0..kb.len());
        let mut golds = vec![first];
        while golds.len() < n_gold {
            let same_site: Vec<usize> = (0..kb.len())
                .filter(|&i| chosen[i].site == chosen[first].site && !golds.contains(&i))
                .collect();
            let next = if !same_site.is_empty() && rng.random_bool(spec.same_site_fraction) {
                *same_site.choose(&mut rng).expect("non-empty")
            } else {
                loop {
                    let i = rng.random_range(0..kb.len());
                    if !golds.contains(&i) {
                        break i;
                    }
                }
            };
            golds.push(next);
        }
        let connector = spec.connectors.choose(&mut rng).expect("non-empty connectors").clone();
        let text = golds
            .iter()
            .map(|&g| paraphrase(spec, chosen[g], &mut rng))
            .collect::<Vec<_>>()
            .join(&connector);
        if seen.insert(text.clone()) {
            let codes = golds.iter().map(|&g| kb.term(g).code.clone()).collect();
            records.push(MentionRecord::new(text, codes));
        }
    }

    records.shuffle(&mut rng);
    let n_test = ((spec.mention_count as f64) * spec.test_fraction).round() as usize;
    let n_test = n_test.clamp(1, spec.mention_count - 1);
    let train = records.split_off(n_test);
    let test = records;

    let keywords = KeywordVocab::new(
        [(KeywordKind::Site, &spec.sites), (KeywordKind::Type, &spec.types)]
            .into_iter()
            .flat_map(|(kind, pool)| {
                let mut terms: Vec<&String> = pool.iter().flat_map(|e| std::iter::once(&e.term).chain(&e.aliases)).collect();
                terms.sort();
                terms.dedup();
                terms.into_iter().map(move |t| KeywordEntry { term: t.clone(), kind })
            })
            .collect(),
    )?;

    Ok(SyntheticData {
        kb,
        train,
        test,
        keywords,
    })
}
