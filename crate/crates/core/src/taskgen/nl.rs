//! Natural-language two-hop prompts with distractor chains.
//!
//! These prompts are emitted for external language-model evaluation; the
//! laboratory itself never tokenizes or scores them.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::premise_order;
use crate::error::{Error, Result};

/// Which entity pool fills a template slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Names,
    Locations,
    Biology,
    Languages,
}

/// A two-premise template. `{A}`, `{B}`, `{C}` are the source, bridge
/// and end slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub id: &'static str,
    pub first_premise: &'static str,
    pub second_premise: &'static str,
    pub conclusion: &'static str,
    pub pools: [Pool; 3],
}

pub const TEMPLATES: [Template; 6] = [
    Template {
        id: "mother",
        first_premise: "{A} is the mother of {B}.",
        second_premise: "{B} is the mother of {C}.",
        conclusion: "Therefore, {A} is the grandmother of",
        pools: [Pool::Names; 3],
    },
    Template {
        id: "father",
        first_premise: "{A} is the father of {B}.",
        second_premise: "{B} is the father of {C}.",
        conclusion: "Therefore, {A} is the grandfather of",
        pools: [Pool::Names; 3],
    },
    Template {
        id: "city",
        first_premise: "{A} is a city in the state of {B}.",
        second_premise: "The state of {B} is part of the country {C}.",
        conclusion: "Therefore, {A} is located in",
        pools: [Pool::Locations; 3],
    },
    Template {
        id: "language",
        first_premise: "{A} lives in {B}.",
        second_premise: "People in {B} speak {C}.",
        conclusion: "Therefore, {A} speaks",
        pools: [Pool::Names, Pool::Locations, Pool::Languages],
    },
    Template {
        id: "species",
        first_premise: "{A} is a species in the genus {B}.",
        second_premise: "The genus {B} belongs to the family {C}.",
        conclusion: "Therefore, {A} is classified under the family",
        pools: [Pool::Biology; 3],
    },
    Template {
        id: "timezone",
        first_premise: "{A} follows the time zone of {B}.",
        second_premise: "{B} is three hours ahead of {C}.",
        conclusion: "Therefore, {A} is three hours ahead of",
        pools: [Pool::Locations; 3],
    },
];

pub fn template(id: &str) -> Option<&'static Template> {
    TEMPLATES.iter().find(|t| t.id == id)
}

const NAMES: [&str; 20] = [
    "Ben", "Jack", "Luke", "Mark", "Paul", "John", "Tom", "Sam", "Joe", "Max", "Amy", "Emma", "Anna", "Grace", "Kate",
    "Lucy", "Sarah", "Alice", "Alex", "Ruby",
];

const LOCATIONS: [&str; 20] = [
    "Zorvath", "Tyseria", "Kryo", "Vynora", "Quellion", "Dras", "Luminax", "Vesperon", "Noctari", "Xyphodon",
    "Glacidae", "Ophirion", "Eryndor", "Solmyra", "Umbrithis", "Balthorien", "Ytheris", "Fendrel", "Havroth",
    "Marendor",
];

const BIOLOGY: [&str; 20] = [
    "Fluxilus", "Varnex", "Dranthidae", "Zynthor", "Gryvus", "Myralin", "Thalorium", "Zephyra", "Aerinth",
    "Xyphodon", "Kryostis", "Glacidae", "Borithis", "Chrysalix", "Noctilura", "Phorvian", "Seraphid", "Uthrelin",
    "Eldrinth", "Yvorith",
];

const LANGUAGES: [&str; 20] = [
    "English", "Spanish", "Mandarin", "Hindi", "Arabic", "French", "German", "Japanese", "Portuguese", "Russian",
    "Korean", "Italian", "Turkish", "Dutch", "Swedish", "Polish", "Hebrew", "Greek", "Bengali", "Thai",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityPools {
    pub names: Vec<String>,
    pub locations: Vec<String>,
    pub biology: Vec<String>,
    pub languages: Vec<String>,
}

impl Default for EntityPools {
    fn default() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        EntityPools {
            names: own(&NAMES),
            locations: own(&LOCATIONS),
            biology: own(&BIOLOGY),
            languages: own(&LANGUAGES),
        }
    }
}

impl EntityPools {
    pub fn get(&self, pool: Pool) -> &[String] {
        match pool {
            Pool::Names => &self.names,
            Pool::Locations => &self.locations,
            Pool::Biology => &self.biology,
            Pool::Languages => &self.languages,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NLExample {
    pub prompt: String,
    pub answer: String,
    pub template_id: String,
    pub k_chains: usize,
}

fn fill(pattern: &str, a: &str, b: &str, c: &str) -> String {
    pattern.replace("{A}", a).replace("{B}", b).replace("{C}", c)
}

/// Draws `[source, bridge, end]` names for `k` chains; names are distinct
/// across the whole context.
fn draw_entities<R: Rng + ?Sized>(rng: &mut R, t: &Template, pools: &EntityPools, k: usize) -> Result<Vec<[String; 3]>> {
    let mut chosen: [Vec<String>; 3] = Default::default();
    for pool in [Pool::Names, Pool::Locations, Pool::Biology, Pool::Languages] {
        let slots: Vec<usize> = (0..3).filter(|&s| t.pools[s] == pool).collect();
        if slots.is_empty() {
            continue;
        }
        let entries = pools.get(pool);
        let need = slots.len() * k;
        if entries.len() < need {
            return Err(Error::config(
                "entity_pools",
                format!("template `{}` needs {need} entities from {pool:?}, pool has {}", t.id, entries.len()),
            ));
        }
        let picks = index::sample(rng, entries.len(), need);
        for (j, i) in picks.iter().enumerate() {
            chosen[slots[j / k]].push(entries[i].clone());
        }
    }
    let mut all: Vec<&String> = chosen.iter().flatten().collect();
    all.sort();
    all.dedup();
    if all.len() != 3 * k {
        return Err(Error::config(
            "entity_pools",
            format!("template `{}` drew overlapping entity names across pools", t.id),
        ));
    }
    let [a, b, c] = chosen;
    Ok(a.into_iter().zip(b).zip(c).map(|((a, b), c)| [a, b, c]).collect())
}

/// Builds one prompt for template `t` with `k` chains.
pub fn gen_nl_example<R: Rng + ?Sized>(rng: &mut R, t: &Template, pools: &EntityPools, k: usize) -> Result<NLExample> {
    if k == 0 {
        return Err(Error::config("k_chains", "must be at least 1"));
    }
    let chains = draw_entities(rng, t, pools, k)?;
    let target = rng.random_range(0..k);
    let mut sentences: Vec<String> = premise_order(rng, k)
        .into_iter()
        .map(|(c, second)| {
            let [a, b, e] = &chains[c];
            fill(if second { t.second_premise } else { t.first_premise }, a, b, e)
        })
        .collect();
    let [a, _, e] = &chains[target];
    sentences.push(fill(t.conclusion, a, "", ""));
    Ok(NLExample {
        prompt: sentences.join(" "),
        answer: e.clone(),
        template_id: t.id.to_string(),
        k_chains: k,
    })
}

/// `n` prompts, each from a template picked uniformly from `template_ids`.
pub fn gen_nl_dataset<R: Rng + ?Sized>(
    template_ids: &[&str],
    pools: &EntityPools,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<NLExample>> {
    let templates = template_ids
        .iter()
        .map(|id| template(id).ok_or_else(|| Error::config("template", format!("unknown template `{id}`"))))
        .collect::<Result<Vec<_>>>()?;
    if templates.is_empty() {
        return Err(Error::config("template", "no templates selected"));
    }
    (0..n)
        .map(|_| {
            let t = *templates.choose(rng).expect("non-empty");
            gen_nl_example(rng, t, pools, k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn father_prompt_has_example_shape() {
        let mut rng = stream(3, Domain::NaturalLanguage, 0, 0);
        let ex = gen_nl_dataset(&["father"], &EntityPools::default(), 2, 1, &mut rng).unwrap().remove(0);
        assert_eq!(ex.prompt.matches(" is the father of ").count(), 4);
        assert!(ex.prompt.contains("Therefore, "));
        assert!(ex.prompt.ends_with(" is the grandfather of"));
        assert_eq!(ex.k_chains, 2);
        assert!(ex.prompt.contains(&format!("is the father of {}.", ex.answer)));
    }

    #[test]
    fn single_chain_has_two_premises() {
        let mut rng = stream(3, Domain::NaturalLanguage, 0, 0);
        let ex = gen_nl_dataset(&["city"], &EntityPools::default(), 1, 1, &mut rng).unwrap().remove(0);
        assert_eq!(ex.prompt.matches('.').count(), 2);
    }

    #[test]
    fn pool_exhaustion_is_a_config_error() {
        let mut rng = stream(3, Domain::NaturalLanguage, 0, 0);
        // 7 chains need 21 names from a 20-name pool
        assert!(gen_nl_dataset(&["mother"], &EntityPools::default(), 7, 1, &mut rng).is_err());
        // mixed pools need only 7 per pool
        assert!(gen_nl_dataset(&["language"], &EntityPools::default(), 7, 1, &mut rng).is_ok());
        assert!(gen_nl_dataset(&["nope"], &EntityPools::default(), 1, 1, &mut rng).is_err());
    }
}
