//! Symbolic two-hop reasoning with distractors.
//!
//! A context with `k` chains `S_c -> B_c -> E_c` is laid out as
//!
//! ```text
//! BOS  p_1 p_2 ... p_2k  S*  E*
//! ```
//!
//! where each premise `p` is a `(parent, child)` token pair, either
//! `S_c B_c` or `B_c E_c`, the premises are permuted uniformly subject to
//! every chain's `S B` premise preceding its `B E` premise, `S*` is the
//! target chain's source (the query) and `E*` its end (the label). The
//! sequence length is therefore `4k + 3`.

pub mod nl;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

pub type TokenId = u32;

/// Token vocabulary: one BOS marker plus `entity_count` entity tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub entity_count: usize,
    pub bos_id: TokenId,
}

impl VocabSpec {
    /// BOS at id 0, entities at `1..=entity_count`.
    pub fn new(entity_count: usize) -> Self {
        VocabSpec {
            entity_count,
            bos_id: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.entity_count + 1
    }

    /// The `i`-th entity token, skipping the BOS id.
    pub fn entity(&self, i: usize) -> TokenId {
        let id = i as TokenId;
        if id >= self.bos_id {
            id + 1
        } else {
            id
        }
    }

    pub fn is_entity(&self, t: TokenId) -> bool {
        t != self.bos_id && (t as usize) < self.size()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub source: TokenId,
    pub bridge: TokenId,
    pub end: TokenId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoleKind {
    Bos,
    Source,
    Bridge,
    End,
    Query,
    Label,
}

impl RoleKind {
    fn as_str(self) -> &'static str {
        match self {
            RoleKind::Bos => "bos",
            RoleKind::Source => "source",
            RoleKind::Bridge => "bridge",
            RoleKind::End => "end",
            RoleKind::Query => "query",
            RoleKind::Label => "label",
        }
    }
}

/// Role of one position. `chain` is `None` only for BOS.
///
/// Serialized as `bos` or `<kind>:<chain>:<target|distractor>`, e.g.
/// `bridge:3:distractor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Role {
    pub kind: RoleKind,
    pub chain: Option<usize>,
    pub target: bool,
}

impl Role {
    pub const BOS: Role = Role {
        kind: RoleKind::Bos,
        chain: None,
        target: false,
    };

    pub fn new(kind: RoleKind, chain: usize, target: bool) -> Self {
        Role {
            kind,
            chain: Some(chain),
            target,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.chain {
            None => f.write_str(self.kind.as_str()),
            Some(c) => write!(
                f,
                "{}:{}:{}",
                self.kind.as_str(),
                c,
                if self.target { "target" } else { "distractor" }
            ),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        if s == "bos" {
            return Ok(Role::BOS);
        }
        let mut parts = s.split(':');
        let kind = match parts.next() {
            Some("source") => RoleKind::Source,
            Some("bridge") => RoleKind::Bridge,
            Some("end") => RoleKind::End,
            Some("query") => RoleKind::Query,
            Some("label") => RoleKind::Label,
            _ => return Err(format!("unknown role `{s}`")),
        };
        let chain = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| format!("role `{s}` lacks a chain index"))?;
        let target = match parts.next() {
            Some("target") => true,
            Some("distractor") => false,
            _ => return Err(format!("role `{s}` lacks target/distractor flag")),
        };
        if parts.next().is_some() {
            return Err(format!("trailing fields in role `{s}`"));
        }
        Ok(Role::new(kind, chain, target))
    }
}

impl From<Role> for String {
    fn from(r: Role) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Role {
    type Error = String;

    fn try_from(s: String) -> core::result::Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicExample {
    pub tokens: Vec<TokenId>,
    pub roles: Vec<Role>,
    pub target_chain: usize,
    pub query_pos: usize,
    pub label: TokenId,
}

impl SymbolicExample {
    /// Number of chains implied by the layout.
    pub fn chain_count(&self) -> usize {
        self.tokens.len().saturating_sub(3) / 4
    }

    /// Premise positions are `1..=4k`; odd positions hold parents.
    pub fn is_parent_pos(&self, pos: usize) -> bool {
        pos >= 1 && pos <= 4 * self.chain_count() && pos % 2 == 1
    }

    pub fn is_child_pos(&self, pos: usize) -> bool {
        pos >= 1 && pos <= 4 * self.chain_count() && pos % 2 == 0
    }

    /// Position of the child token of chain `c`'s premise whose child has `kind`.
    pub fn child_position(&self, chain: usize, kind: RoleKind) -> Option<usize> {
        (1..=4 * self.chain_count())
            .filter(|&p| p % 2 == 0)
            .find(|&p| self.roles[p].chain == Some(chain) && self.roles[p].kind == kind)
    }

    /// Reconstructs the chains from the premise tokens.
    pub fn chains(&self) -> Vec<Chain> {
        let k = self.chain_count();
        let mut chains = vec![
            Chain {
                source: 0,
                bridge: 0,
                end: 0
            };
            k
        ];
        for p in 1..=4 * k {
            if let Some(c) = self.roles[p].chain.filter(|&c| c < k) {
                match self.roles[p].kind {
                    RoleKind::Source => chains[c].source = self.tokens[p],
                    RoleKind::Bridge => chains[c].bridge = self.tokens[p],
                    RoleKind::End => chains[c].end = self.tokens[p],
                    _ => {}
                }
            }
        }
        chains
    }
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub chains_per_context: usize,
    pub entity_count: usize,
    pub batch_size: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            chains_per_context: 5,
            entity_count: 24,
            batch_size: 512,
        }
    }
}

impl GenConfig {
    pub fn vocab(&self) -> VocabSpec {
        VocabSpec::new(self.entity_count)
    }

    pub fn seq_len(&self) -> usize {
        4 * self.chains_per_context + 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains_per_context == 0 {
            return Err(Error::config("chains_per_context", "must be at least 1"));
        }
        if self.entity_count < 3 * self.chains_per_context {
            return Err(Error::config(
                "entity_count",
                format!(
                    "{} entities cannot hold {} distinct chains (need {})",
                    self.entity_count,
                    self.chains_per_context,
                    3 * self.chains_per_context
                ),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Samples `k` chains over `3k` pairwise-distinct entities.
pub fn sample_chains<R: Rng + ?Sized>(rng: &mut R, k: usize, vocab: &VocabSpec) -> Result<Vec<Chain>> {
    if vocab.entity_count < 3 * k {
        return Err(Error::config(
            "entity_count",
            format!("need at least {} entities for {k} chains, have {}", 3 * k, vocab.entity_count),
        ));
    }
    let picks = index::sample(rng, vocab.entity_count, 3 * k);
    let ids: Vec<TokenId> = picks.iter().map(|i| vocab.entity(i)).collect();
    Ok(ids
        .chunks_exact(3)
        .map(|c| Chain {
            source: c[0],
            bridge: c[1],
            end: c[2],
        })
        .collect())
}

/// Orders `2k` premises uniformly among orderings in which every chain's
/// first premise precedes its second. Returns `(chain, is_second)` per slot.
///
/// All `2k` premises are shuffled, then within each chain the earlier of
/// its two slots is assigned the first premise. Every admissible ordering
/// has exactly `2^k` preimages, so the result is uniform.
pub fn premise_order<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<(usize, bool)> {
    let mut slots: Vec<usize> = (0..2 * k).map(|i| i / 2).collect();
    slots.shuffle(rng);
    let mut seen = vec![false; k];
    slots
        .into_iter()
        .map(|c| {
            let second = seen[c];
            seen[c] = true;
            (c, second)
        })
        .collect()
}

/// Lays out the chains as a context whose query is chain `target_idx`.
pub fn assemble_context<R: Rng + ?Sized>(
    chains: &[Chain],
    target_idx: usize,
    vocab: &VocabSpec,
    rng: &mut R,
) -> Result<SymbolicExample> {
    if target_idx >= chains.len() {
        return Err(Error::config(
            "target_idx",
            format!("{target_idx} is not below chain count {}", chains.len()),
        ));
    }
    let k = chains.len();
    let mut tokens = Vec::with_capacity(4 * k + 3);
    let mut roles = Vec::with_capacity(4 * k + 3);
    tokens.push(vocab.bos_id);
    roles.push(Role::BOS);
    for (c, second) in premise_order(rng, k) {
        let chain = &chains[c];
        let target = c == target_idx;
        let (parent, child) = if second {
            ((chain.bridge, RoleKind::Bridge), (chain.end, RoleKind::End))
        } else {
            ((chain.source, RoleKind::Source), (chain.bridge, RoleKind::Bridge))
        };
        tokens.push(parent.0);
        roles.push(Role::new(parent.1, c, target));
        tokens.push(child.0);
        roles.push(Role::new(child.1, c, target));
    }
    let target = &chains[target_idx];
    let query_pos = tokens.len();
    tokens.push(target.source);
    roles.push(Role::new(RoleKind::Query, target_idx, true));
    tokens.push(target.end);
    roles.push(Role::new(RoleKind::Label, target_idx, true));
    Ok(SymbolicExample {
        tokens,
        roles,
        target_chain: target_idx,
        query_pos,
        label: target.end,
    })
}

/// One example drawn from an explicit random source.
pub fn sample_example<R: Rng + ?Sized>(rng: &mut R, config: &GenConfig) -> Result<SymbolicExample> {
    let vocab = config.vocab();
    let chains = sample_chains(rng, config.chains_per_context, &vocab)?;
    let target = rng.random_range(0..chains.len());
    assemble_context(&chains, target, &vocab, rng)
}

/// The batch for `step` in `domain`. Example `i` draws from its own stream
/// keyed by `(config.seed, domain, step, i)`.
pub fn make_batch(
    config: &GenConfig,
    domain: Domain,
    step: u64,
    batch_size: usize,
) -> Result<Vec<SymbolicExample>> {
    config.validate()?;
    if batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    (0..batch_size)
        .map(|i| sample_example(&mut rng::stream(config.seed, domain, step, i as u64), config))
        .collect()
}

/// A named invariant broken by an example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Length,
    Bos,
    PremiseCount,
    ChainConsistency,
    PremisePrecedence,
    EntityDistinctness,
    Query,
    Label,
}

impl Violation {
    pub fn name(self) -> &'static str {
        match self {
            Violation::Length => "length",
            Violation::Bos => "bos",
            Violation::PremiseCount => "premise count",
            Violation::ChainConsistency => "chain consistency",
            Violation::PremisePrecedence => "premise precedence",
            Violation::EntityDistinctness => "entity distinctness",
            Violation::Query => "query",
            Violation::Label => "label",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Checks every structural invariant, reporting the first one violated.
pub fn validate_example(ex: &SymbolicExample, vocab: &VocabSpec) -> core::result::Result<(), Violation> {
    let n = ex.tokens.len();
    if n < 7 || (n - 3) % 4 != 0 || ex.roles.len() != n {
        return Err(Violation::Length);
    }
    let k = (n - 3) / 4;
    if ex.tokens[0] != vocab.bos_id || ex.roles[0] != Role::BOS {
        return Err(Violation::Bos);
    }

    // premise slot index of each chain's first and second premise
    let mut first = vec![None; k];
    let mut second = vec![None; k];
    for slot in 0..2 * k {
        let (p, c) = (ex.roles[1 + 2 * slot], ex.roles[2 + 2 * slot]);
        let chain = match (p.chain, c.chain) {
            (Some(a), Some(b)) if a == b && a < k => a,
            _ => return Err(Violation::PremiseCount),
        };
        let target = chain == ex.target_chain;
        if p.target != target || c.target != target {
            return Err(Violation::PremiseCount);
        }
        let which = match (p.kind, c.kind) {
            (RoleKind::Source, RoleKind::Bridge) => &mut first,
            (RoleKind::Bridge, RoleKind::End) => &mut second,
            _ => return Err(Violation::PremiseCount),
        };
        if which[chain].replace(slot).is_some() {
            return Err(Violation::PremiseCount);
        }
    }
    if first.iter().chain(&second).any(Option::is_none) {
        return Err(Violation::PremiseCount);
    }

    let mut chains = Vec::with_capacity(k);
    for c in 0..k {
        let (f, s) = (first[c].unwrap(), second[c].unwrap());
        let chain = Chain {
            source: ex.tokens[1 + 2 * f],
            bridge: ex.tokens[2 + 2 * f],
            end: ex.tokens[2 + 2 * s],
        };
        if ex.tokens[1 + 2 * s] != chain.bridge
            || chain.source == chain.bridge
            || chain.bridge == chain.end
            || chain.source == chain.end
        {
            return Err(Violation::ChainConsistency);
        }
        chains.push(chain);
    }
    for c in 0..k {
        if first[c] > second[c] {
            return Err(Violation::PremisePrecedence);
        }
    }

    let mut entities: Vec<TokenId> = chains.iter().flat_map(|c| [c.source, c.bridge, c.end]).collect();
    if entities.iter().any(|&t| !vocab.is_entity(t)) {
        return Err(Violation::EntityDistinctness);
    }
    entities.sort_unstable();
    if entities.windows(2).any(|w| w[0] == w[1]) {
        return Err(Violation::EntityDistinctness);
    }

    let q = 4 * k + 1;
    if ex.target_chain >= k
        || ex.query_pos != q
        || ex.tokens[q] != chains[ex.target_chain].source
        || ex.roles[q] != Role::new(RoleKind::Query, ex.target_chain, true)
    {
        return Err(Violation::Query);
    }
    let end = chains[ex.target_chain].end;
    if ex.label != end
        || ex.tokens[q + 1] != end
        || ex.roles[q + 1] != Role::new(RoleKind::Label, ex.target_chain, true)
    {
        return Err(Violation::Label);
    }
    Ok(())
}
