//! Attention masks over tree-ordered token lists.
//!
//! Rows are queries, columns are keys, both indexed by token position.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::hierarchy::HierarchyTree;
use crate::tokenize::TokenRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskVariant {
    Causal,
    Levelwise,
    /// Frontier plus the strict ancestor chain.
    Tree,
    /// Frontier plus every internal node from earlier levels (ablation).
    TreeAllInternal,
}

impl MaskVariant {
    pub fn code(self) -> u8 {
        match self {
            MaskVariant::Causal => 0,
            MaskVariant::Levelwise => 1,
            MaskVariant::Tree => 2,
            MaskVariant::TreeAllInternal => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => MaskVariant::Causal,
            1 => MaskVariant::Levelwise,
            2 => MaskVariant::Tree,
            3 => MaskVariant::TreeAllInternal,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskVariant::Causal => "causal",
            MaskVariant::Levelwise => "levelwise",
            MaskVariant::Tree => "tree",
            MaskVariant::TreeAllInternal => "tree-all-internal",
        }
    }
}

impl std::str::FromStr for MaskVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "causal" => MaskVariant::Causal,
            "levelwise" => MaskVariant::Levelwise,
            "tree" => MaskVariant::Tree,
            "tree-all-internal" => MaskVariant::TreeAllInternal,
            other => {
                return Err(Error::InvalidParameter(format!("unknown mask variant `{other}`")))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    pub n: usize,
    pub variant: MaskVariant,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn new(n: usize, variant: MaskVariant) -> Self {
        Self {
            n,
            variant,
            allowed: vec![false; n * n],
        }
    }

    pub fn from_rows(n: usize, variant: MaskVariant, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "{} mask cells for n = {n}",
                allowed.len()
            )));
        }
        Ok(Self {
            n,
            variant,
            allowed,
        })
    }

    #[inline]
    pub fn get(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.n + key]
    }

    #[inline]
    pub fn set(&mut self, query: usize, key: usize, value: bool) {
        self.allowed[query * self.n + key] = value;
    }

    pub fn row(&self, query: usize) -> &[bool] {
        &self.allowed[query * self.n..(query + 1) * self.n]
    }

    pub fn cells(&self) -> &[bool] {
        &self.allowed
    }

    /// Whether every allowed cell of `self` is allowed in `other`.
    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.n == other.n && self.allowed.iter().zip(&other.allowed).all(|(a, b)| !a || *b)
    }

    /// `0`/`1` grid, one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.n * (self.n + 1));
        for q in 0..self.n {
            for k in 0..self.n {
                s.push(if self.get(q, k) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }
}

pub fn causal_mask(n: usize) -> AttentionMask {
    let mut m = AttentionMask::new(n, MaskVariant::Causal);
    for q in 0..n {
        for k in 0..=q {
            m.set(q, k, true);
        }
    }
    m
}

struct TokenView {
    created: Vec<u32>,
    split: Vec<Option<u32>>,
    internal: Vec<bool>,
    position: HashMap<u32, usize>,
}

fn token_view(tokens: &[TokenRecord], tree: &HierarchyTree) -> Result<TokenView> {
    if tokens.len() != tree.len() {
        return Err(Error::TokenTreeMismatch(format!(
            "{} tokens for {} nodes",
            tokens.len(),
            tree.len()
        )));
    }
    let mut view = TokenView {
        created: Vec::with_capacity(tokens.len()),
        split: Vec::with_capacity(tokens.len()),
        internal: Vec::with_capacity(tokens.len()),
        position: HashMap::with_capacity(tokens.len()),
    };
    let mut last_level = 0u32;
    for (i, t) in tokens.iter().enumerate() {
        let node = tree
            .node(t.node_id)
            .ok_or_else(|| Error::TokenTreeMismatch(format!("node {} not in tree", t.node_id)))?;
        if node.created_level < last_level {
            return Err(Error::TokenTreeMismatch(format!(
                "token {i} (node {}) is out of level order",
                t.node_id
            )));
        }
        last_level = node.created_level;
        if view.position.insert(t.node_id, i).is_some() {
            return Err(Error::TokenTreeMismatch(format!(
                "node {} tokenized twice",
                t.node_id
            )));
        }
        view.created.push(node.created_level);
        view.split.push(node.split_level);
        view.internal.push(node.children.is_some());
    }
    Ok(view)
}

/// Keys of a level-`l` query other than itself: the frontier `N_{l-1}`.
fn frontier_fill(m: &mut AttentionMask, view: &TokenView) {
    for q in 0..m.n {
        m.set(q, q, true);
        let l = view.created[q];
        if l == 0 {
            continue;
        }
        let prev = l - 1;
        for k in 0..m.n {
            let created = view.created[k];
            if created > prev {
                // Tokens are level-sorted, nothing later can be in N_{l-1}.
                break;
            }
            if view.split[k].is_none_or(|s| prev < s) {
                m.set(q, k, true);
            }
        }
    }
}

/// Each query attends to itself and to the frontier that generated it.
pub fn levelwise_mask(tokens: &[TokenRecord], tree: &HierarchyTree) -> Result<AttentionMask> {
    let view = token_view(tokens, tree)?;
    let mut m = AttentionMask::new(tokens.len(), MaskVariant::Levelwise);
    frontier_fill(&mut m, &view);
    Ok(m)
}

/// Levelwise visibility plus every strict ancestor of the query.
pub fn tree_mask(tokens: &[TokenRecord], tree: &HierarchyTree) -> Result<AttentionMask> {
    let view = token_view(tokens, tree)?;
    let mut m = AttentionMask::new(tokens.len(), MaskVariant::Tree);
    frontier_fill(&mut m, &view);
    for (q, t) in tokens.iter().enumerate() {
        for a in tree.ancestors(t.node_id) {
            m.set(q, view.position[&a], true);
        }
    }
    Ok(m)
}

/// Levelwise visibility plus every internal node created before the
/// query's level.
pub fn tree_mask_all_internal(
    tokens: &[TokenRecord],
    tree: &HierarchyTree,
) -> Result<AttentionMask> {
    let view = token_view(tokens, tree)?;
    let mut m = AttentionMask::new(tokens.len(), MaskVariant::TreeAllInternal);
    frontier_fill(&mut m, &view);
    for q in 0..m.n {
        for k in 0..m.n {
            if view.internal[k] && view.created[k] < view.created[q] {
                m.set(q, k, true);
            }
        }
    }
    Ok(m)
}

pub fn build_mask(
    variant: MaskVariant,
    tokens: &[TokenRecord],
    tree: &HierarchyTree,
) -> Result<AttentionMask> {
    match variant {
        MaskVariant::Causal => {
            token_view(tokens, tree)?;
            Ok(causal_mask(tokens.len()))
        }
        MaskVariant::Levelwise => levelwise_mask(tokens, tree),
        MaskVariant::Tree => tree_mask(tokens, tree),
        MaskVariant::TreeAllInternal => tree_mask_all_internal(tokens, tree),
    }
}

/// For every level `l`, the number of distinct keys read by the queries
/// created at `l`.
pub fn decode_cost(
    tokens: &[TokenRecord],
    tree: &HierarchyTree,
    variant: MaskVariant,
) -> Result<Vec<usize>> {
    let mask = build_mask(variant, tokens, tree)?;
    let depth = tokens.iter().map(|t| t.level as usize).max().unwrap_or(0);
    let mut used: Vec<Vec<bool>> = vec![vec![false; mask.n]; depth + 1];
    for (q, t) in tokens.iter().enumerate() {
        let row = mask.row(q);
        let acc = &mut used[t.level as usize];
        for (k, allowed) in row.iter().enumerate() {
            acc[k] |= *allowed;
        }
    }
    Ok(used
        .iter()
        .map(|u| u.iter().filter(|x| **x).count())
        .collect())
}

/// Number of sequential decoding steps under level-parallel generation:
/// the count of distinct non-root query levels.
pub fn generation_steps(tokens: &[TokenRecord]) -> usize {
    let mut levels: Vec<u16> = tokens.iter().map(|t| t.level).filter(|l| *l > 0).collect();
    levels.sort_unstable();
    levels.dedup();
    levels.len()
}

/// Human-readable per-level cost table.
pub fn decode_cost_text(costs: &[(MaskVariant, Vec<usize>)]) -> String {
    let mut s = String::from("variant,level,keys\n");
    for (v, c) in costs {
        for (l, k) in c.iter().enumerate() {
            let _ = writeln!(s, "{},{l},{k}", v.name());
        }
    }
    s
}
