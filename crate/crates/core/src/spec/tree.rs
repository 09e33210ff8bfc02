use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::target::NextTokenModel;
use crate::token::TokenId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StrategyError {
    #[error("{field} must be at least 1")]
    Zero { field: &'static str },
    #[error("tokens_to_verify {tokens_to_verify} exceeds the {max} nodes a top_k={top_k}, depth={draft_depth} tree holds")]
    TooManyNodes {
        tokens_to_verify: usize,
        top_k: usize,
        draft_depth: usize,
        max: usize,
    },
}

/// One MAB arm: `(draft_depth, top_k, tokens_to_verify)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawStrategy")]
pub struct SpecStrategy {
    pub draft_depth: usize,
    pub top_k: usize,
    pub tokens_to_verify: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    draft_depth: usize,
    top_k: usize,
    tokens_to_verify: usize,
}

impl TryFrom<RawStrategy> for SpecStrategy {
    type Error = StrategyError;
    fn try_from(r: RawStrategy) -> Result<Self, StrategyError> {
        SpecStrategy::new(r.draft_depth, r.top_k, r.tokens_to_verify)
    }
}

impl SpecStrategy {
    pub fn new(
        draft_depth: usize,
        top_k: usize,
        tokens_to_verify: usize,
    ) -> Result<Self, StrategyError> {
        for (field, v) in [
            ("draft_depth", draft_depth),
            ("top_k", top_k),
            ("tokens_to_verify", tokens_to_verify),
        ] {
            if v == 0 {
                return Err(StrategyError::Zero { field });
            }
        }
        let max = max_tree_nodes(top_k, draft_depth);
        if tokens_to_verify > max {
            return Err(StrategyError::TooManyNodes {
                tokens_to_verify,
                top_k,
                draft_depth,
                max,
            });
        }
        Ok(Self {
            draft_depth,
            top_k,
            tokens_to_verify,
        })
    }

    /// A `top_k = 1` chain of `depth` nodes.
    pub fn chain(depth: usize) -> Self {
        Self::new(depth, 1, depth).expect("depth >= 1")
    }
}

/// `top_k + top_k^2 + ... + top_k^depth`, saturating.
pub fn max_tree_nodes(top_k: usize, depth: usize) -> usize {
    let mut total = 0usize;
    let mut level = 1usize;
    for _ in 0..depth {
        level = level.saturating_mul(top_k);
        total = total.saturating_add(level);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DraftNode {
    pub token: TokenId,
    /// `None` for children of the root (the verified context).
    pub parent: Option<usize>,
    pub depth: usize,
    pub path_prob: f64,
}

/// Candidate tree. Nodes are stored in selection order, so every parent
/// precedes its children.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DraftTree {
    nodes: Vec<DraftNode>,
    #[serde(skip)]
    root_children: Vec<usize>,
    #[serde(skip)]
    children: Vec<Vec<usize>>,
}

impl DraftTree {
    pub fn from_nodes(nodes: Vec<DraftNode>) -> Self {
        let mut children = vec![Vec::new(); nodes.len()];
        let mut root_children = Vec::new();
        for (i, n) in nodes.iter().enumerate() {
            match n.parent {
                Some(p) => {
                    assert!(p < i, "parent must precede child");
                    children[p].push(i);
                }
                None => root_children.push(i),
            }
        }
        Self {
            nodes,
            root_children,
            children,
        }
    }

    /// A linear chain with unit path probability.
    pub fn chain(tokens: &[TokenId]) -> Self {
        Self::from_nodes(
            tokens
                .iter()
                .enumerate()
                .map(|(i, &token)| DraftNode {
                    token,
                    parent: i.checked_sub(1),
                    depth: i + 1,
                    path_prob: 1.0,
                })
                .collect(),
        )
    }

    pub fn nodes(&self) -> &[DraftNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children_of(&self, node: Option<usize>) -> &[usize] {
        match node {
            Some(i) => &self.children[i],
            None => &self.root_children,
        }
    }

    pub fn child_with_token(&self, node: Option<usize>, token: TokenId) -> Option<usize> {
        self.children_of(node)
            .iter()
            .copied()
            .find(|&c| self.nodes[c].token == token)
    }

    /// Tokens from the root down to `node`, inclusive.
    pub fn path(&self, node: usize) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(self.nodes[node].depth);
        let mut cur = Some(node);
        while let Some(i) = cur {
            out.push(self.nodes[i].token);
            cur = self.nodes[i].parent;
        }
        out.reverse();
        out
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn is_ancestor_closed(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| match n.parent {
            Some(p) => p < i && self.nodes[p].depth + 1 == n.depth,
            None => n.depth == 1,
        })
    }
}

struct Candidate {
    path_prob: f64,
    depth: usize,
    token: TokenId,
    seq: u64,
    parent: Option<usize>,
    expansion: usize,
    rank: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Max-heap: higher path_prob first, then shallower, then lower token id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.path_prob
            .total_cmp(&other.path_prob)
            .then(other.depth.cmp(&self.depth))
            .then(other.token.cmp(&self.token))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Keeps the `tokens_to_verify` highest path-probability nodes of the
/// `top_k`-ary, `draft_depth`-deep expansion. A child never outranks its
/// parent, so a best-first search reaches exactly that set and the result is
/// ancestor-closed. Tokens with zero drafter probability are never proposed.
pub fn build_draft_tree<M>(drafter: &M, ctx: &[TokenId], strategy: &SpecStrategy) -> DraftTree
where
    M: NextTokenModel + ?Sized,
{
    let order = drafter.order();
    let tail = &ctx[ctx.len().saturating_sub(order)..];
    let mut buf: Vec<TokenId> = Vec::with_capacity(tail.len() + strategy.draft_depth);
    // Nodes whose paths end in the same `order` tokens share a ranking.
    let mut memo: Vec<(Vec<TokenId>, Vec<(TokenId, f64)>)> = Vec::new();
    let mut expansions: Vec<Expansion> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut expand = |buf: &[TokenId],
                      parent: Option<usize>,
                      depth: usize,
                      prob: f64,
                      expansions: &mut Vec<Expansion>| {
        let key = &buf[buf.len().saturating_sub(order)..];
        let ranking = match memo.iter().position(|(k, _)| k == key) {
            Some(i) => i,
            None => {
                memo.push((key.to_vec(), drafter.next_dist(buf).top_k(strategy.top_k)));
                memo.len() - 1
            }
        };
        expansions.push(Expansion {
            parent,
            depth,
            prob,
            children: memo[ranking].1.clone(),
            seq_base: (expansions.len() * strategy.top_k) as u64,
        });
        expansions.len() - 1
    };

    buf.extend_from_slice(tail);
    let root = expand(&buf, None, 1, 1.0, &mut expansions);
    heap.extend(child(&expansions, root, 0));
    let mut nodes: Vec<DraftNode> = Vec::with_capacity(strategy.tokens_to_verify);
    while nodes.len() < strategy.tokens_to_verify {
        let Some(c) = heap.pop() else { break };
        let idx = nodes.len();
        nodes.push(DraftNode {
            token: c.token,
            parent: c.parent,
            depth: c.depth,
            path_prob: c.path_prob,
        });
        heap.extend(child(&expansions, c.expansion, c.rank + 1));
        if c.depth < strategy.draft_depth {
            buf.truncate(tail.len());
            let start = buf.len();
            let mut cur = Some(idx);
            while let Some(i) = cur {
                buf.push(nodes[i].token);
                cur = nodes[i].parent;
            }
            buf[start..].reverse();
            let e = expand(&buf, Some(idx), c.depth + 1, c.path_prob, &mut expansions);
            heap.extend(child(&expansions, e, 0));
        }
    }
    DraftTree::from_nodes(nodes)
}

/// A node whose children are being offered, best first.
struct Expansion {
    parent: Option<usize>,
    depth: usize,
    prob: f64,
    children: Vec<(TokenId, f64)>,
    seq_base: u64,
}

// Siblings enter the heap one at a time, each once the better-ranked one is
// popped. `seq` numbers children as if all were pushed at expansion time.
fn child(expansions: &[Expansion], expansion: usize, rank: usize) -> Option<Candidate> {
    let e = &expansions[expansion];
    e.children.get(rank).map(|&(token, p)| Candidate {
        path_prob: e.prob * p,
        depth: e.depth,
        token,
        seq: e.seq_base + rank as u64,
        parent: e.parent,
        expansion,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::MarkovTargetModel;
    use crate::token::{tokens, Distribution};

    #[test]
    fn strategy_validation() {
        assert!(SpecStrategy::new(4, 2, 8).is_ok());
        assert_eq!(max_tree_nodes(2, 4), 30);
        assert!(matches!(
            SpecStrategy::new(2, 2, 7),
            Err(StrategyError::TooManyNodes { .. })
        ));
        assert!(matches!(
            SpecStrategy::new(0, 2, 1),
            Err(StrategyError::Zero {
                field: "draft_depth"
            })
        ));
        assert_eq!(max_tree_nodes(8, 40), usize::MAX);
    }

    #[test]
    fn strategy_json_is_validated() {
        let ok: SpecStrategy =
            serde_json::from_str(r#"{"draft_depth":10,"top_k":8,"tokens_to_verify":64}"#).unwrap();
        assert_eq!(ok, SpecStrategy::new(10, 8, 64).unwrap());
        assert!(serde_json::from_str::<SpecStrategy>(
            r#"{"draft_depth":1,"top_k":1,"tokens_to_verify":2}"#
        )
        .is_err());
    }

    fn skewed_model() -> MarkovTargetModel {
        let rows = (0..3).map(|t| {
            let mut w = vec![0.2, 0.3, 0.5];
            w.rotate_right(t);
            (tokens(&[t as u32]), Distribution::new(w).unwrap())
        });
        MarkovTargetModel::from_rows(3, 1, rows).unwrap()
    }

    #[test]
    fn top1_tree_is_greedy_chain() {
        let m = skewed_model();
        let tree = build_draft_tree(&m, &tokens(&[0]), &SpecStrategy::chain(4));
        // argmax after t is (t + 2) % 3
        let want = tokens(&[2, 1, 0, 2]);
        assert_eq!(tree.path(3), want);
        assert!(tree.is_ancestor_closed());
    }

    #[test]
    fn small_tree_has_exact_node_count() {
        let m = skewed_model();
        let tree = build_draft_tree(&m, &tokens(&[1]), &SpecStrategy::new(4, 2, 8).unwrap());
        assert_eq!(tree.len(), 8);
        assert!(tree.is_ancestor_closed());
        for n in tree.nodes() {
            if let Some(p) = n.parent {
                assert!(tree.nodes()[p].path_prob >= n.path_prob);
            }
        }
    }

    #[test]
    fn chain_tree_helpers() {
        let t = DraftTree::chain(&tokens(&[4, 5, 6]));
        assert_eq!(t.child_with_token(None, TokenId(4)), Some(0));
        assert_eq!(t.child_with_token(Some(0), TokenId(6)), None);
        assert_eq!(t.path(2), tokens(&[4, 5, 6]));
        assert_eq!(t.max_depth(), 3);
    }

    // Every child pushed as soon as its parent is expanded.
    fn eager_tree(m: &MarkovTargetModel, ctx: &[TokenId], s: &SpecStrategy) -> Vec<DraftNode> {
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut push =
            |heap: &mut BinaryHeap<Candidate>, path: &[TokenId], parent, depth, prob: f64| {
                let mut full = ctx.to_vec();
                full.extend_from_slice(path);
                for (token, p) in m.next_dist(&full).top_k(s.top_k) {
                    heap.push(Candidate {
                        path_prob: prob * p,
                        depth,
                        token,
                        seq,
                        parent,
                        expansion: 0,
                        rank: 0,
                    });
                    seq += 1;
                }
            };
        push(&mut heap, &[], None, 1, 1.0);
        let mut nodes: Vec<DraftNode> = Vec::new();
        while nodes.len() < s.tokens_to_verify {
            let Some(c) = heap.pop() else { break };
            nodes.push(DraftNode {
                token: c.token,
                parent: c.parent,
                depth: c.depth,
                path_prob: c.path_prob,
            });
            if c.depth < s.draft_depth {
                let path = DraftTree::from_nodes(nodes.clone()).path(nodes.len() - 1);
                push(
                    &mut heap,
                    &path,
                    Some(nodes.len() - 1),
                    c.depth + 1,
                    c.path_prob,
                );
            }
        }
        nodes
    }

    proptest::proptest! {
        #[test]
        fn matches_eager_expansion(
            rows in proptest::collection::vec(proptest::collection::vec(0u8..4, 4), 16),
            ctx in proptest::collection::vec(0u32..4, 0..4),
            depth in 1usize..6,
            top_k in 1usize..5,
            verify in 1usize..40,
        ) {
            // Small integer weights make exact probability ties common.
            let rows = rows.into_iter().enumerate().map(|(i, w)| {
                let w: Vec<f64> = w.iter().map(|&x| x as f64).collect();
                let w = if w.iter().sum::<f64>() == 0.0 { vec![1.0; 4] } else { w };
                (tokens(&[i as u32 / 4, i as u32 % 4]), Distribution::from_weights(w).unwrap())
            });
            let m = MarkovTargetModel::from_rows(4, 2, rows).unwrap();
            let s = SpecStrategy::new(depth, top_k, verify.min(max_tree_nodes(top_k, depth))).unwrap();
            let ctx = tokens(&ctx);
            let tree = build_draft_tree(&m, &ctx, &s);
            proptest::prop_assert_eq!(tree.nodes(), &eager_tree(&m, &ctx, &s)[..]);
        }
    }
}
