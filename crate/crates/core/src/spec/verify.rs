use serde::{Deserialize, Serialize};

use super::tree::DraftTree;
use crate::rng::RngStream;
use crate::target::{MarkovTargetModel, NextTokenModel};
use crate::token::{sample_token, Distribution, TokenId};

/// Outcome of one verification pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptResult {
    /// Drafted tokens the target agreed with, root first.
    pub accepted: Vec<TokenId>,
    /// The one token the target itself supplied.
    pub bonus: TokenId,
}

impl AcceptResult {
    pub fn accept_length(&self) -> usize {
        self.accepted.len()
    }

    pub fn total_emitted(&self) -> usize {
        self.accepted.len() + 1
    }

    /// Accepted tokens followed by the bonus.
    pub fn emitted(&self) -> Vec<TokenId> {
        let mut out = self.accepted.clone();
        out.push(self.bonus);
        out
    }
}

fn context_tail<'a>(model: &MarkovTargetModel, ctx: &'a [TokenId]) -> &'a [TokenId] {
    &ctx[ctx.len().saturating_sub(model.order())..]
}

/// Walks the tree, asking `choose` for the target's token at each accepted
/// prefix. Stops at the first token that labels no child, at EOS, or once
/// `max_emit` tokens are settled; the last chosen token is the bonus.
fn walk_tree<F>(
    target: &MarkovTargetModel,
    ctx: &[TokenId],
    tree: &DraftTree,
    max_emit: usize,
    mut choose: F,
) -> AcceptResult
where
    F: FnMut(&[TokenId]) -> TokenId,
{
    assert!(max_emit >= 1, "max_emit must be at least 1");
    let mut buf = context_tail(target, ctx).to_vec();
    let mut node = None;
    let mut accepted = Vec::new();
    loop {
        let t = choose(&buf);
        if accepted.len() + 1 == max_emit || Some(t) == target.eos() {
            return AcceptResult { accepted, bonus: t };
        }
        match tree.child_with_token(node, t) {
            Some(c) => {
                accepted.push(t);
                buf.push(t);
                node = Some(c);
            }
            None => return AcceptResult { accepted, bonus: t },
        }
    }
}

/// Greedy-match verification against the target argmax.
pub fn verify_greedy(
    target: &MarkovTargetModel,
    ctx: &[TokenId],
    tree: &DraftTree,
) -> AcceptResult {
    walk_tree(target, ctx, tree, usize::MAX, |c| target.argmax(c))
}

/// Tree verification where the target's token at each position is drawn
/// from its tempered distribution with one uniform from `rng`. The emitted
/// stream is exactly what [`generate_autoregressive`] would produce from the
/// same stream, at any temperature; at temperature 0 it is greedy matching.
///
/// [`generate_autoregressive`]: crate::target::generate_autoregressive
pub fn verify_tree_sampled(
    target: &MarkovTargetModel,
    ctx: &[TokenId],
    tree: &DraftTree,
    rng: &mut RngStream,
    max_emit: usize,
) -> AcceptResult {
    walk_tree(target, ctx, tree, max_emit, |c| {
        sample_token(target.target_next_dist(c), rng)
    })
}

/// Linear draft with the drafter distribution recorded at each position.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftChain {
    pub tokens: Vec<TokenId>,
    pub draft_dists: Vec<Distribution>,
}

impl DraftChain {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Deterministic proposals: each token is drafted with probability 1.
    pub fn deterministic(tokens: Vec<TokenId>, vocab: usize) -> Self {
        let draft_dists = tokens
            .iter()
            .map(|&t| Distribution::one_hot(vocab, t))
            .collect();
        Self {
            tokens,
            draft_dists,
        }
    }
}

/// Samples `depth` tokens from the drafter, feeding each back as context.
pub fn draft_chain_sampled<M>(
    drafter: &M,
    ctx: &[TokenId],
    depth: usize,
    rng: &mut RngStream,
) -> DraftChain
where
    M: NextTokenModel + ?Sized,
{
    let mut buf = ctx[ctx.len().saturating_sub(drafter.order())..].to_vec();
    let mut tokens = Vec::with_capacity(depth);
    let mut draft_dists = Vec::with_capacity(depth);
    for _ in 0..depth {
        let q = drafter.next_dist(&buf).into_owned();
        let t = sample_token(&q, rng);
        buf.push(t);
        tokens.push(t);
        draft_dists.push(q);
    }
    DraftChain {
        tokens,
        draft_dists,
    }
}

/// Residual `(p - q)^+`, renormalised. Falls back to `p` when the residual
/// has no mass, which only happens when `p` and `q` agree up to rounding.
pub fn residual(p: &Distribution, q: &Distribution) -> Distribution {
    let w: Vec<f64> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&a, &b)| (a - b).max(0.0))
        .collect();
    if w.iter().sum::<f64>() > 0.0 {
        Distribution::from_weights(w).expect("non-negative weights")
    } else {
        p.clone()
    }
}

/// Speculative sampling over a linear chain: accept `x` with probability
/// `min(1, p(x)/q(x))`, otherwise emit a draw from the residual and stop.
/// If every drafted token survives, the bonus is drawn from the target.
pub fn verify_stochastic(
    target: &MarkovTargetModel,
    ctx: &[TokenId],
    chain: &DraftChain,
    rng: &mut RngStream,
    max_emit: usize,
) -> AcceptResult {
    assert!(max_emit >= 1, "max_emit must be at least 1");
    let mut buf = context_tail(target, ctx).to_vec();
    let mut accepted = Vec::new();
    for (&x, q) in chain.tokens.iter().zip(&chain.draft_dists) {
        let p = target.target_next_dist(&buf);
        if accepted.len() + 1 == max_emit {
            return AcceptResult {
                accepted,
                bonus: sample_token(p, rng),
            };
        }
        let (px, qx) = (p.prob(x), q.prob(x));
        let u = rng.uniform();
        if qx > 0.0 && u * qx < px {
            if Some(x) == target.eos() {
                return AcceptResult { accepted, bonus: x };
            }
            accepted.push(x);
            buf.push(x);
        } else {
            return AcceptResult {
                accepted,
                bonus: sample_token(&residual(p, q), rng),
            };
        }
    }
    AcceptResult {
        accepted,
        bonus: sample_token(target.target_next_dist(&buf), rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::tree::{build_draft_tree, SpecStrategy};
    use crate::token::tokens;

    // Fixed 3-token model: after 0 the target prefers 2, after 2 it prefers
    // 0, after 1 it prefers 1.
    fn target() -> MarkovTargetModel {
        let rows = vec![
            (
                tokens(&[0]),
                Distribution::new(vec![0.1, 0.3, 0.6]).unwrap(),
            ),
            (
                tokens(&[1]),
                Distribution::new(vec![0.2, 0.7, 0.1]).unwrap(),
            ),
            (
                tokens(&[2]),
                Distribution::new(vec![0.5, 0.4, 0.1]).unwrap(),
            ),
        ];
        MarkovTargetModel::from_rows(3, 1, rows)
            .unwrap()
            .with_temperature(0.0)
            .unwrap()
    }

    #[test]
    fn matching_chain_is_fully_accepted() {
        let t = target();
        let tree = DraftTree::chain(&tokens(&[2, 0, 2]));
        let r = verify_greedy(&t, &tokens(&[0]), &tree);
        assert_eq!(r.accepted, tokens(&[2, 0, 2]));
        assert_eq!(r.bonus, TokenId(0));
    }

    #[test]
    fn root_mismatch_emits_only_bonus() {
        let t = target();
        let tree = DraftTree::chain(&tokens(&[1, 1]));
        let r = verify_greedy(&t, &tokens(&[0]), &tree);
        assert_eq!(r.accept_length(), 0);
        assert_eq!(r.total_emitted(), 1);
        assert_eq!(r.bonus, TokenId(2));
    }

    #[test]
    fn follows_second_ranked_child_then_diverges() {
        // Drafter prefers 1 then 2 after context 0; the target's argmax is 2.
        // Under 2 the drafted children are {1, 2}; the target wants 0.
        let drafter_rows = vec![
            (
                tokens(&[0]),
                Distribution::new(vec![0.1, 0.5, 0.4]).unwrap(),
            ),
            (
                tokens(&[1]),
                Distribution::new(vec![0.1, 0.5, 0.4]).unwrap(),
            ),
            (
                tokens(&[2]),
                Distribution::new(vec![0.1, 0.5, 0.4]).unwrap(),
            ),
        ];
        let drafter = MarkovTargetModel::from_rows(3, 1, drafter_rows).unwrap();
        let tree = build_draft_tree(
            &drafter,
            &tokens(&[0]),
            &SpecStrategy::new(2, 2, 6).unwrap(),
        );
        assert_eq!(tree.nodes()[0].token, TokenId(1));
        assert_eq!(tree.nodes()[1].token, TokenId(2));
        let r = verify_greedy(&target(), &tokens(&[0]), &tree);
        assert_eq!(r.accepted, tokens(&[2]));
        assert_eq!(r.bonus, TokenId(0));
    }

    #[test]
    fn sampled_walk_respects_cap() {
        let t = target();
        let tree = DraftTree::chain(&tokens(&[2, 0, 2]));
        let r = verify_tree_sampled(&t, &tokens(&[0]), &tree, &mut RngStream::new(0, 0), 2);
        assert_eq!(r.emitted(), tokens(&[2, 0]));
    }

    #[test]
    fn residual_of_equal_rows_falls_back() {
        let p = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(residual(&p, &p), p);
        let q = Distribution::one_hot(2, TokenId(0));
        assert_eq!(residual(&p, &q), Distribution::one_hot(2, TokenId(1)));
    }

    #[test]
    fn identical_draft_is_always_accepted() {
        let row = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let t = MarkovTargetModel::from_rows(3, 0, vec![(vec![], row.clone())]).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..200 {
            let chain = draft_chain_sampled(&t, &[], 4, &mut rng);
            let r = verify_stochastic(&t, &[], &chain, &mut rng, usize::MAX);
            assert_eq!(r.accept_length(), 4);
        }
    }

    #[test]
    fn impossible_draft_is_rejected_immediately() {
        let row = Distribution::new(vec![0.0, 0.4, 0.6]).unwrap();
        let t = MarkovTargetModel::from_rows(3, 0, vec![(vec![], row)]).unwrap();
        let chain = DraftChain::deterministic(tokens(&[0, 0]), 3);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..50 {
            let r = verify_stochastic(&t, &[], &chain, &mut rng, usize::MAX);
            assert_eq!(r.accept_length(), 0);
            assert_ne!(r.bonus, TokenId(0));
        }
    }
}
