mod common;

use proptest::prelude::*;
use tailspec::spot::{first_fit_decreasing, pack_sequences};
use tailspec::token::TokenId;

proptest! {
    #[test]
    fn packs_keep_every_token_and_respect_capacity(
        capacity in 1usize..64,
        lengths in prop::collection::vec(0usize..80, 0..30),
    ) {
        let seqs: Vec<Vec<TokenId>> = lengths
            .iter()
            .enumerate()
            .map(|(i, &l)| (0..l).map(|j| TokenId((i * 100 + j) as u32)).collect())
            .collect();
        let p = pack_sequences(&seqs, capacity);
        prop_assert!(p.packs().iter().all(|x| !x.is_empty() && x.len() <= capacity));
        let mut got: Vec<Vec<TokenId>> = p.members().map(<[TokenId]>::to_vec).collect();
        let mut want: Vec<Vec<TokenId>> = seqs
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s[..s.len().min(capacity)].to_vec())
            .collect();
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn ffd_within_eleven_ninths_of_optimum(
        capacity in 5usize..40,
        raw in prop::collection::vec(1usize..40, 1..9),
    ) {
        let lengths: Vec<usize> = raw.into_iter().map(|l| l.min(capacity)).collect();
        let ffd = first_fit_decreasing(&lengths, capacity).len();
        let opt = common::optimal_bins(&lengths, capacity);
        prop_assert!(opt <= ffd);
        prop_assert!(9 * ffd <= 11 * opt + 9, "ffd {} opt {}", ffd, opt);
    }
}

#[test]
fn optimum_oracle_on_known_instances() {
    assert_eq!(common::optimal_bins(&[5, 5, 5, 5], 10), 2);
    assert_eq!(common::optimal_bins(&[6, 6, 6], 10), 3);
    // FFD needs 3 bins here, the optimum is 2.
    let l = [4, 4, 3, 3, 3, 3];
    assert_eq!(common::optimal_bins(&l, 10), 2);
    assert_eq!(first_fit_decreasing(&l, 10).len(), 3);
}
