//! Exact solvers for finite two-player bimatrix games.
//!
//! A game is a pair of payoff matrices over joint pure actions, rows for the
//! leader and columns for the follower. The Stackelberg equilibrium is found
//! by bilevel enumeration: the follower best-responds to each leader action
//! and the leader picks the row whose best response pays it most. Pure Nash
//! equilibria are found by mutual best-response enumeration. All ties break
//! deterministically.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Deterministic tie-breaking rule for argmax scans.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum TieBreak {
    /// Keep the first (lowest-index) maximizer.
    #[default]
    LowestIndex,
    /// Keep the last (highest-index) maximizer.
    HighestIndex,
}

fn argmax(values: impl Iterator<Item = f64>, tie: TieBreak) -> usize {
    let mut best_idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        let better = match tie {
            TieBreak::LowestIndex => v > best,
            TieBreak::HighestIndex => v >= best,
        };
        if i == 0 || better {
            best = v;
            best_idx = i;
        }
    }
    best_idx
}

/// Payoff matrices for a finite two-player game. Entry `[r, c]` is the payoff
/// when the leader plays row `r` and the follower plays column `c`.
#[derive(Clone, Debug)]
pub struct BimatrixGame {
    u_leader: Array2<f64>,
    u_follower: Array2<f64>,
}

impl BimatrixGame {
    pub fn new(u_leader: Array2<f64>, u_follower: Array2<f64>) -> Result<BimatrixGame> {
        if u_leader.dim() != u_follower.dim() {
            return Err(Error::Shape(format!(
                "payoff matrices differ: {:?} vs {:?}",
                u_leader.dim(),
                u_follower.dim()
            )));
        }
        let (m, k) = u_leader.dim();
        if m == 0 || k == 0 {
            return Err(Error::Shape("payoff matrices must be non-empty".into()));
        }
        for &v in u_leader.iter().chain(u_follower.iter()) {
            if !v.is_finite() {
                return Err(Error::Validation(format!("non-finite payoff entry {v}")));
            }
        }
        Ok(BimatrixGame { u_leader, u_follower })
    }

    /// Build from row-major flat slices of length `m * k`.
    pub fn from_flat(m: usize, k: usize, flat_l: &[f64], flat_f: &[f64]) -> Result<BimatrixGame> {
        let shape = |flat: &[f64]| {
            Array2::from_shape_vec((m, k), flat.to_vec())
                .map_err(|e| Error::Shape(e.to_string()))
        };
        BimatrixGame::new(shape(flat_l)?, shape(flat_f)?)
    }

    /// Build from nested rows, handy in tests.
    pub fn from_rows(rows_l: &[&[f64]], rows_f: &[&[f64]]) -> Result<BimatrixGame> {
        let to_mat = |rows: &[&[f64]]| -> Result<Array2<f64>> {
            let m = rows.len();
            let k = rows.first().map_or(0, |r| r.len());
            let mut flat = Vec::with_capacity(m * k);
            for r in rows {
                if r.len() != k {
                    return Err(Error::Shape("ragged payoff rows".into()));
                }
                flat.extend_from_slice(r);
            }
            Array2::from_shape_vec((m, k), flat).map_err(|e| Error::Shape(e.to_string()))
        };
        BimatrixGame::new(to_mat(rows_l)?, to_mat(rows_f)?)
    }

    pub fn rows(&self) -> usize {
        self.u_leader.nrows()
    }

    pub fn cols(&self) -> usize {
        self.u_leader.ncols()
    }

    pub fn leader(&self) -> &Array2<f64> {
        &self.u_leader
    }

    pub fn follower(&self) -> &Array2<f64> {
        &self.u_follower
    }
}

/// The follower's payoff-maximizing column against a fixed leader row.
pub fn follower_best_response(game: &BimatrixGame, row: usize, tie: TieBreak) -> Result<usize> {
    if row >= game.rows() {
        return Err(Error::IndexOutOfRange(format!(
            "leader row {row} in a {}x{} game",
            game.rows(),
            game.cols()
        )));
    }
    Ok(argmax(game.u_follower.row(row).iter().copied(), tie))
}

/// Pure-strategy Stackelberg equilibrium by bilevel enumeration: the leader
/// commits to the row whose follower best response pays the leader most. One
/// always exists for a finite game.
pub fn stackelberg_equilibrium(game: &BimatrixGame, tie: TieBreak) -> (usize, usize) {
    let mut best_row = 0;
    let mut best_col = 0;
    let mut best_val = f64::NEG_INFINITY;
    for row in 0..game.rows() {
        let col = argmax(game.u_follower.row(row).iter().copied(), tie);
        let val = game.u_leader[[row, col]];
        let better = match tie {
            TieBreak::LowestIndex => val > best_val,
            TieBreak::HighestIndex => val >= best_val,
        };
        if row == 0 || better {
            best_val = val;
            best_row = row;
            best_col = col;
        }
    }
    (best_row, best_col)
}

/// Check the defining inequalities of a pure Stackelberg equilibrium: the
/// column best-responds to the row, and no leader deviation beats the row
/// when the follower best-responds under the same tie rule.
pub fn verify_stackelberg(game: &BimatrixGame, pair: (usize, usize), tie: TieBreak) -> Result<bool> {
    let (r, c) = pair;
    if r >= game.rows() || c >= game.cols() {
        return Err(Error::IndexOutOfRange(format!(
            "pair ({r},{c}) in a {}x{} game",
            game.rows(),
            game.cols()
        )));
    }
    let uf = game.u_follower.row(r);
    let follower_ok = uf.iter().all(|&v| game.u_follower[[r, c]] >= v);
    if !follower_ok {
        return Ok(false);
    }
    let leader_val = game.u_leader[[r, c]];
    for row in 0..game.rows() {
        let br = follower_best_response(game, row, tie)?;
        if game.u_leader[[row, br]] > leader_val {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All pure Nash equilibria: cells that are simultaneously a row maximum of
/// the follower payoff and a column maximum of the leader payoff, in
/// lexicographic (row, column) order.
pub fn pure_nash_equilibria(game: &BimatrixGame) -> Vec<(usize, usize)> {
    let mut row_max = vec![f64::NEG_INFINITY; game.rows()];
    let mut col_max = vec![f64::NEG_INFINITY; game.cols()];
    for r in 0..game.rows() {
        for c in 0..game.cols() {
            row_max[r] = row_max[r].max(game.u_follower[[r, c]]);
            col_max[c] = col_max[c].max(game.u_leader[[r, c]]);
        }
    }
    let mut out = Vec::new();
    for r in 0..game.rows() {
        for c in 0..game.cols() {
            if game.u_follower[[r, c]] == row_max[r] && game.u_leader[[r, c]] == col_max[c] {
                out.push((r, c));
            }
        }
    }
    out
}

/// Equilibrium selection among pure Nash candidates: maximize the payoff sum,
/// then lexicographic. Returns `None` when the list is empty.
pub fn select_preferred_nash(
    game: &BimatrixGame,
    candidates: &[(usize, usize)],
) -> Option<(usize, usize)> {
    candidates
        .iter()
        .copied()
        .max_by(|&(r1, c1), &(r2, c2)| {
            let s1 = game.u_leader[[r1, c1]] + game.u_follower[[r1, c1]];
            let s2 = game.u_leader[[r2, c2]] + game.u_follower[[r2, c2]];
            // Strictly-greater sum wins; on ties prefer the lexicographically
            // smaller pair, so reversed comparison on the index tuple.
            s1.partial_cmp(&s2)
                .unwrap()
                .then_with(|| (r2, c2).cmp(&(r1, c1)))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_game() -> BimatrixGame {
        BimatrixGame::from_rows(&[&[1.0, 0.0], &[2.0, -1.0]], &[&[0.0, 1.0], &[1.0, 0.0]])
            .unwrap()
    }

    #[test]
    fn best_response_examples() {
        let g = example_game();
        assert_eq!(follower_best_response(&g, 0, TieBreak::LowestIndex).unwrap(), 1);

        let zeros = BimatrixGame::from_rows(&[&[0.0, 0.0]], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(follower_best_response(&zeros, 0, TieBreak::LowestIndex).unwrap(), 0);
        assert_eq!(follower_best_response(&zeros, 0, TieBreak::HighestIndex).unwrap(), 1);

        let flat = BimatrixGame::from_rows(&[&[0.0, 0.0]], &[&[3.0, 3.0]]).unwrap();
        assert_eq!(follower_best_response(&flat, 0, TieBreak::LowestIndex).unwrap(), 0);

        assert!(follower_best_response(&g, 5, TieBreak::LowestIndex).is_err());
    }

    #[test]
    fn stackelberg_examples() {
        // Row 0's best response is column 1 (leader gets 0); row 1's is
        // column 0 (leader gets 2), so the leader commits to row 1.
        let g = example_game();
        assert_eq!(stackelberg_equilibrium(&g, TieBreak::LowestIndex), (1, 0));

        let zeros =
            BimatrixGame::from_rows(&[&[0.0, 0.0], &[0.0, 0.0]], &[&[0.0, 0.0], &[0.0, 0.0]])
                .unwrap();
        assert_eq!(stackelberg_equilibrium(&zeros, TieBreak::LowestIndex), (0, 0));

        let one = BimatrixGame::from_rows(&[&[5.0]], &[&[7.0]]).unwrap();
        assert_eq!(stackelberg_equilibrium(&one, TieBreak::LowestIndex), (0, 0));
    }

    #[test]
    fn verification_examples() {
        let g = example_game();
        assert!(verify_stackelberg(&g, (1, 0), TieBreak::LowestIndex).unwrap());
        assert!(!verify_stackelberg(&g, (0, 1), TieBreak::LowestIndex).unwrap());

        let zeros =
            BimatrixGame::from_rows(&[&[0.0, 0.0], &[0.0, 0.0]], &[&[0.0, 0.0], &[0.0, 0.0]])
                .unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!(verify_stackelberg(&zeros, (r, c), TieBreak::LowestIndex).unwrap());
            }
        }

        assert!(verify_stackelberg(&g, (9, 9), TieBreak::LowestIndex).is_err());
    }

    #[test]
    fn nash_examples() {
        let coord = BimatrixGame::from_rows(&[&[2.0, 0.0], &[0.0, 1.0]], &[&[2.0, 0.0], &[0.0, 1.0]])
            .unwrap();
        assert_eq!(pure_nash_equilibria(&coord), vec![(0, 0), (1, 1)]);

        let zeros =
            BimatrixGame::from_rows(&[&[0.0, 0.0], &[0.0, 0.0]], &[&[0.0, 0.0], &[0.0, 0.0]])
                .unwrap();
        assert_eq!(pure_nash_equilibria(&zeros), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);

        let pennies =
            BimatrixGame::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]], &[&[1.0, 0.0], &[0.0, 1.0]])
                .unwrap();
        assert_eq!(pure_nash_equilibria(&pennies), vec![]);
    }

    #[test]
    fn preferred_nash_maximizes_sum_then_lex() {
        let g = BimatrixGame::from_rows(&[&[2.0, 0.0], &[0.0, 3.0]], &[&[2.0, 0.0], &[0.0, 3.0]])
            .unwrap();
        let eq = pure_nash_equilibria(&g);
        assert_eq!(select_preferred_nash(&g, &eq), Some((1, 1)));

        let tie = BimatrixGame::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[1.0, 0.0], &[0.0, 1.0]])
            .unwrap();
        let eq = pure_nash_equilibria(&tie);
        assert_eq!(select_preferred_nash(&tie, &eq), Some((0, 0)));
        assert_eq!(select_preferred_nash(&tie, &[]), None);
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let err = BimatrixGame::from_rows(&[&[f64::NAN]], &[&[0.0]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    fn random_game(rng: &mut ChaCha8Rng) -> BimatrixGame {
        let m = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=6);
        let flat = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..m * k).map(|_| rng.gen_range(-10.0..10.0)).collect()
        };
        let l = flat(rng);
        let f = flat(rng);
        BimatrixGame::from_flat(m, k, &l, &f).unwrap()
    }

    #[test]
    fn thousand_random_games_pass_verification() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let g = random_game(&mut rng);
            for tie in [TieBreak::LowestIndex, TieBreak::HighestIndex] {
                let pair = stackelberg_equilibrium(&g, tie);
                assert!(verify_stackelberg(&g, pair, tie).unwrap(), "SE failed: {g:?}");
            }
        }
    }

    /// Independent cell-by-cell mutual best response oracle.
    fn nash_oracle(g: &BimatrixGame) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..g.rows() {
            for c in 0..g.cols() {
                let follower_happy =
                    (0..g.cols()).all(|c2| g.follower()[[r, c]] >= g.follower()[[r, c2]]);
                let leader_happy =
                    (0..g.rows()).all(|r2| g.leader()[[r, c]] >= g.leader()[[r2, c]]);
                if follower_happy && leader_happy {
                    out.push((r, c));
                }
            }
        }
        out
    }

    #[test]
    fn thousand_random_games_match_nash_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let g = random_game(&mut rng);
            assert_eq!(pure_nash_equilibria(&g), nash_oracle(&g));
        }
    }

    proptest! {
        /// Affine payoff changes never move the equilibrium.
        #[test]
        fn argmax_invariance(shift in -50.0f64..50.0, scale in 0.1f64..10.0, seed in 0u64..5000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_game(&mut rng);
            let transform = |m: &Array2<f64>| m.mapv(|v| v * scale + shift);
            let g2 = BimatrixGame::new(transform(g.leader()), transform(g.follower())).unwrap();
            for tie in [TieBreak::LowestIndex, TieBreak::HighestIndex] {
                prop_assert_eq!(stackelberg_equilibrium(&g, tie), stackelberg_equilibrium(&g2, tie));
            }
        }
    }
}
