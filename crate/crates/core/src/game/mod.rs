//! Two-player zero-sum matrix games: values, optimal mixed strategies and
//! equilibrium checks.
//!
//! The row player picks a mixed strategy `y` and maximizes `y' C z`; the
//! column player picks `z` and minimizes it. Both values come from the
//! column player's linear program: the minimax value directly on `C`, the
//! maximin value as the negated minimax value of `-C'`.

mod simplex;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Stage2Env;
use crate::error::{Error, Result};
use crate::learn::{mean_returns, PolicyParams};

/// Tolerance of every equilibrium assertion.
pub const EQUILIBRIUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    /// `payoff[i][j]`: row player's gain when row `i` meets column `j`.
    pub payoff: Vec<Vec<f64>>,
}

impl MatrixGame {
    pub fn new(payoff: Vec<Vec<f64>>) -> Result<Self> {
        let cols = payoff.first().map_or(0, Vec::len);
        if payoff.is_empty() || cols == 0 {
            return Err(Error::ShapeMismatch("game needs at least one row and one column".into()));
        }
        if payoff.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged payoff matrix".into()));
        }
        if payoff.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("payoff entries must be finite".into()));
        }
        Ok(Self { payoff })
    }

    pub fn rows(&self) -> usize {
        self.payoff.len()
    }

    pub fn cols(&self) -> usize {
        self.payoff[0].len()
    }

    /// `-C'`: the game seen from the column player.
    pub fn negated_transpose(&self) -> Self {
        let payoff = (0..self.cols())
            .map(|j| self.payoff.iter().map(|row| -row[j]).collect())
            .collect();
        Self { payoff }
    }

    /// `y' C z`.
    pub fn expected(&self, y: &[f64], z: &[f64]) -> f64 {
        self.payoff
            .iter()
            .zip(y)
            .map(|(row, yi)| yi * row.iter().zip(z).map(|(c, zj)| c * zj).sum::<f64>())
            .sum()
    }

    /// Row player's payoff of each pure row against `z`.
    pub fn row_payoffs(&self, z: &[f64]) -> Vec<f64> {
        self.payoff
            .iter()
            .map(|row| row.iter().zip(z).map(|(c, zj)| c * zj).sum())
            .collect()
    }

    /// Payoff of each pure column against `y`.
    pub fn col_payoffs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.cols())
            .map(|j| self.payoff.iter().zip(y).map(|(row, yi)| yi * row[j]).sum())
            .collect()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            payoff: self.payoff.iter().map(|r| r.iter().map(|v| v * k).collect()).collect(),
        }
    }
}

/// `min_z max_y y' C z` and an optimal `z`.
pub fn value_minimax(game: &MatrixGame) -> Result<(f64, Vec<f64>)> {
    let scale = game.payoff.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        let n = game.cols();
        let mut z = vec![0.0; n];
        z[0] = 1.0;
        return Ok((0.0, z));
    }
    // Entries in [-1, 1], then shifted to [1, 3] so the value is positive.
    let shifted: Vec<Vec<f64>> = game
        .payoff
        .iter()
        .map(|r| r.iter().map(|v| v / scale + 2.0).collect())
        .collect();
    let solution = simplex::maximize_packing(&shifted)?;
    let total: f64 = solution.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Lp("packing program returned a zero solution".into()));
    }
    let z: Vec<f64> = solution.iter().map(|w| w / total).collect();
    let value = (1.0 / total - 2.0) * scale;
    Ok((value, z))
}

/// `max_y min_z y' C z` and an optimal `y`.
pub fn value_maximin(game: &MatrixGame) -> Result<(f64, Vec<f64>)> {
    let (v, y) = value_minimax(&game.negated_transpose())?;
    Ok((-v, y))
}

fn on_simplex(p: &[f64], tol: f64) -> bool {
    p.iter().all(|&v| v >= -tol) && (p.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Checks `y' C z* <= y*' C z* <= y*' C z` against every pure `y` and `z`.
pub fn verify_saddle(game: &MatrixGame, y: &[f64], z: &[f64], tol: f64) -> bool {
    if y.len() != game.rows() || z.len() != game.cols() || !on_simplex(y, tol) || !on_simplex(z, tol) {
        return false;
    }
    let v = game.expected(y, z);
    game.row_payoffs(z).iter().all(|&r| r <= v + tol) && game.col_payoffs(y).iter().all(|&c| c >= v - tol)
}

pub fn verify_weak_duality(game: &MatrixGame) -> Result<bool> {
    let (v1, _) = value_maximin(game)?;
    let (v2, _) = value_minimax(game)?;
    Ok(v1 <= v2 + EQUILIBRIUM_TOL)
}

pub fn verify_minimax_theorem(game: &MatrixGame, tol: f64) -> Result<bool> {
    let (v1, _) = value_maximin(game)?;
    let (v2, _) = value_minimax(game)?;
    Ok((v1 - v2).abs() <= tol)
}

/// One line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameCheck {
    pub game_id: usize,
    pub rows: usize,
    pub cols: usize,
    pub v1: f64,
    pub v2: f64,
    pub gap: f64,
    pub weak_duality: bool,
    pub saddle: bool,
}

impl GameCheck {
    pub fn passed(&self) -> bool {
        self.weak_duality && self.saddle && self.gap <= EQUILIBRIUM_TOL
    }
}

pub fn check_game(game_id: usize, game: &MatrixGame) -> Result<GameCheck> {
    let (v1, y) = value_maximin(game)?;
    let (v2, z) = value_minimax(game)?;
    Ok(GameCheck {
        game_id,
        rows: game.rows(),
        cols: game.cols(),
        v1,
        v2,
        gap: (v1 - v2).abs(),
        weak_duality: v1 <= v2 + EQUILIBRIUM_TOL,
        saddle: verify_saddle(game, &y, &z, EQUILIBRIUM_TOL),
    })
}

/// Games with uniform entries in `[-1, 1]` and sizes up to `max_dim`.
pub fn random_games(count: usize, max_dim: usize, seed: u64) -> Vec<MatrixGame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let m = rng.gen_range(1..=max_dim);
            let n = rng.gen_range(1..=max_dim);
            MatrixGame {
                payoff: (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect(),
            }
        })
        .collect()
}

pub fn write_report_csv<W: Write>(checks: &[GameCheck], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["game_id", "rows", "cols", "v1", "v2", "gap", "weak_duality", "saddle"])?;
    for c in checks {
        w.write_record([
            c.game_id.to_string(),
            c.rows.to_string(),
            c.cols.to_string(),
            c.v1.to_string(),
            c.v2.to_string(),
            c.gap.to_string(),
            c.weak_duality.to_string(),
            c.saddle.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Payoff matrices from playing every protagonist against every adversary
/// over a fixed seed set: `(protagonist returns, adversary returns)`.
pub fn empirical_game(
    protagonists: &[PolicyParams],
    adversaries: &[PolicyParams],
    env: &Stage2Env,
    seeds: &[u64],
) -> Result<(MatrixGame, MatrixGame)> {
    if protagonists.len() < 2 || adversaries.len() < 2 {
        return Err(Error::InvalidConfig("empirical games need at least two snapshots per side".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("empirical games need at least one seed".into()));
    }
    let d = env.platform().satellites();
    let p_len = env.protagonist_state_len();
    let a_len = env.adversary_state_len();
    let p_classes = env.platform().env.max_copies as usize + 1;
    let a_classes = 2 * env.phi() as usize + 1;
    for p in protagonists {
        if p.input_len() != p_len || p.heads != d || p.classes != p_classes {
            return Err(Error::CheckpointMismatch("protagonist snapshot does not fit the environment".into()));
        }
    }
    for a in adversaries {
        if a.input_len() != a_len || a.heads != d || a.classes != a_classes {
            return Err(Error::CheckpointMismatch("adversary snapshot does not fit the environment".into()));
        }
    }
    let mut prot = Vec::with_capacity(protagonists.len());
    let mut adv = Vec::with_capacity(protagonists.len());
    for p in protagonists {
        let mut prow = Vec::with_capacity(adversaries.len());
        let mut arow = Vec::with_capacity(adversaries.len());
        for a in adversaries {
            let (rp, ra) = mean_returns(env, p, a, seeds)?;
            prow.push(rp);
            arow.push(ra);
        }
        prot.push(prow);
        adv.push(arow);
    }
    Ok((MatrixGame::new(prot)?, MatrixGame::new(adv)?))
}
