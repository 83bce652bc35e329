//! Dense simplex method for small symmetric matrix games.

/// Optimal strategy of the minimizing player in the zero-sum game with
/// payoff matrix `b` (rows: maximizer's actions), by the textbook LP
/// `max 1^T y  s.t.  M y <= 1, y >= 0` with `M = b + shift > 0`.
///
/// Bland's rule keeps the pivot sequence deterministic and cycle free.
/// For a symmetric game (`b + b^T = 1`) the returned strategy is also
/// optimal for the maximizer.
pub fn min_player_strategy(b: &[Vec<f64>]) -> (Vec<f64>, usize) {
    let k = b.len();
    let lowest = b
        .iter()
        .flat_map(|r| r.iter().cloned())
        .fold(f64::INFINITY, f64::min);
    let shift = 1.0 - lowest;
    let cols = 2 * k;
    // tableau rows: constraints; last row: objective (reduced costs)
    let mut t = vec![vec![0.0; cols + 1]; k + 1];
    for i in 0..k {
        for j in 0..k {
            t[i][j] = b[i][j] + shift;
        }
        t[i][k + i] = 1.0;
        t[i][cols] = 1.0;
    }
    for j in 0..k {
        t[k][j] = 1.0;
    }
    let mut basis: Vec<usize> = (k..cols).collect();
    let eps = 1e-12;
    let mut pivots = 0;
    loop {
        let Some(enter) = (0..cols).find(|&j| t[k][j] > eps) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..k {
            if t[i][enter] > eps {
                let ratio = t[i][cols] / t[i][enter];
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best_ratio - 1e-15
                            || (ratio <= best_ratio + 1e-15 && basis[i] < basis[l])
                    }
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        // M > 0 keeps the feasible set bounded, so a leaving row exists
        let Some(r) = leave else { break };
        let piv = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= piv;
        }
        for i in 0..=k {
            if i != r {
                let f = t[i][enter];
                if f != 0.0 {
                    for j in 0..=cols {
                        t[i][j] -= f * t[r][j];
                    }
                }
            }
        }
        basis[r] = enter;
        pivots += 1;
        if pivots > 50 * (k + 1) * (k + 1) {
            break;
        }
    }
    let mut y = vec![0.0; k];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < k {
            y[bv] = t[i][cols].max(0.0);
        }
    }
    let s: f64 = y.iter().sum();
    if s > 0.0 {
        y.iter_mut().for_each(|v| *v /= s);
    } else {
        y = vec![1.0 / k as f64; k];
    }
    (y, pivots)
}
