//! Cell arithmetic, random placement and simultaneous move resolution.

use rand::seq::index;
use rand::Rng;

use crate::error::{EnvError, Result};

pub type Cell = (i64, i64);

/// Unit moves for actions 0..4: up (+y), down, left, right.
pub const MOVES: [Cell; 4] = [(0, 1), (0, -1), (-1, 0), (1, 0)];

pub fn offset(c: Cell, d: Cell) -> Cell {
    (c.0 + d.0, c.1 + d.1)
}

pub fn manhattan(a: Cell, b: Cell) -> i64 {
    (a.0 - b.0).abs() + (a.1 - b.1).abs()
}

pub fn in_bounds(c: Cell, width: usize, height: usize) -> bool {
    c.0 >= 0 && c.1 >= 0 && (c.0 as usize) < width && (c.1 as usize) < height
}

/// `n` distinct cells, uniformly at random.
pub fn sample_cells<R: Rng + ?Sized>(
    rng: &mut R,
    env: &'static str,
    width: usize,
    height: usize,
    n: usize,
) -> Result<Vec<Cell>> {
    let cells = width * height;
    if n > cells {
        return Err(EnvError::Crowded { env, needed: n, cells });
    }
    Ok(index::sample(rng, cells, n)
        .into_iter()
        .map(|i| ((i % width) as i64, (i / width) as i64))
        .collect())
}

/// A uniformly random cell for which `free` holds, if any.
pub fn random_free_cell<R: Rng + ?Sized>(
    rng: &mut R,
    width: usize,
    height: usize,
    free: impl Fn(Cell) -> bool,
) -> Option<Cell> {
    let cells: Vec<Cell> = (0..(width * height) as i64)
        .map(|i| (i % width as i64, i / width as i64))
        .filter(|&c| free(c))
        .collect();
    (!cells.is_empty()).then(|| cells[rng.gen_range(0..cells.len())])
}

/// Resolves simultaneous moves. Off-grid or blocked targets become stays;
/// then any mover whose target is claimed by another mover, occupied by a
/// staying agent, or swapped with its occupant is cancelled, until stable.
/// Cancellations within a round are simultaneous, so the result does not
/// depend on agent order.
pub fn resolve_moves(
    current: &[Cell],
    desired: &[Cell],
    width: usize,
    height: usize,
    blocked: impl Fn(Cell) -> bool,
) -> Vec<Cell> {
    let mut target: Vec<Cell> = current
        .iter()
        .zip(desired)
        .map(|(&c, &d)| if d != c && in_bounds(d, width, height) && !blocked(d) { d } else { c })
        .collect();
    loop {
        let cancel: Vec<bool> = (0..current.len())
            .map(|i| {
                target[i] != current[i]
                    && (0..current.len()).any(|j| {
                        j != i && (target[j] == target[i] || (target[j] == current[i] && current[j] == target[i]))
                    })
            })
            .collect();
        if !cancel.contains(&true) {
            return target;
        }
        for (i, c) in cancel.into_iter().enumerate() {
            if c {
                target[i] = current[i];
            }
        }
    }
}

/// Reorders entity blocks for agent `me`: its own block first, then the
/// other agents in index order, then every non-agent block. Sets the
/// `self_flag` column of its own block.
pub fn egocentric(blocks: &[Vec<f64>], agents: usize, me: usize, self_flag: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(blocks.iter().map(Vec::len).sum());
    let mut own = blocks[me].clone();
    own[self_flag] = 1.0;
    out.extend(own);
    for (j, b) in blocks.iter().enumerate() {
        if j != me || j >= agents {
            out.extend_from_slice(b);
        }
    }
    out
}
