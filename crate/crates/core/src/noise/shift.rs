use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RefMap, VOID};

/// Compass direction the map content moves towards. North is row 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    N,
    Ne,
    E,
    Se,
    S,
    Sw,
    W,
    Nw,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::Ne,
        Direction::E,
        Direction::Se,
        Direction::S,
        Direction::Sw,
        Direction::W,
        Direction::Nw,
    ];

    /// Unit step as `(d_row, d_col)`.
    pub fn step(self) -> (isize, isize) {
        match self {
            Direction::N => (-1, 0),
            Direction::Ne => (-1, 1),
            Direction::E => (0, 1),
            Direction::Se => (1, 1),
            Direction::S => (1, 0),
            Direction::Sw => (1, -1),
            Direction::W => (0, -1),
            Direction::Nw => (-1, -1),
        }
    }
}

/// Translates `map` by `shift` pixels towards `direction`; uncovered pixels
/// become void.
pub fn shift_map(map: &RefMap, direction: Direction, shift: usize) -> RefMap {
    let (h, w) = (map.height() as isize, map.width() as isize);
    let (dr, dc) = direction.step();
    let (dr, dc) = (dr * shift as isize, dc * shift as isize);
    let mut out = RefMap::filled(map.height(), map.width(), VOID);
    for r in 0..h {
        let src_r = r - dr;
        if !(0..h).contains(&src_r) {
            continue;
        }
        for c in 0..w {
            let src_c = c - dc;
            if (0..w).contains(&src_c) {
                out.set(r as usize, c as usize, map.get(src_r as usize, src_c as usize));
            }
        }
    }
    out
}

/// Shifts by a uniform `1..=max_shift` pixels in one of eight uniform
/// directions.
pub fn mask_shift<R: Rng + ?Sized>(map: &RefMap, max_shift: usize, rng: &mut R) -> Result<(RefMap, Direction, usize)> {
    if max_shift == 0 || max_shift >= map.height().min(map.width()) {
        return Err(Error::Noise(format!(
            "max shift {max_shift} must be in [1, {})",
            map.height().min(map.width())
        )));
    }
    let direction = Direction::ALL[rng.random_range(0..8u32) as usize];
    let shift = rng.random_range(1..=max_shift as u32) as usize;
    Ok((shift_map(map, direction, shift), direction, shift))
}

/// Nearest-neighbor downsampling by `factor` followed by nearest-neighbor
/// upsampling to the original size. Every `factor x factor` block takes the
/// value of its top-left pixel.
pub fn rectify_borders(map: &RefMap, factor: usize) -> Result<RefMap> {
    let (h, w) = (map.height(), map.width());
    if factor == 0 || factor > h.min(w) {
        return Err(Error::Noise(format!("downsample factor {factor} must be in [1, {}]", h.min(w))));
    }
    let (sh, sw) = (h.div_ceil(factor), w.div_ceil(factor));
    let mut small = vec![VOID; sh * sw];
    for (i, v) in small.iter_mut().enumerate() {
        *v = map.get((i / sw) * factor, (i % sw) * factor);
    }
    let mut out = RefMap::filled(h, w, VOID);
    for r in 0..h {
        for c in 0..w {
            out.set(r, c, small[(r / factor) * sw + c / factor]);
        }
    }
    Ok(out)
}
