//! Two-class Yin-Yang dataset on the unit square.
//!
//! The symbol is a circle of radius 0.5 centred at (0.5, 0.5), split by an
//! S-curve made of two half-circles of radius 0.25 centred at (0.5, 0.25) and
//! (0.5, 0.75). The two dots (radius 0.1, same centres) are left empty.

use rand::Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::seed;

pub const YIN: usize = 0;
pub const YANG: usize = 1;

const CENTER: (f64, f64) = (0.5, 0.5);
const R_BIG: f64 = 0.5;
const R_SMALL: f64 = 0.1;
const LOWER: (f64, f64) = (0.5, 0.25);
const UPPER: (f64, f64) = (0.5, 0.75);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YinYangRegion {
    Outside,
    Dot,
    Class(usize),
}

fn dist(p: (f64, f64), c: (f64, f64)) -> f64 {
    (p.0 - c.0).hypot(p.1 - c.1)
}

/// Region of a point; deterministic in its coordinates.
pub fn yinyang_class(x: f64, y: f64) -> YinYangRegion {
    let p = (x, y);
    if dist(p, CENTER) > R_BIG {
        return YinYangRegion::Outside;
    }
    let d_low = dist(p, LOWER);
    let d_up = dist(p, UPPER);
    if d_low <= R_SMALL || d_up <= R_SMALL {
        return YinYangRegion::Dot;
    }
    let half = 0.5 * R_BIG;
    if d_low <= half || (x > 0.5 && d_up > half) {
        YinYangRegion::Class(YANG)
    } else {
        YinYangRegion::Class(YIN)
    }
}

/// `n` points, classes alternating so that `|n_yin − n_yang| ≤ 1`.
pub fn generate_yinyang(n: usize, seed_value: u64) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("yin-yang sample count must be positive".into()));
    }
    let mut rng = seed::rng(seed_value);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let want = i % 2;
        loop {
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            if yinyang_class(x, y) == YinYangRegion::Class(want) {
                data.push(x);
                data.push(y);
                labels.push(want);
                break;
            }
        }
    }
    LabeledDataset::new(RealMatrix::from_vec(n, 2, data)?, labels, 2, "yinyang", seed_value)
}
