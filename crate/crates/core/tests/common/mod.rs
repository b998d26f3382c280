#![allow(dead_code)]

use rand::Rng;
use surfkit::dtm::BinaryMask;
use surfkit::volume::Grid3;

pub fn random_grid(rng: &mut impl Rng, max_side: usize) -> Grid3 {
    Grid3::new(
        [
            rng.random_range(1..=max_side),
            rng.random_range(1..=max_side),
            rng.random_range(1..=max_side),
        ],
        [
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
        ],
    )
    .unwrap()
}

/// Mixture of sparse noise, dense noise, boxes and the occasional empty or full mask.
pub fn random_mask(rng: &mut impl Rng, grid: Grid3) -> BinaryMask {
    let n = grid.len();
    let bits = match rng.random_range(0..10) {
        0 => vec![false; n],
        1 => vec![true; n],
        2..=4 => {
            let [sz, sy, sx] = grid.shape();
            let lo = [
                rng.random_range(0..sz),
                rng.random_range(0..sy),
                rng.random_range(0..sx),
            ];
            let hi = [
                rng.random_range(lo[0]..sz) + 1,
                rng.random_range(lo[1]..sy) + 1,
                rng.random_range(lo[2]..sx) + 1,
            ];
            (0..n)
                .map(|i| {
                    let c = grid.coords(i);
                    (0..3).all(|a| c[a] >= lo[a] && c[a] < hi[a])
                })
                .collect()
        }
        _ => {
            let density = rng.random_range(0.02..0.9);
            (0..n).map(|_| rng.random_bool(density)).collect()
        }
    };
    BinaryMask::new(grid, bits).unwrap()
}

pub fn non_empty_mask(rng: &mut impl Rng, grid: Grid3) -> BinaryMask {
    loop {
        let m = random_mask(rng, grid);
        if !m.is_empty() {
            return m;
        }
    }
}
