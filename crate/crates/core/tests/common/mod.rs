#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vorx::geometry::{BoundingBox, Site};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn world() -> BoundingBox {
    BoundingBox::from_coords(0.0, 0.0, 1000.0, 1000.0).unwrap()
}

/// `n` distinct sites strictly inside `b`.
pub fn random_sites<R: Rng>(rng: &mut R, n: usize, b: &BoundingBox) -> Vec<Site> {
    let mut out: Vec<Site> = Vec::with_capacity(n);
    while out.len() < n {
        let x = rng.random_range(b.min.x..b.max.x);
        let y = rng.random_range(b.min.y..b.max.y);
        if x <= b.min.x || y <= b.min.y {
            continue;
        }
        if out.iter().any(|s| s.position.x == x && s.position.y == y) {
            continue;
        }
        out.push(Site::new(out.len() as u32, x, y));
    }
    out
}

/// Distance from `q` to the bisector of its nearest and second-nearest site.
pub fn bisector_margin(sites: &[Site], q: vorx::geometry::Point) -> f64 {
    let mut best = (f64::INFINITY, 0usize);
    let mut second = (f64::INFINITY, 0usize);
    for (i, s) in sites.iter().enumerate() {
        let d = s.position.dist2(q);
        if d < best.0 {
            second = best;
            best = (d, i);
        } else if d < second.0 {
            second = (d, i);
        }
    }
    if second.0.is_infinite() {
        return f64::INFINITY;
    }
    let sep = sites[best.1].position.dist(sites[second.1].position);
    (second.0 - best.0) / (2.0 * sep)
}
