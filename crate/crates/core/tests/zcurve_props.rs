use proptest::prelude::*;
use vorx::zcurve::{deinterleave, interleave, KeyRange, MortonGrid, MortonKey, SearchExtent};

fn cells_of(ranges: &[KeyRange]) -> Vec<u64> {
    ranges.iter().flat_map(|r| r.lo.0..=r.hi.0).collect()
}

fn extent_keys(e: &SearchExtent) -> Vec<u64> {
    let mut v: Vec<u64> = (e.ix_min..=e.ix_max)
        .flat_map(|x| (e.iy_min..=e.iy_max).map(move |y| interleave(x, y)))
        .collect();
    v.sort_unstable();
    v
}

#[test]
fn corner_keys_match_full_scan_on_small_extents() {
    let g = MortonGrid::new(4).unwrap();
    for x0 in 0..16 {
        for y0 in 0..16 {
            for x1 in x0..16 {
                for y1 in y0..16 {
                    let e = SearchExtent::new(x0, y0, x1, y1).unwrap();
                    let keys = extent_keys(&e);
                    let (lo, hi) = g.range_min_max_keys(&e).unwrap();
                    assert_eq!((lo.0, hi.0), (keys[0], *keys.last().unwrap()));
                }
            }
        }
    }
}

#[test]
fn six_bit_random_extents_decompose_exactly() {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let g = MortonGrid::new(6).unwrap();
    for _ in 0..1000 {
        let (a, b) = (r.random_range(0..64u32), r.random_range(0..64u32));
        let (c, d) = (r.random_range(0..64u32), r.random_range(0..64u32));
        let e = SearchExtent::new(a.min(b), c.min(d), a.max(b), c.max(d)).unwrap();
        let ranges = g.decompose(&e, usize::MAX).unwrap();
        assert!(ranges.windows(2).all(|w| w[0].hi < w[1].lo));
        assert_eq!(cells_of(&ranges), extent_keys(&e), "{e:?}");
    }
}

#[test]
fn encode_is_monotone_per_axis() {
    let g = MortonGrid::new(5).unwrap();
    for x in 0..31u64 {
        for y in 0..32u64 {
            assert!(g.encode(x, y).unwrap() < g.encode(x + 1, y).unwrap());
            assert!(g.encode(y, x).unwrap() < g.encode(y, x + 1).unwrap());
        }
    }
}

#[test]
fn full_width_round_trip() {
    let g = MortonGrid::new(32).unwrap();
    for (x, y) in [
        (0u32, 0u32),
        (u32::MAX, u32::MAX),
        (u32::MAX, 0),
        (0x8000_0001, 0x7fff_fffe),
    ] {
        let k = g.encode(x as u64, y as u64).unwrap();
        assert_eq!(g.decode(k).unwrap(), (x, y));
    }
    assert_eq!(g.max_key(), MortonKey(u64::MAX));
    assert!(g.encode(1 << 32, 0).is_err());
}

/// On a 3-bit grid: every extent decomposes to exactly its cells, the two
/// halves of every split reunite to the parent, and the starting range holds
/// the extent.
#[test]
fn exhaustive_small_grid() {
    let g = MortonGrid::new(3).unwrap();
    for x0 in 0..8 {
        for y0 in 0..8 {
            for x1 in x0..8 {
                for y1 in y0..8 {
                    let e = SearchExtent::new(x0, y0, x1, y1).unwrap();
                    let want = extent_keys(&e);
                    let d = g.decompose_with_stats(&e, usize::MAX).unwrap();
                    assert_eq!(cells_of(&d.ranges), want, "{e:?}");
                    assert!(d.ranges.windows(2).all(|w| w[0].hi.0 + 1 < w[1].lo.0));
                    let bound = 2 * d.start_free_bits as usize * d.ranges.len();
                    assert!(d.splits <= bound, "{e:?}: {} > {bound}", d.splits);

                    let s = g.starting_extent(&e).unwrap();
                    assert!(want.iter().all(|&k| s.contains(MortonKey(k))));
                    if s.lo != s.hi {
                        let (a, b) = g.split_subquery(&s).unwrap();
                        assert_eq!(a.lo, s.lo);
                        assert_eq!(b.hi, s.hi);
                        assert_eq!(a.hi.0 + 1, b.lo.0);
                        assert_eq!(a.key_count(), b.key_count());
                    }

                    for cap in [1usize, 2, 3] {
                        let r = g.decompose(&e, cap).unwrap();
                        let got = cells_of(&r);
                        assert!(
                            want.iter().all(|k| got.binary_search(k).is_ok()),
                            "{e:?} cap {cap}"
                        );
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn interleave_round_trips(x in any::<u32>(), y in any::<u32>()) {
        prop_assert_eq!(deinterleave(interleave(x, y)), (x, y));
    }

    #[test]
    fn decompose_exact_on_ten_bit_grid(
        a in 0u32..1024, c in 0u32..1024, w in 0u32..40, h in 0u32..40,
    ) {
        let g = MortonGrid::new(10).unwrap();
        let x0 = a.min(1023 - w);
        let y0 = c.min(1023 - h);
        let e = SearchExtent::new(x0, y0, x0 + w, y0 + h).unwrap();
        let r = g.decompose(&e, usize::MAX).unwrap();
        prop_assert_eq!(cells_of(&r), extent_keys(&e));
    }

    #[test]
    fn capped_decompose_respects_budget_and_covers(
        a in 0u32..256, c in 0u32..256, w in 0u32..60, h in 0u32..60, cap in 1usize..12,
    ) {
        let g = MortonGrid::new(8).unwrap();
        let x0 = a.min(255 - w);
        let y0 = c.min(255 - h);
        let e = SearchExtent::new(x0, y0, x0 + w, y0 + h).unwrap();
        let r = g.decompose(&e, cap).unwrap();
        prop_assert!(r.len() <= cap);
        let got = cells_of(&r);
        for k in extent_keys(&e) {
            prop_assert!(got.binary_search(&k).is_ok());
        }
    }
}
