mod common;

use std::io::Cursor;

use cfaudit::ingest::{
    filter_top_items, parse_explicit_ratings, play_count_rating, plays_to_ratings, read_canonical,
    split_holdout, write_canonical, DuplicatePolicy, PlayRecord, MIN_RATINGS_FOR_HOLDOUT,
};
use proptest::prelude::*;

#[test]
fn top_items_filter_matches_counting_oracle() {
    let ds = common::noisy(40, 30, 0.25, 3);
    for k in [1, 5, 12, 30, 100] {
        let filtered = filter_top_items(&ds, k).unwrap();
        // oracle: count by hand, pick k largest with ties to lower index
        let mut counts = vec![0usize; ds.n_items()];
        for r in ds.ratings() {
            counts[r.item] += 1;
        }
        let mut chosen: Vec<usize> = Vec::new();
        let mut used = vec![false; ds.n_items()];
        for _ in 0..k.min(ds.n_items()) {
            let mut best = None;
            for i in 0..ds.n_items() {
                if !used[i] && best.is_none_or(|b: usize| counts[i] > counts[b]) {
                    best = Some(i);
                }
            }
            used[best.unwrap()] = true;
            chosen.push(best.unwrap());
        }
        chosen.sort_unstable();
        let ids: Vec<&str> = chosen.iter().map(|&i| ds.item_ids()[i].as_str()).collect();
        assert_eq!(filtered.item_ids().iter().map(String::as_str).collect::<Vec<_>>(), ids);
        let kept: usize = chosen.iter().map(|&i| counts[i]).sum();
        assert_eq!(filtered.len(), kept);
        // every surviving user has a rating
        for u in 0..filtered.n_users() {
            assert!(!filtered.user_row(u).is_empty());
        }
    }
}

#[test]
fn canonical_round_trip_preserves_values() {
    let ds = common::noisy(12, 9, 0.5, 8);
    let mut buf = Vec::new();
    write_canonical(&ds, &mut buf).unwrap();
    let back = read_canonical(Cursor::new(buf), Some(ds.scale())).unwrap();
    assert_eq!(back.ratings(), ds.ratings());
}

#[test]
fn corrupt_line_reports_line_number() {
    let text = "a,x,4\nb,y,5\nc,z,notanumber\n";
    let err = parse_explicit_ratings(Cursor::new(text), ",", DuplicatePolicy::Error).unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
}

#[test]
fn aggregated_plays_hit_both_ends_of_the_scale() {
    let recs = vec![
        PlayRecord { user: "u".into(), item: "a".into(), count: 3 },
        PlayRecord { user: "u".into(), item: "a".into(), count: 7 },
        PlayRecord { user: "v".into(), item: "b".into(), count: 10 },
        PlayRecord { user: "v".into(), item: "c".into(), count: 1 },
    ];
    let ds = plays_to_ratings(&recs).unwrap();
    assert_eq!(ds.rating(0, 0), Some(5.0));
    assert_eq!(ds.rating(1, 1), Some(5.0));
    let low = ds.rating(1, 2).unwrap();
    assert!((low - (1.0 + 4.0 * 2f64.ln() / 11f64.ln())).abs() < 1e-12);
}

proptest! {
    #[test]
    fn split_sizes_follow_the_rule(seed in 0u64..5000, frac in 0.05f64..0.95) {
        let ds = common::noisy(25, 20, 0.35, seed);
        let (train, test) = split_holdout(&ds, frac, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), ds.len());
        for u in 0..ds.n_users() {
            let n = ds.user_row(u).len();
            let expect = if n < MIN_RATINGS_FOR_HOLDOUT { 0 } else { ((frac * n as f64).round() as usize).min(n - 1) };
            prop_assert_eq!(test.user_row(u).len(), expect);
            // disjoint and covering
            for &(i, v) in ds.user_row(u) {
                let in_train = train.rating(u, i);
                let in_test = test.rating(u, i);
                prop_assert!(in_train.is_some() != in_test.is_some());
                prop_assert_eq!(in_train.or(in_test), Some(v));
            }
        }
        let (train2, _) = split_holdout(&ds, frac, seed).unwrap();
        prop_assert_eq!(train.ratings(), train2.ratings());
    }

    #[test]
    fn play_count_rating_is_monotone_and_bounded(a in 1u64..10_000, b in 1u64..10_000, extra in 0u64..10_000) {
        let cmax = a.max(b) + extra;
        let (ra, rb) = (play_count_rating(a, cmax), play_count_rating(b, cmax));
        prop_assert!((1.0..=5.0).contains(&ra));
        if a < b {
            prop_assert!(ra < rb);
        }
        prop_assert!((play_count_rating(cmax, cmax) - 5.0).abs() < 1e-12);
    }
}
