//! The canonical 128-feature manifest. The first ten entries are the
//! features reported with the reference study ordering; the remainder
//! enumerates amplitudes, curvatures, slopes, latencies, and a fixed pool
//! of delay ratios in a deterministic order.

use super::grammar::{parse_feature, Delay, Feature};

/// Number of pulse-morphology features in the manifest.
pub const MANIFEST_LEN: usize = 128;

/// Headline features, in reporting order.
pub const HEADLINE_FEATURES: [&str; 10] = [
    "RLp1v2Lp1p2",
    "RLTLp1p3",
    "RLTLv1p2",
    "RLTLp1p2",
    "RLTLv1p3",
    "Lv1p3",
    "LT",
    "RLTLp2p3",
    "RLTLv2p2",
    "RLv1p1Lv1p3",
];

/// Ordered delay pairs eligible as ratios: either delay is `LT`, or the two
/// latencies share a landmark. Pairs are ordered by (numerator, denominator)
/// canonical delay index.
fn ratio_pool() -> Vec<(Delay, Delay)> {
    let delays = Delay::all();
    let mut pool = Vec::new();
    for &a in &delays {
        for &b in &delays {
            if a == b {
                continue;
            }
            let eligible = a == Delay::Lt
                || b == Delay::Lt
                || a.endpoints().iter().any(|l| b.endpoints().contains(l));
            if eligible {
                pool.push((a, b));
            }
        }
    }
    pool
}

/// Build the manifest: 128 unique feature names.
///
/// Layout: the 10 headline features, 6 landmark amplitudes, 6 landmark
/// curvatures, MAC, 3 slopes, the 14 latencies not already listed, then
/// ratio-pool entries (skipping headline duplicates) up to 128.
pub fn feature_manifest() -> Vec<Feature> {
    let headline: Vec<Feature> = HEADLINE_FEATURES
        .iter()
        .map(|name| parse_feature(name).expect("headline feature"))
        .collect();
    let mut out = headline.clone();

    for l in super::grammar::Landmark::ALL {
        out.push(Feature::Amplitude(l));
    }
    for l in super::grammar::Landmark::ALL {
        out.push(Feature::Curvature(l));
    }
    out.push(Feature::Mac);
    for k in 1..=3 {
        out.push(Feature::Slope(k));
    }
    for d in Delay::all() {
        let f = Feature::Delay(d);
        if !headline.contains(&f) {
            out.push(f);
        }
    }
    for (a, b) in ratio_pool() {
        if out.len() == MANIFEST_LEN {
            break;
        }
        let f = Feature::Ratio(a, b);
        if !headline.contains(&f) {
            out.push(f);
        }
    }
    debug_assert_eq!(out.len(), MANIFEST_LEN);
    out
}

/// Manifest entries as their canonical names.
pub fn feature_manifest_names() -> Vec<String> {
    feature_manifest().iter().map(|f| f.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn manifest_has_128_unique_parseable_names() {
        let names = feature_manifest_names();
        assert_eq!(names.len(), MANIFEST_LEN);
        let set: HashSet<&String> = names.iter().collect();
        assert_eq!(set.len(), MANIFEST_LEN, "duplicate names");
        for name in &names {
            let f = parse_feature(name).unwrap();
            assert_eq!(f.to_string(), *name);
        }
    }

    #[test]
    fn headline_block_leads_and_lt_sits_at_index_6() {
        let names = feature_manifest_names();
        assert_eq!(&names[..10], &HEADLINE_FEATURES);
        assert_eq!(names[6], "LT");
    }

    #[test]
    fn fixed_blocks_follow_headline() {
        let names = feature_manifest_names();
        assert_eq!(
            &names[10..16],
            &["dVv1", "dVp1", "dVv2", "dVp2", "dVv3", "dVp3"]
        );
        assert_eq!(&names[16..22], &["Kv1", "Kp1", "Kv2", "Kp2", "Kv3", "Kp3"]);
        assert_eq!(&names[22..26], &["MAC", "S1", "S2", "S3"]);
        // 14 latencies: all 15 pairs except Lv1p3, which is a headline entry.
        let latencies = &names[26..40];
        assert_eq!(latencies[0], "Lv1p1");
        assert!(!latencies.contains(&"Lv1p3".to_string()));
        assert!(latencies.iter().all(|n| n.starts_with('L') && n != "LT"));
        // Everything after is a ratio.
        assert!(names[40..].iter().all(|n| n.starts_with('R')));
        assert_eq!(names[40..].len(), 88);
    }

    #[test]
    fn ratio_pool_is_the_expected_size_and_order() {
        let pool = ratio_pool();
        // 30 ordered pairs involving LT plus 120 ordered latency pairs that
        // share a landmark.
        assert_eq!(pool.len(), 150);
        for w in pool.windows(2) {
            let ka = (w[0].0.index(), w[0].1.index());
            let kb = (w[1].0.index(), w[1].1.index());
            assert!(ka < kb, "pool out of order");
        }
        let lt_pairs = pool
            .iter()
            .filter(|(a, b)| *a == Delay::Lt || *b == Delay::Lt)
            .count();
        assert_eq!(lt_pairs, 30);
    }
}
