use std::collections::BTreeMap;

use skdesign::infofield::{FieldVerdict, PlanKind};
use skdesign::search::*;
use Symbol::*;

fn names(r: &SearchReport) -> Vec<(String, bool)> {
    r.families.iter().map(|f| (f.name(), f.bottleneck)).collect()
}

#[test]
fn default_search_finds_the_four_families() {
    let r = run_search(&SearchConfig::default()).unwrap();
    assert_eq!(
        names(&r),
        vec![
            ("GC+PWG".to_string(), false),
            ("DW+PW".to_string(), false),
            ("PW+DW+PW".to_string(), true),
            ("PWG+DW+PWG".to_string(), true),
        ]
    );
    for f in &r.families {
        assert!(f.audit.all_kernels_contribute && f.audit.final_field_matches_reference);
        assert!(!f.witnesses.is_empty());
    }
}

#[test]
fn length_two_limit() {
    let cfg = SearchConfig {
        max_length: 2,
        ..SearchConfig::default()
    };
    let r = run_search(&cfg).unwrap();
    let mut n: Vec<_> = r.families.iter().map(DesignFamily::name).collect();
    n.sort();
    assert_eq!(n, vec!["DW+PW", "GC+PWG"]);
}

#[test]
fn zero_length_rejected() {
    let cfg = SearchConfig {
        max_length: 0,
        ..SearchConfig::default()
    };
    assert!(run_search(&cfg).is_err());
    let cfg = SearchConfig {
        max_length: 7,
        ..SearchConfig::default()
    };
    assert!(run_search(&cfg).is_err());
}

#[test]
fn divisor_rich_widths_keep_the_four() {
    for c in [32, 36, 48, 64, 96] {
        let r = run_search(&SearchConfig::with_channels(c, c)).unwrap();
        let got: Vec<_> = r.families.iter().map(|f| f.multiset()).collect();
        for want in [vec![Gc, Pwg], vec![Dw, Pw], vec![Dw, Pw, Pw], vec![Dw, Pwg, Pwg]] {
            assert!(got.contains(&want), "C={c}: missing {want:?}");
        }
    }
}

#[test]
fn gc_pwg_dw_never_valid() {
    let cfg = SearchConfig::default();
    let cands = concretize(&[Gc, Pwg, Dw], &cfg);
    assert!(!cands.is_empty());
    for c in &cands {
        assert!(!c.verdict.is_valid());
        let (m, n) = (c.groups[0].unwrap(), c.groups[1].unwrap());
        if m * n == 64 {
            assert_eq!(c.verdict, FieldVerdict::InferiorEarlyFull { at_kernel_index: 1 });
        }
    }
}

/// The pruned prefix walk must settle exactly the same verdict counts as
/// classifying every candidate in full.
#[test]
fn pruned_counts_match_brute_force() {
    for (c, f) in [(8, 8), (12, 12), (8, 16)] {
        let cfg = SearchConfig {
            max_length: 4,
            enable_domination_filter: false,
            ..SearchConfig::with_channels(c, f)
        };
        let mut brute = VerdictTally::default();
        let mut valid = Vec::new();
        for seq in enumerate_sequences(&cfg) {
            for cand in concretize(&seq, &cfg) {
                brute.examined += 1;
                brute.record(&cand.verdict, 1);
                if cand.verdict.is_valid() {
                    valid.push((cand.sequence.clone(), cand.plan, cand.groups.clone()));
                }
            }
        }
        let r = run_search(&cfg).unwrap();
        assert_eq!(r.counts.candidates, brute, "C={c} F={f}");
        assert_eq!(brute.settled(), brute.examined);
        let mut from_search: Vec<_> = r
            .families
            .iter()
            .flat_map(|fam| fam.witnesses.iter())
            .map(|w| (w.sequence.clone(), w.plan, w.groups.clone()))
            .collect();
        from_search.sort();
        valid.sort();
        assert_eq!(from_search, valid);
    }
}

#[test]
fn stage_counts_decrease() {
    let r = run_search(&SearchConfig::default()).unwrap();
    let k = r.counts;
    assert_eq!(k.raw_sequences, 5460);
    assert_eq!(k.sequences_kept + k.repeated_pattern_removed, 5460);
    assert!(k.candidates.valid < k.candidates.examined);
    assert!(k.valid_families <= k.candidates.valid);
    assert!(k.surviving_families <= k.valid_families);
    assert_eq!(
        k.valid_families,
        k.surviving_families + k.dropped_containment + k.dropped_sparsification + k.dropped_domination
    );
}

#[test]
fn output_independent_of_thread_count() {
    let base = SearchConfig {
        max_length: 5,
        ..SearchConfig::default()
    };
    let one = run_search(&SearchConfig { jobs: Some(1), ..base.clone() }).unwrap();
    let four = run_search(&SearchConfig { jobs: Some(4), ..base.clone() }).unwrap();
    let again = run_search(&SearchConfig { jobs: Some(3), ..base }).unwrap();
    let a = serde_json::to_string(&one).unwrap();
    assert_eq!(a, serde_json::to_string(&four).unwrap());
    assert_eq!(a, serde_json::to_string(&again).unwrap());
}

#[test]
fn unfiltered_survivors_are_audited() {
    let cfg = SearchConfig {
        enable_domination_filter: false,
        ..SearchConfig::default()
    };
    let r = run_search(&cfg).unwrap();
    assert!(r.families.len() > 4);
    assert!(r.dropped.is_empty());
    for f in &r.families {
        assert!(f.audit.all_kernels_contribute, "{}", f.name());
        assert!(f.audit.final_field_matches_reference, "{}", f.name());
    }
}

#[test]
fn no_two_families_share_a_multiset() {
    let cfg = SearchConfig {
        enable_domination_filter: false,
        ..SearchConfig::default()
    };
    let r = run_search(&cfg).unwrap();
    let mut seen = BTreeMap::new();
    for f in &r.families {
        assert!(seen.insert(f.multiset(), f.name()).is_none());
        for w in &f.witnesses {
            let mut m = w.sequence.clone();
            m.sort();
            assert_eq!(m, f.multiset());
        }
    }
}

#[test]
fn canonical_is_cheapest_preferred_witness() {
    let r = run_search(&SearchConfig::default()).unwrap();
    for f in &r.families {
        let pref = if f.bottleneck { PlanKind::Bottleneck } else { PlanKind::Plain };
        let min = f.witnesses.iter().filter(|w| w.plan == pref).map(|w| w.params).min();
        assert_eq!(Some(f.min_params), min);
    }
    let pdp = r.families.iter().find(|f| f.name() == "PW+DW+PW").unwrap();
    // 64*16 + 9*16 + 16*64
    assert_eq!(pdp.min_params, 2192);
}

#[test]
fn known_architectures() {
    let r = run_search(&SearchConfig::default()).unwrap();
    let get = |n: &str| r.families.iter().find(|f| f.name() == n).unwrap().clone();
    let shuffle = get("PWG+DW+PWG");
    assert_eq!(
        identify_known(&shuffle, &[Some(4), None, Some(4)], 64).into_iter().collect::<Vec<_>>(),
        vec![KnownArchitecture::ShuffleNet]
    );
    assert!(identify_known(&shuffle, &[Some(2), None, Some(8)], 64).is_empty());
    let pdp = get("PW+DW+PW");
    assert_eq!(
        identify_known(&pdp, &pdp.canonical_groups, 64).into_iter().collect::<Vec<_>>(),
        vec![KnownArchitecture::ResNeXtExtreme]
    );
    let gp = get("GC+PWG");
    assert!(identify_known(&gp, &[Some(2), Some(2)], 64).is_empty());
    let labels = identify_known(&gp, &[Some(64), Some(1)], 64);
    assert!(labels.contains(&KnownArchitecture::MobileNet));
    assert!(labels.contains(&KnownArchitecture::Xception));
}
