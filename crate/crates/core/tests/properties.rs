use nudgelab_core::archetype::{complete_linkage, corr_distance};
use nudgelab_core::knowledge::{Library, ProfileQuery};
use nudgelab_core::predictors::{fit_importance, Feature, FeatureCategory, Phase};
use nudgelab_core::profile::{read_snapshots, write_snapshots};
use nudgelab_core::rng;
use nudgelab_core::sim::{clean_panel, randomize, simulate_trial, synth_population, CleanRules, SimConfig};
use nudgelab_core::stats::{fit_ols, km_curve, permutation_test, saving_rate, Covariance, Design};
use nudgelab_core::text::{count_keywords, ArmClass, KeywordDictionary};
use nudgelab_core::trees::{fit_forest, fit_tree, BoostParams, ForestParams, Matrix, TreeParams};
use nudgelab_core::{Arm, Resource};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;

fn normals(seed: u64, label: &str, n: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, label);
    (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
}

fn small_sim(n: usize) -> SimConfig {
    SimConfig { n, cluster_counts: vec![20, 3], ..SimConfig::default() }
}

const QUERY_WORDS: [&str; 12] = [
    "air conditioner", "shower", "laptop", "lighting", "kettle", "standby", "night", "hot", "comfort", "hair dryer",
    "temperature", "charger",
];

fn query_strategy() -> impl Strategy<Value = ProfileQuery> {
    let pick = || prop::collection::vec(prop::sample::select(QUERY_WORDS.to_vec()), 0..5);
    (pick(), pick(), pick()).prop_map(|(a, b, k)| ProfileQuery {
        appliances: a.into_iter().map(String::from).collect(),
        behavior_tags: b.into_iter().map(String::from).collect(),
        keywords: k.into_iter().map(String::from).collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retrieval_is_deterministic_and_prefix_closed(q in query_strategy(), k1 in 0usize..12, extra in 0usize..12) {
        let lib = Library::bundled();
        for resource in Resource::ALL {
            let short = lib.retrieve_top_k(&q, resource, k1);
            let long = lib.retrieve_top_k(&q, resource, k1 + extra);
            prop_assert_eq!(&short, &lib.retrieve_top_k(&q, resource, k1));
            prop_assert_eq!(&short[..], &long[..short.len()]);
        }
    }

    #[test]
    fn snapshot_round_trip_is_lossless(seed in any::<u64>()) {
        let pop = synth_population(&small_sim(12), seed).unwrap();
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &pop.profiles).unwrap();
        prop_assert_eq!(read_snapshots(buf.as_slice()).unwrap(), pop.profiles);
    }

    #[test]
    fn no_cluster_spans_two_arms(seed in any::<u64>()) {
        let pop = synth_population(&SimConfig::default(), seed).unwrap();
        let a = randomize(&pop.clusters, seed).unwrap();
        for c in &pop.clusters {
            let arm = a.by_cluster[&c.cluster_id];
            prop_assert!(c.members.iter().all(|m| a.by_participant[m] == arm));
        }
    }

    #[test]
    fn cleaning_is_idempotent(seed in any::<u64>()) {
        let cfg = small_sim(30);
        let pop = synth_population(&cfg, seed).unwrap();
        let a = randomize(&pop.clusters, seed).unwrap();
        let out = simulate_trial(&pop.profiles, &a, &cfg, seed).unwrap();
        let rules = CleanRules::default();
        let (once, _) = clean_panel(&out.panel, &rules);
        let (twice, _) = clean_panel(&once, &rules);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn residuals_are_orthogonal_to_design(seed in any::<u64>(), n in 8usize..40, k in 1usize..5) {
        let mut cols = vec![vec![1.0; n]];
        for j in 0..k {
            cols.push(normals(seed, &format!("x{j}"), n));
        }
        let y = normals(seed, "y", n);
        let names = (0..=k).map(|j| format!("c{j}")).collect();
        let d = Design::from_columns(names, &cols).unwrap();
        let m = fit_ols(&d, &y, &Covariance::Iid).unwrap();
        let xtu = d.x.transpose() * &m.residuals;
        prop_assert!(xtu.amax() < 1e-8, "X'u = {}", xtu.amax());
    }

    #[test]
    fn saving_rate_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let n = 30;
        let arm: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let base: Vec<f64> = normals(seed, "b", n).iter().map(|v| 3.0 + 0.3 * v).collect();
        let y: Vec<f64> = base.iter().zip(normals(seed, "e", n)).zip(&arm).map(|((b, e), a)| 0.9 * b + 0.1 * e - 0.2 * *a as f64).collect();
        let rates = |s: f64| {
            let cols = vec![
                vec![1.0; n],
                arm.iter().map(|&a| f64::from(a == 1)).collect(),
                arm.iter().map(|&a| f64::from(a == 2)).collect(),
                base.iter().map(|b| b * s).collect::<Vec<f64>>(),
            ];
            let names = ["intercept", "T1", "T2", "baseline"].map(String::from).to_vec();
            let m = fit_ols(&Design::from_columns(names, &cols).unwrap(), &y.iter().map(|v| v * s).collect::<Vec<_>>(), &Covariance::Iid).unwrap();
            let bm = base.iter().sum::<f64>() / n as f64 * s;
            saving_rate(&m, bm).unwrap().rates
        };
        let (a, b) = (rates(1.0), rates(scale));
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }

    // Durations are rounds 1..=5, the estimator's support.
    #[test]
    fn km_is_monotone_and_matches_survivor_without_censoring(times in prop::collection::vec(1u32..=5, 1..12), censor in prop::collection::vec(any::<bool>(), 12)) {
        let mixed: Vec<(u32, bool)> = times.iter().zip(&censor).map(|(&t, &c)| (t, c)).collect();
        let curve = km_curve(&mixed);
        prop_assert!(curve.survival.windows(2).all(|w| w[1] <= w[0]));
        let full: Vec<(u32, bool)> = times.iter().map(|&t| (t, true)).collect();
        let curve = km_curve(&full);
        for t in 0..=5 {
            let alive = times.iter().filter(|&&d| d > t).count() as f64 / times.len() as f64;
            prop_assert!((curve.at(t) - alive).abs() < 1e-12, "t={} km={} empirical={}", t, curve.at(t), alive);
        }
    }

    #[test]
    fn permutation_p_ignores_arm_names(seed in any::<u64>()) {
        let n = 24;
        let labels: Vec<Arm> = (0..n).map(|i| Arm::ALL[i % 3]).collect();
        let clusters: Vec<u32> = (0..n as u32).collect();
        let y = normals(seed, "y", n);
        // Between-group sum of squares does not care which name a group has.
        let stat = |l: &[Arm]| {
            let grand = y.iter().sum::<f64>() / n as f64;
            Arm::ALL.iter().map(|a| {
                let g: Vec<f64> = l.iter().zip(&y).filter(|(x, _)| *x == a).map(|(_, v)| *v).collect();
                if g.is_empty() { 0.0 } else { g.len() as f64 * (g.iter().sum::<f64>() / g.len() as f64 - grand).powi(2) }
            }).sum::<f64>()
        };
        let rotate = |a: Arm| Arm::ALL[(a.index() + 1) % 3];
        let renamed: Vec<Arm> = labels.iter().map(|&a| rotate(a)).collect();
        let p1 = permutation_test(&labels, &clusters, stat, 199, seed).unwrap().p;
        let p2 = permutation_test(&renamed, &clusters, stat, 199, seed).unwrap().p;
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn tree_predictions_stay_in_outcome_range(seed in any::<u64>(), n in 5usize..60) {
        let x = Matrix::from_columns(&[normals(seed, "a", n), normals(seed, "b", n)]).unwrap();
        let y = normals(seed, "y", n);
        let t = fit_tree(&x, &y, &TreeParams::default(), seed).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        for i in 0..n {
            let p = t.predict_row(x.row(i));
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }

    #[test]
    fn forest_prediction_ignores_tree_order(seed in any::<u64>()) {
        let n = 40;
        let x = Matrix::from_columns(&[normals(seed, "a", n), normals(seed, "b", n)]).unwrap();
        let y = normals(seed, "y", n);
        let f = fit_forest(&x, &y, &ForestParams::with_trees(15), seed).unwrap();
        let mut rev = f.clone();
        rev.trees.reverse();
        for i in 0..n {
            prop_assert!((f.predict_row(x.row(i)) - rev.predict_row(x.row(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn corr_distance_symmetric_and_zero_for_positive_affine(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3), s in 0.1f64..10.0, c in -5.0f64..5.0) {
        prop_assume!(a.iter().any(|v| (v - a[0]).abs() > 1e-3) && b.iter().any(|v| (v - b[0]).abs() > 1e-3));
        prop_assert!((corr_distance(&a, &b).unwrap() - corr_distance(&b, &a).unwrap()).abs() < 1e-15);
        let shifted: Vec<f64> = a.iter().map(|v| s * v + c).collect();
        prop_assert!(corr_distance(&a, &shifted).unwrap().abs() < 1e-9);
    }

    #[test]
    fn linkage_is_monotone_and_order_free(seed in any::<u64>(), n in 3usize..12) {
        let mut r = rng::stream(seed, "vectors");
        let vs: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let d = complete_linkage(&vs).unwrap();
        prop_assert!(d.merges.windows(2).all(|w| w[1].distance >= w[0].distance - 1e-12));
        let perm: Vec<usize> = (0..n).rev().collect();
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| vs[i].clone()).collect();
        let d2 = complete_linkage(&shuffled).unwrap();
        for k in 1..=n {
            let mut back: Vec<Vec<usize>> = d2.cut(k).into_iter().map(|c| {
                let mut m: Vec<usize> = c.into_iter().map(|i| perm[i]).collect();
                m.sort();
                m
            }).collect();
            back.sort();
            let mut orig = d.cut(k);
            orig.sort();
            prop_assert_eq!(back, orig);
        }
    }

    #[test]
    fn matching_never_double_counts_and_ignores_case(words in prop::collection::vec(prop::sample::select(vec!["air", "conditioner", "save", "energy", "shower", "the", "hot", "water", "plan"]), 0..30)) {
        let dict = KeywordDictionary::default_dictionaries();
        let text = words.join(" ");
        let p = count_keywords("m", &text, 1, ArmClass::Personalized, &dict);
        prop_assert!(p.matched_tokens <= p.total_tokens);
        let upper = count_keywords("m", &text.to_uppercase(), 1, ArmClass::Personalized, &dict);
        prop_assert_eq!(p.counts, upper.counts);
        prop_assert_eq!(p.phrase_counts, upper.phrase_counts);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn importance_rollups_and_column_order(seed in any::<u64>()) {
        let n = 80;
        let cats = [FeatureCategory::BaselineConsumption, FeatureCategory::Psychological, FeatureCategory::Psychological, FeatureCategory::SocioStructural, FeatureCategory::InterventionRelated];
        let features: Vec<Feature> = cats.iter().enumerate().map(|(j, &c)| Feature { name: format!("f{j}"), category: c }).collect();
        let cols: Vec<Vec<f64>> = (0..5).map(|j| normals(seed, &format!("f{j}"), n)).collect();
        let noise = normals(seed, "noise", n);
        let y: Vec<f64> = (0..n).map(|i| 2.0 * cols[0][i] + cols[2][i] + 0.5 * noise[i]).collect();
        let params = BoostParams { trees: 40, ..BoostParams::default() };
        let prof = fit_importance(&Matrix::from_columns(&cols).unwrap(), &features, &y, Phase::Whole, &params).unwrap();
        for (ci, c) in FeatureCategory::ALL.iter().enumerate() {
            let sum: f64 = prof.features.iter().filter(|f| f.category == *c).map(|f| f.importance).sum();
            prop_assert_eq!(prof.categories[ci], sum);
        }
        let order = [3usize, 0, 4, 2, 1];
        let rf: Vec<Feature> = order.iter().map(|&j| features[j].clone()).collect();
        let rc: Vec<Vec<f64>> = order.iter().map(|&j| cols[j].clone()).collect();
        let other = fit_importance(&Matrix::from_columns(&rc).unwrap(), &rf, &y, Phase::Whole, &params).unwrap();
        let by_name = |p: &nudgelab_core::predictors::ImportanceProfile| -> BTreeMap<String, f64> {
            p.features.iter().map(|f| (f.name.clone(), f.importance)).collect()
        };
        prop_assert_eq!(by_name(&prof), by_name(&other));
    }
}
