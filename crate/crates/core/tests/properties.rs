use proptest::prelude::*;

use teamseg::graphcut::{argmin_labels, energy, min_cut_binary, UnaryCosts};
use teamseg::imgio::{deserialize_model_set, deserialize_segmentation, serialize_model_set, serialize_segmentation};
use teamseg::metrics::{bhattacharyya, mean_jaccard, model_set_distance};
use teamseg::moments::{estimate_beta, estimate_moments, BetaMode};
use teamseg::team::{project_simplex, ModelSet};
use teamseg::{DiscreteImage, Segmentation};

fn image() -> impl Strategy<Value = DiscreteImage> {
    (2usize..14, 2usize..14, 1usize..9).prop_flat_map(|(w, h, l)| {
        prop::collection::vec(0..l as u32, w * h).prop_map(move |px| DiscreteImage::new(w, h, l, px).unwrap())
    })
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|v| {
        let total: f64 = v.iter().sum();
        v.into_iter().map(|x| x / total).collect()
    })
}

fn model_set() -> impl Strategy<Value = ModelSet> {
    (1usize..5, 2usize..10).prop_flat_map(|(k, l)| {
        (prop::collection::vec(distribution(l), k), distribution(k))
            .prop_map(|(theta, w)| ModelSet::new(theta, w).unwrap())
    })
}

fn labelings() -> impl Strategy<Value = (Segmentation, Segmentation)> {
    (1usize..8, 1usize..8, 1usize..5).prop_flat_map(|(w, h, k)| {
        let labels = prop::collection::vec(0..k as u32, w * h);
        (labels.clone(), labels).prop_map(move |(a, b)| {
            (Segmentation::new(w, h, k, a).unwrap(), Segmentation::new(w, h, k, b).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn projection_lands_on_simplex(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let p = project_simplex(&v);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let again = project_simplex(&p);
        for (a, b) in p.iter().zip(&again) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_no_farther_than_any_vertex(v in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let p = project_simplex(&v);
        let dist = |x: &[f64]| x.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        for i in 0..v.len() {
            let mut e = vec![0.0; v.len()];
            e[i] = 1.0;
            prop_assert!(dist(&p) <= dist(&e) + 1e-12);
        }
    }

    #[test]
    fn beta_is_symmetric_distribution(img in image(), r in 1usize..3, axis in any::<bool>()) {
        let mode = if axis { BetaMode::Axis } else { BetaMode::Ring };
        if let Ok(b) = estimate_beta(&img, r, mode) {
            prop_assert_eq!(&b, &b.transpose());
            prop_assert!((b.sum() - 1.0).abs() < 1e-9);
            prop_assert!(b.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn gamma_slices_are_symmetric(img in image()) {
        let l = img.palette_size();
        let m = estimate_moments(&img, 1, l, BetaMode::Ring).unwrap();
        for s in 0..m.gamma.len() {
            let slice = m.gamma.slice(s);
            for i in 0..l {
                for j in 0..l {
                    prop_assert_eq!(slice[i * l + j], slice[j * l + i]);
                }
            }
        }
        prop_assert!((m.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bhattacharyya_symmetric_and_nonnegative(p in distribution(6), q in distribution(6)) {
        let d = bhattacharyya(&p, &q).unwrap();
        prop_assert_eq!(d, bhattacharyya(&q, &p).unwrap());
        prop_assert!(d >= 0.0);
        prop_assert_eq!(bhattacharyya(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn model_distance_ignores_order(m in model_set(), seed in any::<u64>()) {
        let k = m.num_regions();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left((seed % k as u64) as usize);
        prop_assert_eq!(model_set_distance(&m, &m.permuted(&perm)).unwrap().0, 0.0);
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded((a, b) in labelings()) {
        let j = mean_jaccard(&a, &b).unwrap().0;
        prop_assert_eq!(j, mean_jaccard(&b, &a).unwrap().0);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(mean_jaccard(&a, &a).unwrap().0, 1.0);
    }

    #[test]
    fn cut_never_worse_than_argmin(
        (w, h, costs) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), prop::collection::vec(0.0f64..5.0, w * h * 2))
        }),
        lambda in 0.0f64..3.0,
    ) {
        let costs = UnaryCosts::new(w, h, 2, costs).unwrap();
        let cut = min_cut_binary(&costs, lambda).unwrap();
        let argmin = argmin_labels(&costs);
        prop_assert!(energy(&cut, &costs, lambda) <= energy(&argmin, &costs, lambda) + 1e-9);
    }

    #[test]
    fn serialization_round_trips(m in model_set(), (seg, _) in labelings()) {
        prop_assert_eq!(deserialize_model_set(&serialize_model_set(&m)).unwrap(), m);
        prop_assert_eq!(deserialize_segmentation(&serialize_segmentation(&seg)).unwrap(), seg);
    }
}
