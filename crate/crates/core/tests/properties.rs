use proptest::prelude::*;

use vtraj::graph::{augment_with_virtual, InteractionGraph, ResistanceMatrix};
use vtraj::predictor::{min_ade_fde, min_l2_loss, flatten_future, PredictionSet};
use vtraj::router::{renormalize, top_p_select, GateDistribution};
use vtraj::tensor::{Tape, Tensor};

fn softmax2(a: f64, b: f64) -> Vec<f64> {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    vec![ea / (ea + eb), eb / (ea + eb)]
}

fn connected_graph() -> impl Strategy<Value = InteractionGraph> {
    (2usize..=10).prop_flat_map(|n| {
        let parents = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n), 0..n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut pairs = std::collections::BTreeSet::new();
            for (k, p) in parents.iter().enumerate() {
                let child = k + 1;
                let parent = p.index(child);
                pairs.insert((parent.min(child), parent.max(child)));
            }
            for (a, b) in extra {
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
            let edges = pairs.into_iter().flat_map(|(a, b)| [(a, b), (b, a)]).collect();
            InteractionGraph::from_edges(n, edges).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn resistance_is_a_metric(g in connected_graph()) {
        let r = ResistanceMatrix::new(&g);
        let n = g.n_real();
        for i in 0..n {
            prop_assert_eq!(r.get(i, i).unwrap(), 0.0);
            for j in 0..n {
                let rij = r.get(i, j).unwrap();
                prop_assert_eq!(rij, r.get(j, i).unwrap());
                if i != j {
                    prop_assert!(rij > 0.0);
                }
                for k in 0..n {
                    prop_assert!(rij <= r.get(i, k).unwrap() + r.get(k, j).unwrap() + 1e-8);
                }
            }
        }
    }

    #[test]
    fn more_hubs_never_increase_resistance(g in connected_graph(), v in 1usize..4) {
        let fewer = ResistanceMatrix::new(&augment_with_virtual(&g, v).unwrap());
        let more = ResistanceMatrix::new(&augment_with_virtual(&g, v + 1).unwrap());
        for i in 0..g.n_real() {
            for j in 0..g.n_real() {
                prop_assert!(more.get(i, j).unwrap() <= fewer.get(i, j).unwrap() + 1e-8);
            }
        }
    }

    #[test]
    fn top_p_set_is_minimal_and_monotone(a in -20.0f64..20.0, b in -20.0f64..20.0, p in 0.01f64..0.99, q in 0.01f64..0.99) {
        let probs = softmax2(a, b);
        let (lo, hi) = (p.min(q), p.max(q));
        let s_lo = top_p_select(&probs, lo);
        let s_hi = top_p_select(&probs, hi);
        prop_assert!(!s_lo.is_empty() && s_lo.len() <= 2);
        let mass: f64 = s_lo.iter().map(|&k| probs[k]).sum();
        let without_last: f64 = s_lo[..s_lo.len() - 1].iter().map(|&k| probs[k]).sum();
        prop_assert!(mass > lo || s_lo.len() == 2);
        prop_assert!(without_last <= lo);
        prop_assert!(s_lo.iter().all(|k| s_hi.contains(k)));
        let w = renormalize(&probs, &s_lo);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..2 {
            prop_assert!(w[k] >= 0.0);
            if !s_lo.contains(&k) {
                prop_assert_eq!(w[k], 0.0);
            }
        }
    }

    #[test]
    fn softmax_shift_keeps_gates(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -50.0f64..50.0) {
        let x = softmax2(a, b);
        let y = softmax2(a + c, b + c);
        prop_assert!((x[0] - y[0]).abs() < 1e-12);
        prop_assert_eq!(GateDistribution::new(x, 0.7).active_set, GateDistribution::new(y, 0.7).active_set);
    }

    #[test]
    fn fused_output_stays_between_experts(
        w in 0.0f64..=1.0,
        a in proptest::collection::vec(-5.0f64..5.0, 6),
        b in proptest::collection::vec(-5.0f64..5.0, 6),
    ) {
        let mut tape = Tape::new();
        let av = tape.constant(Tensor::new(vec![2, 3], a.clone()).unwrap());
        let bv = tape.constant(Tensor::new(vec![2, 3], b.clone()).unwrap());
        let wv = tape.constant(Tensor::from_rows(&[vec![w, 1.0 - w], vec![1.0 - w, w]]).unwrap());
        let f = vtraj::router::fuse(&mut tape, wv, av, bv).unwrap();
        for (idx, &v) in tape.value(f).data().iter().enumerate() {
            let (lo, hi) = (a[idx].min(b[idx]), a[idx].max(b[idx]));
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn importance_loss_is_bounded(rows in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..8)) {
        let probs: Vec<Vec<f64>> = rows.iter().map(|&(a, b)| softmax2(a, b)).collect();
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_rows(&probs).unwrap());
        let l = vtraj::router::importance_loss(&mut tape, p).unwrap();
        let v = tape.value(l).item().unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        // independent per-agent value
        let expect = probs.iter().map(|g| (g[0] - g[1]).abs() / 2.0 / (0.5 + 1e-8)).sum::<f64>() / probs.len() as f64;
        prop_assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn best_of_heads_bounds(
        seedvals in proptest::collection::vec(-3.0f64..3.0, 3 * 2 * 4 * 2),
    ) {
        // 3 heads, 2 agents, 4 steps
        let (k, n, t) = (3, 2, 4);
        let future: Vec<Vec<[f64; 2]>> = (0..n).map(|i| (0..t).map(|s| [s as f64, i as f64]).collect()).collect();
        let heads: Vec<Vec<Vec<[f64; 2]>>> = (0..k)
            .map(|h| (0..n).map(|i| (0..t).map(|s| {
                let o = ((h * n + i) * t + s) * 2;
                [future[i][s][0] + seedvals[o], future[i][s][1] + seedvals[o + 1]]
            }).collect()).collect())
            .collect();
        let set = PredictionSet::new(heads.clone(), &future).unwrap();
        let mut tape = Tape::new();
        let vars: Vec<_> = heads.iter().map(|h| tape.constant(flatten_future(h).unwrap())).collect();
        let (loss, _) = min_l2_loss(&mut tape, &vars, &flatten_future(&future).unwrap()).unwrap();
        let loss = tape.value(loss).item().unwrap();
        for h in &set.head_losses {
            prop_assert!(loss <= h + 1e-12);
        }
        let mut prev = f64::INFINITY;
        for kk in 1..=k {
            let (ade, _) = min_ade_fde(&set, &future, kk).unwrap();
            prop_assert!(ade <= prev);
            prev = ade;
        }
    }
}
