use proptest::prelude::*;

use cep3::ar_update::{Provenance, RolloutGraph};
use cep3::baselines::hawkes_pair_nll;
use cep3::ctdg::{
    chronological_split, detect_communities_louvain, ingest_events, modularity, synthesize_edge_features, CommunityAssignment, Event, EventStream,
    SplitSpec, TemporalGraph, WeightedGraph,
};
use cep3::encoder::TimeEncoder;
use cep3::evaluation::{mae, perplexity};
use cep3::forecaster::{Forecaster, ForecasterConfig, HeadKind, OpCounter};
use cep3::tensor::{Axis, ParameterSet, Tape, Tensor};
use cep3::training::make_windows;

fn events_strategy(nodes: usize, max_len: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..nodes, 0..nodes, 0.0..1000.0f64), 0..max_len)
}

fn stream_of(raw: &[(usize, usize, f64)], nodes: usize) -> EventStream {
    EventStream::new(raw.iter().map(|&(a, b, t)| Event::new(a, b, t)).collect(), nodes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stream_is_sorted_and_stable(raw in events_strategy(6, 60)) {
        let s = stream_of(&raw, 6);
        prop_assert_eq!(s.len(), raw.len());
        prop_assert!(s.events().windows(2).all(|w| w[0].time <= w[1].time));
        let mut expected: Vec<(usize, usize, f64)> = raw.clone();
        expected.sort_by(|a, b| a.2.total_cmp(&b.2));
        let got: Vec<(usize, usize, f64)> = s.events().iter().map(|e| (e.source, e.dest, e.time)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn csv_roundtrip(raw in events_strategy(5, 40), offset in 0u64..1000) {
        let mut text = String::from("source,dest,time\n");
        for (a, b, t) in &raw {
            text.push_str(&format!("{},{},{}\n", *a as u64 * 3 + offset, *b as u64 * 3 + offset, t));
        }
        let s = ingest_events(&text).unwrap();
        prop_assert_eq!(ingest_events(&s.to_csv()).unwrap(), s);
    }

    #[test]
    fn split_conserves_events(raw in events_strategy(4, 80), train in 0.0..1.0f64, val_share in 0.0..1.0f64) {
        prop_assume!(!raw.is_empty());
        let val = (1.0 - train) * val_share;
        let spec = SplitSpec { train, val, test: 1.0 - train - val };
        let s = stream_of(&raw, 4);
        let (a, b, c, meta) = chronological_split(&s, spec).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), s.len());
        let joined: Vec<Event> = a.events().iter().chain(b.events()).chain(c.events()).cloned().collect();
        prop_assert_eq!(joined, s.events().to_vec());
        prop_assert_eq!(meta.boundaries, [a.len(), a.len() + b.len()]);
    }

    #[test]
    fn time_scale_inverts(raw in events_strategy(3, 30), span in 1.0..5000.0f64) {
        let s = stream_of(&raw, 3);
        let (r, scale) = s.rescale_time(span);
        for (orig, mapped) in s.events().iter().zip(r.events()) {
            prop_assert!(mapped.time >= -1e-9 && mapped.time <= span * (1.0 + 1e-12) + 1e-9);
            prop_assert!((scale.inverse(mapped.time) - orig.time).abs() <= 1e-9 * orig.time.abs().max(1.0));
        }
    }

    #[test]
    fn synthesized_features_are_causal(raw in events_strategy(5, 40), cut in 0usize..40) {
        let s = stream_of(&raw, 5);
        let full = synthesize_edge_features(&s).unwrap();
        let cut = cut.min(s.len());
        let prefix = EventStream::new(s.events()[..cut].to_vec(), 5).unwrap();
        let prefix = synthesize_edge_features(&prefix).unwrap();
        prop_assert_eq!(prefix.events(), &full.events()[..cut]);
    }

    #[test]
    fn windows_partition_community_events(raw in events_strategy(6, 60), k in 1usize..12, labels in prop::collection::vec(0usize..3, 6)) {
        let s = stream_of(&raw, 6);
        let communities = CommunityAssignment::from_labels(&labels);
        let windows = make_windows(&s, &communities, k, k, 0.0).unwrap();
        for c in 0..communities.len() {
            let mine: Vec<Event> = windows.iter().filter(|w| w.community == c).flat_map(|w| w.events.clone()).collect();
            prop_assert_eq!(mine, s.restrict(&communities.mask(c)).events().to_vec());
        }
        for w in &windows {
            prop_assert!(!w.events.is_empty() && w.events.len() <= k);
            prop_assert!(w.events.iter().all(|e| e.time >= w.horizon));
            prop_assert!(w.events.iter().all(|e| w.members.contains(&e.source) && w.members.contains(&e.dest)));
        }
    }

    #[test]
    fn louvain_is_a_partition_no_worse_than_trivial(raw in prop::collection::vec((0usize..8, 0usize..8), 1..40)) {
        let s = stream_of(&raw.iter().enumerate().map(|(i, &(a, b))| (a, b, i as f64)).collect::<Vec<_>>(), 8);
        let g = WeightedGraph::from_stream(&s);
        let found = detect_communities_louvain(&s);
        let mut seen: Vec<usize> = found.communities.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..8).collect::<Vec<_>>());
        let q = modularity(&g, &found.community_of);
        let singletons: Vec<usize> = (0..8).collect();
        prop_assert!(q >= modularity(&g, &singletons) - 1e-12);
        prop_assert!(q >= modularity(&g, &[0; 8]) - 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions(values in prop::collection::vec(-30.0..30.0f64, 12)) {
        let p = ParameterSet::<f64>::new(0);
        let mut t = Tape::new(&p);
        let x = t.constant(Tensor::from_vec(3, 4, values).unwrap()).unwrap();
        let s = t.softmax(x, Axis::Cols).unwrap();
        let v = t.value(s);
        for r in 0..3 {
            let row = v.row_slice(r);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn induced_joint_sums_to_one(n in 1usize..9, seed in 0u64..1000, dt in 0.0..5.0f64, mask in any::<bool>()) {
        let mut p = ParameterSet::<f64>::new(seed);
        let time = TimeEncoder::new(&mut p, "time", 4);
        let cfg = ForecasterConfig { state_dim: 3, hidden_dim: 5, time_dim: 4, head: HeadKind::Hierarchical, mask_self_loops: mask, pair_budget: 1 << 10 };
        let f = Forecaster::new(&mut p, "fc", cfg);
        let mut t = Tape::new(&p);
        let states: Vec<f64> = (0..n * 3).map(|i| ((i as f64 + seed as f64) * 0.37).sin() * 2.0).collect();
        let h = t.constant(Tensor::from_vec(n, 3, states).unwrap()).unwrap();
        let phi = time.encode(&mut t, &[dt]).unwrap();
        let mut ops = OpCounter::default();
        let ps = f.source_distribution(&mut t, h, phi, &mut ops).unwrap();
        let ps = t.value(ps).data().to_vec();
        let mut total = 0.0;
        for (u, pu) in ps.iter().enumerate() {
            let pd = f.dest_distribution(&mut t, h, u, phi, &mut ops).unwrap();
            total += pu * t.value(pd).data().iter().sum::<f64>();
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert_eq!(ops.logit_evals, (n + n * n) as u64);
    }

    #[test]
    fn perplexity_ignores_order_and_is_at_least_one(probs in prop::collection::vec((1e-6..1.0f64, 1e-6..1.0f64), 1..30)) {
        let (pp, _) = perplexity(&probs);
        let mut reversed = probs.clone();
        reversed.reverse();
        prop_assert!((perplexity(&reversed).0 - pp).abs() <= 1e-9 * pp);
        prop_assert!(pp >= 1.0 - 1e-12);
    }

    #[test]
    fn mae_shift_scale_invariant(
        gaps in prop::collection::vec(0.01..5.0f64, 1..20),
        noise in prop::collection::vec(-3.0..3.0f64, 20),
        shift in -100.0..100.0f64,
        scale in 0.1..10.0f64,
    ) {
        let mut truth = Vec::new();
        let mut t = 0.0;
        for g in &gaps {
            t += g;
            truth.push(t);
        }
        let pred: Vec<f64> = truth.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let base = mae(&truth, &pred, 0.0).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert_eq!(mae(&truth, &truth, 0.0), Some(0.0));
        let tf = |v: &[f64]| v.iter().map(|x| x * scale + shift).collect::<Vec<_>>();
        let moved = mae(&tf(&truth), &tf(&pred), shift).unwrap();
        prop_assert!((moved - base).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn hawkes_without_excitation_is_poisson(mut times in prop::collection::vec(0.0..50.0f64, 0..25), mu in 0.01..5.0f64) {
        times.sort_by(f64::total_cmp);
        let poisson = mu * 50.0 - times.len() as f64 * mu.ln();
        prop_assert!((hawkes_pair_nll(&times, 0.0, 50.0, mu, 0.0) - poisson).abs() <= 1e-9 * poisson.abs().max(1.0));
    }

    #[test]
    fn rollout_edges_grow_by_one_per_event(history in events_strategy(5, 20), predicted in prop::collection::vec((0usize..5, 0usize..5), 0..15)) {
        let graph = TemporalGraph::new(&stream_of(&history, 5));
        let members = [0, 1, 2, 3, 4];
        let mut g = RolloutGraph::init(&graph, &members, 2, 1000.0);
        let start = g.edge_count();
        for (i, &(a, b)) in predicted.iter().enumerate() {
            g.apply_event(a, b, 1000.0 + i as f64, Provenance::Predicted).unwrap();
        }
        prop_assert_eq!(g.edge_count(), start + predicted.len());
        let degree: usize = (0..5).map(|p| g.neighbors(p).len()).sum();
        let loops = g.edges().iter().filter(|e| e.a == e.b).count();
        prop_assert_eq!(degree, 2 * g.edge_count() - loops);
    }
}
