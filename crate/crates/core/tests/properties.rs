mod common;

use std::collections::BTreeSet;

use bikeflow::analytics::{community_graph, interaction_table, self_containment};
use bikeflow::baselines::{greedy_modularity, louvain, modularity};
use bikeflow::compare::compare_partitions;
use bikeflow::dynamics::hourly_communities;
use bikeflow::flow::{empirical_flow, random_walk_flow};
use bikeflow::ingest::{bucket_by_hour, clean_trips, filter_by_hour, RawTrip};
use bikeflow::mapeq::{codelength, plogp};
use bikeflow::network::build_network;
use bikeflow::synth::TripScenario;
use bikeflow::{infomap, FlowNetwork, FlowOptions, FlowState, OptimizerConfig, Partition};
use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

fn digraph(max_n: usize) -> impl Strategy<Value = FlowNetwork> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, 1u64..6), 1..3 * n)
            .prop_map(move |edges| FlowNetwork::from_index_edges(n, edges).unwrap())
    })
}

fn flows(net: &FlowNetwork) -> [FlowState; 2] {
    [
        empirical_flow(net).unwrap(),
        random_walk_flow(net, 0.15, 1e-13, 100_000).unwrap(),
    ]
}

fn labels_for(flow: &FlowState, raw: &[u32]) -> Partition {
    Partition::new(
        flow.node_visit()
            .iter()
            .enumerate()
            .map(|(a, &p)| (p > 0.0).then(|| raw[a % raw.len()]))
            .collect(),
    )
}

fn scale(net: &FlowNetwork, k: u64) -> FlowNetwork {
    FlowNetwork::from_edges(
        net.nodes().to_vec(),
        net.edges().iter().map(|e| (e.source, e.target, e.weight * k)),
    )
    .unwrap()
}

fn raw_trip() -> impl Strategy<Value = RawTrip> {
    (
        1i64..1_000_000,
        -100i64..3000,
        prop::option::weighted(0.9, 1i64..500),
        0i64..14 * 24 * 60,
        prop::option::weighted(0.95, 1i64..8),
        prop::option::weighted(0.9, 1i64..8),
    )
        .prop_map(|(id, duration, bike, minute, s, e)| {
            let start = NaiveDate::from_ymd_opt(2014, 6, 2).unwrap().and_hms_opt(0, 0, 0).unwrap()
                + Duration::minutes(minute);
            RawTrip {
                rental_id: id,
                duration,
                bike_id: bike,
                start_time: start,
                end_time: start + Duration::seconds(duration.max(0)),
                start_station_id: s,
                end_station_id: e,
                start_station_name: String::new(),
                end_station_name: String::new(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cleaning_reconciles_and_is_idempotent(
        trips in prop::collection::vec(raw_trip(), 0..60),
        repair in prop::collection::btree_set(1i64..8, 0..2),
        weekends in any::<bool>(),
    ) {
        let n = trips.len() as u64;
        let (clean, stats) = clean_trips(trips, &repair, weekends);
        prop_assert_eq!(stats.total_read, n);
        prop_assert_eq!(clean.len() as u64 + stats.dropped(), n);
        prop_assert!(clean.iter().all(|t| t.duration >= 0));
        let (again, stats2) = clean_trips(clean.iter().cloned().map(Into::into), &repair, weekends);
        prop_assert_eq!(stats2.dropped(), 0);
        prop_assert_eq!(&again, &clean);
        let mut total = 0;
        for h in 0..24 {
            let bucket = filter_by_hour(&clean, h).unwrap();
            prop_assert!(bucket.iter().all(|t| t.start_hour() == h));
            total += bucket.len();
        }
        prop_assert_eq!(total, clean.len());
        prop_assert_eq!(bucket_by_hour(&clean).iter().map(Vec::len).sum::<usize>(), clean.len());
    }

    #[test]
    fn network_strengths_balance_and_ignore_trip_order(seed in 0u64..1000, rotate in 0usize..50) {
        let scenario = TripScenario::uniform(2, 4, 2, 0.6);
        let mut trips = scenario.generate(seed);
        let stations = scenario.stations();
        let net = build_network(&trips, &stations).unwrap();
        prop_assert_eq!(net.total_weight(), trips.len() as u64);
        prop_assert_eq!(net.out_strengths().iter().sum::<u64>(), net.total_weight());
        prop_assert_eq!(net.in_strengths().iter().sum::<u64>(), net.total_weight());
        trips.reverse();
        let len = trips.len();
        trips.rotate_left(rotate % len.max(1));
        prop_assert_eq!(build_network(&trips, &stations).unwrap(), net);
    }

    #[test]
    fn visit_rates_sum_to_one_and_scale_free(net in digraph(8), k in 2u64..20) {
        let big = scale(&net, k);
        for (f, g) in flows(&net).iter().zip(flows(&big).iter()) {
            let s: f64 = f.node_visit().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            for (a, b) in f.node_visit().iter().zip(g.node_visit()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in f.edge_flow().iter().zip(g.edge_flow()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_module_codelength_is_visit_entropy(net in digraph(8)) {
        for f in flows(&net) {
            let one = Partition::single_module(net.node_count());
            let h: f64 = -f.node_visit().iter().map(|&p| plogp(p)).sum::<f64>();
            prop_assert!((codelength(&f, &one).unwrap() - h).abs() < 1e-10);
        }
    }

    #[test]
    fn codelength_nonnegative_relabel_invariant_and_matches_reference(
        net in digraph(8),
        raw in prop::collection::vec(0u32..4, 1..8),
    ) {
        for f in flows(&net) {
            let p = labels_for(&f, &raw);
            let l = codelength(&f, &p).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert!((l - common::reference_codelength(&f, &p)).abs() < 1e-10);
            let shuffled = Partition::new(p.assignment().iter().map(|a| a.map(|m| 17 - m)).collect());
            prop_assert!((codelength(&f, &shuffled).unwrap() - l).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn infomap_is_deterministic_monotone_and_bounded(net in digraph(7), seed in any::<u64>()) {
        let cfg = OptimizerConfig { seed, trials: 4, ..OptimizerConfig::default() };
        for f in flows(&net) {
            let a = infomap(&f, &net, &cfg).unwrap();
            let b = infomap(&f, &net, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            for t in &a.trial_traces {
                prop_assert!(t.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
            let (best, _) = common::brute_force_min(&f);
            prop_assert!(a.score >= best - 1e-10);
            let masses: Vec<f64> = a.partition.module_ids().iter().map(|&m| {
                (0..net.node_count()).filter(|&v| a.partition.module_of(v) == Some(m))
                    .map(|v| f.node_visit()[v]).sum()
            }).collect();
            prop_assert!(masses.windows(2).all(|w| w[0] >= w[1] - 1e-15));
        }
    }

    #[test]
    fn node_order_does_not_change_optimum(net in digraph(7), seed in 0u64..100) {
        let n = net.node_count();
        let perm: Vec<usize> = (0..n).map(|i| (i * 3 + 1) % n).collect();
        let coprime = perm.iter().collect::<BTreeSet<_>>().len() == n;
        prop_assume!(coprime);
        let moved = FlowNetwork::from_index_edges(
            n,
            net.edges().iter().map(|e| (perm[e.source], perm[e.target], e.weight)),
        ).unwrap();
        let cfg = OptimizerConfig { seed, ..OptimizerConfig::default() };
        let f = random_walk_flow(&net, 0.15, 1e-13, 100_000).unwrap();
        let g = random_walk_flow(&moved, 0.15, 1e-13, 100_000).unwrap();
        let a = infomap(&f, &net, &cfg).unwrap();
        let b = infomap(&g, &moved, &cfg).unwrap();
        prop_assert!((a.score - b.score).abs() < 1e-10);
    }

    #[test]
    fn modularity_scaling_and_brute_force_bound(net in digraph(7), k in 2u64..9, seed in 0u64..50) {
        let n = net.node_count();
        let l = louvain(&net, seed, 1.0).unwrap();
        let g = greedy_modularity(&net).unwrap();
        let q = modularity(&net, &l.partition, 1.0).unwrap().q;
        prop_assert!((l.score - q).abs() < 1e-10);
        prop_assert!((modularity(&scale(&net, k), &l.partition, 1.0).unwrap().q - q).abs() < 1e-12);
        let best = common::set_partitions(n)
            .iter()
            .map(|labels| modularity(&net, &Partition::from_labels(labels), 1.0).unwrap().q)
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(q <= best + 1e-10);
        prop_assert!(g.score <= best + 1e-10);
        prop_assert!((g.score - modularity(&net, &g.partition, 1.0).unwrap().q).abs() < 1e-10);
    }

    #[test]
    fn interaction_accounting_is_exact(net in digraph(8), raw in prop::collection::vec(0u32..3, 1..8)) {
        let part = Partition::new(
            (0..net.node_count()).map(|a| {
                let l = raw[a % raw.len()];
                (l < 2 || a % 3 != 0).then_some(l)
            }).collect(),
        );
        let t = interaction_table(&net, &part).unwrap();
        let rows: Vec<_> = t.modules.iter().chain(t.residual.iter()).collect();
        let within: u64 = rows.iter().map(|r| r.within).sum();
        let out: u64 = rows.iter().map(|r| r.out).sum();
        let inn: u64 = rows.iter().map(|r| r.r#in).sum();
        prop_assert_eq!(within + out, net.total_weight());
        prop_assert_eq!(out, inn);
        let graph = community_graph(&net, &part).unwrap();
        let m = t.module_count();
        let mut expected = Vec::new();
        for i in 0..m {
            for j in 0..m {
                if i != j && t.matrix[i][j] > 0 {
                    expected.push((i as u32, j as u32, t.matrix[i][j]));
                }
            }
        }
        let got: Vec<_> = graph.edges.iter().map(|e| (e.source, e.target, e.trips)).collect();
        prop_assert_eq!(got, expected);
        let relabeled = Partition::new(part.assignment().iter().map(|a| a.map(|x| 9 - x)).collect());
        let t2 = interaction_table(&net, &relabeled).unwrap();
        prop_assert_eq!(self_containment(&t).unwrap(), self_containment(&t2).unwrap());
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(
        a in prop::collection::vec(0u32..4, 2..30),
        b in prop::collection::vec(0u32..4, 2..30),
    ) {
        let n = a.len().min(b.len());
        let pa = Partition::from_labels(&a[..n]);
        let pb = Partition::from_labels(&b[..n]);
        let ab = compare_partitions(&pa, &pb).unwrap();
        let ba = compare_partitions(&pb, &pa).unwrap();
        prop_assert!((ab.nmi - ba.nmi).abs() < 1e-12);
        prop_assert!((ab.ari - ba.ari).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.nmi));
        prop_assert!(ab.ari <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn hourly_assignment_invariants(seed in 0u64..1000, share in 0.3f64..1.0) {
        let scenario = TripScenario::uniform(3, 5, 12, share);
        let trips = scenario.generate(seed);
        let stations = scenario.stations();
        let cfg = OptimizerConfig { seed, trials: 3, ..OptimizerConfig::default() };
        let h = hourly_communities(&trips, &stations, &cfg, &FlowOptions::default(), 1).unwrap();
        prop_assert_eq!(h.trip_counts().iter().sum::<usize>(), trips.len());
        for c in &h.columns {
            prop_assert!(c.module_visit.windows(2).all(|w| w[0] >= w[1]));
            let ids: Vec<u32> = c.partition.module_ids().into_iter().collect();
            prop_assert_eq!(ids, (0..c.module_count() as u32).collect::<Vec<_>>());
        }
        let again = hourly_communities(&trips, &stations, &cfg, &FlowOptions::default(), 1).unwrap();
        prop_assert_eq!(again, h);
    }
}
