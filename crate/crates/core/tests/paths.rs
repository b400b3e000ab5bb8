use std::collections::BTreeSet;

use proptest::prelude::*;

use ponres::topology::{build_cell, CellParams, DeviceId, Topology, Variant};

/// Every simple path between two devices with at most `limit` devices,
/// found by brute-force search over the raw link list.
fn oracle_paths(t: &Topology, src: DeviceId, dst: DeviceId, limit: usize) -> BTreeSet<Vec<DeviceId>> {
    let mut adj: Vec<(DeviceId, DeviceId)> = Vec::new();
    for l in t.links() {
        adj.push((l.a, l.b));
        if l.cls.is_bidirectional() {
            adj.push((l.b, l.a));
        }
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![vec![src]];
    while let Some(walk) = stack.pop() {
        let last = *walk.last().unwrap();
        if last == dst {
            out.insert(walk);
            continue;
        }
        if walk.len() == limit {
            continue;
        }
        for &(a, b) in &adj {
            if a == last && !walk.contains(&b) {
                let mut next = walk.clone();
                next.push(b);
                stack.push(next);
            }
        }
    }
    out
}

fn small_cell() -> impl Strategy<Value = CellParams> {
    (1usize..=2, 1usize..=2, 1usize..=2, 1usize..=2, prop_oneof![Just(Variant::Original), Just(Variant::Modified)])
        .prop_filter("at least two servers", |(r, g, q, n, _)| r * g * q * n >= 2)
        .prop_map(|(racks, groups, subgroups, servers, variant)| CellParams {
            racks,
            groups_per_rack: groups,
            subgroups_per_group: subgroups,
            servers_per_subgroup: servers,
            variant,
            ..CellParams::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn candidate_paths_match_exhaustive_search(p in small_cell(), limit in 3usize..=9, pick in any::<(u16, u16)>()) {
        let t = build_cell(&p).unwrap();
        let servers = t.servers();
        let a = servers[pick.0 as usize % servers.len()];
        let mut b = servers[pick.1 as usize % servers.len()];
        if a == b {
            b = servers[(pick.1 as usize + 1) % servers.len()];
        }
        let got: BTreeSet<Vec<DeviceId>> =
            t.candidate_paths(a, b, limit).unwrap().into_iter().map(|p| p.devices).collect();
        prop_assert_eq!(got, oracle_paths(&t, a, b, limit));
    }

    #[test]
    fn raising_the_hop_limit_only_adds_paths(p in small_cell(), limit in 3usize..=8) {
        let t = build_cell(&p).unwrap();
        let s = t.servers();
        let short: BTreeSet<_> = t.candidate_paths(s[0], s[s.len() - 1], limit).unwrap().into_iter().map(|p| p.devices).collect();
        let long: BTreeSet<_> = t.candidate_paths(s[0], s[s.len() - 1], limit + 1).unwrap().into_iter().map(|p| p.devices).collect();
        prop_assert!(short.is_subset(&long));
        prop_assert!(long.iter().all(|d| d.len() <= limit + 1));
    }

    #[test]
    fn building_twice_gives_the_same_cell(p in small_cell()) {
        let a = build_cell(&p).unwrap();
        let b = build_cell(&p).unwrap();
        prop_assert_eq!(a.edge_list(), b.edge_list());
        prop_assert!(a == b);
    }
}

#[test]
fn candidate_paths_are_sorted_and_valid() {
    let t = build_cell(&CellParams::default()).unwrap();
    let s = t.servers();
    let paths = t.candidate_paths(s[0], s[15], 9).unwrap();
    assert!(!paths.is_empty());
    for w in paths.windows(2) {
        assert!((w[0].devices.len(), &w[0].devices) < (w[1].devices.len(), &w[1].devices));
    }
    for p in &paths {
        t.check_path(p, 9).unwrap();
    }
}
