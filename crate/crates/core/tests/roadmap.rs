mod common;

use common::dense_segment_free;
use sharedwalk::geometry::Point2;
use sharedwalk::roadmap::{build_prm, polyline_length, Roadmap, QUERY_LINKS};
use sharedwalk::worldmap::{scenarios, OccupancyGrid, DEFAULT_CLEARANCE};

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut i = i;
    while parent[i] != r {
        let next = parent[i];
        parent[i] = r;
        i = next;
    }
    r
}

#[test]
fn empty_room_density() {
    let g = scenarios::empty_room(5.0, 5.0);
    for seed in 0..3 {
        let rm = build_prm(&g, DEFAULT_CLEARANCE, seed).unwrap();
        let n = rm.nodes().len();
        assert!((90..=110).contains(&n), "{n}");
        for (i, p) in rm.nodes().iter().enumerate() {
            assert!(g.is_free(*p, DEFAULT_CLEARANCE));
            for &(j, d) in rm.neighbours(i) {
                assert_eq!(d, p.distance(&rm.nodes()[j]));
                assert!(dense_segment_free(&g, *p, rm.nodes()[j], DEFAULT_CLEARANCE));
            }
        }
    }
}

#[test]
fn two_rooms_single_component() {
    let g = scenarios::two_rooms();
    for seed in 0..10 {
        let rm = build_prm(&g, DEFAULT_CLEARANCE, seed).unwrap();
        let n = rm.nodes().len();
        let mut parent: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for &(j, _) in rm.neighbours(i) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        assert!((0..n).all(|i| find(&mut parent, i) == root), "seed {seed}");
        assert!(rm.components().iter().all(|&c| c == 0));
    }
}

#[test]
fn rebuild_is_bitwise_identical() {
    let g = scenarios::cross_intersection();
    let a = build_prm(&g, DEFAULT_CLEARANCE, 42).unwrap();
    let b = build_prm(&g, DEFAULT_CLEARANCE, 42).unwrap();
    assert_eq!(a, b);
    let c = build_prm(&g, DEFAULT_CLEARANCE, 43).unwrap();
    assert_ne!(a.nodes(), c.nodes());
}

/// Bellman-Ford over the roadmap augmented with the two query points.
fn oracle_length(g: &OccupancyGrid, rm: &Roadmap, p0: Point2, pf: Point2) -> f64 {
    let n = rm.nodes().len();
    let mut edges = Vec::new();
    for i in 0..n {
        for &(j, d) in rm.neighbours(i) {
            edges.push((i, j, d));
        }
    }
    let link = |p: Point2| -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = rm
            .nodes()
            .iter()
            .enumerate()
            .map(|(j, q)| (j, p.distance(q)))
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        v.into_iter()
            .filter(|&(j, _)| g.segment_is_free(p, rm.nodes()[j], rm.clearance()))
            .take(QUERY_LINKS)
            .collect()
    };
    for (j, d) in link(p0) {
        edges.push((n, j, d));
    }
    for (j, d) in link(pf) {
        edges.push((j, n + 1, d));
    }
    if g.segment_is_free(p0, pf, rm.clearance()) {
        edges.push((n, n + 1, p0.distance(&pf)));
    }
    let mut dist = vec![f64::INFINITY; n + 2];
    dist[n] = 0.0;
    for _ in 0..n + 2 {
        let mut changed = false;
        for &(u, v, w) in &edges {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist[n + 1]
}

#[test]
fn shortest_path_matches_bellman_ford() {
    let g = scenarios::two_rooms();
    let rm = build_prm(&g, DEFAULT_CLEARANCE, 3).unwrap();
    assert!(rm.nodes().len() <= 250);
    let queries = [
        (Point2::new(1.0, 1.0), Point2::new(11.0, 4.0)),
        (Point2::new(4.5, 4.5), Point2::new(7.5, 0.5)),
        (Point2::new(2.5, 2.5), Point2::new(9.5, 2.5)),
        (Point2::new(0.5, 4.5), Point2::new(0.6, 0.5)),
    ];
    for (p0, pf) in queries {
        let path = rm.shortest_path(&g, p0, pf).unwrap();
        assert_eq!(path[0], p0);
        assert_eq!(*path.last().unwrap(), pf);
        let len = polyline_length(&path);
        let oracle = oracle_length(&g, &rm, p0, pf);
        assert!((len - oracle).abs() < 1e-9, "{len} vs {oracle}");
        assert!(len >= p0.distance(&pf));
        assert!(path.iter().all(|p| g.is_free(*p, DEFAULT_CLEARANCE)));
    }
}
