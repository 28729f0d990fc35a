use basehop_protocol::topology::{build_topology, Position};
use basehop_protocol::ProtocolError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn unit_disk_threshold() {
    let near = build_topology(&[Position::new(0.0, 0.0), Position::new(39.0, 0.0)], 40.0).unwrap();
    assert!(near.is_linked(0, 1));
    let far = build_topology(&[Position::new(0.0, 0.0), Position::new(41.0, 0.0)], 40.0).unwrap();
    assert!(!far.is_linked(0, 1));
    let exact = build_topology(&[Position::new(0.0, 0.0), Position::new(0.0, 40.0)], 40.0).unwrap();
    assert!(exact.is_linked(0, 1));
}

#[test]
fn matches_pairwise_distances() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..200 {
        let n = rng.random_range(1..=40);
        let pts: Vec<Position> =
            (0..n).map(|_| Position::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0))).collect();
        let topo = build_topology(&pts, 40.0).unwrap();
        let mut edges = 0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let dx = pts[i].x - pts[j].x;
                let dy = pts[i].y - pts[j].y;
                let linked = (dx * dx + dy * dy).sqrt() <= 40.0;
                assert_eq!(topo.is_linked(i, j), linked);
                edges += usize::from(linked);
            }
        }
        assert_eq!(topo.edge_count() * 2, edges);
        // Components partition the node set and respect links.
        let alive = vec![true; n];
        let comps = topo.components(&alive);
        assert_eq!(comps.iter().map(Vec::len).sum::<usize>(), n);
        let mut label = vec![0; n];
        for (k, c) in comps.iter().enumerate() {
            for &m in c {
                label[m] = k;
            }
        }
        for i in 0..n {
            for &j in topo.neighbors(i) {
                assert_eq!(label[i], label[j]);
            }
        }
    }
}

#[test]
fn duplicate_positions_are_rejected() {
    let err = build_topology(&[Position::new(1.0, 1.0), Position::new(1.0, 1.0)], 40.0).unwrap_err();
    assert!(matches!(err, ProtocolError::DuplicatePosition(0, 1)));
}

#[test]
fn split_and_heal() {
    let pts: Vec<Position> = (0..5).map(|i| Position::new(30.0 * f64::from(i), 0.0)).collect();
    let mut topo = build_topology(&pts, 40.0).unwrap();
    let alive = vec![true; 5];
    assert_eq!(topo.diameter(&[0, 1, 2, 3, 4], &alive), 4);
    topo.partition(&[vec![0, 1], vec![2, 3, 4]]);
    assert_eq!(topo.components(&alive), vec![vec![0, 1], vec![2, 3, 4]]);
    topo.heal();
    assert_eq!(topo.components(&alive).len(), 1);
    let mut dead = alive.clone();
    dead[2] = false;
    assert_eq!(topo.components(&dead), vec![vec![0, 1], vec![3, 4]]);
}
