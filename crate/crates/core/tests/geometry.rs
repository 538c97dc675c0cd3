use cellfree::geometry::{drop_scenario, select_clusters, ClusterMap, Scenario};
use cellfree::{NetworkMode, SystemConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn norms_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7, 1usize..6).prop_flat_map(|(k, m)| {
        prop::collection::vec(0.0f64..10.0, k * m).prop_map(move |v| DMatrix::from_vec(k, m, v))
    })
}

#[test]
fn single_nodes_fall_inside_the_area() {
    let cfg = SystemConfig { num_aps: 1, num_users: 1, ..Default::default() };
    for seed in 0..50 {
        let s = drop_scenario(&cfg, seed);
        assert_eq!((s.ap_pos.len(), s.ms_pos.len()), (1, 1));
        for p in s.ap_pos.iter().chain(&s.ms_pos) {
            assert!((0.0..=cfg.area_side).contains(&p.x) && (0.0..=cfg.area_side).contains(&p.y));
        }
    }
}

#[test]
fn drops_are_reproducible() {
    let cfg = SystemConfig::default();
    assert_eq!(drop_scenario(&cfg, 42), drop_scenario(&cfg, 42));
    assert_ne!(drop_scenario(&cfg, 42), drop_scenario(&cfg, 43));
}

#[test]
fn coordinate_mean_is_the_area_center() {
    let cfg = SystemConfig::default();
    let drops = 400;
    let mut sum = 0.0;
    let mut n = 0usize;
    for seed in 0..drops {
        let s = drop_scenario(&cfg, 1000 + seed);
        for p in s.ap_pos.iter().chain(&s.ms_pos) {
            sum += p.x + p.y;
            n += 2;
        }
    }
    // uniform on [0, a]: mean a/2, standard deviation a/√12
    let a = cfg.area_side;
    let sigma = a / 12f64.sqrt();
    let mean = sum / n as f64;
    assert!((mean - a / 2.0).abs() <= 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
}

#[test]
fn text_dump_replays_positions() {
    let s = drop_scenario(&SystemConfig::default(), 5);
    let back = Scenario::from_text(&s.to_text()).unwrap();
    for (a, b) in s.ap_pos.iter().zip(&back.ap_pos).chain(s.ms_pos.iter().zip(&back.ms_pos)) {
        assert!((a.x - b.x).abs() <= 5e-7 && (a.y - b.y).abs() <= 5e-7);
    }
}

#[test]
fn cell_free_serves_everyone() {
    let norms = DMatrix::from_fn(4, 3, |k, m| (k * 3 + m) as f64);
    let c = select_clusters(&norms, NetworkMode::Cf, 1).unwrap();
    assert!(c.served_by_ap.iter().all(|s| *s == vec![0, 1, 2, 3]));
    assert!(c.serving_aps.iter().all(|s| *s == vec![0, 1, 2]));
}

#[test]
fn strongest_user_wins_a_single_slot() {
    let mut norms = DMatrix::from_element(2, 1, 1.0);
    norms[(1, 0)] = 2.0;
    let c = select_clusters(&norms, NetworkMode::Uc, 1).unwrap();
    assert_eq!(c.served_by_ap[0], vec![1]);
}

#[test]
fn ties_go_to_the_smaller_index() {
    let mut norms = DMatrix::from_element(8, 1, 0.5);
    norms[(3, 0)] = 2.0;
    norms[(7, 0)] = 2.0;
    let c = select_clusters(&norms, NetworkMode::Uc, 1).unwrap();
    assert_eq!(c.served_by_ap[0], vec![3]);
}

#[test]
fn oversized_cluster_is_a_config_error() {
    let norms = DMatrix::from_element(3, 2, 1.0);
    assert!(select_clusters(&norms, NetworkMode::Uc, 4).is_err());
    assert!(select_clusters(&norms, NetworkMode::Uc, 0).is_err());
}

proptest! {
    #[test]
    fn uc_sets_are_consistent(norms in norms_strategy(), pick in 0usize..100) {
        let k_n = norms.nrows();
        let n = 1 + pick % k_n;
        let c = select_clusters(&norms, NetworkMode::Uc, n).unwrap();
        for m in 0..norms.ncols() {
            prop_assert_eq!(c.served_by_ap[m].len(), n);
            // every served user is at least as strong as every unserved one
            let weakest_in = c.served_by_ap[m].iter().map(|&k| norms[(k, m)]).fold(f64::INFINITY, f64::min);
            for k in 0..k_n {
                if !c.served_by_ap[m].contains(&k) {
                    prop_assert!(norms[(k, m)] <= weakest_in);
                }
            }
        }
        for k in 0..k_n {
            for m in 0..norms.ncols() {
                prop_assert_eq!(c.serving_aps[k].contains(&m), c.served_by_ap[m].contains(&k));
                prop_assert_eq!(c.serves(m, k), c.served_by_ap[m].contains(&k));
            }
        }
    }

    #[test]
    fn full_uc_cluster_is_cell_free(norms in norms_strategy()) {
        let k_n = norms.nrows();
        let uc = select_clusters(&norms, NetworkMode::Uc, k_n).unwrap();
        prop_assert_eq!(uc, ClusterMap::cell_free(k_n, norms.ncols()));
    }

    #[test]
    fn selection_ignores_common_scaling(norms in norms_strategy(), scale in 1e-6f64..1e6, pick in 0usize..100) {
        let n = 1 + pick % norms.nrows();
        let a = select_clusters(&norms, NetworkMode::Uc, n).unwrap();
        let b = select_clusters(&(&norms * scale), NetworkMode::Uc, n).unwrap();
        prop_assert_eq!(a, b);
    }
}
