mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use taskalloc::assign::{brute_force, greedy, greedy_per_agent, hungarian, random_assign, total_cost, CostMatrix};
use taskalloc::pathplan::{astar, rrt_star, Cell, Grid, MotionModel, ReservationTable, RrtParams};
use taskalloc::ppo::{compute_gae, normalize};
use taskalloc::world::WorldConfig;

use common::{dijkstra, random_free_cell, random_grid, safety_sweep};

fn matrix(max_n: usize, max_m: usize) -> impl Strategy<Value = CostMatrix> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        prop::collection::vec(0.0f64..10.0, n * m).prop_map(move |v| CostMatrix::new(n, m, v).unwrap())
    })
}

fn is_matching(pairs: &[(usize, usize)]) -> bool {
    let mut rows: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let mut cols: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    rows.sort();
    cols.sort();
    rows.windows(2).all(|w| w[0] != w[1]) && cols.windows(2).all(|w| w[0] != w[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hungarian_is_optimal_and_full(c in matrix(6, 6)) {
        let h = hungarian(&c).unwrap();
        prop_assert!(is_matching(h.pairs()));
        prop_assert_eq!(h.len(), c.n_agents().min(c.n_tasks()));
        let best = total_cost(&c, &brute_force(&c).unwrap()).unwrap();
        let got = total_cost(&c, &h).unwrap();
        prop_assert!((got - best).abs() < 1e-9);
        for other in [greedy(&c), greedy_per_agent(&c), random_assign(&c, 5)] {
            prop_assert!(is_matching(other.pairs()));
            prop_assert!(got <= total_cost(&c, &other).unwrap() + 1e-9);
        }
    }

    #[test]
    fn hungarian_ignores_row_and_column_shifts(n in 1usize..6, v in prop::collection::vec(0.0f64..10.0, 25), dr in 0.0f64..5.0, dc in 0.0f64..5.0) {
        let c = CostMatrix::new(n, n, v[..n * n].to_vec()).unwrap();
        let mut shifted = c.clone();
        shifted.add_to_agent(0, dr);
        shifted.add_to_task(0, dc);
        let a = total_cost(&c, &hungarian(&c).unwrap()).unwrap();
        let b = total_cost(&c, &hungarian(&shifted).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn astar_matches_dijkstra(seed in any::<u64>(), aerial in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, [12, 12, 5], 0.15);
        let model = if aerial { MotionModel::Aerial6 } else { MotionModel::Ground4 };
        let s = random_free_cell(&mut rng, &grid, model);
        let g = random_free_cell(&mut rng, &grid, model);
        match (astar(&grid, s, g, model, None), dijkstra(&grid, s, g, model)) {
            (Ok(p), Some(d)) => {
                prop_assert_eq!(p.moves() as u32, d);
                prop_assert!(p.is_valid(&grid, model));
                prop_assert_eq!(p.start(), s);
                prop_assert_eq!(p.goal(), g);
            }
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "astar {:?} vs dijkstra {:?}", a.map(|p| p.moves()), b),
        }
    }

    #[test]
    fn rrt_paths_are_valid_and_never_shorter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, [12, 12, 5], 0.1);
        let model = MotionModel::Aerial6;
        let s = random_free_cell(&mut rng, &grid, model);
        let g = random_free_cell(&mut rng, &grid, model);
        if let Ok(p) = rrt_star(&grid, s, g, model, &RrtParams::default(), seed) {
            prop_assert!(p.is_valid(&grid, model));
            let d = dijkstra(&grid, s, g, model).unwrap();
            prop_assert!(p.moves() as u32 >= d);
        }
    }

    #[test]
    fn reservations_never_double_book(cells in prop::collection::vec((0i32..4, 0i32..4, 0u64..6, 0usize..3), 1..40)) {
        let mut table = ReservationTable::new();
        let mut owner = std::collections::HashMap::new();
        for (x, y, t, a) in cells {
            let c = Cell::new(x, y, 0);
            let r = table.reserve(c, t, a);
            match owner.get(&(c, t)) {
                Some(&h) if h != a => prop_assert!(r.is_err()),
                _ => {
                    prop_assert!(r.is_ok());
                    owner.insert((c, t), a);
                }
            }
            prop_assert_eq!(table.holder(&c, t), owner.get(&(c, t)).copied());
        }
    }

    #[test]
    fn gae_returns_and_normalization(rw in prop::collection::vec(-2.0f64..2.0, 1..30), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let values: Vec<f64> = rw.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dones = vec![false; rw.len()];
        *dones.last_mut().unwrap() = true;
        let (adv, ret) = compute_gae(&rw, &values, &dones, 0.0, 0.99, 0.95);
        for i in 0..rw.len() {
            prop_assert!((ret[i] - adv[i] - values[i]).abs() < 1e-12);
        }
        let mut a = adv.clone();
        normalize(&mut a);
        if a.len() > 1 && adv.iter().any(|&x| (x - adv[0]).abs() > 1e-6) {
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_play_keeps_world_safe(seed in any::<u64>(), n in 2usize..6, dynamic in any::<bool>()) {
        let mut w = WorldConfig::static_scenario(n);
        w.grid_dims = [14, 14, 5];
        w.obstacle_density = 0.1;
        w.max_ticks = 80;
        if dynamic {
            w.task_interval = Some(4.0);
            w.max_active_tasks = n + 2;
        }
        let tally = safety_sweep(&w, seed, None);
        prop_assert!(tally.clean(), "{:?}", tally);
        prop_assert!(tally.ticks > 0);
    }
}

#[test]
fn ground_grid_without_obstacles_gives_manhattan_paths() {
    let grid = Grid::new([10, 10, 3]);
    let p = astar(&grid, Cell::new(0, 0, 0), Cell::new(7, 4, 0), MotionModel::Ground4, None).unwrap();
    assert_eq!(p.moves(), 11);
    let q = astar(&grid, Cell::new(0, 0, 0), Cell::new(7, 4, 2), MotionModel::Aerial6, None).unwrap();
    assert_eq!(q.moves(), 13);
}
