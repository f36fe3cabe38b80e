use proptest::prelude::*;
use rnntrack::assignment::{brute_force_lap, brute_force_lap_with_misses, solve_lap, solve_lap_with_misses, Assignment, CostMatrix};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = CostMatrix> {
    (1..=max_rows, 0..=max_cols).prop_flat_map(|(n, m)| {
        prop::collection::vec(0.0..1.0f64, n * m).prop_map(move |d| CostMatrix::new(n, m, d).unwrap())
    })
}

fn recost(c: &CostMatrix, misses: &[f64], a: &Assignment) -> f64 {
    Assignment::evaluate(c, misses, a.rows.clone()).total_cost
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn hungarian_matches_brute_force(c in matrix(6, 7), miss in 0.0..1.0f64) {
        let fast = solve_lap(&c, miss).unwrap();
        let slow = brute_force_lap(&c, miss).unwrap();
        prop_assert!(fast.is_one_to_one());
        let misses = vec![miss; c.rows()];
        prop_assert_eq!(recost(&c, &misses, &fast), recost(&c, &misses, &slow));
        prop_assert_eq!(fast.rows, slow.rows);
    }

    #[test]
    fn per_row_miss_prices_match_brute_force(c in matrix(6, 6), seed in prop::collection::vec(0.0..1.0f64, 6)) {
        let misses = &seed[..c.rows()];
        let fast = solve_lap_with_misses(&c, misses).unwrap();
        let slow = brute_force_lap_with_misses(&c, misses).unwrap();
        prop_assert!(fast.is_one_to_one());
        prop_assert_eq!(recost(&c, misses, &fast), recost(&c, misses, &slow));
    }

    #[test]
    fn larger_problems_still_match(c in matrix(8, 8), miss in 0.0..1.0f64) {
        let fast = solve_lap(&c, miss).unwrap();
        let slow = brute_force_lap(&c, miss).unwrap();
        prop_assert!((fast.total_cost - slow.total_cost).abs() < 1e-12);
    }

    #[test]
    fn column_permutation_permutes_the_assignment(c in matrix(5, 6), miss in 0.0..1.0f64, keys in prop::collection::vec(any::<u32>(), 6)) {
        let m = c.cols();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.sort_by_key(|&j| (keys[j], j));
        let base = solve_lap(&c, miss).unwrap();
        let moved = solve_lap(&c.permute_cols(&perm), miss).unwrap();
        let mapped: Vec<Option<usize>> = moved.rows.iter().map(|r| r.map(|k| perm[k])).collect();
        prop_assert_eq!(mapped, base.rows);
    }

    #[test]
    fn shifting_a_row_and_its_miss_price(c in matrix(5, 5), seed in prop::collection::vec(0.0..1.0f64, 5), row in 0usize..5, k in 0.0..2.0f64) {
        let n = c.rows();
        let row = row % n;
        let misses = seed[..n].to_vec();
        let base = solve_lap_with_misses(&c, &misses).unwrap();
        let mut data = c.data().to_vec();
        for j in 0..c.cols() {
            data[row * c.cols() + j] += k;
        }
        let shifted = CostMatrix::new(n, c.cols(), data).unwrap();
        let mut shifted_misses = misses.clone();
        shifted_misses[row] += k;
        let moved = solve_lap_with_misses(&shifted, &shifted_misses).unwrap();
        prop_assert_eq!(&moved.rows, &base.rows);
        prop_assert!((moved.total_cost - base.total_cost - k).abs() < 1e-9);
    }
}
