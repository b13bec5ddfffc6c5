use macrodim::lattice::{
    box_cardinality, box_points, cube_chain, delta, in_box, morton_key, order_cmp, shell_cardinality, shell_of,
    shell_points, tree_dist, DyadicCube, LatticePoint,
};
use proptest::prelude::*;

fn point(d: usize, r: i64) -> impl Strategy<Value = LatticePoint> {
    prop::collection::vec(-r..r, d).prop_map(|c| LatticePoint::new(&c).unwrap())
}

fn any_point() -> impl Strategy<Value = LatticePoint> {
    (1usize..=4).prop_flat_map(|d| point(d, 1 << 20))
}

#[test]
fn shells_partition_boxes() {
    for d in 1..=3 {
        for n in 0..=4 {
            let total = box_points(d, n).count() as u128;
            assert_eq!(total, box_cardinality(d, n));
            let by_shell: u128 = (0..=n).map(|k| shell_points(d, k).count() as u128).sum();
            assert_eq!(by_shell, total);
            assert_eq!(shell_points(d, n).count() as u128, shell_cardinality(d, n));
            assert!(shell_points(d, n).all(|x| shell_of(&x) == n && in_box(&x, n)));
        }
    }
}

#[test]
fn box_of_level_two_in_three_dimensions() {
    assert_eq!(box_cardinality(3, 2), 512);
    assert_eq!(shell_cardinality(3, 0), 8);
}

#[test]
fn morton_keys_follow_forest_order() {
    let mut pts: Vec<LatticePoint> = shell_points(2, 3).collect();
    pts.sort_by(order_cmp);
    for w in pts.windows(2) {
        assert_eq!(order_cmp(&w[0], &w[1]), std::cmp::Ordering::Less);
        assert!(morton_key(&w[0], 3) < morton_key(&w[1], 3));
    }
}

#[test]
fn tree_distance_extremes() {
    let x = LatticePoint::new(&[-8, -8]).unwrap();
    assert_eq!(tree_dist(&x, &x).unwrap(), 4);
    let far = LatticePoint::new(&[7, 7]).unwrap();
    assert_eq!(tree_dist(&x, &far).unwrap(), 0);
    let other_shell = LatticePoint::new(&[0, 0]).unwrap();
    assert!(tree_dist(&x, &other_shell).is_err());
}

proptest! {
    #[test]
    fn delta_is_shell_plus_one(x in any_point()) {
        prop_assert_eq!(delta(&x), shell_of(&x) + 1);
        prop_assert!(in_box(&x, shell_of(&x)));
        prop_assert!(shell_of(&x) == 0 || !in_box(&x, shell_of(&x) - 1));
    }

    #[test]
    fn chains_nest(x in any_point()) {
        let chain = cube_chain(&x);
        prop_assert_eq!(chain.links.len() as u32, chain.shell + 1);
        prop_assert!(chain.links.iter().all(|q| q.contains(&x) && q.within_box(chain.shell)));
        for w in chain.links.windows(2) {
            prop_assert!(w[1].is_within(&w[0]));
            prop_assert_eq!(w[1].parent(), w[0]);
        }
    }

    #[test]
    fn children_partition_parent(x in (1usize..=3).prop_flat_map(|d| point(d, 64)), level in 1u32..5) {
        let q = DyadicCube::containing(&x, level);
        let kids = q.children().unwrap();
        prop_assert_eq!(kids.len(), 1 << x.dim());
        prop_assert_eq!(kids.iter().filter(|c| c.contains(&x)).count(), 1);
        prop_assert!(kids.iter().all(|c| c.parent() == q));
    }

    #[test]
    fn tree_distance_is_an_ultrametric_score(
        (x, y, z) in (1usize..=3).prop_flat_map(|d| (point(d, 1 << 12), point(d, 1 << 12), point(d, 1 << 12)))
    ) {
        // Map each point into shell 13 so that all three share a shell.
        let lift = |p: &LatticePoint| {
            let mut c = p.coords().to_vec();
            c[0] = 4096 + c[0].rem_euclid(4096);
            LatticePoint::new(&c).unwrap()
        };
        let (x, y, z) = (lift(&x), lift(&y), lift(&z));
        let dxy = tree_dist(&x, &y).unwrap();
        prop_assert_eq!(dxy, tree_dist(&y, &x).unwrap());
        prop_assert!(dxy <= 14);
        // Common ancestry deepens transitively.
        prop_assert!(tree_dist(&x, &z).unwrap() >= dxy.min(tree_dist(&y, &z).unwrap()));
    }
}
