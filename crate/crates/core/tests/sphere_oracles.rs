use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skyfed_core::sphere::{
    angular_distance, cover, trixel_bounds, trixel_of, Cone, SkyCoord, TrixelId, UnitVec3,
};

fn random_coord(rng: &mut impl Rng) -> SkyCoord {
    let ra = rng.random_range(0.0..360.0);
    let dec = rng.random_range(-1.0f64..1.0).asin().to_degrees();
    SkyCoord::new(ra, dec).unwrap()
}

// Double-double helpers for the extended-precision oracle.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(a.0, b.0);
    let e = e + a.1 + b.1;
    two_sum(s, e)
}

fn dd_square(a: (f64, f64)) -> (f64, f64) {
    let p = a.0 * a.0;
    let e = a.0.mul_add(a.0, -p) + 2.0 * a.0 * a.1;
    two_sum(p, e)
}

fn dd_norm(v: [(f64, f64); 3]) -> f64 {
    let s = dd_add(dd_add(dd_square(v[0]), dd_square(v[1])), dd_square(v[2]));
    (s.0 + s.1).sqrt()
}

/// Separation from the chord and the sum vector, `2 atan2(|a-b|, |a+b|)`,
/// with exact component differences.
fn oracle_distance(a: SkyCoord, b: SkyCoord) -> f64 {
    let u = a.to_cartesian().to_array();
    let v = b.to_cartesian().to_array();
    let diff = [two_sum(u[0], -v[0]), two_sum(u[1], -v[1]), two_sum(u[2], -v[2])];
    let sum = [two_sum(u[0], v[0]), two_sum(u[1], v[1]), two_sum(u[2], v[2])];
    (2.0 * dd_norm(diff).atan2(dd_norm(sum))).to_degrees()
}

fn inside_triangle(t: &[UnitVec3; 3], p: &UnitVec3) -> bool {
    (0..3).all(|i| {
        let n = t[i].cross(&t[(i + 1) % 3]);
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        (n[0] * p.x() + n[1] * p.y() + n[2] * p.z()) / len >= -1e-12
    })
}

#[test]
fn distance_matches_extended_precision_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let a = random_coord(&mut rng);
        // Mix in near-coincident and near-antipodal pairs.
        let b = match i % 4 {
            0 => SkyCoord::new(a.ra() + rng.random_range(-1e-6..1e-6), a.dec() * 0.999_999_9).unwrap(),
            1 => SkyCoord::new(a.ra() + 180.0 + rng.random_range(-1e-6..1e-6), -a.dec()).unwrap(),
            _ => random_coord(&mut rng),
        };
        let got = angular_distance(a, b);
        let want = oracle_distance(a, b);
        assert!((got - want).abs() < 1e-9, "{a} {b}: {got} vs {want}");
    }
}

#[test]
fn point_location_contained_in_cell_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let c = random_coord(&mut rng);
        let t = trixel_of(c, 8).unwrap();
        assert_eq!(t.depth(), 8);
        let v = trixel_bounds(t).unwrap();
        assert!(inside_triangle(&v, &c.to_cartesian()), "{c} not in {t}");
    }
}

#[test]
fn cover_is_sound_against_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let points: Vec<SkyCoord> = (0..20_000).map(|_| random_coord(&mut rng)).collect();
    let depth = 7;
    let cells: Vec<TrixelId> = points.iter().map(|p| trixel_of(*p, depth).unwrap()).collect();
    for i in 0..200 {
        let radius = match i % 3 {
            0 => rng.random_range(0.0..2.0),
            1 => rng.random_range(0.0..30.0),
            _ => rng.random_range(0.0..180.0),
        };
        let k = Cone::new(random_coord(&mut rng), radius).unwrap();
        let cv = cover(&k, depth).unwrap();
        for (p, t) in points.iter().zip(&cells) {
            if angular_distance(*p, k.center()) <= k.radius() {
                assert!(cv.covers(*t), "point {p} in cone {k:?} but {t} not covered");
            }
            if cv.full.iter().any(|f| f.contains_id(*t)) {
                assert!(k.contains(*p), "point {p} in full cell but outside {k:?}");
            }
        }
    }
}

#[test]
fn cover_on_points_exactly_at_the_boundary() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..2_000 {
        let center = random_coord(&mut rng);
        let p = random_coord(&mut rng);
        let r = angular_distance(center, p);
        let k = Cone::new(center, r).unwrap();
        let depth = rng.random_range(0..=12);
        let cv = cover(&k, depth).unwrap();
        assert!(cv.covers(trixel_of(p, depth).unwrap()));
    }
}

fn coord_strategy() -> impl Strategy<Value = SkyCoord> {
    (0.0..360.0f64, -90.0..=90.0f64).prop_map(|(ra, dec)| SkyCoord::new(ra, dec).unwrap())
}

proptest! {
    #[test]
    fn location_is_hierarchical(c in coord_strategy(), d in 0u8..20) {
        let here = trixel_of(c, d).unwrap();
        let below = trixel_of(c, d + 1).unwrap();
        prop_assert_eq!(below.parent(), Some(here));
        prop_assert!(here.contains_id(trixel_of(c, 20).unwrap()));
    }

    #[test]
    fn distance_is_a_metric(a in coord_strategy(), b in coord_strategy(), c in coord_strategy()) {
        let ab = angular_distance(a, b);
        prop_assert!((0.0..=180.0).contains(&ab));
        prop_assert_eq!(ab, angular_distance(b, a));
        prop_assert!(ab <= angular_distance(a, c) + angular_distance(c, b) + 1e-9);
    }

    #[test]
    fn cartesian_round_trip(c in coord_strategy()) {
        let back = SkyCoord::from_cartesian(c.to_cartesian());
        prop_assert!(angular_distance(back, c) < 1e-9);
        let v = c.to_cartesian();
        prop_assert!((v.dot(&v) - 1.0).abs() < 1e-12);
    }
}
