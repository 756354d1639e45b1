use clockprobe::angular_momentum::{
    clebsch_gordan, triangle_ok, wigner_3j, wigner_3j_via_clebsch_gordan, wigner_6j, ExactRadical, HalfInt,
};
use clockprobe::rng::stream;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::Rng;

fn hi(twice: i32) -> HalfInt {
    HalfInt::from_twice(twice)
}

fn projections(tj: i32) -> impl Iterator<Item = i32> {
    (-tj..=tj).step_by(2)
}

#[test]
fn m_sum_rule_exhaustive_to_six() {
    let mut checked = 0u64;
    for a in 0..=12 {
        for b in 0..=12 {
            for c in 0..=12 {
                for x in projections(a) {
                    for y in projections(b) {
                        for z in projections(c) {
                            if x + y + z == 0 {
                                continue;
                            }
                            let v = wigner_3j(hi(a), hi(b), hi(c), hi(x), hi(y), hi(z)).unwrap();
                            assert!(v.is_zero(), "({a} {b} {c}; {x} {y} {z})/2");
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 500_000);
}

#[test]
fn orthogonality_exact_to_four() {
    for a in 0..=8 {
        for b in 0..=8 {
            for c in 0..=8 {
                if !triangle_ok(hi(a), hi(b), hi(c)) {
                    continue;
                }
                for z in projections(c) {
                    let mut sum = BigRational::zero();
                    for x in projections(a) {
                        let y = -x - z;
                        if y.abs() > b {
                            continue;
                        }
                        sum += wigner_3j(hi(a), hi(b), hi(c), hi(x), hi(y), hi(z)).unwrap().square();
                    }
                    let total = sum * BigRational::from_integer((c + 1).into());
                    assert!(total.is_one(), "({a} {b} {c}) m3 = {z}/2: {total}");
                }
            }
        }
    }
}

/// Random valid `(j1 j2 j3; m1 m2 m3)` with the m-sum rule satisfied.
fn random_valid_3j<R: Rng>(rng: &mut R, max_twice: i32) -> [i32; 6] {
    loop {
        let a = rng.random_range(0..=max_twice);
        let b = rng.random_range(0..=max_twice);
        let lo = (a - b).abs();
        let hi_c = a + b;
        let c = lo + 2 * rng.random_range(0..=(hi_c - lo) / 2);
        let x = -a + 2 * rng.random_range(0..=a);
        let y = -b + 2 * rng.random_range(0..=b);
        let z = -x - y;
        if z.abs() <= c {
            return [a, b, c, x, y, z];
        }
    }
}

#[test]
fn three_j_matches_clebsch_gordan_oracle_on_500_inputs() {
    let mut rng = stream(2024, "cg-oracle", &[]);
    let mut nonzero = 0;
    for _ in 0..500 {
        let [a, b, c, x, y, z] = random_valid_3j(&mut rng, 16);
        let direct = wigner_3j(hi(a), hi(b), hi(c), hi(x), hi(y), hi(z)).unwrap();
        let via_cg = wigner_3j_via_clebsch_gordan(hi(a), hi(b), hi(c), hi(x), hi(y), hi(z)).unwrap();
        assert_eq!(direct, via_cg, "({a} {b} {c}; {x} {y} {z})/2");
        nonzero += usize::from(!direct.is_zero());
    }
    assert!(nonzero > 400);
}

#[test]
fn clebsch_gordan_columns_are_normalised() {
    // Σ_{j} |<j1 m1; j2 m2 | j m>|² = 1 for every (m1, m2).
    for (a, b) in [(1, 1), (2, 3), (4, 2), (7, 2)] {
        for x in projections(a) {
            for y in projections(b) {
                let mut sum = BigRational::zero();
                for c in ((a - b).abs()..=a + b).step_by(2) {
                    if (x + y).abs() <= c {
                        sum += clebsch_gordan(hi(a), hi(b), hi(c), hi(x), hi(y), hi(x + y))
                            .unwrap()
                            .square();
                    }
                }
                assert!(sum.is_one());
            }
        }
    }
}

/// 6j as a contraction of four 3j symbols, in floating point.
fn six_j_by_contraction(j: [i32; 6]) -> f64 {
    let [a, b, c, d, e, f] = j;
    let w = |j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32| {
        if m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
            return 0.0;
        }
        wigner_3j(hi(j1), hi(j2), hi(j3), hi(m1), hi(m2), hi(m3))
            .unwrap()
            .to_f64()
    };
    let mut sum = 0.0;
    for m1 in projections(a) {
        for m2 in projections(b) {
            let m3 = -m1 - m2;
            if m3.abs() > c {
                continue;
            }
            for m5 in projections(e) {
                let m6 = m5 - m1;
                if m6.abs() > f {
                    continue;
                }
                let m4 = m5 + m3;
                if m4.abs() > d {
                    continue;
                }
                let phase_twice = (a - m1) + (b - m2) + (c - m3) + (d - m4) + (e - m5) + (f - m6);
                let phase = if (phase_twice / 2) % 2 == 0 { 1.0 } else { -1.0 };
                // (j1 j2 j3; -m1 -m2 -m3)(j1 j5 j6; m1 -m5 m6)
                // (j4 j2 j6; m4 m2 -m6)(j4 j5 j3; -m4 m5 m3)
                sum += phase
                    * w(a, b, c, -m1, -m2, -m3)
                    * w(a, e, f, m1, -m5, m6)
                    * w(d, b, f, m4, m2, -m6)
                    * w(d, e, c, -m4, m5, m3);
            }
        }
    }
    sum
}

#[test]
fn six_j_matches_four_3j_contraction() {
    let cases = [
        [2, 2, 2, 2, 2, 2],
        [1, 3, 2, 10, 8, 7],
        [1, 3, 2, 8, 8, 7],
        [1, 3, 2, 6, 4, 7],
        [4, 4, 4, 2, 6, 4],
        [3, 5, 4, 3, 5, 2],
    ];
    for j in cases {
        let exact = wigner_6j(hi(j[0]), hi(j[1]), hi(j[2]), hi(j[3]), hi(j[4]), hi(j[5])).unwrap();
        let oracle = six_j_by_contraction(j);
        assert!(
            (exact.to_f64() - oracle).abs() < 1e-12,
            "{j:?}: {} vs {oracle}",
            exact.to_f64()
        );
    }
    assert!((six_j_by_contraction([2; 6]) - 1.0 / 6.0).abs() < 1e-14);
}

fn valid_3j() -> impl Strategy<Value = [i32; 6]> {
    any::<u64>().prop_map(|seed| {
        let mut rng = stream(seed, "prop-3j", &[]);
        random_valid_3j(&mut rng, 12)
    })
}

fn valid_6j() -> impl Strategy<Value = [i32; 6]> {
    any::<u64>().prop_map(|seed| {
        let mut rng = stream(seed, "prop-6j", &[]);
        loop {
            let v: [i32; 6] = std::array::from_fn(|_| rng.random_range(0..=10));
            let [a, b, c, d, e, f] = v;
            let ok = |x, y, z| triangle_ok(hi(x), hi(y), hi(z));
            if ok(a, b, c) && ok(a, e, f) && ok(d, b, f) && ok(d, e, c) {
                return v;
            }
        }
    })
}

fn tri_sign(a: i32, b: i32, c: i32) -> i8 {
    if ((a + b + c) / 2) % 2 == 0 {
        1
    } else {
        -1
    }
}

fn times(v: &ExactRadical, s: i8) -> ExactRadical {
    if s < 0 {
        v.negate()
    } else {
        v.clone()
    }
}

proptest! {
    #[test]
    fn three_j_column_symmetry(j in valid_3j()) {
        let [a, b, c, x, y, z] = j;
        let base = wigner_3j(hi(a), hi(b), hi(c), hi(x), hi(y), hi(z)).unwrap();
        let even = [
            wigner_3j(hi(b), hi(c), hi(a), hi(y), hi(z), hi(x)).unwrap(),
            wigner_3j(hi(c), hi(a), hi(b), hi(z), hi(x), hi(y)).unwrap(),
        ];
        for v in even {
            prop_assert_eq!(&v, &base);
        }
        let s = tri_sign(a, b, c);
        let odd = [
            wigner_3j(hi(b), hi(a), hi(c), hi(y), hi(x), hi(z)).unwrap(),
            wigner_3j(hi(a), hi(c), hi(b), hi(x), hi(z), hi(y)).unwrap(),
            wigner_3j(hi(c), hi(b), hi(a), hi(z), hi(y), hi(x)).unwrap(),
            wigner_3j(hi(a), hi(b), hi(c), hi(-x), hi(-y), hi(-z)).unwrap(),
        ];
        for v in odd {
            prop_assert_eq!(v, times(&base, s));
        }
    }

    #[test]
    fn six_j_tetrahedral_symmetry(j in valid_6j()) {
        let six = |v: [i32; 6]| wigner_6j(hi(v[0]), hi(v[1]), hi(v[2]), hi(v[3]), hi(v[4]), hi(v[5])).unwrap();
        let [a, b, c, d, e, f] = j;
        let base = six(j);
        let variants = [
            [b, a, c, e, d, f],
            [a, c, b, d, f, e],
            [c, b, a, f, e, d],
            [b, c, a, e, f, d],
            [d, e, c, a, b, f],
            [d, b, f, a, e, c],
            [a, e, f, d, b, c],
        ];
        for v in variants {
            prop_assert_eq!(six(v), base.clone());
        }
    }

    #[test]
    fn radicals_round_trip_through_signed_square(j in valid_3j()) {
        let [a, b, c, x, y, z] = j;
        let v = wigner_3j(hi(a), hi(b), hi(c), hi(x), hi(y), hi(z)).unwrap();
        let back = ExactRadical::from_signed_square(v.signed_square());
        prop_assert_eq!(&back, &v);
        prop_assert_eq!(v.to_f64() < 0.0, v.sign() < 0);
    }
}
