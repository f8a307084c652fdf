use miniclevr::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn terminal_node_matches_family() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..300u64 {
        let scene = Scene::from_seed(i, 48);
        for family in Family::ALL {
            let Ok(p) = sample_program(&mut rng, &scene, family) else { continue };
            assert_eq!(Family::of(&p), Some(family));
            if family == Family::Exist {
                assert_eq!(p.terminal(), Some(Function::Exist));
            }
        }
    }
}

#[test]
fn query_programs_resolve_to_unique_objects() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut n = 0;
    for i in 0..500u64 {
        let scene = Scene::from_seed(i, 48);
        for family in [Family::QueryAttribute, Family::CompareAttribute] {
            if let Ok(p) = sample_program(&mut rng, &scene, family) {
                execute(&p, &scene).expect("unique precondition holds");
                n += 1;
            }
        }
    }
    assert!(n > 900);
}

#[test]
fn count_answers_have_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hist = [0usize; MAX_COUNT + 1];
    let mut n = 0;
    for i in 0..10_000u64 {
        let scene = Scene::from_seed(i, 48);
        let Ok(p) = sample_program(&mut rng, &scene, Family::Count) else { continue };
        hist[execute(&p, &scene).unwrap().as_count().unwrap()] += 1;
        n += 1;
    }
    let entropy: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum();
    assert!(entropy >= 1.5, "count entropy {entropy:.3} bits, histogram {hist:?}");
}

#[test]
fn quintet_layout() {
    let [a, b, eq, gt, lt] = comparison_quintet(AttrValue::Shape(Shape::Circle), AttrValue::Shape(Shape::Square));
    assert_eq!(a.terminal(), Some(Function::Count));
    assert_eq!(b.terminal(), Some(Function::Count));
    assert_eq!(eq.terminal(), Some(Function::EqualInteger));
    assert_eq!(gt.terminal(), Some(Function::GreaterThan));
    assert_eq!(lt.terminal(), Some(Function::LessThan));
}
