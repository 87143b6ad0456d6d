use pace_core::dynamics::Variant;
use pace_core::inputs::{adv_cr_killer, adv_envy_worstcase, gen, FiniteDistribution, InputModel, InputModelSpec};
use pace_core::model::{extremity, validate_instance};
use proptest::prelude::*;

fn iid_spec() -> impl Strategy<Value = InputModelSpec> {
    (1..=4usize, 1..=6usize, 1..=500usize, any::<u64>()).prop_flat_map(|(n, k, t, seed)| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), k),
            prop::collection::vec(0.05f64..1.0, k),
        )
            .prop_filter_map("agent with zero mean", move |(support, raw)| {
                let s: f64 = raw.iter().sum();
                let dist = FiniteDistribution::new(support, raw.iter().map(|p| p / s).collect()).ok()?;
                dist.validate().ok()?;
                Some(InputModelSpec::new(InputModel::Iid { dist }, t, seed))
            })
    })
}

fn periodic_spec() -> impl Strategy<Value = InputModelSpec> {
    (1..=3usize, 1..=4usize, 1..=300usize, any::<u64>()).prop_flat_map(|(n, q, t, seed)| {
        prop::collection::vec(prop::collection::vec(prop::collection::vec(0.1f64..1.0, n), 1..=5), q)
            .prop_map(move |pools| InputModelSpec::new(InputModel::Periodic { pools }, t, seed))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iid_generation_is_deterministic_and_valid(spec in iid_spec()) {
        let a = gen(&spec).unwrap();
        let b = gen(&spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.horizon(), spec.t);
        let rows = a.to_rows();
        let support = match &spec.model {
            InputModel::Iid { dist } => &dist.support,
            _ => unreachable!(),
        };
        prop_assert!(rows.iter().all(|r| support.contains(r)));
        prop_assert!(rows.iter().all(|r| r.iter().all(|x| x.is_finite() && *x >= 0.0)));
    }

    #[test]
    fn periodic_rows_come_from_their_pool(spec in periodic_spec()) {
        let v = gen(&spec).unwrap();
        let pools = match &spec.model {
            InputModel::Periodic { pools } => pools,
            _ => unreachable!(),
        };
        for (tau, row) in v.rows().enumerate() {
            prop_assert!(pools[tau % pools.len()].iter().any(|p| p.as_slice() == row));
        }
        let report = validate_instance(&v.to_rows(), &vec![1.0; v.agents()]);
        prop_assert!(report.passed());
    }
}

#[test]
fn envy_construction_is_exactly_non_extreme() {
    for (eps, a) in [(0.1, 1.001), (0.5, 1.01), (0.25, 1.05), (1.0, 1.1)] {
        let c = adv_envy_worstcase(eps, a, 5_000).unwrap();
        assert_eq!(extremity(&c.instance).unwrap().0, eps);
        assert!(validate_instance(&c.instance.to_rows(), &[1.0, 1.0]).passed());
    }
}

#[test]
fn killer_witness_collects_whole_phases() {
    for (n, phases) in [(2, vec![10, 1000]), (3, vec![7, 50, 400]), (4, vec![1, 2, 3, 4])] {
        for policy in [Variant::Unconstrained, Variant::Proportional, Variant::OneStepGreedy] {
            let k = adv_cr_killer(n, &phases, &policy).unwrap();
            assert_eq!(k.instance.horizon(), *phases.last().unwrap());
            let mut prev = 0;
            for (j, &end) in phases.iter().enumerate() {
                assert_eq!(k.witness_utilities[k.order[j]], (end - prev) as f64);
                prev = end;
            }
            let mut order = k.order.clone();
            order.sort_unstable();
            assert_eq!(order, (0..n).collect::<Vec<_>>());
            // The witness takes only items its agent values.
            let mut start = 0;
            for (j, &end) in phases.iter().enumerate() {
                for tau in start..end {
                    assert_eq!(k.instance.get(tau, k.order[j]), 1.0);
                }
                start = end;
            }
        }
    }
}
