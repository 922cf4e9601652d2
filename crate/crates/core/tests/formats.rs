use mixgate::harness::{parse_circuit, Circuit, CountDataset, GateLabel};
use proptest::prelude::*;

fn label() -> impl Strategy<Value = GateLabel> {
    let q = 1u8..=2;
    prop_oneof![
        q.clone().prop_map(GateLabel::Xp),
        q.clone().prop_map(GateLabel::Xm),
        q.clone().prop_map(GateLabel::Yp),
        q.clone().prop_map(GateLabel::Ym),
        q.clone().prop_map(GateLabel::Zp),
        q.clone().prop_map(GateLabel::Zm),
        q.clone().prop_map(GateLabel::Pi),
        Just(GateLabel::Gzz),
        (q, any::<i32>()).prop_map(|(q, md)| GateLabel::Rot(q, md)),
    ]
}

fn circuit() -> impl Strategy<Value = Circuit> {
    prop::collection::vec(label(), 0..16).prop_map(Circuit::new)
}

fn counts() -> impl Strategy<Value = [u64; 4]> {
    (any::<[u32; 4]>(), 0usize..4).prop_map(|(c, k)| {
        let mut n = c.map(u64::from);
        n[k] += 1;
        n
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn circuit_text_round_trips(c in circuit()) {
        let text = c.to_string();
        let back = parse_circuit(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn repetition_expands(c in circuit(), n in 1usize..5) {
        prop_assume!(!c.is_empty());
        let text = format!("({c})^{n}");
        prop_assert_eq!(parse_circuit(&text).unwrap(), c.repeat(n));
    }

    #[test]
    fn dataset_text_round_trips(records in prop::collection::vec((circuit(), counts()), 0..8), seed in any::<u64>()) {
        let mut ds = CountDataset::new();
        ds.set_meta("seed", seed.to_string());
        ds.set_meta("backend", "sim");
        for (c, n) in records {
            ds.push(c, n);
        }
        let text = ds.to_text();
        let back = CountDataset::from_text(&text).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(back.to_text(), text);
    }
}

#[test]
fn extreme_rotation_angles_round_trip() {
    for md in [i32::MIN, i32::MIN + 1, -1, 0, 1, i32::MAX] {
        let c = Circuit::new(vec![GateLabel::Rot(1, md)]);
        assert_eq!(parse_circuit(&c.to_string()).unwrap(), c, "{c}");
    }
}

#[test]
fn large_dataset_round_trip_is_bit_exact() {
    let mut ds = CountDataset::new();
    ds.set_meta("seed", "3");
    let base = parse_circuit("Gxp:1 Gzz Gr22.5:2").unwrap();
    for i in 0..1000u64 {
        ds.push(base.repeat(1 + (i % 4) as usize), [i, 1, i * 7, 3]);
    }
    let text = ds.to_text();
    assert_eq!(CountDataset::from_text(&text).unwrap().to_text(), text);
}
