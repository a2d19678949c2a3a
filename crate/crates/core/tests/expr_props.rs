use ifsthermo_core::expr::parse_expr;
use proptest::prelude::*;

/// Random expression source together with the points where it may be
/// non-differentiable, and how far from them finite differences are reliable.
#[derive(Debug, Clone)]
struct Source {
    text: String,
    kinks: Vec<(f64, f64)>,
}

fn leaf() -> impl Strategy<Value = Source> {
    prop_oneof![
        Just(Source { text: "x".into(), kinks: vec![] }),
        Just(Source { text: "p".into(), kinks: vec![] }),
        (-3.0f64..3.0).prop_map(|c| Source { text: format!("{c:.3}"), kinks: vec![] }),
        (0.05f64..0.95, 1u32..4).prop_map(|(c, n)| Source {
            text: format!("phi(x - {c:.3}, {n})"),
            // derivatives of order 3 grow like |u|^(n - 2) / u^4
            kinks: vec![((c * 1000.0).round() / 1000.0, 1e-2)],
        }),
        (0.05f64..0.95).prop_map(|c| Source {
            text: format!("abs(x - {c:.3})"),
            kinks: vec![((c * 1000.0).round() / 1000.0, 1e-3)],
        }),
    ]
}

fn source() -> impl Strategy<Value = Source> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        let join = |a: Source, b: Source, text: String| {
            let mut kinks = a.kinks;
            kinks.extend(b.kinks);
            Source { text, kinks }
        };
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| {
                let t = format!("({} + {})", a.text, b.text);
                join(a, b, t)
            }),
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| {
                let t = format!("({} - {})", a.text, b.text);
                join(a, b, t)
            }),
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| {
                let t = format!("({} * {})", a.text, b.text);
                join(a, b, t)
            }),
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| {
                let t = format!("({} / (0.5 + {} * {}))", a.text, b.text, b.text);
                join(a, b, t)
            }),
            (inner.clone(), 0i32..4).prop_map(|(a, k)| Source {
                text: format!("pow({}, {k})", a.text),
                kinks: a.kinks,
            }),
            inner.clone().prop_map(|a| Source { text: format!("sin({})", a.text), kinks: a.kinks }),
            inner.clone().prop_map(|a| Source { text: format!("cos({})", a.text), kinks: a.kinks }),
            inner.clone().prop_map(|a| Source { text: format!("exp(sin({}))", a.text), kinks: a.kinks }),
            inner.clone().prop_map(|a| Source {
                text: format!("log(1 + {} * {})", a.text, a.text),
                kinks: a.kinks,
            }),
            inner.prop_map(|a| Source { text: format!("-{}", a.text), kinks: a.kinks }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn derivative_matches_central_difference(src in source(), p in -1.0f64..1.0, xs in prop::collection::vec(0.0f64..1.0, 100)) {
        let e = parse_expr(&src.text).unwrap();
        let d = e.diff_x();
        let h = 1e-6;
        for x in xs {
            if src.kinks.iter().any(|(c, r)| (x - c).abs() < *r) {
                continue;
            }
            let (Ok(up), Ok(down), Ok(exact)) = (e.eval(x + h, p), e.eval(x - h, p), d.eval(x, p)) else {
                continue;
            };
            let fd = (up - down) / (2.0 * h);
            prop_assert!(
                (exact - fd).abs() <= 1e-4 * (1.0 + exact.abs()),
                "{} at x = {x}: d = {exact}, fd = {fd}", src.text
            );
        }
    }

    #[test]
    fn print_parse_round_trip(src in source(), xs in prop::collection::vec(0.0f64..1.0, 100), p in -1.0f64..1.0) {
        let e = parse_expr(&src.text).unwrap();
        let printed = e.to_string();
        let back = parse_expr(&printed).unwrap();
        for x in xs {
            match (e.eval(x, p), back.eval(x, p)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits(), "{} vs {}", src.text, printed),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{} vs {}: {:?} / {:?}", src.text, printed, a, b),
            }
        }
        let d = e.diff_x();
        let d_back = parse_expr(&d.to_string()).unwrap();
        for x in [0.1, 0.37, 0.81] {
            if let (Ok(a), Ok(b)) = (d.eval(x, p), d_back.eval(x, p)) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
