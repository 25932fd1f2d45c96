use fdrcast_core::channel::{self, bernoulli, GilbertElliottParams};
use fdrcast_core::data::{
    chronological_split, compute_target, load_outcomes, make_windows, window_count, write_outcomes, OutcomeSeries,
    SplitSpec, TraceFormat,
};
use proptest::prelude::*;

fn series(bits: Vec<u8>) -> OutcomeSeries {
    OutcomeSeries::new(bits, "prop").unwrap()
}

fn bits(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 1..max_len)
}

/// Closed form: anchors run from l-1 to len-N_f-1 inclusive.
fn closed_form(len: usize, l: usize, h: usize, stride: usize) -> usize {
    if len < l + h {
        0
    } else {
        (len - l - h + 1).div_ceil(stride)
    }
}

proptest! {
    #[test]
    fn targets_match_direct_mean(b in bits(400), l in 1usize..20, h in 1usize..20, stride in 1usize..5) {
        let s = series(b.clone());
        match make_windows(&s, l, h, stride) {
            Ok(ds) => {
                prop_assert_eq!(ds.len(), closed_form(b.len(), l, h, stride));
                for k in 0..ds.len() {
                    let i = ds.anchors()[k];
                    let mean = b[i + 1..=i + h].iter().map(|&x| x as f64).sum::<f64>() / h as f64;
                    prop_assert!((ds.target(k) - mean).abs() <= 1e-12);
                    prop_assert_eq!(ds.pattern(k), &b[i + 1 - l..=i]);
                    prop_assert!((0.0..=1.0).contains(&ds.target(k)));
                }
            }
            Err(_) => prop_assert!(b.len() < l + h),
        }
    }

    #[test]
    fn window_count_matches_closed_form(len in 0usize..5000, l in 1usize..300, h in 1usize..300, stride in 1usize..50) {
        prop_assert_eq!(window_count(len, l, h, stride), closed_form(len, l, h, stride));
    }

    #[test]
    fn split_is_a_partition(b in bits(500), a in 0.0f64..1.0, c in 0.0f64..1.0) {
        let (train, rest) = (a, 1.0 - a);
        let spec = SplitSpec::new(train, rest * c, 1.0 - train - rest * c);
        prop_assume!(spec.is_ok());
        let s = series(b.clone());
        let sp = chronological_split(&s, &spec.unwrap()).unwrap();
        let joined: Vec<u8> = [sp.train.outcomes(), sp.validation.outcomes(), sp.test.outcomes()].concat();
        prop_assert_eq!(joined, b);
    }

    #[test]
    fn bitline_and_csv_round_trip(b in bits(300)) {
        let s = series(b);
        for fmt in [TraceFormat::Bitline, TraceFormat::Csv] {
            let mut buf = Vec::new();
            write_outcomes(&s, &mut buf, fmt).unwrap();
            let back = load_outcomes(buf.as_slice(), fmt).unwrap();
            prop_assert_eq!(back.outcomes(), s.outcomes());
        }
    }
}

#[test]
fn targets_at_random_indices_of_long_series() {
    let s = bernoulli(0.6, 100_000, 42).unwrap();
    let x = s.outcomes();
    let h = 3600;
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for _ in 0..1000 {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let i = (state % (x.len() - h) as u64) as usize;
        let direct = x[i + 1..=i + h].iter().filter(|&&v| v == 1).count() as f64 / h as f64;
        assert!((compute_target(&s, i, h).unwrap() - direct).abs() <= 1e-12);
    }
}

#[test]
fn gilbert_elliott_sojourns_are_geometric() {
    let params = GilbertElliottParams::paper_like(3);
    let (_, states) = channel::simulate_with_states(&params, 1_000_000).unwrap();
    let mut runs = Vec::new();
    let mut current = 0usize;
    for s in &states {
        if *s == channel::ChannelState::Bad {
            current += 1;
        } else if current > 0 {
            runs.push(current);
            current = 0;
        }
    }
    let mean = runs.iter().sum::<usize>() as f64 / runs.len() as f64;
    let expected = 1.0 / params.p_bad_to_good;
    assert!((mean - expected).abs() / expected < 0.05, "mean bad sojourn {mean} vs {expected}");
}
