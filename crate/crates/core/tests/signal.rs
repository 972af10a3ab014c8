use std::collections::BTreeSet;

use hemocast_core::bench::Normalizer;
use hemocast_core::signal::{
    alert_scan, assemble_dataset, downsample, ingest_csv, make_windows, read_cache, write_cache, write_csv, CsvSchema,
    RtSeries, SplitMode, SplitSpec, SwingStatistic, TrendRule, WindowCache, WindowSpec,
};
use hemocast_core::synth::{generate, inject_event, SynthConfig, TrendEvent};
use hemocast_core::{TrendLabel, WindowPair};
use proptest::prelude::*;

fn window(id: usize, rec: usize, label: TrendLabel, values: &[f64]) -> WindowPair {
    WindowPair {
        input: values[..values.len() / 2].to_vec(),
        target: values[values.len() / 2..].to_vec(),
        input_rpm: None,
        label,
        recording_id: format!("rec{rec}"),
        offset: id,
    }
}

fn label_strategy() -> impl Strategy<Value = TrendLabel> {
    prop_oneof![
        Just(TrendLabel::Increasing),
        Just(TrendLabel::Decreasing),
        Just(TrendLabel::Stationary)
    ]
}

proptest! {
    #[test]
    fn downsample_preserves_block_means(values in prop::collection::vec(20.0f64..200.0, 0..2000), block in 1usize..300) {
        let at = downsample(&RtSeries::new("r", values.clone(), None), block).unwrap();
        prop_assert_eq!(at.len(), values.len() / block);
        let total: f64 = values[..at.len() * block].iter().sum();
        let recovered: f64 = at.values.iter().map(|v| v * block as f64).sum();
        prop_assert!((total - recovered).abs() <= 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn windows_tile_the_series(len in 0usize..300, in_len in 1usize..40, out_len in 1usize..40, stride in 1usize..7) {
        let values: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let at = downsample(&RtSeries::new("r", values, None), 1).unwrap();
        let spec = WindowSpec { in_len, out_len, stride };
        let windows = make_windows(&at, spec, TrendRule::default()).unwrap();
        prop_assert_eq!(windows.len(), spec.count(len));
        for (k, w) in windows.iter().enumerate() {
            prop_assert_eq!(w.offset, k * stride);
            prop_assert_eq!(w.input.len(), in_len);
            prop_assert_eq!(w.target.len(), out_len);
            prop_assert_eq!(w.input[0], w.offset as f64);
            prop_assert_eq!(*w.target.last().unwrap(), (w.offset + in_len + out_len - 1) as f64);
        }
    }

    #[test]
    fn range_statistic_is_at_least_as_eager(seq in prop::collection::vec(40.0f64..120.0, 2..80)) {
        let net = TrendRule::default().classify(&seq).unwrap();
        let range = TrendRule { statistic: SwingStatistic::Range, ..TrendRule::default() }.classify(&seq).unwrap();
        // max − min ≥ |last − first|, so a net-change trend is never stationary by range
        if net != TrendLabel::Stationary {
            prop_assert_ne!(range, TrendLabel::Stationary);
        }
    }

    #[test]
    fn alert_runs_cover_exactly_the_low_values(values in prop::collection::vec(40.0f64..90.0, 0..100)) {
        let runs = alert_scan(&values, 65.0).unwrap();
        let mut covered = vec![false; values.len()];
        let mut prev_end: Option<usize> = None;
        for &(a, b) in &runs {
            prop_assert!(a <= b);
            // runs are maximal, so two runs never touch
            if let Some(e) = prev_end {
                prop_assert!(a > e + 1);
            }
            prev_end = Some(b);
            for c in &mut covered[a..=b] {
                *c = true;
            }
        }
        for (v, c) in values.iter().zip(&covered) {
            prop_assert_eq!(*v < 65.0, *c);
        }
    }

    #[test]
    fn splits_partition_the_filtered_windows(
        labels in prop::collection::vec(label_strategy(), 1..200),
        recordings in 1usize..10,
        by_recording in any::<bool>(),
        test_fraction in 0.0f64..=1.0,
        holdout_fraction in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let windows: Vec<WindowPair> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| window(i, i % recordings, l, &[0.0, 1.0]))
            .collect();
        let filter = [TrendLabel::Increasing, TrendLabel::Stationary];
        let spec = SplitSpec {
            train_fraction: 1.0 - test_fraction,
            test_fraction,
            holdout_fraction,
            mode: if by_recording { SplitMode::ByRecording } else { SplitMode::ByWindow },
            seed,
        };
        let kept: BTreeSet<usize> = windows.iter().filter(|w| filter.contains(&w.label)).map(|w| w.offset).collect();
        match assemble_dataset(windows, &spec, &filter) {
            Err(_) => prop_assert!(kept.is_empty()),
            Ok(d) => {
                let mut seen = BTreeSet::new();
                for split in [&d.train, &d.holdout, &d.test] {
                    prop_assert_eq!(split.composition.total(), split.len());
                    for w in &split.windows {
                        prop_assert!(seen.insert(w.offset), "window in two splits");
                    }
                }
                prop_assert_eq!(seen, kept);
                if by_recording {
                    let test_recs: BTreeSet<&str> = d.test.windows.iter().map(|w| w.recording_id.as_str()).collect();
                    for w in d.train.windows.iter().chain(&d.holdout.windows) {
                        prop_assert!(!test_recs.contains(w.recording_id.as_str()));
                    }
                }
            }
        }
    }

    #[test]
    fn cache_round_trips(
        rows in prop::collection::vec((prop::collection::vec(20.0f64..200.0, 6), label_strategy(), any::<bool>()), 0..20),
    ) {
        let windows: Vec<WindowPair> = rows
            .iter()
            .enumerate()
            .map(|(i, (v, l, rpm))| {
                let mut w = window(i * 3, i % 4, *l, v);
                if *rpm {
                    w.input_rpm = Some(vec![37000.0 + i as f64; 3]);
                }
                w
            })
            .collect();
        // a cache holds either all or no motor speeds
        let all_rpm = windows.iter().all(|w| w.input_rpm.is_some());
        let windows: Vec<WindowPair> = windows
            .into_iter()
            .map(|mut w| {
                if !all_rpm {
                    w.input_rpm = None;
                }
                w
            })
            .collect();
        let cache = WindowCache { in_len: 3, out_len: 3, windows };
        let mut bytes = Vec::new();
        write_cache(&mut bytes, &cache).unwrap();
        let back = read_cache(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(back, cache);
    }

    #[test]
    fn csv_round_trips_at_written_precision(values in prop::collection::vec((20.0f64..200.0, 30000.0f64..50000.0), 0..200)) {
        let (aop, rpm): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let series = RtSeries::new("rec", aop.clone(), Some(rpm.clone()));
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &series).unwrap();
        let back = ingest_csv(bytes.as_slice(), "rec", &CsvSchema::default()).unwrap();
        prop_assert_eq!(back.len(), aop.len());
        for (a, b) in back.aop.iter().zip(&aop) {
            prop_assert!((a - b).abs() <= 5e-5 + 1e-12);
        }
        for (a, b) in back.rpm.unwrap().iter().zip(&rpm) {
            prop_assert!((a - b).abs() <= 5e-2 + 1e-9);
        }
    }

    #[test]
    fn normalizer_inverts(values in prop::collection::vec(20.0f64..200.0, 4..40), z in -5.0f64..5.0) {
        prop_assume!(values.iter().any(|v| (v - values[0]).abs() > 1e-6));
        let w = window(0, 0, TrendLabel::Stationary, &values);
        let norm = Normalizer::fit(&[w]).unwrap();
        prop_assert!((norm.apply(norm.invert(z)) - z).abs() < 1e-9);
        let mean_z: f64 = values.iter().map(|v| norm.apply(*v)).sum::<f64>() / values.len() as f64;
        prop_assert!(mean_z.abs() < 1e-9);
    }

    /// A single ramp on a flat recording is recovered by the window labels:
    /// windows that contain the whole ramp take its direction, windows that
    /// miss it entirely are stationary.
    #[test]
    fn injected_event_is_recovered(
        start_step in 2usize..100,
        duration_steps in 1usize..50,
        magnitude in 10.5f64..30.0,
        up in any::<bool>(),
    ) {
        let base = generate(&SynthConfig::quiet(1800.0, 80.0), "flat").unwrap().series;
        let delta = if up { magnitude } else { -magnitude };
        let event = TrendEvent { start_s: start_step as f64 * 10.0, duration_s: duration_steps as f64 * 10.0, delta };
        let at = downsample(&inject_event(&base, &event).unwrap(), 250).unwrap();
        let windows = make_windows(&at, WindowSpec::default(), TrendRule::default()).unwrap();
        let want = if up { TrendLabel::Increasing } else { TrendLabel::Decreasing };
        let (first, last) = (start_step, start_step + duration_steps);
        for w in &windows {
            let span = w.offset..w.offset + 60;
            if w.offset < first && span.end > last {
                prop_assert_eq!(w.label, want, "window at {} contains the ramp", w.offset);
            } else if span.end <= first || w.offset > last {
                prop_assert_eq!(w.label, TrendLabel::Stationary);
            }
        }
    }
}

#[test]
fn synthetic_events_leave_labelled_windows() {
    // no drift or noise, so every labelled trend comes from a recorded event
    let cfg = SynthConfig {
        drift_sd: 0.0,
        noise_sd: 0.0,
        pulse_pressure: 0.0,
        trend_rate_per_hr: 6.0,
        seed: 5,
        ..SynthConfig::default()
    };
    let rec = generate(&cfg, "events").unwrap();
    assert!(!rec.events.is_empty());
    let at = downsample(&rec.series, 250).unwrap();
    let windows = make_windows(&at, WindowSpec::default(), TrendRule::default()).unwrap();
    let mut checked = 0;
    for e in &rec.events {
        let (start, end) = ((e.start_s / 10.0).floor() as usize, (e.end_s() / 10.0).ceil() as usize);
        let want = if e.delta > 0.0 { TrendLabel::Increasing } else { TrendLabel::Decreasing };
        let isolated = |w: &&WindowPair| {
            w.offset < start
                && w.offset + 60 > end
                && rec.events.iter().all(|o| o == e || o.end_s() <= w.offset as f64 * 10.0 || o.start_s >= (w.offset + 60) as f64 * 10.0)
        };
        for w in windows.iter().filter(isolated) {
            assert_eq!(w.label, want, "event {e:?}, window at {}", w.offset);
            checked += 1;
        }
    }
    assert!(checked > 0, "no window isolates an event");
    for w in &windows {
        let touched = rec
            .events
            .iter()
            .any(|e| e.end_s() > w.offset as f64 * 10.0 && e.start_s < (w.offset + 60) as f64 * 10.0);
        if !touched {
            assert_eq!(w.label, TrendLabel::Stationary, "window at {}", w.offset);
        }
    }
}
