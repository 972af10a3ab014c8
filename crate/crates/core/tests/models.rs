use hemocast_core::models::{attend, Batch, ForwardMode, LmuRnn, ModelConfig, Registry, SequenceModel, Tcn};
use hemocast_core::{Tape, Tensor};
use proptest::prelude::*;

fn rows(seed: u64, b: usize, len: usize) -> Vec<Vec<f64>> {
    // cheap deterministic values, no rng needed
    (0..b)
        .map(|i| {
            (0..len)
                .map(|t| ((seed as f64 + 1.0) * (i * len + t + 1) as f64 * 0.618).sin())
                .collect()
        })
        .collect()
}

fn perturb_after(rows: &[Vec<f64>], t: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().enumerate().map(|(k, v)| if k > t { v + 3.0 } else { *v }).collect())
        .collect()
}

fn small(arch: &str) -> ModelConfig {
    let c = ModelConfig::new(arch).unwrap().with_geometry(12, 5).with_seed(9);
    match arch {
        "dnn" => c.with("hidden", "16,16"),
        "seq2seq" | "seq2seq-attn" => c.with("hidden", "6"),
        "lmu" => c.with("order", "6").with("theta", "12").with("units", "8"),
        "tcn" => c.with("channels", "4").with("dense", "8"),
        _ => c,
    }
}

#[test]
fn tcn_blocks_are_causal() {
    let config = small("tcn");
    let tcn = Tcn::new(&config).unwrap();
    let params = tcn.init();
    let base = rows(1, 2, 12);
    for t in 0..11 {
        let tape = Tape::new();
        let vars: Vec<_> = params.tensors().iter().map(|p| tape.constant(p.clone())).collect();
        let a = tcn.block_outputs(&tape, &vars, &Batch::from_rows(&base).unwrap()).unwrap();
        let b = tcn
            .block_outputs(&tape, &vars, &Batch::from_rows(&perturb_after(&base, t)).unwrap())
            .unwrap();
        let mut later_changed = false;
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.value(), y.value());
            let &[batch, ch, len] = x.shape() else { panic!("block output rank") };
            for i in 0..batch {
                for c in 0..ch {
                    for s in 0..=t {
                        assert_eq!(x.at(&[i, c, s]), y.at(&[i, c, s]), "block output at {s} saw step > {t}");
                    }
                    later_changed |= (t + 1..len).any(|s| x.at(&[i, c, s]) != y.at(&[i, c, s]));
                }
            }
        }
        assert!(later_changed, "perturbing steps after {t} changed nothing");
    }
}

#[test]
fn lmu_states_are_causal() {
    let config = small("lmu");
    let lmu = LmuRnn::new(&config).unwrap();
    let mut params = lmu.init();
    // nonzero encoders so the memory actually moves
    for p in params.tensors_mut() {
        let shape = p.shape().to_vec();
        let n = p.len();
        *p = Tensor::new(shape, (0..n).map(|i| 0.1 + 0.01 * i as f64).collect()).unwrap();
    }
    let base = rows(2, 3, 12);
    for t in 0..11 {
        let tape = Tape::new();
        let vars: Vec<_> = params.tensors().iter().map(|p| tape.constant(p.clone())).collect();
        let (ha, ma) = lmu.unroll(&tape, &vars, &Batch::from_rows(&base).unwrap()).unwrap();
        let (hb, mb) = lmu
            .unroll(&tape, &vars, &Batch::from_rows(&perturb_after(&base, t)).unwrap())
            .unwrap();
        for s in 0..=t {
            assert_eq!(*ha[s].value(), *hb[s].value());
            assert_eq!(*ma[s].value(), *mb[s].value());
        }
        assert_ne!(*ma[t + 1].value(), *mb[t + 1].value());
    }
}

#[test]
fn inference_ignores_targets() {
    let registry = Registry::builtin();
    for arch in ["dnn", "seq2seq", "seq2seq-attn", "lmu", "tcn", "persistence"] {
        let model = registry.build(&small(arch)).unwrap();
        let params = model.init();
        let input = rows(3, 4, 12);
        let plain = model.predict(&params, &Batch::from_rows(&input).unwrap()).unwrap();
        let mut with_target = Batch::from_rows(&input).unwrap();
        with_target.target = Some(Tensor::full([4, 5], 1e3));
        let tape = Tape::new();
        let vars: Vec<_> = params.tensors().iter().map(|p| tape.constant(p.clone())).collect();
        let out = model.forward(&tape, &vars, &with_target, &mut ForwardMode::Inference).unwrap();
        assert_eq!(*out.value(), plain, "{arch}");
        assert_eq!(plain.shape(), [4, 5]);
    }
}

#[test]
fn outputs_depend_only_on_their_own_row() {
    let registry = Registry::builtin();
    for arch in ["dnn", "seq2seq", "seq2seq-attn", "lmu", "tcn"] {
        let model = registry.build(&small(arch)).unwrap();
        let params = model.init();
        let input = rows(4, 3, 12);
        let full = model.predict(&params, &Batch::from_rows(&input).unwrap()).unwrap();
        let alone = model.predict(&params, &Batch::from_rows(&input[1..2]).unwrap()).unwrap();
        for k in 0..5 {
            assert!((full.at(&[1, k]) - alone.at(&[0, k])).abs() < 1e-12, "{arch}");
        }
    }
}

proptest! {
    #[test]
    fn attention_weights_form_a_distribution(
        b in 1usize..4,
        t in 1usize..8,
        k in 1usize..5,
        n in 1usize..5,
        seed in any::<u32>(),
        spread in 0.1f64..20.0,
    ) {
        let val = |i: usize| ((seed as f64 + 0.5) * (i + 1) as f64 * 0.754_877).sin() * spread;
        let tape = Tape::new();
        let h = tape.constant(Tensor::new([b, n], (0..b * n).map(val).collect()).unwrap());
        let memory = tape.constant(Tensor::new([b, t, k], (0..b * t * k).map(|i| val(i + 101)).collect()).unwrap());
        let w_q = tape.constant(Tensor::new([n, k], (0..n * k).map(|i| val(i + 997)).collect()).unwrap());
        let (context, weights) = attend(h, memory, w_q).unwrap();
        let w = weights.value();
        prop_assert_eq!(w.shape(), &[b, t]);
        prop_assert_eq!(context.shape(), vec![b, k]);
        for i in 0..b {
            let row: Vec<f64> = (0..t).map(|s| w.at(&[i, s])).collect();
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // the context is a convex combination, so it stays inside the memory's range
            for j in 0..k {
                let col: Vec<f64> = (0..t).map(|s| memory.value().at(&[i, s, j])).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let c = context.value().at(&[i, j]);
                prop_assert!(c >= lo - 1e-9 && c <= hi + 1e-9);
            }
        }
    }
}
