//! Model-level properties of both classifiers: determinism, input
//! gradients against central differences, and fitting a separable toy set.

use std::f64::consts::TAU;

use afk_core::dsp::dot;
use afk_core::nn::{accuracy, synth_keywords, TrainConfig};
use afk_core::{Arch, Classifier, LabeledDataset, Model, SeedStreams, Split, Waveform};
use rand::Rng;

const ARCHS: [Arch; 2] = [Arch::AudioNetMini, Arch::SpecCrnnMini];

fn model(arch: Arch, classes: usize) -> Model {
    Model::new(
        arch,
        8000,
        8000,
        classes,
        &mut SeedStreams::new(2).rng("init"),
    )
    .unwrap()
}

/// Two tones two octaves apart with random phase and level.
fn toy() -> LabeledDataset {
    let mut rng = SeedStreams::new(3).rng("toy");
    let mut clips = Vec::new();
    let mut labels = Vec::new();
    for i in 0..16 {
        let class = i % 2;
        let f = [300.0, 1200.0][class];
        let (phase, amp) = (rng.gen_range(0.0..TAU), rng.gen_range(0.2..0.5));
        let x = (0..8000)
            .map(|t| amp * (TAU * f * t as f64 / 8000.0 + phase).sin())
            .collect();
        clips.push(Waveform::new(x, 8000).unwrap());
        labels.push(class);
    }
    LabeledDataset::new(
        clips,
        labels,
        vec![Split::Train; 16],
        vec!["low".into(), "high".into()],
        0.0,
        0,
    )
    .unwrap()
}

#[test]
fn logits_have_one_entry_per_class_and_are_deterministic() {
    let x = synth_keywords(2, 1, 0).unwrap().clips[0].samples().to_vec();
    for arch in ARCHS {
        let m = model(arch, 7);
        let a = m.logits(&x).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a, m.logits(&x).unwrap());
        assert_eq!(m.logits_batch(&[&x, &x]).unwrap(), vec![a.clone(), a]);
    }
}

#[test]
fn rejects_wrong_input_length() {
    for arch in ARCHS {
        let m = model(arch, 3);
        assert!(m.logits(&[0.0; 100]).is_err());
        assert!(m.input_gradient(&[0.0; 100], &[1.0; 3]).is_err());
    }
}

#[test]
fn input_gradients_match_central_differences() {
    let data = synth_keywords(3, 1, 4).unwrap();
    let mut rng = SeedStreams::new(6).rng("probe");
    for arch in ARCHS {
        let m = model(arch, 3);
        let x = data.clips[1].samples();
        let w: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grad = m.input_gradient(x, &w).unwrap();
        assert!(
            grad.iter().any(|&g| g != 0.0),
            "{arch}: gradient does not reach the waveform"
        );
        // A tiny step mostly stays inside one linear piece of the ReLU /
        // max-pool network, so judge the median and allow a rare switch.
        let h = 1e-8;
        let f = |k: usize, s: f64| {
            let mut xs = x.to_vec();
            xs[k] += s;
            dot(&m.logits(&xs).unwrap(), &w)
        };
        let mut errs: Vec<f64> = (0..21)
            .map(|_| {
                let k = rng.gen_range(0..x.len());
                let fd = (f(k, h) - f(k, -h)) / (2.0 * h);
                (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6)
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(
            errs[10] < 1e-4,
            "{arch}: median relative error {}",
            errs[10]
        );
        assert!(errs[20] < 5e-2, "{arch}: worst relative error {}", errs[20]);
    }
}

#[test]
fn separable_tones_are_fitted() {
    let data = toy();
    for arch in ARCHS {
        let mut m = model(arch, 2);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let rep = m.train(&data, &cfg).unwrap();
        assert_eq!(accuracy(&m, &data).unwrap(), 1.0, "{arch}");
        // Epoch losses spike now and then with batches of 8, so compare the best.
        let first = rep.epochs[0].loss;
        let best = rep
            .epochs
            .iter()
            .map(|e| e.loss)
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.1 * first, "{arch}: loss {first} -> {best}");
    }
}

#[test]
fn training_is_seeded() {
    let data = toy();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (mut a, mut b) = (model(Arch::AudioNetMini, 2), model(Arch::AudioNetMini, 2));
    a.train(&data, &cfg).unwrap();
    b.train(&data, &cfg).unwrap();
    let x = data.clips[0].samples();
    assert_eq!(a.logits(x).unwrap(), b.logits(x).unwrap());
}
