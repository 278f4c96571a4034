//! Throughput of the building blocks the attack loop spends its time in.

use std::hint::black_box;

use afk_core::attack::{deepfool, DeepFoolConfig};
use afk_core::dsp::{inverse_real_fft, real_fft, Mfcc, MfccConfig};
use afk_core::nn::synth_keywords;
use afk_core::{mapping_for, Arch, Classifier, Domain, Model, SeedStreams};
use criterion::{criterion_group, criterion_main, Criterion};

const N: usize = 8000;

fn clip() -> Vec<f64> {
    synth_keywords(2, 1, 0).unwrap().clips[0].samples().to_vec()
}

fn dsp(c: &mut Criterion) {
    let x = clip();
    c.bench_function("rfft_8000", |b| b.iter(|| real_fft(black_box(&x)).unwrap()));
    let spec = real_fft(&x).unwrap();
    c.bench_function("irfft_8000", |b| {
        b.iter(|| inverse_real_fft(black_box(&spec), N).unwrap())
    });
    let mfcc = Mfcc::new(MfccConfig::for_rate(8000)).unwrap();
    c.bench_function("mfcc_8000", |b| {
        b.iter(|| mfcc.compute(black_box(&x)).unwrap())
    });
}

fn codomain(c: &mut Criterion) {
    let g = mapping_for(Domain::Frequency, N, 240).unwrap();
    let z = vec![0.01; g.code_len()];
    let w = clip();
    c.bench_function("freq_map", |b| b.iter(|| g.map(black_box(&z)).unwrap()));
    c.bench_function("freq_adjoint", |b| {
        b.iter(|| g.adjoint(black_box(&w)).unwrap())
    });
}

fn models(c: &mut Criterion) {
    let x = clip();
    let weights = vec![1.0; 10];
    for arch in [Arch::AudioNetMini, Arch::SpecCrnnMini] {
        let model = Model::new(arch, N, 8000, 10, &mut SeedStreams::new(0).rng("init")).unwrap();
        c.bench_function(&format!("{arch}_logits"), |b| {
            b.iter(|| model.logits(black_box(&x)).unwrap())
        });
        c.bench_function(&format!("{arch}_input_gradient"), |b| {
            b.iter(|| model.input_gradient(black_box(&x), &weights).unwrap())
        });
    }
}

fn per_clip_attack(c: &mut Criterion) {
    let x = clip();
    let model = Model::new(
        Arch::AudioNetMini,
        N,
        8000,
        10,
        &mut SeedStreams::new(0).rng("init"),
    )
    .unwrap();
    let g = mapping_for(Domain::Frequency, N, 240).unwrap();
    let cfg = DeepFoolConfig::default();
    let mut group = c.benchmark_group("deepfool");
    group.sample_size(10);
    group.bench_function("audionet_freq", |b| {
        b.iter(|| deepfool(&model, black_box(&x), g.as_ref(), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, dsp, codomain, models, per_clip_attack);
criterion_main!(benches);
