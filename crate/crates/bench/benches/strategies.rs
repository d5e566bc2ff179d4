use bincover_core::generators::{generate, Family, GoodProfile};
use bincover_core::opt::exact_opt;
use bincover_core::{canonicalize, compute_advice, run, Dyadic, StrategyKind};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn beta_family(opt: usize) -> Family {
    Family::BetaFamily {
        beta: "1.06".into(),
        opt,
        two_share: None,
        profile: GoodProfile::Case2b,
    }
}

fn online(c: &mut Criterion) {
    let mut g = c.benchmark_group("online");
    for opt in [500, 2000] {
        let gen = generate(&beta_family(opt), 1, 16).unwrap();
        let inst = gen.instance;
        let reference = canonicalize(gen.reference.as_ref().unwrap(), &inst, 16).unwrap();
        let (tape, _) = compute_advice(&inst, &reference, 16).unwrap();
        g.bench_with_input(BenchmarkId::new("dnf", inst.len()), &inst, |b, i| {
            b.iter(|| run(StrategyKind::Dnf, black_box(i), None).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("dh2", inst.len()), &inst, |b, i| {
            b.iter(|| run(StrategyKind::Dhk(2), black_box(i), None).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("dh2b", inst.len()), &inst, |b, i| {
            b.iter(|| {
                run(
                    StrategyKind::Dh2b(16),
                    black_box(i),
                    Some(&mut tape.clone()),
                )
                .unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("oracle", inst.len()), &inst, |b, i| {
            b.iter(|| compute_advice(black_box(i), &reference, 16).unwrap())
        });
    }
    g.finish();
}

fn offline(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_opt");
    g.sample_size(10);
    for n in [10usize, 14, 16] {
        let sizes = (0..n)
            .map(|i| Dyadic::from_parts(((i * 37 + 11) % 63 + 1) as u64, -6))
            .collect();
        let inst = bincover_core::Instance::new(sizes).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, i| {
            b.iter(|| exact_opt(black_box(i)).unwrap())
        });
    }
    g.finish();
}

fn arithmetic(c: &mut Criterion) {
    let v = Dyadic::from_parts(0x9e37_79b9_7f4a_7c15, -70);
    c.bench_function("floor_approx_16", |b| {
        b.iter(|| black_box(&v).floor_approx(16).unwrap())
    });
}

criterion_group!(benches, online, offline, arithmetic);
criterion_main!(benches);
