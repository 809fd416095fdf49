use criterion::{criterion_group, criterion_main};

criterion_group!(
    benches,
    absa_bench::scoring,
    absa_bench::agreement,
    absa_bench::listening,
    absa_bench::training,
    absa_bench::recurrent
);
criterion_main!(benches);
