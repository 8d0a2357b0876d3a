//! Parallel against sequential evaluation of the main sample criteria.

use criterion::{BenchmarkId, Criterion, criterion_group, criterion_main};
use std::hint::black_box;

use bundle_choice::dgp::{Design, ModelParams, simulate_cross, simulate_panel};
use bundle_choice::kernels::KernelSpec;
use bundle_choice::lad::{LadConfig, lad_criterion, nw_ccp};
use bundle_choice::mrc::{Step1Bandwidths, beta_terms, criterion_beta};
use bundle_choice::ms_panel::{PanelBandwidths, beta_terms as panel_beta_terms};
use bundle_choice::par;

fn bench_paths<F: Fn() -> f64>(c: &mut Criterion, group: &str, n: usize, f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", n), |b| b.iter(|| black_box(f())));
    g.bench_function(BenchmarkId::new("sequential", n), |b| b.iter(|| par::sequential(|| black_box(f()))));
    g.finish();
}

fn criteria(c: &mut Criterion) {
    let truth = ModelParams::design_truth();
    for n in [500, 2000] {
        let s = simulate_cross(Design::new(1).unwrap(), n, 1).unwrap();
        let ccp = nw_ccp(&s, &LadConfig::default()).unwrap().p;
        bench_paths(c, "lad_criterion", n, || lad_criterion(&s, &ccp, &truth).unwrap());

        let h = Step1Bandwidths::from_sample(&s, 1.0).unwrap();
        bench_paths(c, "mrc_criterion_beta", n, || criterion_beta(&s, &[1.0], &h, KernelSpec::SIXTH).unwrap());
        bench_paths(c, "mrc_beta_terms", n, || beta_terms(&s, &h, KernelSpec::SIXTH).unwrap().len() as f64);
    }
    let p = simulate_panel(Design::new(3).unwrap(), 20_000, 1).unwrap();
    let h = PanelBandwidths::from_panel(&p, 2.0).unwrap();
    bench_paths(c, "ms_beta_terms", 20_000, || panel_beta_terms(&p, &h, KernelSpec::SECOND).unwrap().len() as f64);
}

criterion_group!(benches, criteria);
criterion_main!(benches);
