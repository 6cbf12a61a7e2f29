use maxstable::condsim::{
    ConditionalSimulator, ConditioningSet, SimulationConfig, TruncationPolicy,
    UnconditionalSimulator,
};
use maxstable::geometry::{DependenceModel, SiteSet};
use maxstable::rng::stream;
use maxstable::summary::quantiles;

fn models() -> [DependenceModel; 2] {
    [
        DependenceModel::brown_resnick(25.0, 0.5).unwrap(),
        DependenceModel::schlather(208.0, 0.5).unwrap(),
    ]
}

fn sample(sim: &mut ConditionalSimulator, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    (0..n)
        .map(|_| sim.simulate(&mut rng).unwrap().values[0])
        .collect()
}

fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn permuting_conditioning_sites_leaves_the_law_unchanged() {
    let x = SiteSet::new(vec![vec![10.0, 20.0], vec![40.0, 35.0], vec![25.0, 70.0]]).unwrap();
    let z = vec![1.3, 0.6, 2.2];
    let s = SiteSet::new(vec![vec![30.0, 40.0]]).unwrap();
    let n = 4000;
    for model in models() {
        let cond = ConditioningSet::new(x.clone(), z.clone()).unwrap();
        let perm = cond.permuted(&[2, 0, 1]).unwrap();
        let config = SimulationConfig::default();
        let a = sample(
            &mut ConditionalSimulator::new(&model, &cond, &s, &config).unwrap(),
            n,
            1,
        );
        let b = sample(
            &mut ConditionalSimulator::new(&model, &perm, &s, &config).unwrap(),
            n,
            2,
        );
        let d = ks_two_sample(&a, &b);
        // 5% critical value is 1.36 sqrt(2 / n) = 0.030
        assert!(d < 0.04, "{}: KS {d}", model.family);
    }
}

#[test]
fn single_site_has_one_scenario() {
    let x = SiteSet::new(vec![vec![10.0, 20.0]]).unwrap();
    let s = SiteSet::new(vec![vec![30.0, 40.0]]).unwrap();
    for model in models() {
        let cond = ConditioningSet::new(x.clone(), vec![0.8]).unwrap();
        let sim =
            ConditionalSimulator::new(&model, &cond, &s, &SimulationConfig::default()).unwrap();
        let d = sim.scenario_distribution().unwrap();
        assert_eq!(d.partitions.len(), 1);
        assert_eq!(d.probs, vec![1.0]);
    }
}

/// `|F(v) - F(2v)^2|` at the sample median `v`; zero for a max-stable
/// margin, since then `F(nv)^n = F(v)`.
fn max_stability_gap(v: &[f64]) -> f64 {
    let med = quantiles(v, &[0.5]).unwrap()[0];
    let cdf = |a: f64| v.iter().filter(|x| **x <= a).count() as f64 / v.len() as f64;
    (cdf(med) - cdf(2.0 * med).powi(2)).abs()
}

#[test]
fn conditional_output_is_not_max_stable() {
    let x = SiteSet::new(vec![vec![50.0, 50.0], vec![70.0, 20.0]]).unwrap();
    let near = SiteSet::new(vec![vec![51.0, 50.0]]).unwrap();
    let n = 5000;
    for model in models() {
        let uncond =
            UnconditionalSimulator::new(&model, &near, &TruncationPolicy::default(), false)
                .unwrap();
        let mut rng = stream(3, 0);
        let u: Vec<f64> = (0..n)
            .map(|_| uncond.simulate(&mut rng).values[0])
            .collect();
        let gap_u = max_stability_gap(&u);
        assert!(gap_u < 0.03, "{} unconditional gap {gap_u}", model.family);

        let cond = ConditioningSet::new(x.clone(), vec![1.5, 0.7]).unwrap();
        let mut sim =
            ConditionalSimulator::new(&model, &cond, &near, &SimulationConfig::default()).unwrap();
        let c = sample(&mut sim, n, 4);
        let gap_c = max_stability_gap(&c);
        assert!(gap_c > 0.2, "{} conditional gap {gap_c}", model.family);
    }
}
