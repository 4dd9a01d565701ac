//! Acceptance suite. Each test checks one criterion and prints a single
//! `criterion N: PASS|FAIL ...` line.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use betaqm::aqm::{
    abetared_update, betared_drop_probability, dbetared_update, red_drop_probability, AdaptiveBetaConfig,
    AdaptiveState, BetaRedConfig, RedConfig, Scheme,
};
use betaqm::config::{load_spec, parse_spec, parse_spec_file, ExperimentSpec, Overrides};
use betaqm::metrics::time_weighted_queue;
use betaqm::runner::{emit_outputs, run_experiment, ResultTable, RunResult};
use betaqm::special::{moments_to_shape, regularized_incomplete_beta, BetaMoments, BetaShape};

fn report(n: u32, pass: bool, detail: impl std::fmt::Display) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------------------
// quadrature oracle

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson with a tolerance relative to the size of the integral.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let panels = 64;
    let h = (b - a) / panels as f64;
    let scale: f64 = (0..panels)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            simpson(x0, x1, f(x0), f(0.5 * (x0 + x1)), f(x1)).abs()
        })
        .sum();
    let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `int_0^z t^(a-1) (1-t)^(b-1) dt`, split at 1/2. The left piece uses
/// `t = u^2` and the right piece `1 - t = v^2`, which removes the endpoint
/// singularities for shape parameters below one.
fn beta_integral(z: f64, a: f64, b: f64) -> f64 {
    let tol = 1e-14;
    let left = |u: f64| 2.0 * u.powf(2.0 * a - 1.0) * (1.0 - u * u).powf(b - 1.0);
    let right = |v: f64| 2.0 * v.powf(2.0 * b - 1.0) * (1.0 - v * v).powf(a - 1.0);
    let zl = z.min(0.5);
    let mut total = adaptive_simpson(&left, 0.0, zl.sqrt(), tol);
    if z > 0.5 {
        total += adaptive_simpson(&right, (1.0 - z).sqrt(), 0.5f64.sqrt(), tol);
    }
    total
}

fn oracle_incomplete_beta(z: f64, a: f64, b: f64) -> f64 {
    beta_integral(z, a, b) / beta_integral(1.0, a, b)
}

#[test]
fn criterion_01_beta_kernel_matches_quadrature() {
    let shapes = [0.5, 1.0, 2.0, 4.4375, 13.3125];
    let mut worst = 0.0f64;
    let mut worst_at = (0.0, 0.0, 0.0);
    for &a in &shapes {
        for &b in &shapes {
            let shape = BetaShape::new(a, b).unwrap();
            for k in 1..=99 {
                let z = k as f64 / 100.0;
                let got = regularized_incomplete_beta(z, shape).unwrap();
                let err = (got - oracle_incomplete_beta(z, a, b)).abs();
                if err > worst {
                    worst = err;
                    worst_at = (a, b, z);
                }
            }
        }
    }
    let uniform = BetaShape::new(1.0, 1.0).unwrap();
    let identity_err = (0..=1000)
        .map(|k| {
            let z = k as f64 / 1000.0;
            (regularized_incomplete_beta(z, uniform).unwrap() - z).abs()
        })
        .fold(0.0, f64::max);
    let pass = worst <= 1e-8 && identity_err <= 1e-12;
    report(1, pass, format!("max |I - oracle| = {worst:.2e} at {worst_at:?}, max |I_z(1,1) - z| = {identity_err:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_02_moment_inversion_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mu: f64 = rng.random_range(0.01..0.99);
        let theta: f64 = rng.random_range(0.01..0.99);
        let sigma = theta * (mu * (1.0 - mu)).sqrt();
        let s = moments_to_shape(BetaMoments::new(mu, sigma).unwrap()).unwrap();
        let (a, b) = (s.alpha(), s.beta());
        let mean = a / (a + b);
        let var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
        worst = worst.max(((mean - mu) / mu).abs()).max(((var - sigma * sigma) / (sigma * sigma)).abs());
    }
    let pass = worst <= 1e-12;
    report(2, pass, format!("max relative error = {worst:.2e} over 1000 draws"));
    assert!(pass);
}

#[test]
fn criterion_03_red_equivalence() {
    let red = RedConfig { q_min: 100.0, q_max: 700.0, p_max: 0.1, w: 0.002 };
    let beta = BetaRedConfig {
        q_target: 400.0,
        q_min: 100.0,
        q_max: 700.0,
        p_max: 0.1,
        w: 0.002,
        theta: 1.0 / 3f64.sqrt(),
    };
    let mut worst = 0.0f64;
    for k in 0..10_000 {
        let q = 100.0 + 600.0 * (k as f64 + 0.5) / 10_000.0;
        let diff = (betared_drop_probability(&beta, q).unwrap() - red_drop_probability(&red, q)).abs();
        worst = worst.max(diff);
    }
    let pass = worst <= 1e-8;
    report(3, pass, format!("max |BetaRED - RED| = {worst:.2e} at 10^4 points"));
    assert!(pass);
}

#[test]
fn criterion_04_update_arithmetic_and_clamps() {
    let cfg = BetaRedConfig { q_target: 250.0, q_min: 0.0, q_max: 1000.0, p_max: 0.5, w: 0.1, theta: 0.1 };
    let adaptive = AdaptiveBetaConfig { base: cfg.clone(), alpha_gain: 1.0, beta_gain: 1.0, t_update: 0.5 };
    let st = AdaptiveState::initial(&adaptive).unwrap();
    let down = abetared_update(st, &cfg, 150.0).p_max;
    let up = abetared_update(st, &cfg, 350.0).p_max;
    let d = dbetared_update(st, &cfg, 450.0);
    let mu = d.virtual_mu(&cfg);
    let exact = down == 0.45 && up == 0.525 && d.q_target_virtual == 212.5 && mu == 0.2125;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0u64;
    let mut a = st;
    let mut b = st;
    for i in 0..1_000_000u32 {
        if i % 1000 == 0 {
            let gains = (rng.random_range(0.01..=1.0), rng.random_range(0.01..=1.0));
            a = AdaptiveState { p_max: rng.random_range(0.01..=0.99), alpha_gain: gains.0, beta_gain: gains.1, ..st };
            b = AdaptiveState { q_target_virtual: rng.random_range(1.0..=999.0), ..a };
        }
        let q_avg = rng.random_range(0.0..=1000.0);
        a = abetared_update(a, &cfg, q_avg);
        b = dbetared_update(b, &cfg, q_avg);
        if !(0.01..=0.99).contains(&a.p_max) || !(1.0..=999.0).contains(&b.q_target_virtual) {
            violations += 1;
        }
    }
    let pass = exact && violations == 0;
    report(
        4,
        pass,
        format!(
            "p_max {down} / {up}, virtual target {} (mu {mu}), clamp violations {violations} in 10^6 updates",
            d.q_target_virtual
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// simulation criteria

fn run_spec(text: &str) -> ResultTable {
    let spec = parse_spec(text).unwrap_or_else(|e| panic!("bad spec: {e}"));
    run_experiment(&spec).unwrap()
}

fn conserved(table: &ResultTable) -> bool {
    table.results.iter().all(|r| r.trace.is_conserved())
}

/// Conservation outcomes of every simulation run in this suite, by label.
fn record_conservation(label: &str, table: &ResultTable) {
    let bad: Vec<String> = table
        .results
        .iter()
        .filter(|r| !r.trace.is_conserved())
        .map(|r| format!("{} [{}] seed {}", r.run.scheme, r.run.point_string(), r.seed))
        .collect();
    assert!(bad.is_empty(), "{label}: conservation broken for {bad:?}");
}

fn seed_mean_by_point(table: &ResultTable, f: impl Fn(&RunResult) -> f64) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &table.results {
        let e = acc.entry(r.run.point_string()).or_default();
        e.0 += f(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

const SCENARIO1_BASE: &str = "scenario = 1\naqm = \"betared\"\nduration = 100.0\nseeds = [1, 2, 3]\n\
[betared]\nq_target = 250.0\nq_min = 0.0\nq_max = 1000.0\nw = 0.1\n";

#[test]
fn criterion_05_higher_p_max_moves_equilibrium_to_target() {
    let spec = format!("{SCENARIO1_BASE}theta = 0.1\n[sweep]\nn_flows = [50, 100]\np_max = [0.1, 1.0]\n");
    let table = run_spec(&spec);
    record_conservation("criterion 5", &table);
    let dist = seed_mean_by_point(&table, |r| (r.metrics.equilibrium_aql - 250.0).abs());
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [50, 100] {
        let hi = dist[&format!("n_flows={n};p_max=1")];
        let lo = dist[&format!("n_flows={n};p_max=0.1")];
        pass &= hi <= lo;
        parts.push(format!("N={n}: |AQL-250| {hi:.1} (p_max=1) vs {lo:.1} (p_max=0.1)"));
    }
    report(5, pass, parts.join(", "));
    assert!(pass, "higher p_max did not bring the equilibrium closer to the target");
}

#[test]
fn criterion_06_smaller_theta_moves_equilibrium_to_target() {
    let spec = format!("{SCENARIO1_BASE}p_max = 1.0\n[sweep]\nn_flows = [50, 100]\ntheta = [0.05, 0.3, 0.9]\n");
    let table = run_spec(&spec);
    record_conservation("criterion 6", &table);
    let dist = seed_mean_by_point(&table, |r| (r.metrics.equilibrium_aql - 250.0).abs());
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [50, 100] {
        let d: Vec<f64> = ["0.9", "0.3", "0.05"].iter().map(|t| dist[&format!("n_flows={n};theta={t}")]).collect();
        pass &= d[0] >= d[1] && d[1] >= d[2];
        parts.push(format!("N={n}: theta 0.9/0.3/0.05 -> {:.1}/{:.1}/{:.1}", d[0], d[1], d[2]));
    }
    report(6, pass, parts.join(", "));
    assert!(pass);
}

const SCALED_SCENARIO2: &str =
    "scenario = 2\ns2_low = 20\ns2_mid = 40\nn_max = 80\ns2_interval = 20.0\nduration = 100.0\nseeds = [1, 2, 3]\n";

/// Samples of the 5 s moving average taken at least 5 s into an interval.
fn settled_moving_average(r: &RunResult) -> Vec<f64> {
    r.moving_average.iter().filter(|(t, _)| t % 20.0 >= 5.0).map(|&(_, q)| q).collect()
}

#[test]
fn criterion_07_dbetared_tracks_target_under_changing_load() {
    let spec = format!(
        "{SCALED_SCENARIO2}moving_average_window = 5.0\n[abetared]\ntheta = 0.1\nw = 0.1\n\
         [dbetared]\ntheta = 0.1\nw = 0.1\n[sweep]\naqm = [\"abetared\", \"dbetared\"]\n"
    );
    let table = run_spec(&spec);
    record_conservation("criterion 7", &table);
    let target = 250.0;
    let mut within = Vec::new();
    let mut deviation: BTreeMap<Scheme, Vec<f64>> = BTreeMap::new();
    for r in &table.results {
        let ma = settled_moving_average(r);
        let dev = ma.iter().map(|q| (q - target).abs()).sum::<f64>() / ma.len() as f64;
        deviation.entry(r.run.scheme).or_default().push(dev);
        if r.run.scheme == Scheme::DBetaRed {
            let ok = ma.iter().filter(|&&q| (q - target).abs() <= 0.3 * target).count();
            within.push(ok as f64 / ma.len() as f64);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let d_dev = mean(&deviation[&Scheme::DBetaRed]);
    let a_dev = mean(&deviation[&Scheme::ABetaRed]);
    let worst_within = within.iter().copied().fold(1.0, f64::min);
    let pass = worst_within >= 0.8 && d_dev <= a_dev;
    report(
        7,
        pass,
        format!(
            "DBetaRED within +/-30%: worst seed {:.1}% of samples; mean |MA - 250| DBetaRED {d_dev:.1} vs ABetaRED {a_dev:.1}",
            100.0 * worst_within
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_cross_scheme_sanity() {
    let spec = format!(
        "{SCALED_SCENARIO2}deliveries = true\n[sweep]\naqm = [\"droptail\", \"red\", \"ared\", \"codel\", \"pie\", \
         \"betared\", \"abetared\", \"dbetared\"]\n"
    );
    let table = run_spec(&spec);
    record_conservation("criterion 8", &table);
    let mut problems = Vec::new();
    let mut aql: BTreeMap<Scheme, f64> = BTreeMap::new();
    for r in &table.results {
        let topo = &r.run.topology;
        let m = &r.metrics;
        let floor = topo.one_way_floor();
        let min_delay = r
            .trace
            .packets
            .iter()
            .filter_map(|p| p.deliver_time().map(|d| d - p.send_time))
            .fold(f64::INFINITY, f64::min);
        if !(m.throughput_bps <= topo.bottleneck_rate && m.utilisation_bps <= topo.bottleneck_rate) {
            problems.push(format!("{} seed {}: throughput above capacity", r.run.scheme, r.seed));
        }
        if !(0.0..=1.0).contains(&m.drop_rate) {
            problems.push(format!("{} seed {}: drop rate {}", r.run.scheme, r.seed, m.drop_rate));
        }
        if !(m.latency_s >= floor && min_delay >= floor - 1e-9) {
            problems.push(format!("{} seed {}: latency below floor {floor}", r.run.scheme, r.seed));
        }
        *aql.entry(r.run.scheme).or_default() += m.aql / 3.0;
    }
    let schemes_run = aql.len();
    let droptail = aql[&Scheme::DropTail];
    let largest = aql.iter().all(|(s, &q)| *s == Scheme::DropTail || q < droptail);
    let pass = problems.is_empty() && schemes_run == 8 && largest;
    let summary: Vec<String> = aql.iter().map(|(s, q)| format!("{s}={q:.0}")).collect();
    report(8, pass, format!("{schemes_run} schemes, mean queue {}; {problems:?}", summary.join(" ")));
    assert!(pass);
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_09_outputs_are_byte_identical() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments/fig8_stability.toml");
    // shortened so the double run stays cheap
    let text = std::fs::read_to_string(&path).unwrap();
    let file = parse_spec_file(&text).unwrap();
    let shortened = Overrides { duration: Some(10.0), seeds: Some(vec![1, 2]), ..Default::default() }.apply(file);
    let spec = ExperimentSpec::from_file(shortened).unwrap();
    assert!(load_spec(&path).is_ok());

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let table = run_experiment(&spec).unwrap();
        record_conservation("criterion 9", &table);
        emit_outputs(&table, d.path()).unwrap();
    }
    let (a, b) = (read_dir_sorted(dirs[0].path()), read_dir_sorted(dirs[1].path()));
    let identical = a == b;
    let pass = identical && a.len() == 1 + 2 * 8 * 2;
    report(9, pass, format!("{} files per run, identical = {identical}", a.len()));
    assert!(pass);
}

#[test]
fn criterion_10_packet_conservation() {
    // every simulation in this suite also asserts conservation; this one
    // covers short runs that end with many packets still in flight
    let spec = "scenario = 2\ns2_low = 5\ns2_mid = 10\nn_max = 30\ns2_interval = 1.0\nduration = 4.7\nseeds = [1, 2]\ndeliveries = true\n\
                [topology]\nedge_delay_jitter = 0.0005\n\
                [sweep]\naqm = [\"droptail\", \"red\", \"ared\", \"codel\", \"pie\", \"betared\", \"abetared\", \"dbetared\"]\n";
    let table = run_spec(spec);
    let mut detail = Vec::new();
    for r in &table.results {
        let t = &r.trace;
        detail.push(t.in_flight_at_end);
        let fates = t.packets.len() as u64;
        assert_eq!(fates, t.sent);
        let tail = time_weighted_queue(&t.samples, 0.0, t.duration);
        assert!(tail.is_some());
    }
    let pass = conserved(&table) && detail.iter().all(|&n| n > 0);
    report(10, pass, format!("{} runs balanced, in flight at end {:?}", table.results.len(), detail));
    assert!(pass);
}
