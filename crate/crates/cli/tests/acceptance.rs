//! Acceptance checks. Each test prints one `PASS`/`FAIL` line with the
//! measured quantities, then asserts.

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hdr_fringe::hdr::MIN_VALID_SAMPLES;
use hdr_fringe::phase::{solve_generalized, solve_standard, uniform_shifts};
use hdr_fringe::sim::{
    monte_carlo_phase_variance, render_stacks, ProjectorModel, Rendered, Scene, SensorModel, StereoRig,
};
use hdr_fringe::stereo::DEFAULT_MAX_PHASE_GAP;
use hdr_fringe::{
    build_coefficients, densest_only, gen_phase_shifting, match_pair, multi_freq_hdr,
    naive_phase_shifting, sat_map, triangulate, wrap_phase, FringeStack, HdrConfig, Image,
    PhaseKind, PhaseMap, RectifiedPair, ShiftSchedule, TriangulationConfig, Triangulator,
};
use hdr_fringe_cli::{compare_maps, CompareOptions};

const ORACLE_TOL: f64 = 1e-9;
const RECOVERY_TOL: f64 = 1e-9;
const VARIANCE_REL_TOL: f64 = 0.10;
const MC_TRIALS: usize = 100_000;
const FUSION_BOUND_MARGIN: f64 = 1.5;
const RIPPLE_RATIO: f64 = 10.0;
const DISPARITY: f64 = 3.25;
const DISPARITY_TOL: f64 = 1e-12;
const CLOSURE_MARGIN: f64 = 1.5;
const SHINY_GAIN: f64 = 3.0;

/// Deterministic uniform draws for test inputs.
struct Draws(u64);

impl Draws {
    fn next(&mut self) -> f64 {
        self.0 = hdr_fringe::sim::splitmix64(self.0);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

fn verdict(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration, budget: Option<Duration>) {
    let within = budget.is_none_or(|b| elapsed <= b);
    let budget_txt = budget.map(|b| format!(" (budget {:.0?})", b)).unwrap_or_default();
    // Written to the stderr handle directly so the verdict shows up in the
    // test log even when the harness captures output of passing tests.
    let _ = writeln!(
        std::io::stderr().lock(),
        "[{id}] {name}: {} | {detail} | {:.2?}{budget_txt}",
        if pass && within { "PASS" } else { "FAIL" },
        elapsed
    );
    assert!(pass, "[{id}] {name}: {detail}");
    assert!(within, "[{id}] {name}: took {elapsed:?}{budget_txt}");
}

fn shiny_render(seed: u64) -> Rendered<u8> {
    let scene = Scene::builtin("shiny-disk-on-ramp").unwrap();
    assert_eq!(scene.reflectance(0.0, 0.0), SHINY_GAIN);
    let (l, r) = StereoRig::default().cameras().unwrap();
    render_stacks(&scene, &ProjectorModel::default(), &SensorModel::default(), &l, &r, seed).unwrap()
}

#[test]
fn oracle_equivalence_on_uniform_schedules() {
    let start = Instant::now();
    let mut d = Draws(1);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for &steps in &[3usize, 4, 8, 12] {
        let schedule = ShiftSchedule::uniform(steps).unwrap();
        let coeffs = build_coefficients(&schedule).unwrap();
        let mut samples = vec![0.0; steps];
        for _ in 0..2500 {
            let (i0, a, phi) = (d.range(10.0, 200.0), d.range(0.05, 1.0), d.range(-PI, PI));
            for (s, dlt) in samples.iter_mut().zip(schedule.deltas()) {
                *s = i0 * (1.0 + a * (phi + dlt).cos());
            }
            let g = solve_generalized(&samples, &schedule, &coeffs).unwrap();
            let s = solve_standard(&samples, &schedule).unwrap();
            worst = worst.max(wrap_phase(g - s).abs());
            n += 1;
        }
    }
    verdict(
        1,
        "generalized vs standard solve",
        n == 10_000 && worst <= ORACLE_TOL,
        &format!("{n} pixels, max |diff| {worst:.3e} rad <= {ORACLE_TOL:e}"),
        start.elapsed(),
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn exact_recovery_under_sample_elimination() {
    let start = Instant::now();
    let (w, h, steps) = (100, 100, 12);
    let deltas = uniform_shifts(steps);
    let mut d = Draws(2);
    let mut truth = Vec::with_capacity(w * h);
    let mut planes = vec![Vec::with_capacity(w * h); steps];
    let mut counts = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let phi = d.range(-PI, PI);
        let alpha = d.range(0.1, 0.9);
        let target = 1 + (d.next() * (steps - MIN_VALID_SAMPLES) as f64) as usize;
        // choose I_0 so exactly `target` samples reach full scale
        let mut c: Vec<f64> = deltas.iter().map(|dl| (phi + dl).cos()).collect();
        c.sort_by(|a, b| b.total_cmp(a));
        let hi = 255.0 / (1.0 + alpha * c[target - 1]);
        let lo = 255.0 / (1.0 + alpha * c[target]);
        let i0 = 0.5 * (hi + lo);
        let mut sat = 0;
        for (k, dl) in deltas.iter().enumerate() {
            let v = (i0 * (1.0 + alpha * (phi + dl).cos())).min(255.0);
            sat += usize::from(v >= 255.0);
            planes[k].push(v);
        }
        counts.push(sat);
        truth.push(phi);
    }
    let images = planes.into_iter().map(|p| Image::new(w, h, p).unwrap()).collect();
    let stack = FringeStack::new(images, deltas, 12.0).unwrap();
    let cfg = HdrConfig::default();
    let phase = gen_phase_shifting(&stack, &sat_map(&stack, &cfg), &cfg).unwrap();
    let in_range = counts.iter().all(|&c| (1..=steps - MIN_VALID_SAMPLES).contains(&c));
    let worst = phase
        .values()
        .iter()
        .zip(&truth)
        .map(|(&p, &t)| if p.is_nan() { f64::INFINITY } else { wrap_phase(p - t).abs() })
        .fold(0.0, f64::max);
    verdict(
        2,
        "exact recovery with 1..N-3 saturated samples",
        in_range && worst <= RECOVERY_TOL,
        &format!("{} pixels, N = {steps}, max error {worst:.3e} rad <= {RECOVERY_TOL:e}", w * h),
        start.elapsed(),
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn variance_law_monte_carlo() {
    let start = Instant::now();
    let sigma = 1.0;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (i, &steps) in [4usize, 8, 12].iter().enumerate() {
        for (j, &snr) in [20.0, 50.0].iter().enumerate() {
            let b = snr * sigma;
            let seed = 100 + (i * 2 + j) as u64;
            let got = monte_carlo_phase_variance(&uniform_shifts(steps), 128.0, b, sigma, MC_TRIALS, seed)
                .unwrap();
            let want = 2.0 * sigma * sigma / (steps as f64 * b * b);
            let rel = got / want - 1.0;
            worst = worst.max(rel.abs());
            lines.push(format!("N={steps} B/s={snr}: {:+.1}%", 100.0 * rel));
        }
    }
    verdict(
        3,
        "phase variance law",
        worst <= VARIANCE_REL_TOL,
        &format!("{} (max {:.1}% <= 10%)", lines.join(", "), 100.0 * worst),
        start.elapsed(),
        Some(Duration::from_secs(30)),
    );
}

#[test]
fn fusion_completeness_on_shiny_disk() {
    let start = Instant::now();
    let out = shiny_render(4);
    let proj = ProjectorModel::default();
    let sensor = SensorModel::default();
    let cfg = HdrConfig::default();
    let set = &out.left;
    let wrapped = set.wrapped_phases(&cfg).unwrap();
    let fused = multi_freq_hdr(set, &wrapped, &cfg).unwrap();
    let dense = densest_only(&wrapped, &set.periods()).unwrap();
    let loose_ok = set.saturation_maps()[0].oversaturated().not();
    let eligible = loose_ok.count();
    let covered = loose_ok
        .flags()
        .iter()
        .zip(fused.phase.valid())
        .filter(|(&e, &v)| e && v)
        .count();
    let levels = set.len();
    let densest = proj.periods[levels - 1];
    let truth = &out.truth.left.phase;
    let (mut err2, mut bound2, mut n) = (0.0, 0.0, 0usize);
    for i in 0..truth.values().len() {
        let src = fused.source.data()[i] as usize;
        if src == 0 || src == levels {
            continue;
        }
        let m = src - 1;
        let per = proj.periods[m];
        let b = proj.amplitude(per);
        let var = 2.0 * sensor.sigma.powi(2) / (proj.steps[m] as f64 * b * b) * (per / densest).powi(2);
        err2 += (fused.phase.values()[i] - truth.values()[i]).powi(2);
        bound2 += var;
        n += 1;
    }
    let rms = (err2 / n.max(1) as f64).sqrt();
    let bound = FUSION_BOUND_MARGIN * (bound2 / n.max(1) as f64).sqrt();
    let pass = dense.valid_fraction() < 1.0 && covered == eligible && n > 0 && rms <= bound;
    verdict(
        4,
        "fusion completeness",
        pass,
        &format!(
            "densest-only valid {:.2}%, fused valid {:.2}% of {} loosest-level-unsaturated pixels, \
             replaced {} px with rms {:.4} rad <= {:.4}",
            100.0 * dense.valid_fraction(),
            100.0 * covered as f64 / eligible.max(1) as f64,
            eligible,
            n,
            rms,
            bound
        ),
        start.elapsed(),
        Some(Duration::from_secs(20)),
    );
}

#[test]
fn ripple_detection_naive_vs_fused() {
    let start = Instant::now();
    let out = shiny_render(4);
    let cfg = HdrConfig::default();
    let set = &out.left;
    let periods = set.periods();
    let fused = multi_freq_hdr(set, &set.wrapped_phases(&cfg).unwrap(), &cfg).unwrap();
    let naive_wrapped: Vec<PhaseMap> = set
        .levels()
        .iter()
        .map(|(s, _)| naive_phase_shifting(s).unwrap())
        .collect();
    let naive = densest_only(&naive_wrapped, &periods).unwrap();
    let c = compare_maps(&fused.phase, &naive, &out.truth.left.phase, &CompareOptions::default()).unwrap();
    let peak = c.naive_peak().unwrap();
    let fundamental = c.harmonic(1).unwrap();
    let ratio = peak.naive / peak.fused;
    verdict(
        5,
        "ripple detection",
        c.ripple_region > 0 && ratio >= RIPPLE_RATIO,
        &format!(
            "{} px differ; naive error peaks at harmonic {} of the dense fringe: naive {:.5} vs fused {:.5} rad \
             (x{:.1} >= {RIPPLE_RATIO}); fundamental naive {:.5} fused {:.5}",
            c.ripple_region, peak.k, peak.naive, peak.fused, ratio, fundamental.naive, fundamental.fused
        ),
        start.elapsed(),
        Some(Duration::from_secs(10)),
    );
}

#[test]
fn subpixel_matching_on_affine_ramps() {
    let start = Instant::now();
    let (w, h) = (200, 32);
    let mut d = Draws(6);
    let mut left = Vec::with_capacity(w * h);
    let mut right = Vec::with_capacity(w * h);
    let mut rows = Vec::new();
    for _ in 0..h {
        let (a, b) = (d.range(0.2, 2.0), d.range(-20.0, 20.0));
        rows.push(a);
        for u in 0..w {
            left.push(a * u as f64 + b);
            right.push(a * (u as f64 + DISPARITY) + b);
        }
    }
    let lm = PhaseMap::from_values(w, h, left, PhaseKind::Equivalent).unwrap();
    let rm = PhaseMap::from_values(w, h, right, PhaseKind::Equivalent).unwrap();
    let matches = match_pair(&RectifiedPair::new(&lm, &rm).unwrap(), DEFAULT_MAX_PHASE_GAP);
    // interior: the right position lies strictly between two right pixels
    let interior = (0..w).filter(|&u| {
        let ur = u as f64 - DISPARITY;
        ur >= 1.0 && ur <= (w - 2) as f64
    });
    let expected = interior.count() * h;
    let covered = matches
        .matches
        .iter()
        .filter(|m| {
            let ur = m.u_left as f64 - DISPARITY;
            ur >= 1.0 && ur <= (w - 2) as f64
        })
        .count();
    let worst = matches
        .matches
        .iter()
        .map(|m| (m.u_left as f64 - m.u_right - DISPARITY).abs())
        .fold(0.0, f64::max);
    verdict(
        6,
        "sub-pixel matching exactness",
        covered == expected && worst <= DISPARITY_TOL,
        &format!(
            "{covered}/{expected} interior pixels matched, max disparity error {worst:.2e} px <= {DISPARITY_TOL:e}"
        ),
        start.elapsed(),
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn end_to_end_closure_on_gaussian_bump() {
    let start = Instant::now();
    let scene = Scene::builtin("gaussian-bump").unwrap();
    let proj = ProjectorModel::default();
    let sensor = SensorModel::new(1.0).unwrap();
    let (l, r) = StereoRig::default().cameras().unwrap();
    let out = render_stacks(&scene, &proj, &sensor, &l, &r, 7).unwrap();
    let cfg = HdrConfig::default();
    let fl = multi_freq_hdr(&out.left, &out.left.wrapped_phases(&cfg).unwrap(), &cfg).unwrap();
    let fr = multi_freq_hdr(&out.right, &out.right.wrapped_phases(&cfg).unwrap(), &cfg).unwrap();
    let matches = match_pair(&RectifiedPair::new(&fl.phase, &fr.phase).unwrap(), DEFAULT_MAX_PHASE_GAP);
    let tri = triangulate(&matches, &l, &r, &TriangulationConfig::default()).unwrap();

    let w = fl.phase.width();
    let levels = proj.levels();
    let solver = Triangulator::new(l, r);
    let (mut err2, mut pred2) = (0.0, 0.0);
    let mut n = 0usize;
    let mut u_right = vec![f64::NAN; w * fl.phase.height()];
    for m in &matches.matches {
        u_right[m.v * w + m.u_left] = m.u_right;
    }
    for (p, &(u, v)) in tri.cloud.points().iter().zip(tri.cloud.provenance()) {
        let ur = u_right[v * w + u];
        let src = fl.source.data()[v * w + u] as usize;
        let per = proj.periods[src - 1];
        let b = proj.amplitude(per);
        let scale = per / proj.periods[levels - 1];
        let var_phi = 2.0 * sensor.sigma.powi(2) / (proj.steps[src - 1] as f64 * b * b) * scale * scale;
        let ui = ur.floor() as usize;
        let row = fr.phase.row_values(v);
        let g = row[(ui + 1).min(w - 1)] - row[ui];
        let var_u = var_phi * (1.0 + 2.0 / 3.0) / (g * g);
        let step = 1e-3;
        let zp = solver.solve(u as f64, v as f64, ur + step).unwrap()[2];
        let zm = solver.solve(u as f64, v as f64, ur - step).unwrap()[2];
        let dz = (zp - zm) / (2.0 * step);
        let truth = out.truth.left.points[v * w + u];
        err2 += (p[2] - truth[2]).powi(2);
        pred2 += dz * dz * var_u;
        n += 1;
    }
    let rms = (err2 / n as f64).sqrt();
    let predicted = (pred2 / n as f64).sqrt();
    verdict(
        7,
        "end-to-end closure",
        n > 0 && rms <= CLOSURE_MARGIN * predicted,
        &format!(
            "{n} points, rms z error {:.3} um <= {CLOSURE_MARGIN} x predicted {:.3} um",
            rms * 1e3,
            predicted * 1e3
        ),
        start.elapsed(),
        Some(Duration::from_secs(60)),
    );
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn run(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_hdr-fringe"))
        .args(args)
        .output()
        .unwrap();
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

#[test]
fn pipeline_is_deterministic() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_owned();
    run(&["simulate", "--seed", "11", "--output", &p("data")]);
    run(&["pipeline", "--input", &p("data"), "--output", &p("a")]);
    run(&["pipeline", "--input", &p("data"), "--output", &p("b")]);
    let (a, b) = (files_under(&tmp.path().join("a")), files_under(&tmp.path().join("b")));
    let identical = a == b
        && !a.is_empty()
        && a.iter().all(|f| {
            std::fs::read(tmp.path().join("a").join(f)).unwrap()
                == std::fs::read(tmp.path().join("b").join(f)).unwrap()
        });
    verdict(
        8,
        "pipeline determinism",
        identical,
        &format!("{} output files compared byte for byte", a.len()),
        start.elapsed(),
        None,
    );
}
