//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use stretchtomo::augment::{add_noise, draw_shifts, AugmentSpec};
use stretchtomo::classic::{bp, fbp, FilterSpec};
use stretchtomo::eval::*;
use stretchtomo::io::{decode, encode, read_tensor, write_tensor, Tensor};
use stretchtomo::phantom::{blob_field, PhantomSpec};
use stretchtomo::projector::{backproject, project, ProjectorSpec};
use stretchtomo::stretch::{as_sparse_operator, stretch, stretch_adjoint, StretchSpec};
use stretchtomo::tensor::{linspace_deg, Moments, StackKind, TiltGeometry, TiltStack};
use stretchtomo::Error;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn f64s(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn adjoint_identity() -> Outcome {
    let mut r = rng(1);
    let dims = [4, 6, 6];
    let (mut worst, mut worst_dense) = (0f64, 0f64);
    for _ in 0..100 {
        let mut angles: Vec<f64> = (0..5).map(|_| r.random_range(-60.0..=60.0)).collect();
        angles.sort_by(f64::total_cmp);
        let spec = ProjectorSpec::new(angles.clone(), dims).unwrap();
        let x = random_volume(dims, &mut r);
        let y = random_stack(&spec.geometry, &mut r);
        let px = project(&x, &spec).unwrap();
        let pty = backproject(&y, &spec).unwrap();
        let gap = (dot(px.data(), y.data()) - dot(x.data(), pty.data())).abs() / (norm(px.data()) * norm(y.data()));
        worst = worst.max(gap);
        let dense = dense_projector(&angles, dims, true);
        worst_dense = worst_dense.max(max_abs_diff(&dense.apply(x.data()), px.data()));
        worst_dense = worst_dense.max(max_abs_diff(&dense.apply_t(y.data()), pty.data()));
    }
    outcome(worst < 1e-5 && worst_dense < 1e-5, format!("max adjoint gap {worst:.2e}, max deviation from dense oracle {worst_dense:.2e}"))
}

fn stretch_operator() -> Outcome {
    let mut r = rng(2);
    let angles = linspace_deg(-60.0, 60.0, 8);
    let g = TiltGeometry::new(angles.clone(), [3, 40]).unwrap();
    let spec = StretchSpec::new(g.clone());

    let g0 = TiltGeometry::new(vec![0.0], [5, 33]).unwrap();
    let y0 = random_stack(&g0, &mut r);
    let ident = stretch(&y0, &StretchSpec::new(g0)).unwrap();
    let identity = ident.data().iter().zip(y0.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    // small integers keep every product and sum exact
    let ints = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f32> { (0..8 * 3 * 40).map(|_| r.random_range(-8i32..8) as f32).collect() };
    let (a, b) = (ints(&mut r), ints(&mut r));
    let mk = |d: Vec<f32>| TiltStack::new(g.clone(), StackKind::Raw, d).unwrap();
    let one_zero = TiltGeometry::new(vec![0.0, 60.0], [3, 40]).unwrap();
    let exact_spec = StretchSpec::new(one_zero.clone());
    let mk2 = |d: &[f32]| TiltStack::new(one_zero.clone(), StackKind::Raw, d[..2 * 3 * 40].to_vec()).unwrap();
    let sum: Vec<f32> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
    let (sa, sb, ss) = (
        stretch(&mk2(&a), &exact_spec).unwrap(),
        stretch(&mk2(&b), &exact_spec).unwrap(),
        stretch(&mk2(&sum), &exact_spec).unwrap(),
    );
    let linear = ss.data().iter().zip(sa.data().iter().zip(sb.data())).all(|(s, (p, q))| *s == p + q);
    let (ya, yb) = (mk(a.clone()), mk(b.clone()));
    let (fa, fb) = (stretch(&ya, &spec).unwrap(), stretch(&yb, &spec).unwrap());
    let fs = stretch(&mk(sum.clone()), &spec).unwrap();
    let lin_general = fs.data().iter().zip(fa.data().iter().zip(fb.data())).map(|(s, (p, q))| (s - (p + q)).abs()).fold(0f32, f32::max);

    let y = random_stack(&g, &mut r);
    let sy = stretch(&y, &spec).unwrap();
    let sparse = as_sparse_operator(&spec, y.dims()).unwrap();
    let sparse_dev = max_abs_diff(&sparse.apply(y.data()).unwrap(), sy.data());
    let dense_dev = max_abs_diff(&dense_stretch(&angles, 3, 40, true).apply(y.data()), sy.data());

    let z = TiltStack::new(g.clone(), StackKind::Stretched, random_stack(&g, &mut r).data().to_vec()).unwrap();
    let stz = stretch_adjoint(&z, &spec).unwrap();
    let gap = (dot(sy.data(), z.data()) - dot(y.data(), stz.data())).abs() / (norm(sy.data()) * norm(z.data()));
    outcome(
        identity && linear && lin_general < 1e-5 && sparse_dev < 1e-6 && dense_dev < 1e-6 && gap < 1e-6,
        format!(
            "identity {identity}, exact linearity {linear} (general-angle residual {lin_general:.1e}), sparse dev {sparse_dev:.1e}, dense dev {dense_dev:.1e}, adjoint gap {gap:.1e}"
        ),
    )
}

fn xcorr_offset(a: &[f32], b: &[f32], max_lag: i64) -> i64 {
    let n = a.len() as i64;
    let score = |l: i64| -> f64 {
        (0..n).filter(|&j| j + l >= 0 && j + l < n).map(|j| a[j as usize] as f64 * b[(j + l) as usize] as f64).sum()
    };
    (-max_lag..=max_lag).max_by(|&p, &q| score(p).total_cmp(&score(q))).unwrap()
}

fn central_plane_alignment() -> Outcome {
    let dims = [9, 3, 256];
    let w = dims[2];
    let plate = thin_plate(dims);
    let angles = linspace_deg(-60.0, 60.0, 8);
    let spec = ProjectorSpec::new(angles.clone(), dims).unwrap();
    let stretched = stretch(&project(&plate, &spec).unwrap(), &StretchSpec::new(spec.geometry.clone())).unwrap();
    let reference = project(&plate, &ProjectorSpec::new(vec![0.0], dims).unwrap()).unwrap();
    let scaled: Vec<Vec<f32>> = angles
        .iter()
        .enumerate()
        .map(|(k, deg)| stretched.view(k).iter().map(|&v| v * deg.to_radians().cos() as f32).collect())
        .collect();
    let mut worst_lag = 0i64;
    for a in 0..angles.len() {
        for b in a + 1..angles.len() {
            for i in 0..dims[1] {
                let lag = xcorr_offset(&scaled[a][i * w..(i + 1) * w], &scaled[b][i * w..(i + 1) * w], 16);
                worst_lag = worst_lag.max(lag.abs());
            }
        }
    }
    let ref64 = f64s(reference.view(0));
    let worst_l2 = scaled.iter().map(|v| rel_l2(&ref64, v)).fold(0f64, f64::max);
    outcome(worst_lag <= 1 && worst_l2 <= 0.05, format!("max pairwise xcorr offset {worst_lag} px, max rel L2 vs θ=0 view {worst_l2:.4}"))
}

fn augmentation_statistics() -> Outcome {
    let (v, h, w) = (8, 512, 512);
    let g = TiltGeometry::new(linspace_deg(-60.0, 60.0, v), [h, w]).unwrap();
    let data: Vec<f32> = (0..v * h * w)
        .map(|idx| {
            let (k, i, j) = (idx / (h * w), (idx / w) % h, idx % w);
            5.0 + (j as f32 * 0.05 + k as f32).sin() * (i as f32 * 0.03).cos()
        })
        .collect();
    let y = TiltStack::new(g, StackKind::Raw, data).unwrap();
    let noisy = add_noise(&y, &AugmentSpec { noise_ratio: 0.3, rng_seed: 4, ..Default::default() }).unwrap();
    let diff: Vec<f32> = noisy.data().iter().zip(y.data()).map(|(a, b)| a - b).collect();
    let ratio = Moments::of(&diff).unwrap().std() / Moments::of(y.data()).unwrap().std();

    let mut counts = [[0usize; 7]; 2];
    let mut bounded = true;
    for seed in 0..1250u64 {
        let log = draw_shifts(8, &AugmentSpec { n_misaligned: 8, shift_range: 3, rng_seed: seed, ..Default::default() }).unwrap();
        for s in log.shifts {
            for (axis, d) in [s.di, s.dj].into_iter().enumerate() {
                if d.abs() > 3 {
                    bounded = false;
                } else {
                    counts[axis][(d + 3) as usize] += 1;
                }
            }
        }
    }
    let (n, p) = (10_000f64, 1.0 / 7.0);
    let se = (n * p * (1.0 - p)).sqrt();
    let worst_z = counts.iter().flatten().map(|&c| (c as f64 - n * p).abs() / se).fold(0f64, f64::max);
    outcome(
        (ratio - 0.3).abs() <= 0.005 && bounded && worst_z <= 3.0,
        format!("noise std ratio {ratio:.5}, shifts within ±3: {bounded}, worst bin deviation {worst_z:.2} SE over 10,000 draws"),
    )
}

fn tiling_plan() -> Outcome {
    let plan = plan_tiling([992, 1000, 1000], [32, 512, 512]).unwrap();
    outcome(
        plan.len() == 124 && plan.overlap(1) == 24 && plan.overlap(2) == 24 && plan.overlap(0) == 0,
        format!("{} patches, xy overlap {}×{}", plan.len(), plan.overlap(1), plan.overlap(2)),
    )
}

fn fbp_sanity() -> Outcome {
    let dims = [16, 64, 64];
    let truth = blob_field(dims, 6, 7, 0.2);
    let truth64 = f64s(truth.data());
    let spec = ProjectorSpec::new(linspace_deg(-89.0, 89.0, 90), dims).unwrap();
    let y = project(&truth, &spec).unwrap();
    let f = fbp(&y, &FilterSpec::default(), &spec).unwrap();
    let fbp_err = rel_l2(&truth64, f.data());
    let b = bp(&y, &spec).unwrap();
    let scale = (dot(truth.data(), b.data()) / dot(b.data(), b.data())) as f32;
    let b_scaled: Vec<f32> = b.data().iter().map(|&v| v * scale).collect();
    let bp_err = rel_l2(&truth64, &b_scaled);

    let cfg = toy_sweep(vec![ReconPath::Fbp], vec![0.0, 0.4]);
    let report = run_sweep(&cfg).unwrap();
    let (m0, m4) = (report.row("fbp", 0.0, 0).unwrap().mean, report.row("fbp", 0.4, 0).unwrap().mean);
    outcome(
        fbp_err < 0.25 && fbp_err < bp_err && m4 > m0,
        format!("fbp rel L2 {fbp_err:.4} vs normalized bp {bp_err:.4}; fbp sweep MSE {m0:.4} @0.0 → {m4:.4} @0.4"),
    )
}

fn stto_format() -> Outcome {
    let mut r = rng(7);
    let dir = tempfile::tempdir().unwrap();
    let mut exact = true;
    for t in 0..200 {
        let dims = [r.random_range(1..6), r.random_range(1..9), r.random_range(1..9)];
        let path = dir.path().join(format!("t{t}.stto"));
        let tensor = if t % 2 == 0 {
            Tensor::Volume(random_volume(dims, &mut r))
        } else {
            let g = TiltGeometry::new(linspace_deg(-60.0, 60.0, dims[0]), [dims[1], dims[2]]).unwrap();
            Tensor::Stack(random_stack(&g, &mut r))
        };
        write_tensor(&tensor, &path).unwrap();
        let back = read_tensor(&path).unwrap();
        exact &= back.dims() == tensor.dims()
            && back.data().iter().zip(tensor.data()).all(|(a, b)| a.to_bits() == b.to_bits())
            && matches!((&back, &tensor), (Tensor::Volume(_), Tensor::Volume(_)) | (Tensor::Stack(_), Tensor::Stack(_)));
    }
    let layout = encode([1, 1, 2], &[1.0, 2.0]).unwrap()[25..] == [0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40];
    let mut magic = encode([1, 1, 1], &[1.0]).unwrap();
    magic[..4].copy_from_slice(b"XXXX");
    let bad_magic = matches!(decode(&magic), Err(Error::Format { field: "magic", .. }));
    let mut short = encode([1, 2, 2], &[0.0; 4]).unwrap();
    short.truncate(short.len() - 4);
    let bad_len = matches!(decode(&short), Err(Error::Length { .. }));
    outcome(
        exact && layout && bad_magic && bad_len,
        format!("200 bit-exact round trips: {exact}, payload layout {layout}, XXXX magic rejected {bad_magic}, 2×2 with 3 floats rejected {bad_len}"),
    )
}

fn toy_sweep(paths: Vec<ReconPath>, noise: Vec<f64>) -> SweepConfig {
    SweepConfig {
        volume: VolumeSource::Phantom(PhantomSpec::cells([16, 64, 64], 12, 3)),
        patch_dims: [4, 32, 32],
        angles_deg: linspace_deg(-60.0, 60.0, 8),
        paths,
        noise_levels: noise,
        misalignments: vec![0, 4],
        shift_range: 3,
        seed: 2024,
        path_weighting: true,
        direction: Default::default(),
        filter: FilterSpec::default(),
        trainer: None,
    }
}

fn sweep_determinism() -> Outcome {
    let cfg = toy_sweep(vec![ReconPath::Fbp, ReconPath::Bp, ReconPath::Oracle], vec![0.0, 0.3]);
    let (a, b) = (run_sweep(&cfg).unwrap(), run_sweep(&cfg).unwrap());
    let same = a.to_csv() == b.to_csv();
    outcome(same, format!("{} rows, CSVs byte-identical: {same}", a.rows.len()))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("projector adjoint identity", Duration::from_secs(10), adjoint_identity),
        ("stretch operator", Duration::from_secs(10), stretch_operator),
        ("central-plane alignment", Duration::from_secs(30), central_plane_alignment),
        ("noise and misalignment statistics", Duration::from_secs(30), augmentation_statistics),
        ("tiling plan", Duration::from_secs(1), tiling_plan),
        ("fbp sanity and noise monotonicity", Duration::from_secs(60), fbp_sanity),
        ("stto format", Duration::from_secs(5), stto_format),
        ("classical sweep determinism", Duration::from_secs(120), sweep_determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let ok = out.ok && took <= budget;
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.2}s, budget {}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
