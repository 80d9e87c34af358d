//! The project's acceptance gate: nine numbered end-to-end checks with
//! pinned tolerances, run in order inside a single test so the heavy
//! fixtures (a fully trained model, a 100k-face benchmark mesh) are built
//! once and shared.
//!
//! Run `cargo test --test acceptance -- --nocapture` to watch the verdict
//! lines appear as each check finishes; without `--nocapture` the harness
//! shows them only if the gate fails. Expect several minutes of wall time,
//! most of it training (check 5) and benchmarking (checks 7 and 8).

use mesh_denoise::filter::{
    bilateral_filter, update_vertices, BilateralConfig, Sigma1Mode, VertexUpdateConfig,
};
use mesh_denoise::io::{save_mesh, MeshFormat};
use mesh_denoise::mesh::{Adjacency, Mesh};
use mesh_denoise::metrics::{normal_angle_alpha, one_sided_distance};
use mesh_denoise::model::{save_model, ModelBundle};
use mesh_denoise::neural::{
    elbo_loss, kl_divergence, Activation, CvaeParams, NetworkShape, TrainConfig,
};
use mesh_denoise::noise::{add_gaussian_noise, NoiseSpec};
use mesh_denoise::patch::{build_patch, encode_descriptor};
use mesh_denoise::pipeline::{
    benchmark, build_training_set, denoise_mesh, train_model, BenchmarkOptions, DenoiseConfig,
    Threads, TrainingSetOptions,
};
use mesh_denoise::rng::SeededRng;
use mesh_denoise::shapes;
use nalgebra::{Point3, Unit, UnitQuaternion, Vector3};
use ndarray::{concatenate, s, Array2, Axis};
use std::fmt::Write as _;
use std::time::Instant;

/// One verdict line of the gate.
struct Check {
    id: u32,
    name: &'static str,
    verdict: Verdict,
    detail: String,
}

enum Verdict {
    Pass,
    Fail,
    /// The check ran and its measurements are reported, but the assertion
    /// needs hardware this host does not have.
    Skip,
}

impl Check {
    fn line(&self) -> String {
        let verdict = match self.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        };
        format!("criterion {} {} {}: {}", self.id, verdict, self.name, self.detail)
    }
}

fn record(results: &mut Vec<Check>, id: u32, name: &'static str, outcome: Result<String, String>) {
    let check = match outcome {
        Ok(detail) => Check { id, name, verdict: Verdict::Pass, detail },
        Err(detail) => Check { id, name, verdict: Verdict::Fail, detail },
    };
    println!("{}", check.line());
    results.push(check);
}

#[test]
fn acceptance_gate() {
    let mut results = Vec::new();

    record(&mut results, 1, "descriptor invariance", descriptor_invariance());
    record(&mut results, 2, "gradient oracle", gradient_oracle());
    record(&mut results, 3, "loss identities", loss_identities());
    record(&mut results, 4, "filter fixed points", filter_fixed_points());

    let (efficacy, bundle) = end_to_end_efficacy();
    record(&mut results, 5, "end-to-end efficacy", efficacy);
    record(&mut results, 6, "oracle-normals sanity", oracle_normals());

    let (scaling, big_per_face) = parallel_scaling(bundle.as_ref());
    let check = match scaling {
        Ok((detail, true)) => Check { id: 7, name: "parallel scaling", verdict: Verdict::Pass, detail },
        Ok((detail, false)) => Check { id: 7, name: "parallel scaling", verdict: Verdict::Skip, detail },
        Err(detail) => Check { id: 7, name: "parallel scaling", verdict: Verdict::Fail, detail },
    };
    println!("{}", check.line());
    results.push(check);

    record(
        &mut results,
        8,
        "O(1) per-face inference",
        constant_per_face_cost(bundle.as_ref(), big_per_face),
    );
    record(&mut results, 9, "pipeline determinism", pipeline_determinism());

    let failed: Vec<&Check> = results
        .iter()
        .filter(|c| matches!(c.verdict, Verdict::Fail))
        .collect();
    if !failed.is_empty() {
        let mut summary = format!("{} of {} checks failed\n", failed.len(), results.len());
        for check in &results {
            let _ = writeln!(summary, "{}", check.line());
        }
        panic!("{summary}");
    }
}

/// Check 1: descriptors of 100 random patches survive 20 random rigid
/// motions within 1e-5 entrywise and uniform scaling by 0.1 and 10 within
/// 1e-6, in under 10 seconds.
fn descriptor_invariance() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = SeededRng::new(0x1AC5);

    // A jittered sphere: curved, irregular, no symmetric distance ties.
    let base = shapes::icosphere(3);
    let vertices: Vec<Point3<f64>> = base
        .vertices()
        .iter()
        .map(|v| {
            Point3::new(
                v.x + 0.04 * rng.uniform_symmetric(),
                v.y + 0.04 * rng.uniform_symmetric(),
                v.z + 0.04 * rng.uniform_symmetric(),
            )
        })
        .collect();
    let mesh = Mesh::new(vertices, base.faces().to_vec()).map_err(|e| e.to_string())?;
    let adj = Adjacency::build(&mesh);
    let a_c = Vector3::z();
    let patch_size = 8;

    let faces: Vec<u32> = (0..100).map(|_| rng.index(mesh.n_faces()) as u32).collect();
    let reference: Vec<Vec<f64>> = faces
        .iter()
        .map(|&f| descriptor_values(&mesh, &adj, f, patch_size, &a_c))
        .collect::<Result<_, String>>()?;

    let deviation_under = |mapped: &dyn Fn(&Point3<f64>) -> Point3<f64>| -> Result<f64, String> {
        let moved = Mesh::new(
            mesh.vertices().iter().map(|v| mapped(v)).collect(),
            mesh.faces().to_vec(),
        )
        .map_err(|e| e.to_string())?;
        let moved_adj = Adjacency::build(&moved);
        let mut worst = 0.0_f64;
        for (&f, reference) in faces.iter().zip(&reference) {
            let values = descriptor_values(&moved, &moved_adj, f, patch_size, &a_c)?;
            for (a, b) in values.iter().zip(reference) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    };

    let mut worst_rigid = 0.0_f64;
    for _ in 0..20 {
        let axis = Unit::new_normalize(Vector3::new(
            rng.standard_normal(),
            rng.standard_normal(),
            rng.standard_normal(),
        ));
        let rotation = UnitQuaternion::from_axis_angle(&axis, rng.uniform() * std::f64::consts::TAU);
        let translation = Vector3::new(
            10.0 * rng.uniform_symmetric(),
            10.0 * rng.uniform_symmetric(),
            10.0 * rng.uniform_symmetric(),
        );
        worst_rigid = worst_rigid.max(deviation_under(&|v| rotation.transform_point(v) + translation)?);
    }

    let mut worst_scale = 0.0_f64;
    for scale in [0.1, 10.0] {
        worst_scale = worst_scale.max(deviation_under(&|v| Point3::from(v.coords * scale))?);
    }

    let elapsed = started.elapsed().as_secs_f64();
    let detail = format!(
        "rigid max deviation {worst_rigid:.2e} (limit 1e-5), \
         scale max deviation {worst_scale:.2e} (limit 1e-6), {elapsed:.1} s (limit 10 s)"
    );
    if worst_rigid < 1e-5 && worst_scale < 1e-6 && elapsed < 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn descriptor_values(
    mesh: &Mesh,
    adj: &Adjacency,
    face: u32,
    patch_size: usize,
    a_c: &Vector3<f64>,
) -> Result<Vec<f64>, String> {
    let patch = build_patch(mesh, adj, face, patch_size).map_err(|e| e.to_string())?;
    Ok(encode_descriptor(&patch, a_c).map_err(|e| e.to_string())?.values)
}

/// One candidate network plus the fixed batch its gradients are probed on.
struct OracleModel {
    params: CvaeParams,
    x_noisy: Array2<f64>,
    x_clean: Array2<f64>,
    labels: Array2<f64>,
    eps: Array2<f64>,
}

/// Draws a random tiny network and probe batch from one seed stream.
fn draw_oracle_model(stream: u64) -> Result<OracleModel, String> {
    let mut rng = SeededRng::derive(0x6AD5, stream);
    let width = |rng: &mut SeededRng| 3 + rng.index(6);
    let shape = NetworkShape {
        encoder1: width(&mut rng),
        encoder2: width(&mut rng),
        latent: 2,
        decoder1: width(&mut rng),
        decoder2: width(&mut rng),
        activation: if stream % 2 == 0 {
            Activation::Relu
        } else {
            Activation::LeakyRelu(0.01)
        },
    };
    let dim = 4 + rng.index(4);
    let labels_n = 3;
    let batch = 4;
    let mut params =
        CvaeParams::init(dim, labels_n, shape, 1.0, &mut rng).map_err(|e| e.to_string())?;
    // Jitter every parameter so the probe point is generic. Fresh init
    // zeroes the biases, and at these widths a whole hidden row can die
    // under rectification, which parks the next layer's pre-activation
    // exactly on the bias, an exact kink when the bias is still zero.
    for slice in params.parameter_slices_mut() {
        for value in slice.iter_mut() {
            *value += 0.05 * rng.uniform_symmetric();
        }
    }

    let x_noisy = Array2::from_shape_fn((batch, dim), |_| 0.2 + 0.6 * rng.uniform());
    let x_clean = Array2::from_shape_fn((batch, dim), |_| 0.2 + 0.6 * rng.uniform());
    let mut labels = Array2::zeros((batch, labels_n));
    for row in 0..batch {
        labels[(row, rng.index(labels_n))] = 1.0;
    }
    let eps = Array2::from_shape_fn((batch, 2), |_| rng.standard_normal());
    Ok(OracleModel { params, x_noisy, x_clean, labels, eps })
}

/// Smallest |pre-activation| across the four rectified layers for the probe
/// batch, recomputed here from the public parameter tensors.
fn rectifier_margin(m: &OracleModel) -> f64 {
    let slope = match m.params.shape.activation {
        Activation::Relu => 0.0,
        Activation::LeakyRelu(s) => s,
    };
    let act = move |v: f64| if v > 0.0 { v } else { slope * v };
    let latent = m.params.shape.latent;
    let x_in = concatenate![Axis(1), m.labels.view(), m.x_noisy.view()];
    let a1 = x_in.dot(&m.params.w_e1) + &m.params.b_e1;
    let a2 = a1.mapv(act).dot(&m.params.w_e2) + &m.params.b_e2;
    let a3 = a2.mapv(act).dot(&m.params.w_e3) + &m.params.b_e3;
    let sigma = a3.slice(s![.., latent..]).mapv(|v| (0.5 * v).exp());
    let z = &a3.slice(s![.., ..latent]).to_owned() + &(&sigma * &m.eps);
    let z_in = concatenate![Axis(1), m.labels.view(), z.view()];
    let a4 = z_in.dot(&m.params.w_d1) + &m.params.b_d1;
    let a5 = a4.mapv(act).dot(&m.params.w_d2) + &m.params.b_d2;
    [&a1, &a2, &a4, &a5]
        .iter()
        .flat_map(|layer| layer.iter())
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
}

/// Check 2: analytic gradients of 20 random tiny networks (hidden widths
/// at most 8, 2 latent dimensions, 3 labels) match all-parameter central
/// finite differences at step 1e-4 within 1e-3 relative error, in under
/// 60 seconds.
///
/// Rectified networks are piecewise linear, so the central quotient is a
/// valid derivative estimate only where no pre-activation lies within the
/// probe interval of its kink; a straddling probe blends the two one-sided
/// slopes and no subgradient convention can match it. Candidate draws are
/// accepted only when every rectifier input clears a ten-step margin;
/// rejected ones are replaced from the next seed stream. Streams advance by
/// 20, which keeps the activation split at ten networks per kind.
fn gradient_oracle() -> Result<String, String> {
    let started = Instant::now();
    let step = 1e-4;
    let margin = 10.0 * step;
    let mut worst = 0.0_f64;
    let mut redrawn = 0u32;

    for model in 0..20u64 {
        let mut chosen = None;
        for attempt in 0..64u64 {
            let candidate = draw_oracle_model(model + 20 * attempt)?;
            if rectifier_margin(&candidate) > margin {
                chosen = Some(candidate);
                break;
            }
            redrawn += 1;
        }
        let Some(mut m) = chosen else {
            return Err(format!("model {model}: no draw cleared the rectifier margin"));
        };

        let (_, grads) = m
            .params
            .gradients(m.x_noisy.view(), m.x_clean.view(), m.labels.view(), m.eps.view(), None)
            .map_err(|e| e.to_string())?;
        let analytic: Vec<Vec<f64>> =
            grads.parameter_slices().iter().map(|s| s.to_vec()).collect();

        for (t, tensor) in analytic.iter().enumerate() {
            for i in 0..tensor.len() {
                let original = m.params.parameter_slices_mut()[t][i];
                m.params.parameter_slices_mut()[t][i] = original + step;
                let plus = m
                    .params
                    .loss_batch(
                        m.x_noisy.view(),
                        m.x_clean.view(),
                        m.labels.view(),
                        m.eps.view(),
                        None,
                    )
                    .map_err(|e| e.to_string())?;
                m.params.parameter_slices_mut()[t][i] = original - step;
                let minus = m
                    .params
                    .loss_batch(
                        m.x_noisy.view(),
                        m.x_clean.view(),
                        m.labels.view(),
                        m.eps.view(),
                        None,
                    )
                    .map_err(|e| e.to_string())?;
                m.params.parameter_slices_mut()[t][i] = original;
                let fd = (plus - minus) / (2.0 * step);
                let a = tensor[i];
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-4));
            }
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    let detail = format!(
        "20 networks ({redrawn} redrawn for rectifier margin), worst relative error {worst:.2e} \
         (limit 1e-3), {elapsed:.1} s (limit 60 s)"
    );
    if worst < 1e-3 && elapsed < 60.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Check 3: KL(0, 0) = 0 and KL((1), (0)) = 0.5 exactly; the cross-entropy
/// of matched 0.5-vectors of length 27 equals 27 ln 2 within 1e-12.
fn loss_identities() -> Result<String, String> {
    let kl_zero = kl_divergence(&[0.0], &[0.0]).map_err(|e| e.to_string())?;
    let kl_half = kl_divergence(&[1.0], &[0.0]).map_err(|e| e.to_string())?;

    let len = 27;
    let halves = vec![0.5; len];
    // Empty latent slices make the KL term zero, leaving pure cross-entropy.
    let bce = elbo_loss(&halves, &halves, &[], &[]).map_err(|e| e.to_string())?;
    let expected = len as f64 * std::f64::consts::LN_2;
    let bce_err = (bce - expected).abs();

    let detail = format!(
        "KL(0,0) = {kl_zero:e}, KL((1),(0)) = {kl_half}, \
         |BCE(0.5^27) - 27 ln 2| = {bce_err:.2e} (limit 1e-12)"
    );
    if kl_zero == 0.0 && kl_half == 0.5 && bce_err <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Check 4: on a planar 20x20 grid, 8 bilateral iterations leave the
/// normals unchanged and 20 vertex-update iterations leave the vertices
/// unchanged, both within 1e-9.
fn filter_fixed_points() -> Result<String, String> {
    let mesh = shapes::plane_grid(20, 20);
    let adj = Adjacency::build(&mesh);
    let normals = mesh.face_normals().to_vec();

    let filtered = bilateral_filter(
        &mesh,
        &adj,
        &normals,
        &BilateralConfig {
            sigma2: 0.15,
            iterations: 8,
            patch_size: 8,
            sigma1_mode: Sigma1Mode::MeanSquaredDistance,
        },
    )
    .map_err(|e| e.to_string())?;
    let normal_dev = filtered
        .iter()
        .zip(&normals)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0_f64, f64::max);

    let updated = update_vertices(&mesh, &adj, &normals, &VertexUpdateConfig { iterations: 20 })
        .map_err(|e| e.to_string())?;
    let vertex_dev = updated
        .vertices()
        .iter()
        .zip(mesh.vertices())
        .map(|(a, b)| (a - b).amax())
        .fold(0.0_f64, f64::max);

    let detail = format!(
        "bilateral normal deviation {normal_dev:.2e}, \
         vertex-update deviation {vertex_dev:.2e} (limits 1e-9)"
    );
    if normal_dev < 1e-9 && vertex_dev < 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The four training shapes for check 5, each at most 5000 faces: a sphere
/// (1280), a cube (4800), a cylinder (4100), and a torus (4000).
fn training_shapes() -> Vec<Mesh> {
    vec![
        shapes::icosphere(3),
        shapes::cuboid(20),
        shapes::cylinder(50, 40, 1.0, 2.0),
        shapes::torus(50, 40, 1.0, 0.4),
    ]
}

/// The held-out evaluation pair for checks 5 and 6: an icosphere at a
/// resolution absent from the training corpus, with fresh noise.
fn held_out_pair() -> Result<(Mesh, Mesh), String> {
    let clean = shapes::icosphere(4);
    let noisy = add_gaussian_noise(&clean, &NoiseSpec { mu: 0.0, beta: 0.1, seed: 2029 })
        .map_err(|e| e.to_string())?;
    Ok((clean, noisy))
}

/// Check 5: train on the four shapes (beta = 0.1 noise, K = 20 clusters,
/// patch size 8, 30 epochs), denoise the held-out noisy icosphere, and
/// require the mean normal angle to drop by at least 40% and the mean
/// one-sided distance by at least 30%, all in under 15 minutes.
///
/// Returns the trained bundle for reuse by the benchmark checks.
fn end_to_end_efficacy() -> (Result<String, String>, Option<ModelBundle>) {
    let started = Instant::now();
    let inner = || -> Result<(String, ModelBundle), String> {
        let options = TrainingSetOptions {
            noise: NoiseSpec { mu: 0.0, beta: 0.1, seed: 417 },
            patch_size: 8,
            clusters: 20,
            alignment_target: Vector3::z(),
            cluster_seed: 11,
            kmeans_iterations: 100,
            threads: Threads::Count(1),
        };
        let set = build_training_set(&training_shapes(), &options).map_err(|e| e.to_string())?;

        let shape = NetworkShape {
            encoder1: 128,
            encoder2: 128,
            latent: 8,
            decoder1: 128,
            decoder2: 128,
            activation: Activation::Relu,
        };
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            lr_decay: 0.99,
            batch_size: 128,
            epochs: 30,
            seed: 23,
            ..TrainConfig::default()
        };
        let (bundle, report) = train_model(&set, &shape, &cfg).map_err(|e| e.to_string())?;

        let (clean, noisy) = held_out_pair()?;
        let run_cfg = DenoiseConfig { threads: Threads::Count(1), ..bundle.config };
        let outcome = denoise_mesh(&noisy, &bundle, &run_cfg).map_err(|e| e.to_string())?;

        let alpha_noisy = normal_angle_alpha(&noisy, &clean).map_err(|e| e.to_string())?.mean_deg;
        let alpha_out =
            normal_angle_alpha(&outcome.mesh, &clean).map_err(|e| e.to_string())?.mean_deg;
        let dist_noisy = one_sided_distance(&noisy, &clean).map_err(|e| e.to_string())?.mean;
        let dist_out = one_sided_distance(&outcome.mesh, &clean).map_err(|e| e.to_string())?.mean;
        let alpha_drop = 1.0 - alpha_out / alpha_noisy;
        let dist_drop = 1.0 - dist_out / dist_noisy;
        let elapsed = started.elapsed().as_secs_f64();

        let detail = format!(
            "{} pairs, final train loss {:.3}, alpha {alpha_noisy:.2} -> {alpha_out:.2} deg \
             ({:.0}% drop, need >= 40%), distance {dist_noisy:.4} -> {dist_out:.4} \
             ({:.0}% drop, need >= 30%), {} skipped faces, {elapsed:.0} s (limit 900 s)",
            set.pairs.len(),
            report.final_train_loss().unwrap_or(f64::NAN),
            100.0 * alpha_drop,
            100.0 * dist_drop,
            outcome.skipped_faces,
        );
        if alpha_drop >= 0.40 && dist_drop >= 0.30 && elapsed < 900.0 {
            Ok((detail, bundle))
        } else {
            Err(detail)
        }
    };
    match inner() {
        Ok((detail, bundle)) => (Ok(detail), Some(bundle)),
        Err(detail) => (Err(detail), None),
    }
}

/// Check 6: feeding the clean mesh's own normals to 20 vertex-update
/// iterations must cut the mean one-sided distance of the beta = 0.1
/// icosphere at least in half.
fn oracle_normals() -> Result<String, String> {
    let (clean, noisy) = held_out_pair()?;
    let adj = Adjacency::build(&noisy);
    let updated = update_vertices(
        &noisy,
        &adj,
        clean.face_normals(),
        &VertexUpdateConfig { iterations: 20 },
    )
    .map_err(|e| e.to_string())?;

    let before = one_sided_distance(&noisy, &clean).map_err(|e| e.to_string())?.mean;
    let after = one_sided_distance(&updated, &clean).map_err(|e| e.to_string())?.mean;
    let drop = 1.0 - after / before;

    let detail =
        format!("distance {before:.4} -> {after:.4} ({:.0}% drop, need >= 50%)", 100.0 * drop);
    if drop >= 0.50 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Check 7: denoising a noisy 100k-face torus 20 times per thread count
/// must produce a bitwise-identical mesh at 1 and 4 threads, and the mean
/// inference-stage speedup at 4 threads must reach 2.0x.
///
/// The speedup assertion needs at least 4 hardware threads; on smaller
/// hosts the measured value is reported and the check counts as skipped
/// (the bitwise half is always enforced). Returns the measured 1-thread
/// per-face inference time of the 100k-face mesh for check 8.
#[allow(clippy::type_complexity)]
fn parallel_scaling(
    bundle: Option<&ModelBundle>,
) -> (Result<(String, bool), String>, Option<f64>) {
    let mut per_face = None;
    let mut inner = || -> Result<(String, bool), String> {
        let bundle = bundle.ok_or("no trained bundle (check 5 failed before training)")?;
        let clean = shapes::torus(250, 200, 1.0, 0.4);
        let faces = clean.n_faces();
        let noisy = add_gaussian_noise(&clean, &NoiseSpec { mu: 0.0, beta: 0.1, seed: 31 })
            .map_err(|e| e.to_string())?;

        let run_cfg = DenoiseConfig { threads: Threads::All, ..bundle.config };
        let options = BenchmarkOptions { thread_counts: vec![1, 4], repetitions: 20 };
        let report = benchmark(&noisy, bundle, &run_cfg, &options).map_err(|e| e.to_string())?;

        let single = report
            .stage_stats("inference", 1)
            .ok_or("missing 1-thread inference records")?;
        per_face = Some(single.mean / faces as f64);
        let speedup = report
            .speedup("inference", 1, 4)
            .ok_or("missing 4-thread inference records")?;

        let hardware = std::thread::available_parallelism().map_or(1, |n| n.get());
        let identical = report.identical_across_threads;
        if !identical {
            return Err(format!(
                "output mesh differs between 1 and 4 threads (speedup {speedup:.2}x)"
            ));
        }
        let detail = format!(
            "{faces} faces, mean inference speedup {speedup:.2}x at 4 threads \
             (need >= 2.0x), output bitwise identical across thread counts"
        );
        if speedup >= 2.0 {
            Ok((detail, true))
        } else if hardware < 4 {
            Ok((
                format!(
                    "{detail}; speedup assertion skipped: host exposes {hardware} hardware \
                     thread(s), so no parallel speedup is measurable"
                ),
                false,
            ))
        } else {
            Err(detail)
        }
    };
    let outcome = inner();
    (outcome, per_face)
}

/// Check 8: per-face inference time on a 10k-face torus must match the
/// 100k-face measurement from check 7 within 25%.
fn constant_per_face_cost(
    bundle: Option<&ModelBundle>,
    big_per_face: Option<f64>,
) -> Result<String, String> {
    let bundle = bundle.ok_or("no trained bundle (check 5 failed before training)")?;
    let big = big_per_face.ok_or("no 100k-face measurement (check 7 did not finish)")?;

    let clean = shapes::torus(100, 50, 1.0, 0.4);
    let faces = clean.n_faces();
    let noisy = add_gaussian_noise(&clean, &NoiseSpec { mu: 0.0, beta: 0.1, seed: 32 })
        .map_err(|e| e.to_string())?;

    let run_cfg = DenoiseConfig { threads: Threads::All, ..bundle.config };
    let options = BenchmarkOptions { thread_counts: vec![1], repetitions: 20 };
    let report = benchmark(&noisy, bundle, &run_cfg, &options).map_err(|e| e.to_string())?;
    let small = report
        .stage_stats("inference", 1)
        .ok_or("missing 1-thread inference records")?
        .mean
        / faces as f64;

    let diff = (small - big).abs() / big;
    let detail = format!(
        "per-face inference {:.2} us on 10k faces vs {:.2} us on 100k faces, \
         difference {:.1}% (limit 25%)",
        small * 1e6,
        big * 1e6,
        100.0 * diff
    );
    if diff < 0.25 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Check 9: the full pipeline (noise, training set, 2 training epochs,
/// denoising) run twice under one seed yields a bitwise-identical model
/// file and output mesh file.
fn pipeline_determinism() -> Result<String, String> {
    let run = || -> Result<(Vec<u8>, String), String> {
        let options = TrainingSetOptions {
            noise: NoiseSpec { mu: 0.0, beta: 0.1, seed: 88 },
            patch_size: 8,
            clusters: 6,
            alignment_target: Vector3::z(),
            cluster_seed: 4,
            kmeans_iterations: 50,
            threads: Threads::Count(2),
        };
        let meshes = vec![shapes::icosphere(2), shapes::cuboid(4)];
        let set = build_training_set(&meshes, &options).map_err(|e| e.to_string())?;

        let shape = NetworkShape {
            encoder1: 32,
            encoder2: 24,
            latent: 4,
            decoder1: 24,
            decoder2: 32,
            activation: Activation::Relu,
        };
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 2,
            seed: 15,
            ..TrainConfig::default()
        };
        let (bundle, _) = train_model(&set, &shape, &cfg).map_err(|e| e.to_string())?;
        let model_bytes = save_model(&bundle);

        let target = add_gaussian_noise(
            &shapes::icosphere(3),
            &NoiseSpec { mu: 0.0, beta: 0.1, seed: 89 },
        )
        .map_err(|e| e.to_string())?;
        let run_cfg = DenoiseConfig { threads: Threads::Count(2), ..bundle.config };
        let outcome = denoise_mesh(&target, &bundle, &run_cfg).map_err(|e| e.to_string())?;
        Ok((model_bytes, save_mesh(&outcome.mesh, MeshFormat::Off)))
    };

    let first = run()?;
    let second = run()?;
    let detail = format!(
        "model file ({} bytes) and output mesh ({} bytes) identical across two runs",
        first.0.len(),
        first.1.len()
    );
    if first == second {
        Ok(detail)
    } else {
        Err(format!(
            "repeat run differs (model identical: {}, mesh identical: {})",
            first.0 == second.0,
            first.1 == second.1
        ))
    }
}
