//! Randomized properties of the pooling layer, checked against the
//! double-precision reference evaluator and central finite differences.

use rand::Rng;
use spxpool::pooling::{pool_backward, pool_forward, pool_forward_parallel, unpool_broadcast};
use spxpool::tensor::{FeatureImage, LabelMap, PoolCache, PoolMode};
use spxpool_oracle::{central_diff, gen, ref_pool};

const FD_STEP: f64 = 1e-3;

struct Instance {
    img: FeatureImage,
    seg: LabelMap,
}

fn instance(seed: u64, max_pixels: usize, max_channels: usize, max_k: usize) -> Instance {
    let mut rng = gen::rng(seed);
    let shape = gen::random_grid_shape(&mut rng, max_pixels, true);
    let channels = rng.random_range(1..=max_channels);
    let k = rng.random_range(1..=max_k.min(shape.pixel_count()));
    let img = gen::distinct_lattice_features(&mut rng, &shape, channels);
    let seg = gen::random_label_map(&mut rng, &shape, k);
    Instance { img, seg }
}

fn labels_as_usize(seg: &LabelMap) -> Vec<usize> {
    seg.labels().iter().map(|&l| l as usize).collect()
}

#[test]
fn forward_matches_reference_evaluator() {
    for seed in 0..30 {
        let Instance { img, seg } = instance(seed, 64, 4, 8);
        let labels = labels_as_usize(&seg);
        let data_f64: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
        for mode in [PoolMode::Max, PoolMode::Avg] {
            let (pooled, _) = pool_forward(&img, &seg, mode).unwrap();
            let expected = ref_pool(
                &data_f64,
                img.pixel_count(),
                &labels,
                seg.num_labels(),
                mode,
            );
            for (got, want) in pooled.data().iter().zip(&expected) {
                assert!(
                    (*got as f64 - want).abs() <= 1e-6 * want.abs().max(1.0),
                    "seed {seed}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..30 {
        let Instance { img, seg } = instance(seed, 64, 4, 8);
        let labels = labels_as_usize(&seg);
        let (pixels, k) = (img.pixel_count(), seg.num_labels());
        let mut rng = gen::rng(seed ^ 0x5eed);
        for mode in [PoolMode::Max, PoolMode::Avg] {
            let weights: Vec<f64> = (0..img.channels() * k)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();

            let (_, cache) = pool_forward(&img, &seg, mode).unwrap();
            let grad_out = spxpool::tensor::PooledFeatures::new(
                img.channels(),
                k,
                weights.iter().map(|&w| w as f32).collect(),
            )
            .unwrap();
            let analytic = pool_backward(&grad_out, &cache, &seg).unwrap();

            let x: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
            let loss = |data: &[f64]| -> f64 {
                ref_pool(data, pixels, &labels, k, mode)
                    .iter()
                    .zip(&weights)
                    .map(|(p, w)| p * w)
                    .sum()
            };
            let numeric = central_diff(loss, &x, FD_STEP);
            for (idx, (a, n)) in analytic.data().iter().zip(&numeric).enumerate() {
                assert!(
                    (*a as f64 - n).abs() < 1e-4,
                    "seed {seed} mode {mode:?} idx {idx}: analytic {a} vs fd {n}"
                );
            }
        }
    }
}

#[test]
fn avg_conservation_and_backward_mass() {
    for seed in 100..140 {
        let Instance { img, seg } = instance(seed, 256, 3, 8);
        let (pooled, cache) = pool_forward(&img, &seg, PoolMode::Avg).unwrap();
        let PoolCache::Avg { counts } = &cache else {
            unreachable!()
        };

        // Conservation: sum_k N(k) * pooled[c,k] == sum_i img[c,i].
        for c in 0..img.channels() {
            let lhs: f64 = (0..seg.num_labels())
                .map(|k| counts[k] as f64 * pooled.value(c, k) as f64)
                .sum();
            let rhs: f64 = img.channel(c).iter().map(|&v| v as f64).sum();
            assert!(
                (lhs - rhs).abs() <= 1e-5 * rhs.abs().max(1.0),
                "seed {seed}: {lhs} vs {rhs}"
            );
        }

        // Backward mass: a unit upstream gradient on one superpixel spreads
        // to per-pixel gradients summing to exactly 1 per channel.
        for k in 0..seg.num_labels() {
            let mut unit = vec![0.0f32; img.channels() * seg.num_labels()];
            for c in 0..img.channels() {
                unit[c * seg.num_labels() + k] = 1.0;
            }
            let grad_out =
                spxpool::tensor::PooledFeatures::new(img.channels(), seg.num_labels(), unit)
                    .unwrap();
            let grad_in = pool_backward(&grad_out, &cache, &seg).unwrap();
            for c in 0..img.channels() {
                let mass: f64 = grad_in.channel(c).iter().map(|&g| g as f64).sum();
                assert!((mass - 1.0).abs() < 1e-6, "seed {seed} k {k}: mass {mass}");
            }
        }
    }
}

#[test]
fn max_membership_and_backward_sparsity() {
    for seed in 200..240 {
        let Instance { img, seg } = instance(seed, 128, 3, 8);
        let (pooled, cache) = pool_forward(&img, &seg, PoolMode::Max).unwrap();
        let PoolCache::Max { argmax, .. } = &cache else {
            unreachable!()
        };
        let k = seg.num_labels();

        for c in 0..img.channels() {
            for j in 0..k {
                let i = argmax[c * k + j];
                assert_eq!(seg.label_at(i), j);
                // Membership is exact, bit for bit.
                assert_eq!(pooled.value(c, j).to_bits(), img.value(c, i).to_bits());
            }
        }

        // One nonzero per (channel, superpixel), located inside the superpixel.
        let ones =
            spxpool::tensor::PooledFeatures::new(img.channels(), k, vec![1.0; img.channels() * k])
                .unwrap();
        let grad_in = pool_backward(&ones, &cache, &seg).unwrap();
        for c in 0..img.channels() {
            let nonzero: Vec<usize> = grad_in
                .channel(c)
                .iter()
                .enumerate()
                .filter(|(_, &g)| g != 0.0)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(nonzero.len(), k, "seed {seed}");
        }
    }
}

#[test]
fn parallel_matches_serial_on_random_instances() {
    for seed in 300..330 {
        let mut rng = gen::rng(seed);
        let shape = gen::random_grid_shape(&mut rng, 4096, true);
        let channels = rng.random_range(1..=3);
        let k = rng.random_range(1..=32.min(shape.pixel_count()));
        let img = gen::uniform_features(&mut rng, &shape, channels);
        let seg = gen::random_label_map(&mut rng, &shape, k);
        let cell_edge = rng.random_range(1..=17);

        let (serial_max, cache_max) = pool_forward(&img, &seg, PoolMode::Max).unwrap();
        let (par_max, par_cache_max) =
            pool_forward_parallel(&img, &seg, PoolMode::Max, cell_edge).unwrap();
        assert_eq!(par_max.data(), serial_max.data(), "seed {seed}");
        assert_eq!(par_cache_max, cache_max, "seed {seed}");

        let (serial_avg, cache_avg) = pool_forward(&img, &seg, PoolMode::Avg).unwrap();
        let (par_avg, par_cache_avg) =
            pool_forward_parallel(&img, &seg, PoolMode::Avg, cell_edge).unwrap();
        assert_eq!(par_cache_avg, cache_avg, "seed {seed}");
        for (a, b) in par_avg.data().iter().zip(serial_avg.data()) {
            let rel = (a - b).abs() / b.abs().max(1e-12);
            assert!(rel <= 1e-5, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn pooling_is_idempotent_through_unpool() {
    for seed in 400..420 {
        let Instance { img, seg } = instance(seed, 128, 3, 6);
        for mode in [PoolMode::Max, PoolMode::Avg] {
            let (pooled, _) = pool_forward(&img, &seg, mode).unwrap();
            let broadcast = unpool_broadcast(&pooled, &seg).unwrap();
            let (pooled_again, _) = pool_forward(&broadcast, &seg, mode).unwrap();
            for (a, b) in pooled_again.data().iter().zip(pooled.data()) {
                match mode {
                    PoolMode::Max => assert_eq!(a.to_bits(), b.to_bits(), "seed {seed}"),
                    PoolMode::Avg => {
                        assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "seed {seed}")
                    }
                }
            }
        }
    }
}
