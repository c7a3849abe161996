use gdnet::network::xavier_bound;
use gdnet::weights::{read_weights, save_weights, write_weights};
use gdnet::{init_network, Error, Exec, GdNetConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(n: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[n, 1, 32, 32], |_| rng.random_range(-1.0..1.0))
}

#[test]
fn xavier_bounds_hold() {
    assert!((xavier_bound(144, 9) - 0.198).abs() < 1e-3);
    let p = init_network::<f32>(&GdNetConfig::default(), 17).unwrap();
    for (l, layer) in p.layers.iter().enumerate() {
        let c = layer.in_channels();
        let s = layer.branch_width();
        let bound = xavier_bound(c * 9, s * 9) as f32;
        assert!(layer.k1.data().iter().all(|v| v.abs() <= bound), "layer {l}");
        let mean = layer.k1.sum() / layer.k1.numel() as f32;
        // uniform on ±b has standard error b/sqrt(3n)
        let se = bound / (3.0 * layer.k1.numel() as f32).sqrt();
        assert!(mean.abs() < 5.0 * se, "layer {l} mean {mean}");
        assert_eq!(layer.subnet.neuron_bias.data(), &[0.0]);
    }
    assert_eq!(p.head_bias.data(), &[0.0]);
}

#[test]
fn init_is_deterministic_per_seed() {
    let c = GdNetConfig::default();
    assert_eq!(init_network::<f32>(&c, 3).unwrap(), init_network::<f32>(&c, 3).unwrap());
    assert_ne!(init_network::<f32>(&c, 3).unwrap(), init_network::<f32>(&c, 4).unwrap());
}

#[test]
fn architecture_contract() {
    let p = init_network::<f32>(&GdNetConfig::default(), 1).unwrap();
    let out = p.forward_with(Exec::Sequential, &batch(2, 1), false, 0).unwrap();
    let widths: Vec<usize> = out.layer_shapes.iter().map(|s| s[1]).collect();
    assert_eq!(widths, [32, 32, 64, 64, 64]);
    assert!(out.layer_shapes.iter().all(|s| s[0] == 2 && s[2] == 32 && s[3] == 32));
    assert_eq!(out.alphas.shape(), &[2, 5]);
    assert!(out.probabilities.iter().all(|&p| p > 0.0 && p < 1.0));
    assert!(out.alphas.data().iter().all(|&a| a > 0.0 && a < 1.0));
}

#[test]
fn zero_head_gives_even_odds() {
    let mut p = init_network::<f32>(&GdNetConfig::default(), 2).unwrap();
    p.head_weight = Tensor::zeros(p.head_weight.shape());
    let out = p.forward_with(Exec::Sequential, &batch(3, 2), false, 0).unwrap();
    assert_eq!(out.probabilities, vec![0.5; 3]);
    assert_eq!(out.alphas.shape(), &[3, 5]);
}

#[test]
fn rejects_wrong_input_shape() {
    let p = init_network::<f32>(&GdNetConfig::default(), 2).unwrap();
    let bad = Tensor::<f32>::zeros(&[1, 1, 16, 16]);
    assert!(matches!(p.forward(&bad, false, 0), Err(Error::InvalidShape(_))));
    let bad = Tensor::<f32>::zeros(&[1, 2, 32, 32]);
    assert!(p.forward(&bad, false, 0).is_err());
}

#[test]
fn inference_is_independent_of_seed_and_strategy() {
    let p = init_network::<f32>(&GdNetConfig::default(), 5).unwrap();
    let x = batch(2, 5);
    let a = p.forward_with(Exec::Sequential, &x, false, 1).unwrap();
    let b = p.forward_with(Exec::Parallel, &x, false, 99).unwrap();
    assert_eq!(a.probabilities, b.probabilities);
    assert_eq!(a.alphas, b.alphas);
    // training mode applies dropout, so different seeds give different outputs
    let c = p.forward_with(Exec::Sequential, &x, true, 1).unwrap();
    let d = p.forward_with(Exec::Sequential, &x, true, 2).unwrap();
    assert_ne!(c.probabilities, d.probabilities);
}

#[test]
fn view_averaging() {
    let p = init_network::<f32>(&GdNetConfig::default(), 6).unwrap();
    let x = batch(4, 6);
    let views: Vec<Tensor<f32>> = (0..4)
        .map(|i| x.slice_batch(i, 1).unwrap().reshape(&[1, 32, 32]).unwrap())
        .collect();
    let probs = p.forward_with(Exec::Sequential, &x, false, 0).unwrap().probabilities;
    let mean = probs.iter().sum::<f32>() / 4.0;
    let got = p.predict_views_with(Exec::Sequential, &views).unwrap();
    assert!((got - mean).abs() < 1e-6);
    let single = p.predict_views_with(Exec::Sequential, &views[..1]).unwrap();
    assert!((single - probs[0]).abs() < 1e-6);
    let same = p.predict_views_with(Exec::Sequential, &vec![views[0].clone(); 4]).unwrap();
    assert!((same - probs[0]).abs() < 1e-6);
    assert!(p.predict_views(&[]).is_err());
}

#[test]
fn weights_round_trip_bitwise() {
    let p = init_network::<f32>(&GdNetConfig::default(), 8).unwrap();
    let x = batch(3, 8);
    let before = p.forward_with(Exec::Sequential, &x, false, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    save_weights(&p, &path).unwrap();
    let q = gdnet::weights::load_weights(&path, &GdNetConfig::default()).unwrap();
    assert_eq!(p, q);
    let after = q.forward_with(Exec::Sequential, &x, false, 0).unwrap();
    let bits = |v: &[f32]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&before.probabilities), bits(&after.probabilities));
    assert_eq!(bits(before.alphas.data()), bits(after.alphas.data()));
}

#[test]
fn weight_file_errors_are_distinct() {
    let p = init_network::<f32>(&GdNetConfig::default(), 9).unwrap();
    let mut buf = Vec::new();
    write_weights(&p, &mut buf).unwrap();

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_weights(&bad[..]), Err(Error::BadMagic { .. })));

    let cut = &buf[..buf.len() - 3];
    assert!(matches!(read_weights(cut), Err(Error::Truncated(_))));

    let mut v2 = buf.clone();
    v2[4] = 2;
    assert!(matches!(read_weights(&v2[..]), Err(Error::UnsupportedVersion { found: 2, .. })));

    let small = GdNetConfig {
        branch_widths: vec![16, 16, 32, 32],
        dropout: vec![0.0; 4],
        ..GdNetConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    std::fs::write(&path, &buf).unwrap();
    assert!(matches!(
        gdnet::weights::load_weights(&path, &small),
        Err(Error::TensorCountMismatch { found: 27, expected: 22 })
    ));
    let wide = GdNetConfig {
        branch_widths: vec![16, 16, 32, 32, 16],
        ..GdNetConfig::default()
    };
    assert!(matches!(
        gdnet::weights::load_weights(&path, &wide),
        Err(Error::ShapeInconsistent { .. })
    ));
    assert!(matches!(
        gdnet::weights::load_weights(dir.path().join("missing"), &small),
        Err(Error::Io(_))
    ));
}
