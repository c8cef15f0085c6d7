//! End-to-end forward passes, weight files and config validation.

use std::io::Write;

use xhrnet_core::backbone::{build_network, load_weights, save_weights, NetConfig};
use xhrnet_core::init::Initializer;
use xhrnet_core::{Error, Network, Tensor};

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    Initializer::new(seed).uniform(&[3, h, w], -1.0, 1.0).unwrap()
}

#[test]
fn x18_output_shapes() {
    let net: Network = build_network(&NetConfig::x18(), 0).unwrap();
    assert_eq!(net.forward(&image(256, 192, 1)).unwrap().shape(), &[17, 64, 48]);
    assert_eq!(net.forward(&image(384, 288, 2)).unwrap().shape(), &[17, 96, 72]);
}

#[test]
fn forward_is_deterministic_per_seed() {
    let cfg = NetConfig::x18();
    let x = image(64, 64, 3);
    let a = build_network::<f64>(&cfg, 5).unwrap().forward(&x).unwrap();
    let b = build_network::<f64>(&cfg, 5).unwrap().forward(&x).unwrap();
    let c = build_network::<f64>(&cfg, 6).unwrap().forward(&x).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.all_finite());
}

#[test]
fn other_block_types_and_x30_run() {
    for cfg in [NetConfig::preset("x18-shuffle").unwrap(), NetConfig::preset("x18-bare").unwrap(), NetConfig::x30()] {
        let y = build_network::<f64>(&cfg, 0).unwrap().forward(&image(64, 32, 4)).unwrap();
        assert_eq!(y.shape(), &[17, 16, 8]);
    }
}

#[test]
fn weights_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x18.bin");
    let net: Network = build_network(&NetConfig::x18(), 11).unwrap();
    save_weights(&net, &path).unwrap();
    let template: Network = build_network(&NetConfig::x18(), 99).unwrap();
    let loaded = load_weights(&template, &path).unwrap();
    let x = image(128, 96, 12);
    let diff = net.forward(&x).unwrap().max_abs_diff(&loaded.forward(&x).unwrap()).unwrap();
    assert!(diff <= 1e-5, "round trip drifted by {diff}");
}

#[test]
fn weights_from_another_variant_name_the_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.bin");
    save_weights(&build_network::<f64>(&NetConfig::preset("x18-bare").unwrap(), 0).unwrap(), &path).unwrap();
    let template: Network = build_network(&NetConfig::x18(), 0).unwrap();
    match load_weights(&template, &path) {
        Err(Error::Format(m)) => assert!(m.contains("susa"), "{m}"),
        other => panic!("expected format error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn truncated_and_foreign_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    let net: Network = build_network(&NetConfig::x18(), 0).unwrap();
    save_weights(&net, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_weights(&net, &path), Err(Error::Format(_))));

    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(b"PK\x03\x04not a weights file").unwrap();
    drop(f);
    assert!(matches!(load_weights(&net, &path), Err(Error::Format(_))));
}

#[test]
fn indivisible_input_is_a_dimension_error() {
    let net: Network = build_network(&NetConfig::x18(), 0).unwrap();
    assert!(matches!(net.forward(&image(250, 192, 0)), Err(Error::Dimension(_))));
    let gray = Tensor::zeros(vec![1, 64, 64]).unwrap();
    assert!(matches!(net.forward(&gray), Err(Error::Dimension(_))));
}

#[test]
fn config_errors_name_the_key() {
    let mut cfg = NetConfig::x18();
    cfg.stages[0].branch_channels[1] = 90;
    match cfg.validate() {
        Err(Error::Config { key, message }) => {
            assert_eq!(key, "stages[0].branch_channels[1]");
            assert!(message.contains("80"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let text = NetConfig::x18().to_json().replace("\"num_joints\"", "\"num_jionts\"");
    assert!(matches!(NetConfig::from_json(&text), Err(Error::Format(_))));
}

#[test]
fn config_json_round_trip() {
    for name in NetConfig::preset_names() {
        let cfg = NetConfig::preset(name).unwrap();
        assert_eq!(NetConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
