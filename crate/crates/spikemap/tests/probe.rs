// scratch probe: gamma-sweep improvement grid for candidate nets and references
use spikemap::eval::localization_error;
use spikemap::interpret::{ann_gradcam, sam_compute};
use spikemap::io::checkpoint::load_checkpoint;
use spikemap::dataset::synthetic_shapes;
use spikemap::rng::derive_seed;
use spikemap::snn::{poisson_encode, EvalOptions, RecordKind};

#[test]
fn gamma_grid() {
    let snn_paths = ["/tmp/smoke/deskv2/checkpoint.spkm"];
    let ann_paths = ["/tmp/smoke/deskannv2/checkpoint.spkm"];
    let data = synthetic_shapes(48, 4, 32, 7, 2000).unwrap();
    let gammas = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
    for snn_path in snn_paths {
        let snn = load_checkpoint(std::path::Path::new(snn_path)).unwrap().net;
        let mut records = Vec::new();
        for (idx, image) in data.images.iter().enumerate() {
            let seed = derive_seed(7, &[0x4556414c, idx as u64]);
            let train = poisson_encode(&image.pixels, 20, seed).unwrap();
            let record = snn
                .snn_forward(std::slice::from_ref(&train), &EvalOptions::default(), RecordKind::Spikes)
                .unwrap();
            records.push((image, record));
        }
        for ann_path in ann_paths {
            let ann = load_checkpoint(std::path::Path::new(ann_path)).unwrap().net;
            for (layer, stage) in
                [(0usize, 0usize), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]
            {
                let mut improved = 0usize;
                let mut stuck = 0usize;
                let mut href_sum = 0.0f64;
                for (image, record) in &records {
                    let reference = ann_gradcam(&ann, &image.pixels.scale(1.0 / 255.0), stage, image.label)
                        .unwrap()
                        .upsampled(32, 32)
                        .unwrap();
                    let errs: Vec<f64> = gammas
                        .iter()
                        .map(|g| {
                            let maps = sam_compute(record, layer, *g).unwrap();
                            let ups: Vec<_> =
                                maps.iter().map(|m| m.upsampled(32, 32).unwrap()).collect();
                            let res = localization_error(&ups, &reference, 1e-8).unwrap();
                            href_sum += res.reference_entropy / (gammas.len() as f64);
                            res.min_error
                        })
                        .collect();
                    let min = errs.iter().cloned().fold(f64::INFINITY, f64::min);
                    let spread =
                        errs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - min;
                    if errs[0] > min {
                        improved += 1;
                    }
                    if spread < 1e-12 {
                        stuck += 1;
                    }
                }
                println!(
                    "{} vs {} layer {} stage {}: improved {}/{} stuck {} mean_Href {:.3}",
                    snn_path,
                    ann_path,
                    layer,
                    stage,
                    improved,
                    records.len(),
                    stuck,
                    href_sum / (records.len() as f64)
                );
            }
        }
    }
}
