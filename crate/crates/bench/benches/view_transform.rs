use criterion::{criterion_group, criterion_main, Criterion};
use heightformer_core::tensorcore::{normal_tensor, seeded_rng};
use heightformer_core::{build_mapping_table, lift_features, CameraCalib, ImageFeatures, VoxelGrid};

fn roadside_camera() -> CameraCalib {
    CameraCalib::looking_forward((1750.0, 1750.0), (768.0, 432.0), [0.0, 0.0, 6.0], 10f64.to_radians()).unwrap()
}

fn view_transform(c: &mut Criterion) {
    let calib = roadside_camera();
    let grid = VoxelGrid::new((0.0, 102.4), (-51.2, 51.2), (-1.0, 3.0), 0.8).unwrap();
    let mut group = c.benchmark_group("view_transform");
    group.sample_size(10);
    group.bench_function("build_mapping_table 128x128x5", |b| {
        b.iter(|| build_mapping_table(&calib, &grid, (864, 1536), 16).unwrap())
    });
    let table = build_mapping_table(&calib, &grid, (864, 1536), 16).unwrap();
    let img = ImageFeatures::new(normal_tensor::<f32, _>(&[16, 54, 96], &mut seeded_rng(0))).unwrap();
    group.bench_function("lift_features C=16 128x128x5", |b| b.iter(|| lift_features(&img, &table).unwrap()));
    group.finish();
}

criterion_group!(benches, view_transform);
criterion_main!(benches);
