use ctrecon::geometry::Geometry;
use ctrecon::image::Image;
use ctrecon::radon::build_operator;

fn main() {
    let i = 32usize;
    let g = Geometry::new(i, 64, 47).unwrap();
    let op = build_operator(&g).unwrap();
    for radius in [0.25, 0.28, 0.30, 0.32, 0.35, 0.38, 0.40] {
        let mut disk = Image::zeros(i);
        let w = 1.0 / i as f64;
        let sub = 8;
        for iy in 0..i {
            for ix in 0..i {
                let mut hits = 0;
                for sy in 0..sub {
                    for sx in 0..sub {
                        let x = (ix as f64 + (sx as f64 + 0.5) / sub as f64) * w - 0.5;
                        let y = (iy as f64 + (sy as f64 + 0.5) / sub as f64) * w - 0.5;
                        if x * x + y * y <= radius * radius {
                            hits += 1;
                        }
                    }
                }
                disk.set(ix, iy, hits as f64 / (sub * sub) as f64);
            }
        }
        let sino = op.forward(&disk).unwrap();
        let l = g.num_positions;
        let mut mean_row = vec![0.0; l];
        for k in 0..g.num_angles {
            for (m, v) in mean_row.iter_mut().zip(sino.row(k)) {
                *m += v / g.num_angles as f64;
            }
        }
        let mean_norm = mean_row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut worst = 0.0f64;
        for k in 0..g.num_angles {
            let dev = sino.row(k).iter().zip(&mean_row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            worst = worst.max(dev / mean_norm);
        }
        println!("radius {radius}: worst relative deviation {worst:.5}");
    }
}
