//! Rasterizes scenes into `[3, S, S]` images with values in `[0, 1]`.

use cbnr_tensor::Tensor;

use crate::attrs::{Material, Shape};
use crate::scene::{Scene, SceneObject};

pub const BACKGROUND: [f32; 3] = [0.85, 0.85, 0.85];
pub const HIGHLIGHT: [f32; 3] = [1.0, 1.0, 1.0];
pub const MIN_IMAGE_SIZE: usize = 32;

fn covers(obj: &SceneObject, size: usize, row: usize, col: usize) -> bool {
    let (cx, cy) = (obj.center.0 * size as f64, obj.center.1 * size as f64);
    let (x, y) = (col as f64 + 0.5 - cx, row as f64 + 0.5 - cy);
    let r = obj.radius as f64;
    match obj.shape {
        Shape::Circle => x * x + y * y <= r * r,
        Shape::Square => x.abs() <= r && y.abs() <= r,
        // apex at the top, base at the bottom
        Shape::Triangle => y >= -r && y <= r && x.abs() <= (y + r) / 2.0,
    }
}

/// Renders `scene` at `size x size`. Panics if `size < MIN_IMAGE_SIZE`.
pub fn render(scene: &Scene, size: usize) -> Tensor<f32> {
    let mut img = vec![0f32; 3 * size * size];
    render_into(scene, size, &mut img);
    Tensor::new(vec![3, size, size], img).expect("image buffer matches its shape")
}

pub fn render_into(scene: &Scene, size: usize, img: &mut [f32]) {
    assert!(size >= MIN_IMAGE_SIZE, "image size {size} below {MIN_IMAGE_SIZE}");
    assert_eq!(img.len(), 3 * size * size);
    let plane = size * size;
    let mut paint = |row: usize, col: usize, rgb: [f32; 3]| {
        for (c, v) in rgb.into_iter().enumerate() {
            img[c * plane + row * size + col] = v;
        }
    };
    for row in 0..size {
        for col in 0..size {
            paint(row, col, BACKGROUND);
        }
    }
    for obj in &scene.objects {
        let r = obj.radius as usize + 1;
        let (px, py) = obj.pixel(size);
        for row in py.saturating_sub(r)..(py + r + 1).min(size) {
            for col in px.saturating_sub(r)..(px + r + 1).min(size) {
                if covers(obj, size, row, col) {
                    paint(row, col, obj.color.rgb());
                }
            }
        }
        if obj.material == Material::Shiny {
            for row in py.saturating_sub(1)..=py {
                for col in px.saturating_sub(1)..=px {
                    paint(row, col, HIGHLIGHT);
                }
            }
        }
    }
}
