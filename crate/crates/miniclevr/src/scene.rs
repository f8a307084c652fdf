//! Symbolic scenes and their rejection-sampled layout.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attrs::{AttrValue, Attribute, Color, Material, Shape, Size};

pub const MIN_OBJECTS: usize = 3;
pub const MAX_OBJECTS: usize = 6;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub size: Size,
    pub material: Material,
    /// Normalized `(x, y)` in `[0, 1)^2`; `y` grows downwards.
    pub center: (f64, f64),
    /// Half-extent in pixels.
    pub radius: u32,
}

impl SceneObject {
    pub fn get(&self, attribute: Attribute) -> AttrValue {
        match attribute {
            Attribute::Shape => AttrValue::Shape(self.shape),
            Attribute::Color => AttrValue::Color(self.color),
            Attribute::Size => AttrValue::Size(self.size),
            Attribute::Material => AttrValue::Material(self.material),
        }
    }

    pub fn has(&self, value: AttrValue) -> bool {
        self.get(value.attribute()) == value
    }

    /// Center pixel `(column, row)` for an image of `size` pixels.
    pub fn pixel(&self, size: usize) -> (usize, usize) {
        ((self.center.0 * size as f64) as usize, (self.center.1 * size as f64) as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub image_size: usize,
    pub objects: Vec<SceneObject>,
}

pub fn radius_for(size: Size, image_size: usize) -> u32 {
    let r = match size {
        Size::Small => image_size as f64 / 12.0,
        Size::Large => image_size as f64 / 7.5,
    };
    r.round().max(1.0) as u32
}

impl Scene {
    /// Regenerates the scene owned by `seed`.
    pub fn from_seed(seed: u64, image_size: usize) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = sample_scene(&mut rng, image_size);
        scene.seed = seed;
        scene
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Bounding boxes are disjoint with at least one pixel between them,
    /// which implies center distance > r1 + r2 + 1.
    pub fn separated(a: &SceneObject, b: &SceneObject, image_size: usize) -> bool {
        let (ax, ay) = a.pixel(image_size);
        let (bx, by) = b.pixel(image_size);
        let gap = (a.radius + b.radius + 1) as usize;
        ax.abs_diff(bx) > gap || ay.abs_diff(by) > gap
    }
}

/// Samples 3-6 objects with uniform attributes and non-overlapping
/// positions. Attributes are drawn first and only positions are retried, so
/// placement difficulty does not skew the size marginal. When placement keeps
/// failing the object count is lowered.
pub fn sample_scene<R: Rng + ?Sized>(rng: &mut R, image_size: usize) -> Scene {
    let mut target = rng.gen_range(MIN_OBJECTS..=MAX_OBJECTS);
    loop {
        let mut objects: Vec<SceneObject> = Vec::with_capacity(target);
        let mut attempts = 0;
        while objects.len() < target && attempts < PLACEMENT_ATTEMPTS {
            let size = *Size::ALL.choose(rng).unwrap();
            let radius = radius_for(size, image_size);
            let mut candidate = SceneObject {
                shape: *Shape::ALL.choose(rng).unwrap(),
                color: *Color::ALL.choose(rng).unwrap(),
                size,
                material: *Material::ALL.choose(rng).unwrap(),
                center: (0.0, 0.0),
                radius,
            };
            let lo = radius as usize;
            let hi = image_size - 1 - radius as usize;
            while attempts < PLACEMENT_ATTEMPTS {
                attempts += 1;
                let px = rng.gen_range(lo..=hi);
                let py = rng.gen_range(lo..=hi);
                candidate.center = ((px as f64 + 0.5) / image_size as f64, (py as f64 + 0.5) / image_size as f64);
                if objects.iter().all(|o| Scene::separated(o, &candidate, image_size)) {
                    objects.push(candidate);
                    break;
                }
            }
        }
        if objects.len() == target || target <= 1 {
            return Scene { seed: 0, image_size, objects };
        }
        target -= 1;
    }
}
