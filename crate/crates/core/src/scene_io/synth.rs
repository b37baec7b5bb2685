//! Procedural indoor scenes.
//!
//! Every scene class has a template: a room box with class-specific extents
//! plus a furnishing routine that places box-built objects with class-specific
//! counts, layouts and colour palettes. Points are sampled on the exposed
//! surfaces, weighted by area. Geometry (room shape, furniture arrangement),
//! colour (wall/floor themes, object palettes) and object-label frequencies
//! all carry scene-type information, with deliberate overlap between classes
//! (beds occur in bedrooms and apartments, desks in offices, classrooms and
//! computer clusters, and so on).
//!
//! Each scene has its own RNG stream derived from `(seed, class, index)`, so a
//! dataset is a pure function of its [`SynthConfig`].

use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::format::quantise;
use super::{
    save_scene, DatasetManifest, ObjectId, PointCloud, SceneSample, Splits, Taxonomy,
    OBJECT_CLASSES, SCENE_CLASSES,
};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Scenes generated per scene class, across all splits.
    pub scenes_per_class: usize,
    /// Of those, how many go to the validation split.
    pub val_per_class: usize,
    /// Of those, how many go to the test split.
    pub test_per_class: usize,
    /// Inclusive range of points per scene.
    pub points_per_scene: [usize; 2],
    /// Bounds applied to every horizontal room side, metres.
    pub room_extent: [f64; 2],
    /// Range of room heights, metres.
    pub room_height: [f64; 2],
    /// Standard deviation of the positional noise, metres.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scenes_per_class: 25,
            val_per_class: 5,
            test_per_class: 0,
            points_per_scene: [1800, 2200],
            room_extent: [0.8, 14.0],
            room_height: [2.4, 3.0],
            noise_sigma: 0.005,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.scenes_per_class == 0 {
            return bad("scenes_per_class must be >= 1");
        }
        if self.val_per_class + self.test_per_class > self.scenes_per_class {
            return bad("val_per_class + test_per_class exceeds scenes_per_class");
        }
        let [lo, hi] = self.points_per_scene;
        if lo == 0 || hi < lo {
            return bad("points_per_scene must be a range [min, max] with min >= 1");
        }
        for (name, [a, b]) in [("room_extent", self.room_extent), ("room_height", self.room_height)]
        {
            if !(a > 0.0 && b >= a && b.is_finite()) {
                return bad(&format!("{name} must be a positive range"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        Ok(())
    }
}

/// Writes `scenes/<class>_<index>.txt` files and `manifest.toml` under
/// `out_dir`, returning the manifest (with `root = out_dir`).
pub fn generate_synthetic_dataset(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let taxonomy = Taxonomy::default();
    let scene_dir = out_dir.join("scenes");
    std::fs::create_dir_all(&scene_dir).map_err(|e| Error::io(&scene_dir, e))?;

    let mut splits = Splits::default();
    for class in 0..taxonomy.num_scene_classes() {
        for index in 0..cfg.scenes_per_class {
            let sample = generate_scene(cfg, class, index)?;
            let rel = PathBuf::from("scenes").join(format!("{}.txt", sample.scene_id));
            save_scene(&sample, &out_dir.join(&rel), &taxonomy)?;
            let train = cfg.scenes_per_class - cfg.val_per_class - cfg.test_per_class;
            if index < train {
                splits.train.push(rel);
            } else if index < train + cfg.val_per_class {
                splits.val.push(rel);
            } else {
                splits.test.push(rel);
            }
        }
    }
    let manifest = DatasetManifest {
        seed: Some(cfg.seed),
        taxonomy,
        splits,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.toml"))?;
    Ok(manifest)
}

/// Generates one scene of the given class. Positions are rounded to the
/// scene file's 6-decimal grid so saving and reloading is exact.
pub fn generate_scene(cfg: &SynthConfig, class: usize, index: usize) -> Result<SceneSample> {
    let name = *SCENE_CLASSES
        .get(class)
        .ok_or_else(|| Error::invalid(format!("scene class {class} out of range")))?;
    let mut rng = seed::rng(seed::derive_indexed(
        cfg.seed,
        &format!("synth/{name}"),
        index as u64,
    ));
    let mut builder = SceneBuilder::new(cfg, class, &mut rng);
    furnish(name, &mut builder, &mut rng);
    let n = rng.random_range(cfg.points_per_scene[0]..=cfg.points_per_scene[1]);
    let cloud = builder.sample(n, cfg.noise_sigma, &mut rng)?;
    Ok(SceneSample {
        cloud,
        scene_label: class,
        scene_id: format!("{name}_{index:04}"),
    })
}

fn obj(name: &str) -> ObjectId {
    OBJECT_CLASSES
        .iter()
        .position(|n| *n == name)
        .expect("object class name") as ObjectId
}

/// Axis-aligned box; only the faces flagged in `faces` receive points.
#[derive(Clone, Debug)]
struct Prim {
    lo: [f64; 3],
    hi: [f64; 3],
    label: ObjectId,
    colour: [f64; 3],
    /// Faces: -x, +x, -y, +y, -z, +z.
    faces: [bool; 6],
    weight: f64,
}

impl Prim {
    fn face_area(&self, f: usize) -> f64 {
        let e = [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ];
        match f / 2 {
            0 => e[1] * e[2],
            1 => e[0] * e[2],
            _ => e[0] * e[1],
        }
    }

    fn sample_face(&self, f: usize, rng: &mut Rng) -> [f64; 3] {
        let axis = f / 2;
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = if a == axis {
                if f.is_multiple_of(2) {
                    self.lo[a]
                } else {
                    self.hi[a]
                }
            } else {
                lerp(self.lo[a], self.hi[a], rng.random::<f64>())
            };
        }
        p
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn u(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn count(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Where an object sits: footprint origin and quarter-turn rotation.
#[derive(Clone, Copy, Debug)]
struct Placement {
    x: f64,
    y: f64,
    z: f64,
    rot: u8,
}

/// Local-frame object: boxes over footprint `[0,sx]×[0,sy]`, y pointing away
/// from the wall it backs onto.
struct Object {
    sx: f64,
    sy: f64,
    parts: Vec<Prim>,
}

impl Object {
    fn new(sx: f64, sy: f64) -> Self {
        Self {
            sx,
            sy,
            parts: Vec::new(),
        }
    }

    fn part(mut self, lo: [f64; 3], hi: [f64; 3], label: ObjectId, colour: [f64; 3]) -> Self {
        self.parts.push(Prim {
            lo,
            hi,
            label,
            colour,
            faces: [true, true, true, true, false, true],
            weight: 1.0,
        });
        self
    }
}

struct SceneBuilder {
    w: f64,
    d: f64,
    prims: Vec<Prim>,
}

/// Per-class wall tint. Spread around the colour wheel but weakly applied,
/// so colour alone only partially identifies the scene type.
fn class_theme(class: usize) -> [f64; 3] {
    let hue = (class as f64 * 7.0 / 21.0).fract() * 6.0;
    let x = 1.0 - (hue % 2.0 - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [80.0 + 150.0 * r, 80.0 + 150.0 * g, 80.0 + 150.0 * b]
}

const NEUTRALS: [[f64; 3]; 5] = [
    [235.0, 232.0, 225.0],
    [210.0, 205.0, 195.0],
    [180.0, 180.0, 182.0],
    [225.0, 215.0, 190.0],
    [200.0, 210.0, 215.0],
];

const FLOORS: [[f64; 3]; 5] = [
    [150.0, 110.0, 70.0],
    [120.0, 120.0, 125.0],
    [190.0, 180.0, 165.0],
    [90.0, 80.0, 75.0],
    [170.0, 140.0, 100.0],
];

/// Room extents `(width, depth)` and whether the room is tall (stairwells).
fn room_extents(name: &str) -> ([f64; 2], [f64; 2], bool) {
    match name {
        "apartment" => ([6.0, 8.0], [5.0, 7.0], false),
        "bathroom" => ([1.8, 2.8], [1.6, 2.4], false),
        "bedroom" => ([3.2, 4.5], [3.0, 4.0], false),
        "library" => ([5.0, 8.0], [4.0, 6.0], false),
        "classroom" => ([6.0, 8.5], [5.5, 7.5], false),
        "closet" => ([1.0, 1.8], [0.9, 1.6], false),
        "computer_cluster" => ([5.0, 7.0], [4.0, 6.0], false),
        "conference_room" => ([4.5, 7.0], [3.2, 4.5], false),
        "copy_room" => ([2.0, 3.2], [1.8, 3.0], false),
        "dining_room" => ([3.5, 5.0], [3.2, 4.5], false),
        "game_room" => ([4.5, 7.0], [4.0, 6.0], false),
        "gym" => ([7.0, 10.0], [6.0, 9.0], false),
        "hallway" => ([5.0, 10.0], [1.2, 2.0], false),
        "kitchen" => ([3.0, 4.5], [2.4, 3.6], false),
        "laundry_room" => ([2.0, 3.0], [1.8, 2.6], false),
        "living_room" => ([4.0, 6.0], [3.8, 5.5], false),
        "lobby" => ([8.0, 12.0], [6.0, 9.0], false),
        "misc" => ([2.0, 8.0], [2.0, 7.0], false),
        "office" => ([3.0, 4.5], [2.8, 4.0], false),
        "stairs" => ([1.2, 2.2], [3.0, 5.0], true),
        _ => ([3.0, 6.0], [3.0, 5.0], false), // storage
    }
}

impl SceneBuilder {
    fn new(cfg: &SynthConfig, class: usize, rng: &mut Rng) -> Self {
        let name = SCENE_CLASSES[class];
        let ([w0, w1], [d0, d1], tall) = room_extents(name);
        let [e0, e1] = cfg.room_extent;
        let w = u(rng, w0, w1).clamp(e0, e1);
        let d = u(rng, d0, d1).clamp(e0, e1);
        let h = if tall {
            u(rng, 3.5, 5.0)
        } else {
            u(rng, cfg.room_height[0], cfg.room_height[1])
        };
        let theme = class_theme(class);
        let mut b = Self {
            w,
            d,
            prims: Vec::new(),
        };

        let neutral = NEUTRALS[rng.random_range(0..NEUTRALS.len())];
        let mix = u(rng, 0.15, 0.55);
        let wall_colour = blend(neutral, theme, mix);
        let floor_colour = blend(FLOORS[rng.random_range(0..FLOORS.len())], theme, mix * 0.3);
        let (wall, floor) = (obj("wall"), obj("floor"));

        b.prims.push(Prim {
            lo: [0.0, 0.0, 0.0],
            hi: [w, d, 0.0],
            label: floor,
            colour: floor_colour,
            faces: [false, false, false, false, false, true],
            weight: 1.0,
        });
        // Scans often miss a wall; drop at most one.
        let missing = if rng.random::<f64>() < 0.3 {
            Some(rng.random_range(0..4))
        } else {
            None
        };
        let walls = [
            ([0.0, 0.0, 0.0], [0.0, d, h], 1),
            ([w, 0.0, 0.0], [w, d, h], 0),
            ([0.0, 0.0, 0.0], [w, 0.0, h], 3),
            ([0.0, d, 0.0], [w, d, h], 2),
        ];
        for (i, (lo, hi, face)) in walls.into_iter().enumerate() {
            if Some(i) == missing {
                continue;
            }
            let mut faces = [false; 6];
            faces[face] = true;
            b.prims.push(Prim {
                lo,
                hi,
                label: wall,
                colour: wall_colour,
                faces,
                weight: 1.0,
            });
        }
        b
    }

    /// Places an object with its back against a random wall.
    fn against_wall(&mut self, o: Object, rng: &mut Rng) {
        let side = rng.random_range(0..4u8);
        self.against(o, side, rng);
    }

    /// `side`: 0 = y=0 wall, 1 = x=w wall, 2 = y=d wall, 3 = x=0 wall.
    fn against(&mut self, o: Object, side: u8, rng: &mut Rng) {
        let along = if side.is_multiple_of(2) { self.w } else { self.d };
        let t = u(rng, 0.0, (along - o.sx).max(0.0));
        let p = match side {
            0 => Placement { x: t, y: 0.0, z: 0.0, rot: 0 },
            1 => Placement { x: self.w - o.sy, y: t, z: 0.0, rot: 1 },
            2 => Placement { x: t, y: self.d - o.sy, z: 0.0, rot: 2 },
            _ => Placement { x: 0.0, y: t, z: 0.0, rot: 3 },
        };
        self.place(o, p);
    }

    /// Places an object anywhere on the floor with a random quarter turn.
    fn free(&mut self, o: Object, rng: &mut Rng) {
        let rot = rng.random_range(0..4u8);
        let (fx, fy) = if rot % 2 == 0 { (o.sx, o.sy) } else { (o.sy, o.sx) };
        let x = u(rng, 0.0, (self.w - fx).max(0.0));
        let y = u(rng, 0.0, (self.d - fy).max(0.0));
        self.place(o, Placement { x, y, z: 0.0, rot });
    }

    fn at(&mut self, o: Object, x: f64, y: f64, rot: u8) {
        self.place(o, Placement { x, y, z: 0.0, rot });
    }

    fn place(&mut self, o: Object, p: Placement) {
        let (sx, sy) = (o.sx, o.sy);
        let map = |x: f64, y: f64| -> (f64, f64) {
            match p.rot % 4 {
                0 => (p.x + x, p.y + y),
                1 => (p.x + sy - y, p.y + x),
                2 => (p.x + sx - x, p.y + sy - y),
                _ => (p.x + y, p.y + sx - x),
            }
        };
        for mut prim in o.parts {
            let (ax, ay) = map(prim.lo[0], prim.lo[1]);
            let (bx, by) = map(prim.hi[0], prim.hi[1]);
            let clamp_x = |v: f64| v.clamp(0.0, self.w);
            let clamp_y = |v: f64| v.clamp(0.0, self.d);
            prim.lo = [clamp_x(ax.min(bx)), clamp_y(ay.min(by)), prim.lo[2] + p.z];
            prim.hi = [clamp_x(ax.max(bx)), clamp_y(ay.max(by)), prim.hi[2] + p.z];
            prim.weight = 2.0;
            self.prims.push(prim);
        }
    }

    fn sample(&self, n: usize, sigma: f64, rng: &mut Rng) -> Result<PointCloud> {
        let mut faces = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for (i, p) in self.prims.iter().enumerate() {
            for f in 0..6 {
                if p.faces[f] {
                    let a = p.face_area(f) * p.weight;
                    if a > 0.0 {
                        total += a;
                        faces.push((i, f));
                        cumulative.push(total);
                    }
                }
            }
        }
        let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
        let mut positions = Vec::with_capacity(n);
        let mut colours = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let r = rng.random::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= r).min(faces.len() - 1);
            let (pi, f) = faces[k];
            let prim = &self.prims[pi];
            let mut pos = prim.sample_face(f, rng);
            for v in &mut pos {
                if sigma > 0.0 {
                    *v += noise.sample(rng);
                }
                *v = quantise(*v);
            }
            let mut c = [0u8; 3];
            for a in 0..3 {
                let v = prim.colour[a] + u(rng, -10.0, 10.0);
                c[a] = v.round().clamp(0.0, 255.0) as u8;
            }
            positions.push(pos);
            colours.push(c);
            labels.push(prim.label);
        }
        PointCloud::new(positions, Some(colours), Some(labels))
    }
}

fn blend(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [lerp(a[0], b[0], t), lerp(a[1], b[1], t), lerp(a[2], b[2], t)]
}

fn pick(rng: &mut Rng, palette: &[[f64; 3]]) -> [f64; 3] {
    let base = palette[rng.random_range(0..palette.len())];
    let j = |rng: &mut Rng, v: f64| (v + u(rng, -15.0, 15.0)).clamp(0.0, 255.0);
    [j(rng, base[0]), j(rng, base[1]), j(rng, base[2])]
}

const WOOD: [[f64; 3]; 3] = [[140.0, 95.0, 60.0], [170.0, 130.0, 85.0], [100.0, 70.0, 45.0]];
const WHITE: [[f64; 3]; 2] = [[240.0, 240.0, 238.0], [225.0, 228.0, 230.0]];
const FABRIC: [[f64; 3]; 4] = [
    [60.0, 80.0, 140.0],
    [150.0, 60.0, 60.0],
    [90.0, 130.0, 90.0],
    [200.0, 190.0, 170.0],
];
const METAL: [[f64; 3]; 2] = [[150.0, 155.0, 160.0], [60.0, 62.0, 66.0]];
const BLACK: [[f64; 3]; 1] = [[35.0, 35.0, 38.0]];

// Object builders, local frame: x along the wall, y away from it, z up.

fn bed(rng: &mut Rng) -> Object {
    let (sx, sy) = (u(rng, 1.4, 1.8), u(rng, 1.9, 2.1));
    let (frame, linen) = (pick(rng, &WOOD), pick(rng, &FABRIC));
    Object::new(sx, sy)
        .part([0.0, 0.0, 0.0], [sx, 0.08, 1.0], obj("bed"), frame)
        .part([0.0, 0.08, 0.0], [sx, sy, 0.55], obj("bed"), linen)
}

fn chair(rng: &mut Rng) -> Object {
    let c = pick(rng, &[[40.0, 40.0, 45.0], [170.0, 130.0, 85.0], [60.0, 80.0, 140.0]]);
    let l = obj("chair");
    Object::new(0.46, 0.46)
        .part([0.0, 0.0, 0.42], [0.46, 0.46, 0.47], l, c)
        .part([0.0, 0.0, 0.47], [0.46, 0.05, 0.9], l, c)
        .part([0.02, 0.02, 0.0], [0.06, 0.06, 0.42], l, c)
        .part([0.40, 0.40, 0.0], [0.44, 0.44, 0.42], l, c)
}

fn table(sx: f64, sy: f64, height: f64, colour: [f64; 3]) -> Object {
    let l = obj("table");
    let leg = 0.06;
    Object::new(sx, sy)
        .part([0.0, 0.0, height - 0.04], [sx, sy, height], l, colour)
        .part([0.0, 0.0, 0.0], [leg, leg, height - 0.04], l, colour)
        .part([sx - leg, 0.0, 0.0], [sx, leg, height - 0.04], l, colour)
        .part([0.0, sy - leg, 0.0], [leg, sy, height - 0.04], l, colour)
        .part([sx - leg, sy - leg, 0.0], [sx, sy, height - 0.04], l, colour)
}

fn desk(rng: &mut Rng) -> Object {
    let (sx, sy) = (u(rng, 1.2, 1.6), u(rng, 0.6, 0.8));
    let c = pick(rng, &[[200.0, 195.0, 185.0], [140.0, 95.0, 60.0], [110.0, 110.0, 115.0]]);
    let l = obj("desk");
    Object::new(sx, sy)
        .part([0.0, 0.0, 0.71], [sx, sy, 0.75], l, c)
        .part([sx - 0.4, 0.0, 0.0], [sx, sy, 0.71], l, c)
        .part([0.0, 0.0, 0.0], [0.05, sy, 0.71], l, c)
}

fn sofa(rng: &mut Rng) -> Object {
    let (sx, sy) = (u(rng, 1.8, 2.4), u(rng, 0.85, 0.95));
    let c = pick(rng, &FABRIC);
    let l = obj("sofa");
    Object::new(sx, sy)
        .part([0.0, 0.0, 0.0], [sx, 0.22, 0.85], l, c)
        .part([0.15, 0.22, 0.0], [sx - 0.15, sy, 0.45], l, c)
        .part([0.0, 0.22, 0.0], [0.15, sy, 0.62], l, c)
        .part([sx - 0.15, 0.22, 0.0], [sx, sy, 0.62], l, c)
}

fn bookshelf(rng: &mut Rng) -> Object {
    let (sx, sy, h) = (u(rng, 0.8, 1.2), u(rng, 0.3, 0.4), u(rng, 1.8, 2.2));
    let c = pick(rng, &WOOD);
    let books = pick(rng, &FABRIC);
    let l = obj("bookshelf");
    let mut o = Object::new(sx, sy)
        .part([0.0, 0.0, 0.0], [0.03, sy, h], l, c)
        .part([sx - 0.03, 0.0, 0.0], [sx, sy, h], l, c)
        .part([0.0, 0.0, 0.0], [sx, 0.02, h], l, c);
    let shelves = 5;
    for s in 0..shelves {
        let z = h * s as f64 / (shelves - 1) as f64;
        o = o.part([0.03, 0.0, z], [sx - 0.03, sy, z + 0.02], l, c);
        if s + 1 < shelves {
            o = o.part([0.05, 0.05, z + 0.02], [sx - 0.05, sy - 0.05, z + 0.25], l, books);
        }
    }
    o
}

fn cabinet(rng: &mut Rng, tall: bool) -> Object {
    let sx = u(rng, 0.6, 1.2);
    let sy = u(rng, 0.45, 0.6);
    let h = if tall { u(rng, 1.6, 2.1) } else { u(rng, 0.7, 1.0) };
    let c = pick(rng, &[[230.0, 225.0, 215.0], [140.0, 95.0, 60.0], [150.0, 155.0, 160.0]]);
    Object::new(sx, sy).part([0.0, 0.0, 0.0], [sx, sy, h], obj("cabinet"), c)
}

fn wall_cabinet(rng: &mut Rng) -> Object {
    let sx = u(rng, 0.6, 1.2);
    let c = pick(rng, &[[230.0, 225.0, 215.0], [140.0, 95.0, 60.0]]);
    Object::new(sx, 0.35).part([0.0, 0.0, 1.45], [sx, 0.35, 2.1], obj("cabinet"), c)
}

fn counter(rng: &mut Rng, length: f64) -> Object {
    let c = pick(rng, &[[60.0, 60.0, 62.0], [220.0, 215.0, 205.0], [120.0, 100.0, 80.0]]);
    Object::new(length, 0.62).part([0.0, 0.0, 0.0], [length, 0.62, 0.92], obj("counter"), c)
}

fn refrigerator(rng: &mut Rng) -> Object {
    let c = pick(rng, &[[235.0, 235.0, 235.0], [170.0, 172.0, 175.0]]);
    Object::new(0.72, 0.7).part([0.0, 0.0, 0.0], [0.72, 0.7, 1.8], obj("refrigerator"), c)
}

fn toilet(rng: &mut Rng) -> Object {
    let c = pick(rng, &WHITE);
    let l = obj("toilet");
    Object::new(0.45, 0.7)
        .part([0.0, 0.0, 0.0], [0.45, 0.2, 0.8], l, c)
        .part([0.04, 0.2, 0.0], [0.41, 0.7, 0.42], l, c)
}

fn sink(rng: &mut Rng) -> Object {
    let c = pick(rng, &WHITE);
    let l = obj("sink");
    Object::new(0.55, 0.45)
        .part([0.0, 0.0, 0.72], [0.55, 0.45, 0.88], l, c)
        .part([0.2, 0.0, 0.0], [0.35, 0.2, 0.72], l, c)
}

fn bathtub(rng: &mut Rng) -> Object {
    let (sx, sy, h) = (u(rng, 1.5, 1.7), u(rng, 0.7, 0.8), 0.55);
    let c = pick(rng, &WHITE);
    let l = obj("bathtub");
    let t = 0.07;
    Object::new(sx, sy)
        .part([0.0, 0.0, 0.0], [sx, t, h], l, c)
        .part([0.0, sy - t, 0.0], [sx, sy, h], l, c)
        .part([0.0, t, 0.0], [t, sy - t, h], l, c)
        .part([sx - t, t, 0.0], [sx, sy - t, h], l, c)
        .part([t, t, 0.0], [sx - t, sy - t, 0.1], l, c)
}

fn shower_curtain(rng: &mut Rng, length: f64) -> Object {
    let c = pick(rng, &[[200.0, 220.0, 235.0], [240.0, 240.0, 240.0], [230.0, 200.0, 200.0]]);
    Object::new(length, 0.8).part(
        [0.0, 0.78, 0.3],
        [length, 0.8, 2.0],
        obj("shower_curtain"),
        c,
    )
}

fn door(rng: &mut Rng) -> Object {
    let c = pick(rng, &[[150.0, 105.0, 65.0], [230.0, 230.0, 225.0]]);
    Object::new(0.9, 0.05).part([0.0, 0.0, 0.0], [0.9, 0.05, 2.05], obj("door"), c)
}

fn window(rng: &mut Rng) -> Object {
    let sx = u(rng, 0.8, 1.6);
    let c = pick(rng, &[[170.0, 200.0, 225.0], [200.0, 215.0, 230.0]]);
    Object::new(sx, 0.04).part([0.0, 0.0, 0.9], [sx, 0.04, 2.1], obj("window"), c)
}

fn picture(rng: &mut Rng) -> Object {
    let sx = u(rng, 0.4, 1.0);
    let c = pick(rng, &[[180.0, 60.0, 50.0], [50.0, 90.0, 160.0], [220.0, 190.0, 60.0]]);
    Object::new(sx, 0.03).part([0.0, 0.0, 1.3], [sx, 0.03, 1.85], obj("picture"), c)
}

fn curtain(rng: &mut Rng) -> Object {
    let sx = u(rng, 1.2, 2.0);
    let c = pick(rng, &FABRIC);
    Object::new(sx, 0.14).part([0.0, 0.06, 0.1], [sx, 0.14, 2.3], obj("curtain"), c)
}

fn other(rng: &mut Rng, size: [[f64; 2]; 3], palette: &[[f64; 3]]) -> Object {
    let (sx, sy, sz) = (
        u(rng, size[0][0], size[0][1]),
        u(rng, size[1][0], size[1][1]),
        u(rng, size[2][0], size[2][1]),
    );
    let c = pick(rng, palette);
    Object::new(sx, sy).part([0.0, 0.0, 0.0], [sx, sy, sz], obj("other_furniture"), c)
}

fn desk_with_chair(b: &mut SceneBuilder, x: f64, y: f64, rng: &mut Rng, computer: bool) {
    let d = desk(rng);
    let (dx, dy) = (d.sx, d.sy);
    b.at(d, x, y, 0);
    if computer {
        let c = pick(rng, &BLACK);
        let monitor = Object::new(0.5, 0.2).part(
            [0.0, 0.0, 0.75],
            [0.5, 0.2, 1.15],
            obj("other_furniture"),
            c,
        );
        b.at(monitor, x + dx * 0.3, y + 0.05, 0);
    }
    b.at(chair(rng), x + dx * 0.35, y + dy + 0.05, 2);
}

fn chairs_around(b: &mut SceneBuilder, x: f64, y: f64, sx: f64, sy: f64, n: usize, rng: &mut Rng) {
    for i in 0..n {
        let side = i % 4;
        let slot = (i / 4) as f64;
        let along = |len: f64| (0.15 + slot * 0.7).min((len - 0.46).max(0.0));
        let (cx, cy, rot) = match side {
            0 => (x + along(sx), y - 0.5, 0),
            1 => (x + along(sx), y + sy + 0.04, 2),
            2 => (x - 0.5, y + along(sy), 3),
            _ => (x + sx + 0.04, y + along(sy), 1),
        };
        b.at(chair(rng), cx.max(0.0), cy.max(0.0), rot);
    }
}

fn furnish(name: &str, b: &mut SceneBuilder, rng: &mut Rng) {
    match name {
        "apartment" => {
            b.against_wall(bed(rng), rng);
            b.against_wall(sofa(rng), rng);
            let len = u(rng, 1.5, 2.5);
            b.against(counter(rng, len), 0, rng);
            if rng.random::<f64>() < 0.6 {
                b.against(refrigerator(rng), 0, rng);
            }
            let t = table(1.2, 0.8, 0.74, pick(rng, &WOOD));
            let (x, y) = (b.w * 0.5, b.d * 0.5);
            b.at(t, x, y, 0);
            chairs_around(b, x, y, 1.2, 0.8, count(rng, 2, 4), rng);
            for _ in 0..count(rng, 1, 2) {
                b.against_wall(cabinet(rng, true), rng);
            }
            b.against_wall(door(rng), rng);
            b.against_wall(window(rng), rng);
        }
        "bathroom" => {
            b.against(bathtub(rng), 2, rng);
            let len = b.w.min(1.6);
            b.against(shower_curtain(rng, len), 2, rng);
            b.against(toilet(rng), 0, rng);
            b.against(sink(rng), if rng.random::<bool>() { 1 } else { 3 }, rng);
            if rng.random::<f64>() < 0.5 {
                b.against_wall(cabinet(rng, false), rng);
            }
            b.against(door(rng), 0, rng);
        }
        "bedroom" => {
            for _ in 0..count(rng, 1, 2) {
                b.against(bed(rng), 0, rng);
            }
            for _ in 0..count(rng, 1, 2) {
                b.against(cabinet(rng, true), 2, rng);
            }
            if rng.random::<f64>() < 0.5 {
                b.against(desk(rng), 1, rng);
                b.free(chair(rng), rng);
            }
            b.against(window(rng), 3, rng);
            b.against(curtain(rng), 3, rng);
            for _ in 0..count(rng, 0, 2) {
                b.against_wall(picture(rng), rng);
            }
            b.against_wall(door(rng), rng);
        }
        "library" => {
            let rows = count(rng, 2, 3);
            for r in 0..rows {
                let y = 0.6 + r as f64 * (b.d - 2.5).max(0.5) / rows as f64;
                let mut x = 0.3;
                while x + 1.2 < b.w * 0.65 {
                    let s = bookshelf(rng);
                    let sx = s.sx;
                    b.at(s, x, y, 0);
                    x += sx;
                }
            }
            for _ in 0..count(rng, 2, 4) {
                b.against_wall(bookshelf(rng), rng);
            }
            let t = table(1.6, 0.9, 0.74, pick(rng, &WOOD));
            let (x, y) = (b.w * 0.7, b.d * 0.55);
            b.at(t, x.min(b.w - 1.7), y, 0);
            chairs_around(b, x.min(b.w - 1.7), y, 1.6, 0.9, count(rng, 2, 4), rng);
        }
        "classroom" => {
            let cols = count(rng, 3, 4);
            let rows = count(rng, 3, 4);
            for r in 0..rows {
                for c in 0..cols {
                    let x = 0.6 + c as f64 * (b.w - 1.8) / cols as f64;
                    let y = 1.8 + r as f64 * (b.d - 2.6) / rows as f64;
                    desk_with_chair(b, x, y, rng, false);
                }
            }
            let t = table(1.6, 0.8, 0.76, pick(rng, &WOOD));
            b.at(t, b.w * 0.4, 0.4, 0);
            for _ in 0..count(rng, 2, 3) {
                b.against(window(rng), 1, rng);
            }
            b.against(door(rng), 3, rng);
        }
        "closet" => {
            for _ in 0..count(rng, 1, 2) {
                b.against_wall(cabinet(rng, true), rng);
            }
            for _ in 0..count(rng, 1, 3) {
                let o = other(rng, [[0.3, 0.6], [0.3, 0.5], [0.2, 0.5]], &FABRIC);
                b.free(o, rng);
            }
            b.against(door(rng), 0, rng);
        }
        "computer_cluster" => {
            let cols = count(rng, 2, 3);
            let rows = count(rng, 2, 3);
            for r in 0..rows {
                for c in 0..cols {
                    let x = 0.4 + c as f64 * (b.w - 1.2) / cols as f64;
                    let y = 0.3 + r as f64 * (b.d - 1.0) / rows as f64;
                    desk_with_chair(b, x, y, rng, true);
                }
            }
            b.against_wall(door(rng), rng);
            if rng.random::<f64>() < 0.5 {
                b.against_wall(cabinet(rng, true), rng);
            }
        }
        "conference_room" => {
            let (sx, sy) = ((b.w - 2.0).clamp(2.0, 4.5), u(rng, 1.1, 1.4));
            let (x, y) = ((b.w - sx) / 2.0, (b.d - sy) / 2.0);
            let t = table(sx, sy, 0.74, pick(rng, &WOOD));
            b.at(t, x, y, 0);
            let per_side = ((sx - 0.3) / 0.7).floor() as usize;
            for i in 0..per_side {
                let cx = x + 0.15 + i as f64 * 0.7;
                b.at(chair(rng), cx, y - 0.5, 0);
                b.at(chair(rng), cx, y + sy + 0.04, 2);
            }
            b.against(picture(rng), 3, rng);
            let board_len = u(rng, 1.5, 2.2);
            let board = Object::new(board_len, 0.03).part(
                [0.0, 0.0, 0.9],
                [board_len, 0.03, 2.0],
                obj("picture"),
                [245.0, 245.0, 245.0],
            );
            b.against(board, 1, rng);
            b.against_wall(door(rng), rng);
        }
        "copy_room" => {
            for _ in 0..count(rng, 1, 2) {
                let o = other(rng, [[0.9, 1.2], [0.6, 0.7], [1.0, 1.2]], &METAL);
                b.against_wall(o, rng);
            }
            for _ in 0..count(rng, 1, 3) {
                b.against_wall({ let tall = rng.random::<bool>(); cabinet(rng, tall) }, rng);
            }
            if rng.random::<f64>() < 0.5 {
                let len = u(rng, 1.2, 2.0);
                b.against_wall(counter(rng, len), rng);
            }
            b.against_wall(door(rng), rng);
        }
        "dining_room" => {
            let s = u(rng, 1.0, 1.4);
            let (x, y) = ((b.w - s) / 2.0, (b.d - s) / 2.0);
            b.at(table(s, s, 0.75, pick(rng, &WOOD)), x, y, 0);
            chairs_around(b, x, y, s, s, count(rng, 4, 6), rng);
            if rng.random::<f64>() < 0.6 {
                b.against_wall(cabinet(rng, false), rng);
            }
            b.against_wall(picture(rng), rng);
            b.against_wall(window(rng), rng);
        }
        "game_room" => {
            for _ in 0..count(rng, 1, 2) {
                let felt = pick(rng, &[[30.0, 110.0, 60.0], [40.0, 70.0, 140.0]]);
                let pool = Object::new(2.5, 1.4)
                    .part([0.0, 0.0, 0.0], [2.5, 1.4, 0.8], obj("table"), felt);
                b.free(pool, rng);
            }
            b.against_wall(sofa(rng), rng);
            for _ in 0..2 {
                b.free(chair(rng), rng);
            }
            for _ in 0..count(rng, 1, 2) {
                let arcade = other(rng, [[0.7, 0.8], [0.7, 0.9], [1.7, 1.9]], &BLACK);
                b.against_wall(arcade, rng);
            }
        }
        "gym" => {
            for _ in 0..count(rng, 5, 9) {
                let machine = other(rng, [[0.8, 2.0], [0.6, 1.2], [1.2, 2.2]], &METAL);
                b.free(machine, rng);
            }
            for _ in 0..count(rng, 1, 3) {
                let bench = Object::new(1.2, 0.35)
                    .part([0.0, 0.0, 0.0], [1.2, 0.35, 0.45], obj("other_furniture"), [40.0, 40.0, 40.0]);
                b.free(bench, rng);
            }
            let mat = other(rng, [[2.0, 4.0], [2.0, 3.0], [0.03, 0.05]], &[[70.0, 90.0, 150.0]]);
            b.free(mat, rng);
        }
        "hallway" => {
            for _ in 0..count(rng, 2, 5) {
                let side = if rng.random::<bool>() { 0 } else { 2 };
                b.against(door(rng), side, rng);
            }
            for _ in 0..count(rng, 0, 2) {
                b.against_wall(picture(rng), rng);
            }
        }
        "kitchen" => {
            let len = (b.w - 0.8).max(1.2);
            b.against(counter(rng, len), 0, rng);
            let side_len = u(rng, 1.0, (b.d - 0.8).max(1.1));
            b.against(counter(rng, side_len), 3, rng);
            for _ in 0..count(rng, 2, 4) {
                b.against(wall_cabinet(rng), 0, rng);
            }
            b.against(refrigerator(rng), 1, rng);
            b.against(sink(rng), 0, rng);
            if rng.random::<f64>() < 0.5 {
                let t = table(0.9, 0.9, 0.75, pick(rng, &WOOD));
                b.free(t, rng);
                for _ in 0..count(rng, 0, 2) {
                    b.free(chair(rng), rng);
                }
            }
        }
        "laundry_room" => {
            for _ in 0..2 {
                let machine = Object::new(0.6, 0.6).part(
                    [0.0, 0.0, 0.0],
                    [0.6, 0.6, 0.85],
                    obj("other_furniture"),
                    pick(rng, &WHITE),
                );
                b.against(machine, 0, rng);
            }
            if rng.random::<f64>() < 0.6 {
                b.against(sink(rng), 2, rng);
            }
            for _ in 0..count(rng, 1, 2) {
                b.against(wall_cabinet(rng), 0, rng);
            }
            if rng.random::<f64>() < 0.5 {
                let len = u(rng, 1.0, 1.6);
                b.against(counter(rng, len), 2, rng);
            }
            b.against_wall(door(rng), rng);
        }
        "living_room" => {
            for _ in 0..count(rng, 1, 2) {
                b.against_wall(sofa(rng), rng);
            }
            let t = table(1.1, 0.6, 0.45, pick(rng, &WOOD));
            b.at(t, b.w * 0.45, b.d * 0.45, 0);
            for _ in 0..count(rng, 0, 2) {
                let arm = sofa_chair(rng);
                b.free(arm, rng);
            }
            for _ in 0..count(rng, 1, 2) {
                b.against_wall(picture(rng), rng);
            }
            b.against(window(rng), 2, rng);
            b.against(curtain(rng), 2, rng);
            if rng.random::<f64>() < 0.5 {
                let tv = other(rng, [[1.2, 1.8], [0.4, 0.5], [0.5, 0.6]], &WOOD);
                b.against(tv, 0, rng);
            }
        }
        "lobby" => {
            for _ in 0..count(rng, 2, 4) {
                b.free(sofa(rng), rng);
            }
            for _ in 0..count(rng, 2, 4) {
                b.free(chair(rng), rng);
            }
            for _ in 0..count(rng, 1, 2) {
                let t = table(0.9, 0.9, 0.45, pick(rng, &WOOD));
                b.free(t, rng);
            }
            let len = u(rng, 2.5, 4.0);
            b.against(counter(rng, len), 0, rng);
            for _ in 0..count(rng, 1, 2) {
                b.against(door(rng), 2, rng);
            }
        }
        "misc" => {
            for _ in 0..count(rng, 2, 5) {
                let o = match rng.random_range(0..7) {
                    0 => { let tall = rng.random::<bool>(); cabinet(rng, tall) },
                    1 => chair(rng),
                    2 => table(u(rng, 0.8, 1.6), u(rng, 0.6, 1.0), 0.74, pick(rng, &WOOD)),
                    3 => desk(rng),
                    4 => bookshelf(rng),
                    5 => sofa(rng),
                    _ => other(rng, [[0.3, 1.5], [0.3, 1.2], [0.3, 1.5]], &METAL),
                };
                if rng.random::<bool>() {
                    b.free(o, rng);
                } else {
                    b.against_wall(o, rng);
                }
            }
            if rng.random::<f64>() < 0.5 {
                b.against_wall(door(rng), rng);
            }
        }
        "office" => {
            for _ in 0..count(rng, 1, 3) {
                b.against_wall(desk(rng), rng);
                b.free(chair(rng), rng);
            }
            for _ in 0..count(rng, 0, 2) {
                b.against_wall(bookshelf(rng), rng);
            }
            for _ in 0..count(rng, 1, 2) {
                b.against_wall({ let tall = rng.random::<bool>(); cabinet(rng, tall) }, rng);
            }
            b.against_wall(window(rng), rng);
            b.against_wall(door(rng), rng);
        }
        "stairs" => {
            let steps = count(rng, 10, 16);
            let run = (b.d - 0.6) / steps as f64;
            let rise = u(rng, 0.16, 0.19);
            let c = pick(rng, &[[120.0, 120.0, 125.0], [150.0, 110.0, 70.0]]);
            for s in 0..steps {
                let y0 = 0.3 + s as f64 * run;
                let step = Object::new(b.w, run).part(
                    [0.0, 0.0, 0.0],
                    [b.w, run, rise * (s + 1) as f64],
                    obj("other_furniture"),
                    c,
                );
                b.at(step, 0.0, y0, 0);
            }
            let rail = Object::new(0.05, b.d - 0.6).part(
                [0.0, 0.0, 0.9],
                [0.05, b.d - 0.6, 0.95],
                obj("other_furniture"),
                pick(rng, &METAL),
            );
            b.at(rail, 0.1, 0.3, 0);
            b.against(door(rng), 0, rng);
        }
        _ => {
            // storage
            for _ in 0..count(rng, 2, 4) {
                let shelf_len = u(rng, 1.2, 2.0);
                let shelf = Object::new(shelf_len, 0.5).part(
                    [0.0, 0.0, 0.0],
                    [shelf_len, 0.5, 2.0],
                    obj("cabinet"),
                    pick(rng, &METAL),
                );
                b.against_wall(shelf, rng);
            }
            for _ in 0..count(rng, 4, 9) {
                let cardboard = [[165.0, 125.0, 80.0]];
                let boxes = other(rng, [[0.3, 0.8], [0.3, 0.6], [0.3, 0.7]], &cardboard);
                b.free(boxes, rng);
            }
        }
    }
}

fn sofa_chair(rng: &mut Rng) -> Object {
    let c = pick(rng, &FABRIC);
    let l = obj("sofa");
    Object::new(0.9, 0.85)
        .part([0.0, 0.0, 0.0], [0.9, 0.2, 0.85], l, c)
        .part([0.0, 0.2, 0.0], [0.9, 0.85, 0.45], l, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            scenes_per_class: 5,
            val_per_class: 1,
            test_per_class: 1,
            points_per_scene: [300, 400],
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_gives_byte_identical_dataset() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = small();
        let ma = generate_synthetic_dataset(&cfg, a.path()).unwrap();
        generate_synthetic_dataset(&cfg, b.path()).unwrap();
        assert_eq!(ma.splits.train.len() + ma.splits.val.len() + ma.splits.test.len(), 105);
        assert_eq!(ma.splits.val.len(), 21);
        for rel in ma.splits.train.iter().chain(&ma.splits.val).chain(&ma.splits.test) {
            let x = std::fs::read(a.path().join(rel)).unwrap();
            let y = std::fs::read(b.path().join(rel)).unwrap();
            assert!(x == y, "{} differs", rel.display());
        }
        let x = std::fs::read(a.path().join("manifest.toml")).unwrap();
        let y = std::fs::read(b.path().join("manifest.toml")).unwrap();
        assert_eq!(x, y);
        let loaded = DatasetManifest::load(&a.path().join("manifest.toml")).unwrap();
        assert_eq!(loaded.splits, ma.splits);
    }

    #[test]
    fn marker_objects_present() {
        let cfg = small();
        let t = Taxonomy::default();
        for (scene, marker) in [("bedroom", "bed"), ("bathroom", "bathtub")] {
            let class = t.scene_id(scene).unwrap();
            let m = t.object_id(marker).unwrap();
            for i in 0..10 {
                let s = generate_scene(&cfg, class, i).unwrap();
                let hits = s.cloud.labels().unwrap().iter().filter(|&&l| l == m).count();
                assert!(hits >= 1, "{scene} #{i} has no {marker}");
            }
        }
    }

    #[test]
    fn every_scene_has_at_least_two_object_classes() {
        let cfg = small();
        for class in 0..21 {
            for i in 0..3 {
                let s = generate_scene(&cfg, class, i).unwrap();
                let mut present = [false; 20];
                for &l in s.cloud.labels().unwrap() {
                    present[l as usize] = true;
                }
                assert!(present.iter().filter(|&&p| p).count() >= 2);
                let n = s.cloud.len();
                assert!((300..=400).contains(&n));
            }
        }
    }

    #[test]
    fn generated_points_survive_the_file_format() {
        let cfg = small();
        let t = Taxonomy::default();
        let s = generate_scene(&cfg, 4, 0).unwrap();
        let text = super::super::write_scene(&s, &t).unwrap();
        let back = super::super::parse_scene(&text, Path::new("x"), s.scene_id.clone(), &t).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small();
        cfg.val_per_class = 6;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.points_per_scene = [0, 10];
        assert!(cfg.validate().is_err());
    }
}
