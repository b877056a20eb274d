//! Seeded procedural renderer.
//!
//! Each observable factor type gets a hue from a hash of (seed, factor). An
//! entity is painted with the average colour of its observable factors; a
//! scalar factor's value sets that colour's saturation relative to the
//! factor's prior support. The background is a seed-keyed checker or stripe
//! pattern. Geometry is exact: a pixel belongs to an entity when its centre
//! lies inside the entity's footprint. Entities whose position is not
//! observable are not drawn; an unobservable radius or shape is drawn with a
//! fixed nominal value.

use std::collections::BTreeMap;

use super::ObservationSpec;
use crate::error::{Error, Result};
use crate::factors::builtin::*;
use crate::factors::{Entity, FactorId, FactorValue, Shape, SimState};
use crate::init::sample::splitmix64;
use crate::init::TaskTemplate;

/// Radius used when the radius factor is hidden.
const NOMINAL_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB, top row first.
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

/// Value ranges of scalar factors, used to normalize saturation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorSupports {
    ranges: BTreeMap<FactorId, (f64, f64)>,
}

impl FactorSupports {
    /// Union of every slot's prior support, per scalar factor.
    pub fn from_template(t: &TaskTemplate) -> FactorSupports {
        let mut ranges: BTreeMap<FactorId, (f64, f64)> = BTreeMap::new();
        for slot in &t.slots {
            for (f, prior) in &slot.priors {
                if prior.components.len() != 1 {
                    continue;
                }
                let (lo, hi) = prior.components[0].support();
                let r = ranges.entry(*f).or_insert((lo, hi));
                r.0 = r.0.min(lo);
                r.1 = r.1.max(hi);
            }
        }
        FactorSupports { ranges }
    }

    pub fn insert(&mut self, f: FactorId, lo: f64, hi: f64) {
        self.ranges.insert(f, (lo, hi));
    }

    /// `x` mapped into [0, 1] over the support, 0.5 for degenerate ranges.
    pub fn normalize(&self, f: FactorId, x: f64) -> f64 {
        match self.ranges.get(&f) {
            Some(&(lo, hi)) if hi > lo && lo.is_finite() && hi.is_finite() => {
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
            _ => 0.5,
        }
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

fn factor_hue(seed: u64, f: FactorId) -> f64 {
    unit(splitmix64(seed ^ splitmix64(u64::from(f.0) + 1)))
}

fn to_u8(c: [f64; 3]) -> [u8; 3] {
    c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
}

fn entity_colour(e: &Entity, spec: &ObservationSpec, supports: &FactorSupports) -> [u8; 3] {
    let mut acc = [0.0; 3];
    let mut n = 0.0;
    for (&f, v) in e.etype().basis().iter().zip(e.values()) {
        if !spec.is_observable(f) {
            continue;
        }
        let sat = match v {
            FactorValue::Scalar(x) => 0.25 + 0.75 * supports.normalize(f, *x),
            FactorValue::Bool(b) => {
                if *b {
                    1.0
                } else {
                    0.25
                }
            }
            FactorValue::Vec2(_) | FactorValue::Shape(_) => 0.6,
        };
        let c = hsv(factor_hue(spec.renderer_seed, f), sat, 0.9);
        for k in 0..3 {
            acc[k] += c[k];
        }
        n += 1.0;
    }
    if n == 0.0 {
        return [128, 128, 128];
    }
    to_u8(acc.map(|x| x / n))
}

fn background(seed: u64, res: u32) -> impl Fn(u32, u32) -> [u8; 3] {
    let h = splitmix64(seed ^ 0xB4C2_5EED_0000_0001);
    let hue = unit(h);
    let a = to_u8(hsv(hue, 0.35, 0.25));
    let b = to_u8(hsv(hue + 0.5, 0.35, 0.18));
    let period = 2 + (h >> 8) as u32 % (res / 4).max(2);
    let stripes = (h >> 40) & 1 == 1;
    move |x, y| {
        let on = if stripes {
            ((x + y) / period).is_multiple_of(2)
        } else {
            (x / period + y / period).is_multiple_of(2)
        };
        if on {
            a
        } else {
            b
        }
    }
}

struct Footprint {
    pos: [f64; 2],
    radius: f64,
    shape: Shape,
}

fn drawn_footprint(state: &SimState, e: &Entity, spec: &ObservationSpec) -> Option<Footprint> {
    if !e.is_thing() || !spec.slot_visible(state, e, POSITION) {
        return None;
    }
    let radius = if spec.is_observable(RADIUS) {
        e.scalar(RADIUS)?
    } else {
        NOMINAL_RADIUS
    };
    let shape = if spec.is_observable(SHAPE) {
        e.get(SHAPE).and_then(FactorValue::as_shape).unwrap_or_default()
    } else {
        Shape::Circle
    };
    Some(Footprint {
        pos: e.vec2(POSITION)?,
        radius,
        shape,
    })
}

fn covers(f: &Footprint, p: [f64; 2]) -> bool {
    let dx = p[0] - f.pos[0];
    let dy = p[1] - f.pos[1];
    match f.shape {
        Shape::Circle => dx * dx + dy * dy <= f.radius * f.radius,
        Shape::Square => dx.abs() <= f.radius && dy.abs() <= f.radius,
    }
}

/// World coordinates of the centre of pixel `(x, y)`; y points up.
pub fn pixel_centre(state: &SimState, res: u32, x: u32, y: u32) -> [f64; 2] {
    let a = &state.arena;
    [
        a.min[0] + (x as f64 + 0.5) / res as f64 * a.width(),
        a.max[1] - (y as f64 + 0.5) / res as f64 * a.height(),
    ]
}

/// Draw order: tiles, then other things, then objects; ties by id.
fn draw_order(state: &SimState) -> Vec<&Entity> {
    let mut es: Vec<&Entity> = state.entities.iter().collect();
    es.sort_by_key(|e| (if e.is_tile() { 0 } else if e.is_object() { 2 } else { 1 }, e.id));
    es
}

fn render_layers(state: &SimState, spec: &ObservationSpec, supports: &FactorSupports) -> (Image, Vec<bool>) {
    let res = spec.resolution;
    let bg = background(spec.renderer_seed, res);
    let drawn: Vec<(Footprint, [u8; 3])> = draw_order(state)
        .into_iter()
        .filter_map(|e| drawn_footprint(state, e, spec).map(|f| (f, entity_colour(e, spec, supports))))
        .collect();
    let mut rgb = Vec::with_capacity(3 * (res * res) as usize);
    let mut mask = Vec::with_capacity((res * res) as usize);
    for y in 0..res {
        for x in 0..res {
            let p = pixel_centre(state, res, x, y);
            let hit = drawn.iter().rev().find(|(f, _)| covers(f, p));
            let c = match hit {
                Some((_, c)) => *c,
                None => bg(x, y),
            };
            rgb.extend_from_slice(&c);
            mask.push(hit.is_some());
        }
    }
    (
        Image {
            width: res,
            height: res,
            rgb,
        },
        mask,
    )
}

/// Render `state` at `spec.resolution` with `spec.renderer_seed`.
pub fn render(state: &SimState, spec: &ObservationSpec, supports: &FactorSupports) -> Image {
    render_layers(state, spec, supports).0
}

/// Occupancy mask of drawn entities, row-major like [`Image::rgb`]. It does
/// not depend on the renderer seed.
pub fn silhouette(state: &SimState, spec: &ObservationSpec) -> Vec<bool> {
    let res = spec.resolution;
    let drawn: Vec<Footprint> = state
        .entities
        .iter()
        .filter_map(|e| drawn_footprint(state, e, spec))
        .collect();
    (0..res)
        .flat_map(|y| (0..res).map(move |x| (x, y)))
        .map(|(x, y)| {
            let p = pixel_centre(state, res, x, y);
            drawn.iter().any(|f| covers(f, p))
        })
        .collect()
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width, img.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Archive(format!("png: {e}")))?;
        w.write_image_data(&img.rgb)
            .map_err(|e| Error::Archive(format!("png: {e}")))?;
        w.finish().map_err(|e| Error::Archive(format!("png: {e}")))?;
    }
    Ok(buf)
}
