use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_circle_mut, draw_filled_rect_mut};
use imageproc::rect::Rect;

use crate::inference::sidecar::SceneSidecar;
use crate::model::BoundingBox;

const BACKGROUND: Rgb<u8> = Rgb([96, 104, 96]);
const PLATE: Rgb<u8> = Rgb([245, 245, 245]);
const INK: Rgb<u8> = Rgb([16, 16, 16]);
const TIRE: Rgb<u8> = Rgb([24, 24, 24]);
const DISK: Rgb<u8> = Rgb([170, 170, 176]);
const STROKE: u32 = 5;

fn fill(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, color: Rgb<u8>) {
    if w > 0 && h > 0 {
        draw_filled_rect_mut(img, Rect::at(x as i32, y as i32).of_size(w, h), color);
    }
}

fn fill_box(img: &mut RgbImage, b: &BoundingBox, color: Rgb<u8>) {
    let (x0, y0) = (b.x_min.round() as u32, b.y_min.round() as u32);
    let (x1, y1) = (b.x_max.round() as u32, b.y_max.round() as u32);
    fill(img, x0, y0, x1 - x0, y1 - y0, color);
}

/// Seven-segment digit filling the whole `w` x `h` cell.
///
/// Each glyph is one connected shape touching all four cell edges, so its
/// pixel bounding box is exactly the cell. The one gets a flag and a base.
fn draw_digit(img: &mut RgbImage, digit: u8, x: u32, y: u32, w: u32, h: u32) {
    let t = STROKE;
    let mid = h / 2 - t / 2;
    let segments: &[u8] = match digit {
        0 => b"abcdef",
        1 => b"abcd",
        2 => b"abged",
        3 => b"abgcd",
        4 => b"fgbc",
        5 => b"afgcd",
        6 => b"afgedc",
        7 => b"abc",
        8 => b"abcdefg",
        _ => b"abcdfg",
    };
    for s in segments {
        let (sx, sy, sw, sh) = match s {
            b'a' => (0, 0, w, t),
            b'b' => (w - t, 0, t, mid + t),
            b'c' => (w - t, mid, t, h - mid),
            b'd' => (0, h - t, w, t),
            b'e' => (0, mid, t, h - mid),
            b'f' => (0, 0, t, mid + t),
            _ => (0, mid, w, t),
        };
        fill(img, x + sx, y + sy, sw, sh, INK);
    }
}

/// Flat-color rendering of a scene: car rectangles in team colors, white
/// number plates with dark glyphs, brand marks, and wheels as a dark tire
/// around a light disk.
pub fn render_scene(scene: &SceneSidecar) -> RgbImage {
    let mut img = RgbImage::from_pixel(scene.width_px, scene.height_px, BACKGROUND);
    for car in &scene.cars {
        fill_box(&mut img, &car.car_box, Rgb(car.color));
        for w in &car.wheels {
            let c = (w.center.x.round() as i32, w.center.y.round() as i32);
            draw_filled_circle_mut(&mut img, c, w.tire_radius.round() as i32, TIRE);
            draw_filled_circle_mut(&mut img, c, w.disk_radius.round() as i32, DISK);
        }
        if let Some(mark) = &car.manufacturer_mark {
            let [r, g, b] = car.color;
            fill_box(&mut img, mark, Rgb([255 - r, 255 - g, 255 - b]));
        }
        if let Some(plate) = &car.number_region {
            fill_box(&mut img, plate, PLATE);
            for g in &car.glyphs {
                let b = &g.bbox;
                draw_digit(
                    &mut img,
                    g.digit,
                    b.x_min as u32,
                    b.y_min as u32,
                    b.width() as u32,
                    b.height() as u32,
                );
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::GrayImage;

    fn glyph_bounds(digit: u8) -> (u32, u32, u32, u32, usize) {
        let mut img = RgbImage::from_pixel(40, 60, PLATE);
        draw_digit(&mut img, digit, 5, 7, 26, 44);
        let gray: GrayImage = image::DynamicImage::ImageRgb8(img).to_luma8();
        let ink: Vec<(u32, u32)> = gray
            .enumerate_pixels()
            .filter(|(_, _, p)| p.0[0] < 100)
            .map(|(x, y, _)| (x, y))
            .collect();
        let x0 = ink.iter().map(|p| p.0).min().unwrap();
        let x1 = ink.iter().map(|p| p.0).max().unwrap() + 1;
        let y0 = ink.iter().map(|p| p.1).min().unwrap();
        let y1 = ink.iter().map(|p| p.1).max().unwrap() + 1;
        let components = imageproc::region_labelling::connected_components(
            &image::ImageBuffer::from_fn(40, 60, |x, y| image::Luma([u8::from(gray.get_pixel(x, y).0[0] < 100)])),
            imageproc::region_labelling::Connectivity::Eight,
            image::Luma([0u8]),
        );
        let labels: std::collections::BTreeSet<u32> = components.pixels().map(|p| p.0[0]).filter(|&l| l > 0).collect();
        (x0, y0, x1, y1, labels.len())
    }

    #[test]
    fn every_glyph_fills_its_cell_in_one_piece() {
        for d in 0..10 {
            assert_eq!(glyph_bounds(d), (5, 7, 31, 51, 1), "digit {d}");
        }
    }
}
