use image::GrayImage;

use super::{ImageRegion, InferenceError};

/// Decodes the region's photo and returns the region as 8-bit gray.
pub fn load_region_gray(region: &ImageRegion) -> Result<GrayImage, InferenceError> {
    let img = image::open(&region.photo.uri).map_err(|e| InferenceError::UnreadableImage {
        uri: region.photo.uri.clone(),
        reason: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let x0 = (region.rect.x_min.floor().max(0.0) as u32).min(w);
    let y0 = (region.rect.y_min.floor().max(0.0) as u32).min(h);
    let x1 = (region.rect.x_max.ceil().max(0.0) as u32).min(w);
    let y1 = (region.rect.y_max.ceil().max(0.0) as u32).min(h);
    Ok(image::imageops::crop_imm(&gray, x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0)).to_image())
}

/// Pixel size of a photo: read from the image header, or from its scene
/// sidecar when the image itself is absent.
pub fn photo_dimensions(uri: &str) -> Result<(u32, u32), InferenceError> {
    match image::image_dimensions(uri) {
        Ok(d) => Ok(d),
        Err(e) => super::sidecar::SceneSidecar::load(&super::sidecar::sidecar_path(uri))
            .map(|s| (s.width_px, s.height_px))
            .map_err(|_| InferenceError::UnreadableImage {
                uri: uri.into(),
                reason: e.to_string(),
            }),
    }
}
