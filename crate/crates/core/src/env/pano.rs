use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use super::render::{synthetic_panorama, FloatImage};
use super::EnvError;
use crate::graph::PanoNode;

/// Supplies the equirectangular panorama for a node, if one exists.
pub trait PanoSource: Send + Sync {
    fn panorama(&self, node: &PanoNode) -> Result<Option<Arc<FloatImage>>, EnvError>;
}

/// No imagery: the environment emits view descriptors only.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoPanoramas;

impl PanoSource for NoPanoramas {
    fn panorama(&self, _node: &PanoNode) -> Result<Option<Arc<FloatImage>>, EnvError> {
        Ok(None)
    }
}

/// Bearing-encoding gradients generated from each node's `heading_ref`.
#[derive(Debug)]
pub struct SyntheticPanoramas {
    width: u32,
    cache: Mutex<HashMap<u64, Arc<FloatImage>>>,
}

impl SyntheticPanoramas {
    pub fn new(width: u32) -> Self {
        Self { width, cache: Mutex::new(HashMap::new()) }
    }
}

impl PanoSource for SyntheticPanoramas {
    fn panorama(&self, node: &PanoNode) -> Result<Option<Arc<FloatImage>>, EnvError> {
        let key = node.heading_ref.to_bits();
        let mut cache = self.cache.lock().expect("pano cache poisoned");
        let img = cache.entry(key).or_insert_with(|| Arc::new(synthetic_panorama(self.width, node.heading_ref)));
        Ok(Some(Arc::clone(img)))
    }
}

/// Directory of 2:1 images addressed by each node's `image_ref`.
/// Decoded panoramas are cached as RGB floats in `[0, 1]`.
#[derive(Debug)]
pub struct PanoStore {
    root: PathBuf,
    cache: Mutex<HashMap<String, Arc<FloatImage>>>,
}

impl PanoStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), cache: Mutex::new(HashMap::new()) }
    }

    fn load(&self, image_ref: &str) -> Result<FloatImage, EnvError> {
        let path = self.root.join(image_ref);
        let img = image::open(&path).map_err(|e| EnvError::Panorama(format!("{}: {e}", path.display())))?.to_rgb32f();
        let (w, h) = img.dimensions();
        Ok(FloatImage::from_raw(w, h, 3, img.into_raw()).expect("rgb buffer matches dimensions"))
    }
}

impl PanoSource for PanoStore {
    fn panorama(&self, node: &PanoNode) -> Result<Option<Arc<FloatImage>>, EnvError> {
        let Some(image_ref) = node.image_ref.as_deref() else {
            return Ok(None);
        };
        if let Some(img) = self.cache.lock().expect("pano cache poisoned").get(image_ref) {
            return Ok(Some(Arc::clone(img)));
        }
        let img = Arc::new(self.load(image_ref)?);
        self.cache.lock().expect("pano cache poisoned").insert(image_ref.to_string(), Arc::clone(&img));
        Ok(Some(img))
    }
}
