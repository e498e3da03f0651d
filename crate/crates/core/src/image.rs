//! Small dense image containers used by frames, the renderer, and losses.
//!
//! All pixel data is stored row-major, `data[y * width + x]`. Depth images
//! use NaN for invalid pixels in memory (serialized as -1 in PFM files);
//! label images use [`IGNORE_LABEL`] for pixels without a usable class.

/// Label value for pixels that carry no class (background, predictor
/// failures, invalid renders). Excluded from every semantic loss and metric.
pub const IGNORE_LABEL: u16 = u16::MAX;

/// Single-channel f64 image (depth maps, adjoints). NaN marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self::new(width, height, f64::NAN)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y).is_finite()
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_finite()).count()
    }
}

/// Three-channel f64 image in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, fill: [f64; 3]) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.data[y * self.width + x] = v;
    }
}

/// Integer class-label image; `IGNORE_LABEL` marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize, fill: u16) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn ignored(width: usize, height: usize) -> Self {
        Self::new(width, height, IGNORE_LABEL)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }
}

/// Multi-channel image, pixel-major: `data[(y*width + x)*channels + c]`.
/// Used for rendered semantic logits and their adjoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ChannelImage {
    pub fn new(width: usize, height: usize, channels: usize, fill: f64) -> Self {
        Self { width, height, channels, data: vec![fill; width * height * channels] }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let base = (y * self.width + x) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    /// Argmax over channels; ties break toward the lowest index.
    pub fn argmax(&self, x: usize, y: usize) -> usize {
        let px = self.pixel(x, y);
        let mut best = 0;
        for (c, &v) in px.iter().enumerate() {
            if v > px[best] {
                best = c;
            }
        }
        best
    }
}
