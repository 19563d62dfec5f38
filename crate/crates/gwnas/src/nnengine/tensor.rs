//! Dense fp32 batch tensor in NHWC layout.

/// A batch of feature maps: `batch * height * width * channels` contiguous
/// fp32 values, sample-major, row-major within a sample, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(batch: usize, height: usize, width: usize, channels: usize) -> Self {
        Tensor4 {
            batch,
            height,
            width,
            channels,
            data: vec![0.0; batch * height * width * channels],
        }
    }

    pub fn from_data(
        batch: usize,
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Self {
        assert_eq!(data.len(), batch * height * width * channels);
        Tensor4 {
            batch,
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn index(&self, b: usize, y: usize, x: usize, c: usize) -> usize {
        ((b * self.height + y) * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.index(b, y, x, c)]
    }

    pub fn elements_per_sample(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Borrow of one sample's values.
    pub fn sample(&self, b: usize) -> &[f32] {
        let stride = self.elements_per_sample();
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
