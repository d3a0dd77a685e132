//! Flat parameter vectors with a layout map back to layers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub layer: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Whether weight decay applies to this block.
    pub decay: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub segments: Vec<Segment>,
}

impl ParamLayout {
    pub fn push(&mut self, name: impl Into<String>, layer: usize, rows: usize, cols: usize, decay: bool) {
        let offset = self.len();
        self.segments.push(Segment {
            name: name.into(),
            layer,
            offset,
            rows,
            cols,
            decay,
        });
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Layer owning flat index `i`.
    pub fn layer_of(&self, i: usize) -> Option<usize> {
        self.segments.iter().find(|s| s.range().contains(&i)).map(|s| s.layer)
    }

    pub fn decay_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for s in &self.segments {
            for v in &mut m[s.range()] {
                *v = s.decay;
            }
        }
        m
    }
}

/// Parameters of either network, flattened in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.values).sqrt()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.range()])
    }
}
