//! Dataset model, confounded-data generators, persistence and label masking.

mod gaussians;
mod glyphs;
mod io;
mod mask;

pub use gaussians::{generate_two_factor_gaussians, TwoFactorGaussians};
pub use glyphs::{generate_rotated_glyphs, render_glyph, GlyphMode, RotatedGlyphs, GLYPH_NAMES};
pub use io::{load_bundle, save_bundle};
pub use mask::mask_confound_labels;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfoundKind {
    Discrete,
    Continuous,
}

/// Per-sample confound values.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfoundValues {
    /// Class indices in `[0, categories)`.
    Discrete { values: Vec<u32>, categories: usize },
    /// Scalars in `[0, 1]`.
    Continuous(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfoundLabels {
    pub values: ConfoundValues,
    /// `true` marks an observed label. `None` means fully observed.
    pub mask: Option<Vec<bool>>,
}

impl ConfoundLabels {
    pub fn discrete(values: Vec<u32>, categories: usize) -> Self {
        ConfoundLabels {
            values: ConfoundValues::Discrete { values, categories },
            mask: None,
        }
    }

    pub fn continuous(values: Vec<f32>) -> Self {
        ConfoundLabels {
            values: ConfoundValues::Continuous(values),
            mask: None,
        }
    }

    pub fn kind(&self) -> ConfoundKind {
        match self.values {
            ConfoundValues::Discrete { .. } => ConfoundKind::Discrete,
            ConfoundValues::Continuous(_) => ConfoundKind::Continuous,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ConfoundValues::Discrete { values, .. } => values.len(),
            ConfoundValues::Continuous(values) => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of categories for a discrete confound.
    pub fn categories(&self) -> Option<usize> {
        match self.values {
            ConfoundValues::Discrete { categories, .. } => Some(categories),
            ConfoundValues::Continuous(_) => None,
        }
    }

    pub fn discrete_values(&self) -> Option<&[u32]> {
        match &self.values {
            ConfoundValues::Discrete { values, .. } => Some(values),
            ConfoundValues::Continuous(_) => None,
        }
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.as_ref().is_none_or(|m| m.iter().all(|&b| b))
    }

    /// Width of the decoder conditioning vector for this confound.
    pub fn conditioning_width(&self) -> usize {
        match self.values {
            ConfoundValues::Discrete { categories, .. } => categories,
            ConfoundValues::Continuous(_) => 1,
        }
    }

    /// Writes the conditioning vector of sample `i` into `out`: one-hot for
    /// a discrete confound, the scalar itself for a continuous one.
    pub fn write_conditioning(&self, i: usize, out: &mut [f32]) {
        out.fill(0.0);
        match &self.values {
            ConfoundValues::Discrete { values, .. } => out[values[i] as usize] = 1.0,
            ConfoundValues::Continuous(values) => out[0] = values[i],
        }
    }

    /// One-hot `N x G` matrix of a discrete confound.
    pub fn one_hot(&self) -> Option<Array2<f64>> {
        let (values, categories) = match &self.values {
            ConfoundValues::Discrete { values, categories } => (values, *categories),
            ConfoundValues::Continuous(_) => return None,
        };
        let mut c = Array2::zeros((values.len(), categories));
        for (i, &v) in values.iter().enumerate() {
            c[[i, v as usize]] = 1.0;
        }
        Some(c)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::invalid(format!(
                "confound has {} entries, expected {n}",
                self.len()
            )));
        }
        match &self.values {
            ConfoundValues::Discrete { values, categories } => {
                if *categories < 2 && values.iter().any(|&v| v != 0) {
                    return Err(Error::invalid(
                        "discrete confound with fewer than 2 categories",
                    ));
                }
                if let Some(v) = values.iter().find(|&&v| v as usize >= *categories) {
                    return Err(Error::invalid(format!(
                        "confound value {v} outside [0, {categories})"
                    )));
                }
            }
            ConfoundValues::Continuous(values) => {
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::invalid("continuous confound outside [0, 1]"));
                }
            }
        }
        if let Some(mask) = &self.mask {
            if mask.len() != n {
                return Err(Error::invalid("confound mask length mismatch"));
            }
            if !mask.iter().any(|&b| b) {
                return Err(Error::invalid("confound mask has no observed entries"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n: usize,
    pub d_input: usize,
    pub k_clusters: usize,
    pub confound_kind: ConfoundKind,
    pub g_categories: Option<usize>,
}

/// A feature matrix with interest labels and confound labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub x: Array2<f32>,
    /// Ground-truth interest labels, used for evaluation only.
    pub y: Option<Vec<u32>>,
    pub confound: ConfoundLabels,
    pub meta: BundleMeta,
}

impl DatasetBundle {
    /// Builds a bundle and checks every structural invariant.
    pub fn new(
        x: Array2<f32>,
        y: Option<Vec<u32>>,
        confound: ConfoundLabels,
        k_clusters: usize,
    ) -> Result<Self> {
        let (n, d_input) = x.dim();
        let meta = BundleMeta {
            n,
            d_input,
            k_clusters,
            confound_kind: confound.kind(),
            g_categories: confound.categories(),
        };
        let bundle = DatasetBundle {
            x,
            y,
            confound,
            meta,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.x.row(i)
    }

    /// True when every feature lies in `[0, 1]` (image-like data).
    pub fn is_unit_range(&self) -> bool {
        self.x.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.x.dim();
        if n != self.meta.n || d != self.meta.d_input {
            return Err(Error::invalid("meta shape disagrees with feature matrix"));
        }
        if d == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if self.meta.k_clusters == 0 || n < self.meta.k_clusters {
            return Err(Error::invalid(format!(
                "need N >= K >= 1, got N={n}, K={}",
                self.meta.k_clusters
            )));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature matrix contains non-finite values"));
        }
        if let Some(y) = &self.y {
            if y.len() != n {
                return Err(Error::invalid("label vector length mismatch"));
            }
            if y.iter().any(|&v| v as usize >= self.meta.k_clusters) {
                return Err(Error::invalid("interest label outside [0, K)"));
            }
        }
        if self.meta.confound_kind != self.confound.kind()
            || self.meta.g_categories != self.confound.categories()
        {
            return Err(Error::invalid(
                "meta confound description disagrees with labels",
            ));
        }
        self.confound.validate(n)
    }
}
