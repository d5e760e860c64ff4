//! Attention-highlighted snippets and 2-D projections of learned vectors.

mod annotate;
mod pca;
mod render;

pub use annotate::{annotate, shade_levels, AttentionAnnotation, SHADE_LEVELS};
pub use pca::{pca_project, ProjectedPoint, Projection2D};
pub use render::{escape_html, parse_structured, render, render_claim, Format};
