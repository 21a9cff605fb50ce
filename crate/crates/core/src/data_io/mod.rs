//! File formats at the edges of the pipeline: CSV for 1D signals, binary or
//! ASCII PGM for 2D fields, and SVG line plots.
//!
//! Everything inside the library works on normalized reals; quantization
//! happens only when writing a PGM.

mod csv;
mod pgm;
mod svg;

pub use csv::{format_csv_1d, parse_csv_1d, read_csv_1d, write_csv_1d};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm, GrayImage};
pub use svg::{render_svg_plot, write_svg_plot, PlotSpec, Series};
