//! File formats: float maps (PFM), color images (PPM), label maps (16-bit
//! PGM), seed lists (CSV) and the pipeline configuration (key = value).

mod config;
mod header;
mod pfm;
mod pnm;
mod seeds;

pub use config::{
    format_config, parse_config, read_config, write_config, PipelineConfig, CONFIG_KEYS,
};
pub use pfm::{
    decode_float_map, encode_float_map, nodata_sidecar, read_float_map, write_float_map,
};
pub use pnm::{
    decode_label_map, decode_ppm, encode_label_map, encode_ppm, read_label_map, read_ppm,
    write_label_map, write_ppm, LabelMap,
};
pub use seeds::{format_seeds, parse_seeds, read_seeds, write_seeds};
