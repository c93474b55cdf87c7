//! File formats and path-level helpers.

pub mod formats;
pub mod image;
pub mod ply;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::Result;
use crate::masks::AttentionMask;
use crate::set::GaussianSet;
use crate::simplify::MergeSequence;

pub use formats::TokenFile;

pub fn load_ply(path: impl AsRef<Path>) -> Result<GaussianSet> {
    ply::read_ply(BufReader::new(File::open(path)?))
}

pub fn save_ply(set: &GaussianSet, path: impl AsRef<Path>) -> Result<()> {
    ply::write_ply(set, BufWriter::new(File::create(path)?))
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<MergeSequence> {
    formats::decode_sequence(&fs::read(path)?)
}

pub fn save_sequence(seq: &MergeSequence, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, formats::encode_sequence(seq)?)?)
}

pub fn load_tokens(path: impl AsRef<Path>) -> Result<TokenFile> {
    formats::decode_tokens(&fs::read(path)?)
}

pub fn save_tokens(file: &TokenFile, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, formats::encode_tokens(file))?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<AttentionMask> {
    formats::decode_mask(&fs::read(path)?)
}

pub fn save_mask(mask: &AttentionMask, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, formats::encode_mask(mask))?)
}
