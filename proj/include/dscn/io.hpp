#pragma once

#include "dscn/hsi.hpp"
#include "dscn/model.hpp"

#include <filesystem>
#include <span>

// Binary file formats. All integers are 32-bit little-endian unsigned, all
// reals IEEE-754 64-bit little-endian.
//
//   cube        "HSC1" W H B     then W*H*B reals, pixel-major, bands contiguous
//   endmembers  "EMM1" B K       then B*K reals, endmember-contiguous
//   abundances  "ABM1" W H K     then W*H*K reals, pixel-major
//   model       "DSCN" version, config echo, flags, named tensors (see model_io)
//
// Readers throw FormatError (with byte offset) on bad magic, truncation,
// trailing bytes or overflowing dims.
namespace dscn::io {

namespace fs = std::filesystem;

void write_cube(const fs::path& path, const HyperCube& cube);
HyperCube read_cube(const fs::path& path);

void write_endmembers(const fs::path& path, const EndmemberMatrix& e);
EndmemberMatrix read_endmembers(const fs::path& path);

void write_abundance(const fs::path& path, const AbundanceMap& map);
AbundanceMap read_abundance(const fs::path& path);

/// B rows x K columns of decimal numbers. A first row containing any
/// non-numeric cell is treated as a header. Negative values are rejected
/// unless `clamp_negatives` is set, in which case they become 0 with a warning.
EndmemberMatrix import_endmembers_csv(const fs::path& path, bool clamp_negatives = false);

/// 17 significant digits, so import(export(E)) reproduces E.
void export_endmembers_csv(const fs::path& path, const EndmemberMatrix& e);

/// Reads .csv through import_endmembers_csv, anything else as EMM1.
EndmemberMatrix read_endmembers_any(const fs::path& path);

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const fs::path& path, const ModelParams& p);
ModelParams load_model(const fs::path& path);

/// Binary P5 greyscale image; values in [0, 1] map linearly to [0, 255], clamped.
void write_pgm(const fs::path& path, std::size_t width, std::size_t height, std::span<const double> values);

}  // namespace dscn::io
