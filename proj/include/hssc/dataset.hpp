#pragma once

#include <string>
#include <vector>

#include "hssc/tensor.hpp"

namespace hssc {

// HSSC-RAW: "HSSCRAW1" | u32 B, H, W | u8 dtype (0 = f32) | f32 values,
// band-sequential (band, row, column), little-endian.
void write_cube(const std::string& path, const Tensor<double>& cube);

struct CubeReadOptions {
  // Clamp values outside [0, 1] with a warning instead of failing.
  bool clamp = false;
};

// Throws FormatError on bad magic, unknown dtype, truncation ("payload
// underrun"), non-finite or out-of-range values.
Tensor<double> read_cube(const std::string& path, const CubeReadOptions& options = {});

struct Split {
  std::vector<Index> train, val, test;
};

// Random partition of 0..n-1 into floor(0.8 n) / floor(0.1 n) / rest.
Split split_indices(Index n, std::uint64_t seed);

struct SynthDataset {
  std::vector<Tensor<double>> cubes;
  Split split;

  std::vector<Tensor<double>> subset(const std::vector<Index>& indices) const;
};

// n >= 10 cubes of shape [B, H, W]: nonnegative mixtures of 4 smooth
// spectral endmembers (natural cubic splines through random knots) with
// abundances from softmaxed, Gaussian-blurred noise, rescaled to [0, 1].
SynthDataset synth_dataset(Index n, Index bands, Index height, Index width, std::uint64_t seed);

// Mean Pearson correlation between adjacent bands over all pixels.
double adjacent_band_correlation(const Tensor<double>& cube);

}  // namespace hssc
