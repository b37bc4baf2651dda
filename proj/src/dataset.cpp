#include "hssc/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include "hssc/serialize.hpp"

namespace hssc {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'S', 'C', 'R', 'A', 'W', '1'};
constexpr int kEndmembers = 4;
constexpr int kKnots = 4;

// Natural cubic spline through (i * step, y[i]) evaluated at 0..count-1.
std::vector<double> spline(const std::vector<double>& y, Index count) {
  const Index k = static_cast<Index>(y.size());
  if (count == 1) return {y[0]};
  const double step = static_cast<double>(count - 1) / static_cast<double>(k - 1);
  // Second derivatives from the tridiagonal system (Thomas algorithm).
  std::vector<double> m(k, 0.0), c(k, 0.0), d(k, 0.0);
  for (Index i = 1; i + 1 < k; ++i) {
    const double rhs = 6.0 * (y[i + 1] - 2 * y[i] + y[i - 1]) / (step * step);
    const double denom = 4.0 - c[i - 1];
    c[i] = 1.0 / denom;
    d[i] = (rhs - d[i - 1]) / denom;
  }
  for (Index i = k - 2; i >= 1; --i) m[i] = d[i] - c[i] * m[i + 1];
  std::vector<double> out(count);
  for (Index t = 0; t < count; ++t) {
    const double x = static_cast<double>(t) / step;
    const Index i = std::min<Index>(static_cast<Index>(x), k - 2);
    const double a = static_cast<double>(i + 1) - x, b = x - static_cast<double>(i);
    out[t] = a * y[i] + b * y[i + 1] +
             ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * step * step / 6.0;
  }
  return out;
}

Index reflect(Index i, Index n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

// Separable Gaussian blur with symmetric boundary.
Eigen::MatrixXd blur(const Eigen::MatrixXd& m, double sigma) {
  const Index r = static_cast<Index>(std::ceil(3 * sigma));
  Eigen::VectorXd g(2 * r + 1);
  for (Index i = -r; i <= r; ++i) g[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  g /= g.sum();
  Eigen::MatrixXd tmp = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  Eigen::MatrixXd out = tmp;
  for (Index y = 0; y < m.rows(); ++y)
    for (Index x = 0; x < m.cols(); ++x)
      for (Index i = -r; i <= r; ++i) tmp(y, x) += g[i + r] * m(y, reflect(x + i, m.cols()));
  for (Index y = 0; y < m.rows(); ++y)
    for (Index x = 0; x < m.cols(); ++x)
      for (Index i = -r; i <= r; ++i) out(y, x) += g[i + r] * tmp(reflect(y + i, m.rows()), x);
  return out;
}

Tensor<double> synth_cube(Index bands, Index height, Index width, CounterRng rng) {
  std::vector<std::vector<double>> spectra;
  for (int s = 0; s < kEndmembers; ++s) {
    std::vector<double> knots(kKnots);
    for (double& v : knots) v = rng.uniform(0.1, 1.0);
    spectra.push_back(spline(knots, bands));
  }
  const double sigma = static_cast<double>(std::max(height, width)) / 8.0;
  std::vector<Eigen::MatrixXd> fields;
  for (int s = 0; s < kEndmembers; ++s) {
    Eigen::MatrixXd noise(height, width);
    for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
    Eigen::MatrixXd f = blur(noise, sigma);
    const double sd = std::sqrt((f.array() - f.mean()).square().mean()) + 1e-12;
    fields.push_back(f * (3.0 / sd));
  }
  // Shared brightness (albedo and shading) scales all abundances of a pixel.
  Eigen::MatrixXd shade(height, width);
  for (Index i = 0; i < shade.size(); ++i) shade.data()[i] = rng.normal();
  shade = blur(shade, sigma);
  {
    const double sd = std::sqrt((shade.array() - shade.mean()).square().mean()) + 1e-12;
    shade = (0.1 + 0.9 / (1.0 + (-(shade.array() - shade.mean()) * (3.0 / sd)).exp())).matrix();
  }
  Tensor<double> cube(Shape{bands, height, width});
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      double mx = fields[0](y, x);
      for (const auto& f : fields) mx = std::max(mx, f(y, x));
      double a[kEndmembers], sum = 0.0;
      for (int s = 0; s < kEndmembers; ++s) sum += a[s] = std::exp(fields[s](y, x) - mx);
      for (Index b = 0; b < bands; ++b) {
        double v = 0.0;
        for (int s = 0; s < kEndmembers; ++s) v += a[s] / sum * spectra[s][b];
        cube(b, y, x) = shade(y, x) * v;
      }
    }
  }
  const double lo = cube.data().minCoeff(), hi = cube.data().maxCoeff();
  if (hi > lo) {
    cube.array() = (cube.array() - lo) / (hi - lo);
  } else {
    cube.data().setConstant(0.5);
  }
  return cube;
}

}  // namespace

void write_cube(const std::string& path, const Tensor<double>& cube) {
  if (cube.rank() != 3) throw ShapeError("write_cube: expected [B, H, W], got " + to_string(cube.shape()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  for (Index d : cube.shape()) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  write_le<std::uint8_t>(out, 0);
  const Eigen::VectorXf f = cube.data().cast<float>();
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out.flush()) throw IoError("write failed: " + path);
}

Tensor<double> read_cube(const std::string& path, const CubeReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  if (read_bytes(in, sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError(path + ": bad magic (not an HSSC-RAW cube)");
  }
  Shape shape;
  for (int i = 0; i < 3; ++i) {
    const auto d = read_le<std::uint32_t>(in);
    if (d == 0) throw FormatError(path + ": zero extent");
    shape.push_back(d);
  }
  const auto dtype = read_le<std::uint8_t>(in);
  if (dtype != 0) throw FormatError(path + ": unsupported dtype " + std::to_string(dtype));
  Eigen::VectorXf f(shape_size(shape));
  if (!in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)))) {
    throw FormatError(path + ": payload underrun");
  }
  if (!f.allFinite()) throw FormatError(path + ": non-finite value in payload");
  const bool in_range = f.minCoeff() >= 0.0f && f.maxCoeff() <= 1.0f;
  if (!in_range) {
    if (!options.clamp) throw FormatError(path + ": values outside [0, 1]");
    std::cerr << "warning: " << path << ": values outside [0, 1] clamped\n";
    f = f.cwiseMax(0.0f).cwiseMin(1.0f);
  }
  return Tensor<double>(shape, f.cast<double>().eval());
}

Split split_indices(Index n, std::uint64_t seed) {
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng rng = CounterRng(seed).fork("split");
  for (Index i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
  const Index n_train = n * 8 / 10, n_val = n / 10;
  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

std::vector<Tensor<double>> SynthDataset::subset(const std::vector<Index>& indices) const {
  std::vector<Tensor<double>> out;
  for (Index i : indices) out.push_back(cubes.at(static_cast<std::size_t>(i)));
  return out;
}

SynthDataset synth_dataset(Index n, Index bands, Index height, Index width, std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("synth: need at least 10 cubes, got " + std::to_string(n));
  if (bands < 1 || height < 1 || width < 1) throw std::invalid_argument("synth: extents must be >= 1");
  SynthDataset ds;
  const CounterRng root = CounterRng(seed).fork("synth");
  for (Index i = 0; i < n; ++i) {
    ds.cubes.push_back(synth_cube(bands, height, width, root.fork(static_cast<std::uint64_t>(i))));
  }
  ds.split = split_indices(n, seed);
  return ds;
}

double adjacent_band_correlation(const Tensor<double>& cube) {
  const Index bands = cube.dim(0), plane = cube.dim(1) * cube.dim(2);
  if (bands < 2) return 1.0;
  double total = 0.0;
  for (Index b = 0; b + 1 < bands; ++b) {
    const Eigen::ArrayXd u = cube.data().segment(b * plane, plane).array();
    const Eigen::ArrayXd v = cube.data().segment((b + 1) * plane, plane).array();
    const Eigen::ArrayXd du = u - u.mean(), dv = v - v.mean();
    const double denom = std::sqrt(du.square().sum() * dv.square().sum());
    total += denom > 0 ? (du * dv).sum() / denom : 1.0;
  }
  return total / static_cast<double>(bands - 1);
}

}  // namespace hssc
