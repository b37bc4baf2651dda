#include "hssc/metrics.hpp"

#include <cmath>

namespace hssc {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const Mat>;

// Separable valid correlation with g along both axes.
Mat filter_valid(const Mat& m, const Eigen::VectorXd& g) {
  const Index k = g.size(), h = m.rows() - k + 1, w = m.cols() - k + 1;
  Mat tmp = Mat::Zero(m.rows(), w);
  for (Index i = 0; i < k; ++i) tmp += g[i] * m.middleCols(i, w);
  Mat out = Mat::Zero(h, w);
  for (Index i = 0; i < k; ++i) out += g[i] * tmp.middleRows(i, h);
  return out;
}

// Adjoint of filter_valid back onto a rows x cols image.
Mat filter_adjoint(const Mat& m, const Eigen::VectorXd& g, Index rows, Index cols) {
  const Index k = g.size(), h = m.rows(), w = m.cols();
  Mat tmp = Mat::Zero(rows, w);
  for (Index i = 0; i < k; ++i) tmp.middleRows(i, h) += g[i] * m;
  Mat out = Mat::Zero(rows, cols);
  for (Index i = 0; i < k; ++i) out.middleCols(i, w) += g[i] * tmp;
  return out;
}

void check_pair(const Tensor<double>& x, const Tensor<double>& y, const SsimOptions& o) {
  require_same_shape(x.shape(), y.shape(), "ssim");
  if (x.rank() != 3) throw ShapeError("ssim: expected [B, H, W], got " + to_string(x.shape()));
  if (x.dim(1) < o.window || x.dim(2) < o.window) {
    throw ShapeError("ssim: image " + to_string(x.shape()) + " is smaller than the " +
                     std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  }
}

double ssim_impl(const Tensor<double>& x, const Tensor<double>& y, Tensor<double>* grad_y,
                 const SsimOptions& o) {
  check_pair(x, y, o);
  const Index bands = x.dim(0), rows = x.dim(1), cols = x.dim(2), plane = rows * cols;
  const Eigen::VectorXd g = gaussian_window(o.window, o.sigma);
  const double c1 = std::pow(o.k1 * o.range, 2), c2 = std::pow(o.k2 * o.range, 2);
  if (grad_y) *grad_y = Tensor<double>(x.shape());
  double total = 0.0;
  for (Index b = 0; b < bands; ++b) {
    const MatMap xb(x.data().data() + b * plane, rows, cols);
    const MatMap yb(y.data().data() + b * plane, rows, cols);
    const Mat mx = filter_valid(xb, g), my = filter_valid(yb, g);
    const Mat exx = filter_valid(xb.cwiseProduct(xb), g);
    const Mat eyy = filter_valid(yb.cwiseProduct(yb), g);
    const Mat exy = filter_valid(xb.cwiseProduct(yb), g);
    const auto mxa = mx.array(), mya = my.array();
    const Eigen::ArrayXXd vx = exx.array() - mxa * mxa, vy = eyy.array() - mya * mya;
    const Eigen::ArrayXXd cxy = exy.array() - mxa * mya;
    const Eigen::ArrayXXd n1 = 2 * mxa * mya + c1, n2 = 2 * cxy + c2;
    const Eigen::ArrayXXd d1 = mxa * mxa + mya * mya + c1, d2 = vx + vy + c2;
    const Eigen::ArrayXXd s = (n1 * n2) / (d1 * d2);
    const double count = static_cast<double>(s.size());
    total += s.sum() / count;
    if (!grad_y) continue;
    // Partials of s with respect to mu_y, var_y and cov_xy, then through
    // var_y = E[y^2] - mu_y^2 and cov_xy = E[xy] - mu_x mu_y.
    const Eigen::ArrayXXd den = d1 * d2;
    const Eigen::ArrayXXd a_mu = (2 * mxa * n2 - s * 2 * mya * d2) / den;
    const Eigen::ArrayXXd a_var = -s * d1 / den;
    const Eigen::ArrayXXd a_cov = 2 * n1 / den;
    const double scale = 1.0 / (count * static_cast<double>(bands));
    const Mat b_mu = ((a_mu - 2 * mya * a_var - mxa * a_cov) * scale).matrix();
    const Mat b_var = (a_var * scale).matrix(), b_cov = (a_cov * scale).matrix();
    Mat grad = filter_adjoint(b_mu, g, rows, cols);
    grad.array() += 2 * yb.array() * filter_adjoint(b_var, g, rows, cols).array();
    grad.array() += xb.array() * filter_adjoint(b_cov, g, rows, cols).array();
    Eigen::Map<Mat>(grad_y->data().data() + b * plane, rows, cols) = grad;
  }
  return total / static_cast<double>(bands);
}

}  // namespace

double mse(const Tensor<double>& a, const Tensor<double>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  if (a.empty()) throw ShapeError("mse: empty tensors");
  return (a.data() - b.data()).squaredNorm() / static_cast<double>(a.size());
}

Psnr psnr(const Tensor<double>& a, const Tensor<double>& b) {
  const double m = mse(a, b);
  if (m == 0.0) return {kPsnrCap, true};
  return {std::min(kPsnrCap, -10.0 * std::log10(m)), false};
}

Eigen::VectorXd gaussian_window(Index size, double sigma) {
  Eigen::VectorXd g(size);
  const double center = static_cast<double>(size - 1) / 2.0;
  for (Index i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
  }
  return g / g.sum();
}

double ssim(const Tensor<double>& x, const Tensor<double>& y, const SsimOptions& options) {
  return ssim_impl(x, y, nullptr, options);
}

double ssim_with_grad(const Tensor<double>& x, const Tensor<double>& y, Tensor<double>& grad_y,
                      const SsimOptions& options) {
  return ssim_impl(x, y, &grad_y, options);
}

}  // namespace hssc
