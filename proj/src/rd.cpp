#include "hssc/rd.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>

namespace hssc {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

EvalSummary evaluate(const std::vector<std::string>& names, const std::vector<Tensor<double>>& cubes,
                     const CodecFn& codec) {
  if (cubes.empty()) throw std::invalid_argument("evaluate: no cubes");
  if (names.size() != cubes.size()) throw std::invalid_argument("evaluate: names and cubes differ");
  EvalSummary s;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const Coded c = codec(cubes[i]);
    ImageMetrics m;
    m.name = names[i];
    m.bpp = bpp(c.bits, cubes[i].shape());
    const Psnr p = psnr(cubes[i], c.reconstruction);
    m.psnr_db = p.db;
    m.exact = p.exact;
    m.ssim = ssim(cubes[i], c.reconstruction);
    s.images.push_back(m);
  }
  const double n = static_cast<double>(s.images.size());
  for (const auto& m : s.images) {
    s.bpp += m.bpp / n;
    s.psnr_db += m.psnr_db / n;
    s.ssim += m.ssim / n;
  }
  return s;
}

CodecFn model_codec(Model<double>& model) {
  return [&model](const Tensor<double>& x) {
    const CompressResult c = compress(model, x);
    const BitstreamFile f = BitstreamFile::parse(c.bytes);
    return Coded{static_cast<std::uint64_t>(c.bytes.size()) * 8, decompress(model, f).reconstruction};
  };
}

void write_eval_csv(std::ostream& out, const EvalSummary& s) {
  out << "name,bpp,psnr_db,exact,ssim\n";
  for (const auto& m : s.images) {
    out << m.name << "," << fmt(m.bpp) << "," << fmt(m.psnr_db) << "," << (m.exact ? 1 : 0) << ","
        << fmt(m.ssim) << "\n";
  }
  out << "mean," << fmt(s.bpp) << "," << fmt(s.psnr_db) << ",," << fmt(s.ssim) << "\n";
}

std::vector<RdPoint> sort_rd(std::vector<RdPoint> points) {
  std::set<std::pair<std::string, double>> seen;
  for (const auto& p : points) {
    if (!seen.insert({p.variant, p.r_t}).second) {
      throw std::invalid_argument("rd: duplicate entry for variant " + p.variant + " r_t " + fmt(p.r_t));
    }
  }
  std::stable_sort(points.begin(), points.end(),
                   [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
  return points;
}

std::vector<std::size_t> non_monotone_segments(const std::vector<RdPoint>& sorted) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (std::size_t j = i; j-- > 0;) {
      if (sorted[j].variant != sorted[i].variant) continue;
      if (sorted[i].psnr_db < sorted[j].psnr_db && sorted[i].bpp > sorted[j].bpp) out.push_back(i);
      break;
    }
  }
  return out;
}

void write_rd_csv(std::ostream& out, const std::vector<RdPoint>& sorted) {
  out << "variant,r_t,bpp,psnr_db,ssim\n";
  for (const auto& p : sorted) {
    out << p.variant << "," << fmt(p.r_t) << "," << fmt(p.bpp) << "," << fmt(p.psnr_db) << ","
        << fmt(p.ssim) << "\n";
  }
}

}  // namespace hssc
