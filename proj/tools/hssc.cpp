// hssc: synthesize data, train, compress, decompress and evaluate.
//
// Exit codes: 0 ok, 1 I/O failure, 2 usage, 3 format error, 4 numeric failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hssc/codec.hpp"
#include "hssc/dataset.hpp"
#include "hssc/rd.hpp"
#include "hssc/train.hpp"

namespace fs = std::filesystem;
using namespace hssc;

namespace {

struct Manifest {
  std::vector<std::string> names;
  std::vector<std::string> splits;
  std::vector<std::string> paths;

  std::vector<std::size_t> select(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i) {
      if (splits[i] == split) out.push_back(i);
    }
    return out;
  }
};

// One "<split> <file>" line per cube; file paths are relative to the
// manifest's directory.
Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path dir = fs::path(path).parent_path();
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string split, file;
    if (!(is >> split >> file) || (split != "train" && split != "val" && split != "test")) {
      throw FormatError(path + ": bad manifest line '" + line + "'");
    }
    m.splits.push_back(split);
    m.names.push_back(file);
    m.paths.push_back((dir / file).string());
  }
  return m;
}

std::vector<Tensor<double>> load_cubes(const Manifest& m, const std::vector<std::size_t>& which,
                                       bool clamp) {
  std::vector<Tensor<double>> cubes;
  for (std::size_t i : which) cubes.push_back(read_cube(m.paths[i], {clamp}));
  return cubes;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Turns "key=value" lines of --config files into "--key value" arguments
// placed right after the subcommand, so explicit flags (which come later
// and take precedence) win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] != "--config") continue;
    const std::string path = args[i + 1];
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::vector<std::string> injected;
    std::string line;
    while (std::getline(in, line)) {
      const auto start = line.find_first_not_of(" \t");
      if (start == std::string::npos || line[start] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("config", path + ": expected key=value, got '" + line + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      std::replace(key.begin(), key.end(), '_', '-');
      if (value == "true") {
        injected.push_back("--" + key);
      } else if (value != "false") {
        injected.push_back("--" + key);
        injected.push_back(value);
      }
    }
    const auto at = args.empty() ? args.end() : args.begin() + 1;
    args.insert(at, injected.begin(), injected.end());
    break;
  }
  return args;
}

struct SynthArgs {
  Index n = 100, bands = 8, size = 32, height = 0, width = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int cmd_synth(const SynthArgs& a) {
  const Index h = a.height > 0 ? a.height : a.size, w = a.width > 0 ? a.width : a.size;
  const SynthDataset ds = synth_dataset(a.n, a.bands, h, w, a.seed);
  fs::create_directories(a.out_dir);
  std::vector<std::string> split(static_cast<std::size_t>(a.n));
  for (Index i : ds.split.train) split[static_cast<std::size_t>(i)] = "train";
  for (Index i : ds.split.val) split[static_cast<std::size_t>(i)] = "val";
  for (Index i : ds.split.test) split[static_cast<std::size_t>(i)] = "test";
  std::ofstream manifest(fs::path(a.out_dir) / "manifest.txt");
  if (!manifest) throw IoError("cannot write manifest in " + a.out_dir);
  manifest << "# split file\n";
  for (Index i = 0; i < a.n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "cube_%04lld.raw", static_cast<long long>(i));
    write_cube((fs::path(a.out_dir) / name).string(), ds.cubes[static_cast<std::size_t>(i)]);
    manifest << split[static_cast<std::size_t>(i)] << " " << name << "\n";
  }
  std::cout << "wrote " << a.n << " cubes (" << ds.split.train.size() << " train, "
            << ds.split.val.size() << " val, " << ds.split.test.size() << " test) to " << a.out_dir
            << "\n";
  return 0;
}

struct TrainArgs {
  std::string variant = "opt", se_placement, conv3d_placement, entropy_model = "factorized";
  double rt = 0.2, width_scale = 0.25;
  std::optional<double> lambda_a;
  double lambda_b = 1.0 / 64.0, beta = 0.15, l1_se = 1e-5, lr = 1e-4, lr_d = 1e-4;
  Index latent_channels = 0, se_reduction = 2, batch = 8, steps_pretrain = 200, steps_gan = 200;
  Index checkpoint_every = 0;
  bool band_by_band = false, resume = false, clamp = false;
  std::uint64_t seed = 0;
  std::string data, out, log;
};

int cmd_train(const TrainArgs& a) {
  const Manifest m = read_manifest(a.data);
  const auto train_set = load_cubes(m, m.select("train"), a.clamp);
  if (train_set.empty()) throw std::invalid_argument("train: manifest has no train cubes");

  TrainOptions o;
  o.r_t = a.rt;
  o.batch = a.batch;
  o.steps_pretrain = a.steps_pretrain;
  o.steps_gan = a.steps_gan;
  o.lr = a.lr;
  o.lr_d = a.lr_d;
  o.seed = a.seed;
  o.weights.beta = a.beta;
  o.weights.lambda_b = a.lambda_b;
  o.weights.l1_se = a.l1_se;
  if (a.lambda_a) o.weights.lambda_a = {{a.rt, *a.lambda_a}};
  o.weights.validate();
  o.weights.lambda_a_for(a.rt);

  Model<double> model;
  std::optional<std::string> state;
  if (a.resume) {
    const LoadedCheckpoint ck = read_checkpoint(a.out, model);
    if (!ck.appendix) throw FormatError(a.out + ": checkpoint has no training state to resume");
    state = ck.appendix;
  } else {
    ModelConfig c;
    c.variant = parse_variant(a.variant);
    c.bands = train_set.front().dim(0);
    c.width_scale = a.width_scale;
    c.latent_channels = a.latent_channels;
    if (!a.se_placement.empty()) c.se_placement = parse_se_placement(a.se_placement);
    if (!a.conv3d_placement.empty()) c.conv3d_placement = parse_conv3d_placement(a.conv3d_placement);
    c.se_reduction = a.se_reduction;
    c.band_by_band = a.band_by_band;
    c.entropy_model = parse_entropy_model(a.entropy_model);
    c.seed = a.seed;
    c.validate();
    model = Model<double>(c);
  }
  Trainer trainer(model, train_set, o);
  if (state) trainer.load_state(*state);

  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  const std::string log_path = a.log.empty() ? a.out + ".metrics.csv" : a.log;
  std::ofstream log(log_path, a.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path);
  if (!a.resume) log << metrics_header() << "\n";
  std::cout << "lambda_a=" << fmt(o.weights.lambda_a_for(a.rt)) << " lambda_b=" << fmt(o.weights.lambda_b)
            << " r_t=" << a.rt << "\n";

  LoopOptions loop;
  loop.checkpoint_path = a.out;
  loop.checkpoint_every = a.checkpoint_every;
  loop.log = &log;
  try {
    const auto records = run_training(trainer, model, loop);
    if (!records.empty()) {
      const auto& r = records.back();
      std::cout << "step " << r.step << " rate_bpp=" << fmt(r.rate) << " distortion=" << fmt(r.distortion)
                << " lambda=" << fmt(r.lambda) << "\n";
    }
  } catch (const NumericError& e) {
    std::cerr << "training diverged at step " << trainer.steps_done() + 1 << ": " << e.what()
              << "; last good state saved to " << a.out << "\n";
    throw;
  }
  std::cout << "checkpoint " << a.out << " digest " << to_hex(model_digest(model)) << "\n";
  return 0;
}

int cmd_compress(const std::string& ckpt, const std::string& in, const std::string& out, double offset,
                 bool clamp) {
  Model<double> model;
  read_checkpoint(ckpt, model);
  const Tensor<double> x = read_cube(in, {clamp});
  const CompressResult r = compress(model, x, offset);
  write_file(out, r.bytes);
  std::cout << "bits=" << r.bytes.size() * 8 << " bpp=" << fmt(r.bpp) << " psnr_db=" << fmt(r.psnr.db)
            << " ssim=" << fmt(r.ssim) << " saturated=" << r.saturated << "\n";
  return 0;
}

int cmd_decompress(const std::string& ckpt, const std::string& in, const std::string& out) {
  Model<double> model;
  read_checkpoint(ckpt, model);
  const auto bytes = read_file(in);
  const DecompressResult r = decompress(model, BitstreamFile::parse(bytes));
  write_cube(out, r.reconstruction);
  std::cout << "wrote " << out << " " << to_string(r.reconstruction.shape()) << "\n";
  return 0;
}

std::vector<std::string> names_of(const Manifest& m, const std::vector<std::size_t>& which) {
  std::vector<std::string> out;
  for (std::size_t i : which) out.push_back(m.names[i]);
  return out;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& split,
             const std::string& out_csv, bool clamp) {
  const Manifest m = read_manifest(data);
  const auto which = m.select(split);
  if (which.empty()) throw std::invalid_argument("eval: no '" + split + "' cubes in the manifest");
  Model<double> model;
  read_checkpoint(ckpt, model);
  const EvalSummary s = evaluate(names_of(m, which), load_cubes(m, which, clamp), model_codec(model));
  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot write " + out_csv);
  write_eval_csv(out, s);
  std::cout << "images=" << s.images.size() << " bpp=" << fmt(s.bpp) << " psnr_db=" << fmt(s.psnr_db)
            << " ssim=" << fmt(s.ssim) << "\n";
  return 0;
}

int cmd_rd(const std::string& dir, const std::string& data, const std::string& split,
           const std::string& out_csv, bool clamp) {
  const Manifest m = read_manifest(data);
  const auto which = m.select(split);
  if (which.empty()) throw std::invalid_argument("rd: no '" + split + "' cubes in the manifest");
  const auto cubes = load_cubes(m, which, clamp);
  std::vector<std::string> ckpts;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ckpt") ckpts.push_back(e.path().string());
  }
  std::sort(ckpts.begin(), ckpts.end());
  if (ckpts.empty()) throw std::invalid_argument("rd: no .ckpt files in " + dir);
  std::vector<RdPoint> points;
  for (const auto& path : ckpts) {
    Model<double> model;
    const LoadedCheckpoint ck = read_checkpoint(path, model);
    if (!ck.appendix) throw FormatError(path + ": no training state, target rate unknown");
    const EvalSummary s = evaluate(names_of(m, which), cubes, model_codec(model));
    points.push_back({to_string(ck.config.variant), Trainer::target_rate_of(*ck.appendix), s.bpp,
                      s.psnr_db, s.ssim});
  }
  const auto sorted = sort_rd(points);
  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot write " + out_csv);
  write_rd_csv(out, sorted);
  for (std::size_t i : non_monotone_segments(sorted)) {
    std::cout << "non-monotone: " << sorted[i].variant << " r_t=" << fmt(sorted[i].r_t)
              << " psnr drops at bpp " << fmt(sorted[i].bpp) << "\n";
  }
  std::cout << "rows=" << sorted.size() << "\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Hyperspectral learned compression"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  bool clamp = false;

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset and split manifest");
  synth->add_option("--n", sa.n, "Number of cubes (>= 10)");
  synth->add_option("--bands", sa.bands, "Spectral bands");
  synth->add_option("--size", sa.size, "Height and width");
  synth->add_option("--height", sa.height);
  synth->add_option("--width", sa.width);
  synth->add_option("--seed", sa.seed);
  synth->add_option("--out-dir", sa.out_dir)->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--variant", ta.variant, "opt, se or 3d");
  train->add_option("--rt", ta.rt, "Target rate (bits per pixel)");
  train->add_option("--lambda-a", ta.lambda_a, "lambda_a for --rt outside the table");
  train->add_option("--lambda-b", ta.lambda_b);
  train->add_option("--beta", ta.beta);
  train->add_option("--l1-se", ta.l1_se);
  train->add_option("--width-scale", ta.width_scale);
  train->add_option("--latent-channels", ta.latent_channels);
  train->add_option("--se-placement", ta.se_placement);
  train->add_option("--conv3d-placement", ta.conv3d_placement);
  train->add_option("--se-reduction", ta.se_reduction);
  train->add_option("--entropy-model", ta.entropy_model, "factorized or hyperprior");
  train->add_flag("--band-by-band", ta.band_by_band);
  train->add_option("--steps-pretrain", ta.steps_pretrain);
  train->add_option("--steps-gan", ta.steps_gan);
  train->add_option("--batch", ta.batch);
  train->add_option("--lr", ta.lr);
  train->add_option("--lr-d", ta.lr_d);
  train->add_option("--seed", ta.seed);
  train->add_option("--data", ta.data, "Manifest file")->required();
  train->add_option("--out", ta.out, "Checkpoint path")->required();
  train->add_option("--log", ta.log, "Metrics CSV (default <out>.metrics.csv)");
  train->add_option("--checkpoint-every", ta.checkpoint_every);
  train->add_flag("--resume", ta.resume, "Continue from the checkpoint at --out");

  std::string ckpt, in, out, data, out_csv, ckpt_dir, split = "test";
  double offset = 0.0;
  auto* comp = app.add_subcommand("compress", "Compress a cube");
  comp->add_option("--ckpt", ckpt)->required();
  comp->add_option("--in", in)->required();
  comp->add_option("--out", out)->required();
  comp->add_option("--offset", offset, "Quantization grid offset");
  auto* decomp = app.add_subcommand("decompress", "Decompress a bitstream");
  decomp->add_option("--ckpt", ckpt)->required();
  decomp->add_option("--in", in)->required();
  decomp->add_option("--out", out)->required();
  auto* eval = app.add_subcommand("eval", "Per-image and mean metrics of one checkpoint");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--data", data)->required();
  eval->add_option("--out-csv", out_csv)->required();
  eval->add_option("--split", split);
  auto* rd = app.add_subcommand("rd", "Rate-distortion CSV over a checkpoint directory");
  rd->add_option("--ckpt-dir", ckpt_dir)->required();
  rd->add_option("--data", data)->required();
  rd->add_option("--out-csv", out_csv)->required();
  rd->add_option("--split", split);
  for (auto* sub : {synth, train, comp, eval, rd}) {
    sub->add_flag("--clamp", clamp, "Clamp out-of-range cube values instead of failing");
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  args = expand_config(args);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  ta.clamp = clamp;
  if (*synth) return cmd_synth(sa);
  if (*train) return cmd_train(ta);
  if (*comp) return cmd_compress(ckpt, in, out, offset, clamp);
  if (*decomp) return cmd_decompress(ckpt, in, out);
  if (*eval) return cmd_eval(ckpt, data, split, out_csv, clamp);
  if (*rd) return cmd_rd(ckpt_dir, data, split, out_csv, clamp);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
