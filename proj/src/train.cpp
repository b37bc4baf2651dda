#include "hssc/train.hpp"

#include <cstdio>
#include <istream>
#include <sstream>

#include "hssc/checkpoint.hpp"
#include "hssc/serialize.hpp"

namespace hssc {

namespace {

constexpr char kStateMagic[8] = {'H', 'S', 'S', 'C', 'T', 'R', 'N', '1'};

ParamList<double> concat(ParamList<double> a, const ParamList<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void require_finite_grads(const ParamList<double>& params) {
  for (const auto* p : params) {
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in " + p->id);
  }
}

}  // namespace

std::string to_string(Stage s) { return s == Stage::pretrain ? "pretrain" : "adversarial"; }

const std::string& metrics_header() {
  static const std::string h = "step,stage,rate_bpp,distortion,lambda,d_loss,se_l1";
  return h;
}

std::string metrics_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%s,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(r.step), to_string(r.stage).c_str(), r.rate, r.distortion,
                r.lambda, r.d_loss, r.se_l1);
  return buf;
}

std::vector<StepRecord> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) {
    throw FormatError("metrics log: missing header");
  }
  std::vector<StepRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(is, field, ',')) f.push_back(field);
    if (f.size() != 7) throw FormatError("metrics log: bad row '" + line + "'");
    StepRecord r;
    r.step = std::stoll(f[0]);
    if (f[1] == "pretrain") {
      r.stage = Stage::pretrain;
    } else if (f[1] == "adversarial") {
      r.stage = Stage::adversarial;
    } else {
      throw FormatError("metrics log: bad stage '" + f[1] + "'");
    }
    r.rate = std::stod(f[2]);
    r.distortion = std::stod(f[3]);
    r.lambda = std::stod(f[4]);
    r.d_loss = std::stod(f[5]);
    r.se_l1 = std::stod(f[6]);
    r.objective = r.lambda * r.rate + r.distortion + r.se_l1;
    rows.push_back(r);
  }
  return rows;
}

Trainer::Trainer(Model<double>& model, std::vector<Tensor<double>> train_set,
                 const TrainOptions& options)
    : model_(model), data_(std::move(train_set)), options_(options), distortion_(options.weights) {
  options_.weights.validate();
  options_.weights.lambda_a_for(options_.r_t);
  if (data_.empty()) throw std::invalid_argument("train: dataset is empty");
  if (options_.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (options_.steps_pretrain < 0 || options_.steps_gan < 0) {
    throw std::invalid_argument("train: step counts must be >= 0");
  }
  egp_params_ = concat(concat(model.encoder_params(), model.generator_params()), model.prior_params());
  d_params_ = model.discriminator_params();
  adam_egp_ = Adam(egp_params_, {options_.lr});
  adam_d_ = Adam(d_params_, {options_.lr_d});
}

Stage Trainer::stage_of(Index step) const {
  return step < options_.steps_pretrain ? Stage::pretrain : Stage::adversarial;
}

std::vector<Tensor<double>> Trainer::sample_batch(Index step) const {
  CounterRng rng = CounterRng(options_.seed).fork("batch").fork(static_cast<std::uint64_t>(step));
  std::vector<Tensor<double>> batch;
  for (Index i = 0; i < options_.batch; ++i) {
    batch.push_back(data_[static_cast<std::size_t>(rng.uniform_index(static_cast<Index>(data_.size())))]);
  }
  return batch;
}

StepRecord Trainer::step() {
  if (done()) throw std::logic_error("train: all steps done");
  const Stage stage = stage_of(step_);
  const auto batch = sample_batch(step_);
  zero_grads(egp_params_);
  zero_grads(d_params_);
  const double beta = stage == Stage::adversarial ? options_.weights.beta : 0.0;
  const EgpLoss egp = loss_egp(model_, distortion_, batch, options_.weights, beta, options_.r_t, true);
  StepRecord r;
  if (stage == Stage::adversarial) {
    r.d_loss = loss_d(model_.discriminator, batch, egp.x_hat, egp.y_hat, true);
    require_finite_grads(d_params_);
  }
  require_finite_grads(egp_params_);
  adam_egp_.step();
  if (stage == Stage::adversarial) adam_d_.step();

  r.step = ++step_;
  r.stage = stage;
  r.rate = egp.rate;
  r.distortion = egp.distortion;
  r.lambda = egp.lambda;
  r.se_l1 = egp.se_l1;
  r.adversarial = egp.adversarial;
  r.objective = egp.objective;
  if (step_ == 1) {
    avg_rate_ = r.rate;
    avg_distortion_ = r.distortion;
  } else {
    avg_rate_ = 0.9 * avg_rate_ + 0.1 * r.rate;
    avg_distortion_ = 0.9 * avg_distortion_ + 0.1 * r.distortion;
  }
  return r;
}

std::string Trainer::save_state() const {
  std::ostringstream os;
  os.write(kStateMagic, sizeof(kStateMagic));
  write_le<std::uint64_t>(os, options_.seed);
  write_le<double>(os, options_.r_t);
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(step_));
  write_le<double>(os, avg_rate_);
  write_le<double>(os, avg_distortion_);
  adam_egp_.save(os);
  adam_d_.save(os);
  const auto all = concat(egp_params_, d_params_);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(all.size()));
  for (const auto* p : all) write_doubles(os, p->value.data());
  return os.str();
}

void Trainer::load_state(const std::string& blob) {
  std::istringstream in(blob);
  if (read_bytes(in, sizeof(kStateMagic)) != std::string(kStateMagic, sizeof(kStateMagic))) {
    throw FormatError("training state: bad magic");
  }
  const auto seed = read_le<std::uint64_t>(in);
  if (seed != options_.seed) {
    throw std::invalid_argument("resume: checkpoint was trained with seed " + std::to_string(seed));
  }
  const auto r_t = read_le<double>(in);
  if (r_t != options_.r_t) {
    throw std::invalid_argument("resume: checkpoint was trained for r_t " + std::to_string(r_t));
  }
  step_ = static_cast<Index>(read_le<std::uint64_t>(in));
  avg_rate_ = read_le<double>(in);
  avg_distortion_ = read_le<double>(in);
  adam_egp_.load(in);
  adam_d_.load(in);
  const auto all = concat(egp_params_, d_params_);
  if (read_le<std::uint32_t>(in) != all.size()) throw FormatError("training state: parameter count mismatch");
  for (auto* p : all) read_doubles(in, p->value.data());
}

double Trainer::target_rate_of(const std::string& blob) {
  std::istringstream in(blob);
  if (read_bytes(in, sizeof(kStateMagic)) != std::string(kStateMagic, sizeof(kStateMagic))) {
    throw FormatError("training state: bad magic");
  }
  read_le<std::uint64_t>(in);
  return read_le<double>(in);
}

std::vector<StepRecord> run_training(Trainer& trainer, Model<double>& model,
                                     const LoopOptions& loop) {
  std::vector<StepRecord> records;
  auto checkpoint = [&] {
    if (!loop.checkpoint_path.empty()) save_checkpoint(loop.checkpoint_path, model, trainer.save_state());
  };
  Index ran = 0;
  while (!trainer.done() && (loop.max_steps < 0 || ran < loop.max_steps)) {
    StepRecord r;
    try {
      r = trainer.step();
    } catch (const NumericError&) {
      checkpoint();
      throw;
    }
    ++ran;
    records.push_back(r);
    if (loop.log) *loop.log << metrics_row(r) << "\n" << std::flush;
    if (loop.checkpoint_every > 0 && r.step % loop.checkpoint_every == 0) checkpoint();
  }
  checkpoint();
  return records;
}

}  // namespace hssc
