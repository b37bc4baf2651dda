#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hssc/losses.hpp"
#include "hssc/optim.hpp"

namespace hssc {

enum class Stage { pretrain, adversarial };
std::string to_string(Stage s);

struct TrainOptions {
  LossWeights weights;
  double r_t = 0.2;
  Index batch = 8;
  Index steps_pretrain = 200;
  Index steps_gan = 200;
  double lr = 1e-4;
  double lr_d = 1e-4;
  std::uint64_t seed = 0;
};

// One row of the metrics log. rate is in controller units (bits per pixel).
struct StepRecord {
  Index step = 0;  // 1-based
  Stage stage = Stage::pretrain;
  double rate = 0.0;
  double distortion = 0.0;
  double lambda = 0.0;
  double d_loss = 0.0;
  double se_l1 = 0.0;
  double adversarial = 0.0;
  // lambda rate + distortion + adversarial + se_l1
  double objective = 0.0;
};

// "step,stage,rate_bpp,distortion,lambda,d_loss,se_l1"
const std::string& metrics_header();
std::string metrics_row(const StepRecord& r);
// Parses a log written with metrics_header / metrics_row.
std::vector<StepRecord> read_metrics(std::istream& in);

// Two-stage schedule: steps_pretrain steps with beta = 0, then steps_gan
// steps that each update D on the batch and E, G, P on the same batch.
// Batches are drawn with replacement from a stream keyed by (seed, step),
// so resuming needs no extra RNG state.
class Trainer {
 public:
  Trainer(Model<double>& model, std::vector<Tensor<double>> train_set, const TrainOptions& options);

  const TrainOptions& options() const { return options_; }
  Index steps_done() const { return step_; }
  Index total_steps() const { return options_.steps_pretrain + options_.steps_gan; }
  bool done() const { return step_ >= total_steps(); }
  Stage stage_of(Index step) const;

  // Runs one step. Throws NumericError before touching any parameter when
  // a loss term or gradient is non-finite.
  StepRecord step();

  // Step, running averages, optimizer moments and f64 parameters.
  std::string save_state() const;
  void load_state(const std::string& blob);
  static double target_rate_of(const std::string& blob);

  double average_rate() const { return avg_rate_; }
  double average_distortion() const { return avg_distortion_; }

 private:
  std::vector<Tensor<double>> sample_batch(Index step) const;

  Model<double>& model_;
  std::vector<Tensor<double>> data_;
  TrainOptions options_;
  Distortion distortion_;
  ParamList<double> egp_params_;
  ParamList<double> d_params_;
  Adam adam_egp_;
  Adam adam_d_;
  Index step_ = 0;
  double avg_rate_ = 0.0;
  double avg_distortion_ = 0.0;
};

struct LoopOptions {
  std::string checkpoint_path;  // empty: no checkpoints
  Index checkpoint_every = 0;   // 0: only at the end
  std::ostream* log = nullptr;  // metrics rows, header written by the caller
  Index max_steps = -1;         // stop after this many steps in this call
};

// Runs the trainer to completion (or max_steps). On divergence the last
// good state is checkpointed and the NumericError rethrown.
std::vector<StepRecord> run_training(Trainer& trainer, Model<double>& model,
                                     const LoopOptions& loop);

}  // namespace hssc
