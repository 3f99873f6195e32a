#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mrt/io.hpp"
#include "mrt/losses.hpp"
#include "mrt/net.hpp"
#include "mrt/render.hpp"
#include "mrt/semantics.hpp"

namespace mrt {

/// Adam with conventional defaults. Refuses to apply non-finite gradients.
class Adam {
 public:
  Adam(std::vector<ad::Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();
  void zero_grad();
  void set_lr(double lr) { lr_ = lr; }

 private:
  std::vector<ad::Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct CharacterClips {
  Character character;
  std::vector<Motion> clips;
};

struct CharacterPair {
  Character source;
  Character target;
  std::string checkpoint_id;
};

struct StepRecord {
  int step = 0;
  std::map<std::string, double> losses;
};

struct EpochRecord {
  int epoch = 0;
  std::map<std::string, double> losses;
  std::map<std::string, double> lambda_effective;
  double wall_time = 0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

/// Skeleton-aware pre-training: reconstruction, cycle, adversarial and joint
/// relationship losses over unpaired clips of two or more characters.
/// Alternates generator/discriminator steps 1:1. Writes a JSON-lines log
/// (one record per epoch) when `log_path` is non-empty.
TrainReport pretrain(const std::vector<CharacterClips>& dataset, const TrainConfig& cfg,
                     RetargetModel& model, Discriminator& disc, const std::string& log_path = "");

/// Semantics & geometry fine-tuning for one source/target pair with the
/// differentiable mock embedder. The interpenetration weight follows the
/// configured ramp schedule.
TrainReport finetune(RetargetModel& model, const CharacterPair& pair,
                     const std::vector<Motion>& clips, const TrainConfig& cfg,
                     const std::string& log_path = "");

/// Inference: source motion -> target motion through the trained model.
Motion retarget(const RetargetModel& model, const Motion& source_motion,
                const CharacterPair& pair);

/// Per sampled frame (stride cfg.sem_stride) reference embeddings of a
/// rendered motion, used by direct_optimize and evaluation.
std::vector<Tensor> reference_embeddings(const Character& character, const Motion& motion,
                                         const TrainConfig& cfg);

struct DirectReport {
  std::vector<double> loss_history;
  double initial_pen = 0, final_pen = 0;
  double initial_sem = 0, final_sem = 0;
  double max_param_change = 0;
};

/// Direct joint-angle optimization of an initial motion against reference
/// embeddings and the target body SDF. Returns the best-loss iterate.
Motion direct_optimize(const Motion& initial, const Character& target,
                       const std::vector<Tensor>& refs, const TrainConfig& cfg,
                       DirectReport* report = nullptr);

}  // namespace mrt
