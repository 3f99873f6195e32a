#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrt/losses.hpp"
#include "mrt/mesh.hpp"
#include "mrt/net.hpp"
#include "mrt/skeleton.hpp"

namespace mrt {

/// A character asset: skeleton, skinned mesh and the named limb chains used
/// for the body/limb partition.
struct Character {
  std::string name;
  Skeleton skeleton;
  SkinnedMesh mesh;
  std::vector<std::vector<std::string>> limb_chains;

  void validate() const;
  std::array<double, 3> rest_centroid() const;
};

/// Motion clip tagged with the character it belongs to.
struct NamedMotion {
  std::string character;
  Motion motion;
};

// --- Character & motion files (JSON; .mbin motion sidecar is float32) ---

Character load_character(const std::string& path);
void save_character(const Character& character, const std::string& path);

NamedMotion load_motion(const std::string& path);
void save_motion(const NamedMotion& motion, const std::string& path);

// --- SDF grid sidecar cache (little-endian: dims i32, origin/spacing f32,
// then row-major f32 values) ---

void save_sdf_cache(const SignedDistanceGrid& grid, const std::string& path);
SignedDistanceGrid load_sdf_cache(const std::string& path);

// --- Checkpoints ----------------------------------------------------------

/// Versioned container of named parameter tensors, model hyperparameters and
/// the training step counter. Values are raw little-endian doubles, so a
/// round-trip reproduces forward outputs exactly.
void save_checkpoint(const std::string& path, const RetargetModel& model,
                     const Discriminator& disc, std::int64_t step);
void load_checkpoint(const std::string& path, RetargetModel& model, Discriminator& disc,
                     std::int64_t& step);

// --- Training configuration ------------------------------------------------

struct TrainConfig {
  std::string stage = "pretrain";  // pretrain | finetune
  double lr = 3e-4;
  int epochs = 80;
  int batch_size = 16;
  int window = 32;
  std::uint64_t seed = 0;
  LossWeights weights;
  PenRamp pen_ramp;
  int sem_stride = 4;
  int views = 3;
  int image_size = 128;
  double render_tau_scale = 1e-4;
  int max_steps = 0;  // 0 = run all epochs
  AdvConvention adv_convention = AdvConvention::nonsaturating;
  bool deterministic = true;
  int direct_iters = 200;
  double direct_lr = 0.01;
  std::string embedder = "mock";  // mock | vlm (vlm cannot supply gradients)

  static TrainConfig pretrain_defaults();
  static TrainConfig finetune_defaults();

  void validate() const;
  /// Merge settings from a JSON or TOML file (extension decides the parser).
  void load_file(const std::string& path);
};

// --- Synthetic characters & motions --------------------------------------

struct SynthSpec {
  int joint_count = 14;
  std::uint64_t seed = 0;
  std::string name;          // defaults to "synth_<seed>"
  double torso_scale = 1.0;  // widens the torso capsule and limb attach points
  double limb_scale = 1.0;
};

/// Deterministic humanoid (spine + two arms + two legs + head when the joint
/// budget allows) with capsule geometry and per-bone skinning weights. The
/// torso is a single watertight capsule so the body SDF has consistent signs.
Character make_synthetic_character(const SynthSpec& spec);

struct MotionStyle {
  double arm_amplitude = 0.8;   // radians
  double arm_cross = 0.0;       // forward/inward sweep, radians
  double leg_amplitude = 0.15;
  double spine_amplitude = 0.08;
  double root_bob = 0.01;       // meters
  double cycles = 2.0;          // full periods over the clip
};

/// Seeded sinusoidal test motion for a synthetic character.
Motion synthetic_motion(const Skeleton& skel, int frames, double fps, std::uint64_t seed,
                        const MotionStyle& style = {});

}  // namespace mrt
