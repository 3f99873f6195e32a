#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mrt/io.hpp"
#include "mrt/semantics.hpp"
#include "mrt/train.hpp"

namespace mrt {

/// Height-normalized joint position error, averaged per frame and joint.
/// `local` aligns the root with the ground truth per frame first.
double mse_metric(const JointPositions& p_hat, const JointPositions& p_gt, double height,
                  bool local);

/// Percentage of vertices inside the body, averaged over frames. `vertices`
/// are (T,V,3) already expressed in the SDF grid frame; only the partition's
/// limb vertices are tested, the denominator is all V vertices.
double pen_metric(const SignedDistanceGrid& grid, const BodyPartition& partition,
                  const Tensor& vertices);

/// Frechet distance between Gaussian fits of two embedding sets (n,K)/(m,K).
double fid_metric(const Tensor& emb_src, const Tensor& emb_tgt);

/// Mean squared embedding distance over evaluated frames.
double scl_metric(const Tensor& emb_src, const Tensor& emb_tgt);

struct EvalOptions {
  TrainConfig cfg;                     // stride, views, image size
  std::string vlm_endpoint;            // empty -> ITM skipped
  double vlm_timeout_seconds = 30.0;
};

struct EvalReport {
  std::optional<double> mse_global;
  std::optional<double> mse_local;
  double pen_percent = 0;
  double fid = 0;
  double scl = 0;
  std::optional<double> itm;
  std::string itm_note;  // "backend unavailable" when no endpoint configured

  struct ClipRow {
    std::string name;
    std::optional<double> mse_global, mse_local;
    double pen_percent = 0, scl = 0;
  };
  std::vector<ClipRow> clips;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

/// Retargets every clip and scores skeleton (MSE when ground truth exists or
/// the pair is an identity pair), geometry (PEN) and semantics (SCL, FID,
/// optional ITM through the external service).
EvalReport evaluate(const CharacterPair& pair, const std::vector<Motion>& clips,
                    const RetargetModel& model, const EvalOptions& options,
                    const std::vector<Motion>* ground_truth = nullptr);

}  // namespace mrt
