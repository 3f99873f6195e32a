#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mrt/autodiff.hpp"
#include "mrt/skeleton.hpp"

namespace mrt {

/// Message-passing view of a skeleton: undirected neighborhood with the bone
/// offset as the edge feature, sign-flipped for the reversed direction.
struct SkeletonGraph {
  int n = 0;
  int root = 0;
  struct Edge {
    int src = 0, dst = 0;   // message src j -> dst i
    double e[3] = {0, 0, 0};  // e_{j,i}
  };
  std::vector<Edge> edges;

  static SkeletonGraph from(const Skeleton& skel);
};

/// x_i' = r(x_i) + sum_{j in N(i)} g(W_f [x_i, x_j, e_{j,i}] + b_f), with
/// g = LeakyReLU and r the identity (equal widths) or a learned lift.
struct GraphConvLayer {
  ad::Var W_f;   // (out, 2*in + 3)
  ad::Var b_f;   // (out)
  ad::Var lift;  // (out, in), only when in != out
  int in_ch = 0, out_ch = 0;
  double leaky_slope = 0.2;

  void init(int in, int out, Rng& rng);
  ad::Var apply(const ad::Var& x, const SkeletonGraph& graph) const;  // (T,N,in)->(T,N,out)
  void collect(const std::string& prefix, std::vector<std::pair<std::string, ad::Var>>& out) const;
};

/// Per-node 1-D convolution along time, kernel 3, same padding,
/// channel-preserving.
struct TemporalConvLayer {
  ad::Var W;  // (C, C, 3)
  ad::Var b;  // (C)
  int channels = 0;

  void init(int ch, Rng& rng, const std::vector<double>& center_bias = {});
  ad::Var apply(const ad::Var& x) const;  // (T,N,C) -> (T,N,C)
  void collect(const std::string& prefix, std::vector<std::pair<std::string, ad::Var>>& out) const;
};

/// Graph-convolutional motion encoder/decoder. The encoder expands node
/// channels 9 -> 16 -> 32 and finishes with a temporal layer; the decoder
/// mirrors it down to 6 rotation channels, with a two-layer MLP on the root
/// node's latent features emitting the root translation.
class RetargetModel {
 public:
  static constexpr int kInputChannels = 9;
  static constexpr int kHidden = 16;
  static constexpr int kLatent = 32;
  static constexpr int kOutputChannels = 6;

  RetargetModel() = default;
  explicit RetargetModel(std::uint64_t seed) { init(seed); }
  void init(std::uint64_t seed);

  ad::Var encode(const ad::Var& Q, const SkeletonGraph& graph) const;  // (T,N,9)->(T,N,32)

  struct Decoded {
    ad::Var rot6d;     // (T,N,6)
    ad::Var root_pos;  // (T,3)
  };
  Decoded decode(const ad::Var& Z, const SkeletonGraph& graph) const;

  std::vector<std::pair<std::string, ad::Var>> named_params() const;
  std::int64_t param_count() const;

  GraphConvLayer enc_gc1, enc_gc2, dec_gc1, dec_gc2;
  TemporalConvLayer enc_temporal, dec_temporal;
  ad::Var root_W1, root_b1, root_W2, root_b2;
};

/// Per-frame real/fake classifier over joint features.
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(std::uint64_t seed) { init(seed); }
  void init(std::uint64_t seed);

  /// (T,N,9) -> (T,1) probabilities strictly inside (0,1) (logit clamp 15).
  ad::Var apply(const ad::Var& Q, const SkeletonGraph& graph) const;

  /// Single-frame convenience: (N,9) -> probability.
  double discriminate(const Tensor& frame, const SkeletonGraph& graph) const;

  std::vector<std::pair<std::string, ad::Var>> named_params() const;
  std::int64_t param_count() const;

  GraphConvLayer gc1, gc2;
  ad::Var head_W, head_b;
};

/// Motion features Q = rot6d || FK positions, shape (T,N,9).
ad::Var motion_features(const Skeleton& skel, const ad::Var& rot6d, const ad::Var& root_pos);
Tensor motion_features(const Skeleton& skel, const Motion& motion);

}  // namespace mrt
