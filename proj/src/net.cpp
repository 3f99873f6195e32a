#include "mrt/net.hpp"

#include <cmath>

namespace mrt {

SkeletonGraph SkeletonGraph::from(const Skeleton& skel) {
  SkeletonGraph g;
  g.n = skel.joint_count();
  g.root = skel.root();
  for (int c = 0; c < g.n; ++c) {
    const int p = skel.parent[static_cast<size_t>(c)];
    if (p < 0) continue;
    Edge fwd, rev;
    fwd.src = p;
    fwd.dst = c;
    rev.src = c;
    rev.dst = p;
    for (int k = 0; k < 3; ++k) {
      fwd.e[k] = skel.offsets.at(c, k);
      rev.e[k] = -skel.offsets.at(c, k);
    }
    g.edges.push_back(fwd);
    g.edges.push_back(rev);
  }
  return g;
}

namespace {

Tensor glorot(int rows, int cols, Rng& rng) {
  Tensor t({rows, cols});
  const double s = std::sqrt(6.0 / (rows + cols));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-s, s);
  return t;
}

}  // namespace

void GraphConvLayer::init(int in, int out, Rng& rng) {
  in_ch = in;
  out_ch = out;
  W_f = ad::Var::leaf(glorot(out, 2 * in + 3, rng), true);
  b_f = ad::Var::leaf(Tensor({out}), true);
  if (in != out)
    lift = ad::Var::leaf(glorot(out, in, rng), true);
  else
    lift = ad::Var();
}

namespace {

/// Edge-feature design matrix for one frame: row r = [x_dst, x_src, e].
void fill_cat(MatRM& cat, const Tensor& xv, const std::vector<SkeletonGraph::Edge>& edges, int t,
              int in) {
  const int E = static_cast<int>(edges.size());
  for (int r = 0; r < E; ++r) {
    const auto& ed = edges[static_cast<size_t>(r)];
    for (int c = 0; c < in; ++c) {
      cat(r, c) = xv.at(t, ed.dst, c);
      cat(r, in + c) = xv.at(t, ed.src, c);
    }
    for (int k = 0; k < 3; ++k) cat(r, 2 * in + k) = ed.e[k];
  }
}

}  // namespace

ad::Var GraphConvLayer::apply(const ad::Var& x, const SkeletonGraph& graph) const {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(2) != in_ch || xv.dim(1) != graph.n)
    throw ShapeMismatch("graph_conv: input must be (T,N," + std::to_string(in_ch) + ")");
  const int T = xv.dim(0), N = xv.dim(1);
  const int in = in_ch, out = out_ch;
  const double slope = leaky_slope;
  const auto edges = graph.edges;
  const int E = static_cast<int>(edges.size());
  const bool has_lift = lift.defined();

  const Tensor& Wv = W_f.value();
  const Tensor& bv = b_f.value();
  Tensor y({T, N, out});

  // Residual path.
  if (has_lift) {
    const Tensor& P = lift.value();
    y.mat(T * N, out).noalias() = xv.mat(T * N, in) * P.mat(out, in).transpose();
  } else {
    std::copy_n(xv.data(), xv.size(), y.data());
  }

  // Messages, one GEMM per frame over the edge design matrix.
  if (E > 0) {
    MatRM cat(E, 2 * in + 3), z(E, out);
    for (int t = 0; t < T; ++t) {
      fill_cat(cat, xv, edges, t, in);
      z.noalias() = cat * Wv.mat(out, 2 * in + 3).transpose();
      z.rowwise() += bv.vec().transpose();
      for (int r = 0; r < E; ++r) {
        const int dst = edges[static_cast<size_t>(r)].dst;
        for (int o = 0; o < out; ++o) {
          const double v = z(r, o);
          y.at(t, dst, o) += v >= 0 ? v : slope * v;
        }
      }
    }
  }

  std::vector<ad::Var> parents = {x, W_f, b_f};
  if (has_lift) parents.push_back(lift);

  return ad::make_op(
      "graph_conv", std::move(y), std::move(parents),
      [T, N, in, out, slope, edges, E, has_lift](ad::Node& n) {
        const ad::NodePtr& xp = n.parents[0];
        const ad::NodePtr& Wp = n.parents[1];
        const ad::NodePtr& bp = n.parents[2];
        const Tensor& xv = xp->value;
        const Tensor& Wv = Wp->value;
        const Tensor& bv = bp->value;

        // Residual path.
        if (has_lift) {
          const ad::NodePtr& Pp = n.parents[3];
          const Tensor& P = Pp->value;
          const Tensor& gt = n.grad;
          if (xp->requires_grad)
            xp->ensure_grad().mat(T * N, in).noalias() += gt.mat(T * N, out) * P.mat(out, in);
          if (Pp->requires_grad)
            Pp->ensure_grad().mat(out, in).noalias() +=
                gt.mat(T * N, out).transpose() * xv.mat(T * N, in);
        } else if (xp->requires_grad) {
          Tensor& gx = xp->ensure_grad();
          gx.vec() += n.grad.vec();
        }

        if (E == 0) return;
        Tensor* gx = xp->requires_grad ? &xp->ensure_grad() : nullptr;
        Tensor* gW = Wp->requires_grad ? &Wp->ensure_grad() : nullptr;
        Tensor* gb = bp->requires_grad ? &bp->ensure_grad() : nullptr;
        MatRM cat(E, 2 * in + 3), z(E, out), gz(E, out), gcat(E, 2 * in + 3);
        for (int t = 0; t < T; ++t) {
          fill_cat(cat, xv, edges, t, in);
          z.noalias() = cat * Wv.mat(out, 2 * in + 3).transpose();
          z.rowwise() += bv.vec().transpose();
          for (int r = 0; r < E; ++r) {
            const int dst = edges[static_cast<size_t>(r)].dst;
            for (int o = 0; o < out; ++o)
              gz(r, o) = n.grad.at(t, dst, o) * (z(r, o) >= 0 ? 1.0 : slope);
          }
          if (gb) gb->vec() += gz.colwise().sum().transpose();
          if (gW) gW->mat(out, 2 * in + 3).noalias() += gz.transpose() * cat;
          if (gx) {
            gcat.noalias() = gz * Wv.mat(out, 2 * in + 3);
            for (int r = 0; r < E; ++r) {
              const auto& ed = edges[static_cast<size_t>(r)];
              for (int c = 0; c < in; ++c) {
                gx->at(t, ed.dst, c) += gcat(r, c);
                gx->at(t, ed.src, c) += gcat(r, in + c);
              }
            }
          }
        }
      });
}

void GraphConvLayer::collect(const std::string& prefix,
                             std::vector<std::pair<std::string, ad::Var>>& out) const {
  out.emplace_back(prefix + ".W", W_f);
  out.emplace_back(prefix + ".b", b_f);
  if (lift.defined()) out.emplace_back(prefix + ".lift", lift);
}

void TemporalConvLayer::init(int ch, Rng& rng, const std::vector<double>& center_bias) {
  channels = ch;
  Tensor Wt({ch, ch, 3});
  const double s = std::sqrt(6.0 / (ch + ch)) * 0.1;
  for (std::int64_t i = 0; i < Wt.size(); ++i) Wt[i] = rng.uniform(-s, s);
  for (int c = 0; c < ch; ++c) Wt.at(c, c, 1) += 1.0;  // identity center tap
  Tensor bt({ch});
  for (int c = 0; c < ch && c < static_cast<int>(center_bias.size()); ++c)
    bt[c] = center_bias[static_cast<size_t>(c)];
  W = ad::Var::leaf(std::move(Wt), true);
  b = ad::Var::leaf(std::move(bt), true);
}

ad::Var TemporalConvLayer::apply(const ad::Var& x) const {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(2) != channels)
    throw ShapeMismatch("temporal_conv: input must be (T,N,C)");
  const int T = xv.dim(0), N = xv.dim(1), C = channels;
  const Tensor& Wv = W.value();
  const Tensor& bv = b.value();
  Tensor y({T, N, C});
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < N; ++i)
      for (int o = 0; o < C; ++o) {
        double acc = bv[o];
        for (int k = 0; k < 3; ++k) {
          const int ts = t + k - 1;
          if (ts < 0 || ts >= T) continue;
          for (int c = 0; c < C; ++c) acc += Wv.at(o, c, k) * xv.at(ts, i, c);
        }
        y.at(t, i, o) = acc;
      }
  return ad::make_op("temporal_conv", std::move(y), {x, W, b}, [T, N, C](ad::Node& n) {
    const ad::NodePtr& xp = n.parents[0];
    const ad::NodePtr& Wp = n.parents[1];
    const ad::NodePtr& bp = n.parents[2];
    const Tensor& xv = xp->value;
    const Tensor& Wv = Wp->value;
    Tensor* gx = xp->requires_grad ? &xp->ensure_grad() : nullptr;
    Tensor* gW = Wp->requires_grad ? &Wp->ensure_grad() : nullptr;
    Tensor* gb = bp->requires_grad ? &bp->ensure_grad() : nullptr;
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < N; ++i)
        for (int o = 0; o < C; ++o) {
          const double g = n.grad.at(t, i, o);
          if (g == 0.0) continue;
          if (gb) (*gb)[o] += g;
          for (int k = 0; k < 3; ++k) {
            const int ts = t + k - 1;
            if (ts < 0 || ts >= T) continue;
            for (int c = 0; c < C; ++c) {
              if (gW) gW->at(o, c, k) += g * xv.at(ts, i, c);
              if (gx) gx->at(ts, i, c) += g * Wv.at(o, c, k);
            }
          }
        }
  });
}

void TemporalConvLayer::collect(const std::string& prefix,
                                std::vector<std::pair<std::string, ad::Var>>& out) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
}

void RetargetModel::init(std::uint64_t seed) {
  Rng rng(seed);
  enc_gc1.init(kInputChannels, kHidden, rng);
  enc_gc2.init(kHidden, kLatent, rng);
  enc_temporal.init(kLatent, rng);
  dec_gc1.init(kLatent, kHidden, rng);
  dec_gc2.init(kHidden, kOutputChannels, rng);
  // Bias the final temporal layer toward the identity 6D rotation so early
  // training starts from a valid rest pose instead of a degenerate frame.
  dec_temporal.init(kOutputChannels, rng, {1, 0, 0, 0, 1, 0});
  root_W1 = ad::Var::leaf(glorot(kHidden, kLatent, rng), true);
  root_b1 = ad::Var::leaf(Tensor({kHidden}), true);
  root_W2 = ad::Var::leaf(glorot(3, kHidden, rng), true);
  root_b2 = ad::Var::leaf(Tensor({3}), true);
}

ad::Var RetargetModel::encode(const ad::Var& Q, const SkeletonGraph& graph) const {
  ad::Var h = enc_gc1.apply(Q, graph);
  h = enc_gc2.apply(h, graph);
  return enc_temporal.apply(h);
}

RetargetModel::Decoded RetargetModel::decode(const ad::Var& Z, const SkeletonGraph& graph) const {
  ad::Var h = dec_gc1.apply(Z, graph);
  h = dec_gc2.apply(h, graph);
  Decoded d;
  d.rot6d = dec_temporal.apply(h);
  ad::Var r = ad::select_axis1(Z, graph.root);  // (T, latent)
  r = ad::leaky_relu(ad::linear(r, root_W1, root_b1), 0.2);
  d.root_pos = ad::linear(r, root_W2, root_b2);  // (T,3)
  return d;
}

std::vector<std::pair<std::string, ad::Var>> RetargetModel::named_params() const {
  std::vector<std::pair<std::string, ad::Var>> out;
  enc_gc1.collect("enc.gc1", out);
  enc_gc2.collect("enc.gc2", out);
  enc_temporal.collect("enc.temporal", out);
  dec_gc1.collect("dec.gc1", out);
  dec_gc2.collect("dec.gc2", out);
  dec_temporal.collect("dec.temporal", out);
  out.emplace_back("root.W1", root_W1);
  out.emplace_back("root.b1", root_b1);
  out.emplace_back("root.W2", root_W2);
  out.emplace_back("root.b2", root_b2);
  return out;
}

std::int64_t RetargetModel::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : named_params()) n += v.value().size();
  return n;
}

void Discriminator::init(std::uint64_t seed) {
  Rng rng(seed ^ 0xD15Cull);
  gc1.init(9, 16, rng);
  gc2.init(16, 32, rng);
  head_W = ad::Var::leaf(glorot(1, 32, rng), true);
  head_b = ad::Var::leaf(Tensor({1}), true);
}

ad::Var Discriminator::apply(const ad::Var& Q, const SkeletonGraph& graph) const {
  ad::Var h = gc1.apply(Q, graph);
  h = gc2.apply(h, graph);
  h = ad::mean_axis1(h);                       // (T,32)
  h = ad::linear(h, head_W, head_b);           // (T,1)
  return ad::sigmoid_clamped(h, 15.0);
}

double Discriminator::discriminate(const Tensor& frame, const SkeletonGraph& graph) const {
  if (frame.rank() != 2 || frame.dim(1) != 9) throw ShapeMismatch("discriminate: frame (N,9)");
  if (!frame.all_finite()) throw Error("discriminate: non-finite features");
  Tensor q({1, frame.dim(0), 9});
  std::copy_n(frame.data(), frame.size(), q.data());
  return apply(ad::Var::leaf(std::move(q)), graph).value()[0];
}

std::vector<std::pair<std::string, ad::Var>> Discriminator::named_params() const {
  std::vector<std::pair<std::string, ad::Var>> out;
  gc1.collect("disc.gc1", out);
  gc2.collect("disc.gc2", out);
  out.emplace_back("disc.head.W", head_W);
  out.emplace_back("disc.head.b", head_b);
  return out;
}

std::int64_t Discriminator::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : named_params()) n += v.value().size();
  return n;
}

ad::Var motion_features(const Skeleton& skel, const ad::Var& rot6d, const ad::Var& root_pos) {
  ad::Var pack = fk_transforms(skel, rot6d, root_pos);
  return ad::concat_last(rot6d, fk_positions(pack));
}

Tensor motion_features(const Skeleton& skel, const Motion& motion) {
  return motion_features(skel, ad::Var::leaf(motion.rot6d), ad::Var::leaf(motion.root_pos)).value();
}

}  // namespace mrt
