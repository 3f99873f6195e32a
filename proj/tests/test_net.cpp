#include <cmath>
#include <cstring>

#include "doctest.h"
#include "mrt/net.hpp"
#include "testutil.hpp"

using namespace mrt;

namespace {

Skeleton star_skeleton(int n) {  // root + (n-1) children of a chain
  Skeleton s;
  for (int i = 0; i < n; ++i) {
    s.joint_names.push_back("j" + std::to_string(i));
    s.parent.push_back(i - 1);
  }
  s.offsets = Tensor({n, 3});
  for (int i = 1; i < n; ++i) {
    s.offsets.at(i, 0) = 0.1 * i;
    s.offsets.at(i, 1) = 0.05;
  }
  s.height = 1.0;
  s.validate();
  return s;
}

Tensor random_features(int T, int N, int C, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({T, N, C});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = rng.normal() * 0.5;
  return x;
}

}  // namespace

TEST_CASE("graph_conv with zero parameters is the identity (equal widths)") {
  GraphConvLayer layer;
  layer.in_ch = layer.out_ch = 4;
  layer.W_f = ad::Var::leaf(Tensor({4, 11}), true);
  layer.b_f = ad::Var::leaf(Tensor({4}), true);
  const SkeletonGraph g = SkeletonGraph::from(star_skeleton(3));
  const Tensor x = random_features(2, 3, 4, 1);
  const Tensor y = layer.apply(ad::Var::leaf(x), g).value();
  CHECK(testutil::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("graph_conv isolated node passes through") {
  GraphConvLayer layer;
  layer.in_ch = layer.out_ch = 2;
  Rng rng(2);
  Tensor W({2, 7});
  for (std::int64_t i = 0; i < W.size(); ++i) W[i] = rng.normal();
  layer.W_f = ad::Var::leaf(W, true);
  layer.b_f = ad::Var::leaf(Tensor({2}), true);
  SkeletonGraph g;
  g.n = 1;
  g.root = 0;  // no edges
  const Tensor x = random_features(3, 1, 2, 5);
  const Tensor y = layer.apply(ad::Var::leaf(x), g).value();
  CHECK(testutil::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("graph_conv matches hand evaluation on a 2-node scalar toy") {
  GraphConvLayer layer;
  layer.in_ch = layer.out_ch = 1;
  layer.W_f = ad::Var::leaf(Tensor({1, 5}, {0.3, -0.2, 0.5, 0.1, -0.4}), true);
  layer.b_f = ad::Var::leaf(Tensor({1}, {0.05}), true);
  SkeletonGraph g;
  g.n = 2;
  g.root = 0;
  SkeletonGraph::Edge fwd, rev;
  fwd.src = 0;
  fwd.dst = 1;
  fwd.e[0] = 0.7;
  fwd.e[1] = -0.1;
  fwd.e[2] = 0.2;
  rev.src = 1;
  rev.dst = 0;
  rev.e[0] = -0.7;
  rev.e[1] = 0.1;
  rev.e[2] = -0.2;
  g.edges = {fwd, rev};

  Tensor x({1, 2, 1});
  x.at(0, 0, 0) = 0.9;
  x.at(0, 1, 0) = -0.6;
  const Tensor y = layer.apply(ad::Var::leaf(x), g).value();

  auto lrelu = [](double z) { return z >= 0 ? z : 0.2 * z; };
  // Node 1 receives from 0 via edge e; node 0 from 1 via -e.
  const double z1 = 0.3 * -0.6 + -0.2 * 0.9 + 0.5 * 0.7 + 0.1 * -0.1 + -0.4 * 0.2 + 0.05;
  const double z0 = 0.3 * 0.9 + -0.2 * -0.6 + 0.5 * -0.7 + 0.1 * 0.1 + -0.4 * -0.2 + 0.05;
  CHECK(y.at(0, 0, 0) == doctest::Approx(0.9 + lrelu(z0)).epsilon(1e-12));
  CHECK(y.at(0, 1, 0) == doctest::Approx(-0.6 + lrelu(z1)).epsilon(1e-12));
}

TEST_CASE("graph_conv gradients match finite differences on a 3-node toy") {
  const Skeleton skel = star_skeleton(3);
  const SkeletonGraph g = SkeletonGraph::from(skel);
  Rng rng(3);
  GraphConvLayer layer;
  layer.init(2, 3, rng);
  const Tensor x = random_features(2, 3, 2, 7);

  auto value = [&](const Tensor& xv, const Tensor& Wv, const Tensor& bv, const Tensor& Pv) {
    GraphConvLayer l;
    l.in_ch = 2;
    l.out_ch = 3;
    l.W_f = ad::Var::leaf(Wv);
    l.b_f = ad::Var::leaf(bv);
    l.lift = ad::Var::leaf(Pv);
    return ad::sum(ad::square(l.apply(ad::Var::leaf(xv), g))).value()[0];
  };
  ad::Var xv = ad::Var::leaf(x, true);
  ad::Var loss = ad::sum(ad::square(layer.apply(xv, g)));
  ad::backward(loss);

  const Tensor W = layer.W_f.value(), b = layer.b_f.value(), P = layer.lift.value();
  CHECK(testutil::grad_rel_err(
            xv.grad(),
            testutil::fd_gradient([&](const Tensor& t) { return value(t, W, b, P); }, x)) < 1e-4);
  CHECK(testutil::grad_rel_err(layer.W_f.grad(), testutil::fd_gradient([&](const Tensor& t) {
          return value(x, t, b, P);
        }, W)) < 1e-4);
  CHECK(testutil::grad_rel_err(layer.b_f.grad(), testutil::fd_gradient([&](const Tensor& t) {
          return value(x, W, t, P);
        }, b)) < 1e-4);
  CHECK(testutil::grad_rel_err(layer.lift.grad(), testutil::fd_gradient([&](const Tensor& t) {
          return value(x, W, b, t);
        }, P)) < 1e-4);
}

TEST_CASE("encode/decode shape contract") {
  const Skeleton skel = star_skeleton(8);
  const SkeletonGraph g = SkeletonGraph::from(skel);
  RetargetModel model(1);
  const Tensor q = random_features(4, 8, 9, 11);
  ad::Var Z = model.encode(ad::Var::leaf(q), g);
  CHECK(Z.value().shape() == Shape{4, 8, 32});
  auto dec = model.decode(Z, g);
  CHECK(dec.rot6d.value().shape() == Shape{4, 8, 6});
  CHECK(dec.root_pos.value().shape() == Shape{4, 3});
}

TEST_CASE("zero input with zero parameters gives a zero latent") {
  const SkeletonGraph g = [] {
    Skeleton s;
    s.joint_names = {"a", "b"};
    s.parent = {-1, 0};
    s.offsets = Tensor({2, 3});
    s.height = 1;
    return SkeletonGraph::from(s);
  }();
  RetargetModel model(1);
  for (auto& [name, v] : model.named_params())
    std::fill(v.value_mut().data(), v.value_mut().data() + v.value().size(), 0.0);
  const Tensor q({2, 2, 9});
  const ad::Var Z = model.encode(ad::Var::leaf(q), g);
  CHECK(Z.value().max_abs() == 0.0);
}

TEST_CASE("decode with zero parameters yields degenerate rotations downstream") {
  const Skeleton skel = star_skeleton(3);
  const SkeletonGraph g = SkeletonGraph::from(skel);
  RetargetModel model(1);
  for (auto& [name, v] : model.named_params())
    std::fill(v.value_mut().data(), v.value_mut().data() + v.value().size(), 0.0);
  auto dec = model.decode(ad::Var::leaf(Tensor({2, 3, 32})), g);
  CHECK(dec.rot6d.value().max_abs() == 0.0);
  CHECK_THROWS_AS(fk_transforms(skel, dec.rot6d, dec.root_pos), DegenerateRotation);
}

TEST_CASE("encode/decode/discriminate are byte-stable under a fixed seed") {
  const Skeleton skel = star_skeleton(5);
  const SkeletonGraph g = SkeletonGraph::from(skel);
  const Tensor q = random_features(3, 5, 9, 23);

  RetargetModel m1(99), m2(99);
  const Tensor z1 = m1.encode(ad::Var::leaf(q), g).value();
  const Tensor z2 = m2.encode(ad::Var::leaf(q), g).value();
  REQUIRE(z1.size() == z2.size());
  CHECK(std::memcmp(z1.data(), z2.data(), static_cast<size_t>(z1.size()) * 8) == 0);

  auto d1 = m1.decode(ad::Var::leaf(z1), g);
  auto d2 = m2.decode(ad::Var::leaf(z2), g);
  CHECK(std::memcmp(d1.rot6d.value().data(), d2.rot6d.value().data(),
                    static_cast<size_t>(d1.rot6d.value().size()) * 8) == 0);
  CHECK(std::memcmp(d1.root_pos.value().data(), d2.root_pos.value().data(),
                    static_cast<size_t>(d1.root_pos.value().size()) * 8) == 0);

  Discriminator disc1(4), disc2(4);
  Tensor frame({5, 9});
  for (std::int64_t i = 0; i < frame.size(); ++i) frame[i] = 0.1 * static_cast<double>(i);
  CHECK(disc1.discriminate(frame, g) == disc2.discriminate(frame, g));
}

TEST_CASE("discriminator zero parameters output 0.5 and clamp holds") {
  const SkeletonGraph g = SkeletonGraph::from(star_skeleton(4));
  Discriminator disc(1);
  for (auto& [name, v] : disc.named_params())
    std::fill(v.value_mut().data(), v.value_mut().data() + v.value().size(), 0.0);
  Tensor frame({4, 9});
  frame.vec().setConstant(3.0);
  CHECK(disc.discriminate(frame, g) == doctest::Approx(0.5));

  // Drive the head weight up so the logit saturates; output stays <= sigmoid(15).
  Discriminator big(1);
  for (auto& [name, v] : big.named_params())
    for (std::int64_t i = 0; i < v.value().size(); ++i) v.value_mut()[i] = 3.0;
  Tensor hot({4, 9});
  hot.vec().setConstant(50.0);
  const double p = big.discriminate(hot, g);
  CHECK(p <= 1.0 / (1.0 + std::exp(-15.0)));
  CHECK(p > 0.0);
  CHECK(p < 1.0);
}

TEST_CASE("default parameter counts are stable") {
  RetargetModel model(0);
  Discriminator disc(0);
  CHECK(model.param_count() == 7869);
  CHECK(disc.param_count() == 2193);
}

TEST_CASE("encode/decode are permutation-equivariant") {
  const int N = 5;
  const Skeleton skel = star_skeleton(N);
  const SkeletonGraph g = SkeletonGraph::from(skel);

  // Relabel joints with a fixed permutation.
  const std::vector<int> perm = {3, 0, 4, 1, 2};  // new index of old joint i
  SkeletonGraph gp;
  gp.n = N;
  gp.root = perm[static_cast<size_t>(g.root)];
  for (const auto& e : g.edges) {
    SkeletonGraph::Edge ne = e;
    ne.src = perm[static_cast<size_t>(e.src)];
    ne.dst = perm[static_cast<size_t>(e.dst)];
    gp.edges.push_back(ne);
  }

  const Tensor q = random_features(3, N, 9, 31);
  Tensor qp({3, N, 9});
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < N; ++j)
      for (int c = 0; c < 9; ++c) qp.at(t, perm[static_cast<size_t>(j)], c) = q.at(t, j, c);

  RetargetModel model(7);
  const Tensor Z = model.encode(ad::Var::leaf(q), g).value();
  const Tensor Zp = model.encode(ad::Var::leaf(qp), gp).value();
  double worst = 0;
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < N; ++j)
      for (int c = 0; c < 32; ++c)
        worst = std::max(worst,
                         std::abs(Zp.at(t, perm[static_cast<size_t>(j)], c) - Z.at(t, j, c)));
  CHECK(worst < 1e-6);

  auto dec = model.decode(ad::Var::leaf(Z), g);
  auto decp = model.decode(ad::Var::leaf(Zp), gp);
  worst = 0;
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < N; ++j)
      for (int c = 0; c < 6; ++c)
        worst = std::max(worst, std::abs(decp.rot6d.value().at(t, perm[static_cast<size_t>(j)], c) -
                                         dec.rot6d.value().at(t, j, c)));
  CHECK(worst < 1e-6);
  CHECK(testutil::max_abs_diff(dec.root_pos.value(), decp.root_pos.value()) < 1e-6);
}

TEST_CASE("graph_conv rejects mismatched input shapes") {
  const SkeletonGraph g = SkeletonGraph::from(star_skeleton(3));
  RetargetModel model(1);
  CHECK_THROWS_AS(model.encode(ad::Var::leaf(Tensor({2, 3, 5})), g), ShapeMismatch);
  CHECK_THROWS_AS(model.encode(ad::Var::leaf(Tensor({2, 4, 9})), g), ShapeMismatch);
}

TEST_CASE("motion_features concatenates rotations with FK positions") {
  const Skeleton skel = star_skeleton(4);
  Motion m;
  m.rot6d = Tensor({2, 4, 6});
  for (int t = 0; t < 2; ++t)
    for (int j = 0; j < 4; ++j) {
      m.rot6d.at(t, j, 0) = 1;
      m.rot6d.at(t, j, 4) = 1;
    }
  m.root_pos = Tensor({2, 3});
  const Tensor q = motion_features(skel, m);
  CHECK(q.shape() == Shape{2, 4, 9});
  const Tensor rest = skel.rest_positions();
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 3; ++k) CHECK(q.at(0, j, 6 + k) == rest.at(j, k));
}
