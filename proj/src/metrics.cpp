#include "mrt/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "json.hpp"

namespace mrt {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

double mse_metric(const JointPositions& p_hat, const JointPositions& p_gt, double height,
                  bool local) {
  check_same_shape(p_hat.P, p_gt.P, "mse_metric");
  if (!(height > 0)) throw ShapeMismatch("mse_metric: height must be positive");
  const int T = p_hat.frames(), N = p_hat.joint_count();
  double acc = 0;
  for (int t = 0; t < T; ++t) {
    double root_shift[3] = {0, 0, 0};
    if (local)
      for (int k = 0; k < 3; ++k) root_shift[k] = p_hat.P.at(t, 0, k) - p_gt.P.at(t, 0, k);
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < 3; ++k) {
        const double d = p_hat.P.at(t, j, k) - root_shift[k] - p_gt.P.at(t, j, k);
        acc += d * d;
      }
  }
  return acc / (height * T * N);
}

double pen_metric(const SignedDistanceGrid& grid, const BodyPartition& partition,
                  const Tensor& vertices) {
  if (vertices.rank() != 3 || vertices.dim(2) != 3)
    throw ShapeMismatch("pen_metric: vertices must be (T,V,3)");
  const int T = vertices.dim(0), V = vertices.dim(1);
  if (T == 0 || V == 0) return 0.0;
  double total = 0;
  Tensor pts({static_cast<int>(partition.limb_vertex_ids.size()), 3});
  for (int t = 0; t < T; ++t) {
    for (size_t q = 0; q < partition.limb_vertex_ids.size(); ++q)
      for (int k = 0; k < 3; ++k)
        pts.at(static_cast<int>(q), k) = vertices.at(t, partition.limb_vertex_ids[q], k);
    Tensor vals;
    query_sdf(grid, pts, vals);
    int inside = 0;
    for (std::int64_t i = 0; i < vals.size(); ++i)
      if (vals[i] < 0) ++inside;
    total += 100.0 * inside / V;
  }
  return total / T;
}

namespace {

MatrixXd sym_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void fit_gaussian(const Tensor& emb, VectorXd& mu, MatrixXd& sigma) {
  const int n = emb.dim(0), K = emb.dim(1);
  MatrixXd X(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) X(i, k) = emb.at(i, k);
  mu = X.colwise().mean();
  const MatrixXd C = X.rowwise() - mu.transpose();
  sigma = C.transpose() * C / std::max(1, n - 1);
  sigma += 1e-6 * MatrixXd::Identity(K, K);  // small-sample stability
}

}  // namespace

double fid_metric(const Tensor& emb_src, const Tensor& emb_tgt) {
  if (emb_src.rank() != 2 || emb_tgt.rank() != 2 || emb_src.dim(1) != emb_tgt.dim(1))
    throw ShapeMismatch("fid_metric: embeddings must be (n,K) with equal K");
  if (emb_src.dim(0) < 2 || emb_tgt.dim(0) < 2)
    throw InsufficientSamples("fid_metric: need at least two samples per side");
  VectorXd mu_s, mu_t;
  MatrixXd sig_s, sig_t;
  fit_gaussian(emb_src, mu_s, sig_s);
  fit_gaussian(emb_tgt, mu_t, sig_t);
  const MatrixXd root_s = sym_sqrt(sig_s);
  const MatrixXd inner = root_s * sig_t * root_s;
  const MatrixXd cross = sym_sqrt(inner);
  const double fid =
      (mu_s - mu_t).squaredNorm() + (sig_s + sig_t - 2.0 * cross).trace();
  return std::max(0.0, fid);
}

double scl_metric(const Tensor& emb_src, const Tensor& emb_tgt) {
  check_same_shape(emb_src, emb_tgt, "scl_metric");
  if (emb_src.rank() != 2) throw ShapeMismatch("scl_metric: embeddings must be (n,K)");
  const int n = emb_src.dim(0);
  if (n == 0) return 0.0;
  double acc = 0;
  for (std::int64_t i = 0; i < emb_src.size(); ++i) {
    const double d = emb_src[i] - emb_tgt[i];
    acc += d * d;
  }
  return acc / n;
}

namespace {

json opt_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

/// World -> root-local vertices, matching the rigid-torso SDF convention.
Tensor to_torso_local(const Tensor& verts, const Tensor& pack, int torso_joint,
                      const Tensor& torso_rest) {
  const int T = verts.dim(0), V = verts.dim(1);
  Tensor out({T, V, 3});
  for (int t = 0; t < T; ++t) {
    double R[3][3], p[3];
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) R[a][b] = pack.at(t, torso_joint, a * 3 + b);
      p[a] = pack.at(t, torso_joint, 9 + a);
    }
    for (int v = 0; v < V; ++v) {
      double d[3];
      for (int k = 0; k < 3; ++k) d[k] = verts.at(t, v, k) - p[k];
      for (int k = 0; k < 3; ++k)
        out.at(t, v, k) = R[0][k] * d[0] + R[1][k] * d[1] + R[2][k] * d[2] + torso_rest[k];
    }
  }
  return out;
}

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["mse_global"] = opt_to_json(mse_global);
  j["mse_local"] = opt_to_json(mse_local);
  j["pen_percent"] = pen_percent;
  j["fid"] = fid;
  j["scl"] = scl;
  j["itm"] = opt_to_json(itm);
  j["itm_note"] = itm_note;
  j["clips"] = json::array();
  for (const auto& c : clips) {
    json cj;
    cj["name"] = c.name;
    cj["mse_global"] = opt_to_json(c.mse_global);
    cj["mse_local"] = opt_to_json(c.mse_local);
    cj["pen_percent"] = c.pen_percent;
    cj["scl"] = c.scl;
    j["clips"].push_back(cj);
  }
  return j.dump(1);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw SchemaViolation("eval report: invalid JSON");
  if (j.value("schema_version", 0) != 1)
    throw SchemaViolation("eval report: unsupported schema version");
  EvalReport r;
  r.mse_global = opt_from_json(j.at("mse_global"));
  r.mse_local = opt_from_json(j.at("mse_local"));
  r.pen_percent = j.at("pen_percent").get<double>();
  r.fid = j.at("fid").get<double>();
  r.scl = j.at("scl").get<double>();
  r.itm = opt_from_json(j.at("itm"));
  r.itm_note = j.value("itm_note", "");
  for (const auto& cj : j.at("clips")) {
    EvalReport::ClipRow c;
    c.name = cj.value("name", "");
    c.mse_global = opt_from_json(cj.at("mse_global"));
    c.mse_local = opt_from_json(cj.at("mse_local"));
    c.pen_percent = cj.at("pen_percent").get<double>();
    c.scl = cj.at("scl").get<double>();
    r.clips.push_back(c);
  }
  return r;
}

EvalReport evaluate(const CharacterPair& pair, const std::vector<Motion>& clips,
                    const RetargetModel& model, const EvalOptions& options,
                    const std::vector<Motion>* ground_truth) {
  const TrainConfig& cfg = options.cfg;
  if (clips.empty()) throw DataEmpty("evaluate: no clips");
  if (ground_truth && ground_truth->size() != clips.size())
    throw ShapeMismatch("evaluate: ground truth count must match clips");

  const Skeleton& skel_src = pair.source.skeleton;
  const Skeleton& skel_tgt = pair.target.skeleton;
  const bool identity_pair =
      skel_src.parent == skel_tgt.parent && skel_src.offsets.same_shape(skel_tgt.offsets) &&
      [&] {
        for (std::int64_t i = 0; i < skel_src.offsets.size(); ++i)
          if (skel_src.offsets[i] != skel_tgt.offsets[i]) return false;
        return true;
      }();

  const BodyPartition part = partition_limbs(pair.target.mesh, skel_tgt, pair.target.limb_chains);
  std::vector<std::array<int, 3>> body_faces;
  for (int f : part.body_face_ids) body_faces.push_back(pair.target.mesh.faces[static_cast<size_t>(f)]);
  const SignedDistanceGrid sdf = build_sdf(pair.target.mesh.vertices_bind, body_faces);
  const int torso_joint = skel_tgt.root();
  const Tensor rest = skel_tgt.rest_positions();
  Tensor torso_rest({3});
  for (int k = 0; k < 3; ++k) torso_rest[k] = rest.at(torso_joint, k);
  const auto cams_tgt = default_cameras(pair.target.rest_centroid(), skel_tgt.height, cfg.image_size);
  MockEmbedder embedder(cfg.views);

  std::unique_ptr<VlmClient> vlm;
  if (!options.vlm_endpoint.empty()) {
    VlmClient::Options vo;
    vo.endpoint = options.vlm_endpoint;
    vo.timeout_seconds = options.vlm_timeout_seconds;
    vlm = std::make_unique<VlmClient>(vo);
  }

  EvalReport report;
  std::vector<Tensor> all_src_emb, all_tgt_emb;
  double mse_g_sum = 0, mse_l_sum = 0, pen_sum = 0, itm_sum = 0;
  int mse_count = 0, itm_count = 0;
  PromptTemplate prompt;

  for (size_t ci = 0; ci < clips.size(); ++ci) {
    const Motion& src = clips[ci];
    const Motion tgt = retarget(model, src, pair);
    EvalReport::ClipRow row;
    row.name = "clip_" + std::to_string(ci);

    // Skeleton level.
    const JointPositions p_hat = forward_kinematics(skel_tgt, tgt);
    const Motion* gt = ground_truth ? &(*ground_truth)[ci] : (identity_pair ? &src : nullptr);
    if (gt) {
      const JointPositions p_gt = forward_kinematics(skel_tgt, *gt);
      row.mse_global = mse_metric(p_hat, p_gt, skel_tgt.height, false);
      row.mse_local = mse_metric(p_hat, p_gt, skel_tgt.height, true);
      mse_g_sum += *row.mse_global;
      mse_l_sum += *row.mse_local;
      ++mse_count;
    }

    // Geometry level.
    ad::Var pack = fk_transforms(skel_tgt, ad::Var::leaf(tgt.rot6d), ad::Var::leaf(tgt.root_pos));
    ad::Var verts = lbs_vertices(pair.target.mesh, pack);
    const Tensor local = to_torso_local(verts.value(), pack.value(), torso_joint, torso_rest);
    row.pen_percent = pen_metric(sdf, part, local);
    pen_sum += row.pen_percent;

    // Semantics level.
    const std::vector<Tensor> src_emb = reference_embeddings(pair.source, src, cfg);
    const std::vector<Tensor> tgt_emb = reference_embeddings(pair.target, tgt, cfg);
    double clip_scl = 0;
    for (size_t i = 0; i < src_emb.size() && i < tgt_emb.size(); ++i) {
      double d2 = 0;
      for (std::int64_t k = 0; k < src_emb[i].size(); ++k) {
        const double d = src_emb[i][k] - tgt_emb[i][k];
        d2 += d * d;
      }
      clip_scl += d2;
      all_src_emb.push_back(src_emb[i]);
      all_tgt_emb.push_back(tgt_emb[i]);
    }
    row.scl = src_emb.empty() ? 0.0 : clip_scl / static_cast<double>(src_emb.size());

    if (vlm) {
      // Text from the source middle frame; ITM over sampled target frames.
      const auto cams_src =
          default_cameras(pair.source.rest_centroid(), skel_src.height, cfg.image_size);
      ad::Var pack_s =
          fk_transforms(skel_src, ad::Var::leaf(src.rot6d), ad::Var::leaf(src.root_pos));
      ad::Var verts_s = lbs_vertices(pair.source.mesh, pack_s);
      const int mid = src.frames() / 2;
      Tensor frame_s({pair.source.mesh.vertex_count(), 3});
      for (int v = 0; v < frame_s.dim(0); ++v)
        for (int k = 0; k < 3; ++k) frame_s.at(v, k) = verts_s.value().at(mid, v, k);
      const Tensor img_s = render_shaded(frame_s, pair.source.mesh.faces, cams_src[0]);
      const auto vqa = vlm->guided_vqa(img_s, prompt);
      for (int t = 0; t < tgt.frames(); t += cfg.sem_stride) {
        Tensor frame_t({pair.target.mesh.vertex_count(), 3});
        for (int v = 0; v < frame_t.dim(0); ++v)
          for (int k = 0; k < 3; ++k) frame_t.at(v, k) = verts.value().at(t, v, k);
        itm_sum += vlm->itm_score(render_shaded(frame_t, pair.target.mesh.faces, cams_tgt[0]),
                                  vqa.answer);
        ++itm_count;
      }
    }
    report.clips.push_back(std::move(row));
  }

  if (mse_count > 0) {
    report.mse_global = mse_g_sum / mse_count;
    report.mse_local = mse_l_sum / mse_count;
  }
  report.pen_percent = pen_sum / static_cast<double>(clips.size());
  // SCL over all evaluated frames.
  if (!all_src_emb.empty()) {
    Tensor es({static_cast<int>(all_src_emb.size()), all_src_emb[0].dim(0)});
    Tensor et({static_cast<int>(all_tgt_emb.size()), all_tgt_emb[0].dim(0)});
    for (size_t i = 0; i < all_src_emb.size(); ++i)
      for (int k = 0; k < es.dim(1); ++k) {
        es.at(static_cast<int>(i), k) = all_src_emb[i][k];
        et.at(static_cast<int>(i), k) = all_tgt_emb[i][k];
      }
    report.scl = scl_metric(es, et);
    report.fid = all_src_emb.size() >= 2 ? fid_metric(es, et) : 0.0;
  }
  if (itm_count > 0)
    report.itm = itm_sum / itm_count;
  else if (!vlm)
    report.itm_note = "backend unavailable";
  return report;
}

}  // namespace mrt
