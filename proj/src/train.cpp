#include "mrt/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mrt {

using nlohmann::json;

Adam::Adam(std::vector<ad::Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value().shape());
    v_.emplace_back(p.value().shape());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Tensor& g = p.grad();
    std::fill(g.data(), g.data() + g.size(), 0.0);
  }
}

void Adam::step() {
  for (auto& p : params_)
    if (!p.grad().all_finite())
      throw DivergenceDetected("optimizer: non-finite gradient, aborting before the update");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = params_[i].value_mut();
    const Tensor& g = params_[i].grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::int64_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      w[k] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  }
}

namespace {

std::vector<ad::Var> values_of(const std::vector<std::pair<std::string, ad::Var>>& named) {
  std::vector<ad::Var> out;
  out.reserve(named.size());
  for (const auto& [name, v] : named) out.push_back(v);
  return out;
}

void append_epoch_log(const std::string& path, const EpochRecord& rec) {
  if (path.empty()) return;
  json j;
  j["epoch"] = rec.epoch;
  j["losses"] = rec.losses;
  j["lambda_effective"] = rec.lambda_effective;
  j["wall_time"] = rec.wall_time;
  std::ofstream f(path, std::ios::app);
  if (!f) throw IOError("cannot open training log " + path);
  f << j.dump() << "\n";
}

void check_finite_loss(double v, const char* name) {
  if (!std::isfinite(v))
    throw DivergenceDetected(std::string("loss '") + name + "' is not finite: " +
                             std::to_string(v));
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct WindowRef {
  int entry = 0, clip = 0, start = 0;
};

}  // namespace

TrainReport pretrain(const std::vector<CharacterClips>& dataset, const TrainConfig& cfg,
                     RetargetModel& model, Discriminator& disc, const std::string& log_path) {
  cfg.validate();
  if (dataset.size() < 2) throw DataEmpty("pretrain: need at least two characters");
  for (const auto& e : dataset) {
    if (e.clips.empty()) throw DataEmpty("pretrain: character " + e.character.name + " has no clips");
    for (const auto& c : e.clips)
      if (c.frames() < cfg.window)
        throw DataEmpty("pretrain: clip shorter than the training window");
    if (e.character.skeleton.joint_count() != dataset[0].character.skeleton.joint_count() ||
        e.character.skeleton.parent != dataset[0].character.skeleton.parent)
      throw PairMismatch("pretrain: characters must share joint count and hierarchy");
  }

  std::vector<SkeletonGraph> graphs;
  std::vector<std::vector<Tensor>> features;  // Q per clip
  std::vector<std::vector<Tensor>> positions; // FK positions per clip
  for (const auto& e : dataset) {
    graphs.push_back(SkeletonGraph::from(e.character.skeleton));
    std::vector<Tensor> qs, ps;
    for (const auto& clip : e.clips) {
      Tensor q = motion_features(e.character.skeleton, clip);
      const int T = q.dim(0), N = q.dim(1);
      Tensor p({T, N, 3});
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < N; ++j)
          for (int k = 0; k < 3; ++k) p.at(t, j, k) = q.at(t, j, 6 + k);
      qs.push_back(std::move(q));
      ps.push_back(std::move(p));
    }
    features.push_back(std::move(qs));
    positions.push_back(std::move(ps));
  }

  Adam gen_adam(values_of(model.named_params()), cfg.lr);
  Adam disc_adam(values_of(disc.named_params()), cfg.lr);
  Rng rng(cfg.seed);

  auto window_features = [&](int entry, int clip, int start, int len, Tensor* pos_out) {
    const Tensor& q = features[static_cast<size_t>(entry)][static_cast<size_t>(clip)];
    const int N = q.dim(1);
    Tensor w({len, N, 9});
    std::copy_n(q.data() + static_cast<std::int64_t>(start) * N * 9,
                static_cast<std::int64_t>(len) * N * 9, w.data());
    if (pos_out) {
      const Tensor& p = positions[static_cast<size_t>(entry)][static_cast<size_t>(clip)];
      *pos_out = Tensor({len, N, 3});
      std::copy_n(p.data() + static_cast<std::int64_t>(start) * N * 3,
                  static_cast<std::int64_t>(len) * N * 3, pos_out->data());
    }
    return w;
  };
  auto sample_window = [&](int entry) {
    WindowRef w;
    w.entry = entry;
    w.clip = static_cast<int>(rng.index(dataset[static_cast<size_t>(entry)].clips.size()));
    const int T = dataset[static_cast<size_t>(entry)].clips[static_cast<size_t>(w.clip)].frames();
    w.start = static_cast<int>(rng.index(static_cast<std::uint64_t>(T - cfg.window + 1)));
    return w;
  };

  int windows_per_epoch = 0;
  for (const auto& e : dataset)
    for (const auto& c : e.clips) windows_per_epoch += std::max(1, c.frames() / cfg.window);
  const int steps_per_epoch = std::max(1, windows_per_epoch / cfg.batch_size);

  TrainReport report;
  int global_step = 0;
  bool done = false;
  for (int epoch = 1; epoch <= cfg.epochs && !done; ++epoch) {
    const double t0 = now_seconds();
    std::map<std::string, double> epoch_sums;
    int epoch_steps = 0;
    for (int s = 0; s < steps_per_epoch && !done; ++s) {
      // Generator pass.
      gen_adam.zero_grad();
      disc_adam.zero_grad();
      losses::PretrainParts parts;
      std::vector<Tensor> fake_frames;  // per-sample retargeted features for the D pass
      std::vector<int> fake_targets;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const int a = static_cast<int>(rng.index(dataset.size()));
        int tgt = static_cast<int>(rng.index(dataset.size() - 1));
        if (tgt >= a) ++tgt;
        const WindowRef wa = sample_window(a);
        Tensor pos_a;
        const Tensor qa = window_features(wa.entry, wa.clip, wa.start, cfg.window, &pos_a);
        const ad::Var Qa = ad::Var::leaf(qa);
        const Skeleton& skel_a = dataset[static_cast<size_t>(a)].character.skeleton;
        const Skeleton& skel_b = dataset[static_cast<size_t>(tgt)].character.skeleton;
        const SkeletonGraph& ga = graphs[static_cast<size_t>(a)];
        const SkeletonGraph& gb = graphs[static_cast<size_t>(tgt)];

        // Reconstruction A -> A.
        ad::Var Za = model.encode(Qa, ga);
        auto dec_rec = model.decode(Za, ga);
        ad::Var q_rec = motion_features(skel_a, dec_rec.rot6d, dec_rec.root_pos);
        ad::Var rec = losses::rec_loss(q_rec, Qa);

        // Retarget A -> B.
        auto dec_b = model.decode(Za, gb);
        ad::Var pack_b = fk_transforms(skel_b, dec_b.rot6d, dec_b.root_pos);
        ad::Var pos_b = fk_positions(pack_b);
        ad::Var q_b = ad::concat_last(dec_b.rot6d, pos_b);

        // Cycle A -> B -> A.
        ad::Var Zb = model.encode(q_b, gb);
        auto dec_cyc = model.decode(Zb, ga);
        ad::Var q_cyc = motion_features(skel_a, dec_cyc.rot6d, dec_cyc.root_pos);
        ad::Var cyc = losses::cyc_loss(q_cyc, Qa);

        // Adversarial (generator side) + joint relationship on A -> B.
        ad::Var probs = disc.apply(q_b, gb);
        ad::Var adv = cfg.adv_convention == AdvConvention::saturating
                          ? losses::adv_loss_generator(probs)
                          : losses::adv_loss_generator_nonsat(probs);
        ad::Var jdm = losses::jdm_loss(ad::Var::leaf(pos_a), pos_b);

        parts.rec = parts.rec.defined() ? ad::add(parts.rec, rec) : rec;
        parts.cyc = parts.cyc.defined() ? ad::add(parts.cyc, cyc) : cyc;
        parts.adv = parts.adv.defined() ? ad::add(parts.adv, adv) : adv;
        parts.jdm = parts.jdm.defined() ? ad::add(parts.jdm, jdm) : jdm;

        fake_frames.push_back(q_b.value());
        fake_targets.push_back(tgt);
      }
      ad::Var total = losses::total_pretrain_loss(parts, cfg.weights);
      check_finite_loss(total.value()[0], "pretrain_total");
      ad::backward(total);
      gen_adam.step();

      // Discriminator pass (1:1 alternation) on detached fakes + real windows.
      gen_adam.zero_grad();
      disc_adam.zero_grad();
      ad::Var d_loss;
      for (size_t b = 0; b < fake_frames.size(); ++b) {
        const int tgt = fake_targets[b];
        const WindowRef wr = sample_window(tgt);
        const Tensor q_real = window_features(wr.entry, wr.clip, wr.start, cfg.window, nullptr);
        ad::Var real_probs = disc.apply(ad::Var::leaf(q_real), graphs[static_cast<size_t>(tgt)]);
        ad::Var fake_probs =
            disc.apply(ad::Var::leaf(fake_frames[b]), graphs[static_cast<size_t>(tgt)]);
        ad::Var l = losses::adv_loss_discriminator(real_probs, fake_probs);
        d_loss = d_loss.defined() ? ad::add(d_loss, l) : l;
      }
      check_finite_loss(d_loss.value()[0], "discriminator");
      ad::backward(d_loss);
      disc_adam.step();

      ++global_step;
      ++epoch_steps;
      StepRecord sr;
      sr.step = global_step;
      const double inv_b = 1.0 / cfg.batch_size;
      sr.losses["rec"] = parts.rec.value()[0] * inv_b;
      sr.losses["cyc"] = parts.cyc.value()[0] * inv_b;
      sr.losses["adv"] = parts.adv.value()[0] * inv_b;
      sr.losses["jdm"] = parts.jdm.value()[0] * inv_b;
      sr.losses["total"] = total.value()[0] * inv_b;
      sr.losses["disc"] = d_loss.value()[0] * inv_b;
      for (const auto& [k, v] : sr.losses) epoch_sums[k] += v;
      report.steps.push_back(std::move(sr));
      if (cfg.max_steps > 0 && global_step >= cfg.max_steps) done = true;
    }
    EpochRecord er;
    er.epoch = epoch;
    for (const auto& [k, v] : epoch_sums) er.losses[k] = v / std::max(1, epoch_steps);
    er.lambda_effective = {{"lambda_r", cfg.weights.lambda_r},
                           {"lambda_c", cfg.weights.lambda_c},
                           {"lambda_a", cfg.weights.lambda_a},
                           {"lambda_j", cfg.weights.lambda_j}};
    er.wall_time = now_seconds() - t0;
    append_epoch_log(log_path, er);
    report.epochs.push_back(std::move(er));
  }
  return report;
}

namespace {

void check_pair(const CharacterPair& pair) {
  if (pair.source.skeleton.joint_count() != pair.target.skeleton.joint_count() ||
      pair.source.skeleton.parent != pair.target.skeleton.parent)
    throw PairMismatch("source and target must share joint count and hierarchy order");
}

void require_mock_embedder(const TrainConfig& cfg, const char* where) {
  if (cfg.embedder != "mock")
    throw BackendNotDifferentiable(std::string(where) +
                                   ": the '" + cfg.embedder +
                                   "' embedder cannot supply gradients; use the mock backend");
}

std::vector<int> sampled_frames(int T, int stride) {
  std::vector<int> out;
  for (int t = 0; t < T; t += stride) out.push_back(t);
  return out;
}

}  // namespace

std::vector<Tensor> reference_embeddings(const Character& character, const Motion& motion,
                                         const TrainConfig& cfg) {
  const auto cams =
      default_cameras(character.rest_centroid(), character.skeleton.height, cfg.image_size);
  MockEmbedder embedder(cfg.views);
  ad::Var pack = fk_transforms(character.skeleton, ad::Var::leaf(motion.rot6d),
                               ad::Var::leaf(motion.root_pos));
  ad::Var verts = lbs_vertices(character.mesh, pack);
  std::vector<Tensor> out;
  for (int t : sampled_frames(motion.frames(), cfg.sem_stride)) {
    ad::Var frame = ad::select_axis0(verts, t);
    std::vector<ad::Var> images;
    for (int v = 0; v < cfg.views; ++v)
      images.push_back(render_silhouette(frame, character.mesh.faces,
                                         cams[static_cast<size_t>(v)], cfg.render_tau_scale));
    out.push_back(embedder.embed(images).value());
  }
  return out;
}

TrainReport finetune(RetargetModel& model, const CharacterPair& pair,
                     const std::vector<Motion>& clips, const TrainConfig& cfg,
                     const std::string& log_path) {
  cfg.validate();
  check_pair(pair);
  require_mock_embedder(cfg, "finetune");
  if (clips.empty()) throw DataEmpty("finetune: no clips");

  const Skeleton& skel_src = pair.source.skeleton;
  const Skeleton& skel_tgt = pair.target.skeleton;
  const SkeletonGraph graph_src = SkeletonGraph::from(skel_src);
  const SkeletonGraph graph_tgt = SkeletonGraph::from(skel_tgt);

  // Geometry preparation: partition + body SDF in the torso (root) frame.
  const BodyPartition part = partition_limbs(pair.target.mesh, skel_tgt, pair.target.limb_chains);
  std::vector<std::array<int, 3>> body_faces;
  for (int f : part.body_face_ids) body_faces.push_back(pair.target.mesh.faces[static_cast<size_t>(f)]);
  const SignedDistanceGrid sdf = build_sdf(pair.target.mesh.vertices_bind, body_faces);
  const int torso_joint = skel_tgt.root();
  const Tensor rest = skel_tgt.rest_positions();
  Tensor torso_rest({3});
  for (int k = 0; k < 3; ++k) torso_rest[k] = rest.at(torso_joint, k);

  const auto cams_tgt =
      default_cameras(pair.target.rest_centroid(), skel_tgt.height, cfg.image_size);
  MockEmbedder embedder(cfg.views);

  // Cache per-clip source features and reference embeddings (constant).
  std::vector<Tensor> clip_features;
  std::vector<std::vector<Tensor>> clip_refs;
  for (const auto& clip : clips) {
    if (clip.joint_count() != skel_src.joint_count())
      throw PairMismatch("finetune: clip joint count does not match the source skeleton");
    clip_features.push_back(motion_features(skel_src, clip));
    clip_refs.push_back(reference_embeddings(pair.source, clip, cfg));
  }

  // Non-overlapping windows per clip.
  std::vector<WindowRef> windows;
  for (size_t c = 0; c < clips.size(); ++c) {
    const int T = clips[c].frames();
    for (int start = 0; start + cfg.window <= T; start += cfg.window)
      windows.push_back({0, static_cast<int>(c), start});
  }
  if (windows.empty()) throw DataEmpty("finetune: clips shorter than the training window");

  Adam adam(values_of(model.named_params()), cfg.lr);
  Rng rng(cfg.seed);
  TrainReport report;
  int global_step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    const double eff_lambda_p = pen_ramp_weight(epoch, cfg.pen_ramp, cfg.weights.lambda_p);
    // Deterministic shuffle.
    std::vector<WindowRef> order = windows;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(rng.index(i))]);

    std::map<std::string, double> epoch_sums;
    int epoch_steps = 0;
    for (size_t w0 = 0; w0 < order.size(); w0 += static_cast<size_t>(cfg.batch_size)) {
      adam.zero_grad();
      losses::FinetuneParts parts;
      int batch_count = 0;
      for (size_t wi = w0; wi < std::min(order.size(), w0 + static_cast<size_t>(cfg.batch_size));
           ++wi) {
        const WindowRef& wr = order[wi];
        const Tensor& qfull = clip_features[static_cast<size_t>(wr.clip)];
        const int N = qfull.dim(1);
        Tensor qwin({cfg.window, N, 9});
        std::copy_n(qfull.data() + static_cast<std::int64_t>(wr.start) * N * 9, qwin.size(),
                    qwin.data());

        ad::Var Za = model.encode(ad::Var::leaf(qwin), graph_src);
        auto dec = model.decode(Za, graph_tgt);
        ad::Var pack = fk_transforms(skel_tgt, dec.rot6d, dec.root_pos);
        ad::Var verts = lbs_vertices(pair.target.mesh, pack);

        // Interpenetration on all frames.
        ad::Var phi = sdf_query_local(sdf, verts, pack, part.limb_vertex_ids, torso_joint,
                                      torso_rest);
        ad::Var pen = losses::pen_loss(phi);
        parts.pen = parts.pen.defined() ? ad::add(parts.pen, pen) : pen;

        // Semantics on sampled frames (skippable when lambda_s is zero).
        if (cfg.weights.lambda_s != 0.0) {
          ad::Var sem;
          for (int t : sampled_frames(cfg.window, cfg.sem_stride)) {
            const int global_frame = wr.start + t;
            const int ref_idx = global_frame / cfg.sem_stride;
            const auto& refs = clip_refs[static_cast<size_t>(wr.clip)];
            if (global_frame % cfg.sem_stride != 0 ||
                ref_idx >= static_cast<int>(refs.size()))
              continue;
            ad::Var frame = ad::select_axis0(verts, t);
            std::vector<ad::Var> images;
            for (int v = 0; v < cfg.views; ++v)
              images.push_back(render_silhouette(frame, pair.target.mesh.faces,
                                                 cams_tgt[static_cast<size_t>(v)],
                                                 cfg.render_tau_scale));
            ad::Var emb = embedder.embed(images);
            ad::Var l = losses::sem_loss(ad::Var::leaf(refs[static_cast<size_t>(ref_idx)]), emb);
            sem = sem.defined() ? ad::add(sem, l) : l;
          }
          if (sem.defined()) parts.sem = parts.sem.defined() ? ad::add(parts.sem, sem) : sem;
        }
        ++batch_count;
      }
      if (!parts.sem.defined()) parts.sem = ad::Var::leaf(Tensor::scalar(0.0));
      ad::Var total = losses::total_finetune_loss(parts, cfg.weights, eff_lambda_p);
      check_finite_loss(total.value()[0], "finetune_total");
      ad::backward(total);
      adam.step();

      ++global_step;
      ++epoch_steps;
      StepRecord sr;
      sr.step = global_step;
      const double inv_b = 1.0 / std::max(1, batch_count);
      sr.losses["sem"] = parts.sem.value()[0] * inv_b;
      sr.losses["pen"] = parts.pen.value()[0] * inv_b;
      sr.losses["total"] = total.value()[0] * inv_b;
      for (const auto& [k, v] : sr.losses) epoch_sums[k] += v;
      report.steps.push_back(std::move(sr));
    }
    EpochRecord er;
    er.epoch = epoch;
    for (const auto& [k, v] : epoch_sums) er.losses[k] = v / std::max(1, epoch_steps);
    er.lambda_effective = {{"lambda_s", cfg.weights.lambda_s}, {"lambda_p", eff_lambda_p}};
    er.wall_time = now_seconds() - t0;
    append_epoch_log(log_path, er);
    report.epochs.push_back(std::move(er));
  }
  return report;
}

Motion retarget(const RetargetModel& model, const Motion& source_motion,
                const CharacterPair& pair) {
  check_pair(pair);
  source_motion.validate();
  if (source_motion.joint_count() != pair.source.skeleton.joint_count())
    throw PairMismatch("retarget: motion joint count does not match the source skeleton");
  const Tensor q = motion_features(pair.source.skeleton, source_motion);
  const SkeletonGraph graph_src = SkeletonGraph::from(pair.source.skeleton);
  const SkeletonGraph graph_tgt = SkeletonGraph::from(pair.target.skeleton);
  ad::Var Z = model.encode(ad::Var::leaf(q), graph_src);
  auto dec = model.decode(Z, graph_tgt);
  Motion out;
  out.fps = source_motion.fps;
  out.rot6d = dec.rot6d.value();
  out.root_pos = dec.root_pos.value();
  return out;
}

Motion direct_optimize(const Motion& initial, const Character& target,
                       const std::vector<Tensor>& refs, const TrainConfig& cfg,
                       DirectReport* report) {
  cfg.validate();
  require_mock_embedder(cfg, "direct_optimize");
  initial.validate();
  if (initial.joint_count() != target.skeleton.joint_count())
    throw PairMismatch("direct_optimize: motion joint count does not match the target");

  const Skeleton& skel = target.skeleton;
  const BodyPartition part = partition_limbs(target.mesh, skel, target.limb_chains);
  std::vector<std::array<int, 3>> body_faces;
  for (int f : part.body_face_ids) body_faces.push_back(target.mesh.faces[static_cast<size_t>(f)]);
  const SignedDistanceGrid sdf = build_sdf(target.mesh.vertices_bind, body_faces);
  const int torso_joint = skel.root();
  const Tensor rest = skel.rest_positions();
  Tensor torso_rest({3});
  for (int k = 0; k < 3; ++k) torso_rest[k] = rest.at(torso_joint, k);
  const auto cams = default_cameras(target.rest_centroid(), skel.height, cfg.image_size);
  MockEmbedder embedder(cfg.views);
  const auto frames = sampled_frames(initial.frames(), cfg.sem_stride);
  if (refs.size() < frames.size())
    throw ShapeMismatch("direct_optimize: reference embeddings do not cover the sampled frames");

  ad::Var rot = ad::Var::leaf(initial.rot6d, true);
  ad::Var root = ad::Var::leaf(initial.root_pos, true);
  Adam adam({rot, root}, cfg.direct_lr);

  auto eval_loss = [&](double* sem_out, double* pen_out) {
    ad::Var pack = fk_transforms(skel, rot, root);
    ad::Var verts = lbs_vertices(target.mesh, pack);
    ad::Var phi = sdf_query_local(sdf, verts, pack, part.limb_vertex_ids, torso_joint, torso_rest);
    ad::Var pen = losses::pen_loss(phi);
    ad::Var sem;
    for (size_t i = 0; i < frames.size(); ++i) {
      ad::Var frame = ad::select_axis0(verts, frames[i]);
      std::vector<ad::Var> images;
      for (int v = 0; v < cfg.views; ++v)
        images.push_back(render_silhouette(frame, target.mesh.faces, cams[static_cast<size_t>(v)],
                                           cfg.render_tau_scale));
      ad::Var l = losses::sem_loss(ad::Var::leaf(refs[i]), embedder.embed(images));
      sem = sem.defined() ? ad::add(sem, l) : l;
    }
    if (!sem.defined()) sem = ad::Var::leaf(Tensor::scalar(0.0));
    if (sem_out) *sem_out = sem.value()[0];
    if (pen_out) *pen_out = pen.value()[0];
    return losses::total_finetune_loss({sem, pen}, cfg.weights, cfg.weights.lambda_p);
  };

  double sem0 = 0, pen0 = 0;
  ad::Var loss0 = eval_loss(&sem0, &pen0);
  double best_loss = loss0.value()[0];
  Tensor best_rot = rot.value();
  Tensor best_root = root.value();
  if (report) {
    report->initial_sem = sem0;
    report->initial_pen = pen0;
    report->loss_history.push_back(best_loss);
  }

  for (int it = 0; it < cfg.direct_iters; ++it) {
    adam.zero_grad();
    ad::Var loss = it == 0 ? loss0 : eval_loss(nullptr, nullptr);
    check_finite_loss(loss.value()[0], "direct_optimize");
    ad::backward(loss);
    adam.step();
    ad::Var next = eval_loss(nullptr, nullptr);
    const double lv = next.value()[0];
    if (report) report->loss_history.push_back(lv);
    if (lv < best_loss) {
      best_loss = lv;
      best_rot = rot.value();
      best_root = root.value();
    }
  }

  Motion out;
  out.fps = initial.fps;
  out.rot6d = best_rot;
  out.root_pos = best_root;
  if (report) {
    double mx = 0;
    for (std::int64_t i = 0; i < out.rot6d.size(); ++i)
      mx = std::max(mx, std::abs(out.rot6d[i] - initial.rot6d[i]));
    for (std::int64_t i = 0; i < out.root_pos.size(); ++i)
      mx = std::max(mx, std::abs(out.root_pos[i] - initial.root_pos[i]));
    report->max_param_change = mx;
    // Final components at the returned iterate.
    ad::Var rot_f = ad::Var::leaf(out.rot6d, false);
    ad::Var root_f = ad::Var::leaf(out.root_pos, false);
    ad::Var pack = fk_transforms(skel, rot_f, root_f);
    ad::Var verts = lbs_vertices(target.mesh, pack);
    ad::Var phi = sdf_query_local(sdf, verts, pack, part.limb_vertex_ids, torso_joint, torso_rest);
    report->final_pen = losses::pen_loss(phi).value()[0];
    double sem_f = 0;
    for (size_t i = 0; i < frames.size(); ++i) {
      ad::Var frame = ad::select_axis0(verts, frames[i]);
      std::vector<ad::Var> images;
      for (int v = 0; v < cfg.views; ++v)
        images.push_back(render_silhouette(frame, target.mesh.faces, cams[static_cast<size_t>(v)],
                                           cfg.render_tau_scale));
      sem_f += losses::sem_loss(ad::Var::leaf(refs[i]), embedder.embed(images)).value()[0];
    }
    report->final_sem = sem_f;
  }
  return out;
}

}  // namespace mrt
