// Command-line front end: synthetic characters, two-stage training,
// retargeting, direct optimization, evaluation and silhouette export.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mrt/io.hpp"
#include "mrt/metrics.hpp"
#include "mrt/png.hpp"
#include "mrt/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace mrt;

namespace {

CharacterPair load_pair(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IOError("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw SchemaViolation(path + ": invalid JSON");
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  CharacterPair pair;
  try {
    pair.source = load_character(resolve(j.at("source_character").get<std::string>()));
    pair.target = load_character(resolve(j.at("target_character").get<std::string>()));
    pair.checkpoint_id = j.value("checkpoint_id", "");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaViolation(path + ": " + e.what());
  }
  return pair;
}

std::vector<Motion> load_clips_for(const std::vector<std::string>& paths,
                                   const std::string& character_name) {
  std::vector<Motion> clips;
  for (const auto& p : paths) {
    NamedMotion nm = load_motion(p);
    if (!character_name.empty() && nm.character != character_name)
      throw SchemaViolation(p + ": motion belongs to '" + nm.character + "', expected '" +
                            character_name + "'");
    clips.push_back(std::move(nm.motion));
  }
  return clips;
}

void add_config_options(CLI::App* cmd, TrainConfig& cfg, std::string& config_path) {
  cmd->add_option("--config", config_path, "TOML or JSON config file mirroring TrainConfig");
  cmd->add_option("--seed", cfg.seed, "RNG seed");
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--steps", cfg.max_steps, "stop after this many optimizer steps (0 = all)");
  cmd->add_option("--lr", cfg.lr, "learning rate");
  cmd->add_option("--batch-size", cfg.batch_size, "windows per optimizer step");
  cmd->add_option("--window", cfg.window, "frames per training window");
  cmd->add_option("--views", cfg.views, "number of rendered views");
  cmd->add_option("--image-size", cfg.image_size, "render resolution (multiple of 8)");
  cmd->add_option("--sem-stride", cfg.sem_stride, "render every k-th frame for semantics");
  cmd->add_flag("--deterministic", cfg.deterministic, "single-worker deterministic mode");
}

void finalize_config(TrainConfig& cfg, const std::string& config_path) {
  if (!config_path.empty()) cfg.load_file(config_path);
  cfg.validate();
}

struct Commands {
  CLI::App app{"motion retargeting toolkit"};

  CLI::App* mk;
  SynthSpec spec;
  std::string mk_out;

  CLI::App* pre;
  std::vector<std::string> pre_chars, pre_motions;
  std::string pre_out, pre_log, pre_config;
  TrainConfig pre_cfg = TrainConfig::pretrain_defaults();

  CLI::App* fin;
  std::string fin_ckpt, fin_pair, fin_out, fin_log, fin_config;
  std::vector<std::string> fin_motions;
  TrainConfig fin_cfg = TrainConfig::finetune_defaults();
  double fin_lambda_s = -1;

  CLI::App* ret;
  std::string ret_ckpt, ret_src, ret_pair, ret_out;

  CLI::App* opt;
  std::string opt_motion, opt_target, opt_refchar, opt_refmotion, opt_out, opt_config;
  TrainConfig opt_cfg = TrainConfig::finetune_defaults();

  CLI::App* ev;
  std::string ev_ckpt, ev_pair, ev_out, ev_config, ev_endpoint;
  std::vector<std::string> ev_motions, ev_gt;
  TrainConfig ev_cfg = TrainConfig::finetune_defaults();

  CLI::App* rd;
  std::string rd_motion, rd_char, rd_out;
  int rd_views = 3, rd_size = 128, rd_stride = 1;
  bool rd_shaded = false;

  Commands() {
    app.require_subcommand(1);

    mk = app.add_subcommand("make-character", "generate a synthetic character file");
    mk->add_option("--joints", spec.joint_count, "joint count (>= 6)");
    mk->add_option("--seed", spec.seed, "proportions seed");
    mk->add_option("--name", spec.name, "character name");
    mk->add_option("--torso-scale", spec.torso_scale, "torso radius multiplier");
    mk->add_option("--limb-scale", spec.limb_scale, "limb length multiplier");
    mk->add_option("--out", mk_out, "output character JSON")->required();

    pre = app.add_subcommand("pretrain", "skeleton-aware pre-training");
    pre->add_option("--character", pre_chars, "character JSON (repeat)")
        ->required()
        ->check(CLI::ExistingFile);
    pre->add_option("--motion", pre_motions, "motion JSON (repeat)")
        ->required()
        ->check(CLI::ExistingFile);
    pre->add_option("--out", pre_out, "output checkpoint")->required();
    pre->add_option("--log", pre_log, "JSON-lines training log");
    add_config_options(pre, pre_cfg, pre_config);

    fin = app.add_subcommand("finetune", "semantics & geometry fine-tuning for one pair");
    fin->add_option("--checkpoint", fin_ckpt, "pre-trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    fin->add_option("--pair", fin_pair, "pair JSON")->required()->check(CLI::ExistingFile);
    fin->add_option("--motion", fin_motions, "source motion JSON (repeat)")
        ->required()
        ->check(CLI::ExistingFile);
    fin->add_option("--out", fin_out, "output checkpoint")->required();
    fin->add_option("--log", fin_log, "JSON-lines training log");
    fin->add_option("--lambda-s", fin_lambda_s, "override the semantics weight");
    add_config_options(fin, fin_cfg, fin_config);

    ret = app.add_subcommand("retarget", "run inference for one motion");
    ret->add_option("--checkpoint", ret_ckpt, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    ret->add_option("--source", ret_src, "source motion JSON")
        ->required()
        ->check(CLI::ExistingFile);
    ret->add_option("--pair", ret_pair, "pair JSON")->required()->check(CLI::ExistingFile);
    ret->add_option("--out", ret_out, "output motion JSON")->required();

    opt = app.add_subcommand("optimize", "direct joint-angle optimization");
    opt->add_option("--motion", opt_motion, "initial motion JSON")
        ->required()
        ->check(CLI::ExistingFile);
    opt->add_option("--target", opt_target, "target character JSON")
        ->required()
        ->check(CLI::ExistingFile);
    opt->add_option("--ref-character", opt_refchar, "reference character for embeddings")
        ->check(CLI::ExistingFile);
    opt->add_option("--ref-motion", opt_refmotion, "reference motion for embeddings")
        ->check(CLI::ExistingFile);
    opt->add_option("--out", opt_out, "output motion JSON")->required();
    opt->add_option("--iters", opt_cfg.direct_iters, "iteration budget");
    opt->add_option("--opt-lr", opt_cfg.direct_lr, "optimizer step size");
    add_config_options(opt, opt_cfg, opt_config);

    ev = app.add_subcommand("evaluate", "score a checkpoint on clips");
    ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--pair", ev_pair, "pair JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--motion", ev_motions, "source motion JSON (repeat)")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--gt", ev_gt, "ground-truth target motion JSON (repeat)")
        ->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "report JSON path (stdout when omitted)");
    ev->add_option("--vlm-endpoint", ev_endpoint, "vision-language service URL")
        ->envname("MRT_VLM_ENDPOINT");
    add_config_options(ev, ev_cfg, ev_config);

    rd = app.add_subcommand("render", "export per-frame images");
    rd->add_option("--motion", rd_motion, "motion JSON")->required()->check(CLI::ExistingFile);
    rd->add_option("--character", rd_char, "character JSON")
        ->required()
        ->check(CLI::ExistingFile);
    rd->add_option("--out", rd_out, "output directory")->required();
    rd->add_option("--views", rd_views, "number of views (1-3)")->check(CLI::Range(1, 3));
    rd->add_option("--size", rd_size, "image size in pixels");
    rd->add_option("--stride", rd_stride, "render every k-th frame");
    rd->add_flag("--shaded", rd_shaded, "lambert shading instead of silhouettes");
  }
};

int dispatch(Commands& c) {
  if (*c.mk) {
    const Character ch = make_synthetic_character(c.spec);
    save_character(ch, c.mk_out);
    std::cout << "wrote " << c.mk_out << " (" << ch.skeleton.joint_count() << " joints, "
              << ch.mesh.vertex_count() << " vertices)\n";
    return 0;
  }

  if (*c.pre) {
    finalize_config(c.pre_cfg, c.pre_config);
    std::vector<CharacterClips> dataset;
    for (const auto& p : c.pre_chars) dataset.push_back({load_character(p), {}});
    for (const auto& p : c.pre_motions) {
      NamedMotion nm = load_motion(p);
      bool placed = false;
      for (auto& e : dataset)
        if (e.character.name == nm.character) {
          e.clips.push_back(std::move(nm.motion));
          placed = true;
          break;
        }
      if (!placed) throw SchemaViolation(p + ": no loaded character named '" + nm.character + "'");
    }
    RetargetModel model(c.pre_cfg.seed);
    Discriminator disc(c.pre_cfg.seed);
    const TrainReport rep = pretrain(dataset, c.pre_cfg, model, disc, c.pre_log);
    save_checkpoint(c.pre_out, model, disc, static_cast<std::int64_t>(rep.steps.size()));
    if (!rep.epochs.empty()) {
      const auto& last = rep.epochs.back().losses;
      std::cout << "pretrain done: steps=" << rep.steps.size() << " rec=" << last.at("rec")
                << " cyc=" << last.at("cyc") << " jdm=" << last.at("jdm") << "\n";
    }
    return 0;
  }

  if (*c.fin) {
    finalize_config(c.fin_cfg, c.fin_config);
    if (c.fin_lambda_s >= 0) c.fin_cfg.weights.lambda_s = c.fin_lambda_s;
    const CharacterPair pair = load_pair(c.fin_pair);
    const std::vector<Motion> clips = load_clips_for(c.fin_motions, pair.source.name);
    RetargetModel model;
    Discriminator disc;
    std::int64_t step = 0;
    load_checkpoint(c.fin_ckpt, model, disc, step);
    const TrainReport rep = finetune(model, pair, clips, c.fin_cfg, c.fin_log);
    save_checkpoint(c.fin_out, model, disc, step + static_cast<std::int64_t>(rep.steps.size()));
    if (!rep.epochs.empty()) {
      const auto& last = rep.epochs.back().losses;
      std::cout << "finetune done: epochs=" << rep.epochs.size() << " sem=" << last.at("sem")
                << " pen=" << last.at("pen") << "\n";
    }
    return 0;
  }

  if (*c.ret) {
    const CharacterPair pair = load_pair(c.ret_pair);
    const NamedMotion src = load_motion(c.ret_src);
    if (src.character != pair.source.name)
      throw SchemaViolation(c.ret_src + ": motion character '" + src.character +
                            "' does not match the pair source '" + pair.source.name + "'");
    RetargetModel model;
    Discriminator disc;
    std::int64_t step = 0;
    load_checkpoint(c.ret_ckpt, model, disc, step);
    const Motion out = retarget(model, src.motion, pair);
    save_motion({pair.target.name, out}, c.ret_out);
    std::cout << "wrote " << c.ret_out << " (" << out.frames() << " frames)\n";
    return 0;
  }

  if (*c.opt) {
    finalize_config(c.opt_cfg, c.opt_config);
    const Character target = load_character(c.opt_target);
    const NamedMotion initial = load_motion(c.opt_motion);
    std::vector<Tensor> refs;
    if (!c.opt_refchar.empty() && !c.opt_refmotion.empty()) {
      const Character refc = load_character(c.opt_refchar);
      const NamedMotion refm = load_motion(c.opt_refmotion);
      refs = reference_embeddings(refc, refm.motion, c.opt_cfg);
    } else {
      refs = reference_embeddings(target, initial.motion, c.opt_cfg);
    }
    DirectReport rep;
    const Motion out = direct_optimize(initial.motion, target, refs, c.opt_cfg, &rep);
    save_motion({target.name, out}, c.opt_out);
    std::cout << "optimize done: pen " << rep.initial_pen << " -> " << rep.final_pen << ", sem "
              << rep.initial_sem << " -> " << rep.final_sem << "\n";
    return 0;
  }

  if (*c.ev) {
    finalize_config(c.ev_cfg, c.ev_config);
    const CharacterPair pair = load_pair(c.ev_pair);
    const std::vector<Motion> clips = load_clips_for(c.ev_motions, pair.source.name);
    std::vector<Motion> gt;
    if (!c.ev_gt.empty()) gt = load_clips_for(c.ev_gt, pair.target.name);
    RetargetModel model;
    Discriminator disc;
    std::int64_t step = 0;
    load_checkpoint(c.ev_ckpt, model, disc, step);
    EvalOptions opts;
    opts.cfg = c.ev_cfg;
    opts.vlm_endpoint = c.ev_endpoint;
    const EvalReport report = evaluate(pair, clips, model, opts, gt.empty() ? nullptr : &gt);
    const std::string text = report.to_json();
    if (c.ev_out.empty()) {
      std::cout << text << "\n";
    } else {
      std::ofstream f(c.ev_out);
      if (!f) throw IOError("cannot open " + c.ev_out + " for writing");
      f << text << "\n";
      std::cout << "wrote " << c.ev_out << "\n";
    }
    return 0;
  }

  if (*c.rd) {
    const Character ch = load_character(c.rd_char);
    const NamedMotion nm = load_motion(c.rd_motion);
    if (nm.motion.joint_count() != ch.skeleton.joint_count())
      throw SchemaViolation(c.rd_motion + ": joint count does not match the character");
    fs::create_directories(c.rd_out);
    const auto cams = default_cameras(ch.rest_centroid(), ch.skeleton.height, c.rd_size);
    ad::Var pack = fk_transforms(ch.skeleton, ad::Var::leaf(nm.motion.rot6d),
                                 ad::Var::leaf(nm.motion.root_pos));
    ad::Var verts = lbs_vertices(ch.mesh, pack);
    int written = 0;
    for (int t = 0; t < nm.motion.frames(); t += c.rd_stride) {
      Tensor frame({ch.mesh.vertex_count(), 3});
      for (int v = 0; v < frame.dim(0); ++v)
        for (int k = 0; k < 3; ++k) frame.at(v, k) = verts.value().at(t, v, k);
      for (int cam = 0; cam < c.rd_views; ++cam) {
        char name[64];
        std::snprintf(name, sizeof(name), "frame_%04d_%s.png", t,
                      cams[static_cast<size_t>(cam)].view_name.c_str());
        const Tensor img =
            c.rd_shaded
                ? render_shaded(frame, ch.mesh.faces, cams[static_cast<size_t>(cam)])
                : render_silhouette(ad::Var::leaf(frame), ch.mesh.faces,
                                    cams[static_cast<size_t>(cam)])
                      .value();
        write_png_gray((fs::path(c.rd_out) / name).string(), img);
        ++written;
      }
    }
    std::cout << "wrote " << written << " images to " << c.rd_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Commands commands;
  try {
    commands.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = commands.app.exit(e);
    return rc == 0 ? 0 : 1;  // usage/validation problems exit 1; --help exits 0
  }
  try {
    return dispatch(commands);
  } catch (const SchemaViolation& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const IOError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const UnknownJoint& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
