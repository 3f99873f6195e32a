#include "mrt/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mrt {

using nlohmann::json;

void Character::validate() const {
  skeleton.validate();
  mesh.validate(skeleton.joint_count());
  for (const auto& chain : limb_chains)
    for (const auto& nm : chain) skeleton.index_of(nm);
}

std::array<double, 3> Character::rest_centroid() const {
  std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (int v = 0; v < mesh.vertex_count(); ++v)
    for (int k = 0; k < 3; ++k) {
      lo[static_cast<size_t>(k)] = std::min(lo[static_cast<size_t>(k)], mesh.vertices_bind.at(v, k));
      hi[static_cast<size_t>(k)] = std::max(hi[static_cast<size_t>(k)], mesh.vertices_bind.at(v, k));
    }
  return {(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, (lo[2] + hi[2]) / 2};
}

namespace {

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IOError("cannot open " + path);
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw SchemaViolation(path + ": invalid JSON");
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IOError("short write to " + path);
}

Tensor bind_inverse_from_rest(const Skeleton& skel) {
  const Tensor rest = skel.rest_positions();
  const int n = skel.joint_count();
  Tensor bi({n, 4, 4});
  for (int j = 0; j < n; ++j) {
    for (int a = 0; a < 3; ++a) {
      bi.at(j, a, a) = 1.0;
      bi.at(j, a, 3) = -rest.at(j, a);
    }
    bi.at(j, 3, 3) = 1.0;
  }
  return bi;
}

}  // namespace

Character load_character(const std::string& path) {
  const json j = load_json(path);
  Character ch;
  try {
    ch.name = j.at("name").get<std::string>();
    const auto& joints = j.at("joints");
    const int n = static_cast<int>(joints.size());
    ch.skeleton.joint_names.resize(static_cast<size_t>(n));
    ch.skeleton.parent.resize(static_cast<size_t>(n));
    ch.skeleton.offsets = Tensor({n, 3});
    for (int i = 0; i < n; ++i) {
      const auto& jj = joints[static_cast<size_t>(i)];
      ch.skeleton.joint_names[static_cast<size_t>(i)] = jj.at("name").get<std::string>();
      ch.skeleton.parent[static_cast<size_t>(i)] = jj.at("parent").get<int>();
      const auto& off = jj.at("offset");
      if (off.size() != 3) throw SchemaViolation(path + ": joint offset must have 3 entries");
      for (int k = 0; k < 3; ++k) ch.skeleton.offsets.at(i, k) = off[static_cast<size_t>(k)].get<double>();
    }
    ch.skeleton.height = j.at("height").get<double>();

    const auto& mesh = j.at("mesh");
    const auto& verts = mesh.at("vertices");
    const int V = static_cast<int>(verts.size());
    ch.mesh.vertices_bind = Tensor({V, 3});
    for (int v = 0; v < V; ++v)
      for (int k = 0; k < 3; ++k)
        ch.mesh.vertices_bind.at(v, k) = verts[static_cast<size_t>(v)][static_cast<size_t>(k)].get<double>();
    for (const auto& f : mesh.at("faces"))
      ch.mesh.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
    const auto& weights = mesh.at("weights");
    if (static_cast<int>(weights.size()) != V)
      throw SchemaViolation(path + ": weights rows must match vertex count");
    ch.mesh.weights.resize(static_cast<size_t>(V));
    for (int v = 0; v < V; ++v) {
      for (const auto& pair : weights[static_cast<size_t>(v)])
        ch.mesh.weights[static_cast<size_t>(v)].emplace_back(pair[0].get<int>(),
                                                             pair[1].get<double>());
    }
    for (const auto& chain : j.at("limb_chains")) {
      std::vector<std::string> names;
      for (const auto& nm : chain) names.push_back(nm.get<std::string>());
      ch.limb_chains.push_back(std::move(names));
    }
  } catch (const json::exception& e) {
    throw SchemaViolation(path + ": " + e.what());
  }
  ch.mesh.bind_inverse = bind_inverse_from_rest(ch.skeleton);
  try {
    ch.validate();
  } catch (const Error& e) {
    throw SchemaViolation(path + ": " + e.what());
  }
  return ch;
}

void save_character(const Character& character, const std::string& path) {
  character.validate();
  json j;
  j["name"] = character.name;
  j["joints"] = json::array();
  for (int i = 0; i < character.skeleton.joint_count(); ++i) {
    json jj;
    jj["name"] = character.skeleton.joint_names[static_cast<size_t>(i)];
    jj["parent"] = character.skeleton.parent[static_cast<size_t>(i)];
    jj["offset"] = {character.skeleton.offsets.at(i, 0), character.skeleton.offsets.at(i, 1),
                    character.skeleton.offsets.at(i, 2)};
    j["joints"].push_back(jj);
  }
  j["height"] = character.skeleton.height;
  json mesh;
  mesh["vertices"] = json::array();
  for (int v = 0; v < character.mesh.vertex_count(); ++v)
    mesh["vertices"].push_back({character.mesh.vertices_bind.at(v, 0),
                                character.mesh.vertices_bind.at(v, 1),
                                character.mesh.vertices_bind.at(v, 2)});
  mesh["faces"] = json::array();
  for (const auto& f : character.mesh.faces) mesh["faces"].push_back({f[0], f[1], f[2]});
  mesh["weights"] = json::array();
  for (const auto& row : character.mesh.weights) {
    json r = json::array();
    for (const auto& [joint, w] : row) r.push_back({json(joint), json(w)});
    mesh["weights"].push_back(r);
  }
  j["mesh"] = std::move(mesh);
  j["limb_chains"] = character.limb_chains;
  write_text(path, j.dump(1));
}

namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_raw(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

constexpr char kMotionMagic[8] = {'M', 'R', 'T', 'M', 'O', 'T', '1', '\0'};
constexpr char kSdfMagic[8] = {'M', 'R', 'T', 'S', 'D', 'F', '1', '\0'};
constexpr char kCkptMagic[8] = {'M', 'R', 'T', 'C', 'K', 'P', '1', '\0'};

}  // namespace

NamedMotion load_motion(const std::string& path) {
  NamedMotion nm;
  if (has_suffix(path, ".mbin")) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMotionMagic, 8) != 0)
      throw SchemaViolation(path + ": not a motion sidecar file");
    std::int32_t T = 0, N = 0, name_len = 0;
    float fps = 0;
    read_raw(f, T);
    read_raw(f, N);
    read_raw(f, fps);
    read_raw(f, name_len);
    if (!f || T < 1 || N < 1 || name_len < 0 || name_len > 4096)
      throw SchemaViolation(path + ": corrupt header");
    nm.character.resize(static_cast<size_t>(name_len));
    f.read(nm.character.data(), name_len);
    nm.motion.fps = fps;
    nm.motion.rot6d = Tensor({T, N, 6});
    nm.motion.root_pos = Tensor({T, 3});
    std::vector<float> buf(static_cast<size_t>(nm.motion.rot6d.size()));
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    for (std::int64_t i = 0; i < nm.motion.rot6d.size(); ++i)
      nm.motion.rot6d[i] = buf[static_cast<size_t>(i)];
    buf.resize(static_cast<size_t>(nm.motion.root_pos.size()));
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    for (std::int64_t i = 0; i < nm.motion.root_pos.size(); ++i)
      nm.motion.root_pos[i] = buf[static_cast<size_t>(i)];
    if (!f) throw SchemaViolation(path + ": truncated data");
  } else {
    const json j = load_json(path);
    try {
      nm.character = j.at("character").get<std::string>();
      nm.motion.fps = j.at("fps").get<double>();
      const int T = j.at("frames").get<int>();
      const auto& r = j.at("rot6d");
      if (static_cast<int>(r.size()) != T) throw SchemaViolation(path + ": frames != len(rot6d)");
      const int N = T > 0 ? static_cast<int>(r[0].size()) : 0;
      nm.motion.rot6d = Tensor({T, N, 6});
      for (int t = 0; t < T; ++t)
        for (int n = 0; n < N; ++n)
          for (int k = 0; k < 6; ++k)
            nm.motion.rot6d.at(t, n, k) =
                r[static_cast<size_t>(t)][static_cast<size_t>(n)][static_cast<size_t>(k)].get<double>();
      const auto& rp = j.at("root_pos");
      nm.motion.root_pos = Tensor({T, 3});
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < 3; ++k)
          nm.motion.root_pos.at(t, k) = rp[static_cast<size_t>(t)][static_cast<size_t>(k)].get<double>();
    } catch (const json::exception& e) {
      throw SchemaViolation(path + ": " + e.what());
    }
  }
  try {
    nm.motion.validate();
  } catch (const Error& e) {
    throw SchemaViolation(path + ": " + e.what());
  }
  return nm;
}

void save_motion(const NamedMotion& nm, const std::string& path) {
  nm.motion.validate();
  const int T = nm.motion.frames(), N = nm.motion.joint_count();
  if (has_suffix(path, ".mbin")) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open " + path + " for writing");
    f.write(kMotionMagic, 8);
    write_raw(f, static_cast<std::int32_t>(T));
    write_raw(f, static_cast<std::int32_t>(N));
    write_raw(f, static_cast<float>(nm.motion.fps));
    write_raw(f, static_cast<std::int32_t>(nm.character.size()));
    f.write(nm.character.data(), static_cast<std::streamsize>(nm.character.size()));
    std::vector<float> buf(static_cast<size_t>(nm.motion.rot6d.size()));
    for (std::int64_t i = 0; i < nm.motion.rot6d.size(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(nm.motion.rot6d[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    buf.resize(static_cast<size_t>(nm.motion.root_pos.size()));
    for (std::int64_t i = 0; i < nm.motion.root_pos.size(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(nm.motion.root_pos[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!f) throw IOError("short write to " + path);
    return;
  }
  json j;
  j["character"] = nm.character;
  j["fps"] = nm.motion.fps;
  j["frames"] = T;
  j["rot6d"] = json::array();
  for (int t = 0; t < T; ++t) {
    json row = json::array();
    for (int n = 0; n < N; ++n) {
      json r6 = json::array();
      for (int k = 0; k < 6; ++k) r6.push_back(nm.motion.rot6d.at(t, n, k));
      row.push_back(std::move(r6));
    }
    j["rot6d"].push_back(std::move(row));
  }
  j["root_pos"] = json::array();
  for (int t = 0; t < T; ++t)
    j["root_pos"].push_back({nm.motion.root_pos.at(t, 0), nm.motion.root_pos.at(t, 1),
                             nm.motion.root_pos.at(t, 2)});
  write_text(path, j.dump());
}

void save_sdf_cache(const SignedDistanceGrid& grid, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open " + path + " for writing");
  f.write(kSdfMagic, 8);
  for (int k = 0; k < 3; ++k) write_raw(f, static_cast<float>(grid.origin[static_cast<size_t>(k)]));
  write_raw(f, static_cast<float>(grid.spacing));
  write_raw(f, static_cast<std::int32_t>(grid.nx));
  write_raw(f, static_cast<std::int32_t>(grid.ny));
  write_raw(f, static_cast<std::int32_t>(grid.nz));
  for (double v : grid.values) write_raw(f, static_cast<float>(v));
  if (!f) throw IOError("short write to " + path);
}

SignedDistanceGrid load_sdf_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kSdfMagic, 8) != 0)
    throw SchemaViolation(path + ": not an SDF cache file");
  SignedDistanceGrid grid;
  float origin[3], spacing;
  std::int32_t dims[3];
  for (auto& o : origin) read_raw(f, o);
  read_raw(f, spacing);
  for (auto& d : dims) read_raw(f, d);
  if (!f || dims[0] < 2 || dims[1] < 2 || dims[2] < 2 || spacing <= 0)
    throw SchemaViolation(path + ": corrupt header");
  grid.origin = {origin[0], origin[1], origin[2]};
  grid.spacing = spacing;
  grid.nx = dims[0];
  grid.ny = dims[1];
  grid.nz = dims[2];
  grid.values.resize(static_cast<size_t>(grid.nx) * grid.ny * grid.nz);
  for (auto& v : grid.values) {
    float x;
    read_raw(f, x);
    v = x;
  }
  if (!f) throw SchemaViolation(path + ": truncated data");
  return grid;
}

// --- Checkpoints -----------------------------------------------------------

void save_checkpoint(const std::string& path, const RetargetModel& model,
                     const Discriminator& disc, std::int64_t step) {
  json header;
  header["version"] = 1;
  header["step"] = step;
  header["hyper"] = {{"input_channels", RetargetModel::kInputChannels},
                     {"hidden", RetargetModel::kHidden},
                     {"latent", RetargetModel::kLatent},
                     {"output_channels", RetargetModel::kOutputChannels}};
  json tensors = json::array();
  std::vector<std::pair<std::string, ad::Var>> params;
  for (auto& p : model.named_params()) params.push_back(p);
  for (auto& p : disc.named_params()) params.push_back(p);
  std::int64_t offset = 0;
  for (const auto& [name, v] : params) {
    json t;
    t["name"] = name;
    t["shape"] = v.value().shape();
    t["offset"] = offset;
    offset += v.value().size();
    tensors.push_back(t);
  }
  header["tensors"] = std::move(tensors);
  const std::string h = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open " + path + " for writing");
  f.write(kCkptMagic, 8);
  write_raw(f, static_cast<std::uint32_t>(h.size()));
  f.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& [name, v] : params)
    f.write(reinterpret_cast<const char*>(v.value().data()),
            static_cast<std::streamsize>(v.value().size() * 8));
  if (!f) throw IOError("short write to " + path);
}

void load_checkpoint(const std::string& path, RetargetModel& model, Discriminator& disc,
                     std::int64_t& step) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IOError("cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw SchemaViolation(path + ": not a checkpoint file");
  std::uint32_t hlen = 0;
  read_raw(f, hlen);
  std::string h(hlen, '\0');
  f.read(h.data(), hlen);
  if (!f) throw SchemaViolation(path + ": truncated header");
  json header = json::parse(h, nullptr, false);
  if (header.is_discarded()) throw SchemaViolation(path + ": corrupt header JSON");
  if (header.value("version", 0) != 1)
    throw SchemaViolation(path + ": unsupported checkpoint version");
  step = header.value("step", std::int64_t(0));

  model.init(0);
  disc.init(0);
  std::vector<std::pair<std::string, ad::Var>> params;
  for (auto& p : model.named_params()) params.push_back(p);
  for (auto& p : disc.named_params()) params.push_back(p);

  size_t i = 0;
  for (const auto& t : header.at("tensors")) {
    if (i >= params.size()) throw SchemaViolation(path + ": too many tensors");
    auto& [name, v] = params[i++];
    if (t.at("name").get<std::string>() != name)
      throw SchemaViolation(path + ": tensor name mismatch, expected " + name);
    const Shape shape = t.at("shape").get<Shape>();
    if (shape != v.value().shape()) throw SchemaViolation(path + ": tensor shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(v.value_mut().data()),
           static_cast<std::streamsize>(v.value().size() * 8));
  }
  if (i != params.size()) throw SchemaViolation(path + ": missing tensors");
  if (!f) throw SchemaViolation(path + ": truncated data");
}

// --- TrainConfig -----------------------------------------------------------

TrainConfig TrainConfig::pretrain_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.stage = "finetune";
  c.lr = 1e-4;
  c.epochs = 25;
  c.batch_size = 4;
  return c;
}

void TrainConfig::validate() const {
  if (lr <= 0) throw SchemaViolation("config: lr must be positive");
  if (epochs <= 0) throw SchemaViolation("config: epochs must be positive");
  if (batch_size <= 0) throw SchemaViolation("config: batch_size must be positive");
  if (window <= 0) throw SchemaViolation("config: window must be positive");
  if (sem_stride <= 0) throw SchemaViolation("config: sem_stride must be positive");
  if (views <= 0) throw SchemaViolation("config: views must be positive");
  if (image_size <= 0 || image_size % 8 != 0)
    throw SchemaViolation("config: image_size must be a positive multiple of 8");
  if (stage != "pretrain" && stage != "finetune")
    throw SchemaViolation("config: stage must be pretrain or finetune");
  if (embedder != "mock" && embedder != "vlm")
    throw SchemaViolation("config: embedder must be mock or vlm");
}

namespace {

void apply_config_entry(TrainConfig& c, const std::string& key, const json& v) {
  try {
    if (key == "stage") c.stage = v.get<std::string>();
    else if (key == "lr") c.lr = v.get<double>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "window") c.window = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "sem_stride") c.sem_stride = v.get<int>();
    else if (key == "views") c.views = v.get<int>();
    else if (key == "image_size") c.image_size = v.get<int>();
    else if (key == "render_tau_scale") c.render_tau_scale = v.get<double>();
    else if (key == "max_steps") c.max_steps = v.get<int>();
    else if (key == "deterministic") c.deterministic = v.get<bool>();
    else if (key == "direct_iters") c.direct_iters = v.get<int>();
    else if (key == "direct_lr") c.direct_lr = v.get<double>();
    else if (key == "embedder") c.embedder = v.get<std::string>();
    else if (key == "adv_convention") {
      const std::string s = v.get<std::string>();
      if (s == "saturating") c.adv_convention = AdvConvention::saturating;
      else if (s == "nonsaturating") c.adv_convention = AdvConvention::nonsaturating;
      else throw SchemaViolation("config: adv_convention must be saturating or nonsaturating");
    } else if (key == "weights.lambda_r") c.weights.lambda_r = v.get<double>();
    else if (key == "weights.lambda_c") c.weights.lambda_c = v.get<double>();
    else if (key == "weights.lambda_a") c.weights.lambda_a = v.get<double>();
    else if (key == "weights.lambda_j") c.weights.lambda_j = v.get<double>();
    else if (key == "weights.lambda_p") c.weights.lambda_p = v.get<double>();
    else if (key == "weights.lambda_s") c.weights.lambda_s = v.get<double>();
    else if (key == "pen_ramp.start") c.pen_ramp.start = v.get<double>();
    else if (key == "pen_ramp.peak") c.pen_ramp.peak = v.get<double>();
    else if (key == "pen_ramp.ramp_epochs") c.pen_ramp.ramp_epochs = v.get<int>();
    else throw SchemaViolation("config: unknown key '" + key + "'");
  } catch (const json::exception&) {
    throw SchemaViolation("config: bad value for key '" + key + "'");
  }
}

void apply_json_config(TrainConfig& c, const json& j, const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    const std::string full = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object())
      apply_json_config(c, value, full);
    else
      apply_config_entry(c, full, value);
  }
}

// Minimal TOML subset: [table] headers, key = value with strings, numbers
// and booleans. Comments start with '#'.
void apply_toml_config(TrainConfig& c, std::istream& in) {
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw SchemaViolation("config line " + std::to_string(lineno) + ": bad table header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaViolation("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    json v;
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      v = value.substr(1, value.size() - 2);
    else if (value == "true")
      v = true;
    else if (value == "false")
      v = false;
    else {
      try {
        if (value.find_first_of(".eE") != std::string::npos)
          v = std::stod(value);
        else
          v = static_cast<std::int64_t>(std::stoll(value));
      } catch (...) {
        throw SchemaViolation("config line " + std::to_string(lineno) + ": bad value '" + value + "'");
      }
    }
    apply_config_entry(c, full, v);
  }
}

}  // namespace

void TrainConfig::load_file(const std::string& path) {
  if (has_suffix(path, ".json")) {
    apply_json_config(*this, load_json(path), "");
  } else {
    std::ifstream f(path);
    if (!f) throw IOError("cannot open " + path);
    apply_toml_config(*this, f);
  }
  validate();
}

}  // namespace mrt
