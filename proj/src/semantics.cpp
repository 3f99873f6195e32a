#include "mrt/semantics.hpp"

#include <chrono>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mrt/png.hpp"

namespace mrt {

using nlohmann::json;

std::string PromptTemplate::second_question(const std::string& answer1) const {
  const std::string slot = "[answer1]";
  const auto pos = q2_template.find(slot);
  if (pos == std::string::npos) return answer1 + " " + q2_template;
  std::string out = q2_template;
  out.replace(pos, slot.size(), answer1);
  return out;
}

namespace {

void check_pool_shape(const Tensor& img) {
  if (img.rank() != 2 || img.dim(0) % 8 != 0 || img.dim(1) % 8 != 0)
    throw ShapeMismatch("mock_embed: image dims must be divisible by 8");
}

void pool8(const Tensor& img, double* out) {  // out: 64 values, row-major 8x8
  const int H = img.dim(0), W = img.dim(1);
  const int bh = H / 8, bw = W / 8;
  const double inv = 1.0 / (bh * bw);
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx) {
      double acc = 0;
      for (int y = by * bh; y < (by + 1) * bh; ++y)
        for (int x = bx * bw; x < (bx + 1) * bw; ++x) acc += img.at(y, x);
      out[by * 8 + bx] = acc * inv;
    }
}

std::string base64_encode(const std::vector<std::uint8_t>& data) {
  static const char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
  }
  if (i + 1 == data.size()) {
    const std::uint32_t v = data[i] << 16;
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == data.size()) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

}  // namespace

SemanticEmbedding MockEmbedder::embed(const RenderedFrame& frame) const {
  if (static_cast<int>(frame.images.size()) != views_)
    throw ShapeMismatch("mock_embed: expected " + std::to_string(views_) + " views");
  SemanticEmbedding e;
  e.backend_id = backend_id();
  e.vector = Tensor({width()});
  for (int v = 0; v < views_; ++v) {
    check_pool_shape(frame.images[static_cast<size_t>(v)]);
    pool8(frame.images[static_cast<size_t>(v)], e.vector.data() + v * 64);
  }
  return e;
}

ad::Var MockEmbedder::embed(const std::vector<ad::Var>& view_images) const {
  if (static_cast<int>(view_images.size()) != views_)
    throw ShapeMismatch("mock_embed: expected " + std::to_string(views_) + " views");
  Tensor out({width()});
  for (int v = 0; v < views_; ++v) {
    check_pool_shape(view_images[static_cast<size_t>(v)].value());
    pool8(view_images[static_cast<size_t>(v)].value(), out.data() + v * 64);
  }
  const int views = views_;
  return ad::make_op("mock_embed", std::move(out), view_images, [views](ad::Node& n) {
    for (int v = 0; v < views; ++v) {
      const ad::NodePtr& p = n.parents[static_cast<size_t>(v)];
      if (!p->requires_grad) continue;
      Tensor& g = p->ensure_grad();
      const int H = p->value.dim(0), W = p->value.dim(1);
      const int bh = H / 8, bw = W / 8;
      const double inv = 1.0 / (bh * bw);
      for (int by = 0; by < 8; ++by)
        for (int bx = 0; bx < 8; ++bx) {
          const double go = n.grad[v * 64 + by * 8 + bx] * inv;
          if (go == 0.0) continue;
          for (int y = by * bh; y < (by + 1) * bh; ++y)
            for (int x = bx * bw; x < (bx + 1) * bw; ++x) g.at(y, x) += go;
        }
    }
  });
}

VlmClient::VlmClient(Options opts) : opts_(std::move(opts)) {
  std::string url = opts_.endpoint;
  const std::string scheme = "http://";
  if (url.rfind(scheme, 0) != 0)
    throw ServiceProtocolError("vlm endpoint must start with http://: " + url);
  url = url.substr(scheme.size());
  const auto slash = url.find('/');
  std::string hostport = slash == std::string::npos ? url : url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
  const auto colon = hostport.find(':');
  host_ = colon == std::string::npos ? hostport : hostport.substr(0, colon);
  port_ = colon == std::string::npos ? 80 : std::stoi(hostport.substr(colon + 1));
  if (host_.empty()) throw ServiceProtocolError("vlm endpoint has no host: " + opts_.endpoint);
}

std::string VlmClient::post(const std::string& body) {
  std::string last_error;
  for (int attempt = 0; attempt < opts_.max_attempts; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::duration<double>(
          opts_.backoff_seconds * static_cast<double>(1 << (attempt - 1))));
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(std::chrono::duration<double>(opts_.timeout_seconds));
    cli.set_read_timeout(std::chrono::duration<double>(opts_.timeout_seconds));
    auto res = cli.Post(path_, body, "application/json");
    if (!res) {
      last_error = "connection failed";
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    return res->body;
  }
  throw ServiceUnavailable("vlm service at " + opts_.endpoint + ": " + last_error);
}

namespace {
json parse_response(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ServiceProtocolError("vlm response is not a JSON object");
  return j;
}
}  // namespace

SemanticEmbedding VlmClient::embed(const std::vector<Tensor>& view_images,
                                   const PromptTemplate& prompt) {
  json req;
  req["images"] = json::array();
  for (const auto& img : view_images) req["images"].push_back(base64_encode(encode_png_gray(img)));
  req["mode"] = "embed";
  req["prompt"] = prompt.q1;
  req["beam_width"] = opts_.beam_width;
  req["length_penalty"] = opts_.length_penalty;
  const json j = parse_response(post(req.dump()));
  if (!j.contains("embedding") || !j["embedding"].is_array())
    throw ServiceProtocolError("vlm embed response lacks 'embedding'");
  const auto& arr = j["embedding"];
  const int k = static_cast<int>(arr.size());
  if (embed_width_ && *embed_width_ != k)
    throw EmbeddingWidthMismatch("vlm embedding width changed from " +
                                 std::to_string(*embed_width_) + " to " + std::to_string(k));
  embed_width_ = k;
  SemanticEmbedding e;
  e.backend_id = j.value("model_id", std::string("vlm"));
  e.vector = Tensor({k});
  for (int i = 0; i < k; ++i) {
    if (!arr[static_cast<size_t>(i)].is_number())
      throw ServiceProtocolError("vlm embedding entry is not a number");
    e.vector[i] = arr[static_cast<size_t>(i)].get<double>();
  }
  return e;
}

VlmClient::VqaResult VlmClient::guided_vqa(const Tensor& image, const PromptTemplate& prompt) {
  const std::string b64 = base64_encode(encode_png_gray(image));
  auto ask = [&](const std::string& question) {
    json req;
    req["images"] = json::array({b64});
    req["mode"] = "vqa";
    req["prompt"] = question;
    req["beam_width"] = opts_.beam_width;
    req["length_penalty"] = opts_.length_penalty;
    const json j = parse_response(post(req.dump()));
    if (!j.contains("answer") || !j["answer"].is_string())
      throw ServiceProtocolError("vlm vqa response lacks 'answer'");
    return j["answer"].get<std::string>();
  };
  VqaResult r;
  r.answer1 = ask(prompt.q1);
  r.answer = ask(prompt.second_question(r.answer1));
  return r;
}

double VlmClient::itm_score(const Tensor& image, const std::string& text) {
  json req;
  req["images"] = json::array({base64_encode(encode_png_gray(image))});
  req["mode"] = "itm";
  req["text"] = text;
  req["beam_width"] = opts_.beam_width;
  req["length_penalty"] = opts_.length_penalty;
  const json j = parse_response(post(req.dump()));
  if (!j.contains("score") || !j["score"].is_number())
    throw ServiceProtocolError("vlm itm response lacks 'score'");
  const double s = j["score"].get<double>();
  if (s < 0.0 || s > 1.0)
    throw ServiceProtocolError("vlm itm score out of range: " + std::to_string(s));
  return s;
}

}  // namespace mrt
