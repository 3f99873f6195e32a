#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mrt/autodiff.hpp"
#include "mrt/render.hpp"

namespace mrt {

/// Two-round guiding question protocol. `[answer1]` in the second template
/// is replaced by the first round's answer.
struct PromptTemplate {
  std::string q1 = "Where are the hands of the character?";
  std::string q2_template = "[answer1] What is the character in the image doing?";

  std::string second_question(const std::string& answer1) const;
};

/// Fixed-width semantic embedding of a rendered motion frame.
struct SemanticEmbedding {
  Tensor vector;
  std::string backend_id;
};

/// Deterministic differentiable stand-in for the vision-language supervisor:
/// each view is average-pooled to 8x8, flattened and concatenated.
class MockEmbedder {
 public:
  explicit MockEmbedder(int views = 3) : views_(views) {}

  int width() const { return views_ * 64; }
  std::string backend_id() const { return "mock-pool8"; }

  SemanticEmbedding embed(const RenderedFrame& frame) const;
  ad::Var embed(const std::vector<ad::Var>& view_images) const;  // -> (views*64)

 private:
  int views_;
};

/// JSON-over-HTTP client for an external vision-language service. Not
/// differentiable through the wire; used for evaluation (VQA, ITM, embed).
class VlmClient {
 public:
  struct Options {
    std::string endpoint;       // e.g. http://127.0.0.1:8080
    double timeout_seconds = 30.0;
    int max_attempts = 3;
    double backoff_seconds = 0.1;
    int beam_width = 5;
    double length_penalty = 1.0;
  };

  explicit VlmClient(Options opts);

  /// Service-side combined embedding of the given views.
  SemanticEmbedding embed(const std::vector<Tensor>& view_images, const PromptTemplate& prompt);

  struct VqaResult {
    std::string answer1;
    std::string answer;
  };
  /// Round 1 asks q1; round 2 asks q2 with answer1 spliced in.
  VqaResult guided_vqa(const Tensor& image, const PromptTemplate& prompt);

  /// Image-text matching probability in [0,1].
  double itm_score(const Tensor& image, const std::string& text);

  const Options& options() const { return opts_; }

 private:
  std::string post(const std::string& body);
  Options opts_;
  std::string host_;
  int port_ = 0;
  std::string path_ = "/";
  std::optional<int> embed_width_;
};

}  // namespace mrt
