#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ag/affordance_memory.hpp"
#include "ag/chat.hpp"
#include "ag/scene_io.hpp"
#include "ag/synthetic.hpp"

namespace ag {

struct BoundingBox2D {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  int part_index = 1;  // 1 = operable core, 0 = non-operable companion

  void validate(int width, int height) const;
};

struct GroundingRequest {
  const Frame* query_frame = nullptr;
  std::vector<const MemoryExemplar*> exemplars;  // may be empty (text-only fallback)
  std::string interaction_label;
  std::string instruction;  // full prompt text; decides adversarial vs positive-only
};

struct SelectionRequest {
  std::string graph_json;
  Image8 topdown_render;             // rasterized map (blank for mocks)
  std::map<int, Image8> node_crops;
  std::string instruction;           // original query text
};

class VlmGrounder {
 public:
  virtual ~VlmGrounder() = default;
  virtual std::vector<BoundingBox2D> ground(const GroundingRequest& request) = 0;
};

class LlmSelector {
 public:
  virtual ~LlmSelector() = default;
  /// Returns a node id in [1, n_candidates].
  virtual int select(const SelectionRequest& request, int n_candidates) = 0;
};

class Segmenter2D {
 public:
  virtual ~Segmenter2D() = default;
  virtual std::vector<Mask> segment_by_text(const Frame& frame, const std::string& label) = 0;
  /// box.part_index must be 1; negative boxes are never segmented.
  virtual Mask segment_by_box(const Frame& frame, const BoundingBox2D& box) = 0;
};

struct BackendSet {
  std::shared_ptr<ChatClient> chat;  // stage-1 parsing; null = heuristic parser
  std::shared_ptr<VlmGrounder> grounder;
  std::shared_ptr<LlmSelector> selector;
  std::shared_ptr<Segmenter2D> segmenter;
};

// ---- HTTP (OpenAI-compatible chat completions) -----------------------------

struct HttpConfig {
  std::string endpoint;  // e.g. "http://host:8000/v1"
  std::string api_key;
  std::string model;
  int timeout_seconds = 120;
  int max_retries = 2;              // attempts = max_retries + 1
  int backoff_base_ms = 1000;       // 1s, then 2s
  static HttpConfig from_env();     // AFFGROUND_ENDPOINT / _API_KEY / _MODEL
};

class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpConfig config);
  std::string complete(const std::vector<ChatMessage>& messages) override;

 private:
  HttpConfig config_;
};

// Response parsers shared by the HTTP backends and the replay mock.
std::vector<BoundingBox2D> parse_boxes_response(const std::string& text);
int parse_selection_response(const std::string& text, int n_candidates);

/// Grounder/selector/segmenter speaking the chat protocol. The segmenter
/// expects a JSON array of base64 PNG masks.
BackendSet make_http_backends(const HttpConfig& config);

// ---- deterministic mocks ----------------------------------------------------

/// Ground truth a mock answers from: a generated scene directory.
struct MockScenario {
  SceneSequence scene;
  std::vector<SceneInstance> instances;
  std::map<std::string, std::string> query_text_to_id;   // text -> query_id
  std::map<std::string, std::vector<int>> gt_by_query;   // query_id -> indices

  static MockScenario load(const std::filesystem::path& scene_root);
};

struct MockOptions {
  bool noisy_segmenter = false;  // add one coarse spurious mask per frame
  double bbox_jitter_px = 2.0;
};

BackendSet make_oracle_backends(std::shared_ptr<const MockScenario> scenario,
                                const MockOptions& options = {});

/// Replays recorded responses verbatim through the production parsers.
/// File schema: {"ground": [{"scene_id", "frame_index", "label", "response"}],
///               "select": [{"instruction", "response"}]}
BackendSet make_replay_backends(const std::filesystem::path& replay_file,
                                std::shared_ptr<const MockScenario> scenario_for_segmenter);

/// In-memory scripted chat, for tests.
class ScriptedChatClient : public ChatClient {
 public:
  explicit ScriptedChatClient(std::vector<std::string> responses)
      : responses_(std::move(responses)) {}
  std::string complete(const std::vector<ChatMessage>&) override;
  int calls() const { return static_cast<int>(next_.load()); }

 private:
  std::vector<std::string> responses_;
  std::atomic<std::size_t> next_{0};
};

// ---- bounded-concurrency helper ----------------------------------------------

/// Applies fn to every index in [0, count); results keyed by index so output
/// order is independent of completion order.
template <typename Result>
std::vector<Result> parallel_map(std::size_t count, int max_in_flight,
                                 const std::function<Result(std::size_t)>& fn) {
  std::vector<Result> results(count);
  if (count == 0) return results;
  if (max_in_flight <= 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        results[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const int n_threads = std::min<std::size_t>(static_cast<std::size_t>(max_in_flight), count);
  threads.reserve(static_cast<std::size_t>(n_threads));
  for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

}  // namespace ag
