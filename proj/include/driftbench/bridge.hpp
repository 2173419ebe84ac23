#pragma once

// Wire protocol to masked-LM backends, the deterministic mock backend, and the
// client used by evaluation (validation, caching, retries, call log).
//
//   GET  /info        -> {"name", "vocab_size", "mask_token_id", "mask_token"}
//   POST /tokenize    {"text", "add_prefix_space"} -> {"token_ids": [...]}
//   POST /detokenize  {"token_ids": [...]} -> {"text"}
//   POST /fill_mask   {"text", "top_n", "query_token_ids": [...]}
//                     -> {"masks": [{"position", "top": [[id, logp], ...],
//                                    "queried": {"id": logp, ...}}]}
//
// Log-probabilities are natural logarithms.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftbench/tokenizer.hpp"

namespace driftbench {

struct BackendInfo {
  std::string name;
  std::size_t vocab_size = 0;
  TokenId mask_token_id = -1;
  std::string mask_token;
};

struct FillMaskRequest {
  std::string text;
  std::size_t top_n = 10;
  std::vector<TokenId> query_token_ids;
};

struct MaskDistribution {
  std::size_t position = 0;
  std::vector<std::pair<TokenId, double>> top;  // descending log-prob
  std::map<TokenId, double> queried;

  double logprob_of(TokenId id) const;  // queried first, then top; throws if absent
};

// Transport-level backend. Implementations must be safe for concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendInfo info() = 0;
  virtual std::vector<TokenId> tokenize(const std::string& text, bool add_prefix_space) = 0;
  virtual std::string detokenize(std::span<const TokenId> ids) = 0;
  virtual std::vector<MaskDistribution> fill_mask(const FillMaskRequest& req) = 0;
};

// Wire (de)serialization, shared by the HTTP client and server.
nlohmann::json to_wire(const BackendInfo& info);
BackendInfo info_from_wire(const nlohmann::json& j);
nlohmann::json to_wire(const FillMaskRequest& req);
FillMaskRequest fill_mask_request_from_wire(const nlohmann::json& j);
nlohmann::json to_wire(const std::vector<MaskDistribution>& masks);
std::vector<MaskDistribution> masks_from_wire(const nlohmann::json& j);

// Counts mask-token occurrences in text.
std::size_t count_masks(std::string_view text, std::string_view mask_token);

// In-process backend over a JSON fixture:
//   {"header": {"vocab": [...], "mask_token_id": N, "name"?, "mask_token"?, "unk_token"?},
//    "contexts": {context: {token: prob}}, "fallback_unigram": {token: prob}}
// A context key is the request text for single-mask texts, or "<text>||<i>"
// for mask i of a multi-mask text. Listed probabilities are used as-is; the
// remaining mass is spread over the other tokens in proportion to their
// fallback weight plus kMockFloorWeight, so every distribution is complete.
class MockBackend : public Backend {
 public:
  static constexpr double kMockFloorWeight = 1e-6;

  static std::shared_ptr<MockBackend> load(const std::filesystem::path& fixture);
  static std::shared_ptr<MockBackend> from_json(const std::string& text,
                                                const std::string& source = "<memory>");

  BackendInfo info() override;
  std::vector<TokenId> tokenize(const std::string& text, bool add_prefix_space) override;
  std::string detokenize(std::span<const TokenId> ids) override;
  std::vector<MaskDistribution> fill_mask(const FillMaskRequest& req) override;

  // Full distribution (probabilities, indexed by token id) for one mask.
  std::vector<double> distribution(const std::string& text, std::size_t position,
                                   std::size_t mask_total) const;

  FixtureTokenizer& tokenizer() { return *tokenizer_; }

 private:
  MockBackend() = default;

  std::string name_;
  std::shared_ptr<FixtureTokenizer> tokenizer_;
  std::unordered_map<std::string, std::vector<std::pair<TokenId, double>>> contexts_;
  std::vector<double> fallback_;  // weight per token id
  mutable std::mutex tok_mu_;
};

// Client of a remote backend speaking the wire protocol over HTTP.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(std::string base_url, int timeout_seconds = 60);

  BackendInfo info() override;
  std::vector<TokenId> tokenize(const std::string& text, bool add_prefix_space) override;
  std::string detokenize(std::span<const TokenId> ids) override;
  std::vector<MaskDistribution> fill_mask(const FillMaskRequest& req) override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body);
  nlohmann::json get(const std::string& path);

  std::string base_url_;
  int timeout_seconds_;
};

// "mock:<fixture>" or an http(s) URL.
std::shared_ptr<Backend> make_backend(const std::string& endpoint);

// Serves any Backend over the wire protocol. Used for the mock in tests and by
// the `serve-mock` CLI verb.
class WireServer {
 public:
  explicit WireServer(std::shared_ptr<Backend> backend);
  ~WireServer();
  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks the calling thread.
  void listen_blocking(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

struct BackendDescriptor {
  std::string name;
  std::string endpoint;
  std::size_t vocab_size = 0;
  TokenId mask_token_id = -1;
  std::string mask_token;
};

// Persistent response cache keyed by (backend name, request hash).
class ResponseCache {
 public:
  std::optional<nlohmann::json> get(const std::string& key) const;
  void put(const std::string& key, nlohmann::json value);
  std::size_t size() const;

  void load(const std::filesystem::path& path);
  // Sorted by key, so identical contents give identical files.
  void save(const std::filesystem::path& path) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> entries_;
};

struct CallRecord {
  std::string endpoint;
  std::string text;
  bool cache_hit = false;
};

struct ClientOptions {
  std::size_t max_in_flight = 8;
  int retries = 3;
  std::chrono::milliseconds retry_backoff{200};
  bool use_cache = true;
};

// Entry point for evaluation. Performs the /info handshake, validates every
// response against the protocol invariants, retries transport failures and
// records every call issued through it.
class BridgeClient : public Tokenizer {
 public:
  BridgeClient(std::string name, std::shared_ptr<Backend> backend, ClientOptions options = {},
               std::shared_ptr<ResponseCache> cache = nullptr);

  const BackendDescriptor& descriptor() const { return descriptor_; }

  // expected_masks defaults to the number of mask tokens in the text.
  std::vector<MaskDistribution> fill_mask(const FillMaskRequest& req,
                                          std::optional<std::size_t> expected_masks = {});
  std::vector<TokenId> tokenize(const std::string& text, bool add_prefix_space);
  std::string detokenize(std::span<const TokenId> ids);

  // Tokenizer interface.
  std::string provider_id() const override { return "backend:" + descriptor_.name; }
  std::size_t vocab_size() const override { return descriptor_.vocab_size; }
  TokenId mask_token_id() const override { return descriptor_.mask_token_id; }
  std::string mask_token() const override { return descriptor_.mask_token; }
  std::vector<TokenId> encode(std::string_view text, bool add_prefix_space) override {
    return tokenize(std::string(text), add_prefix_space);
  }
  std::string decode(std::span<const TokenId> ids) override { return detokenize(ids); }

  std::vector<CallRecord> call_log() const;
  std::size_t fill_mask_calls() const;
  void clear_call_log();

  std::shared_ptr<ResponseCache> cache() const { return cache_; }

 private:
  template <typename F>
  auto with_retries(F&& f) -> decltype(f());
  void log(std::string endpoint, std::string text, bool hit);
  void acquire();
  void release();

  BackendDescriptor descriptor_;
  std::shared_ptr<Backend> backend_;
  ClientOptions options_;
  std::shared_ptr<ResponseCache> cache_;

  mutable std::mutex log_mu_;
  std::vector<CallRecord> calls_;

  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;
};

// Throws ProtocolError unless top is sorted descending and all log-probs are
// <= 1e-6 and every requested id is present in queried.
void validate_distribution(const MaskDistribution& d, std::span<const TokenId> requested);

}  // namespace driftbench
