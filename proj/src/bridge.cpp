#include "driftbench/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <httplib.h>

#include "driftbench/errors.hpp"
#include "driftbench/hashing.hpp"
#include "driftbench/io.hpp"

namespace driftbench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kLogProbTolerance = 1e-6;
constexpr double kRowSumTolerance = 1e-9;
constexpr std::string_view kPositionSeparator = "||";

// -inf travels as null.
json logp_to_wire(double v) { return std::isinf(v) ? json(nullptr) : json(v); }
double logp_from_wire(const json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

template <typename T>
T required(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw ProtocolError(std::string("missing field '") + field + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ProtocolError(std::string("field '") + field + "' has the wrong type");
  }
}

std::size_t line_of_key(const std::string& raw, const std::string& key) {
  auto quoted = json(key).dump();
  auto pos = raw.find(quoted);
  if (pos == std::string::npos) return 0;
  return static_cast<std::size_t>(std::count(raw.begin(), raw.begin() + static_cast<long>(pos), '\n')) + 1;
}

}  // namespace

double MaskDistribution::logprob_of(TokenId id) const {
  if (auto it = queried.find(id); it != queried.end()) return it->second;
  for (const auto& [tid, lp] : top) {
    if (tid == id) return lp;
  }
  throw ProtocolError("no log-probability for token " + std::to_string(id));
}

json to_wire(const BackendInfo& info) {
  return {{"name", info.name},
          {"vocab_size", info.vocab_size},
          {"mask_token_id", info.mask_token_id},
          {"mask_token", info.mask_token}};
}

BackendInfo info_from_wire(const json& j) {
  return {required<std::string>(j, "name"), required<std::size_t>(j, "vocab_size"),
          required<TokenId>(j, "mask_token_id"), required<std::string>(j, "mask_token")};
}

json to_wire(const FillMaskRequest& req) {
  return {{"text", req.text}, {"top_n", req.top_n}, {"query_token_ids", req.query_token_ids}};
}

FillMaskRequest fill_mask_request_from_wire(const json& j) {
  FillMaskRequest r;
  r.text = required<std::string>(j, "text");
  r.top_n = required<std::size_t>(j, "top_n");
  if (j.contains("query_token_ids")) r.query_token_ids = required<std::vector<TokenId>>(j, "query_token_ids");
  if (r.top_n < 1) throw ProtocolError("field 'top_n' must be >= 1");
  return r;
}

json to_wire(const std::vector<MaskDistribution>& masks) {
  json arr = json::array();
  for (const auto& m : masks) {
    json top = json::array();
    for (const auto& [id, lp] : m.top) top.push_back(json::array({id, logp_to_wire(lp)}));
    json queried = json::object();
    for (const auto& [id, lp] : m.queried) queried[std::to_string(id)] = logp_to_wire(lp);
    arr.push_back({{"position", m.position}, {"top", std::move(top)}, {"queried", std::move(queried)}});
  }
  return {{"masks", std::move(arr)}};
}

std::vector<MaskDistribution> masks_from_wire(const json& j) {
  std::vector<MaskDistribution> out;
  const auto& masks = j.at("masks");
  if (!masks.is_array()) throw ProtocolError("'masks' is not an array");
  for (const auto& m : masks) {
    MaskDistribution d;
    d.position = required<std::size_t>(m, "position");
    for (const auto& pair : m.at("top")) {
      if (!pair.is_array() || pair.size() != 2) throw ProtocolError("malformed top entry");
      d.top.emplace_back(pair[0].get<TokenId>(), logp_from_wire(pair[1]));
    }
    for (const auto& [k, v] : m.at("queried").items()) {
      d.queried[static_cast<TokenId>(std::stol(k))] = logp_from_wire(v);
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::size_t count_masks(std::string_view text, std::string_view mask_token) {
  std::size_t n = 0;
  for (auto pos = text.find(mask_token); pos != std::string_view::npos;
       pos = text.find(mask_token, pos + mask_token.size())) {
    ++n;
  }
  return n;
}

void validate_distribution(const MaskDistribution& d, std::span<const TokenId> requested) {
  for (std::size_t i = 0; i < d.top.size(); ++i) {
    double lp = d.top[i].second;
    if (std::isnan(lp) || lp > kLogProbTolerance) {
      throw ProtocolError("log-probability out of range in top list");
    }
    if (i > 0 && lp > d.top[i - 1].second) throw ProtocolError("top list not sorted descending");
  }
  for (const auto& [id, lp] : d.queried) {
    if (std::isnan(lp) || lp > kLogProbTolerance) {
      throw ProtocolError("queried log-probability out of range for token " + std::to_string(id));
    }
  }
  for (auto id : requested) {
    if (!d.queried.count(id)) {
      throw ProtocolError("requested token " + std::to_string(id) + " missing from 'queried'");
    }
  }
}

// ---------------------------------------------------------------------------
// MockBackend

std::shared_ptr<MockBackend> MockBackend::load(const fs::path& fixture) {
  if (!fs::exists(fixture)) throw LoadError("mock fixture not found: " + fixture.string());
  auto m = from_json(read_file(fixture), fixture.string());
  if (m->name_.empty()) m->name_ = fixture.stem().string();
  return m;
}

std::shared_ptr<MockBackend> MockBackend::from_json(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line
    auto upto = std::min(e.byte, text.size());
    auto line = static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n')) + 1;
    throw LoadError(source + ": invalid JSON: " + e.what(), line);
  }
  std::shared_ptr<MockBackend> m(new MockBackend());
  try {
    const auto& header = j.at("header");
    auto vocab = header.at("vocab").get<std::vector<std::string>>();
    auto mask_id = header.at("mask_token_id").get<TokenId>();
    if (mask_id < 0 || static_cast<std::size_t>(mask_id) >= vocab.size()) {
      throw LoadError(source + ": mask_token_id outside vocabulary", line_of_key(text, "mask_token_id"));
    }
    auto mask_token = header.value("mask_token", vocab[static_cast<std::size_t>(mask_id)]);
    if (vocab[static_cast<std::size_t>(mask_id)] != mask_token) {
      throw LoadError(source + ": mask_token does not match vocab[mask_token_id]", line_of_key(text, "mask_token"));
    }
    m->name_ = header.value("name", "");
    m->tokenizer_ = std::make_shared<FixtureTokenizer>(
        vocab, mask_token, header.value("unk_token", "<unk>"),
        "mock:" + sha256_hex(json(vocab).dump()).substr(0, 12));

    auto row = [&](const json& probs, const std::string& where) {
      std::vector<std::pair<TokenId, double>> out;
      double sum = 0.0;
      for (const auto& [tok, p] : probs.items()) {
        TokenId id = m->tokenizer_->id_of(tok);
        if (id < 0) throw LoadError(source + ": unknown token '" + tok + "' in " + where, line_of_key(text, where));
        double v = p.get<double>();
        if (!(v >= 0.0) || v > 1.0) {
          throw LoadError(source + ": probability outside [0,1] for '" + tok + "' in " + where,
                          line_of_key(text, where));
        }
        sum += v;
        out.emplace_back(id, v);
      }
      if (sum > 1.0 + kRowSumTolerance) {
        throw LoadError(source + ": probabilities in " + where + " sum to " + format_double(sum) + " > 1",
                        line_of_key(text, where));
      }
      return out;
    };

    for (const auto& [ctx, probs] : j.at("contexts").items()) {
      m->contexts_[ctx] = row(probs, ctx);
    }
    m->fallback_.assign(vocab.size(), 0.0);
    if (j.contains("fallback_unigram")) {
      for (auto [id, p] : row(j.at("fallback_unigram"), "fallback_unigram")) {
        m->fallback_[static_cast<std::size_t>(id)] = p;
      }
    }
  } catch (const json::exception& e) {
    throw LoadError(source + ": malformed fixture: " + e.what());
  }
  return m;
}

BackendInfo MockBackend::info() {
  return {name_, tokenizer_->vocab_size(), tokenizer_->mask_token_id(), tokenizer_->mask_token()};
}

std::vector<TokenId> MockBackend::tokenize(const std::string& text, bool add_prefix_space) {
  return tokenizer_->encode(text, add_prefix_space);
}

std::string MockBackend::detokenize(std::span<const TokenId> ids) {
  try {
    return tokenizer_->decode(ids);
  } catch (const std::out_of_range& e) {
    throw ProtocolError(e.what());
  }
}

std::vector<double> MockBackend::distribution(const std::string& text, std::size_t position,
                                              std::size_t mask_total) const {
  std::string key = mask_total == 1 ? text : text + std::string(kPositionSeparator) + std::to_string(position);
  std::vector<double> p(tokenizer_->vocab_size(), 0.0);
  std::vector<bool> listed(p.size(), false);
  double listed_mass = 0.0;
  if (auto it = contexts_.find(key); it != contexts_.end()) {
    for (auto [id, prob] : it->second) {
      p[static_cast<std::size_t>(id)] = prob;
      listed[static_cast<std::size_t>(id)] = true;
      listed_mass += prob;
    }
  }
  double rest = std::max(0.0, 1.0 - listed_mass);
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!listed[i]) weight_sum += fallback_[i] + kMockFloorWeight;
  }
  if (weight_sum > 0.0 && rest > 0.0) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!listed[i]) p[i] = rest * (fallback_[i] + kMockFloorWeight) / weight_sum;
    }
  }
  return p;
}

std::vector<MaskDistribution> MockBackend::fill_mask(const FillMaskRequest& req) {
  if (req.top_n < 1) throw ProtocolError("top_n must be >= 1");
  std::string text = trim(req.text);
  std::vector<TokenId> ids = tokenizer_->encode(text, false);
  std::size_t masks = static_cast<std::size_t>(std::count(ids.begin(), ids.end(), tokenizer_->mask_token_id()));
  if (masks == 0) throw ProtocolError("text contains no mask token");
  for (auto id : req.query_token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokenizer_->vocab_size()) {
      throw ProtocolError("query token id " + std::to_string(id) + " outside vocabulary");
    }
  }

  std::vector<MaskDistribution> out;
  for (std::size_t pos = 0; pos < masks; ++pos) {
    auto p = distribution(text, pos, masks);
    std::vector<TokenId> order;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) order.push_back(static_cast<TokenId>(i));
    }
    std::size_t n = std::min(req.top_n, order.size());
    auto by_prob = [&](TokenId a, TokenId b) {
      auto pa = p[static_cast<std::size_t>(a)], pb = p[static_cast<std::size_t>(b)];
      return pa != pb ? pa > pb : a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(n), order.end(), by_prob);
    MaskDistribution d;
    d.position = pos;
    for (std::size_t i = 0; i < n; ++i) {
      d.top.emplace_back(order[i], std::log(p[static_cast<std::size_t>(order[i])]));
    }
    for (auto id : req.query_token_ids) d.queried[id] = std::log(p[static_cast<std::size_t>(id)]);
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP transport

HttpBackend::HttpBackend(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

namespace {

json check_response(const httplib::Result& res, const std::string& what) {
  if (!res) throw TransportError(what + ": " + httplib::to_string(res.error()));
  if (res->status >= 500) {
    throw TransportError(what + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  if (res->status != 200) {
    throw ProtocolError(what + ": HTTP " + std::to_string(res->status) + " " + res->body);
  }
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(what + ": response is not JSON: " + e.what());
  }
}

}  // namespace

json HttpBackend::get(const std::string& path) {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(timeout_seconds_);
  cli.set_read_timeout(timeout_seconds_);
  return check_response(cli.Get(path), "GET " + base_url_ + path);
}

json HttpBackend::post(const std::string& path, const json& body) {
  httplib::Client cli(base_url_);
  cli.set_connection_timeout(timeout_seconds_);
  cli.set_read_timeout(timeout_seconds_);
  return check_response(cli.Post(path, body.dump(), "application/json"), "POST " + base_url_ + path);
}

BackendInfo HttpBackend::info() { return info_from_wire(get("/info")); }

std::vector<TokenId> HttpBackend::tokenize(const std::string& text, bool add_prefix_space) {
  auto r = post("/tokenize", {{"text", text}, {"add_prefix_space", add_prefix_space}});
  return required<std::vector<TokenId>>(r, "token_ids");
}

std::string HttpBackend::detokenize(std::span<const TokenId> ids) {
  auto r = post("/detokenize", {{"token_ids", std::vector<TokenId>(ids.begin(), ids.end())}});
  return required<std::string>(r, "text");
}

std::vector<MaskDistribution> HttpBackend::fill_mask(const FillMaskRequest& req) {
  try {
    return masks_from_wire(post("/fill_mask", to_wire(req)));
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed /fill_mask response: ") + e.what());
  }
}

std::shared_ptr<Backend> make_backend(const std::string& endpoint) {
  if (endpoint.starts_with("mock:")) return MockBackend::load(endpoint.substr(5));
  if (endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
    return std::make_shared<HttpBackend>(endpoint);
  }
  throw ConfigError("backend endpoint must be mock:<fixture> or an http(s) URL: '" + endpoint + "'");
}

// ---------------------------------------------------------------------------
// WireServer

struct WireServer::Impl {
  httplib::Server server;
  std::shared_ptr<Backend> backend;
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message,
                 const std::string& field = "") {
  json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
void guarded(httplib::Response& res, Handler&& h) {
  try {
    h();
  } catch (const ProtocolError& e) {
    reply_error(res, 400, e.what());
  } catch (const json::exception& e) {
    reply_error(res, 400, e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, e.what());
  }
}

json parse_body(const httplib::Request& req) {
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("request body must be a JSON object");
  return j;
}

}  // namespace

WireServer::WireServer(std::shared_ptr<Backend> backend) : impl_(std::make_unique<Impl>()) {
  impl_->backend = std::move(backend);
  auto& svr = impl_->server;
  auto* b = impl_->backend.get();
  svr.Get("/info", [b](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { res.set_content(to_wire(b->info()).dump(), "application/json"); });
  });
  svr.Post("/tokenize", [b](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = parse_body(req);
      if (!j.contains("text") || !j["text"].is_string()) return reply_error(res, 400, "missing string", "text");
      bool prefix = j.value("add_prefix_space", false);
      json out = {{"token_ids", b->tokenize(j["text"].get<std::string>(), prefix)}};
      res.set_content(out.dump(), "application/json");
    });
  });
  svr.Post("/detokenize", [b](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = parse_body(req);
      if (!j.contains("token_ids") || !j["token_ids"].is_array()) {
        return reply_error(res, 400, "missing array", "token_ids");
      }
      auto ids = j["token_ids"].get<std::vector<TokenId>>();
      res.set_content(json{{"text", b->detokenize(ids)}}.dump(), "application/json");
    });
  });
  svr.Post("/fill_mask", [b](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto j = parse_body(req);
      if (!j.contains("text") || !j["text"].is_string()) return reply_error(res, 400, "missing string", "text");
      if (!j.contains("top_n") || !j["top_n"].is_number_integer() || j["top_n"].get<long>() < 1) {
        return reply_error(res, 400, "top_n must be a positive integer", "top_n");
      }
      auto r = fill_mask_request_from_wire(j);
      res.set_content(to_wire(b->fill_mask(r)).dump(), "application/json");
    });
  });
}

WireServer::~WireServer() { stop(); }

int WireServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw TransportError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void WireServer::listen_blocking(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw TransportError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void WireServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------
// ResponseCache

std::optional<json> ResponseCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& key, json value) {
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(key, std::move(value));
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void ResponseCache::load(const fs::path& path) {
  if (!fs::exists(path)) return;
  for (auto& row : read_jsonl(path)) put(row.at("key").get<std::string>(), row.at("value"));
}

void ResponseCache::save(const fs::path& path) const {
  std::string out;
  {
    std::lock_guard lock(mu_);
    for (const auto& [k, v] : entries_) {
      out += json{{"key", k}, {"value", v}}.dump();
      out.push_back('\n');
    }
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// BridgeClient

BridgeClient::BridgeClient(std::string name, std::shared_ptr<Backend> backend, ClientOptions options,
                           std::shared_ptr<ResponseCache> cache)
    : backend_(std::move(backend)), options_(options), cache_(std::move(cache)) {
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
  auto info = with_retries([&] { return backend_->info(); });
  if (info.vocab_size == 0) throw ProtocolError("backend reports an empty vocabulary");
  if (info.mask_token_id < 0 || static_cast<std::size_t>(info.mask_token_id) >= info.vocab_size) {
    throw ProtocolError("backend mask_token_id outside vocabulary");
  }
  descriptor_ = {std::move(name), "", info.vocab_size, info.mask_token_id, info.mask_token};
  if (descriptor_.name.empty()) descriptor_.name = info.name;
}

template <typename F>
auto BridgeClient::with_retries(F&& f) -> decltype(f()) {
  for (int attempt = 0;; ++attempt) {
    try {
      return f();
    } catch (const TransportError&) {
      if (attempt >= options_.retries) throw;
      std::this_thread::sleep_for(options_.retry_backoff * (attempt + 1));
    }
  }
}

void BridgeClient::acquire() {
  std::unique_lock lock(slot_mu_);
  slot_cv_.wait(lock, [&] { return in_flight_ < std::max<std::size_t>(1, options_.max_in_flight); });
  ++in_flight_;
}

void BridgeClient::release() {
  {
    std::lock_guard lock(slot_mu_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void BridgeClient::log(std::string endpoint, std::string text, bool hit) {
  std::lock_guard lock(log_mu_);
  calls_.push_back({std::move(endpoint), std::move(text), hit});
}

std::vector<CallRecord> BridgeClient::call_log() const {
  std::lock_guard lock(log_mu_);
  return calls_;
}

std::size_t BridgeClient::fill_mask_calls() const {
  std::lock_guard lock(log_mu_);
  return static_cast<std::size_t>(std::count_if(calls_.begin(), calls_.end(),
                                                [](const auto& c) { return c.endpoint == "fill_mask"; }));
}

void BridgeClient::clear_call_log() {
  std::lock_guard lock(log_mu_);
  calls_.clear();
}

std::vector<MaskDistribution> BridgeClient::fill_mask(const FillMaskRequest& req,
                                                      std::optional<std::size_t> expected_masks) {
  std::size_t expected = expected_masks.value_or(count_masks(req.text, descriptor_.mask_token));
  if (expected == 0) throw ProtocolError("fill_mask request text has no mask placeholder");
  if (req.top_n < 1) throw ProtocolError("top_n must be >= 1");

  json wire_req = to_wire(req);
  std::string key = sha256_hex(descriptor_.name + '\x1f' + "fill_mask" + '\x1f' + wire_req.dump());
  std::optional<json> cached = options_.use_cache ? cache_->get(key) : std::nullopt;
  log("fill_mask", req.text, cached.has_value());

  std::vector<MaskDistribution> masks;
  if (cached) {
    masks = masks_from_wire(*cached);
  } else {
    acquire();
    try {
      masks = with_retries([&] { return backend_->fill_mask(req); });
    } catch (...) {
      release();
      throw;
    }
    release();
  }
  if (masks.size() != expected) {
    throw ProtocolError("mask count disagreement for '" + req.text + "'", static_cast<long>(expected),
                        static_cast<long>(masks.size()));
  }
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].position != i) throw ProtocolError("mask positions out of order");
    validate_distribution(masks[i], req.query_token_ids);
  }
  if (!cached && options_.use_cache) cache_->put(key, to_wire(masks));
  return masks;
}

std::vector<TokenId> BridgeClient::tokenize(const std::string& text, bool add_prefix_space) {
  std::string key = sha256_hex(descriptor_.name + '\x1f' + "tokenize" + '\x1f' +
                               json{{"text", text}, {"add_prefix_space", add_prefix_space}}.dump());
  if (options_.use_cache) {
    if (auto hit = cache_->get(key)) {
      log("tokenize", text, true);
      return hit->get<std::vector<TokenId>>();
    }
  }
  log("tokenize", text, false);
  acquire();
  std::vector<TokenId> ids;
  try {
    ids = with_retries([&] { return backend_->tokenize(text, add_prefix_space); });
  } catch (...) {
    release();
    throw;
  }
  release();
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= descriptor_.vocab_size) {
      throw ProtocolError("tokenize returned id outside vocabulary");
    }
  }
  if (options_.use_cache) cache_->put(key, ids);
  return ids;
}

std::string BridgeClient::detokenize(std::span<const TokenId> ids) {
  json body = {{"token_ids", std::vector<TokenId>(ids.begin(), ids.end())}};
  std::string key = sha256_hex(descriptor_.name + '\x1f' + "detokenize" + '\x1f' + body.dump());
  if (options_.use_cache) {
    if (auto hit = cache_->get(key)) {
      log("detokenize", "", true);
      return hit->get<std::string>();
    }
  }
  log("detokenize", "", false);
  acquire();
  std::string text;
  try {
    text = with_retries([&] { return backend_->detokenize(ids); });
  } catch (...) {
    release();
    throw;
  }
  release();
  if (options_.use_cache) cache_->put(key, text);
  return text;
}

}  // namespace driftbench
