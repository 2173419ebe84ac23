#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "driftbench/bridge.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/io.hpp"
#include "support.hpp"

using namespace driftbench;
using nlohmann::json;

namespace {

bool json_close(const json& a, const json& b, double tol = 1e-12) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>()) <= tol;
  if (a.type() != b.type()) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!json_close(a[i], b[i], tol)) return false;
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (auto it = a.begin(); it != a.end(); ++it)
      if (!b.contains(it.key()) || !json_close(it.value(), b.at(it.key()), tol)) return false;
    return true;
  }
  return a == b;
}

std::shared_ptr<MockBackend> probe_mock() { return MockBackend::load(fixture("mock_probe.json")); }

// Fails the first `failures` fill_mask calls with a transport error and
// tracks peak concurrency.
class FlakyBackend : public Backend {
 public:
  FlakyBackend(std::shared_ptr<Backend> inner, int failures, std::chrono::milliseconds delay = {})
      : inner_(std::move(inner)), failures_(failures), delay_(delay) {}
  BackendInfo info() override { return inner_->info(); }
  std::vector<TokenId> tokenize(const std::string& t, bool p) override { return inner_->tokenize(t, p); }
  std::string detokenize(std::span<const TokenId> ids) override { return inner_->detokenize(ids); }
  std::vector<MaskDistribution> fill_mask(const FillMaskRequest& req) override {
    int now = ++active_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(delay_);
    --active_;
    ++calls_;
    if (failures_-- > 0) throw TransportError("connection refused");
    return inner_->fill_mask(req);
  }
  int peak() const { return peak_; }
  int calls() const { return calls_; }

 private:
  std::shared_ptr<Backend> inner_;
  std::atomic<int> failures_;
  std::chrono::milliseconds delay_;
  std::atomic<int> active_{0}, peak_{0}, calls_{0};
};

ClientOptions fast_retry() {
  ClientOptions o;
  o.retry_backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST_CASE("mock: info, tokenize and ordered fill_mask") {
  auto m = probe_mock();
  auto info = m->info();
  CHECK(info.name == "probe");
  CHECK(info.vocab_size == 34);
  CHECK(info.mask_token == "<mask>");
  auto d = m->fill_mask({"Cristiano Ronaldo plays for <mask>.", 4, {21}});
  REQUIRE(d.size() == 1);
  REQUIRE(d[0].top.size() == 4);
  CHECK(d[0].top[0].first == 18);
  CHECK(d[0].top[3].first == 21);
  CHECK(std::abs(d[0].queried.at(21) - std::log(0.05)) < 1e-12);
  CHECK_THROWS_AS(m->fill_mask({"no mask here.", 1, {}}), ProtocolError);
}

TEST_CASE("mock: full vocabulary sums to one for listed and fallback contexts") {
  auto m = probe_mock();
  for (const char* text : {"Cristiano Ronaldo plays for <mask>.", "Nobody plays for <mask>.",
                           "<mask> <mask> is the head of the government of Italy."}) {
    for (const auto& d : m->fill_mask({text, 34, {}})) {
      double sum = 0.0;
      for (const auto& [id, lp] : d.top) sum += std::exp(lp);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
  auto gen = MockBackend::load(fixture("mock_2021-Q2.json"));
  auto d = gen->fill_mask({"Cristiano Ronaldo plays for <mask>.", gen->info().vocab_size, {}});
  double sum = 0.0;
  for (const auto& [id, lp] : d[0].top) sum += std::exp(lp);
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("mock: bad fixtures report the offending line") {
  try {
    MockBackend::load(fixture("mock_bad_rowsum.json"));
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(e.line() == 79);
  }
  CHECK_THROWS_AS(MockBackend::from_json("{\"header\": {\"vocab\": [\"a\"], \"mask_token_id\": 3}, \"contexts\": {}}"),
                  LoadError);
  CHECK_THROWS_AS(MockBackend::from_json("{\n\"header\": \n{"), LoadError);
  CHECK_THROWS_AS(MockBackend::load(fixture("missing.json")), LoadError);
}

TEST_CASE("wire codec round trip, -inf as null") {
  std::vector<MaskDistribution> masks(2);
  masks[0].position = 0;
  masks[0].top = {{5, -0.1}, {7, -2.5}};
  masks[0].queried = {{9, -std::numeric_limits<double>::infinity()}};
  masks[1].position = 1;
  masks[1].top = {{3, -0.7}};
  auto wire = to_wire(masks);
  CHECK(wire["masks"][0]["queried"]["9"].is_null());
  auto back = masks_from_wire(json::parse(wire.dump()));
  REQUIRE(back.size() == 2);
  CHECK(back[0].top == masks[0].top);
  CHECK(std::isinf(back[0].queried.at(9)));
  CHECK(back[1].top == masks[1].top);

  FillMaskRequest req{"a <mask>", 3, {1, 2}};
  auto r = fill_mask_request_from_wire(to_wire(req));
  CHECK(r.text == req.text);
  CHECK(r.top_n == 3);
  CHECK(r.query_token_ids == req.query_token_ids);
  CHECK_THROWS_AS(fill_mask_request_from_wire(json{{"text", "x"}}), ProtocolError);
  CHECK_THROWS_AS(fill_mask_request_from_wire(json{{"text", "x"}, {"top_n", 0}}), ProtocolError);
  CHECK(count_masks("<mask> and <mask>.", "<mask>") == 2);
}

TEST_CASE("client boundary validation") {
  MaskDistribution d;
  d.top = {{1, -0.5}, {2, -0.1}};
  CHECK_THROWS_AS(validate_distribution(d, {}), ProtocolError);
  d.top = {{1, 0.5}};
  CHECK_THROWS_AS(validate_distribution(d, {}), ProtocolError);
  d.top = {{1, -0.5}};
  std::vector<TokenId> want{4};
  CHECK_THROWS_AS(validate_distribution(d, want), ProtocolError);
  d.queried[4] = -1.0;
  CHECK_NOTHROW(validate_distribution(d, want));
}

TEST_CASE("golden wire vectors over HTTP") {
  WireServer server(probe_mock());
  int port = server.start();
  httplib::Client cli("127.0.0.1", port);
  auto dir = std::filesystem::path(DRIFTBENCH_SOURCE_DIR) / "tests/golden/wire";
  auto files = list_files(dir, ".json");
  CHECK(files.size() == 6);
  for (const auto& f : files) {
    CAPTURE(f.filename().string());
    auto c = json::parse(read_file(f));
    auto endpoint = c["endpoint"].get<std::string>();
    auto path = endpoint.substr(endpoint.find(' ') + 1);
    auto res = endpoint.starts_with("GET") ? cli.Get(path) : cli.Post(path, c["request"].dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == c["status"].get<int>());
    auto body = json::parse(res->body);
    if (res->status == 200) {
      CHECK(json_close(body, c["response"]));
    } else {
      CHECK(body["error"] == c["response"]["error"]);
    }
  }

  auto bad = cli.Post("/fill_mask", R"({"text": "x <mask>"})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["field"] == "top_n");
  auto garbage = cli.Post("/tokenize", "not json", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);

  HttpBackend http("http://127.0.0.1:" + std::to_string(port));
  CHECK(http.info().name == "probe");
  CHECK(http.tokenize("Lionel Messi plays for <mask>.", false) == std::vector<TokenId>{24, 25, 9, 10, 2, 3});
  auto d = http.fill_mask({"Lionel Messi plays for <mask>.", 2, {27}});
  CHECK(std::abs(d[0].queried.at(27) - std::log(0.3)) < 1e-12);
  CHECK_THROWS_AS(http.fill_mask({"no mask.", 1, {}}), ProtocolError);
  server.stop();
}

TEST_CASE("unreachable backend is a transport error") {
  HttpBackend http("http://127.0.0.1:1", 1);
  CHECK_THROWS_AS(http.info(), TransportError);
  CHECK_THROWS_AS(make_backend("ftp://x"), ConfigError);
}

TEST_CASE("client: cache, call log and mask-count check") {
  BridgeClient client("probe", probe_mock());
  FillMaskRequest req{"Lionel Messi plays for <mask>.", 5, {27}};
  auto a = client.fill_mask(req, 1);
  auto b = client.fill_mask(req, 1);
  CHECK(a[0].top == b[0].top);
  auto log = client.call_log();
  REQUIRE(log.size() == 2);
  CHECK_FALSE(log[0].cache_hit);
  CHECK(log[1].cache_hit);
  CHECK(client.fill_mask_calls() == 2);
  CHECK_THROWS_AS(client.fill_mask(req, 2), ProtocolError);
  CHECK(client.descriptor().vocab_size == 34);

  TempDir tmp;
  client.cache()->save(tmp / "cache.jsonl");
  auto cache = std::make_shared<ResponseCache>();
  cache->load(tmp / "cache.jsonl");
  CHECK(cache->size() == client.cache()->size());
  auto flaky = std::make_shared<FlakyBackend>(probe_mock(), 100);
  BridgeClient warm("probe", flaky, fast_retry(), cache);
  CHECK(warm.fill_mask(req, 1)[0].top == a[0].top);  // served from the loaded cache
  CHECK(flaky->calls() == 0);
}

TEST_CASE("client: transport errors are retried, then surface") {
  auto flaky = std::make_shared<FlakyBackend>(probe_mock(), 2);
  BridgeClient client("probe", flaky, fast_retry());
  CHECK_NOTHROW(client.fill_mask({"Lionel Messi plays for <mask>.", 1, {}}, 1));
  CHECK(flaky->calls() == 3);

  auto dead = std::make_shared<FlakyBackend>(probe_mock(), 1000);
  BridgeClient doomed("probe", dead, fast_retry());
  CHECK_THROWS_AS(doomed.fill_mask({"Lionel Messi plays for <mask>.", 1, {}}, 1), TransportError);
  CHECK(dead->calls() == 4);
}

TEST_CASE("client: in-flight bound holds under concurrency") {
  auto slow = std::make_shared<FlakyBackend>(probe_mock(), 0, std::chrono::milliseconds(5));
  ClientOptions o = fast_retry();
  o.max_in_flight = 3;
  o.use_cache = false;
  BridgeClient client("probe", slow, o);
  std::vector<std::thread> pool;
  for (int t = 0; t < 12; ++t) {
    pool.emplace_back([&] {
      for (int i = 0; i < 4; ++i) client.fill_mask({"Lionel Messi plays for <mask>.", 1, {}}, 1);
    });
  }
  for (auto& t : pool) t.join();
  CHECK(slow->calls() == 48);
  CHECK(slow->peak() <= 3);
  CHECK(slow->peak() >= 2);
}
