#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "kgcf/error.hpp"
#include "kgcf/label_engine.hpp"
#include "kgcf/serialize.hpp"
#include "test_support.hpp"

using namespace kgcf;
using kgcf::testing::TempDir;

namespace {

/// OpenAI-style chat endpoint on localhost. Answers "yes" for contexts that
/// mention the relation word "b" and "no" otherwise.
class MockLlm {
 public:
  std::atomic<int> requests{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> peak_in_flight{0};
  std::atomic<int> fail_first{0};   // this many requests get HTTP 500
  std::atomic<bool> drop_last{false};  // omit the last answer once
  int status_override = 0;
  std::string last_auth;
  std::mutex mu;

  MockLlm() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight;
      int peak = peak_in_flight.load();
      while (now > peak && !peak_in_flight.compare_exchange_weak(peak, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      handle(req, res);
      --in_flight;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockLlm() {
    server_.stop();
    thread_.join();
  }

  [[nodiscard]] std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const int n = ++requests;
    {
      std::lock_guard lock(mu);
      last_auth = req.get_header_value("Authorization");
    }
    if (status_override != 0) {
      res.status = status_override;
      return;
    }
    if (n <= fail_first.load()) {
      res.status = 500;
      return;
    }
    const auto body = json::parse(req.body);
    const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
    static const std::regex line(R"(^(\d+)\. (.*)$)");
    std::istringstream in(prompt);
    std::string l, answer;
    std::vector<std::string> answers;
    while (std::getline(in, l)) {
      std::smatch m;
      if (!std::regex_match(l, m, line)) continue;
      const bool yes = m[2].str().find(" b ") != std::string::npos;
      answers.push_back(m[1].str() + ": " + (yes ? "yes" : "no"));
    }
    if (drop_last.exchange(false) && !answers.empty()) answers.pop_back();
    for (const auto& a : answers) answer += a + "\n";
    res.set_content(json{{"choices", json::array({json{{"message", json{{"role", "assistant"}, {"content", answer}}}}})}}.dump(),
                    "application/json");
  }

  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

Graph small_graph() {
  GraphBuilder b;
  b.add("x", "a", "y");
  b.add("y", "b", "z");
  b.add("x", "q", "z");
  b.add("x", "c", "w");
  b.add("w", "c", "z");
  b.add("y", "a", "z");
  b.add("w", "b", "y");
  return std::move(b).build();
}

RemoteLlmConfig fast_config(const MockLlm& llm) {
  RemoteLlmConfig c;
  c.base_url = llm.base_url();
  c.requests_per_second = 1000.0;
  c.timeout = std::chrono::seconds(5);
  return c;
}

std::string dump_records(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

}  // namespace

TEST_CASE("remote labels land in the cache and replay rebuilds the same dataset offline") {
  const auto g = small_graph();
  TempDir dir;
  std::string remote_bytes;
  {
    MockLlm llm;
    auto cache = std::make_shared<LabelCache>(dir / "cache.jsonl");
    RemoteLlmBackend backend(fast_config(llm), cache);
    const auto ds = build_sc_dataset(g, backend, 3, 10, 50, FailurePolicy::kAbort);
    REQUIRE(!ds.items.empty());
    for (const auto& item : ds.items) {
      CHECK(item.provenance == Provenance::kLlm);
      CHECK(item.raw_response.has_value());
      const auto ctx = textualize_path(g, item.path).context;
      CHECK(item.label == (ctx.find(" b ") != std::string::npos ? 1 : 0));
    }
    CHECK(cache->size() == ds.items.size());
    remote_bytes = dump_records(sc_dataset_records(g, ds));
  }
  // Server is gone now.
  auto cache = std::make_shared<const LabelCache>(dir / "cache.jsonl");
  ReplayCacheBackend replay(cache);
  const auto again = build_sc_dataset(g, replay, 3, 10, 50, FailurePolicy::kAbort);
  CHECK(dump_records(sc_dataset_records(g, again)) == remote_bytes);
}

TEST_CASE("transient failures are retried") {
  const auto g = small_graph();
  MockLlm llm;
  llm.fail_first = 2;
  auto cfg = fast_config(llm);
  cfg.max_retries = 2;
  cfg.max_in_flight = 1;
  RemoteLlmBackend backend(cfg, nullptr);
  const auto paths = completion_paths(g, kgcf::testing::trip(g, "x", "q", "z"), 3, 50);
  const auto out = backend.label_group(g, paths);
  for (const auto& o : out) CHECK(std::holds_alternative<LabeledPath>(o));
  CHECK(llm.requests == 3);
}

TEST_CASE("a missing answer is asked again") {
  const auto g = small_graph();
  MockLlm llm;
  llm.drop_last = true;
  RemoteLlmBackend backend(fast_config(llm), nullptr);
  const auto paths = completion_paths(g, kgcf::testing::trip(g, "x", "q", "z"), 3, 50);
  REQUIRE(paths.size() >= 2);
  const auto out = backend.label_group(g, paths);
  for (const auto& o : out) CHECK(std::holds_alternative<LabeledPath>(o));
  CHECK(llm.requests == 2);
}

TEST_CASE("exhausted retries surface as a backend error under the abort policy") {
  const auto g = small_graph();
  MockLlm llm;
  llm.fail_first = 100;
  auto cfg = fast_config(llm);
  cfg.max_retries = 1;
  RemoteLlmBackend backend(cfg, nullptr);
  try {
    (void)build_sc_dataset(g, backend, 3, 10, 50, FailurePolicy::kAbort);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.code() == ExitCode::kBackend);
    CHECK(e.attempts() == 2);
  }
}

TEST_CASE("authentication failures are not retried") {
  const auto g = small_graph();
  MockLlm llm;
  llm.status_override = 401;
  RemoteLlmBackend backend(fast_config(llm), nullptr);
  const auto paths = completion_paths(g, kgcf::testing::trip(g, "x", "q", "z"), 3, 50);
  CHECK_THROWS_AS((void)backend.label_group(g, paths), BackendError);
  CHECK(llm.requests == 1);
}

TEST_CASE("API key comes from the environment") {
  const auto g = small_graph();
  MockLlm llm;
  ::setenv("KGCF_TEST_LLM_KEY", "sekrit", 1);
  auto cfg = fast_config(llm);
  cfg.api_key_env = "KGCF_TEST_LLM_KEY";
  RemoteLlmBackend backend(cfg, nullptr);
  const auto paths = completion_paths(g, kgcf::testing::trip(g, "x", "q", "z"), 3, 50);
  (void)backend.label_group(g, paths);
  std::lock_guard lock(llm.mu);
  CHECK(llm.last_auth == "Bearer sekrit");
}

TEST_CASE("a tight token budget splits one completion into several prompts") {
  const auto g = small_graph();
  MockLlm llm;
  auto cfg = fast_config(llm);
  cfg.token_budget = 1;
  RemoteLlmBackend backend(cfg, nullptr);
  const auto paths = completion_paths(g, kgcf::testing::trip(g, "x", "q", "z"), 3, 50);
  REQUIRE(paths.size() >= 2);
  const auto out = backend.label_group(g, paths);
  CHECK(out.size() == paths.size());
  CHECK(llm.requests == static_cast<int>(paths.size()));
}

TEST_CASE("in-flight requests never exceed the configured limit") {
  const auto g = kgcf::testing::random_graph(25, 80, 3, 2);
  MockLlm llm;
  auto cfg = fast_config(llm);
  cfg.max_in_flight = 3;
  RemoteLlmBackend backend(cfg, nullptr);
  const auto ds = build_sc_dataset(g, backend, 2, 100, 10);
  CHECK(llm.requests > 3);
  CHECK(llm.peak_in_flight <= 3);
  CHECK(llm.peak_in_flight >= 2);
}
