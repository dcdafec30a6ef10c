#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "quicpic/labeling.hpp"

using namespace quicpic;

namespace {

TrafficImage flat_image(Index rows, Index cols, std::uint8_t red,
                        std::uint8_t green) {
  TrafficImage img;
  img.red = ByteGrid::Constant(rows, cols, red);
  img.green = ByteGrid::Constant(rows, cols, green);
  return img;
}

std::vector<TraceSamples> synthetic_traces(const std::string& server,
                                           int n_traces, int windows_each) {
  std::vector<TraceSamples> traces;
  for (int t = 0; t < n_traces; ++t) {
    TraceSamples samples;
    samples.server_label = server;
    samples.trace_id = server + "/trace" + std::to_string(t);
    for (int w = 0; w < windows_each; ++w) samples.window_indices.push_back(w);
    traces.push_back(std::move(samples));
  }
  return traces;
}

std::string ref_trace(const std::string& ref) {
  return ref.substr(0, ref.rfind('/'));
}

}  // namespace

TEST_CASE("label window") {
  SUBCASE("no events means label zero") {
    CHECK(label_window({}, 0, 100'000) == 0);
  }
  SUBCASE("hand-enumerated case") {
    const std::vector<std::int64_t> events{50'000, 150'000, 250'000};
    CHECK(label_window(events, 100'000, 100'000) == 1);
    CHECK(label_window(events, 0, 100'000) == 1);
    CHECK(label_window(events, 0, 300'000) == 3);
  }
  SUBCASE("the window end is exclusive") {
    const std::vector<std::int64_t> events{200'000};
    CHECK(label_window(events, 100'000, 100'000) == 0);
    CHECK(label_window(events, 200'000, 100'000) == 1);
  }
  SUBCASE("matches brute-force counting on random cases") {
    std::mt19937_64 gen(73);
    for (int rep = 0; rep < 2000; ++rep) {
      std::vector<std::int64_t> events;
      const std::size_t n = fixtures::pick(gen, 50);
      for (std::size_t i = 0; i < n; ++i)
        events.push_back(static_cast<std::int64_t>(fixtures::pick(gen, 1'000'000)));
      std::sort(events.begin(), events.end());
      const auto start = static_cast<std::int64_t>(fixtures::pick(gen, 900'000));
      const std::int64_t window = 1 + static_cast<std::int64_t>(fixtures::pick(gen, 200'000));
      int brute = 0;
      for (auto t : events)
        if (t >= start && t < start + window) ++brute;
      CHECK(label_window(events, start, window) == brute);
    }
  }
  SUBCASE("additive over a partition of the window") {
    const std::vector<std::int64_t> events{10, 20, 30, 40, 50, 60};
    const int whole = label_window(events, 0, 60);
    const int left = label_window(events, 0, 30);
    const int right = label_window(events, 30, 30);
    CHECK(whole == left + right);
  }
}

TEST_CASE("admission rule") {
  CHECK(admit(0));
  CHECK(admit(20));
  CHECK(!admit(21));
  CHECK(admit(25, 30));
}

TEST_CASE("events jsonl") {
  SUBCASE("well-formed lines parse, blanks are skipped") {
    std::istringstream in(
        "{\"trace_id\": \"a/t0\", \"t\": 0.25}\n"
        "\n"
        "{\"trace_id\": \"a/t0\", \"t\": 0.0001}\n");
    const auto events = read_events_jsonl(in);
    REQUIRE(events.size() == 2);
    CHECK(events[0].trace_id == "a/t0");
    CHECK(events[0].time_us == 250'000);
    CHECK(events[1].time_us == 100);
  }
  SUBCASE("malformed lines are an error") {
    std::istringstream bad_json("{\"trace_id\": \"a\", \"t\":\n");
    CHECK_THROWS_AS(read_events_jsonl(bad_json), Error);
    std::istringstream missing_key("{\"trace_id\": \"a\"}\n");
    CHECK_THROWS_AS(read_events_jsonl(missing_key), Error);
    std::istringstream negative("{\"trace_id\": \"a\", \"t\": -1.0}\n");
    CHECK_THROWS_AS(read_events_jsonl(negative), Error);
  }
}

TEST_CASE("split: known servers 80:20") {
  SUBCASE("one server with ten traces lands 8:2 and reruns identically") {
    const auto traces = synthetic_traces("alpha", 10, 3);
    const SplitManifest manifest =
        split(traces, SplitMode::KnownServers8020, 42);
    std::set<std::string> train_traces;
    for (const auto& ref : manifest.train) train_traces.insert(ref_trace(ref));
    std::set<std::string> test_traces;
    for (const auto& ref : manifest.test) test_traces.insert(ref_trace(ref));
    CHECK(train_traces.size() == 8);
    CHECK(test_traces.size() == 2);
    CHECK(manifest.train.size() == 24);
    CHECK(manifest.test.size() == 6);

    const SplitManifest again = split(traces, SplitMode::KnownServers8020, 42);
    CHECK(again.train == manifest.train);
    CHECK(again.test == manifest.test);

    const SplitManifest other = split(traces, SplitMode::KnownServers8020, 43);
    CHECK(other.train != manifest.train);
  }

  SUBCASE("train and test are disjoint and traces stay whole") {
    auto traces = synthetic_traces("alpha", 10, 4);
    const auto beta = synthetic_traces("beta", 10, 4);
    traces.insert(traces.end(), beta.begin(), beta.end());
    const SplitManifest manifest =
        split(traces, SplitMode::KnownServers8020, 7);

    std::set<std::string> train_refs(manifest.train.begin(),
                                     manifest.train.end());
    for (const auto& ref : manifest.test) CHECK(!train_refs.contains(ref));

    std::set<std::string> train_traces;
    std::set<std::string> test_traces;
    for (const auto& ref : manifest.train) train_traces.insert(ref_trace(ref));
    for (const auto& ref : manifest.test) test_traces.insert(ref_trace(ref));
    for (const auto& id : test_traces) CHECK(!train_traces.contains(id));

    // 8 train traces per server, every window of a trace on one side.
    int alpha_train = 0;
    for (const auto& id : train_traces)
      if (id.rfind("alpha/", 0) == 0) ++alpha_train;
    CHECK(alpha_train == 8);
    CHECK(train_traces.size() == 16);
    for (const auto& id : train_traces) {
      int windows = 0;
      for (const auto& ref : manifest.train)
        if (ref_trace(ref) == id) ++windows;
      CHECK(windows == 4);
    }
  }

  SUBCASE("servers with too few traces are flagged, not mis-split") {
    auto traces = synthetic_traces("alpha", 10, 2);
    const auto tiny = synthetic_traces("tiny", 3, 2);
    traces.insert(traces.end(), tiny.begin(), tiny.end());
    const SplitManifest manifest =
        split(traces, SplitMode::KnownServers8020, 1);
    REQUIRE(manifest.flagged_servers.size() == 1);
    CHECK(manifest.flagged_servers[0] == "tiny");
    for (const auto& ref : manifest.train) CHECK(ref_trace(ref).rfind("tiny/", 0) != 0);
    for (const auto& ref : manifest.test) CHECK(ref_trace(ref).rfind("tiny/", 0) != 0);
  }

  SUBCASE("nothing splittable is an error") {
    const auto traces = synthetic_traces("tiny", 2, 2);
    CHECK_THROWS_AS(split(traces, SplitMode::KnownServers8020, 1), Error);
  }
}

TEST_CASE("split: leave servers out") {
  auto traces = synthetic_traces("alpha", 6, 2);
  const auto beta = synthetic_traces("beta", 5, 2);
  const auto gamma = synthetic_traces("gamma", 4, 2);
  traces.insert(traces.end(), beta.begin(), beta.end());
  traces.insert(traces.end(), gamma.begin(), gamma.end());

  SUBCASE("held-out servers appear only in test") {
    const std::vector<std::string> holdout{"beta"};
    const SplitManifest manifest =
        split(traces, SplitMode::LeaveServersOut, 0, holdout);
    CHECK(manifest.held_out_servers == holdout);
    for (const auto& ref : manifest.train)
      CHECK(ref_trace(ref).rfind("beta/", 0) != 0);
    CHECK(manifest.test.size() == 10);
    for (const auto& ref : manifest.test)
      CHECK(ref_trace(ref).rfind("beta/", 0) == 0);
    CHECK(manifest.train.size() == (6 + 4) * 2);
  }

  SUBCASE("holdout counts are validated") {
    CHECK_THROWS_AS(split(traces, SplitMode::LeaveServersOut, 0, {}), Error);
    const std::vector<std::string> all{"alpha", "beta", "gamma"};
    CHECK_THROWS_AS(split(traces, SplitMode::LeaveServersOut, 0, all), Error);
    const std::vector<std::string> unknown{"delta"};
    CHECK_THROWS_AS(split(traces, SplitMode::LeaveServersOut, 0, unknown), Error);
  }
}

TEST_CASE("minority augmentation") {
  SUBCASE("eligible labels only") {
    LabeledSample sample{flat_image(8, 8, 100, 50), 9, "s"};
    CHECK_THROWS_AS(augment_minority(sample, 1), Error);
    sample.label = 21;
    CHECK_THROWS_AS(augment_minority(sample, 1), Error);
    sample.label = 10;
    CHECK_NOTHROW(augment_minority(sample, 1));
    sample.label = 20;
    CHECK_NOTHROW(augment_minority(sample, 1));
  }

  SUBCASE("zero pixels stay zero and the label survives") {
    LabeledSample zero{flat_image(16, 16, 0, 0), 12, "s"};
    const LabeledSample out = augment_minority(zero, 99);
    CHECK(out.image.red.isZero());
    CHECK(out.image.green.isZero());
    CHECK(out.label == 12);
    CHECK(out.server_label == "s");
  }

  SUBCASE("values are clamped into [0, 255]") {
    LabeledSample bright{flat_image(16, 16, 255, 1), 15, "s"};
    const LabeledSample out = augment_minority(bright, 7);
    CHECK((out.image.red.array() <= 255).all());
    CHECK((out.image.green.array() <= 255).all());  // noisy 1s clamp at zero
  }

  SUBCASE("sigma zero is the identity") {
    LabeledSample sample{flat_image(8, 8, 77, 33), 11, "s"};
    const LabeledSample out = augment_minority(sample, 5, 0.0);
    CHECK(out.image.red == sample.image.red);
    CHECK(out.image.green == sample.image.green);
  }

  SUBCASE("deterministic per seed") {
    LabeledSample sample{flat_image(16, 16, 128, 130), 14, "s"};
    const LabeledSample a = augment_minority(sample, 1234);
    const LabeledSample b = augment_minority(sample, 1234);
    const LabeledSample c = augment_minority(sample, 1235);
    CHECK(a.image.red == b.image.red);
    CHECK(a.image.green == b.image.green);
    CHECK(a.image.red != c.image.red);
  }

  SUBCASE("empirical noise deviation matches the configured sigma") {
    // 1e5 mid-range pixels; rounding adds 1/12 of quantization variance, so
    // the expected deviation is sqrt(2.55^2 + 1/12) ~ 2.566.
    const Index rows = 32;
    const Index cols = 32;
    const int images = 98;  // 98 * 1024 > 1e5 pixels
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;
    for (int k = 0; k < images; ++k) {
      LabeledSample sample{flat_image(rows, cols, 128, 0), 12, "s"};
      const LabeledSample out =
          augment_minority(sample, static_cast<std::uint64_t>(k + 1));
      for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
          const double diff =
              static_cast<double>(out.image.red(i, j)) - 128.0;
          sum += diff;
          sum_sq += diff * diff;
          ++n;
        }
      }
    }
    const double mean = sum / static_cast<double>(n);
    const double sigma =
        std::sqrt(sum_sq / static_cast<double>(n) - mean * mean);
    CHECK(sigma == doctest::Approx(2.55).epsilon(0.05 / 2.55));
    CHECK(std::abs(mean) < 0.05);
  }
}

TEST_CASE("response distribution") {
  SUBCASE("empty input gives an empty histogram") {
    const ResponseDistribution dist = response_distribution({});
    CHECK(dist.total == 0);
    CHECK(dist.counts.empty());
    CHECK(dist.low_label_share == 0.0);
  }
  SUBCASE("synthetic counts are exact") {
    const std::vector<int> labels{0, 0, 1, 2, 2, 2, 5, 20};
    const ResponseDistribution dist = response_distribution(labels);
    CHECK(dist.total == 8);
    CHECK(dist.counts.at(0) == 2);
    CHECK(dist.counts.at(1) == 1);
    CHECK(dist.counts.at(2) == 3);
    CHECK(dist.counts.at(5) == 1);
    CHECK(dist.counts.at(20) == 1);
    CHECK(dist.low_label_share == doctest::Approx(6.0 / 8.0));
  }
}
