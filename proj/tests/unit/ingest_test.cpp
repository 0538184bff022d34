#include <fmt/format.h>
#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "cerealia/ingest/csv.hpp"
#include "cerealia/ingest/poller.hpp"
#include "cerealia/ingest/schemas.hpp"
#include "cerealia/ingest/synth.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace cerealia;
using namespace cerealia::ingest;
using cerealia::testing::make_series;
using cerealia::testing::TempDir;

namespace {

AttributeSchema two_attr() { return {{{"t", "degC"}, {"w", "m/s"}}, std::chrono::seconds{300}}; }

CsvParseResult parse_text(const std::string& text, const CsvFormat& f = {}, const AttributeSchema& s = two_attr()) {
  std::istringstream in(text);
  return parse_csv(in, f, s);
}

}  // namespace

TEST(Csv, ThreeRowsBitEqual) {
  const auto r = parse_text(
      "timestamp,t,w\n"
      "2024-01-01T00:00:00Z,1.5,0.1\n"
      "2024-01-01T00:05:00Z,-3.25,2\n"
      "2024-01-01T00:10:00Z,1e-3,0.30000000000000004\n");
  ASSERT_EQ(r.series.size(), 3u);
  EXPECT_TRUE(r.rejects.empty());
  EXPECT_EQ(r.series.value(0, 0), 1.5);
  EXPECT_EQ(r.series.value(1, 0), -3.25);
  EXPECT_EQ(r.series.value(2, 0), 1e-3);
  EXPECT_EQ(r.series.value(2, 1), 0.1 + 0.2);
  EXPECT_EQ(to_unix(r.series.samples[1].timestamp), 1704067500);
  EXPECT_TRUE(validate_series(r.series).empty());
}

TEST(Csv, OneMalformedRowOfTenIsRejectedWithItsLine) {
  std::string text = "timestamp,t,w\n";
  for (int i = 0; i < 10; ++i) {
    text += fmt::format("2024-01-01T00:{:02d}:00Z,{},1\n", 5 * i, i == 4 ? "x" : std::to_string(i));
  }
  const auto r = parse_text(text);
  EXPECT_EQ(r.data_rows, 10u);
  EXPECT_EQ(r.series.size(), 9u);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].line, 6u);
}

TEST(Csv, TooManyRejectsIsFatal) {
  std::string text = "timestamp,t,w\n";
  for (int i = 0; i < 40; ++i) {
    const bool bad = i % 10 == 0;  // 4 of 40 = 10%
    text += fmt::format("{},{},1\n", bad ? "garbage" : fmt::format("2024-01-01T{:02d}:{:02d}:00Z", i / 12, 5 * (i % 12)), i);
  }
  try {
    parse_text(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::format);
  }
  CsvFormat lenient;
  lenient.max_reject_ratio = 0.2;
  EXPECT_EQ(parse_text(text, lenient).series.size(), 36u);
}

TEST(Csv, MissingColumnIsFatal) {
  try {
    parse_text("timestamp,t\n2024-01-01T00:00:00Z,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::format);
    EXPECT_NE(std::string(e.what()).find("'w'"), std::string::npos);
  }
}

TEST(Csv, EmptyFieldIsMissingAndQuotedHeadersWork) {
  const auto r = parse_text("\xEF\xBB\xBF\"timestamp\",\"w\",\"t\"\n2024-01-01T00:00:00Z,,4\n");
  ASSERT_EQ(r.series.size(), 1u);
  EXPECT_EQ(r.series.value(0, 0), 4.0);
  EXPECT_TRUE(std::isnan(r.series.value(0, 1)));
}

TEST(Csv, NonIncreasingTimestampIsRejected) {
  const auto r = parse_text(
      "timestamp,t,w\n2024-01-01T00:05:00Z,1,1\n2024-01-01T00:05:00Z,2,2\n2024-01-01T00:10:00Z,3,3\n");
  EXPECT_EQ(r.series.size(), 2u);
  ASSERT_EQ(r.rejects.size(), 1u);
  EXPECT_EQ(r.rejects[0].reason, "non-increasing timestamp");
}

TEST(Csv, TimestampColumnMayNotBeAnAttribute) {
  CsvFormat f;
  f.timestamp_column = "t";
  EXPECT_THROW(parse_text("t,w\n", f), Error);
}

TEST(Csv, WriteThenParseIsIdentity) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal(0, 100);
      b[i] = rng.bernoulli(0.1) ? std::nan("") : rng.uniform(-1, 1);
    }
    auto s = make_series({a, b}, {"t", "w"});
    std::ostringstream out;
    write_csv(out, s);
    const auto back = parse_text(out.str()).series;
    ASSERT_EQ(back.size(), n);
    for (std::size_t t = 0; t < n; ++t) {
      EXPECT_EQ(back.samples[t].timestamp, s.samples[t].timestamp);
      EXPECT_EQ(back.value(t, 0), s.value(t, 0));
      if (std::isnan(s.value(t, 1))) {
        EXPECT_TRUE(std::isnan(back.value(t, 1)));
      } else {
        EXPECT_EQ(back.value(t, 1), s.value(t, 1));
      }
    }
  }
}

TEST(Csv, BeutenbergLayoutMapsUnitSuffixedColumns) {
  const auto schema = beutenberg_schema();
  EXPECT_EQ(schema.arity(), 20u);
  EXPECT_EQ(schema.sampling_interval, std::chrono::seconds{600});
  std::string header = "\"Date Time\",\"p (mbar)\",\"T (degC)\",\"Tpot (K)\",\"Tdew (degC)\",\"rh (%)\","
                       "\"VPmax (mbar)\",\"VPact (mbar)\",\"VPdef (mbar)\",\"sh (g/kg)\",\"H2OC (mmol/mol)\","
                       "\"rho (g/m**3)\",\"wv (m/s)\",\"max. wv (m/s)\",\"wd (deg)\",\"rain (mm)\",\"raining (s)\","
                       "\"SWDR (W/m\xb2)\",\"PAR (\xb5mol/m\xb2/s)\",\"max. PAR (\xb5mol/m\xb2/s)\",\"Tlog (degC)\","
                       "\"CO2 (ppm)\"\n";
  std::string row = "01.01.2020 00:10:00,1000,-2.5,271,-3,95,5,4.8,0.2,3,4.9,1280,1.1,2.0,180,0,0,0,0,0,5.5,420\n";
  const auto r = parse_text(header + row, beutenberg_csv_format(), schema);
  ASSERT_EQ(r.series.size(), 1u);
  EXPECT_EQ(r.series.value(0, schema.require_index("air_temperature")), -2.5);
  EXPECT_EQ(r.series.value(0, schema.require_index("atmospheric_pressure")), 1000.0);
  EXPECT_EQ(r.series.value(0, schema.require_index("logger_temperature")), 5.5);
  EXPECT_EQ(r.series.value(0, schema.require_index("max_wind_velocity")), 2.0);
  EXPECT_EQ(r.series.value(0, schema.require_index("par")), 0.0);
  EXPECT_EQ(r.series.value(0, schema.require_index("co2")), 420.0);
  EXPECT_EQ(format_iso8601(r.series.samples[0].timestamp), "2020-01-01T00:10:00Z");
}

// Needs the real export; set CEREALIA_BEUTENBERG_CSV to its path.
TEST(Csv, BeutenbergExportSampleCount) {
  const char* path = std::getenv("CEREALIA_BEUTENBERG_CSV");
  if (path == nullptr) GTEST_SKIP() << "CEREALIA_BEUTENBERG_CSV not set";
  const auto r = parse_csv(path, beutenberg_csv_format(), beutenberg_schema());
  EXPECT_EQ(r.series.size(), 266609u);
}

TEST(Schemas, JsonRoundTripAndQuincyLayout) {
  const auto q = quincy_schema();
  EXPECT_EQ(q.arity(), 20u);
  EXPECT_EQ(q.sampling_interval, std::chrono::seconds{300});
  const auto back = schema_from_json(schema_to_json(q));
  EXPECT_EQ(back.names(), q.names());
  EXPECT_EQ(back.sampling_interval, q.sampling_interval);
  EXPECT_THROW(schema_from_json(nlohmann::json{{"sampling_interval_s", 0}, {"attributes", nlohmann::json::array()}}),
               Error);
}

TEST(Synth, TwoDaysAtFiveMinutesIs576Samples) {
  const auto s = synth_generate(default_synth_config(7, 2));
  EXPECT_EQ(s.size(), 576u);
  EXPECT_TRUE(validate_series(s).empty());
}

TEST(Synth, ZeroAmplitudesGiveTheBase) {
  auto c = default_synth_config(7, 1);
  for (auto& a : c.attributes) a.noise_std = a.diurnal_amp = a.seasonal_amp = 0.0;
  const auto s = synth_generate(c);
  for (const auto& x : s.samples) {
    for (std::size_t j = 0; j < s.arity(); ++j) EXPECT_EQ(x.values[j], c.attributes[j].base);
  }
}

TEST(Synth, SameSeedIsBitIdenticalAndSeedsDiffer) {
  const auto a = synth_generate(default_synth_config(7, 3));
  const auto b = synth_generate(default_synth_config(7, 3));
  const auto c = synth_generate(default_synth_config(8, 3));
  ASSERT_EQ(a.size(), b.size());
  bool any_diff = false;
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a.samples[t].values, b.samples[t].values);
    any_diff |= a.samples[t].values != c.samples[t].values;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Synth, FollowsTheDeclaredFormula) {
  auto c = default_synth_config(1, 2);
  c.attributes = {{"x", "u", 10.0, 3.0, 5.0, 0.0}};
  const auto s = synth_generate(c);
  for (std::size_t t = 0; t < s.size(); t += 37) {
    const auto ts = s.samples[t].timestamp;
    const double expected = 10.0 + 3.0 * std::sin(2 * M_PI * hour_of_day(ts) / 24.0) +
                            5.0 * std::sin(2 * M_PI * day_of_year(ts) / 365.0);
    EXPECT_NEAR(s.value(t, 0), expected, 1e-12);
  }
}

TEST(Synth, NegativeNoiseIsAConfigError) {
  auto c = default_synth_config(1, 1);
  c.attributes[0].noise_std = -1;
  EXPECT_THROW(synth_generate(c), Error);
}

TEST(Synth, ReferenceCorpusHasExactlyTenThousandWindows) {
  const auto s = corpus_series(7);
  EXPECT_EQ(s.size(), 240024u);
  EXPECT_EQ(window_count(s.size(), {48, 24}), 10000u);
}

// ---------------------------------------------------------------------------
// Poller against a local fixture server

namespace {

class Fixture {
 public:
  explicit Fixture(std::vector<WeatherSample> samples, AttributeSchema schema)
      : samples_(std::move(samples)), schema_(std::move(schema)) {
    server_.Get("/latest", [this](const httplib::Request&, httplib::Response& res) {
      const int call = calls_++;
      if (down_.load() > 0) {
        --down_;
        res.status = 503;
        return;
      }
      const auto i = std::min<std::size_t>(next_, samples_.size() - 1);
      if (repeat_every_ > 0 && call % repeat_every_ == repeat_every_ - 1) {
        // serve the previous sample again
        res.set_content(sample_to_json(samples_[i == 0 ? 0 : i - 1], schema_).dump(), "application/json");
        return;
      }
      res.set_content(sample_to_json(samples_[i], schema_).dump(), "application/json");
      ++next_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Fixture() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/latest"; }
  void go_down(int polls) { down_ = polls; }
  void repeat_every(int n) { repeat_every_ = n; }

 private:
  std::vector<WeatherSample> samples_;
  AttributeSchema schema_;
  httplib::Server server_;
  std::thread thread_;
  std::atomic<int> calls_{0};
  std::atomic<int> down_{0};
  std::size_t next_ = 0;
  int repeat_every_ = 0;
  int port_ = 0;
};

std::vector<WeatherSample> twelve() {
  auto s = make_series({{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}, {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}}, {"t", "w"});
  return s.samples;
}

std::vector<WeatherSample> poll_n(RemotePoller& p, std::size_t polls) {
  std::vector<WeatherSample> out;
  for (std::size_t i = 0; i < polls; ++i) {
    if (auto s = p.poll_once()) out.push_back(*s);
  }
  return out;
}

}  // namespace

TEST(Poller, ReplaysTwelveSamplesInOrder) {
  const auto samples = twelve();
  Fixture fx(samples, two_attr());
  RemotePoller p(fx.url(), two_attr(), std::chrono::milliseconds{1});
  const auto got = poll_n(p, 12);
  ASSERT_EQ(got.size(), 12u);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(got[i].timestamp, samples[i].timestamp);
    EXPECT_EQ(got[i].values, samples[i].values);
  }
  EXPECT_EQ(p.health().emitted, 12u);
}

TEST(Poller, RepeatedSampleIsDropped) {
  Fixture fx(twelve(), two_attr());
  fx.repeat_every(3);
  RemotePoller p(fx.url(), two_attr(), std::chrono::milliseconds{1});
  const auto got = poll_n(p, 17);  // 12 fresh + 5 repeats
  ASSERT_EQ(got.size(), 12u);
  for (std::size_t i = 1; i < got.size(); ++i) EXPECT_LT(got[i - 1].timestamp, got[i].timestamp);
  EXPECT_EQ(p.health().duplicates_dropped, 5u);
}

TEST(Poller, OutageGrowsBackoffThenResumes) {
  const auto samples = twelve();
  Fixture fx(samples, two_attr());
  RemotePoller p(fx.url(), two_attr(), std::chrono::milliseconds{5});
  auto first = poll_n(p, 3);
  fx.go_down(2);
  EXPECT_FALSE(p.poll_once().has_value());
  EXPECT_EQ(p.next_delay(), std::chrono::milliseconds{1000});
  EXPECT_FALSE(p.poll_once().has_value());
  EXPECT_EQ(p.next_delay(), std::chrono::milliseconds{2000});
  EXPECT_EQ(p.health().consecutive_failures, 2u);
  EXPECT_EQ(p.health().last_error, "HTTP status 503");
  auto rest = poll_n(p, 9);
  EXPECT_EQ(p.health().consecutive_failures, 0u);
  EXPECT_EQ(p.next_delay(), std::chrono::milliseconds{5});
  ASSERT_EQ(first.size() + rest.size(), 12u);
  EXPECT_EQ(rest.front().timestamp, samples[3].timestamp);
}

TEST(Poller, UnreachableServerNeverThrows) {
  RemotePoller p("http://127.0.0.1:1/latest", two_attr(), std::chrono::milliseconds{1});
  EXPECT_NO_THROW(EXPECT_FALSE(p.poll_once().has_value()));
  EXPECT_EQ(p.health().failures, 1u);
  EXPECT_FALSE(p.health().last_error.empty());
}

TEST(Poller, RunStopsAfterMaxSamples) {
  Fixture fx(twelve(), two_attr());
  RemotePoller p(fx.url(), two_attr(), std::chrono::milliseconds{1});
  std::vector<WeatherSample> got;
  std::stop_source stop;
  const auto n = p.run(stop.get_token(), [&](const WeatherSample& s) { got.push_back(s); }, 12);
  EXPECT_EQ(n, 12u);
  EXPECT_EQ(got.size(), 12u);
}

TEST(Backoff, DoublesFromOneSecondUpToSixty) {
  BackoffPolicy b;
  EXPECT_EQ(b.delay_after(0), std::chrono::milliseconds{0});
  EXPECT_EQ(b.delay_after(1), std::chrono::milliseconds{1000});
  EXPECT_EQ(b.delay_after(2), std::chrono::milliseconds{2000});
  EXPECT_EQ(b.delay_after(6), std::chrono::milliseconds{32000});
  EXPECT_EQ(b.delay_after(7), std::chrono::milliseconds{60000});
  EXPECT_EQ(b.delay_after(1000), std::chrono::milliseconds{60000});
}

TEST(SampleJson, RoundTripAndMissingValues) {
  const auto schema = two_attr();
  const auto j = nlohmann::json::parse(R"({"ts": "2024-05-01T12:00:00Z", "values": {"t": 21.5}})");
  const auto s = sample_from_json(j, schema);
  EXPECT_EQ(s.values[0], 21.5);
  EXPECT_TRUE(std::isnan(s.values[1]));
  const auto back = sample_from_json(sample_to_json(s, schema), schema);
  EXPECT_EQ(back.timestamp, s.timestamp);
  EXPECT_EQ(back.values[0], 21.5);
  EXPECT_THROW(sample_from_json(nlohmann::json{{"ts", "x"}, {"values", nlohmann::json::object()}}, schema), Error);
  EXPECT_THROW(sample_from_json(nlohmann::json{{"values", 1}}, schema), Error);
}

TEST(Endpoint, SplitsOriginAndPath) {
  const auto e = parse_endpoint("http://host:8080/a/b?x=1");
  EXPECT_EQ(e.origin, "http://host:8080");
  EXPECT_EQ(e.path, "/a/b?x=1");
  EXPECT_EQ(parse_endpoint("http://host").path, "/");
  EXPECT_THROW(parse_endpoint("host/x"), Error);
}
