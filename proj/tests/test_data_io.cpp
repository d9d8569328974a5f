#include "tt2rnn/data_io.hpp"
#include "tt2rnn/io.hpp"
#include "tt2rnn/metrics.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

using namespace tt2rnn;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tt2rnn_test_" + name)).string();
}

CsvSchema speed_schema() {
  CsvSchema s;
  s.timestamp_col = "time";
  s.value_cols = {"speed"};
  return s;
}

}  // namespace

TEST(RandomRnnTask, NoiselessTargetsMatchGenerator) {
  TaskOptions o;
  o.N = 50;
  o.seed = 3;
  const auto task = gen_random_rnn_task(o);
  EXPECT_EQ(task.target.n(), 5u);
  EXPECT_EQ(task.target.d(), 3u);
  EXPECT_EQ(task.target.p(), 2u);
  EXPECT_EQ(task.d_l.uniform_length(), 2u);
  EXPECT_EQ(task.d_2l.uniform_length(), 4u);
  EXPECT_EQ(task.d_2l1.uniform_length(), 5u);
  EXPECT_EQ(task.test.size(), 1000u);
  EXPECT_EQ(task.test.uniform_length(), 6u);
  for (const auto* ds : {&task.d_l, &task.d_2l, &task.d_2l1, &task.test}) {
    EXPECT_EQ(ds->size() == 1000u || ds->size() == 50u, true);
    for (const auto& ex : ds->examples()) EXPECT_EQ(ex.y, rnn_evaluate(task.target, ex.x));
  }
}

TEST(RandomRnnTask, SeedReproducibility) {
  TaskOptions o;
  o.N = 20;
  o.sigma2 = 0.5;
  o.seed = 17;
  const auto a = gen_random_rnn_task(o);
  const auto b = gen_random_rnn_task(o);
  EXPECT_EQ(a.target.A, b.target.A);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(a.d_2l1[i].x, b.d_2l1[i].x);
    EXPECT_EQ(a.d_2l1[i].y, b.d_2l1[i].y);
  }
  o.seed = 18;
  EXPECT_NE(gen_random_rnn_task(o).target.A, a.target.A);
}

TEST(RandomRnnTask, NoiseVarianceMatches) {
  TaskOptions o;
  o.N = 10000;
  o.sigma2 = 0.7;
  o.seed = 5;
  o.test_size = 1;
  const auto task = gen_random_rnn_task(o);
  double ss = 0.0;
  std::size_t count = 0;
  for (const auto& ex : task.d_l.examples()) {
    ss += (ex.y - rnn_evaluate(task.target, ex.x)).squaredNorm();
    count += static_cast<std::size_t>(ex.y.size());
  }
  EXPECT_NEAR(ss / static_cast<double>(count), 0.7, 0.05 * 0.7);
  EXPECT_DOUBLE_EQ(task.d_l.metadata().noise_variance, 0.7);
  EXPECT_DOUBLE_EQ(task.test.metadata().noise_variance, 0.0);
}

TEST(ArithmeticTask, ClosedFormExamples) {
  const std::vector<Vector> seq = {vec({1, 2}), vec({3, 5})};
  EXPECT_DOUBLE_EQ(arithmetic_function(seq), 3.0);
  const std::vector<Vector> flat = {vec({4, 4}), vec({-1, -1}), vec({2.5, 2.5})};
  EXPECT_DOUBLE_EQ(arithmetic_function(flat), 0.0);

  const auto m = arithmetic_reference_rnn();
  std::vector<Vector> biased;
  for (const auto& x : seq) biased.push_back(with_bias(x));
  EXPECT_NEAR(rnn_evaluate(m, biased)[0], 3.0, 1e-12);
}

TEST(ArithmeticTask, ReferenceModelMatchesClosedForm) {
  TaskOptions o;
  o.N = 100;
  o.seed = 9;
  const auto task = gen_arithmetic_task(o);
  EXPECT_EQ(task.target.n(), 2u);
  EXPECT_EQ(task.target.d(), 3u);
  for (const auto& ex : task.d_2l1.examples()) {
    ASSERT_EQ(ex.x[0].size(), 3);
    EXPECT_DOUBLE_EQ(ex.x[0][2], 1.0);
    std::vector<Vector> raw;
    for (const auto& x : ex.x) raw.push_back(x.head(2));
    EXPECT_NEAR(ex.y[0], arithmetic_function(raw), 1e-10);
    EXPECT_NEAR(rnn_evaluate(task.target, ex.x)[0], arithmetic_function(raw), 1e-10);
  }
}

TEST(PerStep, DatasetsSplitPrefixes) {
  const auto m = random_rnn(3, 2, 2, 0.5, 21);
  std::mt19937_64 rng(1);
  const auto seqs = gen_per_step_dataset(m, 12, 5, 0.0, rng);
  const auto parts = per_step_datasets(seqs, 2);
  ASSERT_EQ(parts.size(), 5u);
  for (const auto& [l, ds] : parts) {
    EXPECT_EQ(ds.size(), 12u);
    EXPECT_EQ(ds.uniform_length(), l);
    for (const auto& ex : ds.examples()) {
      EXPECT_LT((ex.y - rnn_evaluate(m, ex.x)).norm(), 1e-12);
    }
  }
}

TEST(PerStep, TooShortSequencesRejected) {
  const auto m = random_rnn(2, 2, 1, 0.5, 22);
  std::mt19937_64 rng(2);
  const auto seqs = gen_per_step_dataset(m, 3, 4, 0.0, rng);
  EXPECT_THROW(per_step_datasets(seqs, 2), std::invalid_argument);
  EXPECT_NO_THROW(per_step_datasets(seqs, 1));
}

TEST(Csv, FiveMinuteReadingsAverageToOneHour) {
  std::ostringstream csv;
  csv << "time,speed\n";
  for (int i = 0; i < 12; ++i) csv << 1700000000 - 1700000000 % 3600 + 300 * i << ",4.25\n";
  std::istringstream in(csv.str());
  const auto series = aggregate_csv(in, speed_schema());
  ASSERT_EQ(series.values.size(), 1u);
  EXPECT_DOUBLE_EQ((*series.values[0])[0], 4.25);
}

TEST(Csv, RampAveragesToMidpoint) {
  std::ostringstream csv;
  csv << "time,speed\n";
  for (int i = 0; i < 12; ++i) csv << "2024-03-01 10:" << (i * 5 < 10 ? "0" : "") << i * 5 << ":00," << i << "\n";
  std::istringstream in(csv.str());
  const auto series = aggregate_csv(in, speed_schema());
  ASSERT_EQ(series.values.size(), 1u);
  EXPECT_DOUBLE_EQ((*series.values[0])[0], 5.5);
}

TEST(Csv, WindowCount) {
  std::ostringstream csv;
  csv << "time,speed\n";
  for (int h = 0; h < 10; ++h) csv << h * 3600 << "," << h << "\n";
  std::istringstream in(csv.str());
  auto schema = speed_schema();
  schema.window = 3;
  schema.horizon = 1;
  const auto ds = load_sequences_csv(in, schema);
  // start s uses buckets s..s+2 and targets s+3: s = 0..6.
  ASSERT_EQ(ds.size(), 7u);
  EXPECT_EQ(ds.uniform_length(), 3u);
  EXPECT_DOUBLE_EQ(ds[0].x[2][0], 2.0);
  EXPECT_DOUBLE_EQ(ds[0].y[0], 3.0);
  EXPECT_DOUBLE_EQ(ds[6].y[0], 9.0);
}

TEST(Csv, GapPolicies) {
  std::ostringstream csv;
  csv << "time,speed\n";
  for (int h : {0, 1, 2, 4, 5, 6}) csv << h * 3600 << "," << 2 * h << "\n";
  auto schema = speed_schema();
  schema.window = 2;
  {
    std::istringstream in(csv.str());
    const auto ds = load_sequences_csv(in, schema);
    EXPECT_EQ(ds.size(), 2u);  // windows starting at 0 and 4
  }
  schema.gaps = GapPolicy::Interpolate;
  {
    std::istringstream in(csv.str());
    const auto ds = load_sequences_csv(in, schema);
    ASSERT_EQ(ds.size(), 5u);
    EXPECT_DOUBLE_EQ(ds[1].y[0], 6.0);  // interpolated bucket 3
  }
}

TEST(Csv, BiasAndTargetColumn) {
  std::istringstream in("time,a,b\n0,1,10\n3600,2,20\n7200,3,30\n");
  CsvSchema s;
  s.timestamp_col = "time";
  s.value_cols = {"a", "b"};
  s.target_col = "b";
  s.window = 2;
  s.add_bias = true;
  const auto ds = load_sequences_csv(in, s);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].x[0], vec({1, 10, 1}));
  EXPECT_DOUBLE_EQ(ds[0].y[0], 30.0);
}

TEST(Csv, MalformedRowReportsLine) {
  std::istringstream in("time,speed\n0,1\n3600,abc\n");
  try {
    aggregate_csv(in, speed_schema());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream short_row("time,speed\n0\n");
  EXPECT_THROW(aggregate_csv(short_row, speed_schema()), ParseError);
  std::istringstream bad_time("time,speed\nyesterday,1\n");
  EXPECT_THROW(aggregate_csv(bad_time, speed_schema()), ParseError);
  std::istringstream no_col("t,speed\n0,1\n");
  EXPECT_THROW(aggregate_csv(no_col, speed_schema()), ParseError);
}

TEST(Timestamps, IsoAndEpoch) {
  EXPECT_EQ(parse_timestamp("1970-01-01 01:00:00"), 3600);
  EXPECT_EQ(parse_timestamp("1970-01-02T00:00:00"), 86400);
  EXPECT_EQ(parse_timestamp("1970-01-02"), 86400);
  EXPECT_EQ(parse_timestamp("7200"), 7200);
  EXPECT_FALSE(parse_timestamp("1970-01-01 01:00:00 junk").has_value());
}

TEST(ModelJson, RoundTripIsExact) {
  const auto m = random_rnn(3, 2, 2, 0.37, 31);
  const auto back = model_from_json(json::parse(model_to_json(m).dump()));
  EXPECT_EQ(back.h0, m.h0);
  EXPECT_EQ(back.A, m.A);
  EXPECT_EQ(back.Omega, m.Omega);
}

TEST(ModelJson, RejectsInconsistentShapes) {
  auto j = model_to_json(random_rnn(2, 2, 1, 0.5, 32));
  j["n"] = 3;
  EXPECT_THROW(model_from_json(j), std::invalid_argument);
}

TEST(DatasetJsonl, RoundTripIsLossless) {
  const auto m = random_rnn(2, 3, 2, 0.5, 41);
  std::mt19937_64 rng(4);
  const auto ds = gen_per_step_dataset(m, 7, 3, 0.3, rng);
  const auto path = temp_path("ds.jsonl");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  std::remove(path.c_str());
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back[i].x, ds[i].x);
    EXPECT_EQ(back[i].y, ds[i].y);
    EXPECT_EQ(back[i].y_steps, ds[i].y_steps);
  }
}

TEST(DatasetJsonl, MalformedLineReportsNumber) {
  std::istringstream in("{\"x\": [[1]], \"y\": [2]}\n\n{\"x\": [[1]]}\n");
  try {
    read_dataset_jsonl(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Metrics, HandComputedCase) {
  SequenceDataset ds;
  SequenceExample a;
  a.y = vec({2.0});
  SequenceExample b;
  b.y = vec({-4.0});
  ds.push_back(a);
  ds.push_back(b);
  // Predict 1 everywhere: errors -1 and 5.
  const auto m = compute_metrics(ds, [](const std::vector<Vector>&) { return vec({1.0}); });
  EXPECT_DOUBLE_EQ(m.mse, 13.0);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(13.0));
  EXPECT_DOUBLE_EQ(m.mae, 3.0);
  EXPECT_DOUBLE_EQ(m.mape, 100.0 * (0.5 + 1.25) / 2.0);
  EXPECT_DOUBLE_EQ(zero_mse(ds), 10.0);
}

TEST(Metrics, ExactAndZeroModels) {
  TaskOptions o;
  o.N = 10;
  const auto task = gen_random_rnn_task(o);
  EXPECT_DOUBLE_EQ(mse(task.target, task.test), 0.0);
  auto zero_targets = task.test;
  for (auto& ex : zero_targets.examples()) ex.y.setZero();
  EXPECT_DOUBLE_EQ(mse(Linear2RNN::zeros(5, 3, 2), zero_targets), 0.0);
}
