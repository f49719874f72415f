#include <cmath>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "prepare/core/embed.hpp"
#include "prepare/core/labels.hpp"
#include "prepare/core/matrix.hpp"
#include "prepare/core/random.hpp"
#include "prepare/core/run.hpp"
#include "support.hpp"

namespace prepare {
namespace {

using support::TempDir;

std::string header() {
  std::string h = "timestamp";
  for (std::size_t s = 0; s < kFrameDim; ++s) h += "," + channel_column(s);
  return h;
}

std::string csv_row(double t, double fill) {
  std::string row = text::format_double(t);
  for (std::size_t s = 0; s < kFrameDim; ++s) row += "," + text::format_double(fill + static_cast<double>(s));
  return row;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

TEST(ChannelColumn, NamesFollowJointMajorOrder) {
  EXPECT_EQ(channel_column(0), "j00_pos");
  EXPECT_EQ(channel_column(1), "j00_vel");
  EXPECT_EQ(channel_column(2), "j00_eff");
  EXPECT_EQ(channel_column(4), "j01_vel");
  EXPECT_EQ(channel_column(35), "j11_eff");
}

TEST(LoadRun, SixtyRowsAtSixteenHertz) {
  TempDir dir;
  std::vector<std::string> lines{header()};
  for (int i = 0; i < 60; ++i) lines.push_back(csv_row(i * 3.6 / 60.0, i));
  write_lines(dir.file("r.csv"), lines);
  const prepare::Run run = load_run(dir.file("r.csv"));
  EXPECT_EQ(run.size(), 60u);
  EXPECT_NEAR(run.sample_period(), 0.06, 1e-12);
  EXPECT_EQ(run.id(), "r");
  EXPECT_DOUBLE_EQ(run.values(7)[3], 10.0);
  EXPECT_FALSE(run.has_positions());
}

TEST(LoadRun, SingleFrameAcceptsAnyPeriod) {
  TempDir dir;
  write_lines(dir.file("one.csv"), {header(), csv_row(12.5, 0)});
  const prepare::Run run = load_run(dir.file("one.csv"));
  EXPECT_EQ(run.size(), 1u);
}

TEST(LoadRun, ReversedTimestampsAreMalformed) {
  TempDir dir;
  std::vector<std::string> lines{header()};
  for (int i = 9; i >= 0; --i) lines.push_back(csv_row(i * 0.06, 0));
  write_lines(dir.file("rev.csv"), lines);
  EXPECT_THROW(load_run(dir.file("rev.csv")), MalformedRun);
}

TEST(LoadRun, GapBeyondJitterToleranceIsMalformed) {
  TempDir dir;
  std::vector<std::string> lines{header()};
  for (int i = 0; i < 10; ++i) lines.push_back(csv_row(i * 0.06 + (i >= 5 ? 0.03 : 0.0), 0));
  write_lines(dir.file("gap.csv"), lines);
  EXPECT_THROW(load_run(dir.file("gap.csv")), MalformedRun);

  // 5% jitter is tolerated.
  lines.resize(1);
  for (int i = 0; i < 10; ++i) lines.push_back(csv_row(i * 0.06 + (i % 2 ? 0.003 : 0.0), 0));
  write_lines(dir.file("jitter.csv"), lines);
  EXPECT_NO_THROW(load_run(dir.file("jitter.csv")));
}

TEST(LoadRun, WrongColumnCountIsSchemaMismatch) {
  TempDir dir;
  std::string h = "timestamp";
  for (std::size_t s = 0; s < 35; ++s) h += "," + channel_column(s);
  write_lines(dir.file("short.csv"), {h, "0,1"});
  EXPECT_THROW(load_run(dir.file("short.csv")), SchemaMismatch);

  write_lines(dir.file("ragged.csv"), {header(), csv_row(0, 0), "0.06,1,2"});
  EXPECT_THROW(load_run(dir.file("ragged.csv")), SchemaMismatch);

  write_lines(dir.file("extra.csv"), {header() + ",bogus", csv_row(0, 0) + ",1"});
  EXPECT_THROW(load_run(dir.file("extra.csv")), SchemaMismatch);
}

TEST(LoadRun, NonFiniteValueReportsFrame) {
  TempDir dir;
  std::vector<std::string> lines{header()};
  for (int i = 0; i < 6; ++i) lines.push_back(csv_row(i * 0.06, 0));
  lines[4] = "0.18,nan" + lines[4].substr(lines[4].find(',', 5));
  write_lines(dir.file("nan.csv"), lines);
  try {
    load_run(dir.file("nan.csv"));
    FAIL() << "expected CorruptSample";
  } catch (const CorruptSample& e) {
    EXPECT_EQ(e.frame_index(), 3u);
  }
}

TEST(LoadRun, MissingFileIsIoError) { EXPECT_THROW(load_run("/nonexistent/run.csv"), IoError); }

TEST(SaveRun, CsvAndJsonlRoundTripExactly) {
  TempDir dir;
  auto frames = support::random_frames(25, 0.06, 3);
  for (std::size_t i = 0; i < frames.size(); ++i)
    frames[i].robot_position = std::array<double, 2>{0.1 * static_cast<double>(i), -1.0 / 3.0};
  const prepare::Run run(frames, "orig");
  for (const char* name : {"a.csv", "a.jsonl"}) {
    save_run(run, dir.file(name));
    const prepare::Run back = load_run(dir.file(name));
    ASSERT_EQ(back.size(), run.size());
    ASSERT_TRUE(back.has_positions());
    for (std::size_t i = 0; i < run.size(); ++i) {
      EXPECT_EQ(back.timestamp(i), run.timestamp(i));
      for (std::size_t s = 0; s < kFrameDim; ++s) EXPECT_EQ(back.values(i)[s], run.values(i)[s]);
      EXPECT_EQ(back.robot_position(i), run.robot_position(i));
    }
  }
}

TEST(Labels, CsvRoundTrip) {
  TempDir dir;
  LabelSet set;
  set.add("b", {4, Label::slip, LabelSource::human_confirmed});
  set.add("a", {9, Label::no_slip, LabelSource::anomaly_candidate});
  set.add("a", {2, Label::slip, LabelSource::synthetic_ground_truth});
  save_labels(set, dir.file("labels.csv"));
  const auto back = load_labels(dir.file("labels.csv"));
  EXPECT_EQ(back.runs(), set.runs());
  EXPECT_EQ(back.count(Label::slip), 2u);
  EXPECT_EQ(back.for_run("a").front().frame_index, 2u);
}

TEST(Labels, DuplicateFrameIsRejected) {
  LabelSet set;
  set.add("a", {1, Label::slip, LabelSource::human_confirmed});
  EXPECT_THROW(set.add("a", {1, Label::no_slip, LabelSource::human_confirmed}), SchemaMismatch);
  EXPECT_NO_THROW(set.add("b", {1, Label::no_slip, LabelSource::human_confirmed}));
}

TEST(Labels, BadHeaderAndUnknownValues) {
  EXPECT_THROW(LabelSet::from_csv_lines({"run,frame,label,source"}), SchemaMismatch);
  EXPECT_THROW(LabelSet::from_csv_lines({"run_id,frame_index,label,source", "a,1,maybe,human_confirmed"}),
               SchemaMismatch);
  EXPECT_THROW(LabelSet::from_csv_lines({"run_id,frame_index,label,source", "a,x,slip,human_confirmed"}),
               SchemaMismatch);
}

TEST(Labels, DenseLabelsRejectOutOfRange) {
  const std::vector<LabelRecord> recs{{3, Label::slip, LabelSource::human_confirmed}};
  const auto dense = dense_labels(recs, 5);
  EXPECT_EQ(dense, (std::vector<std::uint8_t>{0, 0, 0, 1, 0}));
  EXPECT_THROW(dense_labels(recs, 3), IndexError);
}

TEST(Embed, SixtySamplesGive2160Features) {
  const prepare::Run run = support::random_run(80, 1);
  const auto samples = embed(run, {}, 60, 0);
  ASSERT_FALSE(samples.empty());
  EXPECT_EQ(samples.front().features.size(), 2160u);
}

TEST(Embed, SingleSampleIsIdentity) {
  const prepare::Run run = support::random_run(10, 2);
  const std::vector<LabelRecord> labels{{4, Label::slip, LabelSource::human_confirmed}};
  const auto samples = embed(run, labels, 1, 0);
  ASSERT_EQ(samples.size(), 10u);
  for (std::size_t t = 0; t < samples.size(); ++t) {
    EXPECT_TRUE(std::equal(samples[t].features.begin(), samples[t].features.end(), run.values(t).begin()));
    EXPECT_EQ(samples[t].target, t == 4 ? Label::slip : Label::no_slip);
  }
}

TEST(Embed, AnchorCountMatchesEnumeration) {
  const prepare::Run run = support::random_run(100, 3);
  std::size_t anchors = 0;
  for (std::size_t t = 0; t < 100; ++t)
    if (t + 1 >= 60 && t + 12 <= 99) ++anchors;
  EXPECT_EQ(anchors, 29u);
  const auto samples = embed(run, {}, 60, 12);
  EXPECT_EQ(samples.size(), anchors);
  EXPECT_EQ(samples.front().origin.frame, 59u);
  EXPECT_EQ(samples.back().origin.frame, 87u);
}

TEST(Embed, TooShortRunIsInsufficientHistory) {
  const prepare::Run run = support::random_run(70, 4);
  EXPECT_THROW(embed(run, {}, 60, 11), InsufficientHistory);
  EXPECT_NO_THROW(embed(run, {}, 60, 10));
  EXPECT_THROW(embed(run, {}, 0, 0), InvalidConfig);
}

TEST(Embed, FeaturesReconstructRunValues) {
  const auto frames = support::tagged_frames(30);
  const prepare::Run run(frames);
  const std::size_t k = 7;
  for (const auto& s : embed(run, {}, k, 2)) {
    for (std::size_t j = 0; j < s.features.size(); ++j) {
      const auto f = feature_name(j, k);
      const std::size_t slot = f.joint * kChannelsPerJoint + static_cast<std::size_t>(f.channel);
      ASSERT_EQ(s.features[j], frames[s.origin.frame - f.lag].values[slot]);
    }
  }
}

TEST(Embed, OrderPreservingAndDeterministic) {
  const prepare::Run run = support::random_run(50, 5);
  const auto a = embed(run, {}, 5, 3);
  const auto b = embed(run, {}, 5, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].features, b[i].features);
    if (i + 1 < a.size()) {
      EXPECT_LT(a[i].origin.frame, a[i + 1].origin.frame);
    }
  }
}

TEST(Embed, LookaheadChangesOnlyTargets) {
  const prepare::Run run = support::random_run(60, 6);
  const std::vector<LabelRecord> labels{{30, Label::slip, LabelSource::human_confirmed},
                                        {31, Label::slip, LabelSource::human_confirmed}};
  const auto now = embed(run, labels, 10, 0);
  const auto ahead = embed(run, labels, 10, 5);
  std::size_t shared = 0;
  for (const auto& s : ahead) {
    const auto& base = now[s.origin.frame - 9];
    ASSERT_EQ(base.origin.frame, s.origin.frame);
    EXPECT_EQ(base.features, s.features);
    EXPECT_EQ(s.target, (s.origin.frame + 5 == 30 || s.origin.frame + 5 == 31) ? Label::slip : Label::no_slip);
    EXPECT_EQ(s.lookahead_n, 5u);
    ++shared;
  }
  EXPECT_EQ(shared, 46u);
}

TEST(EmbedRuns, LazyMatrixMatchesEagerEmbedding) {
  std::vector<prepare::Run> runs{support::random_run(40, 7, "a"), support::random_run(8, 8, "b"),
                        support::random_run(25, 9, "c")};
  LabelSet labels;
  labels.add("c", {20, Label::slip, LabelSource::human_confirmed});
  const auto ds = embed_runs(runs, labels, 10, 2);
  std::size_t row = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].size() < 12) continue;
    for (const auto& s : embed(runs[r], labels.for_run(runs[r].id()), 10, 2, r)) {
      ASSERT_EQ(ds.origin[row], s.origin);
      EXPECT_EQ(ds.y[row], s.target == Label::slip ? 1 : 0);
      for (std::size_t j = 0; j < ds.X.cols(); ++j) ASSERT_EQ(ds.X(row, j), s.features[j]);
      EXPECT_EQ(window_at(runs[r], s.origin.frame, 10), s.features);
      ++row;
    }
  }
  EXPECT_EQ(row, ds.size());
  EXPECT_EQ(ds.positives(), 1u);
  EXPECT_THROW(embed_runs(std::span<const prepare::Run>(runs).subspan(1, 1), labels, 10, 2), InsufficientHistory);
}

TEST(FeatureName, LayoutExamples) {
  EXPECT_EQ(feature_name(0, 60), (FeatureIndex{0, Channel::position, 0}));
  EXPECT_EQ(feature_name(36, 60), (FeatureIndex{0, Channel::position, 1}));
  EXPECT_EQ(feature_name(2159, 60), (FeatureIndex{11, Channel::effort, 59}));
  EXPECT_EQ(feature_label(40, 60), "j01_vel@t-1");
}

TEST(FeatureName, BijectiveOverAllIndices) {
  std::set<std::tuple<std::size_t, int, std::size_t>> seen;
  for (std::size_t i = 0; i < 2160; ++i) {
    const auto f = feature_name(i, 60);
    EXPECT_EQ(flat_index(f, 60), i);
    seen.insert({f.joint, static_cast<int>(f.channel), f.lag});
  }
  EXPECT_EQ(seen.size(), 2160u);
}

TEST(FeatureName, OutOfRangeIsIndexError) {
  EXPECT_THROW(feature_name(2160, 60), IndexError);
  EXPECT_THROW(feature_name(0, 0), IndexError);
  EXPECT_THROW(flat_index({12, Channel::position, 0}, 60), IndexError);
}

TEST(Random, SampleWithoutReplacementIsDistinctAndSorted) {
  Rng rng(11);
  const auto s = sample_without_replacement(rng, 100, 30);
  ASSERT_EQ(s.size(), 30u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 30u);
  EXPECT_LT(s.back(), 100u);
  EXPECT_EQ(sample_without_replacement(rng, 5, 9).size(), 5u);
}

TEST(Random, DerivedSeedsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(42, 1), derive_seed(42, 1));
  EXPECT_NE(derive_seed(42, 1), derive_seed(42, 2));
  EXPECT_NE(derive_seed(42, 1), derive_seed(43, 1));
}

TEST(Matrix, ViewsSelectRowsAndColumns) {
  DenseMatrix m(3, 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) m.row(i)[j] = static_cast<double>(10 * i + j);
  RowView rows(m, {2, 0});
  EXPECT_EQ(rows.rows(), 2u);
  EXPECT_EQ(rows(0, 3), 23.0);
  ColumnView cols(m, {3, 1});
  EXPECT_EQ(cols.cols(), 2u);
  EXPECT_EQ(cols(1, 1), 11.0);
}

}  // namespace
}  // namespace prepare
