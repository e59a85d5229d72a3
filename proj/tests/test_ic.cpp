#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace predbias;
using namespace predbias::testing;

namespace {

InformationContentTable table(std::vector<double> freqs, double base = 2.0) {
  return compute_ic(freqs, base, 100);
}

}  // namespace

TEST(ComputeIc, ExactValues) {
  const auto t = table({1.0, 0.25, 0.5, 0.125});
  EXPECT_EQ(t.ic[0], 0.0);
  EXPECT_FALSE(std::signbit(t.ic[0]));
  EXPECT_EQ(t.ic[1], 2.0);
  EXPECT_EQ(t.ic[2], 1.0);
  EXPECT_EQ(t.ic[3], 3.0);
  EXPECT_DOUBLE_EQ(table({0.01}, 10.0).ic[0], 2.0);
  EXPECT_THROW(table({0.5}, 1.0), ConfigError);
  EXPECT_THROW(table({0.5}, 0.5), ConfigError);
  EXPECT_THROW(table({1.5}), ValidationError);
}

TEST(ComputeIc, ZeroFrequencyGetsFlaggedCeiling) {
  const auto t = compute_ic(std::vector<double>{0.75, 0.25, 0.0}, 2.0, 61);
  EXPECT_TRUE(t.ceiling[2]);
  EXPECT_FALSE(t.ceiling[0]);
  EXPECT_EQ(t.ic[2], 6.0);
  EXPECT_GT(t.ic[2], t.ic[1]);
}

// Oracle: -log2 of an independent recount of the serialized predicate labels.
TEST(ComputeIc, MatchesRecomputationOnSynthetic) {
  const auto synth = generate_synthetic(small_synth(42));
  const auto& ds = synth.train;
  std::vector<double> counts(ds.vocabulary.num_predicates(), 0.0);
  double total = 0;
  for (const auto& img : ds.images)
    for (const auto& t : img.triplets) {
      counts[t.predicate_index] += 1;
      total += 1;
    }
  const auto ic = compute_ic(ds);
  EXPECT_EQ(ic.source, IcSource::dataset);
  double fsum = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    fsum += ic.frequency[k];
    if (counts[k] > 0) {
      EXPECT_NEAR(ic.ic[k], -std::log2(counts[k] / total), 1e-12);
    }
  }
  EXPECT_NEAR(fsum, 1.0, 1e-9);
}

TEST(ComputeIc, StrictlyAntiMonotone) {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    double a = rng.uniform01(), b = rng.uniform01();
    if (a == 0 || b == 0 || a == b) continue;
    const auto t = table({a, b});
    EXPECT_EQ(a < b, t.ic[0] > t.ic[1]) << a << " " << b;
  }
}

TEST(ExternalIc, HandArithmeticAndFlags) {
  const auto v = vocab({"man"}, {"on", "near", "under"});
  Json doc;
  doc["on"] = 3;
  doc["near"] = 1;
  doc["elephant"] = 50;
  const auto t = external_ic_from_json(doc, v);
  EXPECT_EQ(t.source, IcSource::external);
  EXPECT_DOUBLE_EQ(t.ic[0], -std::log2(0.75));
  EXPECT_DOUBLE_EQ(t.ic[1], 2.0);
  EXPECT_TRUE(t.ceiling[2]);
  EXPECT_FALSE(t.ceiling[0]);
  EXPECT_GT(t.ic[2], t.ic[1]);
  EXPECT_GE(t.ic[2], t.ic[0]);

  Json equal;
  equal["on"] = 5;
  equal["near"] = 5;
  equal["under"] = 5;
  const auto e = external_ic_from_json(equal, v);
  EXPECT_EQ(e.ic[0], e.ic[1]);
  EXPECT_EQ(e.ic[1], e.ic[2]);

  Json neg;
  neg["on"] = -1;
  EXPECT_THROW(external_ic_from_json(neg, v), ValidationError);
  Json none;
  none["zebra"] = 4;
  EXPECT_THROW(external_ic_from_json(none, v), ValidationError);
}

TEST(Partition, Examples) {
  const auto inc = table({0.4, 0.3, 0.15, 0.1, 0.05});
  const auto p = partition_predicates(inc, 3);
  EXPECT_EQ(p.common, (std::vector<LabelIndex>{0, 1, 2}));
  EXPECT_EQ(p.informative, (std::vector<LabelIndex>{3, 4}));
  const auto all_but_one = partition_predicates(inc, 4);
  EXPECT_EQ(all_but_one.informative, (std::vector<LabelIndex>{4}));
  EXPECT_THROW(partition_predicates(inc, 0), ConfigError);
  EXPECT_THROW(partition_predicates(inc, 5), ConfigError);
}

TEST(Partition, TiesBreakByFrequencyThenIndex) {
  InformationContentTable t = table({0.2, 0.2, 0.2, 0.4});
  auto p = partition_predicates(t, 2);
  EXPECT_EQ(p.common, (std::vector<LabelIndex>{0, 3}));
  t.ic = {1.0, 1.0, 1.0, 1.0};
  t.frequency = {0.1, 0.3, 0.3, 0.3};
  p = partition_predicates(t, 2);
  EXPECT_EQ(p.common, (std::vector<LabelIndex>{1, 2}));
}

TEST(Partition, InvariantUnderMonotoneTransforms) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(20);
    std::vector<double> f(k);
    double s = 0;
    for (auto& x : f) s += (x = 0.01 + rng.uniform01());
    for (auto& x : f) x /= s;
    const auto base = compute_ic(f, 2.0, 1000);
    const std::size_t m = 1 + rng.below(k - 1);
    const auto want = partition_predicates(base, m);
    for (int transform = 0; transform < 3; ++transform) {
      auto t = base;
      for (auto& v : t.ic)
        v = transform == 0 ? 3.0 * v + 7.0 : transform == 1 ? std::exp(v) : std::sqrt(v + 1.0);
      EXPECT_EQ(partition_predicates(t, m), want);
    }
    EXPECT_EQ(partition_predicates(compute_ic(f, 10.0, 1000), m), want);
  }
}

TEST(IcFiles, RoundTrip) {
  const auto v = vocab({"man"}, {"on", "near", "under"});
  const auto t = compute_ic(std::vector<double>{0.75, 0.25, 0.0}, 2.0, 61);
  EXPECT_EQ(ic_table_from_json(ic_table_to_json(t, v), v), t);
  const auto p = PredicatePartition::from_common({1}, 3);
  EXPECT_EQ(partition_from_json(partition_to_json(p, v), v), p);
  EXPECT_THROW(PredicatePartition::from_common({1, 1}, 3), ValidationError);
  EXPECT_THROW(PredicatePartition::from_common({3}, 3), ValidationError);
}
