#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <tuple>

#include "support.hpp"

using namespace predbias;
using namespace predbias::testing;

namespace {

Vocabulary mv() { return vocab({"man", "street", "snow"}, {"on", "near"}); }

}  // namespace

TEST(FrequencyModel, DirectCount) {
  const auto v = mv();
  const auto m = FrequencyModel::fit(
      triplet_dataset(v, {{"man", "on", "street"}, {"man", "on", "street"}, {"man", "near", "street"}}));
  const auto row = m.counts_for(0, 1);
  ASSERT_EQ(row.size(), 2u);
  EXPECT_EQ(row[0], 2);
  EXPECT_EQ(row[1], 1);
  EXPECT_EQ(m.total(), 3);
  EXPECT_TRUE(m.counts_for(1, 0).empty());
}

TEST(FrequencyModel, FitIsDeterministic) {
  Rng rng(1);
  const auto v = generic_vocab(6, 5);
  const auto ds = random_dataset(rng, v, 50, 5);
  EXPECT_EQ(FrequencyModel::fit(ds), FrequencyModel::fit(ds));
  EXPECT_EQ(dump_document(model_to_json(FrequencyModel::fit(ds))), dump_document(model_to_json(FrequencyModel::fit(ds))));
}

// Oracle: tally (subject label, object label, predicate label) strings.
TEST(FrequencyModel, MatchesBruteForceTally) {
  Rng rng(17);
  const auto v = generic_vocab(8, 6);
  Dataset ds{v, {}, SplitTag::train};
  while (ds.num_triplets() < 1000) {
    auto more = random_dataset(rng, v, 1, 6, 0.3);
    more.images[0].image_id = "i" + std::to_string(ds.images.size());
    ds.images.push_back(more.images[0]);
  }
  std::map<std::tuple<std::string, std::string, std::string>, std::int64_t> tally;
  for (const auto& img : ds.images)
    for (const auto& t : img.triplets) {
      std::string s, o;
      for (const auto& obj : img.objects) {
        if (obj.instance_id == t.subject_id) s = v.object_label(obj.label_index);
        if (obj.instance_id == t.object_id) o = v.object_label(obj.label_index);
      }
      ++tally[{s, o, v.predicate_label(t.predicate_index)}];
    }
  const auto m = FrequencyModel::fit(ds);
  std::int64_t seen = 0;
  for (LabelIndex s = 0; s < v.num_objects(); ++s)
    for (LabelIndex o = 0; o < v.num_objects(); ++o) {
      const auto row = m.counts_for(s, o);
      for (LabelIndex k = 0; k < v.num_predicates(); ++k) {
        const auto it = tally.find({v.object_label(s), v.object_label(o), v.predicate_label(k)});
        const std::int64_t expect = it == tally.end() ? 0 : it->second;
        const std::int64_t got = row.empty() ? 0 : row[k];
        ASSERT_EQ(got, expect);
        seen += got;
      }
    }
  EXPECT_EQ(seen, static_cast<std::int64_t>(ds.num_triplets()));
  EXPECT_EQ(m.total(), seen);
}

TEST(FrequencyModel, PredictArithmetic) {
  const auto v = mv();
  FrequencyModel m(v, 0.0);
  m.add(0, 1, 0, 3);
  m.add(0, 1, 1, 1);
  EXPECT_EQ(m.predict(0, 1).values()[0], 0.75);
  EXPECT_EQ(m.predict(0, 1).values()[1], 0.25);

  FrequencyModel unseen(v, 1.0);
  EXPECT_EQ(unseen.predict(2, 2), ScoreDistribution::uniform(2));
  FrequencyModel unseen0(v, 0.0);
  EXPECT_EQ(unseen0.predict(2, 2), ScoreDistribution::uniform(2));

  const auto v3 = vocab({"a"}, {"x", "y", "z"});
  FrequencyModel h(v3, 0.5);
  h.add(0, 0, 0, 2);
  const auto p = h.predict(0, 0);
  EXPECT_DOUBLE_EQ(p[0], 2.5 / 3.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5 / 3.5);
  EXPECT_DOUBLE_EQ(p[2], 0.5 / 3.5);
}

TEST(FrequencyModel, ZeroDenominatorFallsBackToUniform) {
  const auto v = mv();
  FrequencyModel m(v, 0.0);
  m.add(0, 1, 1, 0);
  EXPECT_EQ(m.predict(0, 1), ScoreDistribution::uniform(2));
}

TEST(FrequencyModel, ArgmaxTieBreakAndScaleInvariance) {
  EXPECT_EQ(argmax(std::vector<double>{0.75, 0.25}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.3, 0.3}), 1u);
  const auto v3 = vocab({"a", "b"}, {"x", "y", "z"});
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    FrequencyModel a(v3, 1.0), b(v3, 1.0);
    const auto scale = static_cast<std::int64_t>(rng.between(2, 9));
    for (LabelIndex k = 0; k < 3; ++k) {
      const auto c = static_cast<std::int64_t>(rng.below(5));
      a.add(0, 1, k, c);
      b.add(0, 1, k, c * scale);
    }
    EXPECT_EQ(a.predict_argmax(0, 1), b.predict_argmax(0, 1));
    EXPECT_EQ(a.predict_argmax(0, 1), argmax(a.predict(0, 1).values()));
  }
  FrequencyModel tie(v3, 0.0);
  tie.add(0, 0, 1, 2);
  tie.add(0, 0, 2, 2);
  EXPECT_EQ(tie.predict_argmax(0, 0), 1u);
  EXPECT_EQ(tie.predict_argmax(1, 1), 0u);
}

TEST(FrequencyModel, PredictAlwaysNormalized) {
  Rng rng(3);
  const auto v = generic_vocab(5, 7);
  for (double eps : {0.0, 0.5, 1.0}) {
    const auto m = FrequencyModel::fit(random_dataset(rng, v, 30, 5), eps);
    for (LabelIndex s = 0; s < 5; ++s)
      for (LabelIndex o = 0; o < 5; ++o) {
        const auto p = m.predict(s, o);
        const auto vals = p.values();
        EXPECT_NEAR(std::accumulate(vals.begin(), vals.end(), 0.0), 1.0, 1e-9);
        for (double x : vals) EXPECT_GE(x, 0.0);
      }
  }
}

TEST(FrequencyModel, AddingOneTripletChangesOneCell) {
  Rng rng(8);
  const auto v = generic_vocab(4, 4);
  auto ds = random_dataset(rng, v, 10, 4);
  const auto before = FrequencyModel::fit(ds);
  ds.images.push_back(image(v, "extra", {{0, "o2"}, {1, "o3"}}, {{0, "p1", 1}}));
  const auto after = FrequencyModel::fit(ds);
  for (LabelIndex s = 0; s < 4; ++s)
    for (LabelIndex o = 0; o < 4; ++o)
      for (LabelIndex k = 0; k < 4; ++k) {
        const auto b = before.counts_for(s, o).empty() ? 0 : before.counts_for(s, o)[k];
        const auto a = after.counts_for(s, o).empty() ? 0 : after.counts_for(s, o)[k];
        EXPECT_EQ(a - b, (s == 2 && o == 3 && k == 1) ? 1 : 0);
      }
}

TEST(FrequencyModel, FitOfConcatenationIsCellwiseSum) {
  Rng rng(12);
  const auto v = generic_vocab(5, 4);
  const auto a = random_dataset(rng, v, 20, 5);
  auto b = random_dataset(rng, v, 20, 5);
  for (auto& img : b.images) img.image_id += "b";
  Dataset both = a;
  both.images.insert(both.images.end(), b.images.begin(), b.images.end());
  EXPECT_EQ(FrequencyModel::fit(both), FrequencyModel::fit(a).merged(FrequencyModel::fit(b)));
}

TEST(FrequencyModel, EmptyDatasetAndBadEpsilon) {
  const auto v = mv();
  EXPECT_THROW(FrequencyModel::fit(Dataset{v, {}, SplitTag::train}), ValidationError);
  EXPECT_THROW(FrequencyModel(v, -1.0), ConfigError);
  FrequencyModel m(v, 1.0);
  EXPECT_THROW(m.predict(3, 0), ValidationError);
}

TEST(ModelFile, RoundTripSortedAndChecked) {
  const auto v = vocab({"zebra", "apple", "man"}, {"on", "near"});
  const auto m = FrequencyModel::fit(
      triplet_dataset(v, {{"zebra", "on", "apple"}, {"man", "near", "apple"}, {"apple", "on", "man"}}), 0.5);
  const auto doc = model_to_json(m);
  EXPECT_EQ(doc["counts"][0]["subj"], "apple");
  EXPECT_EQ(doc["counts"][1]["subj"], "man");
  EXPECT_EQ(doc["counts"][2]["subj"], "zebra");
  EXPECT_EQ(model_from_json(doc, v), m);

  const auto other = vocab({"zebra", "apple", "cat"}, {"on", "near"});
  EXPECT_THROW(model_from_json(doc, other), ValidationError);
  auto tampered = doc;
  tampered["total"] = 99;
  EXPECT_THROW(model_from_json(tampered, v), ValidationError);
  auto missing = doc;
  missing.erase("epsilon");
  EXPECT_THROW(model_from_json(missing, v), ConfigError);
}
