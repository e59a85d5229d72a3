#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "support.hpp"

using namespace predbias;
using namespace predbias::testing;

namespace {

Vocabulary man_street() { return vocab({"man", "street", "snow"}, {"on", "near", "standing on"}); }

Dataset parse(const std::string& text, const Vocabulary& v, DuplicatePolicy policy = DuplicatePolicy::keep_first,
              LoadStats* stats = nullptr) {
  std::istringstream in(text);
  return parse_dataset(in, v, SplitTag::train, policy, stats, "mem");
}

template <typename Fn>
ValidationErrc validation_code(Fn&& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected a ValidationError";
  return ValidationErrc::invalid_value;
}

}  // namespace

TEST(Vocabulary, RejectsDegenerateVocabularies) {
  EXPECT_THROW(vocab({}, {"a", "b"}), ValidationError);
  EXPECT_THROW(vocab({"x"}, {"a"}), ValidationError);
  EXPECT_EQ(validation_code([] { vocab({"x", "x"}, {"a", "b"}); }), ValidationErrc::duplicate_label);
  EXPECT_EQ(validation_code([] { vocab({"x"}, {"a", "a"}); }), ValidationErrc::duplicate_label);
}

TEST(Vocabulary, IndexIsListPositionAndSurvivesRoundTrip) {
  const auto v = man_street();
  EXPECT_EQ(*v.find_object("snow"), 2u);
  EXPECT_EQ(*v.find_predicate("standing on"), 2u);
  EXPECT_FALSE(v.find_predicate("under"));
  TempDir dir;
  save_vocabulary(v, dir / "vocab.json");
  const auto back = load_vocabulary(dir / "vocab.json");
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.digest(), v.digest());
}

TEST(LoadDataset, MinimalRecord) {
  const auto v = man_street();
  const auto ds = parse(
      R"({"image_id":"a","objects":[{"id":0,"label":"man"},{"id":1,"label":"street"}],)"
      R"("triplets":[{"subj":0,"pred":"on","obj":1}]})",
      v);
  ASSERT_EQ(ds.images.size(), 1u);
  EXPECT_EQ(ds.num_triplets(), 1u);
  const auto& t = ds.images[0].triplets[0];
  EXPECT_EQ(t.subject_id, 0);
  EXPECT_EQ(t.object_id, 1);
  EXPECT_EQ(t.predicate_index, 0u);
}

TEST(LoadDataset, DanglingInstanceNamesImage) {
  const auto v = man_street();
  try {
    parse(R"({"image_id":"img-77","objects":[{"id":0,"label":"man"}],"triplets":[{"subj":0,"pred":"on","obj":99}]})",
          v);
    FAIL() << "expected dangling-id error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.code(), ValidationErrc::dangling_instance);
    EXPECT_NE(std::string(e.what()).find("img-77"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
  }
}

TEST(LoadDataset, TypedErrorsForEveryMalformation) {
  const auto v = man_street();
  const std::string objs = R"("objects":[{"id":0,"label":"man"},{"id":1,"label":"street"}])";
  EXPECT_EQ(validation_code([&] {
              parse(R"({"image_id":"a","objects":[{"id":0,"label":"cat"}],"triplets":[]})", v);
            }),
            ValidationErrc::unknown_label);
  EXPECT_EQ(validation_code([&] {
              parse(R"({"image_id":"a",)" + objs + R"(,"triplets":[{"subj":0,"pred":"under","obj":1}]})", v);
            }),
            ValidationErrc::unknown_label);
  EXPECT_EQ(validation_code([&] {
              parse(R"({"image_id":"a",)" + objs + R"(,"triplets":[{"subj":0,"pred":"on","obj":0}]})", v);
            }),
            ValidationErrc::self_relation);
  EXPECT_EQ(validation_code([&] {
              parse(R"({"image_id":"a","objects":[{"id":0,"label":"man"},{"id":0,"label":"snow"}],"triplets":[]})", v);
            }),
            ValidationErrc::duplicate_instance);
  EXPECT_EQ(validation_code([&] {
              parse(R"({"image_id":"a","objects":[{"id":0,"label":"man","bbox":[0,0,0,5]}],"triplets":[]})", v);
            }),
            ValidationErrc::bad_bbox);
  EXPECT_EQ(validation_code([&] {
              parse(R"({"image_id":"a","objects":[],"triplets":[]})"
                    "\n"
                    R"({"image_id":"a","objects":[],"triplets":[]})",
                    v);
            }),
            ValidationErrc::duplicate_image);
  EXPECT_EQ(validation_code([&] {
              parse(R"({"image_id":"a",)" + objs +
                        R"(,"triplets":[{"subj":0,"pred":"on","obj":1},{"subj":0,"pred":"near","obj":1}]})",
                    v, DuplicatePolicy::reject);
            }),
            ValidationErrc::duplicate_pair);
}

TEST(LoadDataset, ParseErrorsCarryLineNumbers) {
  const auto v = man_street();
  try {
    parse("\n" R"({"image_id":"a","objects":[],"triplets":[]})" "\n{not json\n", v);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  try {
    parse(R"({"objects":[],"triplets":[]})", v);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("image_id"), std::string::npos);
  }
}

TEST(LoadDataset, DuplicatePairKeepsFirstAndCounts) {
  const auto v = man_street();
  LoadStats stats;
  const auto ds = parse(R"({"image_id":"a","objects":[{"id":0,"label":"man"},{"id":1,"label":"street"}],)"
                        R"("triplets":[{"subj":0,"pred":"near","obj":1},{"subj":0,"pred":"on","obj":1},)"
                        R"({"subj":1,"pred":"on","obj":0}]})",
                        v, DuplicatePolicy::keep_first, &stats);
  EXPECT_EQ(stats.duplicates_dropped, 1u);
  EXPECT_EQ(stats.records, 1u);
  ASSERT_EQ(ds.images[0].triplets.size(), 2u);
  EXPECT_EQ(ds.images[0].triplets[0].predicate_index, 1u);
}

TEST(SaveDataset, RoundTripAndByteDeterminism) {
  const auto v = man_street();
  Dataset ds{v, {}, SplitTag::train};
  auto img = image(v, "x", {{3, "man"}, {7, "snow"}, {1, "street"}}, {{3, "standing on", 7}, {7, "near", 1}});
  img.objects[0].bbox = BBox{1.5, 2.25, 10, 20};
  ds.images.push_back(img);
  ds.images.push_back(image(v, "empty", {{0, "man"}}, {}));
  TempDir dir;
  save_dataset(ds, dir / "ds.jsonl");
  const auto back = load_dataset(dir / "ds.jsonl", v);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(serialize_dataset(ds), serialize_dataset(back));
  EXPECT_EQ(serialize_dataset(ds), read_file(dir / "ds.jsonl"));
}

TEST(SaveDataset, EmptyDatasetRoundTrips) {
  const auto v = man_street();
  TempDir dir;
  save_dataset(Dataset{v, {}, SplitTag::train}, dir / "e.jsonl");
  EXPECT_EQ(read_file(dir / "e.jsonl"), "");
  EXPECT_TRUE(load_dataset(dir / "e.jsonl", v).images.empty());
}

TEST(SaveDataset, SyntheticRoundTrip) {
  const auto syn = generate_synthetic(small_synth(3));
  TempDir dir;
  save_dataset(syn.train, dir / "t.jsonl");
  EXPECT_EQ(load_dataset(dir / "t.jsonl", syn.train.vocabulary), syn.train);
}

TEST(SaveDataset, RefusesInvalidDataset) {
  const auto v = man_street();
  Dataset ds{v, {image(v, "a", {{0, "man"}}, {})}, SplitTag::train};
  ds.images[0].triplets.push_back({0, 5, 0});
  TempDir dir;
  EXPECT_THROW(save_dataset(ds, dir / "bad.jsonl"), ValidationError);
}

TEST(PredicateFrequencies, DirectCount) {
  const auto v = vocab({"a"}, {"on", "near"});
  const auto ds = triplet_dataset(v, {{"a", "on", "a"}, {"a", "on", "a"}, {"a", "near", "a"}});
  const auto f = predicate_frequencies(ds);
  EXPECT_DOUBLE_EQ(f[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f[1], 1.0 / 3.0);
}

TEST(PredicateFrequencies, SinglePredicate) {
  const auto v = vocab({"a"}, {"on", "near", "has"});
  const auto ds = triplet_dataset(v, {{"a", "near", "a"}, {"a", "near", "a"}});
  EXPECT_EQ(predicate_frequencies(ds), (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(PredicateFrequencies, EmptyDatasetIsAnError) {
  const auto v = man_street();
  Dataset ds{v, {image(v, "a", {{0, "man"}}, {})}, SplitTag::train};
  EXPECT_EQ(validation_code([&] { predicate_frequencies(ds); }), ValidationErrc::empty_dataset);
}

// Oracle: recount predicate strings straight from the serialized file.
TEST(PredicateFrequencies, MatchesRecountOfSerializedText) {
  SynthConfig c;
  c.num_images = 800;
  c.num_test_images = 1;
  c.seed = 7;
  const auto syn = generate_synthetic(c);
  std::map<std::string, double> recount;
  double total = 0;
  std::istringstream lines(serialize_dataset(syn.train));
  for (std::string line; std::getline(lines, line);) {
    const auto doc = nlohmann::json::parse(line);
    for (const auto& t : doc["triplets"]) {
      recount[t["pred"].get<std::string>()] += 1;
      total += 1;
    }
  }
  const auto f = predicate_frequencies(syn.train);
  double sum = 0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    EXPECT_EQ(f[k], recount[syn.train.vocabulary.predicate_label(static_cast<LabelIndex>(k))] / total);
    sum += f[k];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(PredicateFrequencies, EquivariantUnderPredicateRelabeling) {
  Rng rng(4);
  const auto v = generic_vocab(5, 6);
  const auto ds = random_dataset(rng, v, 40, 5);
  const std::vector<LabelIndex> perm{3, 0, 5, 1, 4, 2};
  std::vector<std::string> labels(6);
  for (std::size_t k = 0; k < 6; ++k) labels[perm[k]] = v.predicate_label(static_cast<LabelIndex>(k));
  Dataset relabeled{Vocabulary(v.object_labels(), labels), ds.images, SplitTag::train};
  for (auto& img : relabeled.images)
    for (auto& t : img.triplets) t.predicate_index = perm[t.predicate_index];
  const auto a = predicate_frequencies(ds);
  const auto b = predicate_frequencies(relabeled);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(a[k], b[perm[k]]);
}
