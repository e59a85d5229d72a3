#pragma once

// Small builders shared by the unit tests.

#include <atomic>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <unistd.h>

#include "predbias/predbias.hpp"

namespace predbias::testing {

inline Vocabulary vocab(std::vector<std::string> objects, std::vector<std::string> predicates) {
  return Vocabulary(std::move(objects), std::move(predicates));
}

/// Image from (id, object label) pairs and (subj, predicate label, obj) triples.
inline ImageRecord image(const Vocabulary& v, std::string id,
                         std::initializer_list<std::pair<InstanceId, std::string>> objects,
                         std::initializer_list<std::tuple<InstanceId, std::string, InstanceId>> triplets) {
  ImageRecord img;
  img.image_id = std::move(id);
  for (const auto& [iid, label] : objects) img.objects.push_back({iid, *v.find_object(label), std::nullopt});
  for (const auto& [s, p, o] : triplets) img.triplets.push_back({s, o, *v.find_predicate(p)});
  return img;
}

/// One image per triplet: (subject label, predicate label, object label).
inline Dataset triplet_dataset(const Vocabulary& v,
                               const std::vector<std::tuple<std::string, std::string, std::string>>& triplets) {
  Dataset ds{v, {}, SplitTag::train};
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& [s, p, o] = triplets[i];
    ds.images.push_back(image(v, "img" + std::to_string(i), {{0, s}, {1, o}}, {{0, p, 1}}));
  }
  return ds;
}

/// Random dataset: each image has between 2 and max_objects objects and a
/// random subset of ordered pairs annotated.
inline Dataset random_dataset(Rng& rng, const Vocabulary& v, std::size_t images, std::size_t max_objects,
                              double pair_rate = 0.5) {
  Dataset ds{v, {}, SplitTag::train};
  for (std::size_t i = 0; i < images; ++i) {
    ImageRecord img;
    img.image_id = "r" + std::to_string(1000000 + i);
    const auto n = static_cast<std::size_t>(rng.between(2, max_objects));
    for (std::size_t j = 0; j < n; ++j)
      img.objects.push_back({static_cast<InstanceId>(j), static_cast<LabelIndex>(rng.below(v.num_objects())),
                             std::nullopt});
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (a != b && rng.uniform01() < pair_rate)
          img.triplets.push_back({static_cast<InstanceId>(a), static_cast<InstanceId>(b),
                                  static_cast<LabelIndex>(rng.below(v.num_predicates()))});
    ds.images.push_back(std::move(img));
  }
  return ds;
}

/// Generic vocabulary with V objects and K predicates.
inline Vocabulary generic_vocab(std::size_t v, std::size_t k) {
  std::vector<std::string> objects, predicates;
  for (std::size_t i = 0; i < v; ++i) objects.push_back("o" + std::to_string(i));
  for (std::size_t i = 0; i < k; ++i) predicates.push_back("p" + std::to_string(i));
  return Vocabulary(std::move(objects), std::move(predicates));
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("predbias-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// A small synthetic benchmark shared by the integration-style tests.
inline SynthConfig small_synth(std::uint64_t seed = 5) {
  SynthConfig c;
  c.num_objects = 12;
  c.num_predicates = 8;
  c.num_common = 3;
  c.num_images = 300;
  c.num_test_images = 80;
  c.min_objects_per_image = 4;
  c.max_objects_per_image = 12;
  c.contexts_per_predicate = 4;
  c.seed = seed;
  return c;
}

}  // namespace predbias::testing
