#pragma once

// Relationship-triplet datasets: vocabularies, images, triplets, and their
// line-delimited JSON serialization.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "predbias/error.hpp"
#include "predbias/io.hpp"

namespace predbias {

using LabelIndex = std::uint32_t;
using InstanceId = std::int64_t;

class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<std::string> object_labels, std::vector<std::string> predicate_labels)
      : objects_(std::move(object_labels)), predicates_(std::move(predicate_labels)) {
    if (objects_.empty())
      throw ValidationError(ValidationErrc::invalid_value, "vocabulary needs at least one object label");
    if (predicates_.size() < 2)
      throw ValidationError(ValidationErrc::invalid_value,
                            "vocabulary needs at least two predicate labels");
    index_labels(objects_, object_index_, "object");
    index_labels(predicates_, predicate_index_, "predicate");
  }

  std::size_t num_objects() const noexcept { return objects_.size(); }
  std::size_t num_predicates() const noexcept { return predicates_.size(); }

  const std::vector<std::string>& object_labels() const noexcept { return objects_; }
  const std::vector<std::string>& predicate_labels() const noexcept { return predicates_; }
  const std::string& object_label(LabelIndex i) const { return objects_.at(i); }
  const std::string& predicate_label(LabelIndex i) const { return predicates_.at(i); }

  std::optional<LabelIndex> find_object(std::string_view label) const {
    return find(object_index_, label);
  }
  std::optional<LabelIndex> find_predicate(std::string_view label) const {
    return find(predicate_index_, label);
  }

  Json to_json() const {
    Json doc;
    doc["object_labels"] = objects_;
    doc["predicate_labels"] = predicates_;
    return doc;
  }

  /// Digest of the canonical vocabulary document; artifacts carry it so a
  /// mismatched vocabulary is caught before any scoring.
  std::string digest() const { return content_digest(to_json().dump()); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.objects_ == b.objects_ && a.predicates_ == b.predicates_;
  }

 private:
  using Index = std::unordered_map<std::string, LabelIndex>;

  static void index_labels(const std::vector<std::string>& labels, Index& index,
                           const char* kind) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!index.emplace(labels[i], static_cast<LabelIndex>(i)).second)
        throw ValidationError(ValidationErrc::duplicate_label,
                              std::string("duplicate ") + kind + " label '" + labels[i] + "'");
    }
  }

  static std::optional<LabelIndex> find(const Index& index, std::string_view label) {
    const auto it = index.find(std::string(label));
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> objects_;
  std::vector<std::string> predicates_;
  Index object_index_;
  Index predicate_index_;
};

inline Vocabulary vocabulary_from_json(const Json& doc, const std::string& source) {
  return Vocabulary(require_field<std::vector<std::string>>(doc, "object_labels", source),
                    require_field<std::vector<std::string>>(doc, "predicate_labels", source));
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
  return vocabulary_from_json(read_document(path), path.string());
}

inline void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  write_file(path, dump_document(vocab.to_json()));
}

struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ObjectInstance {
  InstanceId instance_id = 0;
  LabelIndex label_index = 0;
  std::optional<BBox> bbox;
  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

struct TripletAnnotation {
  InstanceId subject_id = 0;
  InstanceId object_id = 0;
  LabelIndex predicate_index = 0;
  friend bool operator==(const TripletAnnotation&, const TripletAnnotation&) = default;
};

struct ImageRecord {
  std::string image_id;
  std::vector<ObjectInstance> objects;
  std::vector<TripletAnnotation> triplets;

  const ObjectInstance* find_object(InstanceId id) const {
    const auto it = std::find_if(objects.begin(), objects.end(),
                                 [id](const ObjectInstance& o) { return o.instance_id == id; });
    return it == objects.end() ? nullptr : &*it;
  }

  /// Label of an instance known to exist (validated images only).
  LabelIndex label_of(InstanceId id) const {
    const auto* o = find_object(id);
    if (o == nullptr)
      throw ValidationError(ValidationErrc::dangling_instance,
                            "image '" + image_id + "' has no instance " + std::to_string(id));
    return o->label_index;
  }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

enum class SplitTag { train, val, test, adjusted };

inline std::string_view to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    case SplitTag::adjusted: return "adjusted";
  }
  return "train";
}

inline SplitTag split_from_string(std::string_view s) {
  if (s == "train") return SplitTag::train;
  if (s == "val") return SplitTag::val;
  if (s == "test") return SplitTag::test;
  if (s == "adjusted") return SplitTag::adjusted;
  throw ConfigError("unknown split tag '" + std::string(s) + "'");
}

struct Dataset {
  Vocabulary vocabulary;
  std::vector<ImageRecord> images;
  SplitTag split = SplitTag::train;

  std::size_t num_triplets() const {
    std::size_t n = 0;
    for (const auto& img : images) n += img.triplets.size();
    return n;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Checks every per-image invariant against the vocabulary. Throws on the
/// first violation, naming the image.
inline void validate_image(const ImageRecord& img, const Vocabulary& vocab) {
  const auto fail = [&](ValidationErrc code, const std::string& msg) {
    throw ValidationError(code, "image '" + img.image_id + "': " + msg);
  };
  std::unordered_set<InstanceId> ids;
  for (const auto& o : img.objects) {
    if (o.instance_id < 0) fail(ValidationErrc::invalid_value, "negative instance id");
    if (!ids.insert(o.instance_id).second)
      fail(ValidationErrc::duplicate_instance,
           "duplicate instance id " + std::to_string(o.instance_id));
    if (o.label_index >= vocab.num_objects())
      fail(ValidationErrc::index_out_of_range, "object label index out of range");
    if (o.bbox && !(o.bbox->w > 0 && o.bbox->h > 0))
      fail(ValidationErrc::bad_bbox, "bbox of instance " + std::to_string(o.instance_id) +
                                         " must have positive width and height");
  }
  std::set<std::pair<InstanceId, InstanceId>> pairs;
  for (const auto& t : img.triplets) {
    if (t.subject_id == t.object_id)
      fail(ValidationErrc::self_relation,
           "triplet relates instance " + std::to_string(t.subject_id) + " to itself");
    for (InstanceId id : {t.subject_id, t.object_id})
      if (!ids.contains(id))
        fail(ValidationErrc::dangling_instance, "triplet references missing instance " +
                                                    std::to_string(id));
    if (t.predicate_index >= vocab.num_predicates())
      fail(ValidationErrc::index_out_of_range, "predicate index out of range");
    if (!pairs.emplace(t.subject_id, t.object_id).second)
      fail(ValidationErrc::duplicate_pair, "more than one predicate for pair (" +
                                               std::to_string(t.subject_id) + ", " +
                                               std::to_string(t.object_id) + ")");
  }
}

inline void validate(const Dataset& ds) {
  std::unordered_set<std::string> image_ids;
  for (const auto& img : ds.images) {
    if (!image_ids.insert(img.image_id).second)
      throw ValidationError(ValidationErrc::duplicate_image,
                            "duplicate image_id '" + img.image_id + "'");
    validate_image(img, ds.vocabulary);
  }
}

inline Json image_to_json(const ImageRecord& img, const Vocabulary& vocab) {
  Json objects = Json::array();
  for (const auto& o : img.objects) {
    Json j;
    j["id"] = o.instance_id;
    j["label"] = vocab.object_label(o.label_index);
    if (o.bbox) j["bbox"] = {o.bbox->x, o.bbox->y, o.bbox->w, o.bbox->h};
    objects.push_back(std::move(j));
  }
  Json triplets = Json::array();
  for (const auto& t : img.triplets) {
    Json j;
    j["subj"] = t.subject_id;
    j["pred"] = vocab.predicate_label(t.predicate_index);
    j["obj"] = t.object_id;
    triplets.push_back(std::move(j));
  }
  Json doc;
  doc["image_id"] = img.image_id;
  doc["objects"] = std::move(objects);
  doc["triplets"] = std::move(triplets);
  return doc;
}

enum class DuplicatePolicy { keep_first, reject };

struct LoadStats {
  std::size_t records = 0;
  std::size_t duplicates_dropped = 0;
};

namespace detail {

template <typename T>
T field(const Json& doc, std::string_view key, const std::string& source, std::size_t line) {
  const auto it = doc.find(key);
  if (it == doc.end()) throw ParseError(source, line, "missing field '" + std::string(key) + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(source, line, "field '" + std::string(key) + "' has the wrong type");
  }
}

inline ImageRecord parse_image(const Json& doc, const Vocabulary& vocab, DuplicatePolicy policy,
                               LoadStats& stats, const std::string& source, std::size_t line) {
  if (!doc.is_object()) throw ParseError(source, line, "record is not an object");
  ImageRecord img;
  img.image_id = field<std::string>(doc, "image_id", source, line);
  const auto invalid = [&](ValidationErrc code, const std::string& msg) {
    return ValidationError(code, source + ":" + std::to_string(line) + ": image '" +
                                     img.image_id + "': " + msg);
  };

  const Json objects = field<Json>(doc, "objects", source, line);
  if (!objects.is_array()) throw ParseError(source, line, "'objects' is not an array");
  for (const auto& o : objects) {
    if (!o.is_object()) throw ParseError(source, line, "object entry is not an object");
    ObjectInstance inst;
    inst.instance_id = field<InstanceId>(o, "id", source, line);
    const auto label = field<std::string>(o, "label", source, line);
    const auto idx = vocab.find_object(label);
    if (!idx) throw invalid(ValidationErrc::unknown_label, "unknown object label '" + label + "'");
    inst.label_index = *idx;
    if (const auto b = o.find("bbox"); b != o.end()) {
      if (!b->is_array() || b->size() != 4)
        throw ParseError(source, line, "bbox must be an array of four numbers");
      try {
        inst.bbox = BBox{(*b)[0].get<double>(), (*b)[1].get<double>(), (*b)[2].get<double>(),
                         (*b)[3].get<double>()};
      } catch (const nlohmann::json::exception&) {
        throw ParseError(source, line, "bbox must be an array of four numbers");
      }
    }
    img.objects.push_back(inst);
  }

  const Json triplets = field<Json>(doc, "triplets", source, line);
  if (!triplets.is_array()) throw ParseError(source, line, "'triplets' is not an array");
  std::set<std::pair<InstanceId, InstanceId>> seen;
  for (const auto& t : triplets) {
    if (!t.is_object()) throw ParseError(source, line, "triplet entry is not an object");
    TripletAnnotation ann;
    ann.subject_id = field<InstanceId>(t, "subj", source, line);
    ann.object_id = field<InstanceId>(t, "obj", source, line);
    const auto label = field<std::string>(t, "pred", source, line);
    const auto idx = vocab.find_predicate(label);
    if (!idx)
      throw invalid(ValidationErrc::unknown_label, "unknown predicate label '" + label + "'");
    ann.predicate_index = *idx;
    if (!seen.emplace(ann.subject_id, ann.object_id).second) {
      if (policy == DuplicatePolicy::reject)
        throw invalid(ValidationErrc::duplicate_pair,
                      "duplicate annotation for pair (" + std::to_string(ann.subject_id) + ", " +
                          std::to_string(ann.object_id) + ")");
      ++stats.duplicates_dropped;
      continue;
    }
    img.triplets.push_back(ann);
  }

  try {
    validate_image(img, vocab);
  } catch (const ValidationError& e) {
    throw ValidationError(e.code(), source + ":" + std::to_string(line) + ": " + e.what());
  }
  return img;
}

}  // namespace detail

/// Parses one image per non-blank line. Everything is validated; the first
/// malformed record aborts the load with its line number.
inline Dataset parse_dataset(std::istream& in, const Vocabulary& vocab,
                             SplitTag split = SplitTag::train,
                             DuplicatePolicy policy = DuplicatePolicy::keep_first,
                             LoadStats* stats = nullptr, const std::string& source = "<stream>") {
  Dataset ds{vocab, {}, split};
  LoadStats local;
  std::unordered_set<std::string> image_ids;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json doc;
    try {
      doc = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, line, e.what());
    }
    auto img = detail::parse_image(doc, vocab, policy, local, source, line);
    if (!image_ids.insert(img.image_id).second)
      throw ValidationError(ValidationErrc::duplicate_image,
                            source + ":" + std::to_string(line) + ": duplicate image_id '" +
                                img.image_id + "'");
    ds.images.push_back(std::move(img));
    ++local.records;
  }
  if (stats) *stats = local;
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path, const Vocabulary& vocab,
                            SplitTag split = SplitTag::train,
                            DuplicatePolicy policy = DuplicatePolicy::keep_first,
                            LoadStats* stats = nullptr) {
  std::istringstream in(read_file(path));
  return parse_dataset(in, vocab, split, policy, stats, path.string());
}

/// load_dataset with the keep_first policy, writing one line to `warnings`
/// when duplicate triplets were dropped.
inline Dataset load_dataset_or_warn(const std::filesystem::path& path, const Vocabulary& vocab, SplitTag split,
                                    std::ostream* warnings) {
  LoadStats stats;
  auto ds = load_dataset(path, vocab, split, DuplicatePolicy::keep_first, &stats);
  if (warnings && stats.duplicates_dropped > 0)
    *warnings << "warning: " << path.string() << ": dropped " << stats.duplicates_dropped
              << " duplicate triplet(s)\n";
  return ds;
}

/// One compact JSON document per image, in dataset order.
inline std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  for (const auto& img : ds.images) {
    out += image_to_json(img, ds.vocabulary).dump();
    out += '\n';
  }
  return out;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  validate(ds);
  write_file(path, serialize_dataset(ds));
}

inline std::vector<std::int64_t> predicate_counts(const Dataset& ds) {
  std::vector<std::int64_t> counts(ds.vocabulary.num_predicates(), 0);
  for (const auto& img : ds.images)
    for (const auto& t : img.triplets) ++counts.at(t.predicate_index);
  return counts;
}

/// Empirical predicate distribution: count of predicate k over T.
inline std::vector<double> predicate_frequencies(const Dataset& ds) {
  const auto counts = predicate_counts(ds);
  std::int64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0)
    throw ValidationError(ValidationErrc::empty_dataset, "dataset has no triplets");
  std::vector<double> freqs(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k)
    freqs[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  return freqs;
}

}  // namespace predbias
