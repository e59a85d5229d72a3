#pragma once

// Count-based conditional predicate model Pr(predicate | subject label,
// object label). Serves as the biased predictor and as the source of
// predictions for confusion statistics.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/io.hpp"

namespace predbias {

/// (subject label, object label).
using Context = std::pair<LabelIndex, LabelIndex>;

/// A normalized score vector over the K predicates.
class ScoreDistribution {
 public:
  ScoreDistribution() = default;
  explicit ScoreDistribution(std::vector<double> scores) : scores_(std::move(scores)) {}

  static ScoreDistribution uniform(std::size_t k) {
    return ScoreDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
  }

  std::size_t size() const noexcept { return scores_.size(); }
  double operator[](std::size_t i) const { return scores_[i]; }
  std::span<const double> values() const noexcept { return scores_; }

  friend bool operator==(const ScoreDistribution&, const ScoreDistribution&) = default;

 private:
  std::vector<double> scores_;
};

/// Index of the largest value; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

class FrequencyModel {
 public:
  using CountTable = std::map<Context, std::vector<std::int64_t>>;

  FrequencyModel(Vocabulary vocab, double epsilon) : vocab_(std::move(vocab)), epsilon_(epsilon) {
    if (!(epsilon_ >= 0.0))
      throw ConfigError("smoothing epsilon must be non-negative");
  }

  /// Tallies every triplet of ds by (subject label, object label, predicate).
  static FrequencyModel fit(const Dataset& ds, double epsilon = 1.0) {
    FrequencyModel model(ds.vocabulary, epsilon);
    for (const auto& img : ds.images)
      for (const auto& t : img.triplets)
        model.add(img.label_of(t.subject_id), img.label_of(t.object_id), t.predicate_index);
    if (model.total_ == 0)
      throw ValidationError(ValidationErrc::empty_dataset, "cannot fit on a dataset without triplets");
    return model;
  }

  void add(LabelIndex subj, LabelIndex obj, LabelIndex pred, std::int64_t n = 1) {
    check_labels(subj, obj);
    if (pred >= num_predicates())
      throw ValidationError(ValidationErrc::index_out_of_range, "predicate index out of range");
    if (n < 0) throw ValidationError(ValidationErrc::invalid_value, "negative count");
    auto& row = counts_[{subj, obj}];
    if (row.empty()) row.assign(num_predicates(), 0);
    row[pred] += n;
    total_ += n;
  }

  /// (count + eps) / (row total + eps K); uniform for unseen contexts and for
  /// any row whose denominator would be zero.
  ScoreDistribution predict(LabelIndex subj, LabelIndex obj) const {
    check_labels(subj, obj);
    const auto k = num_predicates();
    const auto it = counts_.find({subj, obj});
    if (it == counts_.end()) return ScoreDistribution::uniform(k);
    std::int64_t row_total = 0;
    for (auto c : it->second) row_total += c;
    const double denom = static_cast<double>(row_total) + epsilon_ * static_cast<double>(k);
    if (denom <= 0.0) return ScoreDistribution::uniform(k);
    std::vector<double> scores(k);
    for (std::size_t i = 0; i < k; ++i)
      scores[i] = (static_cast<double>(it->second[i]) + epsilon_) / denom;
    return ScoreDistribution(std::move(scores));
  }

  /// Argmax of predict(). Computed on the integer counts (same denominator
  /// for every entry), so ties are exact.
  LabelIndex predict_argmax(LabelIndex subj, LabelIndex obj) const {
    check_labels(subj, obj);
    const auto it = counts_.find({subj, obj});
    if (it == counts_.end()) return 0;
    const auto& row = it->second;
    return static_cast<LabelIndex>(std::max_element(row.begin(), row.end()) - row.begin());
  }

  /// Counts for a context; empty span when unseen.
  std::span<const std::int64_t> counts_for(LabelIndex subj, LabelIndex obj) const {
    const auto it = counts_.find({subj, obj});
    if (it == counts_.end()) return {};
    return it->second;
  }

  const CountTable& counts() const noexcept { return counts_; }
  std::int64_t total() const noexcept { return total_; }
  double epsilon() const noexcept { return epsilon_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t num_predicates() const noexcept { return vocab_.num_predicates(); }

  /// Cell-wise sum with another model over the same vocabulary.
  FrequencyModel merged(const FrequencyModel& other) const {
    if (!(other.vocab_ == vocab_))
      throw ValidationError(ValidationErrc::vocabulary_mismatch, "cannot merge models over different vocabularies");
    FrequencyModel out = *this;
    for (const auto& [ctx, row] : other.counts_)
      for (std::size_t k = 0; k < row.size(); ++k)
        if (row[k] != 0) out.add(ctx.first, ctx.second, static_cast<LabelIndex>(k), row[k]);
    return out;
  }

  friend bool operator==(const FrequencyModel& a, const FrequencyModel& b) {
    return a.vocab_ == b.vocab_ && a.epsilon_ == b.epsilon_ && a.counts_ == b.counts_;
  }

 private:
  void check_labels(LabelIndex subj, LabelIndex obj) const {
    if (subj >= vocab_.num_objects() || obj >= vocab_.num_objects())
      throw ValidationError(ValidationErrc::index_out_of_range, "object label index out of range");
  }

  Vocabulary vocab_;
  double epsilon_;
  CountTable counts_;
  std::int64_t total_ = 0;
};

inline void require_same_vocabulary(const Vocabulary& a, const Vocabulary& b, std::string_view what) {
  if (!(a == b))
    throw ValidationError(ValidationErrc::vocabulary_mismatch,
                          std::string(what) + ": vocabulary mismatch (" + a.digest() + " vs " +
                              b.digest() + ")");
}

/// Model document. Count rows are sorted by (subject label, object label)
/// strings so the bytes do not depend on label indices.
inline Json model_to_json(const FrequencyModel& model) {
  const auto& vocab = model.vocabulary();
  std::vector<std::pair<std::pair<std::string, std::string>, const std::vector<std::int64_t>*>> rows;
  rows.reserve(model.counts().size());
  for (const auto& [ctx, row] : model.counts())
    rows.push_back({{vocab.object_label(ctx.first), vocab.object_label(ctx.second)}, &row});
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Json counts = Json::array();
  for (const auto& [key, row] : rows) {
    Json j;
    j["subj"] = key.first;
    j["obj"] = key.second;
    j["counts"] = *row;
    counts.push_back(std::move(j));
  }
  Json doc;
  doc["kind"] = "frequency_model";
  doc["vocab_digest"] = vocab.digest();
  doc["epsilon"] = model.epsilon();
  doc["total"] = model.total();
  doc["counts"] = std::move(counts);
  return doc;
}

inline FrequencyModel model_from_json(const Json& doc, const Vocabulary& vocab,
                                      const std::string& source = "<model>") {
  const auto digest = require_field<std::string>(doc, "vocab_digest", source);
  if (digest != vocab.digest())
    throw ValidationError(ValidationErrc::vocabulary_mismatch,
                          source + ": model was fitted against vocabulary " + digest +
                              ", not " + vocab.digest());
  FrequencyModel model(vocab, require_field<double>(doc, "epsilon", source));
  for (const auto& row : require_field<Json>(doc, "counts", source)) {
    const auto subj = vocab.find_object(require_field<std::string>(row, "subj", source));
    const auto obj = vocab.find_object(require_field<std::string>(row, "obj", source));
    if (!subj || !obj)
      throw ValidationError(ValidationErrc::unknown_label, source + ": unknown object label in count table");
    const auto counts = require_field<std::vector<std::int64_t>>(row, "counts", source);
    if (counts.size() != vocab.num_predicates())
      throw ValidationError(ValidationErrc::dimension_mismatch, source + ": count row has wrong length");
    for (std::size_t k = 0; k < counts.size(); ++k)
      model.add(*subj, *obj, static_cast<LabelIndex>(k), counts[k]);
  }
  const auto total = require_field<std::int64_t>(doc, "total", source);
  if (total != model.total())
    throw ValidationError(ValidationErrc::invalid_value, source + ": stored total does not match counts");
  return model;
}

inline void save_model(const FrequencyModel& model, const std::filesystem::path& path) {
  write_file(path, dump_document(model_to_json(model)));
}

inline FrequencyModel load_model(const std::filesystem::path& path, const Vocabulary& vocab) {
  return model_from_json(read_document(path), vocab, path.string());
}

}  // namespace predbias
