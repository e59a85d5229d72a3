#pragma once

// Per-predicate information content, -log_b Pr(predicate), and the
// common/informative split it induces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/io.hpp"
#include "predbias/semantic_debias.hpp"

namespace predbias {

enum class IcSource { dataset, external };

inline std::string_view to_string(IcSource s) { return s == IcSource::dataset ? "dataset" : "external"; }

struct InformationContentTable {
  std::vector<double> frequency;
  std::vector<double> ic;
  // True where the frequency was zero (or the predicate was missing from an
  // external source) and ic holds the ceiling value instead of -log_b(0).
  std::vector<bool> ceiling;
  IcSource source = IcSource::dataset;
  double base = 2.0;

  std::size_t size() const noexcept { return ic.size(); }

  /// Predicate indices by increasing ic; ties by higher frequency, then index.
  std::vector<LabelIndex> order_by_increasing_ic() const {
    std::vector<LabelIndex> order(ic.size());
    std::iota(order.begin(), order.end(), LabelIndex{0});
    std::stable_sort(order.begin(), order.end(), [&](LabelIndex a, LabelIndex b) {
      if (ic[a] != ic[b]) return ic[a] < ic[b];
      if (frequency[a] != frequency[b]) return frequency[a] > frequency[b];
      return a < b;
    });
    return order;
  }

  friend bool operator==(const InformationContentTable&, const InformationContentTable&) = default;
};

/// ic[k] = -log_b(freqs[k]). A zero frequency gets the ceiling
/// -log_b(1 / (sample_count + K)), which exceeds every observable ic.
inline InformationContentTable compute_ic(std::span<const double> freqs, double base,
                                          std::int64_t sample_count, IcSource source = IcSource::dataset) {
  if (!(base > 1.0) || !std::isfinite(base)) throw ConfigError("information content base must be > 1");
  if (sample_count < 0) throw ConfigError("sample count must be non-negative");
  const auto k = freqs.size();
  InformationContentTable table;
  table.source = source;
  table.base = base;
  table.frequency.assign(freqs.begin(), freqs.end());
  table.ic.resize(k);
  table.ceiling.assign(k, false);
  const auto log_b = [base](double x) { return base == 2.0 ? std::log2(x) : std::log(x) / std::log(base); };
  const double ceiling = log_b(static_cast<double>(sample_count) + static_cast<double>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const double f = freqs[i];
    if (!(f >= 0.0 && f <= 1.0))
      throw ValidationError(ValidationErrc::invalid_value, "frequencies must lie in [0, 1]");
    if (f == 0.0) {
      table.ic[i] = ceiling;
      table.ceiling[i] = true;
    } else {
      table.ic[i] = 0.0 - log_b(f);
    }
  }
  return table;
}

/// Dataset-source table: predicate frequencies of ds, ceiling from its T.
inline InformationContentTable compute_ic(const Dataset& ds, double base = 2.0) {
  return compute_ic(predicate_frequencies(ds), base, static_cast<std::int64_t>(ds.num_triplets()),
                    IcSource::dataset);
}

/// External-source table from predicate -> count. Counts are normalized over
/// the vocabulary predicates present in the document; missing predicates get
/// the ceiling and are flagged.
inline InformationContentTable external_ic_from_json(const Json& doc, const Vocabulary& vocab,
                                                     double base = 2.0,
                                                     const std::string& source = "<external-ic>") {
  if (!doc.is_object()) throw ParseError(source, 1, "external frequency document must be an object");
  const auto k = vocab.num_predicates();
  std::vector<double> counts(k, 0.0);
  std::vector<bool> present(k, false);
  double total = 0;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!it.value().is_number()) throw ParseError(source, 1, "count for '" + it.key() + "' is not a number");
    const double c = it.value().get<double>();
    if (!(c >= 0.0) || !std::isfinite(c))
      throw ValidationError(ValidationErrc::invalid_value, source + ": negative count for '" + it.key() + "'");
    const auto idx = vocab.find_predicate(it.key());
    if (!idx) continue;
    counts[*idx] = c;
    present[*idx] = true;
    total += c;
  }
  if (!(total > 0))
    throw ValidationError(ValidationErrc::empty_dataset, source + ": no vocabulary predicate matched with a positive count");
  std::vector<double> freqs(k);
  for (std::size_t i = 0; i < k; ++i) freqs[i] = counts[i] / total;
  auto table = compute_ic(freqs, base, static_cast<std::int64_t>(std::llround(total)), IcSource::external);
  for (std::size_t i = 0; i < k; ++i)
    if (!present[i]) table.ceiling[i] = true;
  return table;
}

inline InformationContentTable load_external_ic(const std::filesystem::path& path, const Vocabulary& vocab,
                                                double base = 2.0) {
  return external_ic_from_json(read_document(path), vocab, base, path.string());
}

/// The M predicates with the least information content are common.
inline PredicatePartition partition_predicates(const InformationContentTable& ic, std::size_t m) {
  if (m == 0 || m >= ic.size())
    throw ConfigError("M must satisfy 0 < M < K (M=" + std::to_string(m) + ", K=" +
                      std::to_string(ic.size()) + ")");
  const auto order = ic.order_by_increasing_ic();
  std::vector<LabelIndex> common(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(common.begin(), common.end());
  return PredicatePartition::from_common(std::move(common), ic.size());
}

inline Json ic_table_to_json(const InformationContentTable& t, const Vocabulary& vocab) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < t.size(); ++i) {
    Json r;
    r["label"] = vocab.predicate_label(static_cast<LabelIndex>(i));
    r["frequency"] = t.frequency[i];
    r["ic"] = t.ic[i];
    r["source"] = to_string(t.source);
    r["flags"] = t.ceiling[i] ? Json::array({"ceiling"}) : Json::array();
    rows.push_back(std::move(r));
  }
  Json doc;
  doc["kind"] = "ic_table";
  doc["vocab_digest"] = vocab.digest();
  doc["base"] = t.base;
  doc["source"] = to_string(t.source);
  doc["rows"] = std::move(rows);
  return doc;
}

inline InformationContentTable ic_table_from_json(const Json& doc, const Vocabulary& vocab,
                                                  const std::string& source = "<ic>") {
  if (require_field<std::string>(doc, "kind", source) != "ic_table")
    throw ValidationError(ValidationErrc::invalid_value, source + ": not an ic_table document");
  if (require_field<std::string>(doc, "vocab_digest", source) != vocab.digest())
    throw ValidationError(ValidationErrc::vocabulary_mismatch, source + ": vocabulary digest mismatch");
  InformationContentTable t;
  t.base = require_field<double>(doc, "base", source);
  t.source = require_field<std::string>(doc, "source", source) == "external" ? IcSource::external
                                                                            : IcSource::dataset;
  const auto rows = require_field<Json>(doc, "rows", source);
  if (rows.size() != vocab.num_predicates())
    throw ValidationError(ValidationErrc::dimension_mismatch, source + ": wrong number of rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (require_field<std::string>(rows[i], "label", source) != vocab.predicate_label(static_cast<LabelIndex>(i)))
      throw ValidationError(ValidationErrc::vocabulary_mismatch, source + ": row order differs from vocabulary");
    t.frequency.push_back(require_field<double>(rows[i], "frequency", source));
    t.ic.push_back(require_field<double>(rows[i], "ic", source));
    const auto flags = require_field<std::vector<std::string>>(rows[i], "flags", source);
    t.ceiling.push_back(std::find(flags.begin(), flags.end(), "ceiling") != flags.end());
  }
  return t;
}

inline Json partition_to_json(const PredicatePartition& p, const Vocabulary& vocab) {
  Json common = Json::array();
  Json informative = Json::array();
  for (auto k : p.common) common.push_back(vocab.predicate_label(k));
  for (auto k : p.informative) informative.push_back(vocab.predicate_label(k));
  Json doc;
  doc["kind"] = "predicate_partition";
  doc["vocab_digest"] = vocab.digest();
  doc["common"] = std::move(common);
  doc["informative"] = std::move(informative);
  return doc;
}

inline PredicatePartition partition_from_json(const Json& doc, const Vocabulary& vocab,
                                              const std::string& source = "<partition>") {
  if (require_field<std::string>(doc, "kind", source) != "predicate_partition")
    throw ValidationError(ValidationErrc::invalid_value, source + ": not a predicate_partition document");
  std::vector<LabelIndex> common;
  for (const auto& label : require_field<std::vector<std::string>>(doc, "common", source)) {
    const auto idx = vocab.find_predicate(label);
    if (!idx) throw ValidationError(ValidationErrc::unknown_label, source + ": unknown predicate '" + label + "'");
    common.push_back(*idx);
  }
  std::sort(common.begin(), common.end());
  auto p = PredicatePartition::from_common(std::move(common), vocab.num_predicates());
  if (p.common.empty() || p.informative.empty())
    throw ValidationError(ValidationErrc::invalid_value, source + ": partition needs common and informative predicates");
  return p;
}

}  // namespace predbias
