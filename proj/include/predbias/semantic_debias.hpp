#pragma once

// Semantic debiasing: K×K transition matrices mapping a biased predicate
// distribution to a restored one, built from confusion statistics or from
// subject-object context overlap between predicates.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "predbias/dataset.hpp"
#include "predbias/error.hpp"
#include "predbias/freq_model.hpp"
#include "predbias/io.hpp"
#include "predbias/square_matrix.hpp"

namespace predbias {

enum class TransitionSource {
  cm,    // row-normalized confusion matrix
  ccm,   // transpose of the column-normalized confusion matrix
  soo,   // subject-object overlap, unmasked
  sobg,  // subject-object overlap masked to informative -> common
  rm,    // learnable random matrix; reserved, not constructible here
};

inline std::string_view to_string(TransitionSource s) {
  switch (s) {
    case TransitionSource::cm: return "cm";
    case TransitionSource::ccm: return "ccm";
    case TransitionSource::soo: return "soo";
    case TransitionSource::sobg: return "sobg";
    case TransitionSource::rm: return "rm";
  }
  return "cm";
}

inline TransitionSource transition_source_from_string(std::string_view s) {
  if (s == "cm") return TransitionSource::cm;
  if (s == "ccm") return TransitionSource::ccm;
  if (s == "soo") return TransitionSource::soo;
  if (s == "sobg") return TransitionSource::sobg;
  if (s == "rm") return TransitionSource::rm;
  throw ConfigError("unknown transition source '" + std::string(s) + "'");
}

/// Rows are ground-truth predicates, columns predicted predicates.
struct ConfusionMatrix {
  SquareMatrix<std::int64_t> cells;

  std::int64_t total() const { return cells.sum(); }

  /// Diagonal mass of the row-normalized matrix, averaged over rows with at
  /// least one sample.
  double normalized_trace_fraction() const {
    double acc = 0;
    std::size_t rows = 0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      std::int64_t row_total = 0;
      for (auto c : cells.row(k)) row_total += c;
      if (row_total == 0) continue;
      acc += static_cast<double>(cells(k, k)) / static_cast<double>(row_total);
      ++rows;
    }
    return rows == 0 ? 0.0 : acc / static_cast<double>(rows);
  }

  /// trace / total of the raw counts.
  double raw_trace_fraction() const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(cells.trace()) / static_cast<double>(t);
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

/// cells[k][l] = number of (subject label, object label) contexts in which
/// both predicate k and predicate l occur.
struct OverlapMatrix {
  SquareMatrix<std::int64_t> cells;
  friend bool operator==(const OverlapMatrix&, const OverlapMatrix&) = default;
};

struct PredicatePartition {
  std::vector<LabelIndex> common;       // ascending
  std::vector<LabelIndex> informative;  // ascending
  std::vector<bool> is_common;          // indexed by predicate

  static PredicatePartition from_common(std::vector<LabelIndex> common, std::size_t num_predicates) {
    PredicatePartition p;
    p.is_common.assign(num_predicates, false);
    for (auto k : common) {
      if (k >= num_predicates)
        throw ValidationError(ValidationErrc::index_out_of_range, "common predicate index out of range");
      if (p.is_common[k])
        throw ValidationError(ValidationErrc::invalid_value, "predicate listed twice as common");
      p.is_common[k] = true;
    }
    for (std::size_t k = 0; k < num_predicates; ++k)
      (p.is_common[k] ? p.common : p.informative).push_back(static_cast<LabelIndex>(k));
    return p;
  }

  std::size_t size() const noexcept { return is_common.size(); }

  friend bool operator==(const PredicatePartition&, const PredicatePartition&) = default;
};

/// Row-stochastic K×K matrix. Rows index the restored predicate, columns the
/// biased predicate, so restoring is p_restored = C* · p_biased. Immutable.
class TransitionMatrix {
 public:
  static constexpr double kRowTolerance = 1e-9;

  /// Validates and wraps cells. Rows must sum to 1 within tolerance and every
  /// cell must lie in [0, 1].
  static TransitionMatrix from_cells(SquareMatrix<double> cells, double alpha,
                                     TransitionSource source, double tolerance = kRowTolerance) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double s = 0;
      for (double v : cells.row(i)) {
        if (!(v >= 0.0 && v <= 1.0))
          throw ValidationError(ValidationErrc::not_stochastic,
                                "transition row " + std::to_string(i) + " has a cell outside [0, 1]");
        s += v;
      }
      if (std::abs(s - 1.0) > tolerance)
        throw ValidationError(ValidationErrc::not_stochastic,
                              "transition row " + std::to_string(i) + " sums to " +
                                  std::to_string(s) + ", not 1");
    }
    return TransitionMatrix(std::move(cells), alpha, source);
  }

  const SquareMatrix<double>& cells() const noexcept { return cells_; }
  double operator()(std::size_t restored, std::size_t biased) const { return cells_(restored, biased); }
  std::size_t size() const noexcept { return cells_.size(); }
  double alpha() const noexcept { return alpha_; }
  TransitionSource source() const noexcept { return source_; }

  friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

 private:
  TransitionMatrix(SquareMatrix<double> cells, double alpha, TransitionSource source)
      : cells_(std::move(cells)), alpha_(alpha), source_(source) {}

  SquareMatrix<double> cells_;
  double alpha_ = 0;
  TransitionSource source_ = TransitionSource::cm;
};

/// Tallies ground truth against the model's argmax for every triplet of ds.
/// With a transition matrix the argmax is taken after debiasing.
inline ConfusionMatrix build_confusion(const FrequencyModel& model, const Dataset& ds,
                                const TransitionMatrix* tm = nullptr);

inline SquareMatrix<double> row_normalize(const ConfusionMatrix& cm) {
  const auto k = cm.cells.size();
  SquareMatrix<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::int64_t total = 0;
    for (auto c : cm.cells.row(i)) total += c;
    for (std::size_t j = 0; j < k; ++j)
      out(i, j) = total == 0 ? 1.0 / static_cast<double>(k)
                             : static_cast<double>(cm.cells(i, j)) / static_cast<double>(total);
  }
  return out;
}

/// Normalizes each column to sum 1 (zero columns become uniform) and returns
/// the transpose: out[i][j] = c[j][i] / sum_m c[m][i].
inline SquareMatrix<double> column_normalize_transpose(const ConfusionMatrix& cm) {
  const auto k = cm.cells.size();
  SquareMatrix<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::int64_t total = 0;
    for (std::size_t m = 0; m < k; ++m) total += cm.cells(m, i);
    for (std::size_t j = 0; j < k; ++j)
      out(i, j) = total == 0 ? 1.0 / static_cast<double>(k)
                             : static_cast<double>(cm.cells(j, i)) / static_cast<double>(total);
  }
  return out;
}

/// C* = Row_Normalize(mat + alpha I). A row that is still all zero becomes
/// uniform.
inline TransitionMatrix smooth_and_normalize(const SquareMatrix<double>& mat, double alpha,
                                             TransitionSource source) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite non-negative number");
  const auto k = mat.size();
  SquareMatrix<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = mat(i, j) + (i == j ? alpha : 0.0);
      if (!(v >= 0.0) || !std::isfinite(v))
        throw ValidationError(ValidationErrc::invalid_value, "matrix entries must be finite and non-negative");
      out(i, j) = v;
      total += v;
    }
    for (std::size_t j = 0; j < k; ++j)
      out(i, j) = total > 0 ? out(i, j) / total : 1.0 / static_cast<double>(k);
  }
  return TransitionMatrix::from_cells(std::move(out), alpha, source);
}

inline OverlapMatrix build_overlap(const Dataset& ds) {
  const auto k = ds.vocabulary.num_predicates();
  // context -> set of predicates observed in it
  std::map<Context, std::set<LabelIndex>> contexts;
  for (const auto& img : ds.images)
    for (const auto& t : img.triplets)
      contexts[{img.label_of(t.subject_id), img.label_of(t.object_id)}].insert(t.predicate_index);
  OverlapMatrix om{SquareMatrix<std::int64_t>(k)};
  for (const auto& [ctx, preds] : contexts)
    for (auto a : preds)
      for (auto b : preds) ++om.cells(a, b);
  return om;
}

/// Keeps cells[k][l] only where k is informative and l is common.
inline SquareMatrix<double> mask_bipartite(const OverlapMatrix& om, const PredicatePartition& part) {
  const auto k = om.cells.size();
  if (part.size() != k)
    throw ValidationError(ValidationErrc::dimension_mismatch, "partition covers a different predicate count");
  SquareMatrix<double> out(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (!part.is_common[i] && part.is_common[j]) out(i, j) = static_cast<double>(om.cells(i, j));
  return out;
}

/// Unmasked pass-through of the overlap counts.
inline SquareMatrix<double> unmasked_overlap(const OverlapMatrix& om) { return om.cells.cast<double>(); }

/// Row-normalizes a non-negative matrix, leaving zero rows at zero.
inline SquareMatrix<double> normalize_rows_keep_zero(const SquareMatrix<double>& mat) {
  const auto k = mat.size();
  SquareMatrix<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    double total = 0;
    for (double v : mat.row(i)) total += v;
    if (total > 0)
      for (std::size_t j = 0; j < k; ++j) out(i, j) = mat(i, j) / total;
  }
  return out;
}

/// p_restored[l] = sum_h C*[l][h] p_biased[h], rescaled so the output has the
/// same total as the input. With C* = I the output is bit-identical to the
/// input.
inline ScoreDistribution apply_debias(const TransitionMatrix& tm, const ScoreDistribution& biased) {
  const auto k = tm.size();
  if (biased.size() != k)
    throw ValidationError(ValidationErrc::dimension_mismatch, "score vector length differs from transition size");
  std::vector<double> raw(k, 0.0);
  double raw_total = 0;
  double in_total = 0;
  for (std::size_t l = 0; l < k; ++l) {
    double acc = 0;
    const auto row = tm.cells().row(l);
    for (std::size_t h = 0; h < k; ++h) acc += row[h] * biased[h];
    raw[l] = acc;
    raw_total += acc;
    in_total += biased[l];
  }
  if (!(raw_total > 0)) return ScoreDistribution::uniform(k);
  const double scale = in_total / raw_total;
  if (scale != 1.0)
    for (auto& v : raw) v *= scale;
  return ScoreDistribution(std::move(raw));
}

inline ScoreDistribution debiased_scores(const FrequencyModel& model, const TransitionMatrix* tm,
                                         LabelIndex subj, LabelIndex obj) {
  auto scores = model.predict(subj, obj);
  if (tm == nullptr) return scores;
  return apply_debias(*tm, scores);
}

inline ConfusionMatrix build_confusion(const FrequencyModel& model, const Dataset& ds,
                                       const TransitionMatrix* tm) {
  require_same_vocabulary(model.vocabulary(), ds.vocabulary, "build_confusion");
  const auto k = model.num_predicates();
  if (tm && tm->size() != k)
    throw ValidationError(ValidationErrc::dimension_mismatch, "transition size differs from predicate count");
  ConfusionMatrix cm{SquareMatrix<std::int64_t>(k)};
  for (const auto& img : ds.images) {
    for (const auto& t : img.triplets) {
      const auto s = img.label_of(t.subject_id);
      const auto o = img.label_of(t.object_id);
      const auto predicted = tm == nullptr ? model.predict_argmax(s, o)
                                           : argmax(debiased_scores(model, tm, s, o).values());
      ++cm.cells(t.predicate_index, predicted);
    }
  }
  return cm;
}

/// Builds C* for a given source. The confusion routes use the confusion
/// matrix; the overlap routes use the overlap matrix (and, for sobg, the
/// partition). Overlap counts are row-normalized before smoothing so alpha
/// is on the same scale for every source.
inline TransitionMatrix build_transition(TransitionSource source, double alpha,
                                         const ConfusionMatrix* cm, const OverlapMatrix* om,
                                         const PredicatePartition* part) {
  switch (source) {
    case TransitionSource::cm:
      if (!cm) throw ConfigError("cm transition needs a confusion matrix");
      return smooth_and_normalize(row_normalize(*cm), alpha, source);
    case TransitionSource::ccm:
      if (!cm) throw ConfigError("ccm transition needs a confusion matrix");
      return smooth_and_normalize(column_normalize_transpose(*cm), alpha, source);
    case TransitionSource::soo:
      if (!om) throw ConfigError("soo transition needs an overlap matrix");
      return smooth_and_normalize(normalize_rows_keep_zero(unmasked_overlap(*om)), alpha, source);
    case TransitionSource::sobg:
      if (!om || !part) throw ConfigError("sobg transition needs an overlap matrix and a partition");
      return smooth_and_normalize(normalize_rows_keep_zero(mask_bipartite(*om, *part)), alpha, source);
    case TransitionSource::rm:
      break;
  }
  throw ConfigError("transition source 'rm' requires gradient training and is not supported");
}

// ---------------------------------------------------------------------------
// Serialization

inline Json integer_matrix_to_json(std::string_view kind, const SquareMatrix<std::int64_t>& cells,
                                   const Vocabulary& vocab) {
  Json doc;
  doc["kind"] = kind;
  doc["vocab_digest"] = vocab.digest();
  doc["predicate_labels"] = vocab.predicate_labels();
  doc["rows"] = cells.to_rows();
  return doc;
}

inline SquareMatrix<std::int64_t> integer_matrix_from_json(const Json& doc, std::string_view kind,
                                                           const Vocabulary& vocab,
                                                           const std::string& source) {
  if (require_field<std::string>(doc, "kind", source) != kind)
    throw ValidationError(ValidationErrc::invalid_value, source + ": expected a " + std::string(kind) + " document");
  if (require_field<std::vector<std::string>>(doc, "predicate_labels", source) != vocab.predicate_labels())
    throw ValidationError(ValidationErrc::vocabulary_mismatch, source + ": predicate labels differ from vocabulary");
  auto rows = require_field<std::vector<std::vector<std::int64_t>>>(doc, "rows", source);
  if (rows.size() != vocab.num_predicates())
    throw ValidationError(ValidationErrc::dimension_mismatch, source + ": wrong number of rows");
  auto m = SquareMatrix<std::int64_t>::from_rows(rows);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (auto v : m.row(i))
      if (v < 0) throw ValidationError(ValidationErrc::invalid_value, source + ": negative count");
  return m;
}

inline Json confusion_to_json(const ConfusionMatrix& cm, const Vocabulary& vocab) {
  return integer_matrix_to_json("confusion_matrix", cm.cells, vocab);
}
inline ConfusionMatrix confusion_from_json(const Json& doc, const Vocabulary& vocab,
                                           const std::string& source = "<confusion>") {
  return {integer_matrix_from_json(doc, "confusion_matrix", vocab, source)};
}
inline Json overlap_to_json(const OverlapMatrix& om, const Vocabulary& vocab) {
  return integer_matrix_to_json("overlap_matrix", om.cells, vocab);
}
inline OverlapMatrix overlap_from_json(const Json& doc, const Vocabulary& vocab,
                                       const std::string& source = "<overlap>") {
  return {integer_matrix_from_json(doc, "overlap_matrix", vocab, source)};
}

inline Json transition_to_json(const TransitionMatrix& tm, const Vocabulary& vocab) {
  Json doc;
  doc["kind"] = "transition_matrix";
  doc["source"] = to_string(tm.source());
  doc["alpha"] = tm.alpha();
  doc["vocab_digest"] = vocab.digest();
  doc["predicate_labels"] = vocab.predicate_labels();
  doc["rows"] = tm.cells().to_rows();
  return doc;
}

/// Loads a transition document, checking labels, shape, and row sums
/// (within `tolerance`) before anything else touches it.
inline TransitionMatrix transition_from_json(const Json& doc, const Vocabulary& vocab,
                                             const std::string& source = "<transition>",
                                             double tolerance = 1e-6) {
  if (require_field<std::string>(doc, "kind", source) != "transition_matrix")
    throw ValidationError(ValidationErrc::invalid_value, source + ": not a transition matrix document");
  if (require_field<std::vector<std::string>>(doc, "predicate_labels", source) != vocab.predicate_labels())
    throw ValidationError(ValidationErrc::vocabulary_mismatch, source + ": predicate labels differ from vocabulary");
  const auto rows = require_field<std::vector<std::vector<double>>>(doc, "rows", source);
  if (rows.size() != vocab.num_predicates())
    throw ValidationError(ValidationErrc::dimension_mismatch, source + ": wrong number of rows");
  try {
    return TransitionMatrix::from_cells(SquareMatrix<double>::from_rows(rows),
                                        require_field<double>(doc, "alpha", source),
                                        transition_source_from_string(require_field<std::string>(doc, "source", source)),
                                        tolerance);
  } catch (const ValidationError& e) {
    throw ValidationError(e.code(), source + ": " + e.what());
  }
}

inline void save_transition(const TransitionMatrix& tm, const Vocabulary& vocab,
                            const std::filesystem::path& path) {
  write_file(path, dump_document(transition_to_json(tm, vocab)));
}

inline TransitionMatrix load_transition(const std::filesystem::path& path, const Vocabulary& vocab) {
  return transition_from_json(read_document(path), vocab, path.string());
}

struct HeatmapCell {
  std::string row_label;
  std::string col_label;
  double value = 0;
};

/// (row, column, value) triples with both axes visited in `order`
/// (typically predicates sorted by increasing information content).
inline std::vector<HeatmapCell> heatmap_triples(const SquareMatrix<double>& mat, const Vocabulary& vocab,
                                                std::span<const LabelIndex> order) {
  std::vector<HeatmapCell> out;
  out.reserve(order.size() * order.size());
  for (auto r : order)
    for (auto c : order) out.push_back({vocab.predicate_label(r), vocab.predicate_label(c), mat(r, c)});
  return out;
}

inline Json heatmap_to_json(const std::vector<HeatmapCell>& cells) {
  Json arr = Json::array();
  for (const auto& c : cells) arr.push_back({c.row_label, c.col_label, c.value});
  return arr;
}

}  // namespace predbias
